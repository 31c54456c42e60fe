//! Audit report assembled from persisted metrics and analysis results.
//!
//! Nothing here computes a statistic: values are copied from a
//! [`MetricsBundle`] or [`AnalysisBundle`] and each carries a pointer to
//! the file and key it came from.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisBundle, AnalysisMetadata, Question, QuestionResult};
use crate::enrichment::CoverageReport;
use crate::exposure::PersonaSlice;
use crate::metrics::{Composition, EngineRtd, LorenzCurve, MetricsBundle, TopicMetric};

pub const METRICS_FILE: &str = "metrics.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const PROFILES_FILE: &str = "profiles.json";

/// Conventional significance stars.
pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// `p < 0.001` style text for reports.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p < 0.001".to_string()
    } else {
        format!("p = {p:.3}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub toolkit_version: String,
    /// RFC 3339; the only field allowed to differ between identical runs.
    pub generated_at: String,
    pub days: Vec<String>,
    pub engines: Vec<String>,
    pub topics: Vec<String>,
    pub persona_mode: PersonaSlice,
    pub dataset_versions: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table1Row {
    pub engine: String,
    pub serp_results: usize,
    pub unique_domains: usize,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaLine {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub marker: String,
    pub group_means: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub engine: String,
    pub emm: f64,
    pub diff_vs_baseline: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub marker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub group_a: String,
    pub group_b: String,
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_adjusted: f64,
    pub marker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceLine {
    pub formula: String,
    pub sigma_u2: f64,
    pub sigma_e2: f64,
    pub reml_loglik: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqSection {
    pub id: String,
    pub title: String,
    pub headline: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub observations: usize,
    pub anova: Option<AnovaLine>,
    pub model: Option<VarianceLine>,
    pub contrasts: Vec<ContrastRow>,
    pub tukey: Vec<PairRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub run_metadata: RunMetadata,
    pub analysis_metadata: AnalysisMetadata,
    pub table1: Vec<Table1Row>,
    pub rq_sections: Vec<RqSection>,
    /// Per-topic diversity and Gini, as in `metrics.json#/per_topic`.
    pub per_topic: Vec<TopicMetric>,
    pub global_gini: Vec<(String, f64)>,
    pub promoted_silenced: Vec<EngineRtd>,
    pub composition: Vec<Composition>,
    pub lorenz: Vec<LorenzCurve>,
    pub coverage: Option<CoverageReport>,
}

fn title(q: Question) -> &'static str {
    match q {
        Question::Diversity => "RQ1 Diversity of news outlets",
        Question::Attention => "RQ2 Concentration of attention",
        Question::Ideology => "RQ4 Political leaning",
        Question::Factuality => "RQ5 Factual reporting",
        Question::Reliability => "Robustness: Wikipedia reliability ratings",
    }
}

fn headline(q: &QuestionResult, baseline: &str) -> String {
    if let Some(reason) = &q.skipped {
        return format!("Skipped: {reason}.");
    }
    let mut parts = Vec::new();
    if let Some(a) = &q.anova {
        parts.push(format!(
            "One-way ANOVA on {} by engine: F({}, {}) = {:.2}, {}{}.",
            q.response,
            a.df_between,
            a.df_within,
            a.f_stat,
            format_p(a.p_value),
            significance_marker(a.p_value)
        ));
    }
    if let Some(m) = &q.model {
        let base_emm = m.contrasts.iter().find(|c| c.engine == baseline).map(|c| c.emm);
        for c in m.contrasts.iter().filter(|c| c.engine != baseline) {
            parts.push(format!(
                "{} vs {}: EMM {:.2} vs {:.2} (difference {:+.2}, 95% CI [{:.2}, {:.2}], {}{}).",
                c.engine,
                baseline,
                c.emm,
                base_emm.unwrap_or(f64::NAN),
                c.diff_vs_baseline,
                c.ci_low,
                c.ci_high,
                format_p(c.p_value),
                significance_marker(c.p_value)
            ));
        }
    }
    if parts.is_empty() {
        "No test could be computed.".to_string()
    } else {
        parts.join(" ")
    }
}

fn section(index: usize, q: &QuestionResult, baseline: &str) -> RqSection {
    RqSection {
        id: q.id.clone(),
        title: title(q.question).to_string(),
        headline: headline(q, baseline),
        skipped: q.skipped.clone(),
        observations: q.observations,
        anova: q.anova.as_ref().map(|a| AnovaLine {
            f_stat: a.f_stat,
            df_between: a.df_between,
            df_within: a.df_within,
            p_value: a.p_value,
            marker: significance_marker(a.p_value).to_string(),
            group_means: a.group_means.clone(),
        }),
        model: q.model.as_ref().map(|m| VarianceLine {
            formula: m.formula.clone(),
            sigma_u2: m.lmm.sigma_u2,
            sigma_e2: m.lmm.sigma_e2,
            reml_loglik: m.lmm.reml_loglik,
            converged: m.lmm.converged,
        }),
        contrasts: q
            .model
            .iter()
            .flat_map(|m| &m.contrasts)
            .map(|c| ContrastRow {
                engine: c.engine.clone(),
                emm: c.emm,
                diff_vs_baseline: c.diff_vs_baseline,
                ci_low: c.ci_low,
                ci_high: c.ci_high,
                p_value: c.p_value,
                marker: significance_marker(c.p_value).to_string(),
            })
            .collect(),
        tukey: q
            .tukey
            .iter()
            .flat_map(|t| &t.pairs)
            .map(|p| PairRow {
                group_a: p.group_a.clone(),
                group_b: p.group_b.clone(),
                mean_diff: p.mean_diff,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
                p_adjusted: p.p_adjusted,
                marker: significance_marker(p.p_adjusted).to_string(),
            })
            .collect(),
        notes: q.notes.clone(),
        source: format!("{ANALYSIS_FILE}#/questions/{index}"),
    }
}

/// Builds the report. `coverage` comes from the enrichment stage.
pub fn assemble_report(
    run_metadata: RunMetadata,
    metrics: &MetricsBundle,
    analysis: &AnalysisBundle,
    coverage: Option<CoverageReport>,
) -> AuditReport {
    let table1 = metrics
        .totals
        .iter()
        .enumerate()
        .map(|(i, t)| Table1Row {
            engine: t.engine.clone(),
            serp_results: t.serp_results,
            unique_domains: t.unique_domains,
            source: format!("{METRICS_FILE}#/totals/{i}"),
        })
        .collect();
    let baseline = analysis.metadata.baseline.as_str();
    AuditReport {
        run_metadata,
        analysis_metadata: analysis.metadata.clone(),
        table1,
        rq_sections: analysis
            .questions
            .iter()
            .enumerate()
            .map(|(i, q)| section(i, q, baseline))
            .collect(),
        per_topic: metrics.per_topic.clone(),
        global_gini: metrics.lorenz.iter().map(|l| (l.engine.clone(), l.gini)).collect(),
        promoted_silenced: metrics.rtd.clone(),
        composition: metrics.composition.clone(),
        lorenz: metrics.lorenz.clone(),
        coverage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers() {
        assert_eq!(significance_marker(0.0009), "***");
        assert_eq!(significance_marker(0.001), "**");
        assert_eq!(significance_marker(0.009), "**");
        assert_eq!(significance_marker(0.01), "*");
        assert_eq!(significance_marker(0.049), "*");
        assert_eq!(significance_marker(0.05), "");
        assert_eq!(format_p(0.0001), "p < 0.001");
        assert_eq!(format_p(0.0123), "p = 0.012");
    }
}
