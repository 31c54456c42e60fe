//! Runs the statistics for each research question over an exposure table.
//!
//! Every question follows the same recipe: extract one response value per
//! observation unit, run a one-way ANOVA by engine with Tukey post-hoc
//! pairs, then fit a random-intercept model (topic as group) and contrast
//! each engine's marginal mean against the baseline engine.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exposure::{ExposureRow, ExposureTable, PersonaSlice};
use crate::metrics::{AttentionVector, Scope, DEFAULT_ALPHA};
use crate::stats::{
    anova_oneway, emm_contrasts, fit_lmm_reml, tukey_hsd, AnovaResult, Design, EmmContrast, MixedModelFit,
    TukeyResult,
};

pub const INTERVAL_METHOD: &str = "Wald 95% confidence interval from the REML fit, normal reference";
pub const CONTRAST_REFERENCE: &str = "normal (z) reference distribution, no small-sample df correction";
pub const COVARIATE_CENTERING: &str = "covariates evaluated at their grand mean";
pub const OBSERVATION_UNIT: &str =
    "one row per SERP entry with a known score (score questions); one value per engine and topic (diversity, attention)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Question {
    Diversity,
    Attention,
    Ideology,
    Factuality,
    Reliability,
}

impl Question {
    pub const ALL: [Question; 5] = [
        Question::Diversity,
        Question::Attention,
        Question::Ideology,
        Question::Factuality,
        Question::Reliability,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Question::Diversity => "rq1_diversity",
            Question::Attention => "rq2_attention",
            Question::Ideology => "rq4_ideology",
            Question::Factuality => "rq5_factuality",
            Question::Reliability => "psl_reliability",
        }
    }

    pub fn response(self) -> &'static str {
        match self {
            Question::Diversity => "unique outlets per topic",
            Question::Attention => "Gini index of outlet attention per topic",
            Question::Ideology => "MBFC bias score per result",
            Question::Factuality => "MBFC factuality score per result",
            Question::Reliability => "PSL reliability score per result",
        }
    }

    fn score(self, row: &ExposureRow) -> Option<i8> {
        match self {
            Question::Ideology => row.mbfc_bias,
            Question::Factuality => row.mbfc_factuality,
            Question::Reliability => row.psl_score,
            Question::Diversity | Question::Attention => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub baseline: String,
    pub personas: PersonaSlice,
    pub tukey_alpha: f64,
    /// Refit the diversity model with the number of results per topic as a
    /// covariate, linear and log-transformed.
    pub serp_length_sensitivity: bool,
    /// Recorded in the metadata so reports can cite it.
    pub rtd_alpha: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            baseline: "google_news".to_string(),
            personas: PersonaSlice::Baseline,
            tukey_alpha: 0.05,
            serp_length_sensitivity: true,
            rtd_alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisMetadata {
    pub baseline: String,
    pub personas: PersonaSlice,
    pub tukey_alpha: f64,
    pub rtd_alpha: f64,
    pub interval_method: String,
    pub contrast_reference: String,
    pub covariate_centering: String,
    pub observation_unit: String,
    pub software_version: String,
}

/// One mixed-model fit and its baseline contrasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub label: String,
    pub formula: String,
    pub lmm: MixedModelFit,
    /// Covariate values at which the marginal means are evaluated.
    pub evaluated_at: BTreeMap<String, f64>,
    pub contrasts: Vec<EmmContrast>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question: Question,
    pub id: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub observations: usize,
    pub per_engine: BTreeMap<String, usize>,
    pub anova: Option<AnovaResult>,
    pub tukey: Option<TukeyResult>,
    pub model: Option<ModelResult>,
    /// Alternative specifications of the same question.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitivity: Vec<ModelResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl QuestionResult {
    fn empty(question: Question) -> Self {
        QuestionResult {
            question,
            id: question.id().to_string(),
            response: question.response().to_string(),
            skipped: None,
            observations: 0,
            per_engine: BTreeMap::new(),
            anova: None,
            tukey: None,
            model: None,
            sensitivity: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub metadata: AnalysisMetadata,
    pub questions: Vec<QuestionResult>,
}

impl AnalysisBundle {
    pub fn question(&self, q: Question) -> Option<&QuestionResult> {
        self.questions.iter().find(|r| r.question == q)
    }
}

/// Observations of one question: response, engine, topic, covariates.
struct Observations {
    y: Vec<f64>,
    engine: Vec<String>,
    topic: Vec<String>,
    covariates: Vec<(String, Vec<f64>)>,
}

impl Observations {
    fn new() -> Self {
        Observations {
            y: Vec::new(),
            engine: Vec::new(),
            topic: Vec::new(),
            covariates: Vec::new(),
        }
    }

    fn per_engine(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for e in &self.engine {
            *m.entry(e.clone()).or_insert(0) += 1;
        }
        m
    }

    /// Drops engines with fewer than two observations.
    fn retain_estimable(&mut self, notes: &mut Vec<String>) {
        let counts = self.per_engine();
        let thin: BTreeSet<&String> = counts.iter().filter(|(_, n)| **n < 2).map(|(e, _)| e).collect();
        if thin.is_empty() {
            return;
        }
        for e in &thin {
            notes.push(format!("engine {e} dropped: fewer than two observations"));
        }
        let keep: Vec<bool> = self.engine.iter().map(|e| !thin.contains(e)).collect();
        let filter = |v: &mut Vec<f64>| {
            let mut i = 0;
            v.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        };
        filter(&mut self.y);
        for (_, c) in &mut self.covariates {
            filter(c);
        }
        let mut i = 0;
        self.engine.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.topic.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
}

fn per_topic_observations(rows: &[&ExposureRow], question: Question) -> Result<Observations> {
    let engines: BTreeSet<&str> = rows.iter().map(|r| r.engine.as_str()).collect();
    let topics: BTreeSet<&str> = rows.iter().map(|r| r.topic.as_str()).collect();
    let mut obs = Observations::new();
    let mut lengths = Vec::new();
    for &engine in &engines {
        for &topic in &topics {
            let attention = AttentionVector::from_rows(engine, Scope::Topic(topic.to_string()), rows.iter().copied());
            if attention.counts.is_empty() {
                continue;
            }
            let value = match question {
                Question::Diversity => attention.counts.len() as f64,
                _ => attention.gini()?,
            };
            obs.y.push(value);
            obs.engine.push(engine.to_string());
            obs.topic.push(topic.to_string());
            lengths.push(attention.total() as f64);
        }
    }
    obs.covariates.push(("serp_results".to_string(), lengths));
    Ok(obs)
}

fn per_row_observations(rows: &[&ExposureRow], question: Question) -> Observations {
    let mut obs = Observations::new();
    let mut rank = Vec::new();
    for row in rows {
        if let Some(s) = question.score(row) {
            obs.y.push(s as f64);
            obs.engine.push(row.engine.clone());
            obs.topic.push(row.topic.clone());
            rank.push(row.normalized_rank);
        }
    }
    obs.covariates.push(("normalized_rank".to_string(), rank));
    obs
}

fn fit_model(
    obs: &Observations,
    reference: &str,
    baseline: Option<&str>,
    covariates: &[(String, Vec<f64>)],
    label: &str,
) -> Result<ModelResult> {
    let mut builder = Design::builder(obs.y.len()).factor("engine", &obs.engine, reference);
    let mut formula = String::from("response ~ engine");
    for (name, values) in covariates {
        builder = builder.covariate(name, values);
        formula.push_str(" + ");
        formula.push_str(name);
    }
    formula.push_str(" + (1 | topic)");
    let design = builder.build()?;
    let lmm = fit_lmm_reml(&obs.y, &design, &obs.topic)?;
    let at = design.covariate_means();
    let contrasts = match baseline {
        Some(b) => emm_contrasts(&lmm, design.factor.as_ref().expect("factor present"), b, &at)?,
        None => Vec::new(),
    };
    Ok(ModelResult {
        label: label.to_string(),
        formula,
        lmm,
        evaluated_at: at.into_iter().collect(),
        contrasts,
    })
}

fn analyze(question: Question, rows: &[&ExposureRow], config: &AnalysisConfig) -> Result<QuestionResult> {
    let mut result = QuestionResult::empty(question);
    let mut obs = match question {
        Question::Diversity | Question::Attention => per_topic_observations(rows, question)?,
        _ => per_row_observations(rows, question),
    };
    obs.retain_estimable(&mut result.notes);
    result.observations = obs.y.len();
    result.per_engine = obs.per_engine();

    if result.per_engine.len() < 2 {
        result.skipped = Some(format!(
            "insufficient coverage: {} engine(s) with at least two observations of {}",
            result.per_engine.len(),
            question.response()
        ));
        return Ok(result);
    }

    match anova_oneway(&obs.y, &obs.engine) {
        Ok(a) => result.anova = Some(a),
        Err(e) => result.notes.push(format!("ANOVA not computed: {e}")),
    }
    if result.anova.is_some() {
        match tukey_hsd(&obs.y, &obs.engine, config.tukey_alpha) {
            Ok(t) => result.tukey = Some(t),
            Err(e) => result.notes.push(format!("Tukey HSD not computed: {e}")),
        }
    }

    let baseline = result
        .per_engine
        .contains_key(&config.baseline)
        .then_some(config.baseline.as_str());
    if baseline.is_none() {
        result
            .notes
            .push(format!("baseline engine {} has no observations; no contrasts", config.baseline));
    }
    let reference = baseline.unwrap_or_else(|| result.per_engine.keys().next().expect("two engines"));
    let reference = reference.to_string();

    let topics: BTreeSet<&String> = obs.topic.iter().collect();
    if topics.len() < 2 {
        result.notes.push("mixed model not fitted: fewer than two topics".to_string());
        return Ok(result);
    }

    let main_covariates: Vec<(String, Vec<f64>)> = match question {
        Question::Diversity | Question::Attention => Vec::new(),
        _ => obs.covariates.clone(),
    };
    match fit_model(&obs, &reference, baseline, &main_covariates, "main") {
        Ok(m) => result.model = Some(m),
        Err(e) => result.notes.push(format!("mixed model not fitted: {e}")),
    }

    if question == Question::Diversity && config.serp_length_sensitivity {
        let lengths = &obs.covariates[0].1;
        let logs: Vec<f64> = lengths.iter().map(|v| libm::log(*v)).collect();
        let variants = [
            ("serp_results", vec_of(("serp_results", lengths.clone()))),
            ("log_serp_results", vec_of(("log_serp_results", logs))),
        ];
        for (label, covs) in variants {
            match fit_model(&obs, &reference, baseline, &covs, label) {
                Ok(m) => result.sensitivity.push(m),
                Err(e) => result.notes.push(format!("sensitivity model {label} not fitted: {e}")),
            }
        }
    }
    Ok(result)
}

fn vec_of((name, values): (&str, Vec<f64>)) -> Vec<(String, Vec<f64>)> {
    alloc::vec![(name.to_string(), values)]
}

/// Runs every question. A question without enough data is marked skipped
/// with a reason rather than failing the whole bundle.
pub fn run_rq_analyses(table: &ExposureTable, config: &AnalysisConfig) -> Result<AnalysisBundle> {
    table.validate()?;
    let rows: Vec<&ExposureRow> = table.slice(&config.personas).collect();
    let questions = Question::ALL
        .iter()
        .map(|q| analyze(*q, &rows, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisBundle {
        metadata: AnalysisMetadata {
            baseline: config.baseline.clone(),
            personas: config.personas.clone(),
            tukey_alpha: config.tukey_alpha,
            rtd_alpha: config.rtd_alpha,
            interval_method: INTERVAL_METHOD.to_string(),
            contrast_reference: CONTRAST_REFERENCE.to_string(),
            covariate_centering: COVARIATE_CENTERING.to_string(),
            observation_unit: OBSERVATION_UNIT.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        questions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(engine: &str, topic: usize, rank: u32, domain: String, score: Option<i8>) -> ExposureRow {
        ExposureRow {
            engine: engine.to_string(),
            topic: format!("topic{topic:02}"),
            day: NaiveDate::from_ymd_opt(2025, 5, 15).unwrap(),
            persona: String::new(),
            rank,
            normalized_rank: rank as f64 / 10.0,
            domain,
            mbfc_bias: score,
            mbfc_factuality: score,
            psl_score: None,
            iab_category: None,
        }
    }

    fn table(seed: u64) -> ExposureTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = ExposureTable::default();
        for engine in ["claude", "gemini", "google_news", "gpt"] {
            for topic in 0..24 {
                for rank in 1..=10 {
                    let d = rng.random_range(0..if engine == "google_news" { 60 } else { 15 });
                    let score = rng.random_range(-3i8..=3);
                    t.rows.push(row(engine, topic, rank, format!("s{d}.com"), Some(score)));
                }
            }
        }
        t
    }

    #[test]
    fn diversity_shape() {
        let bundle = run_rq_analyses(&table(1), &AnalysisConfig::default()).unwrap();
        let q = bundle.question(Question::Diversity).unwrap();
        let a = q.anova.as_ref().unwrap();
        assert_eq!((a.df_between, a.df_within), (3, 92));
        let m = q.model.as_ref().unwrap();
        assert_eq!(m.contrasts.len(), 4);
        let google = m.contrasts.iter().find(|c| c.engine == "google_news").unwrap();
        assert_eq!(google.diff_vs_baseline, 0.0);
        let gpt = m.contrasts.iter().find(|c| c.engine == "gpt").unwrap();
        assert!(gpt.diff_vs_baseline < 0.0 && gpt.p_value < 0.001);
        assert_eq!(q.sensitivity.len(), 0, "constant SERP length makes the covariate collinear");
        assert_eq!(q.notes.len(), 2);
    }

    #[test]
    fn score_questions_use_rows() {
        let bundle = run_rq_analyses(&table(2), &AnalysisConfig::default()).unwrap();
        let q = bundle.question(Question::Ideology).unwrap();
        assert_eq!(q.observations, 960);
        assert_eq!(q.anova.as_ref().unwrap().df_within, 956);
        assert!(q.model.as_ref().unwrap().evaluated_at.contains_key("normalized_rank"));
        let psl = bundle.question(Question::Reliability).unwrap();
        assert!(psl.is_skipped());
    }

    #[test]
    fn missing_baseline_keeps_anova() {
        let mut t = table(3);
        t.rows.retain(|r| r.engine != "google_news");
        let bundle = run_rq_analyses(&t, &AnalysisConfig::default()).unwrap();
        let q = bundle.question(Question::Factuality).unwrap();
        assert!(q.anova.is_some());
        assert!(q.model.as_ref().unwrap().contrasts.is_empty());
    }
}
