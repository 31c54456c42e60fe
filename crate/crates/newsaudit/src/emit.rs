//! Report rendering: markdown narrative, JSON, and a CSV bundle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use newsaudit_core::metrics::Band;
use newsaudit_core::report::{AuditReport, RqSection};

use crate::error::{Error, Result};
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Markdown,
    Json,
    CsvBundle,
    All,
}

pub const MARKDOWN_FILE: &str = "report.md";
pub const JSON_FILE: &str = "report.json";
pub const CSV_DIR: &str = "csv";

/// Every table of the CSV bundle, in file order.
pub const CSV_TABLES: [&str; 11] = [
    "table1",
    "per_topic",
    "global_gini",
    "lorenz",
    "composition",
    "promoted_silenced",
    "anova",
    "emm_contrasts",
    "tukey",
    "variance_components",
    "coverage",
];

pub fn to_json(report: &AuditReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report).map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn from_json(bytes: &[u8]) -> Result<AuditReport> {
    serde_json::from_slice(bytes).map_err(|e| Error::parse(JSON_FILE, e.line(), e))
}

fn band_name(b: Band) -> &'static str {
    match b {
        Band::Negligible => "negligible",
        Band::Moderate => "moderate",
        Band::Strong => "strong",
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.3}")
}

fn rq_markdown(out: &mut String, s: &RqSection) {
    let _ = writeln!(out, "## {}\n", s.title);
    let _ = writeln!(out, "{}\n", s.headline);
    if s.skipped.is_some() {
        return;
    }
    let _ = writeln!(out, "Observations: {} (`{}`)\n", s.observations, s.source);
    if let Some(a) = &s.anova {
        let _ = writeln!(out, "| engine | mean |\n|---|---:|");
        for (g, m) in &a.group_means {
            let _ = writeln!(out, "| {g} | {} |", fmt(*m));
        }
        out.push('\n');
    }
    if let Some(m) = &s.model {
        let _ = writeln!(
            out,
            "Mixed model `{}`: topic variance {}, residual variance {}, REML log-likelihood {}{}.\n",
            m.formula,
            fmt(m.sigma_u2),
            fmt(m.sigma_e2),
            fmt(m.reml_loglik),
            if m.converged { "" } else { " (not converged)" }
        );
    }
    if !s.contrasts.is_empty() {
        let _ = writeln!(out, "| engine | EMM | diff vs baseline | 95% CI | p | |\n|---|---:|---:|---|---:|---|");
        for c in &s.contrasts {
            let _ = writeln!(
                out,
                "| {} | {} | {} | [{}, {}] | {} | {} |",
                c.engine,
                fmt(c.emm),
                fmt(c.diff_vs_baseline),
                fmt(c.ci_low),
                fmt(c.ci_high),
                format_p_cell(c.p_value),
                c.marker
            );
        }
        out.push('\n');
    }
    if !s.tukey.is_empty() {
        let _ = writeln!(out, "Tukey HSD:\n\n| pair | mean diff | 95% CI | p adj | |\n|---|---:|---|---:|---|");
        for t in &s.tukey {
            let _ = writeln!(
                out,
                "| {} - {} | {} | [{}, {}] | {} | {} |",
                t.group_b,
                t.group_a,
                fmt(t.mean_diff),
                fmt(t.ci_low),
                fmt(t.ci_high),
                format_p_cell(t.p_adjusted),
                t.marker
            );
        }
        out.push('\n');
    }
    for n in &s.notes {
        let _ = writeln!(out, "- Note: {n}");
    }
    if !s.notes.is_empty() {
        out.push('\n');
    }
}

fn format_p_cell(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

pub fn to_markdown(r: &AuditReport) -> String {
    let mut out = String::new();
    let m = &r.run_metadata;
    let _ = writeln!(out, "# News exposure audit\n");
    let _ = writeln!(out, "- Toolkit version: {}", m.toolkit_version);
    let _ = writeln!(out, "- Generated at: {}", m.generated_at);
    let _ = writeln!(out, "- Days: {}", m.days.join(", "));
    let _ = writeln!(out, "- Engines: {}", m.engines.join(", "));
    let _ = writeln!(out, "- Topics: {}", m.topics.len());
    let _ = writeln!(out, "- Baseline: {}", r.analysis_metadata.baseline);
    let _ = writeln!(out, "- Intervals: {}", r.analysis_metadata.interval_method);
    for (k, v) in &m.dataset_versions {
        let _ = writeln!(out, "- Dataset {k}: {v}");
    }
    for (k, v) in &m.parameters {
        let _ = writeln!(out, "- {k}: {v}");
    }
    out.push('\n');

    let _ = writeln!(out, "## Table 1: SERP results and unique domains\n");
    let _ = writeln!(out, "| Engine | SERP results | Unique domains |\n|---|---:|---:|");
    for row in &r.table1 {
        let _ = writeln!(out, "| {} | {} | {} |", row.engine, row.serp_results, row.unique_domains);
    }
    out.push('\n');

    let _ = writeln!(out, "## Global attention inequality\n");
    let _ = writeln!(out, "| Engine | Gini (all topics pooled) |\n|---|---:|");
    for (e, g) in &r.global_gini {
        let _ = writeln!(out, "| {e} | {} |", fmt(*g));
    }
    out.push('\n');

    for s in &r.rq_sections {
        rq_markdown(&mut out, s);
    }

    if !r.promoted_silenced.is_empty() {
        let _ = writeln!(out, "## Promoted and silenced outlets\n");
        for e in &r.promoted_silenced {
            let _ = writeln!(
                out,
                "### {} vs {} (total divergence {})\n",
                e.engine,
                e.baseline,
                fmt(e.lists.total_divergence)
            );
            let _ = writeln!(out, "| list | domain | contribution | band |\n|---|---|---:|---|");
            for (list, items) in [("promoted", &e.lists.promoted), ("silenced", &e.lists.silenced)] {
                for c in items {
                    let _ = writeln!(
                        out,
                        "| {list} | {} | {} | {} |",
                        c.domain,
                        fmt(c.signed_contribution),
                        band_name(c.band)
                    );
                }
            }
            out.push('\n');
        }
    }

    if !r.composition.is_empty() {
        let _ = writeln!(out, "## Outlet categories\n");
        let _ = writeln!(out, "| Engine | Category | Share |\n|---|---|---:|");
        for c in &r.composition {
            for (cat, share) in &c.shares {
                let _ = writeln!(out, "| {} | {cat} | {} |", c.engine, fmt(*share));
            }
        }
        out.push('\n');
    }

    if let Some(c) = &r.coverage {
        let _ = writeln!(out, "## Dataset coverage\n");
        let _ = writeln!(out, "| Source | Matched | Missing |\n|---|---:|---:|");
        for (name, s) in [
            ("MBFC bias", &c.mbfc_bias),
            ("MBFC factuality", &c.mbfc_factuality),
            ("PSL", &c.psl),
            ("IAB", &c.iab),
        ] {
            let _ = writeln!(out, "| {name} | {} | {} |", s.matched, s.missing);
        }
        let _ = writeln!(out, "\n{} domains; {} IAB categories from manual overrides.", c.domains, c.iab_overridden);
    }
    out
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("csv rendering: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv rendering: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// `(table name, csv text)` for every entry of [`CSV_TABLES`].
pub fn csv_tables(r: &AuditReport) -> Result<Vec<(&'static str, String)>> {
    let mut out = Vec::with_capacity(CSV_TABLES.len());
    out.push((
        "table1",
        csv_string(
            &["engine", "serp_results", "unique_domains", "source"],
            r.table1
                .iter()
                .map(|t| vec![t.engine.clone(), t.serp_results.to_string(), t.unique_domains.to_string(), t.source.clone()])
                .collect(),
        )?,
    ));
    out.push((
        "per_topic",
        csv_string(
            &["engine", "topic", "serp_results", "unique_outlets", "gini"],
            r.per_topic
                .iter()
                .map(|t| {
                    vec![
                        t.engine.clone(),
                        t.topic.clone(),
                        t.serp_results.to_string(),
                        t.unique_outlets.to_string(),
                        num(t.gini),
                    ]
                })
                .collect(),
        )?,
    ));
    out.push((
        "global_gini",
        csv_string(
            &["engine", "gini"],
            r.global_gini.iter().map(|(e, g)| vec![e.clone(), num(*g)]).collect(),
        )?,
    ));
    out.push((
        "lorenz",
        csv_string(
            &["engine", "population_share", "attention_share"],
            r.lorenz
                .iter()
                .flat_map(|l| l.points.iter().map(|(x, y)| vec![l.engine.clone(), num(*x), num(*y)]))
                .collect(),
        )?,
    ));
    out.push((
        "composition",
        csv_string(
            &["engine", "category", "share"],
            r.composition
                .iter()
                .flat_map(|c| c.shares.iter().map(|(k, v)| vec![c.engine.clone(), k.clone(), num(*v)]))
                .collect(),
        )?,
    ));
    out.push((
        "promoted_silenced",
        csv_string(
            &["engine", "baseline", "list", "domain", "rank_engine", "rank_baseline", "rtd_contribution", "band"],
            r.promoted_silenced
                .iter()
                .flat_map(|e| {
                    [("promoted", &e.lists.promoted), ("silenced", &e.lists.silenced)]
                        .into_iter()
                        .flat_map(move |(list, items)| {
                            items.iter().map(move |c| {
                                vec![
                                    e.engine.clone(),
                                    e.baseline.clone(),
                                    list.to_string(),
                                    c.domain.clone(),
                                    num(c.rank_a),
                                    num(c.rank_b),
                                    num(c.signed_contribution),
                                    band_name(c.band).to_string(),
                                ]
                            })
                        })
                })
                .collect(),
        )?,
    ));
    out.push((
        "anova",
        csv_string(
            &["rq", "f_stat", "df_between", "df_within", "p_value", "marker"],
            r.rq_sections
                .iter()
                .filter_map(|s| {
                    s.anova.as_ref().map(|a| {
                        vec![
                            s.id.clone(),
                            num(a.f_stat),
                            a.df_between.to_string(),
                            a.df_within.to_string(),
                            num(a.p_value),
                            a.marker.clone(),
                        ]
                    })
                })
                .collect(),
        )?,
    ));
    out.push((
        "emm_contrasts",
        csv_string(
            &["rq", "engine", "emm", "diff_vs_baseline", "ci_low", "ci_high", "p_value", "marker"],
            r.rq_sections
                .iter()
                .flat_map(|s| {
                    s.contrasts.iter().map(move |c| {
                        vec![
                            s.id.clone(),
                            c.engine.clone(),
                            num(c.emm),
                            num(c.diff_vs_baseline),
                            num(c.ci_low),
                            num(c.ci_high),
                            num(c.p_value),
                            c.marker.clone(),
                        ]
                    })
                })
                .collect(),
        )?,
    ));
    out.push((
        "tukey",
        csv_string(
            &["rq", "group_a", "group_b", "mean_diff", "ci_low", "ci_high", "p_adjusted", "marker"],
            r.rq_sections
                .iter()
                .flat_map(|s| {
                    s.tukey.iter().map(move |t| {
                        vec![
                            s.id.clone(),
                            t.group_a.clone(),
                            t.group_b.clone(),
                            num(t.mean_diff),
                            num(t.ci_low),
                            num(t.ci_high),
                            num(t.p_adjusted),
                            t.marker.clone(),
                        ]
                    })
                })
                .collect(),
        )?,
    ));
    out.push((
        "variance_components",
        csv_string(
            &["rq", "formula", "sigma_u2", "sigma_e2", "reml_loglik", "converged"],
            r.rq_sections
                .iter()
                .filter_map(|s| {
                    s.model.as_ref().map(|m| {
                        vec![
                            s.id.clone(),
                            m.formula.clone(),
                            num(m.sigma_u2),
                            num(m.sigma_e2),
                            num(m.reml_loglik),
                            m.converged.to_string(),
                        ]
                    })
                })
                .collect(),
        )?,
    ));
    out.push((
        "coverage",
        csv_string(
            &["source", "matched", "missing"],
            r.coverage
                .iter()
                .flat_map(|c| {
                    [
                        ("mbfc_bias", &c.mbfc_bias),
                        ("mbfc_factuality", &c.mbfc_factuality),
                        ("psl", &c.psl),
                        ("iab", &c.iab),
                    ]
                    .into_iter()
                    .map(|(n, s)| vec![n.to_string(), s.matched.to_string(), s.missing.to_string()])
                })
                .collect(),
        )?,
    ));
    debug_assert_eq!(out.iter().map(|(n, _)| *n).collect::<Vec<_>>(), CSV_TABLES);
    Ok(out)
}

/// Writes the requested format(s) under `dir`; returns the files written.
pub fn emit(report: &AuditReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if matches!(format, Format::Json | Format::All) {
        let p = dir.join(JSON_FILE);
        store::write_atomic(&p, &to_json(report)?)?;
        written.push(p);
    }
    if matches!(format, Format::Markdown | Format::All) {
        let p = dir.join(MARKDOWN_FILE);
        store::write_atomic(&p, to_markdown(report).as_bytes())?;
        written.push(p);
    }
    if matches!(format, Format::CsvBundle | Format::All) {
        let csv_dir = dir.join(CSV_DIR);
        for (name, text) in csv_tables(report)? {
            let p = csv_dir.join(format!("{name}.csv"));
            store::write_atomic(&p, text.as_bytes())?;
            written.push(p);
        }
    }
    Ok(written)
}
