//! Descriptive audit measures over the exposure table.

mod inequality;
mod rtd;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use inequality::{area_under, gini, lorenz};
pub use rtd::{
    fractional_ranks, promoted_silenced, rank_turbulence, Band, PromotedSilenced, RtdContribution,
    RtdResult, DEFAULT_ALPHA,
};

use crate::error::{Error, Result};
use crate::exposure::{ExposureRow, ExposureTable, PersonaSlice};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "topic")]
pub enum Scope {
    Topic(String),
    Global,
}

/// How often each outlet appears in an engine's SERPs within a scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionVector {
    pub engine: String,
    pub scope: Scope,
    pub counts: BTreeMap<String, u64>,
}

impl AttentionVector {
    pub fn from_rows<'a>(
        engine: &str,
        scope: Scope,
        rows: impl IntoIterator<Item = &'a ExposureRow>,
    ) -> Self {
        let mut counts = BTreeMap::new();
        for row in rows {
            let in_scope = row.engine == engine
                && match &scope {
                    Scope::Topic(t) => &row.topic == t,
                    Scope::Global => true,
                };
            if in_scope {
                *counts.entry(row.domain.clone()).or_insert(0) += 1;
            }
        }
        AttentionVector {
            engine: engine.to_string(),
            scope,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.values().map(|c| *c as f64).collect()
    }

    pub fn gini(&self) -> Result<f64> {
        gini(&self.values())
    }

    pub fn lorenz(&self) -> Result<Vec<(f64, f64)>> {
        lorenz(&self.values())
    }
}

/// Distinct outlets an engine showed for a topic across all days.
/// An empty scope yields 0.
pub fn unique_outlets<'a>(
    rows: impl IntoIterator<Item = &'a ExposureRow>,
    engine: &str,
    topic: &str,
) -> usize {
    rows.into_iter()
        .filter(|r| r.engine == engine && r.topic == topic)
        .map(|r| r.domain.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Category shares over rows with a known IAB category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub engine: String,
    pub shares: BTreeMap<String, f64>,
    pub categorized_rows: usize,
    pub missing_rows: usize,
}

pub fn category_composition<'a>(
    rows: impl IntoIterator<Item = &'a ExposureRow>,
    engine: &str,
) -> Result<Composition> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut missing = 0;
    for row in rows.into_iter().filter(|r| r.engine == engine) {
        match &row.iab_category {
            Some(c) => *counts.entry(c.clone()).or_insert(0) += 1,
            None => missing += 1,
        }
    }
    let categorized: usize = counts.values().sum();
    if categorized == 0 {
        return Err(Error::InvalidInput(alloc::format!(
            "no categorized rows for engine {engine}"
        )));
    }
    let shares = counts
        .into_iter()
        .map(|(c, n)| (c, n as f64 / categorized as f64))
        .collect();
    Ok(Composition {
        engine: engine.to_string(),
        shares,
        categorized_rows: categorized,
        missing_rows: missing,
    })
}

/// Per-engine SERP result and unique domain counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineTotals {
    pub engine: String,
    pub serp_results: usize,
    pub unique_domains: usize,
}

pub fn engine_totals<'a>(rows: impl IntoIterator<Item = &'a ExposureRow>) -> Vec<EngineTotals> {
    let mut acc: BTreeMap<&str, (usize, BTreeSet<&str>)> = BTreeMap::new();
    for row in rows {
        let slot = acc.entry(row.engine.as_str()).or_default();
        slot.0 += 1;
        slot.1.insert(row.domain.as_str());
    }
    acc.into_iter()
        .map(|(engine, (n, domains))| EngineTotals {
            engine: engine.to_string(),
            serp_results: n,
            unique_domains: domains.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMetric {
    pub engine: String,
    pub topic: String,
    pub serp_results: usize,
    pub unique_outlets: usize,
    pub gini: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    pub engine: String,
    pub gini: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRtd {
    pub engine: String,
    pub baseline: String,
    #[serde(flatten)]
    pub lists: PromotedSilenced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub baseline: String,
    pub alpha: f64,
    pub top_k: usize,
    pub personas: PersonaSlice,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            baseline: "google_news".to_string(),
            alpha: DEFAULT_ALPHA,
            top_k: 10,
            personas: PersonaSlice::Baseline,
        }
    }
}

/// Every descriptive measure of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub config: MetricsConfig,
    pub totals: Vec<EngineTotals>,
    /// One row per (engine, topic) with at least one result.
    pub per_topic: Vec<TopicMetric>,
    /// Global (all topics pooled) Lorenz curve and Gini per engine.
    pub lorenz: Vec<LorenzCurve>,
    pub composition: Vec<Composition>,
    /// Engines without any categorized row.
    pub composition_skipped: Vec<String>,
    /// Promoted/silenced lists of each engine against the baseline.
    pub rtd: Vec<EngineRtd>,
}

pub fn compute_metrics(table: &ExposureTable, config: &MetricsConfig) -> Result<MetricsBundle> {
    let rows: Vec<&ExposureRow> = table.slice(&config.personas).collect();
    let engines: BTreeSet<&str> = rows.iter().map(|r| r.engine.as_str()).collect();
    let topics: BTreeSet<&str> = rows.iter().map(|r| r.topic.as_str()).collect();

    let totals = engine_totals(rows.iter().copied());

    let mut per_topic = Vec::new();
    for &engine in &engines {
        for &topic in &topics {
            let attention = AttentionVector::from_rows(engine, Scope::Topic(topic.to_string()), rows.iter().copied());
            if attention.counts.is_empty() {
                continue;
            }
            per_topic.push(TopicMetric {
                engine: engine.to_string(),
                topic: topic.to_string(),
                serp_results: attention.total() as usize,
                unique_outlets: attention.counts.len(),
                gini: attention.gini()?,
            });
        }
    }

    let mut lorenz_curves = Vec::new();
    let mut globals = BTreeMap::new();
    for &engine in &engines {
        let attention = AttentionVector::from_rows(engine, Scope::Global, rows.iter().copied());
        lorenz_curves.push(LorenzCurve {
            engine: engine.to_string(),
            gini: attention.gini()?,
            points: attention.lorenz()?,
        });
        globals.insert(engine, attention);
    }

    let mut composition = Vec::new();
    let mut composition_skipped = Vec::new();
    for &engine in &engines {
        match category_composition(rows.iter().copied(), engine) {
            Ok(c) => composition.push(c),
            Err(_) => composition_skipped.push(engine.to_string()),
        }
    }

    let mut rtd = Vec::new();
    if let Some(base) = globals.get(config.baseline.as_str()) {
        for (&engine, attention) in &globals {
            if engine == config.baseline {
                continue;
            }
            rtd.push(EngineRtd {
                engine: engine.to_string(),
                baseline: config.baseline.clone(),
                lists: promoted_silenced(attention, base, config.alpha, config.top_k)?,
            });
        }
    }

    Ok(MetricsBundle {
        config: config.clone(),
        totals,
        per_topic,
        lorenz: lorenz_curves,
        composition,
        composition_skipped,
        rtd,
    })
}
