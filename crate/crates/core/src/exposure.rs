//! Long-format exposure table: one row per attributed SERP entry.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::attribution::SerpRecord;
use crate::enrichment::OutletProfile;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub engine: String,
    pub topic: String,
    pub day: NaiveDate,
    /// Persona trait string, empty for the baseline condition.
    pub persona: String,
    pub rank: u32,
    pub normalized_rank: f64,
    pub domain: String,
    pub mbfc_bias: Option<i8>,
    pub mbfc_factuality: Option<i8>,
    pub psl_score: Option<i8>,
    pub iab_category: Option<String>,
}

impl ExposureRow {
    pub fn is_baseline_persona(&self) -> bool {
        self.persona.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExposureTable {
    pub rows: Vec<ExposureRow>,
}

/// Which persona rows an analysis looks at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "traits")]
pub enum PersonaSlice {
    /// Only the no-traits condition (default for all headline metrics).
    Baseline,
    /// Only rows carrying this exact trait string.
    Persona(String),
    /// Every row that carries traits (robustness rerun).
    AnyTraits,
    All,
}

impl PersonaSlice {
    pub fn admits(&self, persona: &str) -> bool {
        match self {
            PersonaSlice::Baseline => persona.is_empty(),
            PersonaSlice::Persona(p) => p == persona,
            PersonaSlice::AnyTraits => !persona.is_empty(),
            PersonaSlice::All => true,
        }
    }
}

impl ExposureTable {
    /// Joins SERP entries with outlet profiles. Attribution misses add no
    /// rows; domains without a profile get missing scores.
    pub fn build(serps: &[SerpRecord], profiles: &[OutletProfile]) -> Result<Self> {
        let by_domain: BTreeMap<&str, &OutletProfile> =
            profiles.iter().map(|p| (p.domain.as_str(), p)).collect();
        let mut seen = BTreeSet::new();
        let mut rows = Vec::new();
        for serp in serps {
            let persona = serp.key.persona.traits();
            for entry in &serp.entries {
                let key = (
                    serp.key.engine.clone(),
                    serp.key.topic.clone(),
                    serp.key.day,
                    persona.clone(),
                    entry.rank,
                );
                if !seen.insert(key) {
                    return Err(invalid!(
                        "duplicate exposure row for {} rank {}",
                        serp.key,
                        entry.rank
                    ));
                }
                let profile = by_domain.get(entry.domain.as_str());
                rows.push(ExposureRow {
                    engine: serp.key.engine.clone(),
                    topic: serp.key.topic.clone(),
                    day: serp.key.day,
                    persona: persona.clone(),
                    rank: entry.rank,
                    normalized_rank: entry.normalized_rank,
                    domain: entry.domain.clone(),
                    mbfc_bias: profile.and_then(|p| p.mbfc_bias),
                    mbfc_factuality: profile.and_then(|p| p.mbfc_factuality),
                    psl_score: profile.and_then(|p| p.psl_score),
                    iab_category: profile
                        .and_then(|p| p.iab_category.as_ref())
                        .map(|c| String::from(c.name())),
                });
            }
        }
        Ok(ExposureTable { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn slice<'a>(&'a self, personas: &'a PersonaSlice) -> impl Iterator<Item = &'a ExposureRow> + 'a {
        self.rows.iter().filter(move |r| personas.admits(&r.persona))
    }

    /// Engines in sorted order.
    pub fn engines(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.rows.iter().map(|r| &r.engine).collect();
        set.into_iter().cloned().collect()
    }

    /// Topics in sorted order.
    pub fn topics(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.rows.iter().map(|r| &r.topic).collect();
        set.into_iter().cloned().collect()
    }

    /// Checks the (engine, topic, day, persona, rank) key is unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if !seen.insert((&r.engine, &r.topic, r.day, &r.persona, r.rank)) {
                return Err(invalid!(
                    "duplicate exposure row {}/{}/{}/{:?} rank {}",
                    r.engine,
                    r.topic,
                    r.day,
                    r.persona,
                    r.rank
                ));
            }
        }
        Ok(())
    }
}
