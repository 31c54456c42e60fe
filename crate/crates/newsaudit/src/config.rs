//! Run configuration (TOML). Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{NaiveDate, NaiveTime};
use serde::Deserialize;

use newsaudit_core::analysis::AnalysisConfig;
use newsaudit_core::exposure::PersonaSlice;
use newsaudit_core::metrics::{MetricsConfig, DEFAULT_ALPHA};
use newsaudit_core::probe::{persona_grid, Persona, DEFAULT_TOPICS};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Openai,
    Anthropic,
    Gemini,
    GoogleNews,
    Replay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub id: String,
    pub kind: EngineKind,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PersonaSetting {
    Mode(String),
    List(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    output_dir: PathBuf,
    #[serde(default)]
    days: Option<Vec<NaiveDate>>,
    #[serde(default)]
    start: Option<NaiveDate>,
    #[serde(default)]
    num_days: Option<u32>,
    #[serde(default)]
    schedule_time: Option<NaiveTime>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    #[serde(default)]
    topics: Option<Vec<String>>,
    #[serde(default)]
    personas: Option<PersonaSetting>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    1000
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): backoff * 2^(attempt-1).
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << attempt.saturating_sub(1).min(20)))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCollection {
    #[serde(default)]
    replay: Option<PathBuf>,
    #[serde(default)]
    timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionSettings {
    #[serde(default)]
    pub shorteners: Option<PathBuf>,
    #[serde(default)]
    pub psl: Option<PathBuf>,
    #[serde(default)]
    pub keep_subdomains: Option<PathBuf>,
    #[serde(default)]
    pub max_hops: Option<u32>,
    /// CSV `short_url,target_url` answering redirects without network.
    #[serde(default)]
    pub redirects: Option<PathBuf>,
    /// Never touch the network; unresolved short links are flagged.
    #[serde(default)]
    pub offline: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichmentSettings {
    pub mbfc: PathBuf,
    pub psl: PathBuf,
    #[serde(default)]
    pub overrides: Option<PathBuf>,
    #[serde(default)]
    pub iab_cache: Option<PathBuf>,
    /// CSV `domain,category,confidence` standing in for the live provider.
    #[serde(default)]
    pub iab_fixture: Option<PathBuf>,
    #[serde(default)]
    pub klazify: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    #[serde(default)]
    baseline: Option<String>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    top_k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    #[serde(default)]
    baseline: Option<String>,
    #[serde(default)]
    tukey_alpha: Option<f64>,
    #[serde(default)]
    serp_length_sensitivity: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: RawRun,
    #[serde(default)]
    probe: RawProbe,
    engines: Vec<EngineConfig>,
    #[serde(default)]
    retry: RetryPolicy,
    #[serde(default)]
    collection: RawCollection,
    #[serde(default)]
    attribution: AttributionSettings,
    enrichment: EnrichmentSettings,
    #[serde(default)]
    metrics: RawMetrics,
    #[serde(default)]
    analysis: RawAnalysis,
    #[serde(default)]
    datasets: BTreeMap<String, String>,
}

/// Persona condition of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PersonaMode {
    Baseline,
    Grid,
    Explicit(Vec<Persona>),
}

impl PersonaMode {
    pub fn personas(&self) -> Vec<Persona> {
        match self {
            PersonaMode::Baseline => vec![Persona::BASELINE],
            PersonaMode::Grid => persona_grid(),
            PersonaMode::Explicit(list) => list.clone(),
        }
    }

    /// Rows the headline metrics and analyses look at.
    pub fn slice(&self) -> PersonaSlice {
        match self {
            PersonaMode::Baseline => PersonaSlice::Baseline,
            PersonaMode::Grid => PersonaSlice::AnyTraits,
            PersonaMode::Explicit(list) => match list.as_slice() {
                [only] if only.is_baseline() => PersonaSlice::Baseline,
                [only] => PersonaSlice::Persona(only.traits()),
                list if list.iter().any(Persona::is_baseline) => PersonaSlice::All,
                _ => PersonaSlice::AnyTraits,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub path: PathBuf,
    pub output_dir: PathBuf,
    pub days: Vec<NaiveDate>,
    pub schedule_time: NaiveTime,
    pub topics: Vec<String>,
    pub personas: PersonaMode,
    pub engines: Vec<EngineConfig>,
    pub retry: RetryPolicy,
    pub replay: Option<PathBuf>,
    pub timeout: Duration,
    pub attribution: AttributionSettings,
    pub enrichment: EnrichmentSettings,
    pub metrics: MetricsConfig,
    pub analysis: AnalysisConfig,
    pub datasets: BTreeMap<String, String>,
}

fn config_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {msg}", path.display()))
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    /// Parses `text` as if it were read from `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Config> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(path, e.message()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let days = match (raw.run.days, raw.run.start, raw.run.num_days) {
            (Some(days), None, None) => days,
            (None, Some(start), Some(n)) => (0..n)
                .map(|i| start + chrono::Days::new(u64::from(i)))
                .collect(),
            (None, Some(_), None) => return Err(config_err(path, "missing key `run.num_days`")),
            (None, None, _) => return Err(config_err(path, "missing key `run.days` (or `run.start` and `run.num_days`)")),
            _ => return Err(config_err(path, "give either `run.days` or `run.start` + `run.num_days`, not both")),
        };
        if days.is_empty() {
            return Err(config_err(path, "`run.days` is empty"));
        }

        let topics = raw
            .probe
            .topics
            .unwrap_or_else(|| DEFAULT_TOPICS.iter().map(|t| t.to_string()).collect());
        if topics.is_empty() || topics.iter().any(|t| t.trim().is_empty()) {
            return Err(config_err(path, "`probe.topics` must be non-empty strings"));
        }

        let personas = match raw.probe.personas {
            None => PersonaMode::Baseline,
            Some(PersonaSetting::Mode(m)) if m == "baseline" => PersonaMode::Baseline,
            Some(PersonaSetting::Mode(m)) if m == "grid" => PersonaMode::Grid,
            Some(PersonaSetting::Mode(m)) => {
                return Err(config_err(path, format!("`probe.personas` must be \"baseline\", \"grid\" or a list, got {m:?}")))
            }
            Some(PersonaSetting::List(list)) => PersonaMode::Explicit(
                list.iter()
                    .map(|t| Persona::parse_traits(t).map_err(|e| config_err(path, format!("`probe.personas`: {e}"))))
                    .collect::<Result<_>>()?,
            ),
        };

        if raw.engines.is_empty() {
            return Err(config_err(path, "no `[[engines]]` configured"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &raw.engines {
            if !seen.insert(e.id.as_str()) {
                return Err(config_err(path, format!("engine id {:?} appears twice", e.id)));
            }
        }

        let baseline_default = MetricsConfig::default().baseline;
        let metrics = MetricsConfig {
            baseline: raw.metrics.baseline.unwrap_or(baseline_default.clone()),
            alpha: raw.metrics.alpha.unwrap_or(DEFAULT_ALPHA),
            top_k: raw.metrics.top_k.unwrap_or(10),
            personas: personas.slice(),
        };
        if !(metrics.alpha > 0.0 && metrics.alpha.is_finite()) {
            return Err(config_err(path, "`metrics.alpha` must be positive"));
        }
        let defaults = AnalysisConfig::default();
        let analysis = AnalysisConfig {
            baseline: raw.analysis.baseline.unwrap_or_else(|| metrics.baseline.clone()),
            personas: personas.slice(),
            tukey_alpha: raw.analysis.tukey_alpha.unwrap_or(defaults.tukey_alpha),
            serp_length_sensitivity: raw
                .analysis
                .serp_length_sensitivity
                .unwrap_or(defaults.serp_length_sensitivity),
            rtd_alpha: metrics.alpha,
        };

        let mut attribution = raw.attribution;
        attribution.shorteners = attribution.shorteners.map(rel);
        attribution.psl = attribution.psl.map(rel);
        attribution.keep_subdomains = attribution.keep_subdomains.map(rel);
        attribution.redirects = attribution.redirects.map(rel);
        let mut enrichment = raw.enrichment;
        enrichment.mbfc = rel(enrichment.mbfc);
        enrichment.psl = rel(enrichment.psl);
        enrichment.overrides = enrichment.overrides.map(rel);
        enrichment.iab_cache = enrichment.iab_cache.map(rel);
        enrichment.iab_fixture = enrichment.iab_fixture.map(rel);

        Ok(Config {
            path: path.to_path_buf(),
            output_dir: rel(raw.run.output_dir),
            days,
            schedule_time: raw
                .run
                .schedule_time
                .unwrap_or(NaiveTime::from_hms_opt(20, 0, 0).expect("valid time")),
            topics,
            personas,
            engines: raw.engines,
            retry: raw.retry,
            replay: raw.collection.replay.map(rel),
            timeout: Duration::from_secs(raw.collection.timeout_secs.unwrap_or(120)),
            attribution,
            enrichment,
            metrics,
            analysis,
            datasets: raw.datasets,
        })
    }

    pub fn engine_ids(&self) -> Vec<String> {
        self.engines.iter().map(|e| e.id.clone()).collect()
    }

    /// Flat parameter map recorded in report metadata.
    pub fn parameters(&self) -> BTreeMap<String, String> {
        let mut p = BTreeMap::new();
        p.insert("baseline".into(), self.metrics.baseline.clone());
        p.insert("rtd_alpha".into(), format!("{}", self.metrics.alpha));
        p.insert("rtd_top_k".into(), self.metrics.top_k.to_string());
        p.insert("tukey_alpha".into(), format!("{}", self.analysis.tukey_alpha));
        p.insert("max_retries".into(), self.retry.max_retries.to_string());
        p.insert(
            "max_hops".into(),
            self.attribution
                .max_hops
                .unwrap_or(newsaudit_core::attribution::DEFAULT_MAX_HOPS)
                .to_string(),
        );
        p.insert("schedule_time".into(), self.schedule_time.format("%H:%M").to_string());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
output_dir = "out"
start = "2025-05-01"
num_days = 3

[probe]
topics = ["Gaza war", "Inflation"]
personas = "grid"

[[engines]]
id = "gpt"
kind = "openai"
model = "gpt-4o-search-preview"

[enrichment]
mbfc = "data/mbfc.csv"
psl = "/abs/psl.csv"
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let c = Config::parse(MINIMAL, Path::new("/cfg/run.toml")).unwrap();
        assert_eq!(c.days.len(), 3);
        assert_eq!(c.days[2], NaiveDate::from_ymd_opt(2025, 5, 3).unwrap());
        assert_eq!(c.output_dir, Path::new("/cfg/out"));
        assert_eq!(c.enrichment.mbfc, Path::new("/cfg/data/mbfc.csv"));
        assert_eq!(c.enrichment.psl, Path::new("/abs/psl.csv"));
        assert_eq!(c.personas.personas().len(), 16);
        assert_eq!(c.metrics.personas, PersonaSlice::AnyTraits);
        assert_eq!(c.retry.max_retries, 3);
        assert_eq!(c.engines[0].kind, EngineKind::Openai);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("mbfc = \"data/mbfc.csv\"\n", "");
        let err = Config::parse(&text, Path::new("run.toml")).unwrap_err().to_string();
        assert!(err.contains("mbfc"), "{err}");
        let text = MINIMAL.replace("output_dir = \"out\"\n", "");
        let err = Config::parse(&text, Path::new("run.toml")).unwrap_err().to_string();
        assert!(err.contains("output_dir"), "{err}");
        let text = MINIMAL.replace("num_days = 3\n", "");
        let err = Config::parse(&text, Path::new("run.toml")).unwrap_err().to_string();
        assert!(err.contains("num_days"), "{err}");
    }

    #[test]
    fn explicit_personas() {
        let text = MINIMAL.replace("personas = \"grid\"", "personas = [\"rich\", \"poor female old right\"]");
        let c = Config::parse(&text, Path::new("run.toml")).unwrap();
        assert_eq!(c.personas.personas()[1].traits(), "poor female old right");
        let text = MINIMAL.replace("personas = \"grid\"", "personas = \"everyone\"");
        assert!(Config::parse(&text, Path::new("run.toml")).is_err());
    }

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy {
            max_retries: 3,
            backoff_ms: 100,
        };
        assert_eq!(r.delay(1), Duration::from_millis(100));
        assert_eq!(r.delay(3), Duration::from_millis(400));
    }
}
