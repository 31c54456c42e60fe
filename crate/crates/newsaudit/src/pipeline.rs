//! The staged pipeline: collect, attribute, enrich, metrics, analyze,
//! report. Every stage reads its inputs from and writes its output to the
//! run layout, so a run can resume from any stage.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use newsaudit_core::analysis::{run_rq_analyses, AnalysisBundle, AnalysisConfig};
use newsaudit_core::attribution::{
    Attributor, HostSet, NormalizationRules, OfflineResolver, RedirectResolver, SerpRecord, SuffixRules,
    DEFAULT_KEEP_SUBDOMAINS, DEFAULT_MAX_HOPS, DEFAULT_SHORTENERS, MAX_ENTRIES,
};
use newsaudit_core::enrichment::{build_profiles, categorize_iab, CoverageReport, IabProvider, Lookups, OutletProfile};
use newsaudit_core::exposure::{ExposureRow, ExposureTable};
use newsaudit_core::metrics::{compute_metrics, MetricsBundle, MetricsConfig};
use newsaudit_core::probe::{build_plan, ProbeKey, RawAnswer};
use newsaudit_core::report::{assemble_report, AuditReport, RunMetadata};

use crate::agents::Registry;
use crate::collect::{answered_keys, load_answers, CollectionOutcome, Collector, FileSink};
use crate::config::{AttributionSettings, Config};
use crate::datasets;
use crate::emit::{self, Format};
use crate::error::{Error, Result};
use crate::iab::{CachedProvider, FixtureProvider, KlazifyProvider, NoProvider};
use crate::resolve::{FixtureResolver, HttpResolver};
use crate::store::{self, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Collect,
    Attribute,
    Enrich,
    Metrics,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Collect,
        Stage::Attribute,
        Stage::Enrich,
        Stage::Metrics,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::Attribute => "attribute",
            Stage::Enrich => "enrich",
            Stage::Metrics => "metrics",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Contents of the profiles file written by the enrich stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilesFile {
    pub profiles: Vec<OutletProfile>,
    pub coverage: CoverageReport,
}

pub fn normalization_rules(s: &AttributionSettings) -> Result<NormalizationRules> {
    Ok(NormalizationRules {
        suffixes: match &s.psl {
            Some(p) => datasets::load_suffix_rules(p)?,
            None => SuffixRules::builtin(),
        },
        keep_subdomains: match &s.keep_subdomains {
            Some(p) => datasets::load_host_list(p)?,
            None => HostSet::new(DEFAULT_KEEP_SUBDOMAINS),
        },
    })
}

pub fn attributor(s: &AttributionSettings) -> Result<Attributor> {
    Ok(Attributor {
        rules: normalization_rules(s)?,
        shorteners: match &s.shorteners {
            Some(p) => datasets::load_host_list(p)?,
            None => HostSet::new(DEFAULT_SHORTENERS),
        },
        max_hops: s.max_hops.unwrap_or(DEFAULT_MAX_HOPS),
        max_entries: MAX_ENTRIES,
    })
}

/// Fixture table if given, else the network unless running offline.
pub fn resolver(s: &AttributionSettings, timeout: std::time::Duration) -> Result<Box<dyn RedirectResolver>> {
    Ok(match (&s.redirects, s.offline) {
        (Some(p), _) => Box::new(FixtureResolver::load(p)?),
        (None, true) => Box::new(OfflineResolver),
        (None, false) => Box::new(HttpResolver::new(timeout)),
    })
}

/// Attributes answers in order. Repeated probe keys keep the first answer.
pub fn attribute_answers(answers: &[RawAnswer], attributor: &Attributor, resolver: &dyn RedirectResolver) -> Vec<SerpRecord> {
    let mut seen: BTreeSet<&ProbeKey> = BTreeSet::new();
    let mut out = Vec::with_capacity(answers.len());
    for a in answers {
        if !seen.insert(&a.key) {
            log::warn!("{}: duplicate answer ignored", a.key);
            continue;
        }
        out.push(attributor.attribute(a, resolver));
    }
    out
}

/// Where the enrich stage finds its inputs.
pub struct EnrichmentInputs<'a> {
    pub rules: &'a NormalizationRules,
    pub mbfc: &'a Path,
    pub psl: &'a Path,
    pub overrides: Option<&'a Path>,
    pub iab_cache: &'a Path,
    pub provider: &'a (dyn IabProvider + Sync),
}

pub fn enrich_serps(serps: &[SerpRecord], inputs: &EnrichmentInputs) -> Result<ProfilesFile> {
    let domains: BTreeSet<String> = serps
        .iter()
        .flat_map(|s| s.entries.iter().map(|e| e.domain.clone()))
        .collect();
    let overrides = match inputs.overrides {
        Some(p) => datasets::load_overrides(p, inputs.rules)?,
        None => Default::default(),
    };
    let cached = CachedProvider::open(inputs.provider, inputs.iab_cache)?;
    let iab = domains
        .iter()
        .map(|d| (d.clone(), categorize_iab(d, &cached, &overrides)))
        .collect();
    let fresh = cached.persist(inputs.iab_cache)?;
    log::info!("IAB: {} provider calls, {fresh} new cache entries", cached.provider_calls());
    let lookups = Lookups {
        mbfc: datasets::load_mbfc(inputs.mbfc, inputs.rules)?,
        psl: datasets::load_psl(inputs.psl, inputs.rules)?,
        iab,
    };
    let (profiles, coverage) = build_profiles(&domains, &lookups);
    Ok(ProfilesFile { profiles, coverage })
}

/// Exposure table and metrics from SERPs and profiles.
pub fn metrics_from(serps: &[SerpRecord], profiles: &[OutletProfile], config: &MetricsConfig) -> Result<(ExposureTable, MetricsBundle)> {
    let table = ExposureTable::build(serps, profiles)?;
    let metrics = compute_metrics(&table, config)?;
    Ok((table, metrics))
}

pub fn analyze_table(table: &ExposureTable, config: &AnalysisConfig) -> Result<AnalysisBundle> {
    Ok(run_rq_analyses(table, config)?)
}

pub fn load_exposure(path: &Path) -> Result<ExposureTable> {
    Ok(ExposureTable {
        rows: store::read_jsonl::<ExposureRow>(path)?,
    })
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub from_stage: Stage,
    pub format: Format,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    /// Source of `generated_at` and answer timestamps.
    pub clock: fn() -> String,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            from_stage: Stage::Collect,
            format: Format::All,
            replay: None,
            record: None,
            clock: crate::now_rfc3339,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub stages: Vec<Stage>,
    pub collection: Option<CollectionOutcome>,
    pub report: AuditReport,
    pub files: Vec<PathBuf>,
}

pub struct Pipeline<'a> {
    pub config: &'a Config,
    pub layout: Layout,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage,
            source: Box::new(e),
        },
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a Config) -> Self {
        Pipeline {
            config,
            layout: Layout::new(&config.output_dir),
        }
    }

    /// Queries every probe of `days` not already answered.
    pub fn collect(&self, days: &[NaiveDate], registry: &Registry, clock: fn() -> String) -> Result<CollectionOutcome> {
        let c = self.config;
        let plan = build_plan(&c.engine_ids(), &c.topics, &c.personas.personas(), days)?;
        let done = answered_keys(&self.layout)?;
        let mut collector = Collector::new(registry, c.retry.clone());
        collector.clock = clock;
        let outcome = collector.run(&plan, &done, &mut FileSink::new(self.layout.clone()))?;
        log::info!(
            "collect: {} probes, {} answers, {} failures, {} already answered",
            outcome.probes,
            outcome.answers,
            outcome.failures,
            outcome.skipped
        );
        Ok(outcome)
    }

    pub fn attribute(&self) -> Result<Vec<SerpRecord>> {
        let answers = load_answers(&self.layout)?;
        let attributor = attributor(&self.config.attribution)?;
        let resolver = resolver(&self.config.attribution, self.config.timeout)?;
        let serps = attribute_answers(&answers, &attributor, resolver.as_ref());
        store::write_jsonl(&self.layout.serps_file(), &serps)?;
        Ok(serps)
    }

    pub fn enrich(&self) -> Result<ProfilesFile> {
        let serps: Vec<SerpRecord> = store::read_jsonl(&self.layout.serps_file())?;
        let e = &self.config.enrichment;
        let rules = normalization_rules(&self.config.attribution)?;
        let fixture;
        let klazify;
        let provider: &(dyn IabProvider + Sync) = match (&e.iab_fixture, e.klazify) {
            (Some(p), _) => {
                fixture = FixtureProvider::new(datasets::load_iab_fixture(p, &rules)?);
                &fixture
            }
            (None, true) => {
                klazify = KlazifyProvider::from_env(self.config.timeout)?;
                &klazify
            }
            (None, false) => &NoProvider,
        };
        let cache = e.iab_cache.clone().unwrap_or_else(|| self.layout.iab_cache_file());
        let profiles = enrich_serps(
            &serps,
            &EnrichmentInputs {
                rules: &rules,
                mbfc: &e.mbfc,
                psl: &e.psl,
                overrides: e.overrides.as_deref(),
                iab_cache: &cache,
                provider,
            },
        )?;
        store::write_json(&self.layout.profiles_file(), &profiles)?;
        Ok(profiles)
    }

    pub fn metrics(&self) -> Result<MetricsBundle> {
        let serps: Vec<SerpRecord> = store::read_jsonl(&self.layout.serps_file())?;
        let profiles: ProfilesFile = store::read_json(&self.layout.profiles_file())?;
        let (table, metrics) = metrics_from(&serps, &profiles.profiles, &self.config.metrics)?;
        store::write_jsonl(&self.layout.exposure_file(), &table.rows)?;
        store::write_json(&self.layout.metrics_file(), &metrics)?;
        Ok(metrics)
    }

    pub fn analyze(&self) -> Result<AnalysisBundle> {
        let table = load_exposure(&self.layout.exposure_file())?;
        let bundle = analyze_table(&table, &self.config.analysis)?;
        store::write_json(&self.layout.analysis_file(), &bundle)?;
        Ok(bundle)
    }

    pub fn run_metadata(&self, generated_at: String) -> RunMetadata {
        let c = self.config;
        RunMetadata {
            toolkit_version: crate::VERSION.to_string(),
            generated_at,
            days: c.days.iter().map(|d| d.to_string()).collect(),
            engines: c.engine_ids(),
            topics: c.topics.clone(),
            persona_mode: c.metrics.personas.clone(),
            dataset_versions: c.datasets.clone(),
            parameters: c.parameters(),
        }
    }

    pub fn report(&self, format: Format, generated_at: String) -> Result<(AuditReport, Vec<PathBuf>)> {
        let metrics: MetricsBundle = store::read_json(&self.layout.metrics_file())?;
        let analysis: AnalysisBundle = store::read_json(&self.layout.analysis_file())?;
        let profiles: Option<ProfilesFile> = if self.layout.profiles_file().exists() {
            Some(store::read_json(&self.layout.profiles_file())?)
        } else {
            None
        };
        let report = assemble_report(
            self.run_metadata(generated_at),
            &metrics,
            &analysis,
            profiles.map(|p| p.coverage),
        );
        let files = emit::emit(&report, format, &self.layout.report_dir())?;
        Ok((report, files))
    }

    /// Runs `opts.from_stage` and every later stage. Collection covers all
    /// configured days immediately.
    pub fn run(&self, opts: &RunOptions) -> Result<RunSummary> {
        let mut stages = Vec::new();
        let mut collection = None;
        let wants = |s: Stage| s >= opts.from_stage;
        if wants(Stage::Collect) {
            let registry = Registry::from_config(self.config, opts.replay.as_deref(), opts.record.as_deref())
                .map_err(at(Stage::Collect))?;
            collection = Some(
                self.collect(&self.config.days, &registry, opts.clock)
                    .map_err(at(Stage::Collect))?,
            );
            stages.push(Stage::Collect);
        }
        if wants(Stage::Attribute) {
            self.attribute().map_err(at(Stage::Attribute))?;
            stages.push(Stage::Attribute);
        }
        if wants(Stage::Enrich) {
            self.enrich().map_err(at(Stage::Enrich))?;
            stages.push(Stage::Enrich);
        }
        if wants(Stage::Metrics) {
            self.metrics().map_err(at(Stage::Metrics))?;
            stages.push(Stage::Metrics);
        }
        if wants(Stage::Analyze) {
            self.analyze().map_err(at(Stage::Analyze))?;
            stages.push(Stage::Analyze);
        }
        let (report, files) = self.report(opts.format, (opts.clock)()).map_err(at(Stage::Report))?;
        stages.push(Stage::Report);
        Ok(RunSummary {
            stages,
            collection,
            report,
            files,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_order_and_names() {
        assert!(Stage::ALL.windows(2).all(|w| w[0] < w[1]));
        let names: Vec<_> = Stage::ALL.iter().map(|s| s.to_string()).collect();
        assert_eq!(names, ["collect", "attribute", "enrich", "metrics", "analyze", "report"]);
    }

    #[test]
    fn stage_errors_keep_the_innermost_stage() {
        let e = at(Stage::Metrics)(Error::Config("x".into()));
        let e = at(Stage::Report)(e);
        assert!(e.to_string().starts_with("stage metrics failed"));
    }
}
