use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{Local, NaiveDate};
use clap::{Args, Parser, Subcommand};

use newsaudit::agents::Registry;
use newsaudit::collect::Sleeper;
use newsaudit::config::Config;
use newsaudit::core::analysis::AnalysisConfig;
use newsaudit::core::attribution::{BUILTIN_RULES_VERSION, DEFAULT_MAX_HOPS};
use newsaudit::core::enrichment::IAB_TAXONOMY_VERSION;
use newsaudit::core::metrics::{MetricsConfig, DEFAULT_ALPHA};
use newsaudit::core::probe::RawAnswer;
use newsaudit::core::report::{assemble_report, RunMetadata};
use newsaudit::emit::{self, Format};
use newsaudit::iab::{FixtureProvider, KlazifyProvider, NoProvider};
use newsaudit::pipeline::{self, EnrichmentInputs, Pipeline, ProfilesFile, RunOptions, Stage};
use newsaudit::{config::AttributionSettings, store};

#[derive(Parser)]
#[command(name = "newsaudit", about = "Audit the news exposure of web-connected search agents", disable_version_flag = true)]
struct Cli {
    /// Print toolkit and dataset snapshot versions (add --config for the run's datasets).
    #[arg(short = 'V', long)]
    version: bool,
    #[arg(long, requires = "version")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline end to end, or resume from a stage.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Stage::Collect)]
        from_stage: Stage,
        #[arg(long, value_enum, default_value_t = Format::All)]
        format: Format,
        /// Replace every configured agent with this answer fixture.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Query the agents for the configured days.
    Collect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Also append every answer to this replay fixture.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Collect today's probes now and exit (for external schedulers).
        #[arg(long)]
        once: bool,
    },
    /// Turn raw answers into ranked outlet domains.
    Attribute(AttributeArgs),
    /// Join outlet domains with MBFC, PSL and IAB data.
    Enrich(EnrichArgs),
    /// Build the exposure table and descriptive metrics.
    Metrics(MetricsArgs),
    /// Run ANOVA, Tukey HSD and mixed models per research question.
    Analyze(AnalyzeArgs),
    /// Render the report from persisted metrics and analysis.
    Report(ReportArgs),
}

#[derive(Args)]
struct AttributeArgs {
    /// Raw answer file, or a directory of answers-*.jsonl files.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    shorteners: Option<PathBuf>,
    /// Public suffix rule file.
    #[arg(long)]
    psl: Option<PathBuf>,
    #[arg(long)]
    keep_subdomains: Option<PathBuf>,
    /// CSV of url,target pairs answering redirects offline.
    #[arg(long)]
    redirects: Option<PathBuf>,
    #[arg(long)]
    offline: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_HOPS)]
    max_hops: u32,
}

#[derive(Args)]
struct EnrichArgs {
    #[arg(long)]
    serps: PathBuf,
    #[arg(long)]
    mbfc: PathBuf,
    /// Perennial sources CSV (domain,psl_label).
    #[arg(long)]
    psl: PathBuf,
    #[arg(long)]
    iab_cache: Option<PathBuf>,
    #[arg(long)]
    overrides: Option<PathBuf>,
    /// CSV of domain,category,confidence used instead of a live provider.
    #[arg(long)]
    iab_fixture: Option<PathBuf>,
    #[arg(long, conflicts_with = "iab_fixture")]
    klazify: bool,
    /// Public suffix rule file used to normalize dataset domains.
    #[arg(long)]
    public_suffixes: Option<PathBuf>,
    #[arg(long)]
    keep_subdomains: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    serps: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the exposure table.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value = "google_news")]
    baseline: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value = "google_news")]
    baseline: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    tukey_alpha: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    analysis: PathBuf,
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Run configuration supplying report metadata.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::All)]
    format: Format,
}

fn print_version(config: Option<&Path>) -> Result<()> {
    println!("newsaudit {}", newsaudit::VERSION);
    println!("public suffix rules (built-in): {BUILTIN_RULES_VERSION}");
    println!("IAB taxonomy: {IAB_TAXONOMY_VERSION}");
    if let Some(p) = config {
        let c = Config::load(p)?;
        for (name, version) in &c.datasets {
            println!("{name}: {version}");
        }
    }
    Ok(())
}

fn read_answers(input: &Path) -> Result<Vec<RawAnswer>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("answers-") && n.ends_with(".jsonl"))
            })
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(store::read_jsonl::<RawAnswer>(&f)?);
        }
        Ok(out)
    } else {
        Ok(store::read_jsonl(input)?)
    }
}

fn collect(config: &Config, replay: Option<&Path>, record: Option<&Path>, once: bool) -> Result<()> {
    let registry = Registry::from_config(config, replay, record)?;
    let pipeline = Pipeline::new(config);
    let days: Vec<NaiveDate> = if once {
        vec![Local::now().date_naive()]
    } else {
        config.days.clone()
    };
    let sleeper = newsaudit::collect::ThreadSleeper;
    for day in days {
        if !once {
            let due = day
                .and_time(config.schedule_time)
                .and_local_timezone(Local)
                .earliest()
                .context("schedule time does not exist in the local time zone")?;
            if let Ok(wait) = (due - Local::now()).to_std() {
                log::info!("waiting until {due} to collect {day}");
                sleeper.sleep(wait);
            }
        }
        let o = pipeline.collect(&[day], &registry, newsaudit::now_rfc3339)?;
        println!(
            "{day}: {} probes, {} answers, {} failures, {} already answered",
            o.probes, o.answers, o.failures, o.skipped
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.version {
        return print_version(cli.config.as_deref());
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no command given; see --help");
    };
    match command {
        Command::Run {
            config,
            from_stage,
            format,
            replay,
            record,
        } => {
            let config = Config::load(&config)?;
            let summary = Pipeline::new(&config).run(&RunOptions {
                from_stage,
                format,
                replay,
                record,
                ..RunOptions::default()
            })?;
            let stages: Vec<_> = summary.stages.iter().map(|s| s.name()).collect();
            println!("stages: {}", stages.join(", "));
            if let Some(o) = summary.collection {
                println!(
                    "collection: {} probes, {} answers, {} failures, {} already answered",
                    o.probes, o.answers, o.failures, o.skipped
                );
            }
            for f in summary.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Collect {
            config,
            replay,
            record,
            once,
        } => {
            let config = Config::load(&config)?;
            collect(&config, replay.as_deref(), record.as_deref(), once)?;
        }
        Command::Attribute(a) => {
            let settings = AttributionSettings {
                shorteners: a.shorteners,
                psl: a.psl,
                keep_subdomains: a.keep_subdomains,
                max_hops: Some(a.max_hops),
                redirects: a.redirects,
                offline: a.offline,
            };
            let answers = read_answers(&a.input)?;
            let attributor = pipeline::attributor(&settings)?;
            let resolver = pipeline::resolver(&settings, std::time::Duration::from_secs(30))?;
            let serps = pipeline::attribute_answers(&answers, &attributor, resolver.as_ref());
            store::write_jsonl(&a.out, &serps)?;
            let misses = serps.iter().filter(|s| s.attribution_miss).count();
            println!("{} answers, {} SERPs, {misses} attribution misses", answers.len(), serps.len());
        }
        Command::Enrich(a) => {
            let rules = pipeline::normalization_rules(&AttributionSettings {
                psl: a.public_suffixes,
                keep_subdomains: a.keep_subdomains,
                ..Default::default()
            })?;
            let serps = store::read_jsonl(&a.serps)?;
            let fixture;
            let klazify;
            let provider: &(dyn newsaudit::core::enrichment::IabProvider + Sync) = if let Some(p) = &a.iab_fixture {
                fixture = FixtureProvider::new(newsaudit::datasets::load_iab_fixture(p, &rules)?);
                &fixture
            } else if a.klazify {
                klazify = KlazifyProvider::from_env(std::time::Duration::from_secs(30))?;
                &klazify
            } else {
                &NoProvider
            };
            let cache = a
                .iab_cache
                .unwrap_or_else(|| a.out.with_file_name("iab_cache.jsonl"));
            let profiles = pipeline::enrich_serps(
                &serps,
                &EnrichmentInputs {
                    rules: &rules,
                    mbfc: &a.mbfc,
                    psl: &a.psl,
                    overrides: a.overrides.as_deref(),
                    iab_cache: &cache,
                    provider,
                },
            )?;
            store::write_json(&a.out, &profiles)?;
            println!("{} profiles", profiles.profiles.len());
        }
        Command::Metrics(a) => {
            let serps = store::read_jsonl(&a.serps)?;
            let profiles: ProfilesFile = store::read_json(&a.profiles)?;
            let config = MetricsConfig {
                baseline: a.baseline,
                alpha: a.alpha,
                top_k: a.top_k,
                ..MetricsConfig::default()
            };
            let (table, metrics) = pipeline::metrics_from(&serps, &profiles.profiles, &config)?;
            if let Some(t) = &a.table {
                store::write_jsonl(t, &table.rows)?;
            }
            store::write_json(&a.out, &metrics)?;
            println!("{} exposure rows, {} engines", table.rows.len(), metrics.totals.len());
        }
        Command::Analyze(a) => {
            let table = pipeline::load_exposure(&a.table)?;
            let config = AnalysisConfig {
                baseline: a.baseline,
                tukey_alpha: a.tukey_alpha,
                ..AnalysisConfig::default()
            };
            let bundle = pipeline::analyze_table(&table, &config)?;
            store::write_json(&a.out, &bundle)?;
            println!("{} questions analysed", bundle.questions.len());
        }
        Command::Report(a) => {
            let metrics = store::read_json(&a.metrics)?;
            let analysis = store::read_json(&a.analysis)?;
            let coverage = match &a.profiles {
                Some(p) => Some(store::read_json::<ProfilesFile>(p)?.coverage),
                None => None,
            };
            let now = newsaudit::now_rfc3339();
            let meta = match &a.config {
                Some(c) => Pipeline::new(&Config::load(c)?).run_metadata(now),
                None => RunMetadata {
                    toolkit_version: newsaudit::VERSION.to_string(),
                    generated_at: now,
                    days: Vec::new(),
                    engines: Vec::new(),
                    topics: Vec::new(),
                    persona_mode: MetricsConfig::default().personas,
                    dataset_versions: Default::default(),
                    parameters: Default::default(),
                },
            };
            let report = assemble_report(meta, &metrics, &analysis, coverage);
            for f in emit::emit(&report, a.format, &a.out)? {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}
