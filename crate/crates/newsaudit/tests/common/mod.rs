#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use newsaudit::config::Config;
use newsaudit::pipeline::{Pipeline, RunOptions, RunSummary};

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

/// Copies the demo fixture (without any previous output) into a fresh
/// temporary directory.
pub fn demo_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(demo_dir()).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
    }
    dir
}

pub fn fixed_clock() -> String {
    "2025-05-03T00:00:00Z".to_string()
}

pub fn run_in(dir: &Path, opts: &RunOptions) -> RunSummary {
    let config = Config::load(&dir.join("config.toml")).unwrap();
    Pipeline::new(&config).run(opts).unwrap()
}

/// The JSON report with its generation timestamp blanked.
pub fn report_without_timestamp(dir: &Path) -> Value {
    let bytes = fs::read(dir.join("out/report/report.json")).unwrap();
    let mut v: Value = serde_json::from_slice(&bytes).unwrap();
    v["run_metadata"]["generated_at"] = Value::Null;
    v
}

/// Table 1 counts straight from the demo answer file: every http(s) token
/// in reading order, shortened links swapped for their recorded target,
/// host without `www.`, first ten per answer.
pub fn demo_table1_oracle(dir: &Path) -> BTreeMap<String, (usize, usize)> {
    let redirects: BTreeMap<String, String> = fs::read_to_string(dir.join("redirects.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let mut results: BTreeMap<String, usize> = BTreeMap::new();
    let mut domains: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for line in fs::read_to_string(dir.join("answers.jsonl")).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let engine = v["engine"].as_str().unwrap().to_string();
        let text = v["text"].as_str().unwrap();
        let mut hosts = Vec::new();
        for word in text.split(|c: char| c.is_whitespace() || c == '(') {
            if !word.starts_with("http") {
                continue;
            }
            let url = word.trim_end_matches([')', '.', ',']);
            let url = redirects.get(url).map_or(url, String::as_str);
            let host = url.split("://").nth(1).unwrap().split('/').next().unwrap();
            hosts.push(host.trim_start_matches("www.").to_string());
        }
        hosts.truncate(10);
        *results.entry(engine.clone()).or_default() += hosts.len();
        domains.entry(engine).or_default().extend(hosts);
    }
    results
        .into_iter()
        .map(|(e, n)| {
            let d = domains[&e].len();
            (e, (n, d))
        })
        .collect()
}

/// Engine, SERP results, unique domains.
pub const TABLE1_MARGINALS: [(&str, usize, usize); 4] = [
    ("claude", 1252, 157),
    ("gemini", 860, 117),
    ("gpt", 1657, 127),
    ("google_news", 1677, 291),
];

const BIAS: [&str; 7] = ["far-left", "left", "left-center", "least-biased", "right-center", "right", "extreme-right"];
const FACT: [&str; 6] = ["very low", "low", "mixed", "mostly factual", "high", "very high"];
const PSL: [&str; 4] = ["deprecated", "generally_unreliable", "no_consensus", "generally_reliable"];

/// Writes a replayable study (24 topics, 7 days, four engines) whose
/// per-engine result and outlet counts equal [`TABLE1_MARGINALS`]. Results
/// are spread as evenly as possible over the 168 probes of each engine and
/// outlets are assigned round-robin, so every outlet in an engine's pool is
/// used at least once.
pub fn write_table1_study(dir: &Path) {
    let topics = newsaudit::core::probe::DEFAULT_TOPICS;
    let days: Vec<String> = (15..=21).map(|d| format!("2025-05-{d}")).collect();
    let probes = topics.len() * days.len();
    let mut answers = String::new();
    for (engine, results, outlets) in TABLE1_MARGINALS {
        let (base, extra) = (results / probes, results % probes);
        let mut next = 0usize;
        let mut p = 0usize;
        for day in &days {
            for topic in topics {
                let n = base + usize::from(p < extra);
                let text: Vec<String> = (0..n)
                    .map(|i| {
                        let outlet = next % outlets;
                        next += 1;
                        format!("- {topic} {i} (https://www.outlet{outlet:03}.com/{engine}/{p}/{i})")
                    })
                    .collect();
                let answer = json!({
                    "engine": engine, "topic": topic, "persona": "", "day": day,
                    "fetched_at": format!("{day}T20:00:00Z"), "text": text.join("\n"), "meta": {}
                });
                answers.push_str(&answer.to_string());
                answers.push('\n');
                p += 1;
            }
        }
        assert_eq!(next, results);
    }
    fs::write(dir.join("answers.jsonl"), answers).unwrap();

    let mut mbfc = String::from("domain,bias_label,factuality_label\n");
    let mut psl = String::from("domain,psl_label\n");
    for i in 0..300 {
        mbfc.push_str(&format!("outlet{i:03}.com,{},{}\n", BIAS[i % 7], FACT[i % 6]));
        psl.push_str(&format!("outlet{i:03}.com,{}\n", PSL[i % 4]));
    }
    fs::write(dir.join("mbfc.csv"), mbfc).unwrap();
    fs::write(dir.join("psl.csv"), psl).unwrap();
    let days_toml: Vec<String> = days.iter().map(|d| format!("\"{d}\"")).collect();
    let engines: String = TABLE1_MARGINALS
        .iter()
        .map(|(e, _, _)| format!("[[engines]]\nid = \"{e}\"\nkind = \"replay\"\n\n"))
        .collect();
    fs::write(
        dir.join("config.toml"),
        format!(
            "[run]\noutput_dir = \"out\"\ndays = [{}]\n\n[probe]\npersonas = \"baseline\"\n\n{engines}\
             [collection]\nreplay = \"answers.jsonl\"\n\n[retry]\nmax_retries = 0\nbackoff_ms = 0\n\n\
             [attribution]\noffline = true\n\n[enrichment]\nmbfc = \"mbfc.csv\"\npsl = \"psl.csv\"\n\
             iab_cache = \"out/iab_cache.jsonl\"\n\n[metrics]\nbaseline = \"google_news\"\n",
            days_toml.join(", ")
        ),
    )
    .unwrap();
}
