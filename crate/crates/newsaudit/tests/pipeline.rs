mod common;

use std::fs;
use std::time::Instant;

use common::*;
use newsaudit::emit::{self, Format, CSV_DIR, CSV_TABLES};
use newsaudit::pipeline::{RunOptions, Stage};

#[test]
fn demo_runs_are_identical_and_match_the_fixture_counts() {
    let start = Instant::now();
    let a = demo_copy();
    let b = demo_copy();
    let first = run_in(a.path(), &RunOptions::default());
    run_in(b.path(), &RunOptions::default());
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(first.stages, Stage::ALL);
    assert_eq!(report_without_timestamp(a.path()), report_without_timestamp(b.path()));
    for table in CSV_TABLES {
        let name = format!("out/report/{CSV_DIR}/{table}.csv");
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{table}");
    }

    let oracle = demo_table1_oracle(a.path());
    let table1: Vec<_> = first
        .report
        .table1
        .iter()
        .map(|r| (r.engine.clone(), (r.serp_results, r.unique_domains)))
        .collect();
    assert_eq!(table1, oracle.into_iter().collect::<Vec<_>>());
}

#[test]
fn rerun_resumes_without_touching_raw_answers() {
    let dir = demo_copy();
    let first = run_in(dir.path(), &RunOptions::default());
    assert_eq!(first.collection.as_ref().unwrap().answers, 12);
    let raw = dir.path().join("out/raw");
    let before: Vec<_> = fs::read_dir(&raw)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.clone(), fs::read(&p).unwrap())
        })
        .collect();

    let again = run_in(dir.path(), &RunOptions::default());
    let c = again.collection.unwrap();
    assert_eq!((c.answers, c.skipped), (0, 12));

    let opts = RunOptions {
        from_stage: Stage::Analyze,
        ..RunOptions::default()
    };
    let partial = run_in(dir.path(), &opts);
    assert_eq!(partial.stages, [Stage::Analyze, Stage::Report]);
    for (path, bytes) in before {
        assert_eq!(fs::read(&path).unwrap(), bytes, "{}", path.display());
    }
    assert_eq!(report_without_timestamp(dir.path())["table1"], serde_json::to_value(&first.report.table1).unwrap());
}

#[test]
fn fixed_clock_gives_byte_identical_files() {
    let a = demo_copy();
    let b = demo_copy();
    let opts = RunOptions {
        clock: fixed_clock,
        ..RunOptions::default()
    };
    let ra = run_in(a.path(), &opts);
    run_in(b.path(), &opts);
    for file in ra.files {
        let rel = file.strip_prefix(a.path()).unwrap();
        assert_eq!(fs::read(&file).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
    }
}

#[test]
fn json_report_round_trips() {
    let dir = demo_copy();
    let summary = run_in(dir.path(), &RunOptions::default());
    let bytes = fs::read(dir.path().join("out/report/report.json")).unwrap();
    let parsed = emit::from_json(&bytes).unwrap();
    assert_eq!(parsed, summary.report);
    assert_eq!(emit::to_json(&parsed).unwrap(), bytes);
}

#[test]
fn csv_bundle_has_every_table() {
    let dir = demo_copy();
    let summary = run_in(dir.path(), &RunOptions::default());
    let out = tempfile::tempdir().unwrap();
    let files = emit::emit(&summary.report, Format::CsvBundle, out.path()).unwrap();
    assert_eq!(files.len(), CSV_TABLES.len());
    let table1 = fs::read_to_string(out.path().join(CSV_DIR).join("table1.csv")).unwrap();
    assert!(table1.starts_with("engine,serp_results,unique_domains"), "{table1}");
    let md = fs::read_to_string(dir.path().join("out/report/report.md")).unwrap();
    assert!(md.contains("| google_news | 60 | 16 |"), "{md}");
}

#[test]
fn synthetic_study_reproduces_table1_marginals() {
    let dir = tempfile::tempdir().unwrap();
    write_table1_study(dir.path());
    let summary = run_in(dir.path(), &RunOptions::default());
    let mut got: Vec<_> = summary
        .report
        .table1
        .iter()
        .map(|r| (r.engine.as_str(), r.serp_results, r.unique_domains))
        .collect();
    got.sort();
    let mut want = TABLE1_MARGINALS.to_vec();
    want.sort();
    assert_eq!(got, want);
}
