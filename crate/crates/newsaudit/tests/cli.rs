mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::*;
use newsaudit::config::Config;
use newsaudit::pipeline::RunOptions;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_newsaudit"))
}

#[test]
fn missing_config_key_is_named() {
    let text = "[run]\noutput_dir = \"out\"\ndays = [\"2025-05-01\"]\n\n[[engines]]\nid = \"gpt\"\nkind = \"replay\"\n\n\
                [enrichment]\npsl = \"psl.csv\"\n";
    let err = Config::parse(text, Path::new("/tmp/study.toml")).unwrap_err().to_string();
    assert!(err.contains("mbfc"), "{err}");
    assert!(err.contains("/tmp/study.toml"), "{err}");

    let unknown = text.replace("[enrichment]", "[enrichment]\nmbfc = \"m.csv\"\ncolour = 1");
    let err = Config::parse(&unknown, Path::new("study.toml")).unwrap_err().to_string();
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn recorded_answers_replay_to_the_same_report() {
    let a = demo_copy();
    let fixture = a.path().join("recorded.jsonl");
    let rec = RunOptions {
        record: Some(fixture.clone()),
        clock: fixed_clock,
        ..RunOptions::default()
    };
    let recorded = run_in(a.path(), &rec);
    assert_eq!(fs::read_to_string(&fixture).unwrap().lines().count(), 12);

    let b = demo_copy();
    let replay = RunOptions {
        replay: Some(fixture),
        clock: fixed_clock,
        ..RunOptions::default()
    };
    let replayed = run_in(b.path(), &replay);
    assert_eq!(recorded.report, replayed.report);
    for day in ["2025-05-01", "2025-05-02"] {
        let name = format!("out/raw/answers-{day}.jsonl");
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn binary_runs_the_demo() {
    let dir = demo_copy();
    let out = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("config.toml"))
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/report/report.json").exists());
    assert!(!dir.path().join("out/report/report.md").exists());
}

#[test]
fn binary_reports_versions_and_bad_config() {
    let out = bin().arg("--version").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(newsaudit::VERSION), "{text}");

    let out = bin().args(["run", "--config", "/nonexistent/study.toml"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/study.toml"));
}
