use std::path::Path;
use std::process::{Command, Output};

fn earlysib(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earlysib"))
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn report_without_runs_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = earlysib(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("run summaries"));
}

#[test]
fn missing_artifact_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = earlysib(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("corpus.jsonl"));
}

#[test]
fn bad_overrides_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for set in ["gen.nusers=3", "gen.n_users=-4", "explain.permutations=10"] {
        let o = earlysib(dir.path(), &["--set", set, "synth"]);
        assert_eq!(o.status.code(), Some(1), "{set}: {}", stderr(&o));
    }
}

#[test]
fn unreadable_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = earlysib(dir.path(), &["--config", dir.path().join("nope.json").to_str().unwrap(), "synth"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn ingest_reports_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let good = r#"{"id":"p1","user":"u1","kind":"post","timestamp":"2020-01-01T00:00:00Z","thread_id":"t1","title":"hi","body":"hello","tags":[],"parent_id":null}"#;
    std::fs::write(&corpus, format!("{good}\n{{\"id\": 3}}\n")).unwrap();
    let o = earlysib(dir.path(), &["--set", &format!("paths.corpus={}", corpus.display()), "ingest"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn synth_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = earlysib(dir.path(), &["--seed", "3", "--set", "gen.n_users=40", "synth"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["interactions"].as_u64().unwrap() > 0);

    let o = earlysib(dir.path(), &["report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.contains(",synth,") && l.contains(",interactions,")));
    assert!(dir.path().join("report.md").is_file());
}
