use std::path::Path;
use std::process::{Command, Output};

fn euphemism(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_euphemism"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn full_loop_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = euphemism(&["synth", "--out", "data", "--seed", "3"], d);
    assert!(o.status.success(), "{}", text(&o));

    let detect = [
        "detect",
        "--corpus",
        "data/corpus.txt",
        "--keywords",
        "data/keywords.tsv",
        "--truth",
        "data/truth.tsv",
        "--backend",
        "count-oracle",
        "--t",
        "5",
        "--seed",
        "1",
        "--run-id",
        "r1",
        "--k",
        "10,20",
    ];
    let o = euphemism(&detect, d);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(d.join("runs/r1/rankings/ranking.tsv").is_file());
    assert!(d.join("runs/r1/manifest.json").is_file());

    let o = euphemism(&["identify", "--run-id", "r1", "--words", "from-detection:10"], d);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let o = euphemism(&["evaluate", "--run-id", "r1"], d);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let report = std::fs::read_to_string(d.join("runs/r1/reports/report.md")).unwrap();
    assert!(report.contains("| P@10 | P@20 |"), "{report}");

    let o = euphemism(&["detect", "--corpus", "data/corpus.txt", "--keywords", "missing.tsv"], d);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let o = euphemism(&["detect", "--bogus"], d);
    assert_eq!(o.status.code(), Some(1));
    let o = euphemism(&["detect", "--set", "colour=red", "--corpus", "data/corpus.txt"], d);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(d.join("none.tsv"), "unobtainium\tdrug\n").unwrap();
    let o = euphemism(
        &["detect", "--corpus", "data/corpus.txt", "--keywords", "none.tsv", "--backend", "count-oracle", "--run-id", "r2"],
        d,
    );
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = euphemism(&["identify", "--run-id", "r1", "--words", " , "], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn serve_refuses_empty_runs_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = euphemism(&["serve", "--runs-dir", "runs", "--port", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("no completed detection runs"));
}
