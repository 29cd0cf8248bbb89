use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnn-assoc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = cli(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["generate", "--seed", "3", "--out", "a/seq.jsonl"], p);
    ok(&["generate", "--seed", "3", "--out", "b/seq.jsonl"], p);
    ok(&["generate", "--seed", "4", "--out", "c/seq.jsonl"], p);
    let read = |s: &str| fs::read(p.join(s).join("seq.jsonl")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert!(p.join("a/config.json").exists());
}

#[test]
fn solve_reports_every_solver() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("problem.json"), r#"{"affinity": [[1, 2], [3, 4]], "threshold": 1.5}"#).unwrap();
    let out = ok(&["solve", "problem.json"], p);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["hungarian"]["objective"], 5.0);
    assert_eq!(v["brute_force"]["objective"], 5.0);
    assert_eq!(v["threshold"], 1.5);
    assert!(v["greedy"].is_object() && v["birth_death"].is_object());
}

#[test]
fn bad_input_exits_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let missing = cli(&["solve", "nope.json"], p);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));

    fs::write(p.join("ragged.json"), r#"{"affinity": [[1, 2], [3]]}"#).unwrap();
    assert_eq!(cli(&["solve", "ragged.json"], p).status.code(), Some(1));

    fs::write(p.join("cfg.json"), r#"{"model": {"bogus": 1}}"#).unwrap();
    assert_eq!(cli(&["generate", "--config", "cfg.json"], p).status.code(), Some(1));

    ok(&["generate", "--out", "seq.jsonl"], p);
    let solver = cli(&["track", "seq.jsonl", "--solver", "magic"], p);
    assert_eq!(solver.status.code(), Some(1));
    let no_ckpt = cli(&["track", "seq.jsonl"], p);
    assert_eq!(no_ckpt.status.code(), Some(1));
}

#[test]
fn gradcheck_passes_on_two_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--instances", "2", "--seed", "5"], dir.path());
    assert!(out.contains("row_softmax"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn train_track_eval_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("cfg.json"),
        r#"{"scenario": {"length": 30}, "train": {"sequences": 2}}"#,
    )
    .unwrap();
    let c = ["--config", "cfg.json"];
    ok(&[&["generate", "--out", "seq.jsonl"][..], &c].concat(), p);
    ok(&[&["train", "--iterations", "200", "--out-dir", "run"][..], &c].concat(), p);
    for f in ["model.ckpt", "history.csv", "config.json"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    ok(
        &[&["track", "seq.jsonl", "--checkpoint", "run/model.ckpt", "--out", "tracks.csv"][..], &c].concat(),
        p,
    );
    assert!(fs::read_to_string(p.join("tracks.csv")).unwrap().starts_with("frame,id,x,y,w,h"));
    ok(&["eval", "seq.jsonl", "tracks.csv", "--out", "report.json"], p);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
    assert!(report["mota"].is_number());
    ok(
        &["plot", "seq.jsonl", "tracks.csv", "--out-dir", "png", "--history", "run/history.csv", "--size", "64"],
        p,
    );
    assert!(p.join("png/loss.png").exists());
    let frames = fs::read_dir(p.join("png")).unwrap().count();
    assert_eq!(frames, 31);

    ok(&["track", "seq.jsonl", "--solver", "oracle", "--out", "oracle.csv"], p);
    let oracle = ok(&["eval", "seq.jsonl", "oracle.csv"], p);
    assert!(oracle.to_lowercase().contains("mota"));
}
