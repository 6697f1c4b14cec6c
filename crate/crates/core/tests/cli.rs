use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ais-edl"));
    c.env_remove("EDL_SEED");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn flagged(path: &Path) -> BTreeSet<(String, String)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["mmsi", "segment_start_time", "min_norm_uncertainty", "threshold", "flag"]
    );
    rdr.records()
        .map(|r| r.unwrap())
        .filter(|r| &r[4] == "true")
        .map(|r| (r[0].to_string(), r[1].to_string()))
        .collect()
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["synth", "--seed", "7", "--tracks-per-lane", "10", "--gap-tracks", "4", "--output", out];
    run(dir.path(), &args("a.csv"));
    run(dir.path(), &args("b.csv"));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    run(dir.path(), &["synth", "--seed", "8", "--tracks-per-lane", "10", "--output", "c.csv"]);
    assert_ne!(a, fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn detect_at_flags_are_monotone_in_theta() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let graph = ["--set", "dbscan_eps=200", "--set", "dbscan_nmin=10"];
    run(d, &["synth", "--seed", "3", "--tracks-per-lane", "20", "--offset-tracks", "6", "--output", "w.csv"]);
    run(d, &[&graph[..], &["build-graph", "--input", "w.csv", "--output", "g.geojson"]].concat());
    run(d, &["associate", "--input", "w.csv", "--graph", "g.geojson", "--output", "lab.csv"]);
    run(
        d,
        &["--set", "hidden=16", "--set", "epochs=2", "train-regressor", "--input", "lab.csv", "--graph", "g.geojson", "--output", "r.ckpt"],
    );
    for theta in ["0.4", "0.7", "1"] {
        let out = format!("v{theta}.csv");
        run(d, &["detect", "at", "--input", "lab.csv", "--model", "r.ckpt", "--theta-at", theta, "--output", &out]);
    }
    let strict = flagged(&d.join("v0.4.csv"));
    let loose = flagged(&d.join("v0.7.csv"));
    let all = flagged(&d.join("v1.csv"));
    assert!(strict.is_subset(&loose));
    assert!(loose.is_subset(&all));
    // below 1 every chunk whose uncertainty is not constant is flagged
    assert!(!all.is_empty());
}

#[test]
fn dumped_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let first = run(d, &["--set", "tau=30", "--set", "ut_hidden=64,64", "--seed", "11", "--dump-config"]).stdout;
    fs::write(d.join("cfg.txt"), &first).unwrap();
    let second = run(d, &["--config", "cfg.txt", "--dump-config"]).stdout;
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.lines().any(|l| l.trim() == "seed=11"));
    assert!(text.lines().any(|l| l.trim() == "tau=30"));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let seed = |env: Option<&str>, args: &[&str]| {
        let mut c = bin();
        if let Some(e) = env {
            c.env("EDL_SEED", e);
        }
        let out = c.current_dir(dir.path()).args(args).arg("--dump-config").output().unwrap();
        let text = String::from_utf8(out.stdout).unwrap();
        text.lines().find_map(|l| l.trim().strip_prefix("seed=").map(str::to_string)).unwrap()
    };
    fs::write(dir.path().join("c.txt"), "seed=1\n").unwrap();
    assert_eq!(seed(None, &["--config", "c.txt"]), "1");
    assert_eq!(seed(Some("2"), &["--config", "c.txt"]), "2");
    assert_eq!(seed(Some("2"), &["--config", "c.txt", "--set", "seed=3"]), "3");
    assert_eq!(seed(Some("2"), &["--config", "c.txt", "--set", "seed=3", "--seed", "4"]), "4");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| bin().current_dir(d).args(args).output().unwrap().status.code();
    // missing input path and bad config are usage errors
    let missing = bin().current_dir(d).args(["build-graph", "--input", "nope.csv", "--output", "g.geojson"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));
    assert_eq!(code(&["--set", "no_such_key=1", "--dump-config"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    // an unlabelled corpus where a labelled one is expected is a domain error
    run(d, &["synth", "--tracks-per-lane", "5", "--output", "w.csv"]);
    run(d, &["--set", "dbscan_eps=200", "--set", "dbscan_nmin=5", "build-graph", "--input", "w.csv", "--output", "g.geojson"]);
    assert_eq!(code(&["train-regressor", "--input", "w.csv", "--graph", "g.geojson", "--output", "r.ckpt"]), Some(1));
}

#[test]
fn export_plot_writes_feature_collection() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(d, &["synth", "--tracks-per-lane", "10", "--output", "w.csv"]);
    run(d, &["--set", "dbscan_eps=200", "--set", "dbscan_nmin=10", "build-graph", "--input", "w.csv", "--output", "g.geojson"]);
    run(d, &["export-plot", "--graph", "g.geojson", "--input", "w.csv", "--output", "p.geojson"]);
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(d.join("p.geojson")).unwrap()).unwrap();
    assert_eq!(doc["type"], "FeatureCollection");
    let layers: BTreeSet<String> = doc["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["properties"]["layer"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(layers, ["edge", "node", "track"].iter().map(|s| s.to_string()).collect());
}
