use std::path::Path;
use std::process::{Command, Output};

use gstds::format::{load_featureset, Format};
use sha2::{Digest, Sha256};

fn gstds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gstds")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn shipped_config() -> String {
    format!("{}/configs/synthetic.cfg", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn help_for_every_subcommand() {
    let flags: [(&str, &[&str]); 7] = [
        ("schedule", &["--policy", "--mean", "--max", "--min", "--steps", "--steepness", "--out", "--config", "--set"]),
        ("calibrate", &["--mean", "--max", "--min", "--steps", "--steepness", "--out"]),
        ("select", &["--features", "--batch-size", "--ratio", "--seed", "--weights-mode", "--dump-spectral", "--out"]),
        ("train", &["--config", "--set", "--method", "--seed", "--out"]),
        ("compare", &["--config", "--set", "--seeds", "--with-projection", "--out"]),
        ("report", &["--input", "--format", "--out"]),
        ("synth", &["--classes", "--per-class", "--dim", "--separation", "--seed", "--format", "--out"]),
    ];
    for (sub, expected) in flags {
        let o = gstds(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        let text = stdout(&o);
        for f in expected {
            assert!(text.contains(f), "{sub} --help lacks {f}");
        }
    }
    assert_eq!(gstds(&["--help"]).status.code(), Some(0));
    assert_eq!(gstds(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    for args in [&["schedule", "--bogus"][..], &["frobnicate"], &[], &["schedule", "--steps", "many"]] {
        let o = gstds(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_exit_two() {
    let o = gstds(&["schedule", "--policy", "sigmoid", "--mean", "0.95", "--max", "0.88", "--min", "0.18"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
    let o = gstds(&["select", "--features", "/nonexistent/file.gstd"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gstds(&["train", "--set", "nosuch.key=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn schedule_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sched.csv");
    let args = ["schedule", "--policy", "sigmoid", "--mean", "0.3", "--max", "0.88", "--min", "0.18", "--steps", "1000", "--out"];
    let o = gstds(&[&args[..], &[out.to_str().unwrap()]].concat());
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,ratio"));
    let ratios: Vec<f64> = lines.map(|l| l.split_once(',').unwrap().1.parse().unwrap()).collect();
    assert_eq!(ratios.len(), 1000);
    let mean = ratios.iter().sum::<f64>() / 1000.0;
    assert!((mean - 0.3).abs() < 1e-3, "{mean}");
    assert!(ratios.iter().all(|r| (0.18..=0.88).contains(r)));

    let again = dir.path().join("again.csv");
    gstds(&[&args[..], &[again.to_str().unwrap()]].concat());
    assert_eq!(digest(&out), digest(&again));
}

#[test]
fn calibrate_prints_parameters() {
    let o = gstds(&["calibrate", "--steps", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["discrete_mean"].as_f64().unwrap() - 0.3).abs() < 1e-3);
    assert_eq!(v["params"]["a"].as_f64(), Some(0.18));
    assert!(v["saturation_gap"].as_f64().unwrap() < 0.02);
}

#[test]
fn synth_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.gstd");
    let b = dir.path().join("b.gstd");
    for p in [&a, &b] {
        let o = gstds(&["synth", "--seed", "0", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(digest(&a), digest(&b));
    let fs = load_featureset(&a, Format::Binary).unwrap();
    assert_eq!((fs.len(), fs.class_count(), fs.dim()), (6000, 20, 64));

    let c = dir.path().join("c.gstd");
    gstds(&["synth", "--seed", "1", "--out", c.to_str().unwrap()]);
    assert_ne!(digest(&a), digest(&c));

    let flat = dir.path().join("flat.csv");
    let o = gstds(&["synth", "--separation", "0", "--classes", "3", "--per-class", "5", "--out", flat.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert_eq!(load_featureset(&flat, Format::Csv).unwrap().len(), 15);

    let o = gstds(&["synth", "--classes", "1", "--out", flat.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn select_at_full_ratio_lists_every_id() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy.gstd");
    gstds(&["synth", "--classes", "2", "--per-class", "5", "--dim", "3", "--out", toy.to_str().unwrap()]);
    let o = gstds(&["select", "--features", toy.to_str().unwrap(), "--batch-size", "4", "--ratio", "1.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut ids: Vec<u64> = Vec::new();
    for line in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let batch: Vec<u64> = serde_json::from_value(v["batch_ids"].clone()).unwrap();
        let mut chosen: Vec<u64> = serde_json::from_value(v["exploit_ids"].clone()).unwrap();
        chosen.extend(serde_json::from_value::<Vec<u64>>(v["explore_ids"].clone()).unwrap());
        chosen.sort_unstable();
        let mut batch_sorted = batch.clone();
        batch_sorted.sort_unstable();
        assert_eq!(chosen, batch_sorted);
        ids.extend(batch);
    }
    ids.sort_unstable();
    assert_eq!(ids, (0..10).collect::<Vec<_>>());

    let dump = dir.path().join("spectral.txt");
    let sel = dir.path().join("sel.jsonl");
    let args = |out: &Path| {
        gstds(&[
            "select", "--features", toy.to_str().unwrap(), "--batch-size", "4", "--ratio", "0.5", "--seed", "9",
            "--dump-spectral", dump.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ])
    };
    assert_eq!(args(&sel).status.code(), Some(0));
    let sel2 = dir.path().join("sel2.jsonl");
    args(&sel2);
    assert_eq!(digest(&sel), digest(&sel2));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.contains("# batch 0") && text.contains("laplacian") && text.contains("lambda2"));
}

#[test]
fn compare_on_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = gstds(&[
        "compare", "--config", &shipped_config(), "--seeds", "0", "--set", "train.epochs=2", "--with-projection",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let methods: Vec<&str> = report["runs"].as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["standard", "gstds", "random_filter"]);
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert!(report["flops_convention"].as_str().unwrap().contains("backward"));
    assert_eq!(report["config"]["train"]["epochs"], 2);
    assert!(out.join("projections.csv").exists());

    let csv = gstds(&["report", "--input", out.join("report.json").to_str().unwrap(), "--format", "csv"]);
    assert_eq!(stdout(&csv), std::fs::read_to_string(out.join("metrics.csv")).unwrap());
    let json = gstds(&["report", "--input", out.join("report.json").to_str().unwrap()]);
    assert_eq!(json.stdout, std::fs::read(out.join("report.json")).unwrap());

    let single = dir.path().join("single");
    let o = gstds(&[
        "train", "--config", &shipped_config(), "--method", "standard", "--seed", "4", "--set", "train.epochs=1",
        "--out", single.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(single.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"][0]["seed"], 4);
    assert_eq!(report["runs"][0]["data_usage"], 1.0);
}
