use std::path::Path;
use std::process::Command;

use rand::Rng;
use shelab::harness::{
    read_replicas_csv, run_campaign, seed_stream, CampaignKind, ExperimentConfig, Overrides, RunOptions,
};
use shelab::noise::NoiseKind;
use shelab::Error;

fn small(kind: CampaignKind, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(kind, extra, Overrides { seed: Some(5), replicas: None }).unwrap()
}

const SMALL_LB: &str = r#"
replicas = 200
windows = [16.0, 32.0]
[grid]
length = 64.0
[lower_bound]
nonvacuous_from = 16.0
sequence_windows = [16.0, 32.0]
"#;

#[test]
fn persistence_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small(CampaignKind::LowerBound, SMALL_LB);
    let result = run_campaign(&cfg, &RunOptions { workers: Some(2), out: Some(out.clone()), force: false }).unwrap();
    let (columns, records) = read_replicas_csv(&out.join("replicas.csv")).unwrap();
    assert_eq!(columns, result.columns);
    assert_eq!(records.len(), result.records.len());
    for (a, b) in records.iter().zip(&result.records) {
        assert_eq!(a.replica, b.replica);
        assert_eq!(a.seed, b.seed);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
    let text = std::fs::read_to_string(out.join("config.json")).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.digest(), result.config_digest);
    for f in ["verdicts.json", "summary.txt", "result.json", "lower_bound.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(out.join("lower_bound.csv")).unwrap();
    assert!(header.starts_with("N,bound,b_n,se\n"));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small(CampaignKind::Dalang, "");
    let opts = RunOptions { workers: Some(1), out: Some(out.clone()), force: false };
    run_campaign(&cfg, &opts).unwrap();
    let before = std::fs::read(out.join("verdicts.json")).unwrap();
    match run_campaign(&cfg, &opts) {
        Err(Error::Refused(msg)) => assert!(msg.contains("same configuration"), "{msg}"),
        other => panic!("expected refusal, got {other:?}"),
    }
    let other = small(CampaignKind::Dalang, "[dalang]\nys = [2.0]\n");
    match run_campaign(&other, &opts) {
        Err(Error::Refused(msg)) => assert!(msg.contains("different configuration"), "{msg}"),
        r => panic!("expected refusal, got {r:?}"),
    }
    assert_eq!(std::fs::read(out.join("verdicts.json")).unwrap(), before);
    run_campaign(&other, &RunOptions { force: true, ..opts }).unwrap();
    assert_ne!(std::fs::read(out.join("verdicts.json")).unwrap(), before);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = small(CampaignKind::LowerBound, SMALL_LB);
    let a = run_campaign(&cfg, &RunOptions { workers: Some(1), ..Default::default() }).unwrap();
    let b = run_campaign(&cfg, &RunOptions { workers: Some(4), ..Default::default() }).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(serde_json::to_string(&a.verdicts).unwrap(), serde_json::to_string(&b.verdicts).unwrap());
    let other = ExperimentConfig::from_toml_str(CampaignKind::LowerBound, &format!("seed = 6\n{SMALL_LB}"), Overrides::default()).unwrap();
    let c = run_campaign(&other, &RunOptions::default());
    assert_ne!(c.unwrap().records, a.records);
}

#[test]
fn replica_streams_are_uncorrelated() {
    let n = 1_000_000;
    let mut a = seed_stream(11, 0, "noise");
    let mut b = seed_stream(11, 1, "noise");
    let mut c = seed_stream(11, 0, "centering");
    let (mut sab, mut sac) = (0.0, 0.0);
    for _ in 0..n {
        let x: f64 = a.random::<f64>() - 0.5;
        let y: f64 = b.random::<f64>() - 0.5;
        let z: f64 = c.random::<f64>() - 0.5;
        sab += x * y;
        sac += x * z;
    }
    // each product has variance 1/144
    let bound = 4.0 / (n as f64).sqrt();
    assert!((12.0 * sab / n as f64).abs() < bound);
    assert!((12.0 * sac / n as f64).abs() < bound);
}

#[test]
fn toml_keys_and_error_reporting() {
    let cfg = small(
        CampaignKind::Clt,
        "[noise]\nkind = \"gaussian\"\nbandwidth = 0.5\n[harness]\nstore_noise = true\n[grid]\nlength = 1024.0\n",
    );
    assert_eq!(cfg.noise_model().unwrap().kind, NoiseKind::Gaussian { bandwidth: 0.5 });
    assert!(cfg.harness.store_noise);
    let exp = small(CampaignKind::Clt, "[noise]\nkind = \"exponential\"\nrate = 2.0\n");
    assert_eq!(exp.noise_model().unwrap().kind, NoiseKind::Exponential { rate: 2.0 });

    let bad = "times = [0.3001]\nbogus = 1\n[noise]\nkind = \"cauchy\"\n[grid]\nlength = 100.0\n";
    match ExperimentConfig::from_toml_str(CampaignKind::Clt, bad, Overrides::default()) {
        Err(Error::Config(problems)) => {
            let all = problems.join("\n");
            assert!(problems.len() >= 3, "{all}");
            assert!(all.contains("bogus"), "{all}");
            assert!(all.contains("cauchy"), "{all}");
        }
        other => panic!("expected config errors, got {other:?}"),
    }
    match ExperimentConfig::from_toml_str(CampaignKind::Clt, "[grid]\nlength = 520.0\n", Overrides::default()) {
        Err(Error::Config(problems)) => assert!(problems.iter().any(|p| p.contains("12√")), "{problems:?}"),
        other => panic!("expected margin error, got {other:?}"),
    }
}

fn shelab(args: &[&str], dir: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_shelab")).args(args).current_dir(dir).output().unwrap().status.code().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(shelab(&["dalang", "--out", "a"], d), 0);
    assert!(d.join("a/dalang.json").exists());
    assert_eq!(shelab(&["dalang", "--out", "a"], d), 2);
    assert_eq!(shelab(&["dalang", "--out", "a", "--force"], d), 0);
    std::fs::write(d.join("bad.toml"), "replicas = 3\nnot_a_key = true\n").unwrap();
    assert_eq!(shelab(&["clt", "--config", "bad.toml", "--out", "b"], d), 2);
    assert!(!d.join("b").exists());
    assert_eq!(shelab(&["clt", "--workers", "0", "--out", "c"], d), 2);
    let failing = format!("{SMALL_LB}delta = 0.5\nr = 5.0\n");
    std::fs::write(d.join("lb.toml"), failing).unwrap();
    assert_eq!(shelab(&["lower-bound", "--config", "lb.toml", "--out", "e", "--seed", "3"], d), 1);
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("e/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 3);
}

mod config_props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn canonical_json_round_trips(seed in any::<u64>(), replicas in 500usize..5000, k in 0usize..10) {
            let kind = CampaignKind::ALL.iter().copied().filter(|c| *c != CampaignKind::Dalang).nth(k).unwrap();
            let ov = Overrides { seed: Some(seed), replicas: Some(replicas.max(ExperimentConfig::preset(kind).replicas)) };
            let cfg = ExperimentConfig::from_toml_str(kind, "", ov).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&cfg.canonical_json()).unwrap();
            prop_assert_eq!(back.canonical_json(), cfg.canonical_json());
            prop_assert_eq!(back.digest(), cfg.digest());
            let bumped = ExperimentConfig::from_toml_str(kind, "", Overrides { seed: Some(seed ^ 1), ..ov }).unwrap();
            prop_assert_ne!(bumped.digest(), cfg.digest());
        }
    }
}
