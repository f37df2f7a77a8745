use std::path::Path;
use std::process::Command;

use frlhf::algorithms::Algo;
use frlhf::divergence::FDivergence;
use frlhf::harness::experiment::{mean_sd, run_experiment, ExperimentConfig, STEPS_HEADER, SUMMARY_HEADER};
use frlhf::Error;

fn small(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        horizon: 40,
        seeds: vec![0, 1, 2],
        algos: vec![Algo::Optimism, Algo::Uniform, Algo::OptimismRf],
        divergences: vec![FDivergence::ReverseKl, FDivergence::Chi2MixedKl],
        eval_pool_size: 8,
        output: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn read(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (header, r.records().map(Result::unwrap).collect())
}

#[test]
fn steps_and_summary_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(outcome.cells.len(), 3 * 3 * 2);
    assert_eq!(outcome.failures().count(), 0);
    assert!(!dir.path().join("failures.csv").exists());

    let (header, steps) = read(&dir.path().join("steps.csv"));
    assert_eq!(header, STEPS_HEADER);
    assert_eq!(steps.len(), 18 * 40);

    // cumulative regret is the running sum of step regret within each run
    let mut cum = 0.0;
    let mut id = String::new();
    for row in &steps {
        if row[0] != id {
            id = row[0].to_string();
            cum = 0.0;
        }
        cum += row[10].parse::<f64>().unwrap();
        assert!((row[12].parse::<f64>().unwrap() - cum).abs() <= 1e-9);
        assert_eq!(row[11].is_empty(), false);
        if &row[1] == "optimism_rf" {
            assert!(row[7].is_empty() && row[8].is_empty());
        }
    }

    let (header, summary) = read(&dir.path().join("summary.csv"));
    assert_eq!(header, SUMMARY_HEADER);
    assert_eq!(summary.len(), 6 * 40);
    for row in &summary {
        let matching: Vec<&csv::StringRecord> = steps
            .iter()
            .filter(|s| s[1] == row[0] && s[2] == row[1] && s[5] == row[3])
            .collect();
        assert_eq!(matching.len(), 3);
        let step: Vec<f64> = matching.iter().map(|s| s[10].parse().unwrap()).collect();
        let cum: Vec<f64> = matching.iter().map(|s| s[12].parse().unwrap()).collect();
        let (m, sd) = mean_sd(&step);
        let (mc, sdc) = mean_sd(&cum);
        let got: Vec<f64> = (4..8).map(|i| row[i].parse().unwrap()).collect();
        for (a, b) in got.iter().zip([m, sd, mc, sdc]) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    let saved: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(saved.seeds, cfg.seeds);
    assert_eq!(saved.algos, cfg.algos);
}

#[test]
fn empty_algos_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        algos: vec![],
        ..small(dir.path())
    };
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
}

#[test]
fn failing_cells_are_recorded_and_the_grid_continues() {
    let dir = tempfile::tempdir().unwrap();
    // an empty eluder class only breaks the cells that use it
    let cfg = ExperimentConfig {
        backend: frlhf::algorithms::BonusBackend::EluderFinite,
        class_size: 0,
        algos: vec![Algo::Uniform, Algo::Optimism],
        divergences: vec![FDivergence::ReverseKl],
        seeds: vec![0],
        ..small(dir.path())
    };
    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(outcome.failures().count(), 1);
    let (_, failures) = read(&dir.path().join("failures.csv"));
    assert_eq!(&failures[0][1], "optimism");
    let (_, steps) = read(&dir.path().join("steps.csv"));
    assert!(steps.iter().all(|r| &r[1] == "uniform") && steps.len() == 40);
}

#[test]
fn cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("grid.json");
    std::fs::write(
        &config,
        r#"{"horizon": 25, "seeds": [4, 5], "divergences": ["xlogx_minus_logx"], "eval_pool_size": 4}"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_frlhf");
    let run = |out: &str| {
        let status = Command::new(bin)
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .args(["--algo", "derivative,greedy", "--workers", "2"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(dir.path().join(out).join("steps.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 25);
    assert!(text.lines().nth(1).unwrap().starts_with("derivative-xlogx_minus_logx-eta10-s4,"));
}

#[test]
fn cli_rejects_unknown_divergence() {
    let out = Command::new(env!("CARGO_BIN_EXE_frlhf"))
        .args(["run", "--divergence", "total_variation", "--horizon", "2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn cli_check_reports_pass() {
    let out = Command::new(env!("CARGO_BIN_EXE_frlhf"))
        .args(["check", "kkt", "--instances", "50", "--divergence", "reverse_kl,js"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS kkt")).count(), 2);
}
