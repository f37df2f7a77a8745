//! Runs the (algorithm × divergence × seed) grid and writes its CSV outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{self, Algo, BonusBackend, RunResult, RunnerConfig, StepRecord, DEFAULT_ETA};
use crate::divergence::FDivergence;
use crate::env::{EnvConfig, Environment};
use crate::error::{Error, Result};

pub const STEPS_HEADER: [&str; 15] = [
    "run_id",
    "algo",
    "divergence",
    "eta",
    "seed",
    "t",
    "action_i",
    "action_j",
    "label",
    "branch",
    "step_subopt_sampled",
    "step_subopt_pool",
    "cum_regret",
    "lambda_residual",
    "mle_grad_norm",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "algo",
    "divergence",
    "eta",
    "t",
    "mean_step_subopt",
    "sd_step_subopt",
    "mean_cum_regret",
    "sd_cum_regret",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: usize,
    pub m: usize,
    pub eta: f64,
    #[serde(alias = "T")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub algos: Vec<Algo>,
    pub divergences: Vec<FDivergence>,
    pub beta: f64,
    pub xi: f64,
    pub delta: f64,
    pub noise_sigma: f64,
    /// Contexts in the smoothing pool; 0 leaves `step_subopt_pool` empty.
    pub eval_pool_size: usize,
    pub backend: BonusBackend,
    pub class_size: usize,
    pub mle_reg: f64,
    /// Parallel runs; 0 uses every available core.
    pub workers: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let runner = RunnerConfig::default();
        Self {
            k: 5,
            m: 10,
            eta: DEFAULT_ETA,
            horizon: runner.horizon,
            seeds: (0..5).collect(),
            algos: Algo::ALL.to_vec(),
            divergences: vec![FDivergence::ReverseKl, FDivergence::Chi2MixedKl, FDivergence::XlogxMinusLogx],
            beta: runner.beta,
            xi: runner.xi,
            delta: runner.delta,
            noise_sigma: 0.1,
            eval_pool_size: runner.pool_size,
            backend: runner.backend,
            class_size: runner.class_size,
            mle_reg: runner.mle_reg,
            workers: 0,
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The runner configuration of one grid cell.
    pub fn runner(&self, algo: Algo, divergence: FDivergence, seed: u64) -> RunnerConfig {
        // The eluder backend only covers the optimism learners.
        let backend = match algo {
            Algo::Optimism | Algo::OptimismRf => self.backend,
            _ => BonusBackend::Linear,
        };
        RunnerConfig {
            algo,
            divergence,
            eta: self.eta,
            horizon: self.horizon,
            beta: self.beta,
            backend,
            xi: self.xi,
            delta: self.delta,
            class_size: self.class_size,
            mle_reg: self.mle_reg,
            seed,
            pool_size: self.eval_pool_size,
            ..RunnerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algos.is_empty() {
            return Err(Error::Config("algos list is empty".into()));
        }
        if self.divergences.is_empty() {
            return Err(Error::Config("divergences list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        if self.k == 0 || self.m < 2 {
            return Err(Error::Config(format!("need k >= 1 and m >= 2, got k={} m={}", self.k, self.m)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        self.runner(self.algos[0], self.divergences[0], self.seeds[0]).validate()
    }

    /// Grid cells in output order: divergence, then algorithm, then seed.
    pub fn cells(&self) -> Vec<(FDivergence, Algo, u64)> {
        let mut out = Vec::new();
        for &d in &self.divergences {
            for &a in &self.algos {
                for &s in &self.seeds {
                    out.push((d, a, s));
                }
            }
        }
        out
    }
}

pub fn run_id(algo: Algo, divergence: FDivergence, eta: f64, seed: u64) -> String {
    format!("{algo}-{divergence}-eta{eta}-s{seed}")
}

#[derive(Debug)]
pub struct CellOutcome {
    pub algo: Algo,
    pub divergence: FDivergence,
    pub seed: u64,
    pub result: std::result::Result<RunResult, String>,
}

impl CellOutcome {
    pub fn run_id(&self, eta: f64) -> String {
        run_id(self.algo, self.divergence, eta, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algo: Algo,
    pub divergence: FDivergence,
    pub eta: f64,
    pub t: usize,
    pub mean_step_subopt: f64,
    pub sd_step_subopt: f64,
    pub mean_cum_regret: f64,
    pub sd_cum_regret: f64,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub cells: Vec<CellOutcome>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(|c| c.result.is_err())
    }

    /// Summary rows of one (algorithm, divergence) group, ordered by `t`.
    pub fn group(&self, algo: Algo, divergence: FDivergence) -> Vec<&SummaryRow> {
        self.summary.iter().filter(|r| r.algo == algo && r.divergence == divergence).collect()
    }
}

/// Sample mean and standard deviation (`n − 1` denominator, 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_cell(cfg: &ExperimentConfig, divergence: FDivergence, algo: Algo, seed: u64) -> CellOutcome {
    let result = Environment::new(EnvConfig {
        k: cfg.k,
        m: cfg.m,
        noise_sigma: cfg.noise_sigma,
        seed,
    })
    .and_then(|env| algorithms::run(&env, &cfg.runner(algo, divergence, seed)))
    .map_err(|e| e.to_string());
    CellOutcome {
        algo,
        divergence,
        seed,
        result,
    }
}

/// Runs the grid without touching the filesystem.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let cells = cfg.cells();
    let go = || -> Vec<CellOutcome> { cells.par_iter().map(|&(d, a, s)| run_cell(cfg, d, a, s)).collect() };
    let outcomes = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?
            .install(go)
    } else {
        go()
    };
    let summary = summarize(cfg, &outcomes);
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        cells: outcomes,
        summary,
    })
}

fn summarize(cfg: &ExperimentConfig, cells: &[CellOutcome]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &d in &cfg.divergences {
        for &a in &cfg.algos {
            let runs: Vec<&[StepRecord]> = cells
                .iter()
                .filter(|c| c.algo == a && c.divergence == d)
                .filter_map(|c| c.result.as_ref().ok())
                .map(|r| r.steps.as_slice())
                .collect();
            let Some(len) = runs.iter().map(|s| s.len()).min() else { continue };
            for idx in 0..len {
                let step: Vec<f64> = runs.iter().map(|s| s[idx].step_subopt_sampled).collect();
                let cum: Vec<f64> = runs.iter().map(|s| s[idx].cum_regret).collect();
                let (mean_step_subopt, sd_step_subopt) = mean_sd(&step);
                let (mean_cum_regret, sd_cum_regret) = mean_sd(&cum);
                rows.push(SummaryRow {
                    algo: a,
                    divergence: d,
                    eta: cfg.eta,
                    t: runs[0][idx].t,
                    mean_step_subopt,
                    sd_step_subopt,
                    mean_cum_regret,
                    sd_cum_regret,
                });
            }
        }
    }
    rows
}

/// Float cell with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_steps(path: &Path, eta: f64, cells: &[CellOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(STEPS_HEADER)?;
    for cell in cells {
        let Ok(run) = &cell.result else { continue };
        let id = cell.run_id(eta);
        for s in &run.steps {
            w.write_record([
                id.clone(),
                cell.algo.to_string(),
                cell.divergence.to_string(),
                fmt_f64(eta),
                cell.seed.to_string(),
                s.t.to_string(),
                s.action_i.to_string(),
                opt(s.action_j),
                opt(s.label),
                opt(s.branch.map(|b| b.as_str())),
                fmt_f64(s.step_subopt_sampled),
                opt(s.step_subopt_pool.map(fmt_f64)),
                fmt_f64(s.cum_regret),
                fmt_f64(s.lambda_residual),
                opt(s.mle_grad_norm.map(fmt_f64)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.algo.to_string(),
            r.divergence.to_string(),
            fmt_f64(r.eta),
            r.t.to_string(),
            fmt_f64(r.mean_step_subopt),
            fmt_f64(r.sd_step_subopt),
            fmt_f64(r.mean_cum_regret),
            fmt_f64(r.sd_cum_regret),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the grid and writes `steps.csv`, `summary.csv`, `config.json` and,
/// when some cell failed, `failures.csv` under `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dir = &cfg.output;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    let outcome = run_grid(cfg)?;
    write_steps(&dir.join("steps.csv"), cfg.eta, &outcome.cells)?;
    write_summary(&dir.join("summary.csv"), &outcome.summary)?;
    let failures_path = dir.join("failures.csv");
    if outcome.failures().next().is_some() {
        let mut w = csv::Writer::from_path(&failures_path)?;
        w.write_record(["run_id", "algo", "divergence", "seed", "error"])?;
        for c in outcome.failures() {
            let err = c.result.as_ref().err().cloned().unwrap_or_default();
            w.write_record([c.run_id(cfg.eta), c.algo.to_string(), c.divergence.to_string(), c.seed.to_string(), err])?;
        }
        w.flush()?;
    } else if failures_path.exists() {
        fs::remove_file(&failures_path)?;
    }
    Ok(outcome)
}
