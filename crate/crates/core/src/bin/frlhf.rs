use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use frlhf::algorithms::{Algo, DEFAULT_ETA};
use frlhf::divergence::FDivergence;
use frlhf::harness::checks::{self, CONSTANT_CONTEXTS};
use frlhf::harness::experiment::{run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "frlhf", version, about = "f-divergence regularized online RLHF simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (algorithm x divergence x seed) grid and write CSV results.
    Run(RunArgs),
    /// Run one of the structural-identity suites.
    Check(CheckArgs),
    /// Print the C and M constants per divergence.
    Constants(ConstantsArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma list or half-open range, e.g. `0,3,7` or `0..5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<Algo>>,
    #[arg(long, value_delimiter = ',')]
    divergence: Option<Vec<FDivergence>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Parallel runs; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Kkt,
    Invariance,
    Gradhess,
    Valdecomp,
    Constants,
}

#[derive(clap::Args)]
struct CheckArgs {
    suite: Suite,
    /// Divergences to check; defaults depend on the suite.
    #[arg(long, value_delimiter = ',')]
    divergence: Option<Vec<FDivergence>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances for the kkt, invariance and constants suites.
    #[arg(long)]
    instances: Option<usize>,
}

#[derive(clap::Args)]
struct ConstantsArgs {
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().context("bad range start")?;
        let b: u64 = b.trim().parse().context("bad range end")?;
        if b <= a {
            bail!("empty seed range `{text}`");
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed `{s}`")))
        .collect()
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = args.out {
        cfg.output = out;
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = parse_seeds(seeds)?;
    }
    if let Some(a) = args.algo {
        cfg.algos = a;
    }
    if let Some(d) = args.divergence {
        cfg.divergences = d;
    }
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    let outcome = run_experiment(&cfg)?;
    let cells = outcome.cells.len();
    let failed = outcome.failures().count();
    for c in outcome.failures() {
        eprintln!("failed {}: {}", c.run_id(cfg.eta), c.result.as_ref().err().map_or("", |e| e));
    }
    for &d in &cfg.divergences {
        for &a in &cfg.algos {
            if let Some(last) = outcome.group(a, d).last() {
                println!(
                    "{a:<12} {d:<17} t={:<5} cum_regret {:.4} ± {:.4}",
                    last.t, last.mean_cum_regret, last.sd_cum_regret
                );
            }
        }
    }
    println!("{} runs, {failed} failed; results in {}", cells, cfg.output.display());
    Ok(failed == 0)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn check(args: CheckArgs) -> anyhow::Result<bool> {
    let default_divs = match args.suite {
        Suite::Gradhess => vec![FDivergence::ReverseKl, FDivergence::Chi2MixedKl],
        _ => FDivergence::ALL.to_vec(),
    };
    let divs = args.divergence.unwrap_or(default_divs);
    let seed = args.seed;
    let mut all = true;
    for d in divs {
        let ok = match args.suite {
            Suite::Kkt => {
                let r = checks::solver_suite(d, args.instances.unwrap_or(1000), seed)?;
                let softmax = r.max_softmax_dev.map(|v| format!(" softmax {v:.2e}")).unwrap_or_default();
                println!(
                    "{} kkt {d}: normalization {:.2e} kkt {:.2e}{softmax}",
                    verdict(r.passes()),
                    r.max_normalization,
                    r.max_kkt
                );
                r.passes()
            }
            Suite::Invariance => {
                let r = checks::invariance_suite(d, args.instances.unwrap_or(1000), seed)?;
                println!(
                    "{} invariance {d}: policy {:.2e} lambda {:.2e}",
                    verdict(r.passes()),
                    r.max_policy_dev,
                    r.max_lambda_dev
                );
                r.passes()
            }
            Suite::Constants => {
                let eta = args.eta.unwrap_or(1.0);
                let r = checks::constants_suite(d, eta, args.instances.unwrap_or(200), seed)?;
                println!(
                    "{} constants {d}: C in [{:.6}, {:.6}] M in [{:.6}, {:.6}] max(M-C) {:.2e}",
                    verdict(r.passes(d)),
                    r.min_c,
                    r.max_c,
                    r.min_m,
                    r.max_m,
                    r.max_m_minus_c
                );
                r.passes(d)
            }
            Suite::Gradhess => {
                let r = checks::gradient_hessian_default(d, args.eta.unwrap_or(DEFAULT_ETA), seed)?;
                println!(
                    "{} gradhess {d}: |grad|inf {:.2e} hessian dev {:.2e} (relative {:.2e})",
                    verdict(r.passes()),
                    r.grad_inf,
                    r.max_abs_dev,
                    r.max_rel_dev
                );
                r.passes()
            }
            Suite::Valdecomp => {
                let r = checks::value_decomposition_sweep(d, args.eta.unwrap_or(DEFAULT_ETA), 50, seed)?;
                let ok = r.violations == 0;
                println!(
                    "{} valdecomp {d}: {} violations of {} worst margin {:.3e}",
                    verdict(ok),
                    r.violations,
                    r.entries.len(),
                    r.worst_margin
                );
                ok
            }
        };
        all &= ok;
    }
    Ok(all)
}

fn constants(args: ConstantsArgs) -> anyhow::Result<bool> {
    println!(
        "eta = {}, {} random classes of 2-5 linear members, {CONSTANT_CONTEXTS} contexts each",
        args.eta, args.instances
    );
    println!("{:<17} {:>10} {:>10} {:>10} {:>10}", "divergence", "C min", "C max", "M min", "M max");
    for d in FDivergence::ALL {
        let r = checks::constants_suite(d, args.eta, args.instances, args.seed)?;
        println!("{:<17} {:>10.6} {:>10.6} {:>10.6} {:>10.6}", d.name(), r.min_c, r.max_c, r.min_m, r.max_m);
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Check(a) => check(a),
        Command::Constants(a) => constants(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
