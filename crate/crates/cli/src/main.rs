use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elm_rmt::harness::{self, ExperimentConfig};
use elm_rmt::{Error, Result};

/// Deterministic-equivalent predictions for random-feature ridge regression,
/// checked against Monte Carlo simulation.
#[derive(Parser, Debug)]
#[command(name = "elm-rmt", version, about)]
struct Cli {
    /// Worker threads for the trial pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Theory and simulation errors over the gamma grid.
    Sweep(Common),
    /// Limiting spectral density, one empirical spectrum and the second eigenvector of Phi.
    Density {
        #[command(flatten)]
        common: Common,
        /// Imaginary offset used to invert the Stieltjes transform.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Number of density grid points.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Small-ridge and infinite-width limits.
    Limits(Common),
    /// Audit the closed-form kernels against quadrature.
    KernelCheck {
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.clone_from(out);
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon_threads(threads)?;
    }
    match cli.command {
        Command::Sweep(common) => {
            let cfg = common.load()?;
            let res = harness::run_sweep(&cfg)?;
            println!("gamma  e_train_theory  e_train_mean  e_test_theory  e_test_mean");
            for r in &res.rows {
                println!(
                    "{:.3e}  {:.5}  {:.5}  {:.5}  {:.5}",
                    r.gamma, r.e_train_theory, r.e_train_mean, r.e_test_theory, r.e_test_mean
                );
            }
            done(&cfg.output);
        }
        Command::Density {
            common,
            epsilon,
            points,
        } => {
            let mut cfg = common.load()?;
            cfg.density.epsilon = epsilon.or(cfg.density.epsilon);
            cfg.density.points = points.or(cfg.density.points);
            cfg.validate()?;
            let report = harness::run_density(&cfg)?;
            println!("mass at zero: {:.6}", report.curve.mass_at_zero);
            println!("KS distance to one draw: {:.4}", report.ks_distance);
            println!(
                "second eigenvector class separation: {:.3}",
                report.class_separation()
            );
            done(&cfg.output);
        }
        Command::Limits(common) => {
            let cfg = common.load()?;
            let report = harness::run_limits(&cfg)?;
            println!(
                "rank {} of {}, regime {}",
                report.rank, report.samples, report.regime
            );
            if let Some(d) = report.delta0 {
                println!("delta0 = {d:.6}");
            }
            if let Some(d) = report.big_delta {
                println!("Delta = {d:.6}");
            }
            println!("E_train limit as gamma -> 0: {:.6}", report.e_train_limit);
            println!(
                "E_test limit as n -> infinity: {:.6}",
                report.e_test_infinite_n
            );
            done(&cfg.output);
        }
        Command::KernelCheck {
            pairs,
            dim,
            seed,
            out,
        } => {
            let rows = harness::run_kernel_check(&out, pairs, dim, seed)?;
            for r in &rows {
                let tag = if r.passed() { "ok" } else { "FAIL" };
                println!(
                    "{:<28} max error {:.2e}  {tag}",
                    r.activation, r.max_abs_error
                );
            }
            done(&out);
            if let Some(bad) = rows.iter().find(|r| !r.passed()) {
                log::error!("{} kernel disagrees with quadrature", bad.activation);
                return Err(Error::Stability {
                    what: "closed-form kernel error against quadrature",
                    value: bad.max_abs_error,
                });
            }
        }
    }
    Ok(())
}

fn rayon_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

fn done(dir: &Path) {
    log::info!("outputs written to {}", dir.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
