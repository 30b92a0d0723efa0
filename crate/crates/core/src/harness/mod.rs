//! Experiment configuration, gamma sweeps (theory next to simulation) and file outputs.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::equivalents::{
    e_test_infinite_n, gamma_zero_limits, GramEquivalent, GramSpectrum, ProjectedTargets, Regime,
    TestProjection, DEFAULT_RANK_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::kernels::{Activation, Kernel, KernelMatrix, PhiOracle, QuadratureRule, WeightLaw};
use crate::simulator::{features, run_trials, sample_weights, trial_rng, Dataset, TrialPlan};
use crate::spectrum::{
    default_epsilon, default_grid, density_curve, empirical_spectrum, DensityCurve,
};

pub use config::{DatasetConfig, DensitySettings, ExperimentConfig, GammaGrid, DEFAULT_TRIALS};
pub use output::{fmt_f64, CsvTable, Manifest};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const DENSITY_FILE: &str = "density.csv";
pub const EMPIRICAL_SPECTRUM_FILE: &str = "spectrum_empirical.csv";
pub const EIGENVECTOR_FILE: &str = "phi_eigenvector2.csv";
pub const LIMITS_FILE: &str = "limits.json";
pub const KERNEL_CHECK_FILE: &str = "kernel_check.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Small ridge at which the finite-`gamma` predictions are reported next to the limits.
pub const LIMIT_PROBE_GAMMA: f64 = 1e-6;
pub const KERNEL_CHECK_TOLERANCE: f64 = 1e-6;

/// Everything about the dataset that does not depend on `gamma` or on `W`.
pub struct Theory {
    pub dataset: Dataset,
    pub kernel: Kernel,
    pub phi: KernelMatrix,
    pub spectrum: GramSpectrum,
    pub cross: KernelMatrix,
    pub test: TestProjection,
    pub targets: ProjectedTargets,
}

impl Theory {
    pub fn new(dataset: Dataset, activation: Activation, law: WeightLaw) -> Result<Self> {
        let kernel = Kernel::new(activation, law)?;
        let phi = kernel.gram(&dataset.x)?;
        let spectrum = GramSpectrum::new(&phi)?;
        let (x_test, y_test) = dataset.test_or_train();
        let cross = kernel.matrix(&dataset.x, x_test)?;
        let mut test_trace = 0.0;
        for col in x_test.column_iter() {
            let c = col.as_slice();
            test_trace += kernel.entry(c, c)?;
        }
        let test = spectrum.project_test(&dataset.y, y_test, &cross, test_trace)?;
        let targets = spectrum.project_targets(&dataset.y)?;
        Ok(Theory {
            dataset,
            kernel,
            phi,
            spectrum,
            cross,
            test,
            targets,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Theory::new(cfg.dataset.load()?, cfg.activation, cfg.weights)
    }

    /// `(delta, E_train_bar, E_test_bar)` at `gamma` for `n` neurons.
    pub fn predict(&self, neurons: usize, gamma: f64) -> Result<(f64, f64, f64)> {
        let eq = GramEquivalent::new(&self.spectrum, neurons, gamma)?;
        Ok((
            eq.delta(),
            eq.e_train_bar_projected(&self.targets),
            eq.e_test_bar(&self.test),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub delta: f64,
    pub e_train_theory: f64,
    pub e_test_theory: f64,
    pub e_train_mean: f64,
    pub e_train_std: f64,
    pub e_test_mean: f64,
    pub e_test_std: f64,
    pub trials: usize,
}

impl SweepRow {
    pub fn e_train_se(&self) -> f64 {
        self.e_train_std / (self.trials as f64).sqrt()
    }

    pub fn e_test_se(&self) -> f64 {
        self.e_test_std / (self.trials as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
}

/// Theory and simulation for every `gamma` of the grid, without touching the file system.
pub fn compute_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let start = Instant::now();
    let theory = Theory::from_config(cfg)?;
    sweep_with(cfg, &theory, start)
}

fn sweep_with(cfg: &ExperimentConfig, theory: &Theory, start: Instant) -> Result<SweepResult> {
    let gammas = cfg.gamma.values();
    let predictions = gammas
        .iter()
        .map(|&g| theory.predict(cfg.neurons, g))
        .collect::<Result<Vec<_>>>()?;
    let ds = &theory.dataset;
    let (x_test, y_test) = ds.test_or_train();
    let plan = TrialPlan {
        x: &ds.x,
        y: &ds.y,
        x_test,
        y_test,
        activation: cfg.activation,
        law: cfg.weights,
        neurons: cfg.neurons,
        gammas: &gammas,
        trials: cfg.trials,
        seed: cfg.seed,
    };
    let (summary, _) = run_trials(&plan)?;
    let rows = summary
        .iter()
        .zip(&predictions)
        .map(|(s, &(delta, train, test))| SweepRow {
            gamma: s.gamma,
            delta,
            e_train_theory: train,
            e_test_theory: test,
            e_train_mean: s.train.mean(),
            e_train_std: s.train.std(),
            e_test_mean: s.test.mean(),
            e_test_std: s.test.std(),
            trials: s.train.count() as usize,
        })
        .collect();
    Ok(SweepResult {
        rows,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

fn sweep_table(result: &SweepResult) -> CsvTable<'static> {
    CsvTable {
        header: &[
            "gamma",
            "delta",
            "e_train_theory",
            "e_test_theory",
            "e_train_mean",
            "e_train_std",
            "e_test_mean",
            "e_test_std",
            "trials",
        ],
        comments: vec![("seed".into(), result.seed.to_string())],
        rows: result
            .rows
            .iter()
            .map(|r| {
                let mut row: Vec<String> = [
                    r.gamma,
                    r.delta,
                    r.e_train_theory,
                    r.e_test_theory,
                    r.e_train_mean,
                    r.e_train_std,
                    r.e_test_mean,
                    r.e_test_std,
                ]
                .iter()
                .map(|&v| fmt_f64(v))
                .collect();
                row.push(r.trials.to_string());
                row
            })
            .collect(),
    }
}

fn manifest(
    command: &str,
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    start: Instant,
    outputs: Vec<PathBuf>,
    extra: serde_json::Value,
) -> Result<Manifest> {
    let json = |e: serde_json::Error| Error::Config(e.to_string());
    Ok(Manifest {
        command: command.into(),
        config: serde_json::to_value(cfg).map_err(json)?,
        config_hash: cfg.hash()?,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        outputs,
        dataset: serde_json::to_value(&dataset.provenance).map_err(json)?,
        extra,
    })
}

/// Full sweep: writes `sweep.csv`, the optional density/limits outputs and `manifest.json`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let start = Instant::now();
    let theory = Theory::from_config(cfg)?;
    let result = sweep_with(cfg, &theory, start)?;
    let dir = &cfg.output;
    output::ensure_dir(dir)?;
    let hash = cfg.hash()?;
    let mut outputs = vec![PathBuf::from(SWEEP_FILE)];
    sweep_table(&result).write(&dir.join(SWEEP_FILE), &hash)?;
    let mut extra = serde_json::Map::new();
    if cfg.compute_density {
        let report = density_with(cfg, &theory)?;
        outputs.extend(write_density(&report, dir, &hash)?);
        extra.insert("density".into(), density_summary(&report));
    }
    if cfg.compute_limits {
        // A degenerate limit (rank(Phi) == n) should not discard a finished sweep.
        match limits_with(cfg, &theory) {
            Ok(report) => {
                output::write_json(&dir.join(LIMITS_FILE), &report)?;
                outputs.push(PathBuf::from(LIMITS_FILE));
                extra.insert(
                    "limits".into(),
                    serde_json::to_value(&report).unwrap_or_default(),
                );
            }
            Err(e @ (Error::Stability { .. } | Error::Convergence { .. })) => {
                log::warn!("limits skipped: {e}");
                extra.insert(
                    "limits".into(),
                    serde_json::json!({ "error": e.to_string() }),
                );
            }
            Err(e) => return Err(e),
        }
    }
    let m = manifest("sweep", cfg, &theory.dataset, start, outputs, extra.into())?;
    output::write_json(&dir.join(MANIFEST_FILE), &m)?;
    Ok(result)
}

/// Theoretical density, one empirical spectrum and the second eigenvector of `Phi`.
#[derive(Clone, Debug)]
pub struct DensityReport {
    pub curve: DensityCurve,
    pub empirical: Vec<f64>,
    pub ks_distance: f64,
    pub eigenvector2: Vec<f64>,
    /// First target row, aligned with `eigenvector2`.
    pub labels: Vec<f64>,
}

impl DensityReport {
    /// Separation of the second eigenvector between the two label groups.
    pub fn class_separation(&self) -> f64 {
        class_separation(&self.eigenvector2, &self.labels)
    }
}

/// `|mean(v | label < 0) - mean(v | label >= 0)|` over the pooled within-group standard deviation.
pub fn class_separation(v: &[f64], labels: &[f64]) -> f64 {
    use crate::stats::Welford;
    let neg: Welford = v
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l < 0.0)
        .map(|(x, _)| *x)
        .collect();
    let pos: Welford = v
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l >= 0.0)
        .map(|(x, _)| *x)
        .collect();
    let pooled = (0.5 * (neg.variance() + pos.variance())).sqrt();
    (neg.mean() - pos.mean()).abs() / pooled
}

pub fn compute_density(cfg: &ExperimentConfig) -> Result<DensityReport> {
    density_with(cfg, &Theory::from_config(cfg)?)
}

fn density_with(cfg: &ExperimentConfig, theory: &Theory) -> Result<DensityReport> {
    let eig = theory.spectrum.eigenvalues();
    let n = cfg.neurons;
    let eps = cfg
        .density
        .epsilon
        .unwrap_or_else(|| default_epsilon(eig, n));
    let grid = default_grid(eig, n, cfg.density.points());
    let curve = density_curve(eig, n, &grid, eps)?;
    let mut rng = trial_rng(cfg.seed, 0);
    let w = sample_weights(cfg.weights, n, theory.dataset.dim(), &mut rng)?;
    let empirical = empirical_spectrum(&features(&w, &theory.dataset.x, cfg.activation)?);
    let ks_distance = curve.ks_distance(&empirical);
    let u = theory.spectrum.eigenvectors();
    let eigenvector2 = if u.ncols() >= 2 {
        u.column(1).iter().copied().collect()
    } else {
        vec![0.0; u.nrows()]
    };
    Ok(DensityReport {
        curve,
        empirical,
        ks_distance,
        eigenvector2,
        labels: theory.dataset.y.row(0).iter().copied().collect(),
    })
}

fn density_summary(r: &DensityReport) -> serde_json::Value {
    serde_json::json!({
        "mass_at_zero": r.curve.mass_at_zero,
        "epsilon": r.curve.epsilon,
        "total_mass": r.curve.total_mass(),
        "ks_distance": r.ks_distance,
        "eigenvector2_class_separation": r.class_separation(),
    })
}

fn write_density(r: &DensityReport, dir: &Path, hash: &str) -> Result<Vec<PathBuf>> {
    CsvTable {
        header: &["x", "density"],
        comments: vec![
            ("mass_at_zero".into(), fmt_f64(r.curve.mass_at_zero)),
            ("epsilon".into(), fmt_f64(r.curve.epsilon)),
        ],
        rows: r
            .curve
            .grid
            .iter()
            .zip(&r.curve.density)
            .map(|(&x, &d)| vec![fmt_f64(x), fmt_f64(d)])
            .collect(),
    }
    .write(&dir.join(DENSITY_FILE), hash)?;
    CsvTable {
        header: &["eigenvalue"],
        comments: vec![("ks_distance".into(), fmt_f64(r.ks_distance))],
        rows: r.empirical.iter().map(|&l| vec![fmt_f64(l)]).collect(),
    }
    .write(&dir.join(EMPIRICAL_SPECTRUM_FILE), hash)?;
    CsvTable {
        header: &["sample", "target", "value"],
        comments: vec![],
        rows: r
            .eigenvector2
            .iter()
            .zip(&r.labels)
            .enumerate()
            .map(|(k, (&v, &l))| vec![k.to_string(), fmt_f64(l), fmt_f64(v)])
            .collect(),
    }
    .write(&dir.join(EIGENVECTOR_FILE), hash)?;
    Ok(vec![
        PathBuf::from(DENSITY_FILE),
        PathBuf::from(EMPIRICAL_SPECTRUM_FILE),
        PathBuf::from(EIGENVECTOR_FILE),
    ])
}

/// Writes the density outputs and `manifest.json`.
pub fn run_density(cfg: &ExperimentConfig) -> Result<DensityReport> {
    let start = Instant::now();
    let theory = Theory::from_config(cfg)?;
    let report = density_with(cfg, &theory)?;
    output::ensure_dir(&cfg.output)?;
    let outputs = write_density(&report, &cfg.output, &cfg.hash()?)?;
    let m = manifest(
        "density",
        cfg,
        &theory.dataset,
        start,
        outputs,
        density_summary(&report),
    )?;
    output::write_json(&cfg.output.join(MANIFEST_FILE), &m)?;
    Ok(report)
}

/// Small-ridge and infinite-width limits next to finite-`gamma` predictions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitsReport {
    pub neurons: usize,
    pub samples: usize,
    pub rank: usize,
    /// `"rank_below_neurons"` or `"rank_above_neurons"`.
    pub regime: String,
    pub delta0: Option<f64>,
    pub big_delta: Option<f64>,
    pub e_train_limit: f64,
    pub ambiguous_rank: bool,
    pub e_test_infinite_n: f64,
    pub pseudo_inverse: bool,
    pub probe_gamma: f64,
    pub e_train_at_probe: f64,
    pub e_test_at_probe: f64,
    pub gamma_min: f64,
    pub e_train_at_gamma_min: f64,
    pub e_test_at_gamma_min: f64,
}

pub fn compute_limits(cfg: &ExperimentConfig) -> Result<LimitsReport> {
    limits_with(cfg, &Theory::from_config(cfg)?)
}

fn limits_with(cfg: &ExperimentConfig, theory: &Theory) -> Result<LimitsReport> {
    let n = cfg.neurons;
    let lim = gamma_zero_limits(
        &theory.spectrum,
        n,
        &theory.dataset.y,
        DEFAULT_RANK_TOLERANCE,
    )?;
    let inf = e_test_infinite_n(&theory.spectrum, &theory.test)?;
    let (regime, delta0, big_delta) = match lim.regime {
        Regime::RankBelowNeurons { delta0 } => ("rank_below_neurons", Some(delta0), None),
        Regime::RankAboveNeurons { big_delta } => ("rank_above_neurons", None, Some(big_delta)),
    };
    let (_, train_probe, test_probe) = theory.predict(n, LIMIT_PROBE_GAMMA)?;
    let (_, train_min, test_min) = theory.predict(n, cfg.gamma.min)?;
    Ok(LimitsReport {
        neurons: n,
        samples: theory.spectrum.size(),
        rank: lim.rank,
        regime: regime.into(),
        delta0,
        big_delta,
        e_train_limit: lim.e_train_limit,
        ambiguous_rank: lim.ambiguous_rank,
        e_test_infinite_n: inf.e_test,
        pseudo_inverse: inf.pseudo_inverse,
        probe_gamma: LIMIT_PROBE_GAMMA,
        e_train_at_probe: train_probe,
        e_test_at_probe: test_probe,
        gamma_min: cfg.gamma.min,
        e_train_at_gamma_min: train_min,
        e_test_at_gamma_min: test_min,
    })
}

/// Writes `limits.json` and `manifest.json`.
pub fn run_limits(cfg: &ExperimentConfig) -> Result<LimitsReport> {
    let start = Instant::now();
    let theory = Theory::from_config(cfg)?;
    let report = limits_with(cfg, &theory)?;
    output::ensure_dir(&cfg.output)?;
    output::write_json(&cfg.output.join(LIMITS_FILE), &report)?;
    let extra = serde_json::to_value(&report).unwrap_or_default();
    let m = manifest(
        "limits",
        cfg,
        &theory.dataset,
        start,
        vec![LIMITS_FILE.into()],
        extra,
    )?;
    output::write_json(&cfg.output.join(MANIFEST_FILE), &m)?;
    Ok(report)
}

/// Closed form against the quadrature oracle for one activation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelCheckRow {
    pub activation: String,
    pub pairs: usize,
    pub max_abs_error: f64,
    pub max_refinement_gap: f64,
    pub oracle_converged: bool,
}

impl KernelCheckRow {
    pub fn passed(&self) -> bool {
        self.max_abs_error <= KERNEL_CHECK_TOLERANCE
    }
}

/// Random pairs with norms uniform in `[0, max_norm]` and Gaussian directions.
pub fn random_pairs(
    count: usize,
    dim: usize,
    max_norm: f64,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = max_norm * rng.random::<f64>();
        v.into_iter().map(|x| x * r / norm).collect::<Vec<f64>>()
    };
    (0..count)
        .map(|_| (draw(&mut rng), draw(&mut rng)))
        .collect()
}

/// Compares every closed-form Gaussian-weight kernel (and one quadratic) with the oracle.
pub fn kernel_check(pairs: usize, dim: usize, seed: u64) -> Result<Vec<KernelCheckRow>> {
    if pairs == 0 || dim == 0 {
        return Err(Error::Config(
            "kernel check needs pairs >= 1 and dim >= 1".into(),
        ));
    }
    let samples = random_pairs(pairs, dim, 2.0, seed);
    let poly = Activation::Poly2 {
        zeta2: 0.7,
        zeta1: -0.3,
        zeta0: 0.5,
    };
    Activation::TABLE
        .iter()
        .chain(std::iter::once(&poly))
        .map(|&act| {
            let kernel = Kernel::new(act, WeightLaw::Gaussian)?;
            let oracle = PhiOracle::new(QuadratureRule::default_for(&act));
            let mut row = KernelCheckRow {
                activation: act.to_string(),
                pairs,
                max_abs_error: 0.0,
                max_refinement_gap: 0.0,
                oracle_converged: true,
            };
            for (a, b) in &samples {
                let exact = kernel.entry(a, b)?;
                let est = oracle.evaluate(a, b, |t| act.apply(t))?;
                row.max_abs_error = row.max_abs_error.max((exact - est.value).abs());
                row.max_refinement_gap = row.max_refinement_gap.max(est.refinement_gap);
                row.oracle_converged &= est.converged;
            }
            Ok(row)
        })
        .collect()
}

/// Writes `kernel_check.csv` into `dir`.
pub fn run_kernel_check(
    dir: &Path,
    pairs: usize,
    dim: usize,
    seed: u64,
) -> Result<Vec<KernelCheckRow>> {
    let rows = kernel_check(pairs, dim, seed)?;
    output::ensure_dir(dir)?;
    let tag = format!("kernel-check pairs={pairs} dim={dim} seed={seed}");
    let hash: String = {
        use sha2::{Digest, Sha256};
        Sha256::digest(tag.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    };
    CsvTable {
        header: &[
            "activation",
            "pairs",
            "max_abs_error",
            "max_refinement_gap",
            "oracle_converged",
            "passed",
        ],
        comments: vec![("check".into(), tag)],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.activation.clone(),
                    r.pairs.to_string(),
                    fmt_f64(r.max_abs_error),
                    fmt_f64(r.max_refinement_gap),
                    r.oracle_converged.to_string(),
                    r.passed().to_string(),
                ]
            })
            .collect(),
    }
    .write(&dir.join(KERNEL_CHECK_FILE), &hash)?;
    Ok(rows)
}

/// Dense helper for callers that want `Phi_XhatXhat` explicitly.
pub fn test_gram(theory: &Theory) -> Result<KernelMatrix> {
    let (x_test, _) = theory.dataset.test_or_train();
    theory.kernel.gram(x_test)
}
