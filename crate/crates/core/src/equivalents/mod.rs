//! Deterministic equivalents for the ridge resolvent `Q = (Sigma'Sigma/T + gamma I_T)^-1`.
//!
//! Everything here is a spectral functional of `Phi`: the eigendecomposition
//! is computed once in [`GramSpectrum`] and every `gamma` afterwards costs
//! `O(T)` for the fixed point plus `O(dT)` (training) or `O(d T T_hat)` (test).

mod limits;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;

pub use limits::{
    e_test_infinite_n, gamma_zero_limits, InfiniteWidthLimit, Regime, ZeroRidgeLimit,
    CONDITION_LIMIT, DEFAULT_RANK_TOLERANCE,
};

/// Stop rule for the `delta` Picard iteration (relative).
pub const DELTA_TOLERANCE: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 100_000;
/// Eigenvalues of `Phi` above `-NEGATIVE_EIGEN_TOLERANCE * lambda_max` are clipped to
/// zero; anything more negative means the kernel is not a second-moment matrix.
pub const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-8;

/// Eigendecomposition of a symmetric PSD `Phi`, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct GramSpectrum {
    phi: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl GramSpectrum {
    pub fn new(phi: &KernelMatrix) -> Result<Self> {
        if !phi.symmetric || !phi.is_square() {
            return Err(Error::Dimension(
                "the training kernel must be a symmetric square matrix".into(),
            ));
        }
        Self::from_matrix(phi.entries.clone())
    }

    pub fn from_matrix(phi: DMatrix<f64>) -> Result<Self> {
        if !phi.is_square() {
            return Err(Error::Dimension(format!(
                "Phi must be square, got {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        let eig = phi.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..phi.nrows()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let raw: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvalues = clip_eigenvalues(&raw)?;
        let mut eigenvectors = DMatrix::zeros(phi.nrows(), phi.ncols());
        for (k, &i) in order.iter().enumerate() {
            eigenvectors.set_column(k, &eig.eigenvectors.column(i));
        }
        Ok(GramSpectrum {
            phi,
            eigenvalues,
            eigenvectors,
        })
    }

    /// `T`, the number of training samples.
    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Squared norms of the columns of `Y U` (energy of the targets along each eigenvector).
    pub fn project_targets(&self, y: &DMatrix<f64>) -> Result<ProjectedTargets> {
        if y.ncols() != self.size() {
            return Err(Error::Dimension(format!(
                "targets have {} columns, Phi is {}x{}",
                y.ncols(),
                self.size(),
                self.size()
            )));
        }
        let rotated = y * &self.eigenvectors;
        let energy = rotated.column_iter().map(|c| c.norm_squared()).collect();
        Ok(ProjectedTargets {
            energy,
            samples: self.size(),
        })
    }

    /// Precompute everything the test-error formula needs that does not depend on `gamma`.
    pub fn project_test(
        &self,
        y: &DMatrix<f64>,
        y_test: &DMatrix<f64>,
        phi_cross: &KernelMatrix,
        phi_test_trace: f64,
    ) -> Result<TestProjection> {
        let t = self.size();
        if phi_cross.nrows() != t {
            return Err(Error::Dimension(format!(
                "Phi_XXhat has {} rows, expected {t}",
                phi_cross.nrows()
            )));
        }
        let t_hat = phi_cross.ncols();
        if y.ncols() != t || y_test.ncols() != t_hat || y.nrows() != y_test.nrows() {
            return Err(Error::Dimension(format!(
                "targets {}x{} / {}x{} do not match T={t}, T_hat={t_hat}",
                y.nrows(),
                y.ncols(),
                y_test.nrows(),
                y_test.ncols()
            )));
        }
        if t_hat == 0 {
            return Err(Error::Dimension("empty test split".into()));
        }
        let rotated_cross = self.eigenvectors.transpose() * &phi_cross.entries;
        let cross_energy = rotated_cross.row_iter().map(|r| r.norm_squared()).collect();
        let rotated_targets = self.eigenvectors.transpose() * y.transpose();
        let target_energy = rotated_targets
            .row_iter()
            .map(|r| r.norm_squared())
            .collect();
        Ok(TestProjection {
            rotated_cross,
            cross_energy,
            rotated_targets,
            target_energy,
            test_targets: y_test.transpose(),
            phi_test_trace,
        })
    }
}

fn clip_eigenvalues(raw: &[f64]) -> Result<Vec<f64>> {
    let max = raw.iter().copied().fold(0.0_f64, f64::max);
    let floor = -NEGATIVE_EIGEN_TOLERANCE * max;
    raw.iter()
        .map(|&l| {
            if !l.is_finite() {
                Err(Error::Domain("non-finite eigenvalue of Phi".into()))
            } else if l < floor {
                Err(Error::Domain(format!(
                    "Phi has eigenvalue {l:e} below -{NEGATIVE_EIGEN_TOLERANCE:e} * lambda_max; \
                     the kernel is not positive semidefinite"
                )))
            } else {
                Ok(l.max(0.0))
            }
        })
        .collect()
}

/// Target energies `|(Y U)_{.i}|^2` in the eigenbasis of `Phi`.
#[derive(Clone, Debug)]
pub struct ProjectedTargets {
    pub energy: Vec<f64>,
    samples: usize,
}

impl ProjectedTargets {
    /// `(1/T) |Y|_F^2`, the error of the zero predictor.
    pub fn mean_energy(&self) -> f64 {
        self.energy.iter().sum::<f64>() / self.samples as f64
    }
}

/// `gamma`-independent pieces of the test-error equivalent.
#[derive(Clone, Debug)]
pub struct TestProjection {
    /// `U' Phi_XXhat` (T x T_hat).
    rotated_cross: DMatrix<f64>,
    /// Squared row norms of `rotated_cross`.
    cross_energy: Vec<f64>,
    /// `U' Y'` (T x d).
    rotated_targets: DMatrix<f64>,
    target_energy: Vec<f64>,
    /// `Y_hat'` (T_hat x d).
    test_targets: DMatrix<f64>,
    phi_test_trace: f64,
}

impl TestProjection {
    pub fn test_size(&self) -> usize {
        self.test_targets.nrows()
    }

    /// `(1/T_hat) |Y_hat' - rotated_cross' diag(weights) U'Y'|_F^2`.
    fn residual(&self, weights: &[f64]) -> f64 {
        let mut scaled = self.rotated_targets.clone();
        for (mut row, &w) in scaled.row_iter_mut().zip(weights) {
            row *= w;
        }
        let pred = self.rotated_cross.tr_mul(&scaled);
        (&self.test_targets - pred).norm_squared() / self.test_size() as f64
    }
}

/// Output of the `delta` fixed-point solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaSolution {
    pub delta: f64,
    pub iterations: usize,
}

fn check_sizes(neurons: usize, samples: usize, gamma: f64) -> Result<()> {
    if neurons == 0 || samples == 0 {
        return Err(Error::Domain(format!(
            "need n >= 1 and T >= 1, got n={neurons}, T={samples}"
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!(
            "ridge parameter must be positive, got {gamma}"
        )));
    }
    Ok(())
}

/// Unique positive solution of `delta = (1/T) sum_i l_i / ((n/T) l_i / (1 + delta) + gamma)`,
/// started from the upper bound `tr(Phi) / (gamma T)`.
pub fn solve_delta(eigenvalues: &[f64], neurons: usize, gamma: f64) -> Result<DeltaSolution> {
    let clipped = clip_eigenvalues(eigenvalues)?;
    let t = clipped.len();
    check_sizes(neurons, t, gamma)?;
    let init = clipped.iter().sum::<f64>() / (gamma * t as f64);
    picard_delta(&clipped, neurons, gamma, init)
}

/// Same fixed point as [`solve_delta`] from an arbitrary non-negative start.
pub fn solve_delta_from(
    eigenvalues: &[f64],
    neurons: usize,
    gamma: f64,
    init: f64,
) -> Result<DeltaSolution> {
    let clipped = clip_eigenvalues(eigenvalues)?;
    check_sizes(neurons, clipped.len(), gamma)?;
    if !(init >= 0.0 && init.is_finite()) {
        return Err(Error::Domain(format!(
            "initial delta must be >= 0, got {init}"
        )));
    }
    picard_delta(&clipped, neurons, gamma, init)
}

fn picard_delta(eig: &[f64], neurons: usize, gamma: f64, init: f64) -> Result<DeltaSolution> {
    let t = eig.len() as f64;
    let ratio = neurons as f64 / t;
    let mut delta = init;
    let mut step = f64::INFINITY;
    for k in 1..=MAX_ITERATIONS {
        let next = eig
            .iter()
            .map(|&l| l / (ratio * l / (1.0 + delta) + gamma))
            .sum::<f64>()
            / t;
        step = (next - delta).abs();
        let converged = step <= DELTA_TOLERANCE * (1.0 + delta);
        delta = next;
        if converged {
            return Ok(DeltaSolution {
                delta,
                iterations: k,
            });
        }
    }
    Err(Error::Convergence {
        solver: "delta fixed point",
        iterations: MAX_ITERATIONS,
        residual: step,
    })
}

/// Theory-side state for one `(Phi, n, gamma)`.
#[derive(Clone, Debug)]
pub struct GramEquivalent<'a> {
    spectrum: &'a GramSpectrum,
    neurons: usize,
    gamma: f64,
    solution: DeltaSolution,
    /// Eigenvalues of `Psi = (n/T) Phi / (1 + delta)`.
    psi: Vec<f64>,
    /// Eigenvalues of `Q_bar = (Psi + gamma I)^-1`.
    qbar: Vec<f64>,
    /// `(1/n) tr Psi Q_bar^2`.
    psi_q2: f64,
    /// `(1/n) tr (Psi Q_bar)^2`.
    psi_q_sq: f64,
}

impl<'a> GramEquivalent<'a> {
    pub fn new(spectrum: &'a GramSpectrum, neurons: usize, gamma: f64) -> Result<Self> {
        let solution = solve_delta(spectrum.eigenvalues(), neurons, gamma)?;
        let t = spectrum.size() as f64;
        let scale = neurons as f64 / t / (1.0 + solution.delta);
        let psi: Vec<f64> = spectrum.eigenvalues().iter().map(|l| scale * l).collect();
        let qbar: Vec<f64> = psi.iter().map(|p| 1.0 / (p + gamma)).collect();
        let n = neurons as f64;
        let psi_q2 = psi.iter().zip(&qbar).map(|(p, q)| p * q * q).sum::<f64>() / n;
        let psi_q_sq = psi
            .iter()
            .zip(&qbar)
            .map(|(p, q)| (p * q).powi(2))
            .sum::<f64>()
            / n;
        if !(1.0 - psi_q_sq > 0.0) {
            return Err(Error::Stability {
                what: "1 - (1/n) tr (Psi Q_bar)^2 must be positive",
                value: 1.0 - psi_q_sq,
            });
        }
        Ok(GramEquivalent {
            spectrum,
            neurons,
            gamma,
            solution,
            psi,
            qbar,
            psi_q2,
            psi_q_sq,
        })
    }

    pub fn delta(&self) -> f64 {
        self.solution.delta
    }

    pub fn iterations(&self) -> usize {
        self.solution.iterations
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn spectrum(&self) -> &GramSpectrum {
        self.spectrum
    }

    pub fn psi_eigenvalues(&self) -> &[f64] {
        &self.psi
    }

    pub fn qbar_eigenvalues(&self) -> &[f64] {
        &self.qbar
    }

    /// `1 - (1/n) tr (Psi Q_bar)^2`, the denominator of every second-order correction.
    pub fn stability_margin(&self) -> f64 {
        1.0 - self.psi_q_sq
    }

    /// `(1/T) tr Q_bar`.
    pub fn normalized_trace(&self) -> f64 {
        self.qbar.iter().sum::<f64>() / self.qbar.len() as f64
    }

    fn in_eigenbasis(&self, diag: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let u = self.spectrum.eigenvectors();
        let mut scaled = u.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= diag(k);
        }
        scaled * u.transpose()
    }

    /// `Q_bar = (n/T Phi/(1+delta) + gamma I_T)^-1`, assembled from the eigenbasis.
    pub fn bar_q(&self) -> DMatrix<f64> {
        self.in_eigenbasis(|k| self.qbar[k])
    }

    pub fn psi(&self) -> DMatrix<f64> {
        let scale = self.neurons as f64 / self.spectrum.size() as f64 / (1.0 + self.delta());
        self.spectrum.phi() * scale
    }

    /// Deterministic equivalent of `E[Q A Q]` for symmetric PSD `A`.
    pub fn qaq_equivalent(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let t = self.spectrum.size();
        if a.nrows() != t || a.ncols() != t {
            return Err(Error::Dimension(format!(
                "A is {}x{}, expected {t}x{t}",
                a.nrows(),
                a.ncols()
            )));
        }
        let q = self.bar_q();
        let qaq = &q * a * &q;
        let psi = self.psi();
        let numer = (&psi * &qaq).trace() / self.neurons as f64;
        let qpq = self.in_eigenbasis(|k| self.psi[k] * self.qbar[k] * self.qbar[k]);
        Ok(qaq + qpq * (numer / self.stability_margin()))
    }

    /// `(1/n) tr Psi Q_bar^2 / (1 - (1/n) tr (Psi Q_bar)^2)`.
    pub fn correction_scale(&self) -> f64 {
        self.psi_q2 / self.stability_margin()
    }

    /// Predicted training mean-square error.
    pub fn e_train_bar(&self, y: &DMatrix<f64>) -> Result<f64> {
        Ok(self.e_train_bar_projected(&self.spectrum.project_targets(y)?))
    }

    pub fn e_train_bar_projected(&self, targets: &ProjectedTargets) -> f64 {
        let s = self.correction_scale();
        let g = self.gamma;
        let total: f64 = targets
            .energy
            .iter()
            .zip(self.psi.iter().zip(&self.qbar))
            .map(|(e, (p, q))| e * (g * q).powi(2) * (1.0 + p * s))
            .sum();
        total / self.spectrum.size() as f64
    }

    /// Predicted test mean-square error; `delta` comes from the training kernel.
    pub fn e_test_bar(&self, test: &TestProjection) -> f64 {
        let t = self.spectrum.size() as f64;
        let t_hat = test.test_size() as f64;
        let c = self.neurons as f64 / t / (1.0 + self.delta());
        let weights: Vec<f64> = self.qbar.iter().map(|q| c * q).collect();
        let bias = test.residual(&weights);
        let numer = test
            .target_energy
            .iter()
            .zip(self.psi.iter().zip(&self.qbar))
            .map(|(e, (p, q))| e * q * q * p)
            .sum::<f64>()
            / self.neurons as f64;
        let coef = numer / self.stability_margin();
        let cross = test
            .cross_energy
            .iter()
            .zip(&self.qbar)
            .map(|(e, q)| e * q * (1.0 + self.gamma * q))
            .sum::<f64>();
        let bracket = c * test.phi_test_trace / t_hat - c * c * cross / t_hat;
        bias + coef * bracket
    }
}

/// Predicted test error straight from the matrices, building the projection on the fly.
pub fn e_test_bar(
    eq: &GramEquivalent<'_>,
    y: &DMatrix<f64>,
    y_test: &DMatrix<f64>,
    phi_cross: &KernelMatrix,
    phi_test: &KernelMatrix,
) -> Result<f64> {
    if !phi_test.is_square() || phi_test.nrows() != phi_cross.ncols() {
        return Err(Error::Dimension(format!(
            "Phi_XhatXhat is {}x{}, expected {n}x{n}",
            phi_test.nrows(),
            phi_test.ncols(),
            n = phi_cross.ncols()
        )));
    }
    let proj = eq
        .spectrum()
        .project_test(y, y_test, phi_cross, phi_test.entries.trace())?;
    Ok(eq.e_test_bar(&proj))
}

/// Eigenvalues of `Phi` as a column vector (for callers that want nalgebra types).
pub fn eigenvalue_vector(spectrum: &GramSpectrum) -> DVector<f64> {
    DVector::from_column_slice(spectrum.eigenvalues())
}
