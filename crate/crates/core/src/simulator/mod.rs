//! Monte Carlo ground truth: random weights, features, the ridge read-out and its errors.

mod data;
mod trials;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::kernels::{Activation, WeightLaw};

pub use data::{
    center_scale, gaussian_mixture, load_csv, AffineTransform, Dataset, Provenance, Source,
};
pub use trials::{run_trials, trial_rng, GammaSummary, TrialPlan, TrialResult};

/// `n x p` matrix of i.i.d. entries from `law` (zero mean; unit variance except `UniformPm1`).
pub fn sample_weights<R: Rng + ?Sized>(
    law: WeightLaw,
    n: usize,
    p: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::Domain(format!(
            "weights need n, p >= 1, got {n}x{p}"
        )));
    }
    law.validate()?;
    let mut w = DMatrix::zeros(n, p);
    match law {
        WeightLaw::Gaussian => w.iter_mut().for_each(|v| *v = StandardNormal.sample(rng)),
        WeightLaw::UniformPm1 => w.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0)),
        WeightLaw::BernoulliPm1 => w
            .iter_mut()
            .for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 }),
        WeightLaw::StudentT { nu } => {
            let dist = StudentT::new(nu).map_err(|e| Error::Domain(e.to_string()))?;
            let scale = ((nu - 2.0) / nu).sqrt();
            w.iter_mut().for_each(|v| *v = scale * dist.sample(rng));
        }
    }
    Ok(w)
}

/// `sigma(W X)`.
pub fn features(w: &DMatrix<f64>, x: &DMatrix<f64>, act: Activation) -> Result<DMatrix<f64>> {
    if w.ncols() != x.nrows() {
        return Err(Error::Dimension(format!(
            "W is {}x{} but X has {} rows",
            w.nrows(),
            w.ncols(),
            x.nrows()
        )));
    }
    act.validate()?;
    Ok((w * x).map(|t| act.apply(t)))
}

fn check_ridge(sigma: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!(
            "ridge parameter must be positive, got {gamma}"
        )));
    }
    if sigma.ncols() != y.ncols() {
        return Err(Error::Dimension(format!(
            "Sigma has {} columns, Y has {}",
            sigma.ncols(),
            y.ncols()
        )));
    }
    Ok(())
}

fn spd_solve(mut a: DMatrix<f64>, gamma: f64, rhs: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..a.nrows() {
        a[(i, i)] += gamma;
    }
    // a is Gram + gamma I with gamma > 0, hence positive definite.
    a.cholesky()
        .expect("Gram matrix plus positive ridge is positive definite")
        .solve(&rhs)
}

/// `beta = (1/T) Sigma (Sigma'Sigma/T + gamma I_T)^-1 Y'` through the `T x T` system.
pub fn ridge_fit_primal(
    sigma: &DMatrix<f64>,
    y: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    check_ridge(sigma, y, gamma)?;
    let t = sigma.ncols() as f64;
    let z = spd_solve(sigma.tr_mul(sigma) / t, gamma, y.transpose());
    Ok(sigma * z / t)
}

/// Same estimator through the `n x n` system `(Sigma Sigma'/T + gamma I_n) beta = Sigma Y'/T`.
pub fn ridge_fit_dual(sigma: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    check_ridge(sigma, y, gamma)?;
    let t = sigma.ncols() as f64;
    Ok(spd_solve(
        sigma * sigma.transpose() / t,
        gamma,
        sigma * y.transpose() / t,
    ))
}

/// Ridge read-out `beta` (`n x d`), solving in the smaller of the two dimensions.
pub fn ridge_fit(sigma: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if sigma.ncols() <= sigma.nrows() {
        ridge_fit_primal(sigma, y, gamma)
    } else {
        ridge_fit_dual(sigma, y, gamma)
    }
}

fn mse(target: &DMatrix<f64>, pred: &DMatrix<f64>) -> f64 {
    (target.transpose() - pred).norm_squared() / target.ncols() as f64
}

/// `(E_train, E_test)` of the ridge read-out fitted on `(Sigma, Y)`.
pub fn empirical_errors(
    sigma: &DMatrix<f64>,
    sigma_test: &DMatrix<f64>,
    y: &DMatrix<f64>,
    y_test: &DMatrix<f64>,
    gamma: f64,
) -> Result<(f64, f64)> {
    if sigma_test.nrows() != sigma.nrows()
        || sigma_test.ncols() != y_test.ncols()
        || y.nrows() != y_test.nrows()
    {
        return Err(Error::Dimension(
            "test features/targets do not match the training ones".into(),
        ));
    }
    let beta = ridge_fit(sigma, y, gamma)?;
    Ok((
        mse(y, &sigma.tr_mul(&beta)),
        mse(y_test, &sigma_test.tr_mul(&beta)),
    ))
}

/// `E_train = (gamma^2/T) |Q Y'|_F^2` with `Q = (Sigma'Sigma/T + gamma I_T)^-1`.
pub fn e_train_resolvent(sigma: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    check_ridge(sigma, y, gamma)?;
    let t = sigma.ncols() as f64;
    let qy = spd_solve(sigma.tr_mul(sigma) / t, gamma, y.transpose());
    Ok(gamma * gamma * qy.norm_squared() / t)
}

/// One factorisation of the features, reused for every `gamma` of a sweep.
///
/// Predictions are `A diag(1/(s + gamma)) B` where `s` are the non-trivial
/// eigenvalues of the smaller Gram matrix.
#[derive(Clone, Debug)]
pub struct RidgePath {
    s: Vec<f64>,
    train_left: DMatrix<f64>,
    test_left: DMatrix<f64>,
    right: DMatrix<f64>,
    y: DMatrix<f64>,
    y_test: DMatrix<f64>,
}

impl RidgePath {
    pub fn new(
        sigma: &DMatrix<f64>,
        sigma_test: &DMatrix<f64>,
        y: &DMatrix<f64>,
        y_test: &DMatrix<f64>,
    ) -> Result<Self> {
        let (n, t) = sigma.shape();
        if sigma_test.nrows() != n
            || sigma_test.ncols() != y_test.ncols()
            || y.ncols() != t
            || y.nrows() != y_test.nrows()
        {
            return Err(Error::Dimension("ridge path: inconsistent shapes".into()));
        }
        let tf = t as f64;
        let (s, train_left, test_left, right) = if t <= n {
            let eig = (sigma.tr_mul(sigma) / tf).symmetric_eigen();
            let s: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            let v = eig.eigenvectors;
            let mut train_left = v.clone();
            for (k, mut col) in train_left.column_iter_mut().enumerate() {
                col *= s[k];
            }
            let test_left = sigma_test.tr_mul(&(sigma * &v)) / tf;
            let right = v.tr_mul(&y.transpose());
            (s, train_left, test_left, right)
        } else {
            let eig = (sigma * sigma.transpose() / tf).symmetric_eigen();
            let u = eig.eigenvectors;
            let train_left = sigma.tr_mul(&u);
            let test_left = sigma_test.tr_mul(&u);
            let right = u.tr_mul(&(sigma * y.transpose())) / tf;
            let s = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
            (s, train_left, test_left, right)
        };
        Ok(RidgePath {
            s,
            train_left,
            test_left,
            right,
            y: y.clone(),
            y_test: y_test.clone(),
        })
    }

    /// `(E_train, E_test)` at `gamma`.
    pub fn errors(&self, gamma: f64) -> Result<(f64, f64)> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!(
                "ridge parameter must be positive, got {gamma}"
            )));
        }
        let mut scaled = self.right.clone();
        for (mut row, &s) in scaled.row_iter_mut().zip(&self.s) {
            row /= s + gamma;
        }
        Ok((
            mse(&self.y, &(&self.train_left * &scaled)),
            mse(&self.y_test, &(&self.test_left * &scaled)),
        ))
    }
}

#[cfg(test)]
mod tests;
