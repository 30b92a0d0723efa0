//! Small-ridge (`gamma -> 0`) and infinite-width (`n -> inf`) limits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{GramSpectrum, TestProjection, DELTA_TOLERANCE, MAX_ITERATIONS};

pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;
/// Below this `lambda_min / lambda_max` the kernel inverse falls back to a pseudo-inverse.
pub const CONDITION_LIMIT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    /// `rank(Phi) < n`: `delta` stays bounded, `delta -> r / (n - r)`.
    RankBelowNeurons { delta0: f64 },
    /// `rank(Phi) > n`: `gamma * delta -> big_delta`.
    RankAboveNeurons { big_delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroRidgeLimit {
    pub rank: usize,
    pub regime: Regime,
    /// Limit of the predicted training error as `gamma -> 0`.
    pub e_train_limit: f64,
    /// Some eigenvalue sits within a factor 10 of the rank cut-off.
    pub ambiguous_rank: bool,
}

/// Limits of `delta` and of the predicted training error as `gamma -> 0`.
///
/// The numerical rank counts eigenvalues above `rank_tol * lambda_max`.
pub fn gamma_zero_limits(
    spectrum: &GramSpectrum,
    neurons: usize,
    y: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<ZeroRidgeLimit> {
    if neurons == 0 {
        return Err(Error::Domain("need at least one neuron".into()));
    }
    let targets = spectrum.project_targets(y)?;
    let eig = spectrum.eigenvalues();
    let t = eig.len() as f64;
    let n = neurons as f64;
    let cut = rank_tol * spectrum.lambda_max();
    let rank = eig.iter().filter(|&&l| l > cut).count();
    let ambiguous_rank =
        spectrum.lambda_max() > 0.0 && eig.iter().any(|&l| l > cut / 10.0 && l < cut * 10.0);
    if ambiguous_rank {
        log::warn!("numerical rank of Phi is ambiguous at tolerance {rank_tol:e}");
    }

    if rank < neurons {
        let null_energy: f64 = eig
            .iter()
            .zip(&targets.energy)
            .filter(|(&l, _)| l <= cut)
            .map(|(_, e)| e)
            .sum::<f64>()
            // an empty float sum is -0.0
            .abs();
        return Ok(ZeroRidgeLimit {
            rank,
            regime: Regime::RankBelowNeurons {
                delta0: rank as f64 / (n - rank as f64),
            },
            e_train_limit: null_energy / t,
            ambiguous_rank,
        });
    }
    if rank == neurons {
        return Err(Error::Stability {
            what: "rank(Phi) == n: the small-ridge limit is degenerate",
            value: rank as f64,
        });
    }

    let ratio = n / t;
    let mut big = spectrum.trace() / t;
    let mut step = f64::INFINITY;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let next = eig
            .iter()
            .map(|&l| l / (ratio * l / big + 1.0))
            .sum::<f64>()
            / t;
        step = (next - big).abs();
        big = next;
        if step <= DELTA_TOLERANCE * big {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            solver: "small-ridge Delta fixed point",
            iterations: MAX_ITERATIONS,
            residual: step,
        });
    }

    let psi: Vec<f64> = eig.iter().map(|l| ratio * l / big).collect();
    let q: Vec<f64> = psi.iter().map(|p| 1.0 / (p + 1.0)).collect();
    let num = psi.iter().zip(&q).map(|(p, q)| p * q * q).sum::<f64>() / n;
    let den = 1.0
        - psi
            .iter()
            .zip(&q)
            .map(|(p, q)| (p * q).powi(2))
            .sum::<f64>()
            / n;
    if !(den > 0.0) {
        return Err(Error::Stability {
            what: "1 - (1/n) tr (Psi_D Q_D)^2 must be positive",
            value: den,
        });
    }
    let s = num / den;
    let e_train_limit = targets
        .energy
        .iter()
        .zip(psi.iter().zip(&q))
        .map(|(e, (p, q))| e * q * q * (1.0 + s * p))
        .sum::<f64>()
        / t;
    Ok(ZeroRidgeLimit {
        rank,
        regime: Regime::RankAboveNeurons { big_delta: big },
        e_train_limit,
        ambiguous_rank,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfiniteWidthLimit {
    /// `(1/T_hat) |Y_hat' - Phi_XhatX Phi^-1 Y'|_F^2`
    pub e_test: f64,
    /// `Phi` was too ill-conditioned to invert and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

/// Test error of plain kernel ridge-less regression with kernel `Phi`, the
/// `n -> inf` limit of the predicted test error.
pub fn e_test_infinite_n(
    spectrum: &GramSpectrum,
    test: &TestProjection,
) -> Result<InfiniteWidthLimit> {
    let eig = spectrum.eigenvalues();
    let max = spectrum.lambda_max();
    if max <= 0.0 {
        return Err(Error::Domain("Phi is identically zero".into()));
    }
    let min = eig.last().copied().unwrap_or(0.0);
    let pseudo_inverse = min / max < CONDITION_LIMIT;
    let cut = if pseudo_inverse {
        CONDITION_LIMIT * max
    } else {
        0.0
    };
    if pseudo_inverse {
        log::warn!("Phi is singular to working precision; using a pseudo-inverse");
    }
    let weights: Vec<f64> = eig
        .iter()
        .map(|&l| if l > cut { 1.0 / l } else { 0.0 })
        .collect();
    Ok(InfiniteWidthLimit {
        e_test: test.residual(&weights),
        pseudo_inverse,
    })
}
