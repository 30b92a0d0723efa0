//! Independent numerical route to `E[sigma(w'a) sigma(w'b)]` for `w ~ N(0, I_p)`.
//!
//! The p-dimensional Gaussian integral only sees `w` through the two
//! projections `w'a` and `w'b`, so after an orthonormal change of basis
//! (`e1 = a/|a|`, `e2` the normalised part of `b` orthogonal to `e1`) it
//! reduces to an integral over the plane against the standard bivariate normal
//! density. That planar integral is evaluated here with either a tensor
//! Gauss-Hermite rule (for smooth activations) or a polar rule whose angular
//! panels are split where either projection changes sign (for activations with
//! a kink or jump at zero, where tensor rules converge only algebraically).

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::activation::Activation;

/// Nodes and weights such that `E[f(Z)] ~ sum_i w_i f(x_i)` for `Z ~ N(0,1)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_hermite needs at least one node");
    // Starting nodes from the eigenvalues of the Jacobi matrix, polished by
    // Newton on the orthonormal Hermite recurrence (physicists' scaling),
    // which also yields weights with full relative accuracy.
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut start: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    start.sort_by(|a, b| a.total_cmp(b));
    let nf = n as f64;
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for mut z in start {
        let mut pp = 0.0;
        for _ in 0..20 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x.push(z * std::f64::consts::SQRT_2);
        w.push(2.0 / (pp * pp) / PI.sqrt());
    }
    (x, w)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QuadratureRule {
    /// Tensor-product Gauss-Hermite with `nodes` points per axis.
    GaussHermite { nodes: usize },
    /// Polar coordinates: Gauss-Legendre panels in angle, split at the sign
    /// changes of both projections, and Gauss-Legendre in radius on `[0, radius]`.
    PolarSplit {
        angular_nodes: usize,
        radial_nodes: usize,
        radius: f64,
    },
}

impl QuadratureRule {
    pub const DEFAULT_HERMITE: QuadratureRule = QuadratureRule::GaussHermite { nodes: 200 };
    pub const DEFAULT_POLAR: QuadratureRule = QuadratureRule::PolarSplit {
        angular_nodes: 48,
        radial_nodes: 96,
        radius: 12.0,
    };

    pub fn default_for(act: &Activation) -> QuadratureRule {
        if act.is_smooth() {
            Self::DEFAULT_HERMITE
        } else {
            Self::DEFAULT_POLAR
        }
    }

    fn doubled(&self) -> QuadratureRule {
        match *self {
            QuadratureRule::GaussHermite { nodes } => {
                QuadratureRule::GaussHermite { nodes: 2 * nodes }
            }
            QuadratureRule::PolarSplit {
                angular_nodes,
                radial_nodes,
                radius,
            } => QuadratureRule::PolarSplit {
                angular_nodes: 2 * angular_nodes,
                radial_nodes: 2 * radial_nodes,
                radius,
            },
        }
    }
}

/// Result of [`phi_oracle_quadrature`].
#[derive(Clone, Copy, Debug)]
pub struct QuadratureEstimate {
    pub value: f64,
    /// `|value(rule) - value(rule with doubled nodes)|`.
    pub refinement_gap: f64,
    /// False when the refinement gap exceeds the tolerance.
    pub converged: bool,
}

/// Precomputed node sets for one rule and its doubled refinement.
#[derive(Clone, Debug)]
pub struct PhiOracle {
    coarse: Grid,
    fine: Grid,
    tolerance: f64,
}

#[derive(Clone, Debug)]
enum Grid {
    Hermite {
        x: Vec<f64>,
        w: Vec<f64>,
    },
    Polar {
        x: Vec<f64>,
        w: Vec<f64>,
        radial_x: Vec<f64>,
        radial_w: Vec<f64>,
    },
}

impl Grid {
    fn new(rule: QuadratureRule) -> Grid {
        match rule {
            QuadratureRule::GaussHermite { nodes } => {
                let (x, w) = gauss_hermite(nodes);
                Grid::Hermite { x, w }
            }
            QuadratureRule::PolarSplit {
                angular_nodes,
                radial_nodes,
                radius,
            } => {
                let (x, w) = gauss_legendre(angular_nodes);
                let (rx, rw) = gauss_legendre(radial_nodes);
                // Map radial nodes to [0, radius].
                let radial_x = rx.iter().map(|t| 0.5 * radius * (t + 1.0)).collect();
                let radial_w = rw.iter().map(|wi| 0.5 * radius * wi).collect();
                Grid::Polar {
                    x,
                    w,
                    radial_x,
                    radial_w,
                }
            }
        }
    }

    /// `E[f(alpha u1) f(beta1 u1 + beta2 u2)]` for independent standard normals.
    fn integrate<F: Fn(f64) -> f64>(&self, f: &F, alpha: f64, beta1: f64, beta2: f64) -> f64 {
        match self {
            Grid::Hermite { x, w } => {
                if beta2 == 0.0 {
                    return x
                        .iter()
                        .zip(w)
                        .map(|(&xi, &wi)| wi * f(alpha * xi) * f(beta1 * xi))
                        .sum();
                }
                let mut total = 0.0;
                for (&xi, &wi) in x.iter().zip(w) {
                    let fa = f(alpha * xi);
                    if fa == 0.0 || wi == 0.0 {
                        continue;
                    }
                    let base = beta1 * xi;
                    let inner: f64 = x
                        .iter()
                        .zip(w)
                        .map(|(&xj, &wj)| wj * f(base + beta2 * xj))
                        .sum();
                    total += wi * fa * inner;
                }
                total
            }
            Grid::Polar {
                x,
                w,
                radial_x,
                radial_w,
            } => {
                if beta2 == 0.0 {
                    // One-dimensional: split the line at the origin.
                    let norm = 1.0 / (2.0 * PI).sqrt();
                    let mut total = 0.0;
                    for (&r, &wr) in radial_x.iter().zip(radial_w) {
                        let g = (-0.5 * r * r).exp() * norm;
                        total +=
                            wr * g * (f(alpha * r) * f(beta1 * r) + f(-alpha * r) * f(-beta1 * r));
                    }
                    return total;
                }
                let mut breaks = vec![0.0, 2.0 * PI, 0.5 * PI, 1.5 * PI];
                let phase = beta2.atan2(beta1);
                for shift in [-0.5 * PI, 0.5 * PI] {
                    breaks.push((phase + shift).rem_euclid(2.0 * PI));
                }
                breaks.sort_by(|a, b| a.total_cmp(b));
                breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
                let mut total = 0.0;
                for pair in breaks.windows(2) {
                    let (lo, hi) = (pair[0], pair[1]);
                    let half = 0.5 * (hi - lo);
                    let mid = 0.5 * (hi + lo);
                    for (&t, &wt) in x.iter().zip(w) {
                        let theta = mid + half * t;
                        let (s, c) = theta.sin_cos();
                        let p1 = alpha * c;
                        let p2 = beta1 * c + beta2 * s;
                        let radial: f64 = radial_x
                            .iter()
                            .zip(radial_w)
                            .map(|(&r, &wr)| wr * r * (-0.5 * r * r).exp() * f(r * p1) * f(r * p2))
                            .sum();
                        total += half * wt * radial;
                    }
                }
                total / (2.0 * PI)
            }
        }
    }
}

impl PhiOracle {
    pub fn new(rule: QuadratureRule) -> Self {
        PhiOracle {
            coarse: Grid::new(rule),
            fine: Grid::new(rule.doubled()),
            tolerance: 1e-9,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn evaluate<F: Fn(f64) -> f64>(
        &self,
        a: &[f64],
        b: &[f64],
        f: F,
    ) -> Result<QuadratureEstimate> {
        let (alpha, beta1, beta2) = reduce_to_plane(a, b)?;
        let value = self.coarse.integrate(&f, alpha, beta1, beta2);
        let refined = self.fine.integrate(&f, alpha, beta1, beta2);
        let gap = (value - refined).abs();
        let converged = gap <= self.tolerance * (1.0 + refined.abs());
        if !converged {
            log::warn!("quadrature oracle refinement gap {gap:e} exceeds tolerance");
        }
        Ok(QuadratureEstimate {
            value,
            refinement_gap: gap,
            converged,
        })
    }
}

/// One-shot oracle evaluation of `E[f(w'a) f(w'b)]`, `w ~ N(0, I_p)`.
pub fn phi_oracle_quadrature<F: Fn(f64) -> f64>(
    a: &[f64],
    b: &[f64],
    f: F,
    rule: QuadratureRule,
) -> Result<QuadratureEstimate> {
    PhiOracle::new(rule).evaluate(a, b, f)
}

/// Coordinates `(alpha, beta1, beta2)` with `w'a ~ alpha u1` and
/// `w'b ~ beta1 u1 + beta2 u2`. The longer vector is taken as `e1`; the
/// integrand is symmetric in the pair.
fn reduce_to_plane(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "oracle vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "non-finite input to quadrature oracle".into(),
        ));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (u, v, nu) = if na >= nb { (a, b, na) } else { (b, a, nb) };
    if nu == 0.0 {
        return Err(Error::Domain(
            "quadrature oracle needs at least one non-zero vector".into(),
        ));
    }
    let beta1 = u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / nu;
    let residual2: f64 = u
        .iter()
        .zip(v)
        .map(|(x, y)| {
            let r = y - beta1 * x / nu;
            r * r
        })
        .sum();
    let mut beta2 = residual2.sqrt();
    let nv = if na >= nb { nb } else { na };
    if beta2 <= 1e-13 * nv {
        beta2 = 0.0;
    }
    Ok((nu, beta1, beta2))
}
