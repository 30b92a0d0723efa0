//! Limiting spectral measure of `Sigma'Sigma / T` and its empirical counterpart.
//!
//! The Stieltjes transform is `m(z) = (1/T) tr (n/T Phi/(1+delta_z) - z I)^-1`, where
//! `delta_z` solves the complex version of the `delta` fixed point with `gamma = -z`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stats;

pub const MAX_ITERATIONS: usize = 100_000;
const TOLERANCE: f64 = 1e-13;
pub const DEFAULT_GRID_POINTS: usize = 4001;
/// Levels `y = eps * 2^-k`, `k = 0..ATOM_LEVELS`, used to extrapolate the atom at zero.
const ATOM_LEVELS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StieltjesSolution {
    pub z: Complex64,
    pub delta: Complex64,
    pub m: Complex64,
    pub iterations: usize,
}

struct FixedPoint<'a> {
    eig: &'a [f64],
    ratio: f64,
    z: Complex64,
}

impl FixedPoint<'_> {
    /// `(F(delta), F'(delta))`.
    fn map(&self, delta: Complex64) -> (Complex64, Complex64) {
        let t = self.eig.len() as f64;
        let one_plus = 1.0 + delta;
        let mut value = Complex64::new(0.0, 0.0);
        let mut slope = Complex64::new(0.0, 0.0);
        for &l in self.eig {
            let d = self.ratio * l / one_plus - self.z;
            let inv = d.inv();
            value += l * inv;
            slope += self.ratio * l * l * inv * inv;
        }
        (value / t, slope / (t * one_plus * one_plus))
    }

    fn stieltjes(&self, delta: Complex64) -> Complex64 {
        let one_plus = 1.0 + delta;
        let sum: Complex64 = self
            .eig
            .iter()
            .map(|&l| (self.ratio * l / one_plus - self.z).inv())
            .sum();
        sum / self.eig.len() as f64
    }

    fn admissible(&self, delta: Complex64) -> bool {
        delta.is_finite() && (self.z.im == 0.0 || delta.im >= 0.0)
    }
}

fn check_z(z: Complex64) -> Result<()> {
    let ok = z.is_finite() && (z.im > 0.0 || (z.im == 0.0 && z.re < 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "z must have Im z > 0 or be real negative, got {z}"
        )))
    }
}

fn check_eigenvalues(eig: &[f64], neurons: usize) -> Result<()> {
    if eig.is_empty() || neurons == 0 {
        return Err(Error::Domain("need T >= 1 and n >= 1".into()));
    }
    if eig.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Domain(
            "eigenvalues of Phi must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Default start `i (1/T) sum(lambda) / |z|`.
pub fn default_start(eig: &[f64], z: Complex64) -> Complex64 {
    let t = eig.len() as f64;
    Complex64::new(0.0, eig.iter().sum::<f64>() / (t * z.norm()))
}

/// Solve for `delta_z` at `z`; `T` is the number of eigenvalues.
pub fn stieltjes_at(eig: &[f64], neurons: usize, z: Complex64) -> Result<StieltjesSolution> {
    stieltjes_from(eig, neurons, z, None)
}

/// Same as [`stieltjes_at`] with an optional warm start (e.g. the previous grid point).
pub fn stieltjes_from(
    eig: &[f64],
    neurons: usize,
    z: Complex64,
    start: Option<Complex64>,
) -> Result<StieltjesSolution> {
    check_z(z)?;
    check_eigenvalues(eig, neurons)?;
    let fp = FixedPoint {
        eig,
        ratio: neurons as f64 / eig.len() as f64,
        z,
    };
    let mut delta = start
        .filter(|d| fp.admissible(*d))
        .unwrap_or_else(|| default_start(eig, z));
    if z.im == 0.0 {
        delta = Complex64::new(delta.re.abs().max(delta.norm()), 0.0);
    }
    let (mut value, mut slope) = fp.map(delta);
    let mut residual = (value - delta).norm();
    for k in 1..=MAX_ITERATIONS {
        if residual <= TOLERANCE * (1.0 + delta.norm()) {
            return Ok(StieltjesSolution {
                z,
                delta,
                m: fp.stieltjes(delta),
                iterations: k - 1,
            });
        }
        // Newton on F(delta) - delta, falling back to a plain Picard step.
        let newton = delta - (value - delta) / (slope - 1.0);
        let mut next = value;
        if fp.admissible(newton) {
            let (v, s) = fp.map(newton);
            let r = (v - newton).norm();
            if r.is_finite() && r < residual {
                delta = newton;
                value = v;
                slope = s;
                residual = r;
                continue;
            }
        }
        if !fp.admissible(next) {
            next = Complex64::new(next.re, next.im.max(0.0));
        }
        delta = next;
        (value, slope) = fp.map(delta);
        residual = (value - delta).norm();
    }
    Err(Error::Convergence {
        solver: "complex delta_z fixed point",
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// `1e-4 * max(1, lambda_max n / T)`.
pub fn default_epsilon(eig: &[f64], neurons: usize) -> f64 {
    let lmax = eig.iter().copied().fold(0.0, f64::max);
    1e-4 * (lmax * neurons as f64 / eig.len() as f64).max(1.0)
}

/// Uniform grid on `[0, 1.2 lambda_max (1 + sqrt(n/T))^2]`.
pub fn default_grid(eig: &[f64], neurons: usize, points: usize) -> Vec<f64> {
    let lmax = eig.iter().copied().fold(0.0, f64::max);
    let c = neurons as f64 / eig.len() as f64;
    let mut upper = 1.2 * lmax * (1.0 + c.sqrt()).powi(2);
    if upper <= 0.0 {
        upper = 1.0;
    }
    let points = points.max(2);
    (0..points)
        .map(|k| upper * k as f64 / (points - 1) as f64)
        .collect()
}

/// Atom of the limiting measure at zero, from `-iy m(iy)` extrapolated to `y -> 0`.
pub fn mass_at_zero(eig: &[f64], neurons: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(ATOM_LEVELS);
    let mut start = None;
    for k in 0..ATOM_LEVELS {
        let y = epsilon * 0.5f64.powi(k as i32);
        let z = Complex64::new(0.0, y);
        // delta_z grows roughly like 1/y when the atom is present.
        let sol = stieltjes_from(eig, neurons, z, start.map(|d: Complex64| d * 2.0))?;
        start = Some(sol.delta);
        let mut row = vec![(-z * sol.m).re];
        for j in 1..=k {
            let f = 2f64.powi(j as i32);
            let prev = &table[k - 1];
            row.push((f * row[j - 1] - prev[j - 1]) / (f - 1.0));
        }
        table.push(row);
    }
    let best = table[ATOM_LEVELS - 1][ATOM_LEVELS - 1];
    Ok(best.clamp(0.0, 1.0))
}

/// Smoothed density of the limiting measure with the atom at zero removed.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub mass_at_zero: f64,
    pub epsilon: f64,
}

impl DensityCurve {
    /// Atom plus the trapezoidal integral of the density.
    pub fn total_mass(&self) -> f64 {
        self.mass_at_zero + self.cumulative().last().copied().unwrap_or(0.0)
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.grid.len());
        out.push(0.0);
        for k in 1..self.grid.len() {
            acc +=
                0.5 * (self.density[k] + self.density[k - 1]) * (self.grid[k] - self.grid[k - 1]);
            out.push(acc);
        }
        out
    }

    /// CDF of the limiting measure, linearly interpolated on the grid.
    pub fn cdf(&self) -> impl Fn(f64) -> f64 + '_ {
        let cum = self.cumulative();
        move |x: f64| {
            if x < 0.0 {
                return 0.0;
            }
            let k = self.grid.partition_point(|&g| g <= x);
            let bulk = if k == 0 {
                0.0
            } else if k >= self.grid.len() {
                *cum.last().unwrap()
            } else {
                let (x0, x1) = (self.grid[k - 1], self.grid[k]);
                let w = (x - x0) / (x1 - x0);
                cum[k - 1] + w * (cum[k] - cum[k - 1])
            };
            (self.mass_at_zero + bulk).min(1.0)
        }
    }

    /// Kolmogorov-Smirnov distance between empirical eigenvalues and this measure.
    pub fn ks_distance(&self, eigenvalues: &[f64]) -> f64 {
        stats::ks_distance(eigenvalues, self.cdf())
    }
}

/// `(1/pi) Im m(x + i eps)` on an ascending grid, solved by continuation from left to right.
pub fn density_curve(
    eig: &[f64],
    neurons: usize,
    grid: &[f64],
    epsilon: f64,
) -> Result<DensityCurve> {
    check_eigenvalues(eig, neurons)?;
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.first().is_some_and(|&x| x < 0.0) {
        return Err(Error::Domain(
            "density grid must be ascending and non-negative".into(),
        ));
    }
    let ms = stieltjes_along(eig, neurons, grid, epsilon)?;
    let atom = mass_at_zero(eig, neurons, epsilon)?;
    let density = grid
        .iter()
        .zip(&ms)
        .map(|(&x, m)| {
            let lorentz = atom * epsilon / (std::f64::consts::PI * (x * x + epsilon * epsilon));
            (m.im / std::f64::consts::PI - lorentz).max(0.0)
        })
        .collect();
    Ok(DensityCurve {
        grid: grid.to_vec(),
        density,
        mass_at_zero: atom,
        epsilon,
    })
}

/// `m(x + i eps)` for every grid point, warm-starting each solve from its left neighbour.
pub fn stieltjes_along(
    eig: &[f64],
    neurons: usize,
    grid: &[f64],
    epsilon: f64,
) -> Result<Vec<Complex64>> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut start = None;
    grid.iter()
        .map(|&x| {
            let sol = stieltjes_from(eig, neurons, Complex64::new(x, epsilon), start)?;
            start = Some(sol.delta);
            Ok(sol.m)
        })
        .collect()
}

/// Eigenvalues of `Sigma'Sigma / T` (T of them, ascending), via the smaller Gram matrix.
pub fn empirical_spectrum(sigma: &DMatrix<f64>) -> Vec<f64> {
    let (n, t) = sigma.shape();
    let tf = t as f64;
    let small = if n < t {
        sigma * sigma.transpose() / tf
    } else {
        sigma.transpose() * sigma / tf
    };
    let mut eig: Vec<f64> = small
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    eig.resize(t, 0.0);
    eig.sort_by(f64::total_cmp);
    eig
}
