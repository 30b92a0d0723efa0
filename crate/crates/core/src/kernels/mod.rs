//! Expected Gram matrices `Phi_AB = E[sigma(w'A)' sigma(w'B)]` of random features.
//!
//! Closed forms are available for every [`Activation`] when the weights are
//! standard Gaussian, and for the quadratic polynomial (hence also the linear
//! map) under any weight law with finite fourth moment. The [`quadrature`]
//! submodule gives an independent numerical route used to audit them.

mod activation;
pub mod quadrature;

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use activation::{Activation, Moments, WeightLaw};
pub use quadrature::{phi_oracle_quadrature, PhiOracle, QuadratureEstimate, QuadratureRule};

/// Inner products of a vector pair needed by every closed form.
#[derive(Clone, Copy, Debug, Default)]
struct PairStats {
    dot: f64,
    na2: f64,
    nb2: f64,
    /// `(a^2)'(b^2)`
    sq_sq: f64,
    /// `(a^2)'b + a'(b^2)`
    sq_lin: f64,
}

impl PairStats {
    fn new(a: &[f64], b: &[f64]) -> Self {
        let mut s = PairStats::default();
        for (&x, &y) in a.iter().zip(b) {
            s.dot += x * y;
            s.na2 += x * x;
            s.nb2 += y * y;
            s.sq_sq += x * x * y * y;
            s.sq_lin += x * x * y + x * y * y;
        }
        s
    }

    /// Cosine of the angle, clamped to [-1, 1]. Undefined (None) for zero vectors.
    fn cosine(&self) -> Option<f64> {
        let denom = (self.na2 * self.nb2).sqrt();
        if denom == 0.0 {
            None
        } else {
            Some((self.dot / denom).clamp(-1.0, 1.0))
        }
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "kernel vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite input to kernel".into()));
    }
    Ok(())
}

fn gaussian_closed_form(s: &PairStats, act: Activation) -> f64 {
    let norms = (s.na2 * s.nb2).sqrt();
    match act {
        Activation::Linear => s.dot,
        Activation::Relu => match s.cosine() {
            Some(c) => norms * (c * (-c).acos() + (1.0 - c * c).sqrt()) / (2.0 * PI),
            None => 0.0,
        },
        Activation::Abs => match s.cosine() {
            Some(c) => FRAC_2_PI * norms * (c * c.asin() + (1.0 - c * c).sqrt()),
            None => 0.0,
        },
        Activation::Erf => {
            let arg = 2.0 * s.dot / ((1.0 + 2.0 * s.na2) * (1.0 + 2.0 * s.nb2)).sqrt();
            FRAC_2_PI * arg.clamp(-1.0, 1.0).asin()
        }
        Activation::Step => match s.cosine() {
            Some(c) => 0.5 - c.acos() / (2.0 * PI),
            // Both zero: product of two half-space probabilities by convention.
            // One zero: the factor 1{0 > 0} vanishes identically.
            None if s.na2 == 0.0 && s.nb2 == 0.0 => 0.25,
            None => 0.0,
        },
        Activation::Sign => match s.cosine() {
            Some(c) => FRAC_2_PI * c.asin(),
            None => 0.0,
        },
        Activation::Cos => (-0.5 * (s.na2 + s.nb2)).exp() * s.dot.cosh(),
        Activation::Sin => (-0.5 * (s.na2 + s.nb2)).exp() * s.dot.sinh(),
        Activation::Poly2 {
            zeta2,
            zeta1,
            zeta0,
        } => poly_closed_form(s, (zeta2, zeta1, zeta0), Moments::GAUSSIAN),
    }
}

fn poly_closed_form(s: &PairStats, (z2, z1, z0): (f64, f64, f64), m: Moments) -> f64 {
    let quartic =
        m.m2 * m.m2 * (2.0 * s.dot * s.dot + s.na2 * s.nb2) + (m.m4 - 3.0 * m.m2 * m.m2) * s.sq_sq;
    z2 * z2 * quartic
        + z1 * z1 * m.m2 * s.dot
        + z2 * z1 * m.m3 * s.sq_lin
        + z2 * z0 * m.m2 * (s.na2 + s.nb2)
        + z0 * z0
}

/// `E[sigma(w'a) sigma(w'b)]` for `w ~ N(0, I_p)`.
pub fn phi_entry_gaussian(a: &[f64], b: &[f64], act: Activation) -> Result<f64> {
    check_pair(a, b)?;
    act.validate()?;
    Ok(gaussian_closed_form(&PairStats::new(a, b), act))
}

/// `E[sigma(w'a) sigma(w'b)]` for `sigma(t) = zeta2 t^2 + zeta1 t + zeta0` and
/// `w` with i.i.d. zero-mean entries of the given law.
pub fn phi_entry_poly(a: &[f64], b: &[f64], zeta: (f64, f64, f64), law: WeightLaw) -> Result<f64> {
    check_pair(a, b)?;
    let m = law.moments()?;
    m.validate()?;
    Activation::Poly2 {
        zeta2: zeta.0,
        zeta1: zeta.1,
        zeta0: zeta.2,
    }
    .validate()?;
    Ok(poly_closed_form(&PairStats::new(a, b), zeta, m))
}

/// A validated (activation, weight law) pair with a closed-form kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    activation: Activation,
    law: WeightLaw,
    form: Form,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Form {
    Gaussian,
    Poly {
        zeta: (f64, f64, f64),
        moments: Moments,
    },
}

impl Kernel {
    pub fn new(activation: Activation, law: WeightLaw) -> Result<Self> {
        activation.validate()?;
        let moments = law.moments()?;
        let form = if law.is_gaussian() {
            Form::Gaussian
        } else {
            match activation {
                Activation::Poly2 {
                    zeta2,
                    zeta1,
                    zeta0,
                } => Form::Poly {
                    zeta: (zeta2, zeta1, zeta0),
                    moments,
                },
                Activation::Linear => Form::Poly {
                    zeta: (0.0, 1.0, 0.0),
                    moments,
                },
                other => {
                    return Err(Error::Capability(format!(
                        "no closed-form kernel for {other} activation with {law} weights; \
                         non-Gaussian weights are supported only for linear and poly2 activations"
                    )))
                }
            }
        };
        Ok(Kernel {
            activation,
            law,
            form,
        })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn law(&self) -> WeightLaw {
        self.law
    }

    pub fn entry(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_pair(a, b)?;
        Ok(self.entry_unchecked(a, b))
    }

    fn entry_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let s = PairStats::new(a, b);
        match self.form {
            Form::Gaussian => gaussian_closed_form(&s, self.activation),
            Form::Poly { zeta, moments } => poly_closed_form(&s, zeta, moments),
        }
    }

    /// Expected Gram matrix between the columns of `a` (rows of the result)
    /// and the columns of `b`. When both arguments are the same matrix only
    /// the upper triangle is evaluated and the result is flagged symmetric.
    pub fn matrix(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<KernelMatrix> {
        if a.nrows() != b.nrows() {
            return Err(Error::Dimension(format!(
                "kernel inputs have {} and {} rows",
                a.nrows(),
                b.nrows()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite input to kernel".into()));
        }
        if std::ptr::eq(a, b) {
            return Ok(self.gram_unchecked(a));
        }
        let p = a.nrows();
        let cols_a: Vec<&[f64]> = column_slices(a, p);
        let cols_b: Vec<&[f64]> = column_slices(b, p);
        // Column-major output: one chunk of length `a.ncols()` per column of `b`.
        let mut data = vec![0.0; a.ncols() * b.ncols()];
        if a.ncols() > 0 {
            data.par_chunks_mut(a.ncols())
                .zip(cols_b.par_iter())
                .for_each(|(out, cb)| {
                    for (o, ca) in out.iter_mut().zip(&cols_a) {
                        *o = self.entry_unchecked(ca, cb);
                    }
                });
        }
        Ok(KernelMatrix {
            entries: DMatrix::from_vec(a.ncols(), b.ncols(), data),
            symmetric: false,
        })
    }

    /// `Phi_XX`, symmetric by construction.
    pub fn gram(&self, x: &DMatrix<f64>) -> Result<KernelMatrix> {
        self.matrix(x, x)
    }

    fn gram_unchecked(&self, x: &DMatrix<f64>) -> KernelMatrix {
        let t = x.ncols();
        let cols = column_slices(x, x.nrows());
        let mut data = vec![0.0; t * t];
        if t > 0 {
            data.par_chunks_mut(t).enumerate().for_each(|(j, out)| {
                for i in 0..=j {
                    out[i] = self.entry_unchecked(cols[i], cols[j]);
                }
            });
        }
        let mut entries = DMatrix::from_vec(t, t, data);
        for j in 0..t {
            for i in (j + 1)..t {
                entries[(i, j)] = entries[(j, i)];
            }
        }
        KernelMatrix {
            entries,
            symmetric: true,
        }
    }
}

fn column_slices(m: &DMatrix<f64>, p: usize) -> Vec<&[f64]> {
    if p == 0 {
        return vec![&[][..]; m.ncols()];
    }
    m.as_slice().chunks_exact(p).collect()
}

/// Convenience wrapper: `Kernel::new(act, law)?.matrix(a, b)`.
pub fn phi_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    act: Activation,
    law: WeightLaw,
) -> Result<KernelMatrix> {
    Kernel::new(act, law)?.matrix(a, b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub symmetric: bool,
}

impl KernelMatrix {
    pub fn is_square(&self) -> bool {
        self.entries.is_square()
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Wrap an externally supplied symmetric matrix (e.g. a synthetic `Phi`).
    pub fn from_symmetric(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension(format!(
                "symmetric kernel must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.amax().max(1.0);
        for j in 0..entries.ncols() {
            for i in 0..j {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::Domain(format!(
                        "kernel matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(KernelMatrix {
            entries,
            symmetric: true,
        })
    }
}
