use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entrywise non-linearity applied to the random projections `Wx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Abs,
    Erf,
    /// Heaviside step `1{t > 0}`.
    Step,
    Sign,
    Cos,
    Sin,
    /// `zeta2 * t^2 + zeta1 * t + zeta0`.
    Poly2 {
        zeta2: f64,
        zeta1: f64,
        zeta0: f64,
    },
}

impl Activation {
    /// Every activation that has a closed-form kernel for standard Gaussian weights,
    /// in table order. Excludes the quadratic polynomial, which is parameterised.
    pub const TABLE: [Activation; 8] = [
        Activation::Linear,
        Activation::Relu,
        Activation::Abs,
        Activation::Erf,
        Activation::Step,
        Activation::Sign,
        Activation::Cos,
        Activation::Sin,
    ];

    #[inline]
    pub fn apply(&self, t: f64) -> f64 {
        match *self {
            Activation::Linear => t,
            Activation::Relu => t.max(0.0),
            Activation::Abs => t.abs(),
            Activation::Erf => libm::erf(t),
            Activation::Step => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sign => {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Activation::Cos => t.cos(),
            Activation::Sin => t.sin(),
            Activation::Poly2 {
                zeta2,
                zeta1,
                zeta0,
            } => (zeta2 * t + zeta1) * t + zeta0,
        }
    }

    /// Smooth activations integrate well on a tensor Gauss-Hermite grid; the
    /// others have a kink or jump at the origin.
    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            Activation::Linear
                | Activation::Erf
                | Activation::Cos
                | Activation::Sin
                | Activation::Poly2 { .. }
        )
    }

    /// Lipschitz-continuous activations; the others are simulated but fall
    /// outside the regime covered by the concentration results.
    pub fn is_lipschitz(&self) -> bool {
        matches!(
            self,
            Activation::Linear
                | Activation::Relu
                | Activation::Abs
                | Activation::Erf
                | Activation::Cos
                | Activation::Sin
        )
    }

    pub fn validate(&self) -> Result<()> {
        if let Activation::Poly2 {
            zeta2,
            zeta1,
            zeta0,
        } = *self
        {
            if !(zeta2.is_finite() && zeta1.is_finite() && zeta0.is_finite()) {
                return Err(Error::Domain(format!(
                    "poly2 coefficients must be finite, got ({zeta2}, {zeta1}, {zeta0})"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Linear => f.write_str("linear"),
            Activation::Relu => f.write_str("relu"),
            Activation::Abs => f.write_str("abs"),
            Activation::Erf => f.write_str("erf"),
            Activation::Step => f.write_str("step"),
            Activation::Sign => f.write_str("sign"),
            Activation::Cos => f.write_str("cos"),
            Activation::Sin => f.write_str("sin"),
            Activation::Poly2 {
                zeta2,
                zeta1,
                zeta0,
            } => write!(f, "poly2({zeta2}, {zeta1}, {zeta0})"),
        }
    }
}

/// Moments `E[w^k]`, k = 2, 3, 4, of a single weight entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub const GAUSSIAN: Moments = Moments {
        m2: 1.0,
        m3: 0.0,
        m4: 3.0,
    };

    pub fn validate(&self) -> Result<()> {
        let finite = self.m2.is_finite() && self.m3.is_finite() && self.m4.is_finite();
        if !finite || self.m2 <= 0.0 || self.m4 < self.m2 * self.m2 {
            return Err(Error::Domain(format!(
                "invalid weight moments m2={}, m3={}, m4={} (need m2 > 0 and m4 >= m2^2)",
                self.m2, self.m3, self.m4
            )));
        }
        Ok(())
    }
}

/// Distribution of the i.i.d. entries of the weight matrix `W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightLaw {
    Gaussian,
    /// Uniform on `[-1, 1]` (variance 1/3).
    UniformPm1,
    /// Rademacher `+-1`.
    BernoulliPm1,
    /// Student-t with `nu` degrees of freedom rescaled to unit variance.
    StudentT {
        nu: f64,
    },
}

impl WeightLaw {
    pub fn validate(&self) -> Result<()> {
        if let WeightLaw::StudentT { nu } = *self {
            if !(nu > 4.0) {
                return Err(Error::Domain(format!(
                    "student-t weights need nu > 4 for a finite fourth moment, got {nu}"
                )));
            }
        }
        Ok(())
    }

    pub fn moments(&self) -> Result<Moments> {
        self.validate()?;
        Ok(match *self {
            WeightLaw::Gaussian => Moments::GAUSSIAN,
            WeightLaw::UniformPm1 => Moments {
                m2: 1.0 / 3.0,
                m3: 0.0,
                m4: 1.0 / 5.0,
            },
            WeightLaw::BernoulliPm1 => Moments {
                m2: 1.0,
                m3: 0.0,
                m4: 1.0,
            },
            WeightLaw::StudentT { nu } => Moments {
                m2: 1.0,
                m3: 0.0,
                m4: 3.0 * (nu - 2.0) / (nu - 4.0),
            },
        })
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, WeightLaw::Gaussian)
    }
}

impl fmt::Display for WeightLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightLaw::Gaussian => f.write_str("gaussian"),
            WeightLaw::UniformPm1 => f.write_str("uniform(-1,1)"),
            WeightLaw::BernoulliPm1 => f.write_str("bernoulli(+-1)"),
            WeightLaw::StudentT { nu } => write!(f, "student-t(nu={nu})"),
        }
    }
}
