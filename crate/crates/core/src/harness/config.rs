use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernels::{Activation, WeightLaw};
use crate::simulator::{center_scale, gaussian_mixture, load_csv, Dataset};
use crate::spectrum::DEFAULT_GRID_POINTS;

pub const DEFAULT_TRIALS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Two-class mixture with covariances `diag(I, 4I)/p` and `diag(4I, I)/p`.
    GaussianMixture {
        p: usize,
        train: usize,
        test: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Header row, then `features` input columns followed by the targets.
    Csv {
        train: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test: Option<PathBuf>,
        features: usize,
        #[serde(default = "yes")]
        center_scale: bool,
    },
}

fn yes() -> bool {
    true
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetConfig::GaussianMixture {
                p,
                train,
                test,
                seed,
            } => gaussian_mixture(*p, *train, *test, *seed),
            DatasetConfig::Csv {
                train,
                test,
                features,
                center_scale: scale,
            } => {
                let ds = load_csv(train, test.as_deref(), *features)?;
                if *scale {
                    center_scale(&ds)
                } else {
                    Ok(ds)
                }
            }
        }
    }
}

/// `count` log-spaced values in `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for GammaGrid {
    fn default() -> Self {
        GammaGrid {
            min: 1e-4,
            max: 1e2,
            count: 25,
        }
    }
}

impl GammaGrid {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min > 0.0
            && self.max.is_finite()
            && self.count >= 1
            && (self.max > self.min || (self.count == 1 && self.max == self.min));
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "gamma grid needs 0 < min < max and count >= 1, got {self:?}"
            )))
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.log10(), self.max.log10());
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| match k {
                0 => self.min,
                k if k == self.count - 1 => self.max,
                k => 10f64.powf(lo + (hi - lo) * k as f64 / last),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySettings {
    /// Imaginary offset for the Stieltjes inversion; defaults to a scale-aware value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Number of grid points (default 4001).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl DensitySettings {
    pub fn points(&self) -> usize {
        self.points.unwrap_or(DEFAULT_GRID_POINTS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub activation: Activation,
    #[serde(default = "gaussian_weights")]
    pub weights: WeightLaw,
    pub neurons: usize,
    #[serde(default)]
    pub gamma: GammaGrid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub compute_density: bool,
    #[serde(default)]
    pub compute_limits: bool,
    #[serde(default)]
    pub density: DensitySettings,
}

fn gaussian_weights() -> WeightLaw {
    WeightLaw::Gaussian
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Mixture experiment with every optional field at its default.
    pub fn mixture(
        p: usize,
        train: usize,
        test: usize,
        activation: Activation,
        neurons: usize,
    ) -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::GaussianMixture {
                p,
                train,
                test,
                seed: 0,
            },
            activation,
            weights: WeightLaw::Gaussian,
            neurons,
            gamma: GammaGrid::default(),
            trials: DEFAULT_TRIALS,
            seed: 0,
            output: default_output(),
            compute_density: false,
            compute_limits: false,
            density: DensitySettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gamma.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.neurons == 0 {
            return Err(Error::Config("neurons must be at least 1".into()));
        }
        if let Some(eps) = self.density.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!(
                    "density epsilon must be positive, got {eps}"
                )));
            }
        }
        if self.density.points.is_some_and(|p| p < 2) {
            return Err(Error::Config("density grid needs at least 2 points".into()));
        }
        self.activation.validate()?;
        self.weights.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical TOML serialisation, hex encoded. The output
    /// directory is left out so relocated runs share a hash.
    pub fn hash(&self) -> Result<String> {
        let canonical = ExperimentConfig {
            output: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
