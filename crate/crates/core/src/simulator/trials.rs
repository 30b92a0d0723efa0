use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{features, sample_weights, RidgePath};
use crate::error::{Error, Result};
use crate::kernels::{Activation, WeightLaw};
use crate::stats::Welford;

/// Generator for trial `trial`: the master seed picks the key, the trial index the stream.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Everything needed to simulate one sweep.
#[derive(Clone, Debug)]
pub struct TrialPlan<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
    pub x_test: &'a DMatrix<f64>,
    pub y_test: &'a DMatrix<f64>,
    pub activation: Activation,
    pub law: WeightLaw,
    pub neurons: usize,
    pub gammas: &'a [f64],
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub trial: usize,
    pub gamma: f64,
    pub e_train: f64,
    pub e_test: f64,
    /// Time for the whole trial (all `gamma`), repeated on each of its rows.
    pub wall_time: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaSummary {
    pub gamma: f64,
    pub train: Welford,
    pub test: Welford,
}

impl TrialPlan<'_> {
    /// Errors of a single draw of `W` at every `gamma`.
    pub fn run_one(&self, trial: usize) -> Result<Vec<TrialResult>> {
        let start = Instant::now();
        let mut rng = trial_rng(self.seed, trial);
        let w = sample_weights(self.law, self.neurons, self.x.nrows(), &mut rng)?;
        let sigma = features(&w, self.x, self.activation)?;
        let sigma_test = features(&w, self.x_test, self.activation)?;
        let path = RidgePath::new(&sigma, &sigma_test, self.y, self.y_test)?;
        let errors = self
            .gammas
            .iter()
            .map(|&g| path.errors(g))
            .collect::<Result<Vec<_>>>()?;
        let wall_time = start.elapsed();
        Ok(self
            .gammas
            .iter()
            .zip(errors)
            .map(|(&gamma, (e_train, e_test))| TrialResult {
                seed: self.seed,
                trial,
                gamma,
                e_train,
                e_test,
                wall_time,
            })
            .collect())
    }
}

/// Runs all trials in the current rayon pool and summarises them per `gamma`.
///
/// Trials are folded in index order, so the summaries do not depend on scheduling.
pub fn run_trials(plan: &TrialPlan<'_>) -> Result<(Vec<GammaSummary>, Vec<TrialResult>)> {
    if plan.trials == 0 {
        return Err(Error::Config("trial count must be at least 1".into()));
    }
    let per_trial = (0..plan.trials)
        .into_par_iter()
        .map(|k| plan.run_one(k))
        .collect::<Result<Vec<_>>>()?;
    let mut summary: Vec<GammaSummary> = plan
        .gammas
        .iter()
        .map(|&gamma| GammaSummary {
            gamma,
            train: Welford::new(),
            test: Welford::new(),
        })
        .collect();
    for rows in &per_trial {
        for (s, r) in summary.iter_mut().zip(rows) {
            s.train.push(r.e_train);
            s.test.push(r.e_test);
        }
    }
    Ok((summary, per_trial.into_iter().flatten().collect()))
}
