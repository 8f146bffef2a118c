use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ode::{OdeSpec, Rk4};
use super::trajectory::{advance, Trajectory};
use crate::error::{NinnError, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::training::Dataset;

/// Standard deviation of the Gaussian initial conditions (mean 0).
pub const IC_STD: f64 = 10.0;

/// Integrator steps per training step inside dataset generation.
pub const INNER_STEPS: usize = 10;

/// Draws a state with i.i.d. `N(0, IC_STD²)` components.
pub fn gaussian_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, IC_STD).expect("valid normal");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_samples: usize,
    /// Time between input and target of each pair.
    pub dt_step: f64,
    /// Time integrated from the initial condition before harvesting.
    pub burn_in: f64,
    /// Consecutive pairs taken from one trajectory before drawing a new
    /// initial condition.
    pub pairs_per_trajectory: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_samples: 15_000,
            dt_step: 1e-2,
            burn_in: 20.0,
            pairs_per_trajectory: 1_000,
        }
    }
}

/// Harvests consecutive on-attractor pairs `(u(t), u(t + dt_step))`.
///
/// Each trajectory starts from a Gaussian initial condition, is integrated
/// through the burn-in and then contributes up to `pairs_per_trajectory`
/// pairs. Inner integration uses `dt_step / 10`. Trajectories that blow up
/// are discarded and a new initial condition is drawn.
pub fn make_training_set<R: Rng + ?Sized>(
    spec: &OdeSpec,
    config: &SamplingConfig,
    rng: &mut R,
) -> Result<Dataset> {
    spec.validate()?;
    if config.n_samples == 0 {
        return Err(NinnError::InvalidArgument(
            "n_samples must be positive".into(),
        ));
    }
    if !(config.dt_step > 0.0) || !(config.burn_in >= 0.0) || config.pairs_per_trajectory == 0 {
        return Err(NinnError::InvalidArgument(
            "dt_step and pairs_per_trajectory must be positive, burn_in non-negative".into(),
        ));
    }
    let dim = spec.dim();
    let inner_dt = config.dt_step / INNER_STEPS as f64;
    let burn_steps = (config.burn_in / inner_dt).round() as usize;
    let mut stepper = Rk4::new(dim);

    let mut times = Vec::with_capacity(config.n_samples);
    let mut inputs = Vec::with_capacity(config.n_samples);
    let mut targets = Vec::with_capacity(config.n_samples);
    let mut rejected = 0usize;
    while inputs.len() < config.n_samples {
        let mut x = gaussian_state(dim, rng);
        if !advance(spec, &mut stepper, &mut x, inner_dt, burn_steps) {
            rejected += 1;
            if rejected > 1000 {
                return Err(NinnError::InvalidArgument(
                    "every sampled trajectory diverged".into(),
                ));
            }
            continue;
        }
        let mut t = config.burn_in;
        for _ in 0..config.pairs_per_trajectory {
            if inputs.len() == config.n_samples {
                break;
            }
            let input = x.clone();
            if !advance(spec, &mut stepper, &mut x, inner_dt, INNER_STEPS) {
                break;
            }
            times.push(t);
            inputs.push(input);
            targets.push(x.clone());
            t += config.dt_step;
        }
    }
    Dataset::with_times(inputs, targets, times, config.dt_step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub n_runs: usize,
    /// Assimilation start; first checkpoint.
    pub t_start: f64,
    pub t_end: f64,
    pub obs_interval: f64,
    pub truth_dt: f64,
    /// Spacing of the recorded truth trajectory.
    pub record_interval: f64,
}

impl ReferenceConfig {
    /// Horizons used for each system: 110 time units for Lorenz 63, 120 for
    /// Lorenz 96, checkpoints every 0.1 from t = 100.
    pub fn for_spec(spec: &OdeSpec, n_runs: usize) -> Self {
        let t_end = match spec {
            OdeSpec::Lorenz63 { .. } => 110.0,
            OdeSpec::Lorenz96 { .. } => 120.0,
        };
        Self {
            n_runs,
            t_start: 100.0,
            t_end,
            obs_interval: 0.1,
            truth_dt: 1e-3,
            record_interval: 1e-2,
        }
    }

    pub fn n_checkpoints(&self) -> usize {
        ((self.t_end - self.t_start) / self.obs_interval).round() as usize + 1
    }

    fn steps(&self, span: f64, what: &str) -> Result<usize> {
        let ratio = span / self.truth_dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-6 * ratio.max(1.0) {
            return Err(NinnError::InvalidArgument(format!(
                "{what} ({span}) is not a multiple of truth_dt ({})",
                self.truth_dt
            )));
        }
        Ok(n as usize)
    }
}

/// One ground-truth run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub index: usize,
    pub initial_condition: Vec<f64>,
    /// Truth from `t_start` to `t_end` every `record_interval`.
    pub trajectory: Trajectory,
    /// Truth at the observation times `t_start + k·obs_interval`.
    pub checkpoints: Trajectory,
}

/// Generates `n_runs` reference solutions in parallel. Run `i` uses the seed
/// `master_seed ^ i`, so results do not depend on scheduling.
pub fn make_reference_runs(
    spec: &OdeSpec,
    config: &ReferenceConfig,
    master_seed: u64,
) -> Result<Vec<ReferenceRun>> {
    spec.validate()?;
    if config.n_runs == 0 {
        return Err(NinnError::InvalidArgument(
            "n_runs must be at least 1".into(),
        ));
    }
    if !(config.t_end > config.t_start && config.t_start >= 0.0) {
        return Err(NinnError::InvalidArgument(
            "need 0 <= t_start < t_end".into(),
        ));
    }
    let start_steps = config.steps(config.t_start, "t_start")?;
    let span_steps = config.steps(config.t_end - config.t_start, "assimilation window")?;
    let record_every = config.steps(config.record_interval, "record_interval")?;
    let obs_every = config.steps(config.obs_interval, "obs_interval")?;
    if record_every == 0 || obs_every == 0 || obs_every % record_every != 0 {
        return Err(NinnError::InvalidArgument(
            "obs_interval must be a multiple of record_interval".into(),
        ));
    }
    (0..config.n_runs)
        .into_par_iter()
        .map(|i| {
            reference_run(
                spec,
                config,
                i,
                derive_seed(master_seed, i as u64),
                (start_steps, span_steps, record_every, obs_every),
            )
        })
        .collect()
}

fn reference_run(
    spec: &OdeSpec,
    config: &ReferenceConfig,
    index: usize,
    seed: u64,
    (start_steps, span_steps, record_every, obs_every): (usize, usize, usize, usize),
) -> Result<ReferenceRun> {
    let dim = spec.dim();
    let mut rng = seeded_rng(seed);
    let mut stepper = Rk4::new(dim);
    for _attempt in 0..100 {
        let ic = gaussian_state(dim, &mut rng);
        let mut x = ic.clone();
        if !advance(spec, &mut stepper, &mut x, config.truth_dt, start_steps) {
            continue;
        }
        let mut trajectory = Trajectory::from_single(config.t_start, x.clone());
        let mut checkpoints = Trajectory::from_single(config.t_start, x.clone());
        let mut ok = true;
        for k in 1..=span_steps {
            stepper.step(spec, &mut x, config.truth_dt);
            if k % record_every == 0 {
                if !x.iter().all(|v| v.is_finite()) {
                    ok = false;
                    break;
                }
                let t = config.t_start + (k / record_every) as f64 * config.record_interval;
                trajectory.push(t, x.clone());
            }
            if k % obs_every == 0 {
                let t = config.t_start + (k / obs_every) as f64 * config.obs_interval;
                checkpoints.push(t, x.clone());
            }
        }
        if ok {
            return Ok(ReferenceRun {
                index,
                initial_condition: ic,
                trajectory,
                checkpoints,
            });
        }
    }
    Err(NinnError::InvalidArgument(format!(
        "reference run {index} diverged for 100 initial conditions"
    )))
}
