use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{NinnError, Result};
use crate::nn::ResNetSystem;

/// Component-index interpolant `I_M`: the orthogonal projection onto the
/// span of the observed coordinate axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationOperator {
    observed: Vec<usize>,
    state_dim: usize,
}

impl ObservationOperator {
    /// Indices are sorted and deduplicated.
    pub fn new(mut observed: Vec<usize>, state_dim: usize) -> Result<Self> {
        observed.sort_unstable();
        observed.dedup();
        if let Some(&bad) = observed.iter().find(|&&i| i >= state_dim) {
            return Err(NinnError::DimensionMismatch(format!(
                "observed index {bad} out of range for dimension {state_dim}"
            )));
        }
        Ok(Self {
            observed,
            state_dim,
        })
    }

    pub fn full(state_dim: usize) -> Self {
        Self {
            observed: (0..state_dim).collect(),
            state_dim,
        }
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed.binary_search(&i).is_ok()
    }

    /// Position of component `i` within the observed values, if observed.
    pub fn slot(&self, i: usize) -> Option<usize> {
        self.observed.binary_search(&i).ok()
    }

    /// Observed values of `x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.observed.iter().map(|&i| x[i]).collect()
    }

    /// `x` with unobserved components set to zero.
    pub fn mask(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for &i in &self.observed {
            out[i] = x[i];
        }
        out
    }

    /// `obs` on observed components, `w` elsewhere.
    pub fn inject(&self, w: &[f64], obs: &[f64]) -> Vec<f64> {
        let mut out = w.to_vec();
        for (&i, &v) in self.observed.iter().zip(obs) {
            out[i] = v;
        }
        out
    }

    /// Short label such as `x0` or `x0+x2`, or `none`.
    pub fn label(&self) -> String {
        if self.observed.is_empty() {
            return "none".into();
        }
        if self.observed.len() == self.state_dim && self.state_dim > 3 {
            return "all".into();
        }
        self.observed
            .iter()
            .map(|i| format!("x{i}"))
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Masking map on the ResNet state space: the hidden vectors of all nets
/// of a system laid end to end, net by net. Entries belonging to nets that
/// receive no feedback (unobserved output component) are zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceMask {
    keep: Vec<bool>,
}

impl StateSpaceMask {
    pub fn new(system: &ResNetSystem, obs: &ObservationOperator) -> Self {
        let keep = system
            .nets()
            .iter()
            .enumerate()
            .flat_map(|(i, net)| std::iter::repeat_n(obs.is_observed(i), net.width()))
            .collect();
        Self { keep }
    }

    /// From explicit per-net widths and a feedback flag per net.
    pub fn from_widths(widths: &[usize], controlled: &[bool]) -> Self {
        let keep = widths
            .iter()
            .zip(controlled)
            .flat_map(|(&w, &c)| std::iter::repeat_n(c, w))
            .collect();
        Self { keep }
    }

    pub fn dim(&self) -> usize {
        self.keep.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.keep)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect()
    }
}

/// Partial observations `I_M u(t_k)` at uniformly spaced times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStream {
    pub delta_t_obs: f64,
    pub operator: ObservationOperator,
    /// `(t_k, observed values)`.
    pub entries: Vec<(f64, Vec<f64>)>,
}

impl ObservationStream {
    pub fn new(
        delta_t_obs: f64,
        operator: ObservationOperator,
        entries: Vec<(f64, Vec<f64>)>,
    ) -> Result<Self> {
        if !(delta_t_obs > 0.0) {
            return Err(NinnError::InvalidArgument(
                "observation interval must be positive".into(),
            ));
        }
        if entries.is_empty() {
            return Err(NinnError::InvalidArgument(
                "empty observation stream".into(),
            ));
        }
        for (k, (t, v)) in entries.iter().enumerate() {
            if v.len() != operator.n_observed() {
                return Err(NinnError::DimensionMismatch(format!(
                    "observation {k} has {} values for {} observed components",
                    v.len(),
                    operator.n_observed()
                )));
            }
            let expected = entries[0].0 + k as f64 * delta_t_obs;
            if (t - expected).abs() > 1e-6 * delta_t_obs {
                return Err(NinnError::InvalidArgument(format!(
                    "observation times must be spaced by {delta_t_obs}; entry {k} at {t}"
                )));
            }
        }
        Ok(Self {
            delta_t_obs,
            operator,
            entries,
        })
    }

    /// Observes every state of a checkpoint trajectory.
    pub fn from_checkpoints(
        checkpoints: &Trajectory,
        operator: ObservationOperator,
    ) -> Result<Self> {
        if checkpoints.len() < 2 {
            return Err(NinnError::InvalidArgument(
                "need at least two checkpoints".into(),
            ));
        }
        let delta = checkpoints.times[1] - checkpoints.times[0];
        let entries = checkpoints
            .times
            .iter()
            .zip(&checkpoints.states)
            .map(|(&t, x)| (t, operator.project(x)))
            .collect();
        Self::new(delta, operator, entries)
    }

    /// Adds i.i.d. Gaussian noise to every observed value.
    pub fn with_noise<R: Rng + ?Sized>(mut self, std: f64, rng: &mut R) -> Result<Self> {
        if std == 0.0 {
            return Ok(self);
        }
        let normal = Normal::new(0.0, std)
            .map_err(|e| NinnError::InvalidArgument(format!("noise std: {e}")))?;
        for (_, v) in &mut self.entries {
            for x in v.iter_mut() {
                *x += normal.sample(rng);
            }
        }
        Ok(self)
    }

    pub fn start_time(&self) -> f64 {
        self.entries[0].0
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
