use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{NinnError, Result};

/// Input/target pairs `(u_i, S(u_i))` of a one-step update map.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    /// Time of each input state; informational only.
    times: Vec<f64>,
    dt_step: f64,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, dt_step: f64) -> Result<Self> {
        let times = (0..inputs.len()).map(|i| i as f64 * dt_step).collect();
        Self::with_times(inputs, targets, times, dt_step)
    }

    pub fn with_times(
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        times: Vec<f64>,
        dt_step: f64,
    ) -> Result<Self> {
        if inputs.len() != targets.len() || inputs.len() != times.len() {
            return Err(NinnError::DimensionMismatch(format!(
                "{} inputs, {} targets, {} times",
                inputs.len(),
                targets.len(),
                times.len()
            )));
        }
        if let Some(first) = inputs.first() {
            let d_in = first.len();
            let d_out = targets[0].len();
            if inputs.iter().any(|u| u.len() != d_in) || targets.iter().any(|s| s.len() != d_out) {
                return Err(NinnError::DimensionMismatch("ragged dataset rows".into()));
            }
        }
        let finite = |rows: &[Vec<f64>]| rows.iter().flatten().all(|v| v.is_finite());
        if !finite(&inputs) || !finite(&targets) {
            return Err(NinnError::InvalidArgument(
                "dataset contains non-finite values".into(),
            ));
        }
        Ok(Self {
            inputs,
            targets,
            times,
            dt_step,
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dt_step(&self) -> f64 {
        self.dt_step
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Shuffled train/validation index split. The training part holds
    /// `⌊fraction·N⌋` samples (at least one); validation gets the rest.
    pub fn split_indices<R: Rng + ?Sized>(
        &self,
        fraction: f64,
        rng: &mut R,
    ) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let n_train = ((fraction * self.len() as f64).floor() as usize).clamp(1, self.len());
        let val = idx.split_off(n_train);
        (idx, val)
    }

    /// Inputs gathered through `stencil` and the scalar target `component`,
    /// restricted to `indices`.
    pub fn component_batch(
        &self,
        indices: &[usize],
        stencil: &[usize],
        component: usize,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        indices
            .iter()
            .map(|&i| {
                let u = &self.inputs[i];
                (
                    stencil.iter().map(|&j| u[j]).collect(),
                    vec![self.targets[i][component]],
                )
            })
            .unzip()
    }
}
