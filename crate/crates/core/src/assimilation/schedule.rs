use serde::{Deserialize, Serialize};

use crate::error::{NinnError, Result};

/// Nudging strength within one observation window: `μ e^{-iΛ}` at
/// substep `i = 0 … substeps-1`, restarting at every new observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NudgeSchedule {
    pub mu: f64,
    pub lambda_decay: f64,
    /// Model evaluations per observation window.
    pub substeps: usize,
}

impl NudgeSchedule {
    pub fn new(mu: f64, lambda_decay: f64, substeps: usize) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(NinnError::InvalidArgument(format!(
                "mu must be >= 0, got {mu}"
            )));
        }
        if !(lambda_decay >= 0.0 && lambda_decay.is_finite()) {
            return Err(NinnError::InvalidArgument(format!(
                "decay factor must be >= 0, got {lambda_decay}"
            )));
        }
        if substeps == 0 {
            return Err(NinnError::InvalidArgument(
                "substeps must be positive".into(),
            ));
        }
        Ok(Self {
            mu,
            lambda_decay,
            substeps,
        })
    }

    pub fn effective_mu(&self, substep: usize) -> f64 {
        self.mu * (-(substep as f64) * self.lambda_decay).exp()
    }

    pub fn decay_schedule(&self) -> Vec<f64> {
        (0..self.substeps).map(|i| self.effective_mu(i)).collect()
    }
}

/// Decay factors used in the experiments.
pub const DECAY_FACTORS: [f64; 3] = [0.2, 1.0, 3.0];

/// Nudging strengths searched by the grid.
pub const MU_GRID: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_decay_is_constant() {
        let s = NudgeSchedule::new(3.0, 0.0, 10).unwrap();
        assert!(s.decay_schedule().iter().all(|&m| m == 3.0));
    }

    #[test]
    fn first_substep_is_full_strength() {
        let s = NudgeSchedule::new(7.0, 3.0, 10).unwrap();
        assert_eq!(s.effective_mu(0), 7.0);
        assert!((s.effective_mu(1) - 7.0 * (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rejects_invalid() {
        assert!(NudgeSchedule::new(-1.0, 0.0, 10).is_err());
        assert!(NudgeSchedule::new(1.0, -0.5, 10).is_err());
        assert!(NudgeSchedule::new(1.0, 0.5, 0).is_err());
    }
}
