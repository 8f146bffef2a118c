use serde::{Deserialize, Serialize};

use crate::error::{NinnError, Result};

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Smoothed ReLU: `max(0, x)` outside `[-ε, ε]`, the C¹ quadratic
/// `x²/(4ε) + x/2 + ε/4` inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    epsilon: f64,
}

impl ActivationSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(NinnError::InvalidArgument(format!(
                "activation epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let eps = self.epsilon;
        if x > eps {
            x
        } else if x < -eps {
            0.0
        } else {
            x * x / (4.0 * eps) + 0.5 * x + 0.25 * eps
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let eps = self.epsilon;
        if x > eps {
            1.0
        } else if x < -eps {
            0.0
        } else {
            x / (2.0 * eps) + 0.5
        }
    }

    pub fn eval_vec(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

impl Default for ActivationSpec {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Free-function form of [`ActivationSpec::eval`].
pub fn activation(x: f64, spec: &ActivationSpec) -> f64 {
    spec.eval(x)
}

pub fn activation_derivative(x: f64, spec: &ActivationSpec) -> f64 {
    spec.derivative(x)
}
