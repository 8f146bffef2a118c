//! Training objective: mean squared data misfit, smoothed L1 + L2 weight
//! regularization, and the quadratic bias-ordering penalty.

use crate::error::{NinnError, Result};
use crate::nn::ResNetParams;

/// `(1/2N) Σ ‖y_L(u_i) − s_i‖²`.
pub fn data_loss(net: &ResNetParams, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_batch(net, inputs, targets)?;
    let mut sum = 0.0;
    for (u, s) in inputs.iter().zip(targets) {
        let out = net.output(u)?;
        sum += out
            .iter()
            .zip(s)
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>();
    }
    Ok(sum / (2.0 * inputs.len() as f64))
}

fn check_batch(net: &ResNetParams, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(NinnError::InvalidArgument(format!(
            "batch needs matching non-empty inputs and targets, got {} and {}",
            inputs.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|t| t.len() != net.output_dim()) {
        return Err(NinnError::DimensionMismatch(
            "target dimension differs from net output".into(),
        ));
    }
    Ok(())
}

/// Smoothed absolute value `sqrt(x² + δ²) − δ`.
#[inline]
fn smooth_abs(x: f64, delta: f64) -> f64 {
    (x * x + delta * delta).sqrt() - delta
}

#[inline]
fn smooth_abs_derivative(x: f64, delta: f64) -> f64 {
    let r = (x * x + delta * delta).sqrt();
    if r == 0.0 {
        0.0
    } else {
        x / r
    }
}

fn regularizer_flat(flat: &[f64], lambda: f64, delta: f64, grad: Option<&mut [f64]>) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let value: f64 = flat.iter().map(|&x| smooth_abs(x, delta) + x * x).sum();
    if let Some(grad) = grad {
        for (g, &x) in grad.iter_mut().zip(flat) {
            *g += 0.5 * lambda * (smooth_abs_derivative(x, delta) + 2.0 * x);
        }
    }
    0.5 * lambda * value
}

/// `(λ/2) Σ_ℓ (‖W_ℓ‖₁ + ‖b_ℓ‖₁ + ‖W_ℓ‖₂² + ‖b_ℓ‖₂²)` over every layer, with
/// `|x|` smoothed to `sqrt(x² + δ²) − δ`.
pub fn regularizer(net: &ResNetParams, lambda: f64, l1_delta: f64) -> f64 {
    regularizer_flat(&net.to_flat(), lambda, l1_delta, None)
}

fn bias_penalty_flat(
    flat: &[f64],
    ranges: &[std::ops::Range<usize>],
    gamma: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for range in ranges {
        let b = &flat[range.clone()];
        for j in 0..b.len().saturating_sub(1) {
            let d = b[j + 1] - b[j];
            if d < 0.0 {
                sum += d * d;
                if let Some(g) = grad.as_deref_mut() {
                    g[range.start + j + 1] += gamma * d;
                    g[range.start + j] -= gamma * d;
                }
            }
        }
    }
    0.5 * gamma * sum
}

/// `(γ/2) Σ_ℓ Σ_j min(b_ℓ^{j+1} − b_ℓ^j, 0)²`: penalizes decreasing
/// adjacent bias pairs in layers `0 … L-2`.
pub fn bias_order_penalty(net: &ResNetParams, gamma: f64) -> f64 {
    bias_penalty_flat(&net.to_flat(), &net.shape().bias_ranges(), gamma, None)
}

/// Largest `b_ℓ^j − b_ℓ^{j+1}` over all layers, or 0 if every layer is sorted.
pub fn max_bias_violation(net: &ResNetParams) -> f64 {
    net.biased_layers()
        .flat_map(|layer| layer.bias.windows(2).map(|w| w[0] - w[1]))
        .fold(0.0, f64::max)
}

/// Full training objective of one net as a function of its flat parameters.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    template: ResNetParams,
    bias_ranges: Vec<std::ops::Range<usize>>,
    inputs: &'a [Vec<f64>],
    targets: &'a [Vec<f64>],
    pub lambda: f64,
    pub gamma: f64,
    pub l1_delta: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        template: &ResNetParams,
        inputs: &'a [Vec<f64>],
        targets: &'a [Vec<f64>],
        lambda: f64,
        gamma: f64,
        l1_delta: f64,
    ) -> Result<Self> {
        check_batch(template, inputs, targets)?;
        Ok(Self {
            template: template.clone(),
            bias_ranges: template.shape().bias_ranges(),
            inputs,
            targets,
            lambda,
            gamma,
            l1_delta,
        })
    }

    pub fn num_params(&self) -> usize {
        self.template.num_params()
    }

    pub fn net_from(&self, flat: &[f64]) -> ResNetParams {
        let mut net = self.template.clone();
        net.set_flat(flat).expect("flat length checked by caller");
        net
    }

    /// Objective value and gradient.
    pub fn value_and_gradient(&self, flat: &[f64]) -> Result<(f64, Vec<f64>)> {
        let net = self.net_from(flat);
        let mut grad = vec![0.0; flat.len()];
        let scale = 1.0 / self.inputs.len() as f64;
        let mut misfit = 0.0;
        for (u, s) in self.inputs.iter().zip(self.targets) {
            net.backprop_with(
                u,
                |out| {
                    Ok(out
                        .iter()
                        .zip(s)
                        .map(|(y, t)| {
                            let r = y - t;
                            misfit += r * r;
                            r * scale
                        })
                        .collect())
                },
                &mut grad,
                None,
            )?;
        }
        let mut value = 0.5 * misfit * scale;
        value += regularizer_flat(flat, self.lambda, self.l1_delta, Some(&mut grad));
        value += bias_penalty_flat(flat, &self.bias_ranges, self.gamma, Some(&mut grad));
        if !value.is_finite() {
            return Err(NinnError::Divergence { layer: 0 });
        }
        Ok((value, grad))
    }

    pub fn value(&self, flat: &[f64]) -> Result<f64> {
        let net = self.net_from(flat);
        Ok(data_loss(&net, self.inputs, self.targets)?
            + regularizer_flat(flat, self.lambda, self.l1_delta, None)
            + bias_penalty_flat(flat, &self.bias_ranges, self.gamma, None))
    }
}
