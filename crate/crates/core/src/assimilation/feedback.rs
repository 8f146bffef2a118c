//! Feedback-controlled forward passes of a ResNet system.
//!
//! Only nets whose output component is observed receive feedback; the other
//! nets run their ordinary forward pass.

use super::observation::ObservationOperator;
use crate::error::{NinnError, Result};
use crate::nn::matrix::all_finite;
use crate::nn::{ResNetParams, ResNetSystem};

/// How the Type 2 scalar misfit `N_ℓ` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type2Variant {
    /// `N_ℓ = W_{L-1} y_ℓ − y^QoI`
    Plain,
    /// `N_ℓ = W_{L-1}(f_L ∘ … ∘ f_{ℓ+1})(y_ℓ) − y^QoI`, the remaining layers
    /// applied without feedback.
    Lookahead,
}

fn check_obs(
    system: &ResNetSystem,
    w: &[f64],
    obs: &[f64],
    op: &ObservationOperator,
) -> Result<()> {
    if w.len() != system.state_dim() || op.state_dim() != system.state_dim() {
        return Err(NinnError::DimensionMismatch(format!(
            "state of length {} for a system of dimension {}",
            w.len(),
            system.state_dim()
        )));
    }
    if obs.len() != op.n_observed() {
        return Err(NinnError::DimensionMismatch(format!(
            "{} observed values for {} observed components",
            obs.len(),
            op.n_observed()
        )));
    }
    Ok(())
}

fn finite_or(layer: usize, v: Vec<f64>) -> Result<Vec<f64>> {
    if all_finite(&v) {
        Ok(v)
    } else {
        Err(NinnError::Divergence { layer })
    }
}

/// Type 1 feedback on one net: nudges every hidden state toward the hidden
/// states `rqoi` of a clean pass on the observation-corrected input.
///
/// The first layer's feedback `−τμ(y_1 − y_1^R)` involves the unknown
/// `y_1`; it is solved exactly as `y_1 = (σ(W_0 x + b_0) + τμ y_1^R)/(1 + τμ)`.
pub fn type1_net(net: &ResNetParams, x: &[f64], rqoi: &[Vec<f64>], mu: f64) -> Result<f64> {
    let tau_mu = net.tau() * mu;
    let mut y: Vec<f64> = net
        .opening_state(x)
        .iter()
        .zip(&rqoi[0])
        .map(|(s, r)| (s + tau_mu * r) / (1.0 + tau_mu))
        .collect();
    y = finite_or(1, y)?;
    for l in 1..net.depth() - 1 {
        let free = net.residual_step(l, &y);
        let target = &rqoi[l];
        let next = free
            .iter()
            .zip(&y)
            .zip(target)
            .map(|((f, yl), r)| f - tau_mu * (yl - r))
            .collect();
        y = finite_or(l + 1, next)?;
    }
    finite_or(net.depth(), net.readout(&y)).map(|o| o[0])
}

/// Type 2 Case 1 feedback on one scalar-output net: every residual update
/// gets `−τμ N_ℓ z` with `z = W_{L-1}ᵀ / ‖W_{L-1}‖₁`; the first layer is
/// left alone.
pub fn type2_net(
    net: &ResNetParams,
    x: &[f64],
    qoi: f64,
    mu: f64,
    variant: Type2Variant,
) -> Result<f64> {
    let closing = net.closing().row(0);
    let l1: f64 = closing.iter().map(|v| v.abs()).sum();
    let z: Vec<f64> = if l1 > 0.0 {
        closing.iter().map(|v| v / l1).collect()
    } else {
        vec![0.0; closing.len()]
    };
    let tau_mu = net.tau() * mu;
    let last = net.depth() - 1;
    let mut y = finite_or(1, net.opening_state(x))?;
    for l in 1..last {
        let free = net.residual_step(l, &y);
        let predicted = match variant {
            Type2Variant::Plain => net.readout(&y)[0],
            Type2Variant::Lookahead => net.propagate_from(l + 1, &free)[0],
        };
        let misfit = predicted - qoi;
        let next = free
            .iter()
            .zip(&z)
            .map(|(f, zi)| f - tau_mu * misfit * zi)
            .collect();
        y = finite_or(l + 1, next)?;
    }
    finite_or(net.depth(), net.readout(&y)).map(|o| o[0])
}

/// One NINN Type 1 step of the whole system.
///
/// The observation-corrected input `w*` (observations on observed
/// components, `w` elsewhere) is pushed through each observed net to get
/// the nudging targets; the net then runs on `w` with feedback toward them.
pub fn ninn_type1_step(
    system: &ResNetSystem,
    w: &[f64],
    obs: &[f64],
    op: &ObservationOperator,
    mu_eff: f64,
) -> Result<Vec<f64>> {
    check_obs(system, w, obs, op)?;
    let corrected = op.inject(w, obs);
    (0..system.state_dim())
        .map(|i| {
            let net = &system.nets()[i];
            let x = system.gather(i, w);
            let out = if mu_eff != 0.0 && op.is_observed(i) {
                let (_, trace) = net.forward(&system.gather(i, &corrected))?;
                type1_net(net, &x, &trace.states, mu_eff)
            } else {
                net.output(&x).map(|o| o[0])
            };
            out.map_err(|e| e.in_component(i))
        })
        .collect()
}

/// One NINN Type 2 (Case 1) step of the whole system. Each observed net is
/// nudged toward the observation of its own output component.
pub fn ninn_type2_step(
    system: &ResNetSystem,
    w: &[f64],
    obs: &[f64],
    op: &ObservationOperator,
    mu_eff: f64,
    variant: Type2Variant,
) -> Result<Vec<f64>> {
    check_obs(system, w, obs, op)?;
    (0..system.state_dim())
        .map(|i| {
            let net = &system.nets()[i];
            let x = system.gather(i, w);
            let out = match op.slot(i) {
                Some(slot) if mu_eff != 0.0 => type2_net(net, &x, obs[slot], mu_eff, variant),
                _ => net.output(&x).map(|o| o[0]),
            };
            out.map_err(|e| e.in_component(i))
        })
        .collect()
}

/// Direct Observation: overwrite the observed input components with the
/// observations (when given) and run the system without feedback.
pub fn direct_obs_step(
    system: &ResNetSystem,
    w: &[f64],
    obs: Option<&[f64]>,
    op: &ObservationOperator,
) -> Result<Vec<f64>> {
    match obs {
        Some(obs) => {
            check_obs(system, w, obs, op)?;
            system.forward(&op.inject(w, obs))
        }
        None => system.forward(w),
    }
}
