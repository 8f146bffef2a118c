use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bfgs::{bfgs_minimize_with, BfgsOptions, Termination};
use super::dataset::Dataset;
use super::init::box_init;
use super::objective::{data_loss, Objective};
use crate::error::{NinnError, Result};
use crate::nn::{ResNetParams, ResNetShape, ResNetSystem};
use crate::rng::{derive_seed, seeded_rng, stream_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the L1 + L2 regularizer.
    pub lambda: f64,
    /// Weight of the bias-ordering penalty.
    pub gamma: f64,
    pub split_fraction: f64,
    /// Iterations without a validation improvement before stopping.
    pub patience: usize,
    pub max_iters: usize,
    /// Smoothing width of `|x|` in the L1 term.
    pub l1_delta: f64,
    pub seed: u64,
    pub box_scale: f64,
    /// Gradient-norm tolerance for BFGS.
    pub tol: f64,
    /// Fit the closing layer by ridge least squares before BFGS starts.
    pub warm_start_readout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-6,
            gamma: 100.0,
            split_fraction: 0.8,
            patience: 400,
            max_iters: 3000,
            l1_delta: 1e-8,
            seed: 0,
            box_scale: 1.0,
            tol: 1e-9,
            warm_start_readout: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(NinnError::InvalidArgument(what.to_string()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be >= 0");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if !(self.l1_delta > 0.0) {
            return bad("l1_delta must be positive");
        }
        if !(self.box_scale > 0.0) {
            return bad("box_scale must be positive");
        }
        if !(self.tol >= 0.0) {
            return bad("tol must be >= 0");
        }
        Ok(())
    }
}

/// Per-iteration record of one net's training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    /// Iteration whose parameters were returned.
    pub best_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetTrainReport {
    pub component: usize,
    pub history: TrainHistory,
    pub termination: Option<Termination>,
    /// The net produced non-finite values; its initial parameters are kept.
    pub diverged: bool,
    /// BFGS stopped on a line-search failure.
    pub warning: bool,
}

/// Box-initializes a system: net `i` reads `stencils[i]` and predicts
/// component `i`. `shape.input_dim` and `shape.output_dim` are overridden.
pub fn init_system(
    shape: &ResNetShape,
    stencils: Vec<Vec<usize>>,
    data: &Dataset,
    box_scale: f64,
    seed: u64,
) -> Result<ResNetSystem> {
    let state_dim = data.input_dim();
    if stencils.len() != state_dim {
        return Err(NinnError::DimensionMismatch(format!(
            "{} stencils for state dimension {state_dim}",
            stencils.len()
        )));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let nets = stencils
        .iter()
        .enumerate()
        .map(|(i, stencil)| {
            let net_shape = ResNetShape {
                input_dim: stencil.len(),
                output_dim: 1,
                ..*shape
            };
            let (inputs, _) = data.component_batch(&all, stencil, i);
            let mut rng = seeded_rng(derive_seed(stream_seed(seed, "box-init"), i as u64));
            box_init(&net_shape, &inputs, box_scale, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    ResNetSystem::new(nets, stencils, state_dim)
}

/// Trains every net of `system` independently (in parallel) on its
/// stencil-gathered inputs and scalar target, starting from the current
/// parameters. Returns the best-validation iterate of each net.
pub fn train_system(
    system: &ResNetSystem,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(ResNetSystem, Vec<NetTrainReport>)> {
    config.validate()?;
    if data.input_dim() != system.state_dim() || data.target_dim() != system.state_dim() {
        return Err(NinnError::DimensionMismatch(format!(
            "dataset has dimensions {}→{}, system has state dimension {}",
            data.input_dim(),
            data.target_dim(),
            system.state_dim()
        )));
    }
    if data.len() < 2 {
        return Err(NinnError::InvalidArgument(
            "training needs at least two samples".into(),
        ));
    }
    let mut rng = seeded_rng(stream_seed(config.seed, "split"));
    let (train_idx, val_idx) = data.split_indices(config.split_fraction, &mut rng);

    let results: Vec<(ResNetParams, NetTrainReport)> = (0..system.state_dim())
        .into_par_iter()
        .map(|i| {
            let stencil = &system.stencils()[i];
            let (tx, ty) = data.component_batch(&train_idx, stencil, i);
            let (vx, vy) = data.component_batch(&val_idx, stencil, i);
            train_net(i, &system.nets()[i], (&tx, &ty), (&vx, &vy), config)
        })
        .collect();
    let (nets, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((
        ResNetSystem::new(nets, system.stencils().to_vec(), system.state_dim())?,
        reports,
    ))
}

type Batch<'a> = (&'a [Vec<f64>], &'a [Vec<f64>]);

/// Trains one net with BFGS and validation patience.
pub fn train_net(
    component: usize,
    init: &ResNetParams,
    (train_x, train_y): Batch<'_>,
    (val_x, val_y): Batch<'_>,
    config: &TrainConfig,
) -> (ResNetParams, NetTrainReport) {
    let diverged = |history| {
        (
            init.clone(),
            NetTrainReport {
                component,
                history,
                termination: None,
                diverged: true,
                warning: false,
            },
        )
    };
    let mut start = init.clone();
    if config.warm_start_readout {
        if let Some(closing) = ridge_readout(&start, train_x, train_y) {
            start.closing_mut().as_mut_slice().copy_from_slice(&closing);
        }
    }
    let objective = match Objective::new(
        &start,
        train_x,
        train_y,
        config.lambda,
        config.gamma,
        config.l1_delta,
    ) {
        Ok(o) => o,
        Err(_) => return diverged(TrainHistory::default()),
    };
    let (vx, vy) = if val_x.is_empty() {
        (train_x, train_y)
    } else {
        (val_x, val_y)
    };

    let mut history = TrainHistory::default();
    let mut best_val = f64::INFINITY;
    let mut best_x = start.to_flat();
    let options = BfgsOptions {
        tol: config.tol,
        max_iters: config.max_iters,
        ..Default::default()
    };
    let report = bfgs_minimize_with(
        |x| match objective.value_and_gradient(x) {
            Ok(v) => v,
            Err(_) => (f64::INFINITY, vec![f64::NAN; x.len()]),
        },
        &start.to_flat(),
        &options,
        |state| {
            let val = data_loss(&objective.net_from(state.x), vx, vy).unwrap_or(f64::INFINITY);
            history.train_loss.push(state.f);
            history.val_loss.push(val);
            history.grad_norm.push(state.grad_norm);
            if val < best_val {
                best_val = val;
                best_x = state.x.to_vec();
                history.best_iter = state.iter;
            } else if state.iter - history.best_iter >= config.patience {
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        },
    );
    if report.termination == Termination::NonFiniteStart || !best_val.is_finite() {
        return diverged(history);
    }
    let net = objective.net_from(&best_x);
    (
        net,
        NetTrainReport {
            component,
            history,
            termination: Some(report.termination),
            diverged: false,
            warning: report.warning,
        },
    )
}

/// Ridge least-squares fit of `W_{L-1}` on the last hidden features.
fn ridge_readout(net: &ResNetParams, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = net.width();
    let features: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| net.forward(x).ok().map(|(_, tr)| tr.last().to_vec()))
        .collect::<Option<_>>()?;
    let phi = DMatrix::from_fn(features.len(), n, |r, c| features[r][c]);
    let gram = phi.transpose() * &phi;
    let ridge = 1e-8 * (gram.trace() / n as f64).max(1e-300);
    let gram = gram + DMatrix::identity(n, n) * ridge;
    let chol = gram.cholesky()?;
    let mut closing = Vec::with_capacity(net.output_dim() * n);
    for k in 0..net.output_dim() {
        let target = DVector::from_iterator(ys.len(), ys.iter().map(|y| y[k]));
        let rhs = phi.transpose() * target;
        let w = chol.solve(&rhs);
        closing.extend(w.iter().copied());
    }
    closing.iter().all(|v| v.is_finite()).then_some(closing)
}
