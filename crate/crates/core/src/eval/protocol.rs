use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metric::rmse;
use super::table::{RmseRow, RmseTable};
use crate::assimilation::{
    run_assimilation, AssimilationResult, Method, Model, NudgeSchedule, ObservationOperator,
    ObservationStream,
};
use crate::dynamics::{gaussian_state, OdeSpec, ReferenceRun};
use crate::error::{NinnError, Result};
use crate::nn::ResNetSystem;
use crate::rng::{derive_seed, seeded_rng, stream_seed};

/// Net label used for rows computed on the true ODE.
pub const ODE_LABEL: &str = "ode";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub system_label: String,
    pub n_runs: usize,
    pub k0: usize,
    pub k_end: usize,
    pub observed: Vec<usize>,
    pub methods: Vec<Method>,
    pub mu_grid: Vec<f64>,
    pub decay_grid: Vec<f64>,
    /// Model evaluations per observation window.
    pub substeps: usize,
    /// RK4 step of classic nudging on the true ODE.
    pub nudging_dt: f64,
    /// Standard deviation of observation noise; 0 means exact observations.
    pub noise_std: f64,
    pub seed: u64,
}

impl ProtocolConfig {
    /// Evaluation windows used for each system: 5 time units after a
    /// 5-unit transient for Lorenz 63, 15 units for Lorenz 96.
    pub fn for_spec(spec: &OdeSpec, n_runs: usize, observed: Vec<usize>, seed: u64) -> Self {
        let (label, k_end) = match spec {
            OdeSpec::Lorenz63 { .. } => ("lorenz63", 100),
            OdeSpec::Lorenz96 { .. } => ("lorenz96", 200),
        };
        Self {
            system_label: label.into(),
            n_runs,
            k0: 50,
            k_end,
            observed,
            methods: Method::ALL.to_vec(),
            mu_grid: crate::assimilation::MU_GRID.to_vec(),
            decay_grid: crate::assimilation::DECAY_FACTORS.to_vec(),
            substeps: 10,
            nudging_dt: 1e-3,
            noise_std: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_end <= self.k0 {
            return Err(NinnError::InvalidArgument("k_end must exceed k0".into()));
        }
        if self.n_runs == 0 {
            return Err(NinnError::InvalidArgument("n_runs must be positive".into()));
        }
        if self.substeps == 0 || !(self.nudging_dt > 0.0) {
            return Err(NinnError::InvalidArgument(
                "substeps and nudging_dt must be positive".into(),
            ));
        }
        if !(self.noise_std >= 0.0) {
            return Err(NinnError::InvalidArgument("noise_std must be >= 0".into()));
        }
        if self
            .mu_grid
            .iter()
            .chain(&self.decay_grid)
            .any(|v| !(*v >= 0.0))
        {
            return Err(NinnError::InvalidArgument(
                "mu and decay grids must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One (method, μ, Λ) combination. Methods without μ use `μ = Λ = 0`;
/// classic nudging uses `Λ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub mu: f64,
    pub lambda_decay: f64,
}

impl Cell {
    /// Directory-safe name such as `ninn1_mu5_lam0.2`.
    pub fn dir_name(&self) -> String {
        format!("{}_mu{}_lam{}", self.method, self.mu, self.lambda_decay)
    }
}

pub fn grid_cells(method: Method, mu_grid: &[f64], decay_grid: &[f64]) -> Vec<Cell> {
    let cell = |mu, lambda_decay| Cell {
        method,
        mu,
        lambda_decay,
    };
    if method.uses_decay() {
        mu_grid
            .iter()
            .flat_map(|&mu| decay_grid.iter().map(move |&l| cell(mu, l)))
            .collect()
    } else if method.uses_mu() {
        mu_grid.iter().map(|&mu| cell(mu, 0.0)).collect()
    } else {
        vec![cell(0.0, 0.0)]
    }
}

/// Per-run wrong initial conditions `N(0, 10²)`, shared by all methods.
pub fn wrong_initial_conditions(seed: u64, n_runs: usize, dim: usize) -> Vec<Vec<f64>> {
    let base = stream_seed(seed, "wrong-ic");
    (0..n_runs)
        .map(|i| gaussian_state(dim, &mut seeded_rng(derive_seed(base, i as u64))))
        .collect()
}

/// Observation stream of run `i` built from its truth checkpoints.
pub fn observation_stream(
    run: &ReferenceRun,
    op: &ObservationOperator,
    noise_std: f64,
    seed: u64,
) -> Result<ObservationStream> {
    let stream = ObservationStream::from_checkpoints(&run.checkpoints, op.clone())?;
    let mut rng = seeded_rng(derive_seed(
        stream_seed(seed, "obs-noise"),
        run.index as u64,
    ));
    stream.with_noise(noise_std, &mut rng)
}

/// A trained system entered into the comparison.
#[derive(Debug, Clone, Copy)]
pub struct Surrogate<'a> {
    pub label: &'a str,
    pub system: &'a ResNetSystem,
    pub dt_step: f64,
}

/// Runs one cell on every reference run, in run order. Checkpoint errors
/// are filled in from `truth[n]` (the run's truth checkpoints).
pub fn run_cell(
    cell: &Cell,
    model: Model<'_>,
    streams: &[ObservationStream],
    wrong_ics: &[Vec<f64>],
    truth: &[Vec<Vec<f64>>],
    substeps: usize,
) -> Result<Vec<AssimilationResult>> {
    if streams.len() != wrong_ics.len() || streams.len() != truth.len() {
        return Err(NinnError::DimensionMismatch(format!(
            "{} streams, {} initial conditions, {} truth runs",
            streams.len(),
            wrong_ics.len(),
            truth.len()
        )));
    }
    let schedule = NudgeSchedule::new(cell.mu, cell.lambda_decay, substeps)?;
    streams
        .par_iter()
        .zip(wrong_ics)
        .zip(truth)
        .map(|((stream, w0), u)| {
            let mut res = run_assimilation(cell.method, model, stream, &schedule, w0)?;
            res.attach_reference(u)?;
            Ok(res)
        })
        .collect()
}

/// Model evaluations per observation window for `model`.
pub fn substeps_for(model: &Model<'_>, delta_t_obs: f64, surrogate_substeps: usize) -> usize {
    match model {
        Model::Ode { dt, .. } => (delta_t_obs / dt).round().max(1.0) as usize,
        Model::Surrogate { .. } => surrogate_substeps,
    }
}

/// Runs every configured method and grid cell on every reference run and
/// tabulates the RMSE against the truth checkpoints. NINN methods and Direct
/// Observation run on each surrogate; classic nudging runs on `spec` with
/// RK4 steps of `nudging_dt`.
pub fn run_protocol(
    config: &ProtocolConfig,
    spec: &OdeSpec,
    surrogates: &[Surrogate<'_>],
    runs: &[ReferenceRun],
) -> Result<RmseTable> {
    config.validate()?;
    if runs.len() < config.n_runs {
        return Err(NinnError::DimensionMismatch(format!(
            "{} reference runs for a protocol of {}",
            runs.len(),
            config.n_runs
        )));
    }
    let runs = &runs[..config.n_runs];
    let dim = spec.dim();
    let op = ObservationOperator::new(config.observed.clone(), dim)?;
    let streams = runs
        .iter()
        .map(|run| observation_stream(run, &op, config.noise_std, config.seed))
        .collect::<Result<Vec<_>>>()?;
    let wrong_ics = wrong_initial_conditions(config.seed, runs.len(), dim);
    let truth: Vec<Vec<Vec<f64>>> = runs.iter().map(|r| r.checkpoints.states.clone()).collect();

    let mut jobs: Vec<(String, Cell, Model<'_>)> = Vec::new();
    for &method in &config.methods {
        for cell in grid_cells(method, &config.mu_grid, &config.decay_grid) {
            if method.needs_ode() {
                jobs.push((
                    ODE_LABEL.into(),
                    cell,
                    Model::Ode {
                        spec,
                        dt: config.nudging_dt,
                    },
                ));
            } else {
                for s in surrogates {
                    jobs.push((
                        s.label.to_string(),
                        cell,
                        Model::Surrogate {
                            system: s.system,
                            dt_step: s.dt_step,
                        },
                    ));
                }
            }
        }
    }

    let rows = jobs
        .par_iter()
        .map(|(label, cell, model)| {
            let substeps = substeps_for(model, streams[0].delta_t_obs, config.substeps);
            let results = run_cell(cell, *model, &streams, &wrong_ics, &truth, substeps)?;
            let alg: Vec<Vec<Vec<f64>>> =
                results.into_iter().map(|r| r.checkpoint_states).collect();
            Ok(RmseRow {
                system: config.system_label.clone(),
                net_label: label.clone(),
                method: cell.method,
                obs_pattern: op.label(),
                mu: cell.mu,
                lambda_decay: cell.lambda_decay,
                rmse: rmse(&alg, &truth, config.k0, config.k_end)?,
                complete: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = RmseTable { rows };
    table.sort();
    Ok(table)
}
