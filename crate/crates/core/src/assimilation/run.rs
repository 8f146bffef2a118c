use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::feedback::{direct_obs_step, ninn_type1_step, ninn_type2_step, Type2Variant};
use super::observation::{ObservationOperator, ObservationStream};
use super::schedule::NudgeSchedule;
use crate::dynamics::{OdeSpec, Rk4, Trajectory};
use crate::error::{NinnError, Result};
use crate::nn::matrix::all_finite;
use crate::nn::ResNetSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "nudging")]
    Nudging,
    #[serde(rename = "ninn1")]
    Ninn1,
    #[serde(rename = "ninn2-plain")]
    Ninn2Plain,
    #[serde(rename = "ninn2-lookahead")]
    Ninn2Lookahead,
    #[serde(rename = "direct-obs")]
    DirectObs,
    #[serde(rename = "free-run")]
    FreeRun,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Nudging,
        Method::Ninn1,
        Method::Ninn2Plain,
        Method::Ninn2Lookahead,
        Method::DirectObs,
        Method::FreeRun,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Nudging => "nudging",
            Method::Ninn1 => "ninn1",
            Method::Ninn2Plain => "ninn2-plain",
            Method::Ninn2Lookahead => "ninn2-lookahead",
            Method::DirectObs => "direct-obs",
            Method::FreeRun => "free-run",
        }
    }

    /// Whether the method reads observations at all.
    pub fn uses_observations(self) -> bool {
        self != Method::FreeRun
    }

    /// Whether `μ` affects the method.
    pub fn uses_mu(self) -> bool {
        matches!(
            self,
            Method::Nudging | Method::Ninn1 | Method::Ninn2Plain | Method::Ninn2Lookahead
        )
    }

    /// Whether the decay factor `Λ` affects the method. Classic nudging
    /// holds `μ` constant.
    pub fn uses_decay(self) -> bool {
        matches!(
            self,
            Method::Ninn1 | Method::Ninn2Plain | Method::Ninn2Lookahead
        )
    }

    /// Whether the method runs on the true ODE rather than a surrogate.
    pub fn needs_ode(self) -> bool {
        self == Method::Nudging
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = NinnError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| NinnError::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// The dynamics an assimilation run marches.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    /// A trained update map advancing the state by `dt_step` per evaluation.
    Surrogate {
        system: &'a ResNetSystem,
        dt_step: f64,
    },
    /// The true vector field, integrated with RK4 steps of size `dt`.
    Ode { spec: &'a OdeSpec, dt: f64 },
}

impl Model<'_> {
    pub fn state_dim(&self) -> usize {
        match self {
            Model::Surrogate { system, .. } => system.state_dim(),
            Model::Ode { spec, .. } => spec.dim(),
        }
    }

    pub fn step_size(&self) -> f64 {
        match self {
            Model::Surrogate { dt_step, .. } => *dt_step,
            Model::Ode { dt, .. } => *dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssimilationResult {
    /// Estimate after every model step, starting with `w0`.
    pub estimates: Trajectory,
    /// Observation times `t_k`.
    pub checkpoint_times: Vec<f64>,
    /// Forecast at `t_k`, before observation `k` is used.
    pub checkpoint_states: Vec<Vec<f64>>,
    /// `‖w(t_k) − u(t_k)‖₂`; empty until a reference is attached.
    pub checkpoint_errors: Vec<f64>,
    pub diverged: bool,
}

impl AssimilationResult {
    /// Fills `checkpoint_errors` from the true states at the checkpoints.
    pub fn attach_reference(&mut self, reference: &[Vec<f64>]) -> Result<()> {
        if reference.len() != self.checkpoint_states.len() {
            return Err(NinnError::DimensionMismatch(format!(
                "{} reference states for {} checkpoints",
                reference.len(),
                self.checkpoint_states.len()
            )));
        }
        self.checkpoint_errors = self
            .checkpoint_states
            .iter()
            .zip(reference)
            .map(|(w, u)| {
                if w.len() != u.len() {
                    return Err(NinnError::DimensionMismatch(format!(
                        "state of length {} against reference of length {}",
                        w.len(),
                        u.len()
                    )));
                }
                Ok(w.iter()
                    .zip(u)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt())
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Checks `substeps · step = Δt_obs` to a relative `1e-9`.
pub fn check_schedule(step: f64, substeps: usize, delta_t_obs: f64) -> Result<()> {
    let window = step * substeps as f64;
    if !(step > 0.0) || (window - delta_t_obs).abs() > 1e-9 * delta_t_obs {
        return Err(NinnError::ScheduleMismatch(format!(
            "{substeps} steps of {step} cover {window}, observation interval is {delta_t_obs}"
        )));
    }
    Ok(())
}

struct Recorder {
    result: AssimilationResult,
    dim: usize,
}

impl Recorder {
    fn new(t0: f64, w0: &[f64]) -> Self {
        Self {
            result: AssimilationResult {
                estimates: Trajectory::from_single(t0, w0.to_vec()),
                checkpoint_times: Vec::new(),
                checkpoint_states: Vec::new(),
                checkpoint_errors: Vec::new(),
                diverged: false,
            },
            dim: w0.len(),
        }
    }

    fn checkpoint(&mut self, t: f64, w: &[f64]) {
        self.result.checkpoint_times.push(t);
        self.result.checkpoint_states.push(w.to_vec());
    }

    /// Marks the run diverged and pads every remaining record with NaN.
    fn diverge(
        mut self,
        stream: &ObservationStream,
        window: usize,
        substep: usize,
        substeps: usize,
        dt: f64,
    ) -> AssimilationResult {
        let nan = vec![f64::NAN; self.dim];
        let t0 = stream.start_time();
        let n_windows = stream.len() - 1;
        for k in window..n_windows {
            let first = if k == window { substep + 1 } else { 1 };
            for i in first..=substeps {
                let t = if i == substeps {
                    t0 + (k + 1) as f64 * stream.delta_t_obs
                } else {
                    stream.entries[k].0 + i as f64 * dt
                };
                self.result.estimates.push(t, nan.clone());
            }
            self.checkpoint(stream.entries[k + 1].0, &nan);
        }
        self.result.diverged = true;
        self.result
    }
}

fn surrogate_step(
    method: Method,
    system: &ResNetSystem,
    w: &[f64],
    obs: &[f64],
    op: &ObservationOperator,
    mu_eff: f64,
    substep: usize,
) -> Result<Vec<f64>> {
    match method {
        Method::Ninn1 => ninn_type1_step(system, w, obs, op, mu_eff),
        Method::Ninn2Plain => ninn_type2_step(system, w, obs, op, mu_eff, Type2Variant::Plain),
        Method::Ninn2Lookahead => {
            ninn_type2_step(system, w, obs, op, mu_eff, Type2Variant::Lookahead)
        }
        Method::DirectObs => direct_obs_step(system, w, (substep == 0).then_some(obs), op),
        Method::FreeRun => system.forward(w),
        Method::Nudging => Err(NinnError::InvalidArgument(
            "classic nudging runs on the true ODE".into(),
        )),
    }
}

/// Marches `w0` from the first observation time through every observation
/// window.
///
/// Window `k` spans `[t_k, t_{k+1}]` and consists of `schedule.substeps`
/// model steps; step `i` uses observation `k` with strength
/// `schedule.effective_mu(i)`. Classic nudging uses `schedule.mu` throughout.
/// A blow-up pads the remaining estimates with NaN and sets `diverged`.
pub fn run_assimilation(
    method: Method,
    model: Model<'_>,
    stream: &ObservationStream,
    schedule: &NudgeSchedule,
    w0: &[f64],
) -> Result<AssimilationResult> {
    let dim = model.state_dim();
    if w0.len() != dim || stream.operator.state_dim() != dim {
        return Err(NinnError::DimensionMismatch(format!(
            "initial state of length {}, observations of dimension {}, model of dimension {dim}",
            w0.len(),
            stream.operator.state_dim()
        )));
    }
    let dt = model.step_size();
    let substeps = schedule.substeps;
    check_schedule(dt, substeps, stream.delta_t_obs)?;
    match (method, model) {
        (Method::Nudging, Model::Surrogate { .. }) => {
            return Err(NinnError::InvalidArgument(
                "classic nudging needs the ODE model".into(),
            ))
        }
        (
            Method::Ninn1 | Method::Ninn2Plain | Method::Ninn2Lookahead | Method::DirectObs,
            Model::Ode { .. },
        ) => {
            return Err(NinnError::InvalidArgument(format!(
                "{method} needs a trained surrogate"
            )))
        }
        _ => {}
    }
    let op = &stream.operator;
    let mu_schedule = schedule.decay_schedule();
    let mut rec = Recorder::new(stream.start_time(), w0);
    let mut w = w0.to_vec();
    let mut rk4 = match model {
        Model::Ode { spec, .. } => Some((spec, Rk4::new(dim))),
        Model::Surrogate { .. } => None,
    };
    for k in 0..stream.len() - 1 {
        let (t_k, obs) = (stream.entries[k].0, &stream.entries[k].1);
        rec.checkpoint(t_k, &w);
        for (i, &mu_i) in mu_schedule.iter().enumerate() {
            let next = match (&model, rk4.as_mut()) {
                (Model::Surrogate { system, .. }, _) => {
                    surrogate_step(method, system, &w, obs, op, mu_i, i)
                }
                (Model::Ode { .. }, Some((spec, stepper))) => {
                    let mut x = w.clone();
                    if method == Method::Nudging {
                        nudged_rk4_step(spec, stepper, &mut x, dt, schedule.mu, op, obs);
                    } else {
                        stepper.step(spec, &mut x, dt);
                    }
                    Ok(x)
                }
                (Model::Ode { .. }, None) => unreachable!("ODE model always has a stepper"),
            };
            match next {
                Ok(x) if all_finite(&x) => w = x,
                Ok(_) => return Ok(rec.diverge(stream, k, i, substeps, dt)),
                Err(e) if e.is_divergence() => return Ok(rec.diverge(stream, k, i, substeps, dt)),
                Err(e) => return Err(e),
            }
            let t = if i + 1 == substeps {
                stream.entries[k + 1].0
            } else {
                t_k + (i + 1) as f64 * dt
            };
            rec.result.estimates.push(t, w.clone());
        }
    }
    let last = stream.entries.last().expect("stream is non-empty").0;
    rec.checkpoint(last, &w);
    Ok(rec.result)
}

/// One RK4 step of `∂_t w = f(w) − μ(I_M w − w^QoI)` with the observation
/// held fixed.
fn nudged_rk4_step(
    spec: &OdeSpec,
    stepper: &mut Rk4,
    x: &mut [f64],
    dt: f64,
    mu: f64,
    op: &ObservationOperator,
    obs: &[f64],
) {
    if mu == 0.0 {
        stepper.step(spec, x, dt);
        return;
    }
    let observed = op.observed();
    stepper.step_with(
        |w, out| {
            spec.rhs_into(w, out);
            for (&j, &q) in observed.iter().zip(obs) {
                out[j] -= mu * (w[j] - q);
            }
        },
        x,
        dt,
    );
}

/// Classic continuous-data-assimilation nudging of the true ODE with
/// constant strength `mu` and RK4 steps of size `dt`.
pub fn classic_nudging(
    spec: &OdeSpec,
    stream: &ObservationStream,
    mu: f64,
    w0: &[f64],
    dt: f64,
) -> Result<AssimilationResult> {
    let substeps = (stream.delta_t_obs / dt).round().max(1.0) as usize;
    let schedule = NudgeSchedule::new(mu, 0.0, substeps)?;
    run_assimilation(
        Method::Nudging,
        Model::Ode { spec, dt },
        stream,
        &schedule,
        w0,
    )
}
