use serde::{Deserialize, Serialize};

use super::ode::{OdeSpec, Rk4};
use crate::error::{NinnError, Result};

/// States on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn from_single(t: f64, x: Vec<f64>) -> Self {
        Self {
            times: vec![t],
            states: vec![x],
        }
    }

    pub fn push(&mut self, t: f64, x: Vec<f64>) {
        self.times.push(t);
        self.states.push(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new()
    }
}

/// Fixed-step classical RK4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
}

impl IntegratorConfig {
    /// Step used for ground truth.
    pub const TRUTH_DT: f64 = 1e-3;

    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(NinnError::InvalidArgument(format!(
                "integrator dt must be positive, got {dt}"
            )));
        }
        Ok(Self { dt })
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: Self::TRUTH_DT }
    }
}

/// Integrates from `t0` to `t1`, recording every step. The step is shrunk
/// to `(t1 - t0)/n` with `n = ⌈(t1 - t0)/dt⌉` so the grid lands on `t1`.
pub fn integrate(
    spec: &OdeSpec,
    x0: &[f64],
    t0: f64,
    t1: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    if x0.len() != spec.dim() {
        return Err(NinnError::DimensionMismatch(format!(
            "initial state has length {}, system has dimension {}",
            x0.len(),
            spec.dim()
        )));
    }
    if !(t1 >= t0) {
        return Err(NinnError::InvalidArgument(format!(
            "integration interval [{t0}, {t1}] is reversed"
        )));
    }
    let span = t1 - t0;
    let n = ((span / config.dt) - 1e-9).ceil().max(0.0) as usize;
    let mut traj = Trajectory::from_single(t0, x0.to_vec());
    if n == 0 {
        return Ok(traj);
    }
    let h = span / n as f64;
    let mut stepper = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    for k in 1..=n {
        stepper.step(spec, &mut x, h);
        let t = t0 + k as f64 * h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(NinnError::IntegrationDivergence {
                time: t,
                partial: Box::new(traj),
            });
        }
        traj.push(t, x.clone());
    }
    Ok(traj)
}

/// Advances `x` by `steps` RK4 steps of size `dt` without recording.
pub(crate) fn advance(
    spec: &OdeSpec,
    stepper: &mut Rk4,
    x: &mut [f64],
    dt: f64,
    steps: usize,
) -> bool {
    for _ in 0..steps {
        stepper.step(spec, x, dt);
    }
    x.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_length_interval() {
        let tr = integrate(
            &OdeSpec::lorenz63(),
            &[1.0, 2.0, 3.0],
            5.0,
            5.0,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.times[0], 5.0);
    }

    #[test]
    fn restart_from_midpoint_reproduces_tail() {
        let spec = OdeSpec::lorenz63();
        let cfg = IntegratorConfig::new(1e-3).unwrap();
        let full = integrate(&spec, &[1.0, 1.0, 1.0], 0.0, 2.0, &cfg).unwrap();
        assert_eq!(full.len(), 2001);
        let mid = &full.states[1000];
        let tail = integrate(&spec, mid, 1.0, 2.0, &cfg).unwrap();
        assert_eq!(tail.states.last(), full.states.last());
        for (a, b) in tail.states.iter().zip(&full.states[1000..]) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn uniform_spacing() {
        let tr = integrate(
            &OdeSpec::lorenz63(),
            &[1.0, 0.0, 0.0],
            0.0,
            0.35,
            &IntegratorConfig::new(0.1).unwrap(),
        )
        .unwrap();
        assert_eq!(tr.len(), 5);
        assert!((tr.times[4] - 0.35).abs() < 1e-15);
        let h = tr.times[1] - tr.times[0];
        for w in tr.times.windows(2) {
            assert!((w[1] - w[0] - h).abs() < 1e-14);
        }
    }

    #[test]
    fn divergence_returns_partial() {
        // Backwards Lorenz 63 escapes to infinity.
        let spec = OdeSpec::Lorenz63 {
            sigma: -10.0,
            rho: 28.0,
            beta: -8.0 / 3.0,
        };
        match integrate(
            &spec,
            &[10.0, 10.0, 10.0],
            0.0,
            100.0,
            &IntegratorConfig::new(0.01).unwrap(),
        ) {
            Err(NinnError::IntegrationDivergence { time, partial }) => {
                assert!(time > 0.0 && time < 100.0);
                assert!(!partial.is_empty());
                assert!(partial.states.iter().flatten().all(|v| v.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn reversed_interval_is_rejected() {
        assert!(integrate(
            &OdeSpec::lorenz63(),
            &[0.0; 3],
            1.0,
            0.0,
            &Default::default()
        )
        .is_err());
    }
}
