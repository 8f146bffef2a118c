use serde::{Deserialize, Serialize};

use crate::error::{NinnError, Result};

/// Ground-truth dynamical systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OdeSpec {
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    Lorenz96 { forcing: f64, dim: usize },
}

impl OdeSpec {
    pub fn lorenz63() -> Self {
        OdeSpec::Lorenz63 {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn lorenz96(dim: usize) -> Self {
        OdeSpec::Lorenz96 { forcing: 10.0, dim }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OdeSpec::Lorenz63 { sigma, rho, beta } => {
                if ![sigma, rho, beta].iter().all(|v| v.is_finite()) {
                    return Err(NinnError::InvalidArgument(
                        "Lorenz 63 parameters must be finite".into(),
                    ));
                }
            }
            OdeSpec::Lorenz96 { forcing, dim } => {
                if dim < 4 {
                    return Err(NinnError::InvalidArgument(format!(
                        "Lorenz 96 needs at least 4 components, got {dim}"
                    )));
                }
                if !forcing.is_finite() {
                    return Err(NinnError::InvalidArgument("forcing must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match *self {
            OdeSpec::Lorenz63 { .. } => 3,
            OdeSpec::Lorenz96 { dim, .. } => dim,
        }
    }

    /// Writes `f(x)` into `out`.
    pub fn rhs_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match *self {
            OdeSpec::Lorenz63 { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            OdeSpec::Lorenz96 { forcing, dim } => {
                for i in 0..dim {
                    let next = x[(i + 1) % dim];
                    let prev = x[(i + dim - 1) % dim];
                    let prev2 = x[(i + dim - 2) % dim];
                    out[i] = (next - prev2) * prev - x[i] + forcing;
                }
            }
        }
    }

    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(x, &mut out);
        out
    }
}

/// Free-function form of [`OdeSpec::rhs`].
pub fn rhs(spec: &OdeSpec, x: &[f64]) -> Vec<f64> {
    spec.rhs(x)
}

/// Classical four-stage Runge–Kutta for any autonomous vector field, with
/// reusable scratch space.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` in place by one step of size `dt`.
    pub fn step_with(&mut self, f: impl Fn(&[f64], &mut [f64]), x: &mut [f64], dt: f64) {
        let half = 0.5 * dt;
        f(x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    pub fn step(&mut self, spec: &OdeSpec, x: &mut [f64], dt: f64) {
        self.step_with(|y, out| spec.rhs_into(y, out), x, dt);
    }
}

/// One RK4 step of size `dt` from `x`.
pub fn rk4_step(spec: &OdeSpec, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(NinnError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut next = x.to_vec();
    Rk4::new(x.len()).step(spec, &mut next, dt);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(NinnError::IntegrationDivergence {
            time: dt,
            partial: Box::new(super::Trajectory::from_single(0.0, x.to_vec())),
        })
    }
}
