use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::resnet::ResNetParams;
use crate::error::{NinnError, Result};

/// One scalar-output net per state component, each reading its own stencil
/// of input components. Together the nets form a learned update map
/// `u(t_n) ↦ u(t_{n+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetSystem {
    nets: Vec<ResNetParams>,
    stencils: Vec<Vec<usize>>,
    state_dim: usize,
}

impl ResNetSystem {
    pub fn new(
        nets: Vec<ResNetParams>,
        stencils: Vec<Vec<usize>>,
        state_dim: usize,
    ) -> Result<Self> {
        if nets.len() != state_dim || stencils.len() != state_dim {
            return Err(NinnError::DimensionMismatch(format!(
                "system of dimension {state_dim} needs {state_dim} nets and stencils, got {} and {}",
                nets.len(),
                stencils.len()
            )));
        }
        let depth = nets.first().map(|n| n.depth());
        for (i, (net, stencil)) in nets.iter().zip(&stencils).enumerate() {
            if net.output_dim() != 1 {
                return Err(NinnError::DimensionMismatch(format!(
                    "net {i} has output dimension {}, expected 1",
                    net.output_dim()
                )));
            }
            if stencil.len() != net.input_dim() {
                return Err(NinnError::DimensionMismatch(format!(
                    "net {i} reads {} inputs but its stencil has {}",
                    net.input_dim(),
                    stencil.len()
                )));
            }
            if let Some(&bad) = stencil.iter().find(|&&s| s >= state_dim) {
                return Err(NinnError::DimensionMismatch(format!(
                    "stencil index {bad} of net {i} out of range for dimension {state_dim}"
                )));
            }
            if Some(net.depth()) != depth {
                return Err(NinnError::DimensionMismatch(
                    "all nets in a system must share the same depth".into(),
                ));
            }
        }
        Ok(Self {
            nets,
            stencils,
            state_dim,
        })
    }

    pub fn nets(&self) -> &[ResNetParams] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [ResNetParams] {
        &mut self.nets
    }

    pub fn stencils(&self) -> &[Vec<usize>] {
        &self.stencils
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn depth(&self) -> usize {
        self.nets[0].depth()
    }

    /// Inputs of net `i` taken from the full state.
    pub fn gather(&self, i: usize, u: &[f64]) -> Vec<f64> {
        self.stencils[i].iter().map(|&j| u[j]).collect()
    }

    fn check_state(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.state_dim {
            return Err(NinnError::DimensionMismatch(format!(
                "state has length {}, expected {}",
                u.len(),
                self.state_dim
            )));
        }
        Ok(())
    }

    /// Applies the learned update map.
    pub fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_state(u)?;
        (0..self.state_dim)
            .map(|i| self.component_forward(i, u))
            .collect()
    }

    /// Same as [`forward`](Self::forward) with the nets evaluated in parallel.
    /// Results are identical.
    pub fn par_forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_state(u)?;
        (0..self.state_dim)
            .into_par_iter()
            .map(|i| self.component_forward(i, u))
            .collect()
    }

    fn component_forward(&self, i: usize, u: &[f64]) -> Result<f64> {
        self.nets[i]
            .output(&self.gather(i, u))
            .map(|o| o[0])
            .map_err(|e| e.in_component(i))
    }
}

/// Every net reads the full state.
pub fn identity_stencils(state_dim: usize) -> Vec<Vec<usize>> {
    (0..state_dim).map(|_| (0..state_dim).collect()).collect()
}

/// Lorenz 96 reduced stencil: net `i` reads `(i-2, i-1, i, i+1)` with cyclic wrap.
pub fn lorenz96_stencils(state_dim: usize) -> Vec<Vec<usize>> {
    let d = state_dim as isize;
    (0..d)
        .map(|i| {
            [-2, -1, 0, 1]
                .iter()
                .map(|k| (i + k).rem_euclid(d) as usize)
                .collect()
        })
        .collect()
}

/// Free-function form of [`ResNetSystem::forward`].
pub fn system_forward(system: &ResNetSystem, u: &[f64]) -> Result<Vec<f64>> {
    system.forward(u)
}
