use thiserror::Error;

use crate::dynamics::Trajectory;

#[derive(Debug, Error)]
pub enum NinnError {
    /// Forward or reverse propagation produced a non-finite value.
    #[error("non-finite value at layer {layer}")]
    Divergence { layer: usize },

    #[error("net for component {component} diverged: {source}")]
    ComponentDivergence {
        component: usize,
        #[source]
        source: Box<NinnError>,
    },

    /// Integration blew up; carries everything computed before the blow-up.
    #[error("integration diverged at t = {time}")]
    IntegrationDivergence { time: f64, partial: Box<Trajectory> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Observation cadence and model step size do not fit together.
    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl NinnError {
    pub(crate) fn in_component(self, component: usize) -> Self {
        NinnError::ComponentDivergence {
            component,
            source: Box::new(self),
        }
    }

    /// True for the numerical blow-up variants.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            NinnError::Divergence { .. }
                | NinnError::ComponentDivergence { .. }
                | NinnError::IntegrationDivergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, NinnError>;
