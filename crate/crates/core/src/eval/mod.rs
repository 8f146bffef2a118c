//! Multi-run comparison of assimilation methods.

pub mod metric;
pub mod protocol;
pub mod table;

pub use metric::{rmse, rmse_from_errors};
pub use protocol::{
    grid_cells, observation_stream, run_cell, run_protocol, substeps_for, wrong_initial_conditions,
    Cell, ProtocolConfig, Surrogate, ODE_LABEL,
};
pub use table::{RmseRow, RmseTable};
