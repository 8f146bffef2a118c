//! Feedback control of trained surrogates and of the true ODE.

pub mod case2;
pub mod feedback;
pub mod observation;
pub mod run;
pub mod schedule;

pub use case2::case2_direction;
pub use feedback::{direct_obs_step, ninn_type1_step, ninn_type2_step, Type2Variant};
pub use observation::{ObservationOperator, ObservationStream, StateSpaceMask};
pub use run::{
    check_schedule, classic_nudging, run_assimilation, AssimilationResult, Method, Model,
};
pub use schedule::{NudgeSchedule, DECAY_FACTORS, MU_GRID};
