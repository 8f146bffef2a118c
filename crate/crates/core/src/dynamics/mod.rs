//! Ground-truth dynamics and data generation.

pub mod ode;
pub mod sampling;
pub mod trajectory;

pub use ode::{rhs, rk4_step, OdeSpec, Rk4};
pub use sampling::{
    gaussian_state, make_reference_runs, make_training_set, ReferenceConfig, ReferenceRun,
    SamplingConfig, IC_STD,
};
pub use trajectory::{integrate, IntegratorConfig, Trajectory};
