//! Dense residual networks and systems of them.

pub mod activation;
pub mod matrix;
pub mod model_io;
pub mod resnet;
pub mod system;

pub use activation::{activation, activation_derivative, ActivationSpec};
pub use matrix::Matrix;
pub use model_io::{load_model, save_model};
pub use resnet::{
    backprop, forward, Gradients, HiddenTrace, LayerParams, ResNetParams, ResNetShape,
};
pub use system::{identity_stencils, lorenz96_stencils, system_forward, ResNetSystem};
