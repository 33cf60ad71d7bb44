//! Minimal dense-tensor engine with reverse-mode autodiff, built for the
//! Gaussian adaptive attention experiments in this workspace: row-major
//! `f64` tensors, a dynamic operation graph, Adam with decoupled weight
//! decay, Xavier initialization, and deterministic seeded randomness.

mod autograd;
mod error;
mod optim;
mod rng;
mod tensor;

pub use autograd::{grad_check, grad_check_multi, GRAD_CHECK_STEP};
pub use error::{Result, TensorError};
pub use optim::{xavier_init, ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use rng::RngState;
pub use tensor::{concat, im2col, max_axis_detached, softmax, Conv2dGeom, DenseTensor};
