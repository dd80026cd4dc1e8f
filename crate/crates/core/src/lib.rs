//! Model-based iterative reconstruction for linear inverse problems:
//! classical ISTA / FISTA / FISTA-TV solvers and the unrolled, trainable
//! FISTA-Net.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod fistanet;
pub mod ftns;
pub mod operators;
pub mod phantoms;
pub mod rng;
pub mod solvers;
pub mod tensor;
pub mod training;
pub mod weights;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Image2D, Tensor};
