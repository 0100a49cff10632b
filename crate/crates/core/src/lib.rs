pub mod blocks;
pub mod circuit;
pub mod convolution;
pub mod encodings;
pub mod error;
pub mod linalg;
pub mod network;
pub mod nonlinear;
pub mod polynomials;
pub mod qram;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
