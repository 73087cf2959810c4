//! Numerics for the quadratic Fock space of the renormalized square of
//! white noise.
//!
//! Test functions are modelled as step functions ([`testfn`]). On top of
//! them the crate evaluates exponential-vector kernels ([`kernel`]),
//! n-particle inner products ([`nparticle`]), one-particle operators and
//! the classification of their quadratic second quantization
//! ([`operators`]), and finite spans of exponential vectors ([`fockspan`]).

pub mod acceptance;
pub mod error;
pub mod fockspan;
mod json;
pub mod kernel;
pub mod linalg;
pub mod nparticle;
pub mod operators;
pub mod sampling;
pub mod testfn;

pub use error::{Error, Result};
pub use kernel::{kernel, kernel_gram, qexp_exists, CouplingConstant, KernelValue};
pub use linalg::HermitianMatrix;
pub use testfn::{Cell, StepFunction};
