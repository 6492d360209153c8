#![no_std]
//! Spectral geometry on model spaces and triangle meshes: heat kernels, the
//! heat-kernel pull-back metric, the associated Laplacian and collapse
//! diagnostics.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod field;
pub mod linalg;
pub(crate) mod math;
pub mod metric;
pub mod operators;
pub mod quad;
pub mod spaces;
pub mod spectral;

pub use error::{Error, Result};
