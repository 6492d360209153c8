//! Sparse storage, envelope Cholesky and the generalized symmetric eigensolver.

mod cholesky;
mod lanczos;
mod sparse;

pub use cholesky::EnvelopeCholesky;
pub use lanczos::{smallest_generalized, EigenOptions, GeneralizedEigen};
pub use sparse::CsrMatrix;
