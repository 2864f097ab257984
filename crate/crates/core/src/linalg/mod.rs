//! Dense vectors and matrices with differentiated operations.

mod dense;
mod ops;
mod qr;

pub use dense::{DenseMatrix, DenseVector};
pub use ops::{ContainerHandles, ContainerKind, Handles, KindHandles, LinAlgTape, LinearKind};
pub use qr::QrFactors;
