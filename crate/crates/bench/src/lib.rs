//! Benchmark kernels, finite-difference certification and reporting for
//! `dslad`.

pub mod checks;
pub mod error;
pub mod fd;
pub mod kernel;
pub mod kernels;
pub mod oracle;
pub mod report;
pub mod value;

pub use error::{BenchError, Result};
pub use kernel::{check_gradient, evaluate, run, Evaluated, Kernel, Recorded, RunOptions};
pub use kernels::make_kernel;
pub use report::{BenchReport, GradientCheck};
