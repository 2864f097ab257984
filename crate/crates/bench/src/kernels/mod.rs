//! Benchmark kernels.

pub mod burgers;
pub mod t1;
pub mod t2;
pub mod t3;
pub mod t4;

use dslad::linalg::{DenseMatrix, DenseVector};
use dslad::Entity;
use rand::Rng;

use crate::error::{BenchError, Result};
use crate::kernel::Kernel;

pub use burgers::{Burgers, BurgersConfig};
pub use t1::MatMul;
pub use t2::QrSolve;
pub use t3::Kalman;
pub use t4::L1Analysis;

pub const CASES: [&str; 5] = ["burgers", "t1", "t2", "t3", "t4"];

/// Builds the kernel named `case`.
pub fn make_kernel(case: &str, size: usize, steps: usize, seed: u64) -> Result<Box<dyn Kernel>> {
    Ok(match case {
        "burgers" => Box::new(Burgers::new(BurgersConfig::new(size, steps))?),
        "t1" => Box::new(MatMul::new(size, steps, seed)?),
        "t2" => Box::new(QrSolve::new(size, steps, seed)?),
        "t3" => Box::new(Kalman::new(size, steps, seed)?),
        "t4" => Box::new(L1Analysis::new(size, steps, seed)?),
        other => return Err(BenchError::Config(format!("unknown case {other:?}"))),
    })
}

pub(crate) fn require_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(BenchError::Config("size must be at least 1".into()));
    }
    Ok(())
}

pub(crate) fn uniform(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub(crate) fn random_vector(rng: &mut impl Rng, n: usize) -> DenseVector {
    DenseVector::from(uniform(rng, n))
}

pub(crate) fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = uniform(rng, rows * cols);
    DenseMatrix::from_fn(rows, cols, |r, c| data[r * cols + c])
}

/// `G Gᵀ / n + I` for a random `G`.
pub(crate) fn random_spd(rng: &mut impl Rng, n: usize) -> Result<DenseMatrix> {
    let g = random_matrix(rng, n, n);
    let mut s = g.matmul_tr(&g)?;
    for r in 0..n {
        for c in 0..n {
            s[(r, c)] /= n as f64;
        }
        s[(r, r)] += 1.0;
    }
    Ok(s)
}

/// `a·x + b·y` element-wise.
pub(crate) fn lin<T: Entity>(a: f64, x: &T, b: f64, y: &T) -> Result<T> {
    if x.shape() != y.shape() {
        return Err(BenchError::Tape(dslad::Error::DimensionMismatch { op: "lin", lhs: x.shape(), rhs: y.shape() }));
    }
    let data = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| a * p + b * q).collect();
    Ok(T::from_shape_vec(x.shape(), data)?)
}

pub(crate) fn squared_norm<T: Entity>(x: &T) -> f64 {
    x.as_slice().iter().map(|v| v * v).sum()
}
