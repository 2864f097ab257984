//! Repeated matrix product `C = A·B`, output `sum(C)`.

use dslad::linalg::{DenseMatrix, LinAlgTape};
use dslad::{Active, Entity, StatementHandle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{random_matrix, require_size};
use crate::error::{BenchError, Result};
use crate::kernel::{Kernel, Recorded};
use crate::value::Value;

pub const TOLERANCE: f64 = 1e-6;

pub struct MatMul {
    n: usize,
    steps: usize,
    inputs: Vec<Value>,
}

impl MatMul {
    pub fn new(n: usize, steps: usize, seed: u64) -> Result<Self> {
        require_size(n)?;
        if steps == 0 {
            return Err(BenchError::Config("t1 needs at least one step".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(&mut rng, n, n);
        let b = random_matrix(&mut rng, n, n);
        Ok(Self::from_matrices(a, b, steps))
    }

    pub fn from_matrices(a: DenseMatrix, b: DenseMatrix, steps: usize) -> Self {
        MatMul { n: a.rows(), steps, inputs: vec![Value::Matrix(a), Value::Matrix(b)] }
    }

    fn ones(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |_, _| 1.0)
    }
}

/// Scalar operations a per-scalar tape records for one `n×n` product:
/// `n` matrix-vector products of `2n² − n` operations each.
pub fn per_scalar_ops(n: usize) -> usize {
    n * (2 * n * n - n)
}

impl Kernel for MatMul {
    fn case(&self) -> &'static str {
        "t1"
    }

    fn size(&self) -> usize {
        self.n
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn tolerance(&self) -> f64 {
        TOLERANCE
    }

    fn inputs(&self) -> &[Value] {
        &self.inputs
    }

    fn checked_inputs(&self) -> Vec<usize> {
        vec![0, 1]
    }

    fn primal(&self, inputs: &[Value]) -> Result<f64> {
        let (a, b) = (inputs[0].matrix(), inputs[1].matrix());
        let mut c = DenseMatrix::zero_element();
        for _ in 0..self.steps {
            c = a.matmul(b)?;
        }
        Ok(c.as_slice().iter().sum())
    }

    fn record(&self, tape: &mut LinAlgTape, _: &[StatementHandle], inputs: &[Value]) -> Result<Recorded> {
        let a = inputs[0].register(tape)?;
        let b = inputs[1].register(tape)?;
        let mut c = Active::passive(DenseMatrix::zero_element());
        for _ in 0..self.steps {
            tape.mat_mul_into(&mut c, a.matrix(), b.matrix())?;
        }
        let ones = Active::passive(self.ones());
        let output = tape.dot(&c, &ones)?;
        Ok(Recorded { output, inputs: vec![a, b] })
    }
}
