//! Repeated linear solve `x = A⁻¹b` with output `x·x`.

use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape, QrFactors};
use dslad::{Active, StatementHandle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{random_matrix, random_vector, require_size};
use crate::error::{BenchError, Result};
use crate::kernel::{Kernel, Recorded};
use crate::value::Value;

pub const TOLERANCE: f64 = 1e-5;
const MAX_DRAWS: usize = 16;

pub struct QrSolve {
    n: usize,
    steps: usize,
    redraws: usize,
    inputs: Vec<Value>,
}

/// Random matrix with its diagonal pushed past the row sums.
fn dominant(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let mut a = random_matrix(rng, n, n);
    for r in 0..n {
        let off: f64 = (0..n).filter(|&c| c != r).map(|c| a[(r, c)].abs()).sum();
        let sign = if a[(r, r)] < 0.0 { -1.0 } else { 1.0 };
        a[(r, r)] = sign * (off + 1.0);
    }
    a
}

impl QrSolve {
    pub fn new(n: usize, steps: usize, seed: u64) -> Result<Self> {
        require_size(n)?;
        if steps == 0 {
            return Err(BenchError::Config("t2 needs at least one step".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for redraws in 0..MAX_DRAWS {
            let a = dominant(&mut rng, n);
            if QrFactors::new(&a).is_err() {
                continue;
            }
            let b = random_vector(&mut rng, n);
            return Ok(QrSolve { n, steps, redraws, inputs: vec![Value::Matrix(a), Value::Vector(b)] });
        }
        Err(BenchError::Config(format!("no regular matrix in {MAX_DRAWS} draws")))
    }

    pub fn from_system(a: DenseMatrix, b: DenseVector, steps: usize) -> Self {
        QrSolve { n: a.rows(), steps, redraws: 0, inputs: vec![Value::Matrix(a), Value::Vector(b)] }
    }

    /// Singular draws discarded while generating the system.
    pub fn redraws(&self) -> usize {
        self.redraws
    }
}

impl Kernel for QrSolve {
    fn case(&self) -> &'static str {
        "t2"
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
        let (a, b) = (inputs[0].matrix(), inputs[1].vector());
        let mut y = 0.0;
        for _ in 0..self.steps {
            let x = QrFactors::new(a)?.solve_vec(b)?;
            y = x.dot(&x);
        }
        Ok(y)
    }

    fn record(&self, tape: &mut LinAlgTape, _: &[StatementHandle], inputs: &[Value]) -> Result<Recorded> {
        let a = inputs[0].register(tape)?;
        let b = inputs[1].register(tape)?;
        let mut x = Active::passive(DenseVector::zeros_len(0));
        let mut y = Active::passive(0.0);
        for _ in 0..self.steps {
            tape.solve_into(&mut x, a.matrix(), b.vector())?;
            tape.dot_into(&mut y, &x, &x)?;
        }
        Ok(Recorded { output: y, inputs: vec![a, b] })
    }
}
