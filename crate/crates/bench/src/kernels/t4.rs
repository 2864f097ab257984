//! L1-analysis convex solver iterations.
//!
//! ```text
//! y1 = α v1 + τ z1        y2 = α v2 + τ z2
//! x1 = Wᵀ y1 − Aᵀ y2      x  = x0 + β x1
//! z1 = y1 − W x           z2 = y2 − (y − A x)
//! v1 = α v1 + τ z1        v2 = α v2 + τ z2
//! ```
//!
//! Output is `‖v1‖² + ‖v2‖²` after the last step.

use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape};
use dslad::{Active, Entity, StatementHandle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lin, random_matrix, random_vector, require_size, squared_norm};
use crate::error::Result;
use crate::kernel::{Kernel, Recorded};
use crate::value::{Tracked, Value};

pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct L1State {
    pub w: DenseMatrix,
    pub a: DenseMatrix,
    pub x0: DenseVector,
    pub y: DenseVector,
    pub v1: DenseVector,
    pub z1: DenseVector,
    pub v2: DenseVector,
    pub z2: DenseVector,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

const W: usize = 0;
const A: usize = 1;
const X0: usize = 2;
const Y: usize = 3;
const V1: usize = 4;
const Z1: usize = 5;
const V2: usize = 6;
const Z2: usize = 7;

impl L1State {
    /// Random state. Matrices are scaled by `1/n` to keep iterates bounded.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        require_size(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / n as f64;
        let mut w = random_matrix(&mut rng, n, n);
        let mut a = random_matrix(&mut rng, n, n);
        w.as_mut_slice().iter_mut().chain(a.as_mut_slice()).for_each(|x| *x *= scale);
        Ok(L1State {
            w,
            a,
            x0: random_vector(&mut rng, n),
            y: random_vector(&mut rng, n),
            v1: random_vector(&mut rng, n),
            z1: random_vector(&mut rng, n),
            v2: random_vector(&mut rng, n),
            z2: random_vector(&mut rng, n),
            alpha: rng.gen_range(0.5..1.0),
            beta: rng.gen_range(0.1..0.5),
            tau: rng.gen_range(0.1..0.5),
        })
    }
}

pub struct L1Analysis {
    n: usize,
    steps: usize,
    coefficients: [f64; 3],
    inputs: Vec<Value>,
}

/// Final `(v1, z1, v2, z2)`.
pub type L1Result = (DenseVector, DenseVector, DenseVector, DenseVector);

impl L1Analysis {
    pub fn new(n: usize, steps: usize, seed: u64) -> Result<Self> {
        Ok(Self::from_state(L1State::random(n, seed)?, steps))
    }

    pub fn from_state(s: L1State, steps: usize) -> Self {
        let v = Value::Vector;
        L1Analysis {
            n: s.x0.len(),
            steps,
            coefficients: [s.alpha, s.beta, s.tau],
            inputs: vec![
                Value::Matrix(s.w),
                Value::Matrix(s.a),
                v(s.x0),
                v(s.y),
                v(s.v1),
                v(s.z1),
                v(s.v2),
                v(s.z2),
            ],
        }
    }

    /// Runs the iteration on plain values.
    pub fn iterate(&self, inputs: &[Value]) -> Result<L1Result> {
        let [alpha, beta, tau] = self.coefficients;
        let (w, a) = (inputs[W].matrix(), inputs[A].matrix());
        let (x0, y) = (inputs[X0].vector(), inputs[Y].vector());
        let mut v1 = inputs[V1].vector().clone();
        let mut z1 = inputs[Z1].vector().clone();
        let mut v2 = inputs[V2].vector().clone();
        let mut z2 = inputs[Z2].vector().clone();
        for _ in 0..self.steps {
            let y1 = lin(alpha, &v1, tau, &z1)?;
            let y2 = lin(alpha, &v2, tau, &z2)?;
            let x1 = lin(1.0, &w.tr_matvec(&y1)?, -1.0, &a.tr_matvec(&y2)?)?;
            let x = lin(1.0, x0, beta, &x1)?;
            z1 = lin(1.0, &y1, -1.0, &w.matvec(&x)?)?;
            z2 = lin(1.0, &y2, -1.0, &lin(1.0, y, -1.0, &a.matvec(&x)?)?)?;
            v1 = lin(alpha, &v1, tau, &z1)?;
            v2 = lin(alpha, &v2, tau, &z2)?;
        }
        Ok((v1, z1, v2, z2))
    }
}

impl Kernel for L1Analysis {
    fn case(&self) -> &'static str {
        "t4"
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
        vec![W, A, X0]
    }

    fn primal(&self, inputs: &[Value]) -> Result<f64> {
        let (v1, _, v2, _) = self.iterate(inputs)?;
        Ok(squared_norm(&v1) + squared_norm(&v2))
    }

    fn record(&self, tape: &mut LinAlgTape, _: &[StatementHandle], inputs: &[Value]) -> Result<Recorded> {
        let tracked: Vec<Tracked> = inputs.iter().map(|v| v.register(tape)).collect::<Result<_>>()?;
        let m = |i: usize| tracked[i].matrix();
        let v = |i: usize| tracked[i].vector();
        let [alpha, beta, tau] = self.coefficients.map(Active::passive);
        let vec = || Active::passive(DenseVector::zero_element());

        let mut v1 = tape.copy(v(V1))?;
        let mut z1 = tape.copy(v(Z1))?;
        let mut v2 = tape.copy(v(V2))?;
        let mut z2 = tape.copy(v(Z2))?;
        let (mut av, mut tz, mut y1, mut y2, mut wty, mut aty, mut x1, mut bx, mut x, mut wx, mut ax, mut yax) =
            (vec(), vec(), vec(), vec(), vec(), vec(), vec(), vec(), vec(), vec(), vec(), vec());

        for _ in 0..self.steps {
            tape.scale_into(&mut av, &alpha, &v1)?;
            tape.scale_into(&mut tz, &tau, &z1)?;
            tape.add_into(&mut y1, &av, &tz)?;
            tape.scale_into(&mut av, &alpha, &v2)?;
            tape.scale_into(&mut tz, &tau, &z2)?;
            tape.add_into(&mut y2, &av, &tz)?;
            tape.mat_t_vec_into(&mut wty, m(W), &y1)?;
            tape.mat_t_vec_into(&mut aty, m(A), &y2)?;
            tape.sub_into(&mut x1, &wty, &aty)?;
            tape.scale_into(&mut bx, &beta, &x1)?;
            tape.add_into(&mut x, v(X0), &bx)?;
            tape.mat_vec_into(&mut wx, m(W), &x)?;
            tape.sub_into(&mut z1, &y1, &wx)?;
            tape.mat_vec_into(&mut ax, m(A), &x)?;
            tape.sub_into(&mut yax, v(Y), &ax)?;
            tape.sub_into(&mut z2, &y2, &yax)?;
            tape.scale_into(&mut av, &alpha, &v1)?;
            tape.scale_into(&mut tz, &tau, &z1)?;
            tape.add_into(&mut v1, &av, &tz)?;
            tape.scale_into(&mut av, &alpha, &v2)?;
            tape.scale_into(&mut tz, &tau, &z2)?;
            tape.add_into(&mut v2, &av, &tz)?;
        }

        let n1 = tape.squared_norm(&v1)?;
        let n2 = tape.squared_norm(&v2)?;
        let output = tape.add(&n1, &n2)?;
        Ok(Recorded { output, inputs: tracked })
    }
}
