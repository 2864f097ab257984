//! Kalman filter predict/update steps.
//!
//! ```text
//! y  = F x + B u          Y  = F P Fᵀ + Q
//! v0 = z − H y            M1 = H Y
//! M2 = Y Hᵀ               M3 = M1 Hᵀ + R
//! v2 = M3⁻¹ v0            M5 = M3⁻¹ M1
//! x  = y + M2 v2          P  = Y − M2 M5
//! ```
//!
//! Output is `‖x‖² + ‖P‖²` after the last step.

use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape, QrFactors};
use dslad::{Active, Entity, StatementHandle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{lin, random_matrix, random_spd, random_vector, require_size, squared_norm};
use crate::error::Result;
use crate::kernel::{Kernel, Recorded};
use crate::value::Value;

pub const TOLERANCE: f64 = 1e-4;

/// Kalman filter inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub f: DenseMatrix,
    pub b: DenseMatrix,
    pub q: DenseMatrix,
    pub h: DenseMatrix,
    pub r: DenseMatrix,
    pub p: DenseMatrix,
    pub u: DenseVector,
    pub x: DenseVector,
    pub z: DenseVector,
}

const F: usize = 0;
const B: usize = 1;
const Q: usize = 2;
const H: usize = 3;
const R: usize = 4;
const P: usize = 5;
const U: usize = 6;
const X: usize = 7;
const Z: usize = 8;

impl KalmanState {
    /// Random state with symmetric positive definite `P`, `Q` and `R`.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        require_size(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(KalmanState {
            f: random_matrix(&mut rng, n, n),
            b: random_matrix(&mut rng, n, n),
            q: random_spd(&mut rng, n)?,
            h: random_matrix(&mut rng, n, n),
            r: random_spd(&mut rng, n)?,
            p: random_spd(&mut rng, n)?,
            u: random_vector(&mut rng, n),
            x: random_vector(&mut rng, n),
            z: random_vector(&mut rng, n),
        })
    }

    fn into_values(self) -> Vec<Value> {
        let m = Value::Matrix;
        let v = Value::Vector;
        vec![m(self.f), m(self.b), m(self.q), m(self.h), m(self.r), m(self.p), v(self.u), v(self.x), v(self.z)]
    }
}

pub struct Kalman {
    n: usize,
    steps: usize,
    inputs: Vec<Value>,
}

impl Kalman {
    pub fn new(n: usize, steps: usize, seed: u64) -> Result<Self> {
        Ok(Self::from_state(KalmanState::random(n, seed)?, steps))
    }

    pub fn from_state(state: KalmanState, steps: usize) -> Self {
        Kalman { n: state.x.len(), steps, inputs: state.into_values() }
    }

    /// Final `(x, P)` on plain values.
    pub fn filter(&self, inputs: &[Value]) -> Result<(DenseVector, DenseMatrix)> {
        let m = |i: usize| inputs[i].matrix();
        let v = |i: usize| inputs[i].vector();
        let (f, b, q, h, r) = (m(F), m(B), m(Q), m(H), m(R));
        let ft = f.transpose();
        let ht = h.transpose();
        let mut x = v(X).clone();
        let mut p = m(P).clone();
        for _ in 0..self.steps {
            let y = lin(1.0, &f.matvec(&x)?, 1.0, &b.matvec(v(U))?)?;
            let yy = lin(1.0, &f.matmul(&p)?.matmul(&ft)?, 1.0, q)?;
            let v0 = lin(1.0, v(Z), -1.0, &h.matvec(&y)?)?;
            let m1 = h.matmul(&yy)?;
            let m2 = yy.matmul(&ht)?;
            let m3 = lin(1.0, &m1.matmul(&ht)?, 1.0, r)?;
            let qr = QrFactors::new(&m3)?;
            let v2 = qr.solve_vec(&v0)?;
            let m5 = qr.solve_mat(&m1)?;
            x = lin(1.0, &y, 1.0, &m2.matvec(&v2)?)?;
            p = lin(1.0, &yy, -1.0, &m2.matmul(&m5)?)?;
        }
        Ok((x, p))
    }
}

impl Kernel for Kalman {
    fn case(&self) -> &'static str {
        "t3"
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
        vec![F, X, Z]
    }

    fn primal(&self, inputs: &[Value]) -> Result<f64> {
        let (x, p) = self.filter(inputs)?;
        Ok(squared_norm(&x) + squared_norm(&p))
    }

    fn record(&self, tape: &mut LinAlgTape, _: &[StatementHandle], inputs: &[Value]) -> Result<Recorded> {
        let tracked = inputs.iter().map(|v| v.register(tape)).collect::<Result<Vec<_>>>()?;
        let m = |i: usize| tracked[i].matrix();
        let v = |i: usize| tracked[i].vector();
        let mat = || Active::passive(DenseMatrix::zero_element());
        let vec = || Active::passive(DenseVector::zero_element());

        let ft = tape.transpose(m(F))?;
        let ht = tape.transpose(m(H))?;
        let mut x = tape.copy(v(X))?;
        let mut p = tape.copy(m(P))?;
        let (mut fx, mut bu, mut y, mut hy, mut v0, mut v2, mut m2v2) = (vec(), vec(), vec(), vec(), vec(), vec(), vec());
        let (mut fp, mut fpft, mut yy, mut m1, mut m2, mut m1ht, mut m3, mut m5, mut m2m5) =
            (mat(), mat(), mat(), mat(), mat(), mat(), mat(), mat(), mat());

        for _ in 0..self.steps {
            tape.mat_vec_into(&mut fx, m(F), &x)?;
            tape.mat_vec_into(&mut bu, m(B), v(U))?;
            tape.add_into(&mut y, &fx, &bu)?;
            tape.mat_mul_into(&mut fp, m(F), &p)?;
            tape.mat_mul_into(&mut fpft, &fp, &ft)?;
            tape.add_into(&mut yy, &fpft, m(Q))?;
            tape.mat_vec_into(&mut hy, m(H), &y)?;
            tape.sub_into(&mut v0, v(Z), &hy)?;
            tape.mat_mul_into(&mut m1, m(H), &yy)?;
            tape.mat_mul_into(&mut m2, &yy, &ht)?;
            tape.mat_mul_into(&mut m1ht, &m1, &ht)?;
            tape.add_into(&mut m3, &m1ht, m(R))?;
            tape.solve_into(&mut v2, &m3, &v0)?;
            tape.solve_mat_into(&mut m5, &m3, &m1)?;
            tape.mat_vec_into(&mut m2v2, &m2, &v2)?;
            tape.add_into(&mut x, &y, &m2v2)?;
            tape.mat_mul_into(&mut m2m5, &m2, &m5)?;
            tape.sub_into(&mut p, &yy, &m2m5)?;
        }

        let xn = tape.squared_norm(&x)?;
        let pn = tape.squared_norm(&p)?;
        let output = tape.add(&xn, &pn)?;
        Ok(Recorded { output, inputs: tracked })
    }
}
