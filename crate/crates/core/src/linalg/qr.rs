//! Householder QR factorization of square matrices.

use super::dense::{DenseMatrix, DenseVector};
use crate::entity::Entity;
use crate::error::{Error, Result};

/// Packed factorization `A = Q R`: R in the upper triangle, Householder
/// vectors below the diagonal with their leading entries in `beta`.
#[derive(Debug, Clone)]
pub struct QrFactors {
    n: usize,
    qr: DenseMatrix,
    vdiag: Vec<f64>,
    beta: Vec<f64>,
}

impl QrFactors {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { op: "qr", lhs: a.shape(), rhs: a.shape() });
        }
        let n = a.rows();
        let mut qr = a.clone();
        let mut vdiag = vec![0.0; n];
        let mut beta = vec![0.0; n];
        for k in 0..n {
            let norm = (k..n).map(|i| qr[(i, k)].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if qr[(k, k)] > 0.0 { -norm } else { norm };
            let v0 = qr[(k, k)] - alpha;
            let vnorm2 = v0 * v0 + (k + 1..n).map(|i| qr[(i, k)].powi(2)).sum::<f64>();
            if vnorm2 == 0.0 {
                continue;
            }
            let b = 2.0 / vnorm2;
            for j in k + 1..n {
                let s = v0 * qr[(k, j)] + (k + 1..n).map(|i| qr[(i, k)] * qr[(i, j)]).sum::<f64>();
                let f = b * s;
                qr[(k, j)] -= f * v0;
                for i in k + 1..n {
                    let vi = qr[(i, k)];
                    qr[(i, j)] -= f * vi;
                }
            }
            qr[(k, k)] = alpha;
            vdiag[k] = v0;
            beta[k] = b;
        }
        let scale = (0..n).fold(0.0f64, |m, i| m.max(qr[(i, i)].abs()));
        let tol = scale * n as f64 * f64::EPSILON;
        for i in 0..n {
            let r = qr[(i, i)].abs();
            if r <= tol || r == 0.0 {
                return Err(Error::Singular { pivot: i, magnitude: r });
            }
        }
        Ok(QrFactors { n, qr, vdiag, beta })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Applies `Qᵀ` to `x` in place.
    fn apply_qt(&self, x: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            if self.beta[k] == 0.0 {
                continue;
            }
            let s = self.vdiag[k] * x[k] + (k + 1..n).map(|i| self.qr[(i, k)] * x[i]).sum::<f64>();
            let f = self.beta[k] * s;
            x[k] -= f * self.vdiag[k];
            for (i, xi) in x.iter_mut().enumerate().skip(k + 1) {
                *xi -= f * self.qr[(i, k)];
            }
        }
    }

    fn back_substitute(&self, x: &mut [f64]) {
        for i in (0..self.n).rev() {
            let s: f64 = (i + 1..self.n).map(|j| self.qr[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.qr[(i, i)];
        }
    }

    pub fn solve_slice(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                op: "qr_solve",
                lhs: self.qr.shape(),
                rhs: crate::entity::Shape::new(b.len(), 1),
            });
        }
        let mut x = b.to_vec();
        self.apply_qt(&mut x);
        self.back_substitute(&mut x);
        Ok(x)
    }

    pub fn solve_vec(&self, b: &DenseVector) -> Result<DenseVector> {
        self.solve_slice(b.as_slice()).map(DenseVector::from)
    }

    /// Solves for every column of `b`.
    pub fn solve_mat(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if b.rows() != self.n {
            return Err(Error::DimensionMismatch { op: "qr_solve", lhs: self.qr.shape(), rhs: b.shape() });
        }
        let bt = b.transpose();
        let mut xt = DenseMatrix::zeros_shape(b.cols(), self.n);
        for c in 0..b.cols() {
            let x = self.solve_slice(bt.row(c))?;
            xt.as_mut_slice()[c * self.n..(c + 1) * self.n].copy_from_slice(&x);
        }
        Ok(xt.transpose())
    }

    pub fn r(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| if j >= i { self.qr[(i, j)] } else { 0.0 })
    }

    /// Explicit `Q`.
    pub fn q(&self) -> DenseMatrix {
        let n = self.n;
        // Qᵀ eᵢ is row i of Q.
        let mut q = DenseMatrix::zeros_shape(n, n);
        for i in 0..n {
            let row = &mut q.as_mut_slice()[i * n..(i + 1) * n];
            row[i] = 1.0;
            self.apply_qt(row);
        }
        q
    }
}
