use std::ops::{Index, IndexMut};

use crate::entity::{ElementShape, Entity, Shape};
use crate::error::{Error, Result};

/// Dense column vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn from_vec(data: Vec<f64>) -> Self {
        DenseVector { data }
    }

    pub fn zeros_len(n: usize) -> Self {
        DenseVector { data: vec![0.0; n] }
    }

    pub fn filled(n: usize, value: f64) -> Self {
        DenseVector { data: vec![value; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.dot(self)
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(data: Vec<f64>) -> Self {
        DenseVector { data }
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl Entity for DenseVector {
    const KIND_NAME: &'static str = "vector";
    const ELEMENT_SHAPE: ElementShape = ElementShape::Dynamic;

    fn zero_element() -> Self {
        DenseVector { data: Vec::new() }
    }

    fn shape(&self) -> Shape {
        Shape::new(self.data.len(), 1)
    }

    fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn from_shape_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let valid = shape.cols == 1 || shape.is_empty();
        if !valid || data.len() != shape.len() {
            return Err(Error::InvalidShape { kind: Self::KIND_NAME, shape });
        }
        Ok(DenseVector { data })
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_shape_vec(Shape::new(rows, cols), data)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidShape { kind: Self::KIND_NAME, shape: Shape::new(rows.len(), cols) });
        }
        Ok(DenseMatrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn zeros_shape(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { op: "mat_mul", lhs: self.shape(), rhs: other.shape() });
        }
        let mut out = DenseMatrix::zeros_shape(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without forming the transpose.
    pub fn tr_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch { op: "tr_mat_mul", lhs: self.shape(), rhs: other.shape() });
        }
        let mut out = DenseMatrix::zeros_shape(self.cols, other.cols);
        for k in 0..self.rows {
            let brow = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out.data[i * other.cols..(i + 1) * other.cols].iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ` without forming the transpose.
    pub fn matmul_tr(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch { op: "mat_mul_tr", lhs: self.shape(), rhs: other.shape() });
        }
        Ok(DenseMatrix::from_fn(self.rows, other.rows, |i, j| {
            self.row(i).iter().zip(other.row(j)).map(|(a, b)| a * b).sum()
        }))
    }

    pub fn matvec(&self, v: &DenseVector) -> Result<DenseVector> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch { op: "mat_vec", lhs: self.shape(), rhs: v.shape() });
        }
        Ok((0..self.rows).map(|r| self.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum()).collect::<Vec<_>>().into())
    }

    /// `selfᵀ · v`.
    pub fn tr_matvec(&self, v: &DenseVector) -> Result<DenseVector> {
        if self.rows != v.len() {
            return Err(Error::DimensionMismatch { op: "mat_t_vec", lhs: self.shape(), rhs: v.shape() });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &s) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * s;
            }
        }
        Ok(out.into())
    }

    /// Outer product `u · vᵀ`.
    pub fn outer(u: &DenseVector, v: &DenseVector) -> DenseMatrix {
        DenseMatrix::from_fn(u.len(), v.len(), |r, c| u[r] * v[c])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Entity for DenseMatrix {
    const KIND_NAME: &'static str = "matrix";
    const ELEMENT_SHAPE: ElementShape = ElementShape::Dynamic;

    fn zero_element() -> Self {
        DenseMatrix::default()
    }

    fn shape(&self) -> Shape {
        Shape::new(self.rows, self.cols)
    }

    fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn from_shape_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidShape { kind: Self::KIND_NAME, shape });
        }
        Ok(DenseMatrix { rows: shape.rows, cols: shape.cols, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_agree_with_transposes() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 0.0], &[-1.0, 3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[2.0, 1.0], &[0.0, -2.0]]).unwrap();
        assert_eq!(a.tr_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        assert_eq!(b.matmul_tr(&b).unwrap(), b.matmul(&b.transpose()).unwrap());
        let v = DenseVector::from(vec![1.0, -1.0]);
        assert_eq!(a.tr_matvec(&v).unwrap(), a.transpose().matvec(&v).unwrap());
    }

    #[test]
    fn identity_matvec() {
        let v = DenseVector::from(vec![5.0, 7.0]);
        assert_eq!(DenseMatrix::identity(2).matvec(&v).unwrap(), v);
    }

    #[test]
    fn dimension_mismatch() {
        let a = DenseMatrix::zeros_shape(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn vector_rejects_matrix_shape() {
        assert!(DenseVector::from_shape_vec(Shape::new(2, 2), vec![0.0; 4]).is_err());
        assert!(DenseVector::zero_element().is_unsized());
        assert!(DenseMatrix::zero_element().is_unsized());
    }
}
