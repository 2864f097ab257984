//! Plain and taped kernel inputs.

use dslad::linalg::{DenseMatrix, DenseVector, LinAlgTape};
use dslad::{Active, Entity, Shape};

use crate::error::Result;

/// A plain input value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(DenseVector),
    Matrix(DenseMatrix),
}

impl Value {
    pub fn data(&self) -> &[f64] {
        match self {
            Value::Scalar(x) => std::slice::from_ref(x),
            Value::Vector(v) => v.as_slice(),
            Value::Matrix(m) => m.as_slice(),
        }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Scalar(x) => std::slice::from_mut(x),
            Value::Vector(v) => v.as_mut_slice(),
            Value::Matrix(m) => m.as_mut_slice(),
        }
    }

    pub fn len(&self) -> usize {
        self.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.data().is_empty()
    }

    pub fn shape(&self) -> Shape {
        match self {
            Value::Scalar(_) => Shape::new(1, 1),
            Value::Vector(v) => v.shape(),
            Value::Matrix(m) => m.shape(),
        }
    }

    pub fn scalar(&self) -> f64 {
        match self {
            Value::Scalar(x) => *x,
            other => panic!("expected a scalar input, found shape {}", other.shape()),
        }
    }

    pub fn vector(&self) -> &DenseVector {
        match self {
            Value::Vector(v) => v,
            other => panic!("expected a vector input, found shape {}", other.shape()),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        match self {
            Value::Matrix(m) => m,
            other => panic!("expected a matrix input, found shape {}", other.shape()),
        }
    }

    /// Registers the value on `tape` as one active entity.
    pub fn register(&self, tape: &mut LinAlgTape) -> Result<Tracked> {
        Ok(match self {
            Value::Scalar(x) => Tracked::Scalar(tape.new_input(*x)?),
            Value::Vector(v) => Tracked::Vector(tape.new_input(v.clone())?),
            Value::Matrix(m) => Tracked::Matrix(tape.new_input(m.clone())?),
        })
    }

    /// Registers every element of the value as its own active scalar.
    pub fn register_elements(&self, tape: &mut LinAlgTape) -> Result<Tracked> {
        let items = self.data().iter().map(|&x| tape.new_input(x)).collect::<dslad::Result<Vec<_>>>()?;
        Ok(Tracked::Elements(items))
    }
}

/// An input as registered on a tape.
#[derive(Debug)]
pub enum Tracked {
    Scalar(Active<f64>),
    Vector(Active<DenseVector>),
    Matrix(Active<DenseMatrix>),
    /// One scalar entity per element, in row-major order.
    Elements(Vec<Active<f64>>),
}

impl Tracked {
    pub fn scalar(&self) -> &Active<f64> {
        match self {
            Tracked::Scalar(x) => x,
            _ => panic!("expected a scalar entity"),
        }
    }

    pub fn vector(&self) -> &Active<DenseVector> {
        match self {
            Tracked::Vector(v) => v,
            _ => panic!("expected a vector entity"),
        }
    }

    pub fn vector_mut(&mut self) -> &mut Active<DenseVector> {
        match self {
            Tracked::Vector(v) => v,
            _ => panic!("expected a vector entity"),
        }
    }

    pub fn matrix(&self) -> &Active<DenseMatrix> {
        match self {
            Tracked::Matrix(m) => m,
            _ => panic!("expected a matrix entity"),
        }
    }

    pub fn matrix_mut(&mut self) -> &mut Active<DenseMatrix> {
        match self {
            Tracked::Matrix(m) => m,
            _ => panic!("expected a matrix entity"),
        }
    }

    pub fn scalar_mut(&mut self) -> &mut Active<f64> {
        match self {
            Tracked::Scalar(x) => x,
            _ => panic!("expected a scalar entity"),
        }
    }

    pub fn elements(&self) -> &[Active<f64>] {
        match self {
            Tracked::Elements(v) => v,
            _ => panic!("expected element-wise entities"),
        }
    }

    /// Adjoint flattened like [`Value::data`]. Untouched entities give zeros.
    pub fn gradient(&self, tape: &LinAlgTape, len: usize) -> Result<Vec<f64>> {
        let g = match self {
            Tracked::Scalar(x) => vec![tape.get_gradient(x)?],
            Tracked::Vector(v) => tape.get_gradient(v)?.into_vec(),
            Tracked::Matrix(m) => tape.get_gradient(m)?.as_slice().to_vec(),
            Tracked::Elements(items) => items.iter().map(|x| tape.get_gradient(x)).collect::<dslad::Result<_>>()?,
        };
        Ok(if g.is_empty() { vec![0.0; len] } else { g })
    }
}

/// Conversions between a kind and the [`Value`] / [`Tracked`] wrappers.
pub trait Kind: dslad::linalg::LinearKind {
    fn random(rng: &mut impl rand::Rng, shape: Shape) -> Self;
    fn wrap(self) -> Value;
    fn unwrap(v: &Value) -> &Self;
    fn track(a: Active<Self>) -> Tracked;
    fn tracked(t: &Tracked) -> &Active<Self>;
    fn tracked_mut(t: &mut Tracked) -> &mut Active<Self>;
}

fn uniform(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

impl Kind for f64 {
    fn random(rng: &mut impl rand::Rng, _: Shape) -> Self {
        rng.gen_range(-1.0..1.0)
    }
    fn wrap(self) -> Value {
        Value::Scalar(self)
    }
    fn unwrap(v: &Value) -> &Self {
        match v {
            Value::Scalar(x) => x,
            _ => panic!("expected a scalar input"),
        }
    }
    fn track(a: Active<Self>) -> Tracked {
        Tracked::Scalar(a)
    }
    fn tracked(t: &Tracked) -> &Active<Self> {
        t.scalar()
    }
    fn tracked_mut(t: &mut Tracked) -> &mut Active<Self> {
        t.scalar_mut()
    }
}

impl Kind for DenseVector {
    fn random(rng: &mut impl rand::Rng, shape: Shape) -> Self {
        DenseVector::from(uniform(rng, shape.rows))
    }
    fn wrap(self) -> Value {
        Value::Vector(self)
    }
    fn unwrap(v: &Value) -> &Self {
        v.vector()
    }
    fn track(a: Active<Self>) -> Tracked {
        Tracked::Vector(a)
    }
    fn tracked(t: &Tracked) -> &Active<Self> {
        t.vector()
    }
    fn tracked_mut(t: &mut Tracked) -> &mut Active<Self> {
        t.vector_mut()
    }
}

impl Kind for DenseMatrix {
    fn random(rng: &mut impl rand::Rng, shape: Shape) -> Self {
        let data = uniform(rng, shape.len());
        DenseMatrix::from_vec(shape.rows, shape.cols, data).expect("shape matches data")
    }
    fn wrap(self) -> Value {
        Value::Matrix(self)
    }
    fn unwrap(v: &Value) -> &Self {
        v.matrix()
    }
    fn track(a: Active<Self>) -> Tracked {
        Tracked::Matrix(a)
    }
    fn tracked(t: &Tracked) -> &Active<Self> {
        t.matrix()
    }
    fn tracked_mut(t: &mut Tracked) -> &mut Active<Self> {
        t.matrix_mut()
    }
}
