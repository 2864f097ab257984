use std::ops::{Deref, DerefMut};

use super::dense::{DenseMatrix, DenseVector};
use super::qr::QrFactors;
use crate::active::Active;
use crate::entity::{Entity, Region, Shape};
use crate::error::{Error, Result};
use crate::statement::{ArgRef, Constant, Contribution, StatementDescriptor, StatementHandle};
use crate::tape::Tape;

fn boxed<T: Entity>(v: T) -> Vec<Box<dyn crate::entity::AnyEntity>> {
    vec![Box::new(v)]
}

fn zip_with<T: Entity>(op: &'static str, a: &T, b: &T, f: impl Fn(f64, f64) -> f64) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { op, lhs: a.shape(), rhs: b.shape() });
    }
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| f(*x, *y)).collect();
    T::from_shape_vec(a.shape(), data)
}

fn scaled<T: Entity>(s: f64, x: &T) -> T {
    let mut y = x.clone();
    y.scale_in_place(s);
    y
}

fn inner<T: Entity>(a: &T, b: &T) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn single<T: Entity>(x: f64) -> Result<T> {
    T::from_shape_vec(Shape::new(1, 1), vec![x])
}

fn region_from(c: &[Constant], with_size: bool) -> Result<Region> {
    let idx = |k: usize| match c.get(k) {
        Some(Constant::Index(i)) => Ok(*i as usize),
        _ => Err(Error::Statement { op: "region".into(), message: format!("missing index constant {k}") }),
    };
    if with_size {
        Ok(Region::new(idx(0)?, idx(1)?, idx(2)?, idx(3)?))
    } else {
        Ok(Region::element(idx(0)?, idx(1)?))
    }
}

/// Handles of the operations available for every linear kind.
#[derive(Debug, Clone, Copy)]
pub struct KindHandles {
    pub add: StatementHandle,
    pub sub: StatementHandle,
    pub scale: StatementHandle,
    pub copy: StatementHandle,
    pub axpy: StatementHandle,
    pub dot: StatementHandle,
    pub squared_norm: StatementHandle,
}

/// Handles of element and block access for vectors and matrices.
#[derive(Debug, Clone, Copy)]
pub struct ContainerHandles {
    pub element_get: StatementHandle,
    pub element_set: StatementHandle,
    pub block_get: StatementHandle,
    pub block_set: StatementHandle,
}

#[derive(Debug, Clone, Copy)]
pub struct Handles {
    pub scalar: KindHandles,
    pub vector: KindHandles,
    pub matrix: KindHandles,
    pub vector_access: ContainerHandles,
    pub matrix_access: ContainerHandles,
    pub mul: StatementHandle,
    pub div: StatementHandle,
    pub mul_assign: StatementHandle,
    pub mat_mul: StatementHandle,
    pub mat_vec: StatementHandle,
    pub mat_t_vec: StatementHandle,
    pub transpose: StatementHandle,
    pub solve_vec: StatementHandle,
    pub solve_mat: StatementHandle,
    pub size: StatementHandle,
    pub rows: StatementHandle,
    pub cols: StatementHandle,
}

/// Kinds supporting the linear operation set.
pub trait LinearKind: Entity {
    fn kind_handles(h: &Handles) -> &KindHandles;
}

/// Kinds with element and block access.
pub trait ContainerKind: LinearKind {
    fn access_handles(h: &Handles) -> &ContainerHandles;
}

impl LinearKind for f64 {
    fn kind_handles(h: &Handles) -> &KindHandles {
        &h.scalar
    }
}

impl LinearKind for DenseVector {
    fn kind_handles(h: &Handles) -> &KindHandles {
        &h.vector
    }
}

impl LinearKind for DenseMatrix {
    fn kind_handles(h: &Handles) -> &KindHandles {
        &h.matrix
    }
}

impl ContainerKind for DenseVector {
    fn access_handles(h: &Handles) -> &ContainerHandles {
        &h.vector_access
    }
}

impl ContainerKind for DenseMatrix {
    fn access_handles(h: &Handles) -> &ContainerHandles {
        &h.matrix_access
    }
}

fn register_linear<T: Entity>(tape: &mut Tape) -> Result<KindHandles> {
    let add = StatementDescriptor::builder(format!("add<{}>", T::KIND_NAME))
        .input::<T>("a")
        .input::<T>("b")
        .output::<T>("r")
        .primal(|f| Ok(boxed(zip_with("add", f.value::<T>(0)?, f.value::<T>(1)?, |x, y| x + y)?)))
        .adjoint("a", |f| Ok(Contribution::full(f.bar::<T>(2)?.clone())))
        .adjoint("b", |f| Ok(Contribution::full(f.bar::<T>(2)?.clone())))
        .build();
    let sub = StatementDescriptor::builder(format!("sub<{}>", T::KIND_NAME))
        .input::<T>("a")
        .input::<T>("b")
        .output::<T>("r")
        .primal(|f| Ok(boxed(zip_with("sub", f.value::<T>(0)?, f.value::<T>(1)?, |x, y| x - y)?)))
        .adjoint("a", |f| Ok(Contribution::full(f.bar::<T>(2)?.clone())))
        .adjoint("b", |f| Ok(Contribution::full(scaled(-1.0, f.bar::<T>(2)?))))
        .build();
    let scale = StatementDescriptor::builder(format!("scale<{}>", T::KIND_NAME))
        .input::<f64>("s")
        .input::<T>("x")
        .output::<T>("r")
        .primal(|f| Ok(boxed(scaled(*f.value::<f64>(0)?, f.value::<T>(1)?))))
        .adjoint("s", |f| Ok(Contribution::full(inner(f.value::<T>(1)?, f.bar::<T>(2)?))))
        .adjoint("x", |f| Ok(Contribution::full(scaled(*f.value::<f64>(0)?, f.bar::<T>(2)?))))
        .build();
    let copy = StatementDescriptor::builder(format!("copy<{}>", T::KIND_NAME))
        .input::<T>("x")
        .output::<T>("r")
        .primal(|f| Ok(boxed(f.value::<T>(0)?.clone())))
        .adjoint("x", |f| Ok(Contribution::full(f.bar::<T>(1)?.clone())))
        .build();
    let axpy = StatementDescriptor::builder(format!("axpy<{}>", T::KIND_NAME))
        .inout::<T>("y")
        .input::<f64>("a")
        .input::<T>("x")
        .primal(|f| {
            let a = *f.value::<f64>(1)?;
            Ok(boxed(zip_with("axpy", f.value::<T>(0)?, f.value::<T>(2)?, |y, x| y + a * x)?))
        })
        .adjoint("y", |f| Ok(Contribution::full(f.bar::<T>(0)?.clone())))
        .adjoint("a", |f| Ok(Contribution::full(inner(f.value::<T>(2)?, f.bar::<T>(0)?))))
        .adjoint("x", |f| Ok(Contribution::full(scaled(*f.value::<f64>(1)?, f.bar::<T>(0)?))))
        .build();
    let dot = StatementDescriptor::builder(format!("dot<{}>", T::KIND_NAME))
        .input::<T>("a")
        .input::<T>("b")
        .output::<f64>("r")
        .primal(|f| {
            let (a, b) = (f.value::<T>(0)?, f.value::<T>(1)?);
            if a.shape() != b.shape() {
                return Err(Error::DimensionMismatch { op: "dot", lhs: a.shape(), rhs: b.shape() });
            }
            Ok(boxed(inner(a, b)))
        })
        .adjoint("a", |f| Ok(Contribution::full(scaled(*f.bar::<f64>(2)?, f.value::<T>(1)?))))
        .adjoint("b", |f| Ok(Contribution::full(scaled(*f.bar::<f64>(2)?, f.value::<T>(0)?))))
        .build();
    let squared_norm = StatementDescriptor::builder(format!("squared_norm<{}>", T::KIND_NAME))
        .input::<T>("x")
        .output::<f64>("r")
        .primal(|f| {
            let x = f.value::<T>(0)?;
            Ok(boxed(inner(x, x)))
        })
        .adjoint("x", |f| Ok(Contribution::full(scaled(2.0 * f.bar::<f64>(1)?, f.value::<T>(0)?))))
        .build();
    Ok(KindHandles {
        add: tape.register_descriptor(add)?,
        sub: tape.register_descriptor(sub)?,
        scale: tape.register_descriptor(scale)?,
        copy: tape.register_descriptor(copy)?,
        axpy: tape.register_descriptor(axpy)?,
        dot: tape.register_descriptor(dot)?,
        squared_norm: tape.register_descriptor(squared_norm)?,
    })
}

fn register_container<T: Entity>(tape: &mut Tape) -> Result<ContainerHandles> {
    let element_get = StatementDescriptor::builder(format!("element_get<{}>", T::KIND_NAME))
        .input::<T>("self")
        .output::<f64>("r")
        .index_const("row")
        .index_const("col")
        .primal(|f| {
            let v = f.value::<T>(0)?;
            let r = region_from(f.constants(), false)?;
            Ok(boxed(v.region(r)?.as_slice()[0]))
        })
        .adjoint("self", |f| {
            let r = region_from(f.constants(), false)?;
            Ok(Contribution::region(r, single::<T>(*f.bar::<f64>(1)?)?))
        })
        .build();
    let element_set = StatementDescriptor::builder(format!("element_set<{}>", T::KIND_NAME))
        .output_region::<T>("self", |c| region_from(c, false), true)
        .input::<f64>("x")
        .index_const("row")
        .index_const("col")
        .primal(|f| Ok(boxed(single::<T>(*f.value::<f64>(1)?)?)))
        .adjoint("x", |f| Ok(Contribution::full(f.bar::<T>(0)?.as_slice()[0])))
        .build();
    let block_get = StatementDescriptor::builder(format!("block_get<{}>", T::KIND_NAME))
        .input::<T>("self")
        .output::<T>("r")
        .index_const("row")
        .index_const("col")
        .index_const("rows")
        .index_const("cols")
        .primal(|f| Ok(boxed(f.value::<T>(0)?.region(region_from(f.constants(), true)?)?)))
        .adjoint("self", |f| Ok(Contribution::region(region_from(f.constants(), true)?, f.bar::<T>(1)?.clone())))
        .build();
    let block_set = StatementDescriptor::builder(format!("block_set<{}>", T::KIND_NAME))
        .output_region::<T>("self", |c| region_from(c, true), true)
        .input::<T>("block")
        .index_const("row")
        .index_const("col")
        .index_const("rows")
        .index_const("cols")
        .primal(|f| Ok(boxed(f.value::<T>(1)?.clone())))
        .adjoint("block", |f| Ok(Contribution::full(f.bar::<T>(0)?.clone())))
        .build();
    Ok(ContainerHandles {
        element_get: tape.register_descriptor(element_get)?,
        element_set: tape.register_descriptor(element_set)?,
        block_get: tape.register_descriptor(block_get)?,
        block_set: tape.register_descriptor(block_set)?,
    })
}

fn register_all(tape: &mut Tape) -> Result<Handles> {
    let scalar = register_linear::<f64>(tape)?;
    let vector = register_linear::<DenseVector>(tape)?;
    let matrix = register_linear::<DenseMatrix>(tape)?;
    let vector_access = register_container::<DenseVector>(tape)?;
    let matrix_access = register_container::<DenseMatrix>(tape)?;

    let mul = StatementDescriptor::builder("mul")
        .input::<f64>("a")
        .input::<f64>("b")
        .output::<f64>("r")
        .primal(|f| Ok(boxed(f.value::<f64>(0)? * f.value::<f64>(1)?)))
        .adjoint("a", |f| Ok(Contribution::full(f.bar::<f64>(2)? * f.value::<f64>(1)?)))
        .adjoint("b", |f| Ok(Contribution::full(f.bar::<f64>(2)? * f.value::<f64>(0)?)))
        .build();
    let div = StatementDescriptor::builder("div")
        .input::<f64>("a")
        .input::<f64>("b")
        .output::<f64>("r")
        .primal(|f| Ok(boxed(f.value::<f64>(0)? / f.value::<f64>(1)?)))
        .adjoint("a", |f| Ok(Contribution::full(f.bar::<f64>(2)? / f.value::<f64>(1)?)))
        .adjoint("b", |f| {
            let (a, b) = (f.value::<f64>(0)?, f.value::<f64>(1)?);
            Ok(Contribution::full(-f.bar::<f64>(2)? * a / (b * b)))
        })
        .build();
    let mul_assign = StatementDescriptor::builder("mul_assign")
        .inout::<f64>("w")
        .input::<f64>("b")
        .primal(|f| Ok(boxed(f.value::<f64>(0)? * f.value::<f64>(1)?)))
        .adjoint("w", |f| Ok(Contribution::full(f.bar::<f64>(0)? * f.value::<f64>(1)?)))
        .adjoint("b", |f| Ok(Contribution::full(f.bar::<f64>(0)? * f.value::<f64>(0)?)))
        .build();
    let mat_mul = StatementDescriptor::builder("mat_mul")
        .input::<DenseMatrix>("self")
        .input::<DenseMatrix>("o")
        .output::<DenseMatrix>("r")
        .primal(|f| Ok(boxed(f.value::<DenseMatrix>(0)?.matmul(f.value::<DenseMatrix>(1)?)?)))
        .adjoint("self", |f| Ok(Contribution::full(f.bar::<DenseMatrix>(2)?.matmul_tr(f.value::<DenseMatrix>(1)?)?)))
        .adjoint("o", |f| Ok(Contribution::full(f.value::<DenseMatrix>(0)?.tr_matmul(f.bar::<DenseMatrix>(2)?)?)))
        .build();
    let mat_vec = StatementDescriptor::builder("mat_vec")
        .input::<DenseMatrix>("self")
        .input::<DenseVector>("v")
        .output::<DenseVector>("r")
        .primal(|f| Ok(boxed(f.value::<DenseMatrix>(0)?.matvec(f.value::<DenseVector>(1)?)?)))
        .adjoint("self", |f| {
            Ok(Contribution::full(DenseMatrix::outer(f.bar::<DenseVector>(2)?, f.value::<DenseVector>(1)?)))
        })
        .adjoint("v", |f| Ok(Contribution::full(f.value::<DenseMatrix>(0)?.tr_matvec(f.bar::<DenseVector>(2)?)?)))
        .build();
    let mat_t_vec = StatementDescriptor::builder("mat_t_vec")
        .input::<DenseMatrix>("self")
        .input::<DenseVector>("v")
        .output::<DenseVector>("r")
        .primal(|f| Ok(boxed(f.value::<DenseMatrix>(0)?.tr_matvec(f.value::<DenseVector>(1)?)?)))
        .adjoint("self", |f| {
            Ok(Contribution::full(DenseMatrix::outer(f.value::<DenseVector>(1)?, f.bar::<DenseVector>(2)?)))
        })
        .adjoint("v", |f| Ok(Contribution::full(f.value::<DenseMatrix>(0)?.matvec(f.bar::<DenseVector>(2)?)?)))
        .build();
    let transpose = StatementDescriptor::builder("transpose")
        .input::<DenseMatrix>("self")
        .output::<DenseMatrix>("r")
        .primal(|f| Ok(boxed(f.value::<DenseMatrix>(0)?.transpose())))
        .adjoint("self", |f| Ok(Contribution::full(f.bar::<DenseMatrix>(1)?.transpose())))
        .build();
    // The rules share g = A⁻ᵀ x̄ and the recomputed solution x.
    let solve_vec = StatementDescriptor::builder("qr_solve<vector>")
        .input::<DenseMatrix>("a")
        .input::<DenseVector>("b")
        .output::<DenseVector>("x")
        .primal(|f| Ok(boxed(QrFactors::new(f.value::<DenseMatrix>(0)?)?.solve_vec(f.value::<DenseVector>(1)?)?)))
        .adjoint("a", |f| {
            let (g, x) = solve_vec_memo(f)?;
            Ok(Contribution::full(scaled(-1.0, &DenseMatrix::outer(g, x))))
        })
        .adjoint("b", |f| Ok(Contribution::full(solve_vec_memo(f)?.0.clone())))
        .build();
    let solve_mat = StatementDescriptor::builder("qr_solve<matrix>")
        .input::<DenseMatrix>("a")
        .input::<DenseMatrix>("b")
        .output::<DenseMatrix>("x")
        .primal(|f| Ok(boxed(QrFactors::new(f.value::<DenseMatrix>(0)?)?.solve_mat(f.value::<DenseMatrix>(1)?)?)))
        .adjoint("a", |f| {
            let (g, x) = solve_mat_memo(f)?;
            Ok(Contribution::full(scaled(-1.0, &g.matmul_tr(x)?)))
        })
        .adjoint("b", |f| Ok(Contribution::full(solve_mat_memo(f)?.0.clone())))
        .build();
    let size = StatementDescriptor::builder("size").element_passive().passive_input::<DenseVector>("self").build();
    let rows = StatementDescriptor::builder("rows").element_passive().passive_input::<DenseMatrix>("self").build();
    let cols = StatementDescriptor::builder("cols").element_passive().passive_input::<DenseMatrix>("self").build();

    Ok(Handles {
        scalar,
        vector,
        matrix,
        vector_access,
        matrix_access,
        mul: tape.register_descriptor(mul)?,
        div: tape.register_descriptor(div)?,
        mul_assign: tape.register_descriptor(mul_assign)?,
        mat_mul: tape.register_descriptor(mat_mul)?,
        mat_vec: tape.register_descriptor(mat_vec)?,
        mat_t_vec: tape.register_descriptor(mat_t_vec)?,
        transpose: tape.register_descriptor(transpose)?,
        solve_vec: tape.register_descriptor(solve_vec)?,
        solve_mat: tape.register_descriptor(solve_mat)?,
        size: tape.register_descriptor(size)?,
        rows: tape.register_descriptor(rows)?,
        cols: tape.register_descriptor(cols)?,
    })
}

fn solve_vec_memo<'a>(f: &'a crate::statement::Frame<'_>) -> Result<&'a (DenseVector, DenseVector)> {
    f.memo(|| {
        let a = f.value::<DenseMatrix>(0)?;
        let g = QrFactors::new(&a.transpose())?.solve_vec(f.bar::<DenseVector>(2)?)?;
        let x = QrFactors::new(a)?.solve_vec(f.value::<DenseVector>(1)?)?;
        Ok((g, x))
    })
}

fn solve_mat_memo<'a>(f: &'a crate::statement::Frame<'_>) -> Result<&'a (DenseMatrix, DenseMatrix)> {
    f.memo(|| {
        let a = f.value::<DenseMatrix>(0)?;
        let g = QrFactors::new(&a.transpose())?.solve_mat(f.bar::<DenseMatrix>(2)?)?;
        let x = QrFactors::new(a)?.solve_mat(f.value::<DenseMatrix>(1)?)?;
        Ok((g, x))
    })
}

/// A [`Tape`] with scalar, vector and matrix kinds and the dense
/// linear-algebra operations registered.
///
/// Every operation has a variant returning a fresh value and an `_into`
/// variant assigning to an existing one. Assigning keeps the target's
/// identifier, so only its old value is taped.
#[derive(Debug)]
pub struct LinAlgTape {
    tape: Tape,
    handles: Handles,
}

impl Deref for LinAlgTape {
    type Target = Tape;
    fn deref(&self) -> &Tape {
        &self.tape
    }
}

impl DerefMut for LinAlgTape {
    fn deref_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }
}

macro_rules! binary_into {
    ($self:ident, $h:expr, $out:ident, $a:ident, $b:ident) => {
        $self.tape.record($h, &mut [ArgRef::In($a), ArgRef::In($b), ArgRef::Lhs($out)], &[])
    };
}

impl LinAlgTape {
    pub fn new() -> Result<Self> {
        let mut tape = Tape::new();
        tape.register_value_kind::<f64>()?;
        tape.register_value_kind::<DenseVector>()?;
        tape.register_value_kind::<DenseMatrix>()?;
        let handles = register_all(&mut tape)?;
        Ok(LinAlgTape { tape, handles })
    }

    pub fn handles(&self) -> &Handles {
        &self.handles
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    pub fn into_tape(self) -> Tape {
        self.tape
    }

    fn fresh<T: Entity>(&mut self, f: impl FnOnce(&mut Self, &mut Active<T>) -> Result<()>) -> Result<Active<T>> {
        let mut out = Active::passive(T::zero_element());
        f(self, &mut out)?;
        Ok(out)
    }

    pub fn add_into<T: LinearKind>(&mut self, out: &mut Active<T>, a: &Active<T>, b: &Active<T>) -> Result<()> {
        binary_into!(self, T::kind_handles(&self.handles).add, out, a, b)
    }

    pub fn add<T: LinearKind>(&mut self, a: &Active<T>, b: &Active<T>) -> Result<Active<T>> {
        self.fresh(|t, out| t.add_into(out, a, b))
    }

    pub fn sub_into<T: LinearKind>(&mut self, out: &mut Active<T>, a: &Active<T>, b: &Active<T>) -> Result<()> {
        binary_into!(self, T::kind_handles(&self.handles).sub, out, a, b)
    }

    pub fn sub<T: LinearKind>(&mut self, a: &Active<T>, b: &Active<T>) -> Result<Active<T>> {
        self.fresh(|t, out| t.sub_into(out, a, b))
    }

    /// `out = s · x`.
    pub fn scale_into<T: LinearKind>(&mut self, out: &mut Active<T>, s: &Active<f64>, x: &Active<T>) -> Result<()> {
        binary_into!(self, T::kind_handles(&self.handles).scale, out, s, x)
    }

    pub fn scale<T: LinearKind>(&mut self, s: &Active<f64>, x: &Active<T>) -> Result<Active<T>> {
        self.fresh(|t, out| t.scale_into(out, s, x))
    }

    /// `out = x`, taped as an assignment.
    pub fn assign<T: LinearKind>(&mut self, out: &mut Active<T>, x: &Active<T>) -> Result<()> {
        let h = T::kind_handles(&self.handles).copy;
        self.tape.record(h, &mut [ArgRef::In(x), ArgRef::Lhs(out)], &[])
    }

    pub fn copy<T: LinearKind>(&mut self, x: &Active<T>) -> Result<Active<T>> {
        self.fresh(|t, out| t.assign(out, x))
    }

    /// `y += a · x`.
    pub fn axpy<T: LinearKind>(&mut self, y: &mut Active<T>, a: &Active<f64>, x: &Active<T>) -> Result<()> {
        let h = T::kind_handles(&self.handles).axpy;
        self.tape.record(h, &mut [ArgRef::Lhs(y), ArgRef::In(a), ArgRef::In(x)], &[])
    }

    pub fn dot_into<T: LinearKind>(&mut self, out: &mut Active<f64>, a: &Active<T>, b: &Active<T>) -> Result<()> {
        binary_into!(self, T::kind_handles(&self.handles).dot, out, a, b)
    }

    pub fn dot<T: LinearKind>(&mut self, a: &Active<T>, b: &Active<T>) -> Result<Active<f64>> {
        self.fresh(|t, out| t.dot_into(out, a, b))
    }

    pub fn squared_norm_into<T: LinearKind>(&mut self, out: &mut Active<f64>, x: &Active<T>) -> Result<()> {
        let h = T::kind_handles(&self.handles).squared_norm;
        self.tape.record(h, &mut [ArgRef::In(x), ArgRef::Lhs(out)], &[])
    }

    pub fn squared_norm<T: LinearKind>(&mut self, x: &Active<T>) -> Result<Active<f64>> {
        self.fresh(|t, out| t.squared_norm_into(out, x))
    }

    pub fn mul_into(&mut self, out: &mut Active<f64>, a: &Active<f64>, b: &Active<f64>) -> Result<()> {
        binary_into!(self, self.handles.mul, out, a, b)
    }

    pub fn mul(&mut self, a: &Active<f64>, b: &Active<f64>) -> Result<Active<f64>> {
        self.fresh(|t, out| t.mul_into(out, a, b))
    }

    pub fn div_into(&mut self, out: &mut Active<f64>, a: &Active<f64>, b: &Active<f64>) -> Result<()> {
        binary_into!(self, self.handles.div, out, a, b)
    }

    pub fn div(&mut self, a: &Active<f64>, b: &Active<f64>) -> Result<Active<f64>> {
        self.fresh(|t, out| t.div_into(out, a, b))
    }

    /// `w *= b`.
    pub fn mul_assign(&mut self, w: &mut Active<f64>, b: &Active<f64>) -> Result<()> {
        let h = self.handles.mul_assign;
        self.tape.record(h, &mut [ArgRef::Lhs(w), ArgRef::In(b)], &[])
    }

    pub fn mat_mul_into(&mut self, out: &mut Active<DenseMatrix>, a: &Active<DenseMatrix>, b: &Active<DenseMatrix>) -> Result<()> {
        binary_into!(self, self.handles.mat_mul, out, a, b)
    }

    pub fn mat_mul(&mut self, a: &Active<DenseMatrix>, b: &Active<DenseMatrix>) -> Result<Active<DenseMatrix>> {
        self.fresh(|t, out| t.mat_mul_into(out, a, b))
    }

    pub fn mat_vec_into(&mut self, out: &mut Active<DenseVector>, a: &Active<DenseMatrix>, v: &Active<DenseVector>) -> Result<()> {
        binary_into!(self, self.handles.mat_vec, out, a, v)
    }

    pub fn mat_vec(&mut self, a: &Active<DenseMatrix>, v: &Active<DenseVector>) -> Result<Active<DenseVector>> {
        self.fresh(|t, out| t.mat_vec_into(out, a, v))
    }

    /// `out = aᵀ · v`.
    pub fn mat_t_vec_into(&mut self, out: &mut Active<DenseVector>, a: &Active<DenseMatrix>, v: &Active<DenseVector>) -> Result<()> {
        binary_into!(self, self.handles.mat_t_vec, out, a, v)
    }

    pub fn mat_t_vec(&mut self, a: &Active<DenseMatrix>, v: &Active<DenseVector>) -> Result<Active<DenseVector>> {
        self.fresh(|t, out| t.mat_t_vec_into(out, a, v))
    }

    pub fn transpose_into(&mut self, out: &mut Active<DenseMatrix>, a: &Active<DenseMatrix>) -> Result<()> {
        let h = self.handles.transpose;
        self.tape.record(h, &mut [ArgRef::In(a), ArgRef::Lhs(out)], &[])
    }

    pub fn transpose(&mut self, a: &Active<DenseMatrix>) -> Result<Active<DenseMatrix>> {
        self.fresh(|t, out| t.transpose_into(out, a))
    }

    /// `out = a⁻¹ · b` by Householder QR.
    pub fn solve_into(&mut self, out: &mut Active<DenseVector>, a: &Active<DenseMatrix>, b: &Active<DenseVector>) -> Result<()> {
        binary_into!(self, self.handles.solve_vec, out, a, b)
    }

    pub fn solve(&mut self, a: &Active<DenseMatrix>, b: &Active<DenseVector>) -> Result<Active<DenseVector>> {
        self.fresh(|t, out| t.solve_into(out, a, b))
    }

    pub fn solve_mat_into(&mut self, out: &mut Active<DenseMatrix>, a: &Active<DenseMatrix>, b: &Active<DenseMatrix>) -> Result<()> {
        binary_into!(self, self.handles.solve_mat, out, a, b)
    }

    pub fn solve_mat(&mut self, a: &Active<DenseMatrix>, b: &Active<DenseMatrix>) -> Result<Active<DenseMatrix>> {
        self.fresh(|t, out| t.solve_mat_into(out, a, b))
    }

    pub fn element_into<T: ContainerKind>(&mut self, out: &mut Active<f64>, v: &Active<T>, row: usize, col: usize) -> Result<()> {
        let h = T::access_handles(&self.handles).element_get;
        self.tape.record(h, &mut [ArgRef::In(v), ArgRef::Lhs(out)], &[Constant::index(row), Constant::index(col)])
    }

    /// `v[row, col]` as a new scalar.
    pub fn element<T: ContainerKind>(&mut self, v: &Active<T>, row: usize, col: usize) -> Result<Active<f64>> {
        self.fresh(|t, out| t.element_into(out, v, row, col))
    }

    /// `v[row, col] = x`. Only the old element is taped.
    pub fn set_element<T: ContainerKind>(&mut self, v: &mut Active<T>, row: usize, col: usize, x: &Active<f64>) -> Result<()> {
        let h = T::access_handles(&self.handles).element_set;
        self.tape.record(h, &mut [ArgRef::Lhs(v), ArgRef::In(x)], &[Constant::index(row), Constant::index(col)])
    }

    pub fn block_into<T: ContainerKind>(&mut self, out: &mut Active<T>, v: &Active<T>, region: Region) -> Result<()> {
        let h = T::access_handles(&self.handles).block_get;
        self.tape.record(h, &mut [ArgRef::In(v), ArgRef::Lhs(out)], &region_constants(region))
    }

    pub fn block<T: ContainerKind>(&mut self, v: &Active<T>, region: Region) -> Result<Active<T>> {
        self.fresh(|t, out| t.block_into(out, v, region))
    }

    /// Writes `block` into `v` at `(row, col)`. Only the old block is taped.
    pub fn set_block<T: ContainerKind>(&mut self, v: &mut Active<T>, row: usize, col: usize, block: &Active<T>) -> Result<()> {
        let h = T::access_handles(&self.handles).block_set;
        let s = block.shape();
        let consts = region_constants(Region::new(row, col, s.rows, s.cols));
        self.tape.record(h, &mut [ArgRef::Lhs(v), ArgRef::In(block)], &consts)
    }

    /// Length of a vector. Never taped.
    pub fn size(&self, v: &Active<DenseVector>) -> usize {
        v.value().len()
    }

    pub fn rows(&self, m: &Active<DenseMatrix>) -> usize {
        m.value().rows()
    }

    pub fn cols(&self, m: &Active<DenseMatrix>) -> usize {
        m.value().cols()
    }
}

fn region_constants(r: Region) -> [Constant; 4] {
    [Constant::index(r.row), Constant::index(r.col), Constant::index(r.rows), Constant::index(r.cols)]
}
