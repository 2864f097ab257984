//! Entity kinds: the whole-value types that carry one identifier each.
//!
//! Every entity is a dense, row-major block of `f64` with a `(rows, cols)`
//! shape. Scalars are `1 x 1`, vectors are `n x 1`. The generic helpers on
//! [`Entity`] (region access, accumulation, byte encoding) are written once
//! against that view.

use std::any::Any;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::payload::{PayloadCursor, PayloadWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Shape { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Rectangular sub-block of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub const fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Region { row, col, rows, cols }
    }

    /// Single element `(row, col)`.
    pub const fn element(row: usize, col: usize) -> Self {
        Region { row, col, rows: 1, cols: 1 }
    }

    pub const fn whole(shape: Shape) -> Self {
        Region { row: 0, col: 0, rows: shape.rows, cols: shape.cols }
    }

    pub const fn shape(&self) -> Shape {
        Shape::new(self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_within(&self, shape: Shape) -> Result<()> {
        let fits = self.row.checked_add(self.rows).is_some_and(|e| e <= shape.rows)
            && self.col.checked_add(self.cols).is_some_and(|e| e <= shape.cols);
        if fits {
            Ok(())
        } else {
            Err(Error::RegionOutOfBounds { region: *self, shape })
        }
    }

    /// Row-major flat offsets of the region rows inside an entity of `shape`.
    fn row_spans(&self, shape: Shape) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.rows).map(move |r| {
            let start = (self.row + r) * shape.cols + self.col;
            start..start + self.cols
        })
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}..{}, {}..{}]", self.row, self.row + self.rows, self.col, self.col + self.cols)
    }
}

/// Whether the element count of a kind is fixed or carried at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ElementShape {
    Static(Shape),
    Dynamic,
}

/// A value kind that can be registered on a tape.
///
/// For dynamic kinds, [`Entity::zero_element`] is the empty (unsized) value;
/// adjoint slots start there and are sized by their first update.
pub trait Entity: Clone + fmt::Debug + PartialEq + Send + Sync + 'static {
    const KIND_NAME: &'static str;
    const ELEMENT_SHAPE: ElementShape;

    fn zero_element() -> Self;
    fn shape(&self) -> Shape;
    fn as_slice(&self) -> &[f64];
    fn as_mut_slice(&mut self) -> &mut [f64];
    fn from_shape_vec(shape: Shape, data: Vec<f64>) -> Result<Self>;

    fn zeros(shape: Shape) -> Result<Self> {
        Self::from_shape_vec(shape, vec![0.0; shape.len()])
    }

    fn is_dynamic() -> bool {
        matches!(Self::ELEMENT_SHAPE, ElementShape::Dynamic)
    }

    /// True for a dynamic entity in the reset state.
    fn is_unsized(&self) -> bool {
        Self::is_dynamic() && self.shape().is_empty()
    }

    fn region(&self, region: Region) -> Result<Self> {
        let shape = self.shape();
        region.check_within(shape)?;
        let src = self.as_slice();
        let mut data = Vec::with_capacity(region.len());
        for span in region.row_spans(shape) {
            data.extend_from_slice(&src[span]);
        }
        Self::from_shape_vec(region.shape(), data)
    }

    fn set_region(&mut self, region: Region, value: &Self) -> Result<()> {
        let shape = self.shape();
        region.check_within(shape)?;
        check_shape(region.shape(), value.shape())?;
        let src = value.as_slice();
        let dst = self.as_mut_slice();
        for (r, span) in region.row_spans(shape).enumerate() {
            dst[span].copy_from_slice(&src[r * region.cols..(r + 1) * region.cols]);
        }
        Ok(())
    }

    fn zero_region(&mut self, region: Region) -> Result<()> {
        let shape = self.shape();
        region.check_within(shape)?;
        let dst = self.as_mut_slice();
        for span in region.row_spans(shape) {
            dst[span].fill(0.0);
        }
        Ok(())
    }

    fn add_assign_entity(&mut self, other: &Self) -> Result<()> {
        check_shape(self.shape(), other.shape())?;
        for (a, b) in self.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *a += *b;
        }
        Ok(())
    }

    fn add_region(&mut self, region: Region, delta: &Self) -> Result<()> {
        let shape = self.shape();
        region.check_within(shape)?;
        check_shape(region.shape(), delta.shape())?;
        let src = delta.as_slice();
        let dst = self.as_mut_slice();
        for (r, span) in region.row_spans(shape).enumerate() {
            for (a, b) in dst[span].iter_mut().zip(&src[r * region.cols..(r + 1) * region.cols]) {
                *a += *b;
            }
        }
        Ok(())
    }

    fn scale_in_place(&mut self, factor: f64) {
        for a in self.as_mut_slice() {
            *a *= factor;
        }
    }

    /// Writes the value with a shape header for dynamic kinds.
    fn encode(&self, out: &mut PayloadWriter) {
        if Self::is_dynamic() {
            let shape = self.shape();
            out.put_u32(shape.rows as u32);
            out.put_u32(shape.cols as u32);
        }
        out.put_f64s(self.as_slice());
    }

    fn decode(cursor: &mut PayloadCursor<'_>) -> Result<Self> {
        let shape = match Self::ELEMENT_SHAPE {
            ElementShape::Static(shape) => shape,
            ElementShape::Dynamic => {
                let rows = cursor.get_u32()? as usize;
                let cols = cursor.get_u32()? as usize;
                Shape::new(rows, cols)
            }
        };
        Self::decode_data(shape, cursor)
    }

    /// Reads exactly `shape.len()` elements, no header.
    fn decode_data(shape: Shape, cursor: &mut PayloadCursor<'_>) -> Result<Self> {
        let data = cursor.get_f64s(shape.len())?;
        Self::from_shape_vec(shape, data)
    }
}

pub(crate) fn check_shape(expected: Shape, found: Shape) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, found })
    }
}

impl Entity for f64 {
    const KIND_NAME: &'static str = "scalar";
    const ELEMENT_SHAPE: ElementShape = ElementShape::Static(Shape::new(1, 1));

    fn zero_element() -> Self {
        0.0
    }

    fn shape(&self) -> Shape {
        Shape::new(1, 1)
    }

    fn as_slice(&self) -> &[f64] {
        std::slice::from_ref(self)
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        std::slice::from_mut(self)
    }

    fn from_shape_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape != Shape::new(1, 1) || data.len() != 1 {
            return Err(Error::InvalidShape { kind: Self::KIND_NAME, shape });
        }
        Ok(data[0])
    }
}

/// Object-safe view of an entity used inside statement frames.
pub trait AnyEntity: Any + fmt::Debug + Send + Sync {
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
    fn into_any(self: Box<Self>) -> Box<dyn Any>;
    fn entity_shape(&self) -> Shape;
    fn entity_data(&self) -> &[f64];
    fn kind_name(&self) -> &'static str;
}

impl<T: Entity> AnyEntity for T {
    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }

    fn into_any(self: Box<Self>) -> Box<dyn Any> {
        self
    }

    fn entity_shape(&self) -> Shape {
        self.shape()
    }

    fn entity_data(&self) -> &[f64] {
        self.as_slice()
    }

    fn kind_name(&self) -> &'static str {
        T::KIND_NAME
    }
}

pub(crate) fn downcast_ref<T: Entity>(value: &dyn AnyEntity) -> Result<&T> {
    value.as_any().downcast_ref::<T>().ok_or_else(|| Error::KindMismatch {
        expected: T::KIND_NAME.to_string(),
        found: value.kind_name().to_string(),
    })
}

pub(crate) fn downcast_mut<T: Entity>(value: &mut dyn AnyEntity) -> Result<&mut T> {
    let found = value.kind_name();
    value.as_any_mut().downcast_mut::<T>().ok_or_else(|| Error::KindMismatch {
        expected: T::KIND_NAME.to_string(),
        found: found.to_string(),
    })
}

pub(crate) fn downcast_box<T: Entity>(value: Box<dyn AnyEntity>) -> Result<T> {
    let found = value.kind_name();
    value.into_any().downcast::<T>().map(|b| *b).map_err(|_| Error::KindMismatch {
        expected: T::KIND_NAME.to_string(),
        found: found.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    #[test]
    fn region_round_trip_on_matrix() {
        let m = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let block = m.region(Region::new(0, 1, 2, 2)).unwrap();
        assert_eq!(block.as_slice(), &[2.0, 3.0, 5.0, 6.0]);

        let mut n = m.clone();
        n.zero_region(Region::new(1, 0, 1, 3)).unwrap();
        assert_eq!(n.as_slice(), &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]);
        n.set_region(Region::new(1, 0, 1, 3), &m.region(Region::new(1, 0, 1, 3)).unwrap()).unwrap();
        assert_eq!(n, m);
    }

    #[test]
    fn region_out_of_bounds() {
        let m = DenseMatrix::zeros(Shape::new(2, 2)).unwrap();
        assert!(matches!(m.region(Region::new(1, 1, 2, 1)), Err(Error::RegionOutOfBounds { .. })));
        assert!(matches!(
            Region::new(usize::MAX, 0, 2, 1).check_within(Shape::new(2, 2)),
            Err(Error::RegionOutOfBounds { .. })
        ));
    }

    #[test]
    fn scalar_encode_has_no_header() {
        let mut w = PayloadWriter::new();
        7.5f64.encode(&mut w);
        assert_eq!(w.len(), 8);
        let bytes = w.into_bytes();
        let mut c = PayloadCursor::new(&bytes);
        assert_eq!(f64::decode(&mut c).unwrap(), 7.5);
    }
}
