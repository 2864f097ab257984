//! Per-kind primal and adjoint vectors.

use std::any::Any;

use crate::active::Identifier;
use crate::entity::{downcast_ref, AnyEntity, ElementShape, Entity, Region, Shape};
use crate::error::{Error, Result};
use crate::index::IndexManager;
use crate::payload::{PayloadCursor, PayloadWriter};

/// Primal vector, adjoint vector and index manager for one entity kind.
///
/// Slot 0 belongs to passive values: its primal stays at the zero element and
/// updates to its adjoint are discarded. Adjoint slots of dynamic kinds start
/// unsized and take the shape of their first update.
#[derive(Debug, Clone)]
pub struct KindStore<T: Entity> {
    kind_id: usize,
    primals: Vec<T>,
    adjoints: Vec<T>,
    index: IndexManager,
    snapshot: Option<Vec<(u32, T)>>,
}

impl<T: Entity> KindStore<T> {
    pub fn new(kind_id: usize) -> Self {
        KindStore {
            kind_id,
            primals: vec![T::zero_element()],
            adjoints: Vec::new(),
            index: IndexManager::new(),
            snapshot: None,
        }
    }

    pub fn kind_id(&self) -> usize {
        self.kind_id
    }

    pub fn index_manager(&self) -> &IndexManager {
        &self.index
    }

    pub fn max_issued(&self) -> u32 {
        self.index.max_issued()
    }

    fn grow(&mut self) {
        let need = self.index.max_issued() as usize + 1;
        if self.primals.len() < need {
            self.primals.resize(need, T::zero_element());
        }
    }

    pub fn acquire(&mut self) -> Result<Identifier> {
        let id = self.index.acquire()?;
        self.grow();
        Ok(id)
    }

    pub fn acquire_unused(&mut self) -> Result<Identifier> {
        let id = self.index.acquire_unused()?;
        self.grow();
        Ok(id)
    }

    pub fn release(&mut self, id: Identifier) -> Result<()> {
        self.index.release(id)
    }

    pub fn pin(&mut self, id: Identifier) -> Result<()> {
        self.index.pin(id)
    }

    fn check(&self, id: Identifier) -> Result<usize> {
        if id.get() > self.index.max_issued() {
            return Err(Error::OutOfRange {
                kind: T::KIND_NAME,
                id: id.get(),
                max_issued: self.index.max_issued(),
            });
        }
        Ok(id.get() as usize)
    }

    fn check_writable(&self, id: Identifier) -> Result<usize> {
        let i = self.check(id)?;
        if i == 0 {
            return Err(Error::PassiveIdentifier);
        }
        Ok(i)
    }

    pub fn primal(&self, id: Identifier) -> Result<&T> {
        let i = self.check(id)?;
        Ok(&self.primals[i])
    }

    pub fn set_primal(&mut self, id: Identifier, value: T) -> Result<()> {
        let i = self.check_writable(id)?;
        self.primals[i] = value;
        Ok(())
    }

    pub fn set_primal_region(&mut self, id: Identifier, region: Region, value: &T) -> Result<()> {
        let i = self.check_writable(id)?;
        self.primals[i].set_region(region, value)
    }

    fn adjoint_slot(&mut self, i: usize) -> &mut T {
        if self.adjoints.len() <= i {
            let need = (self.index.max_issued() as usize + 1).max(i + 1);
            self.adjoints.resize(need, T::zero_element());
        }
        &mut self.adjoints[i]
    }

    /// Whole adjoint of `id`; the zero element if never touched.
    pub fn adjoint(&self, id: Identifier) -> Result<T> {
        let i = self.check(id)?;
        Ok(self.adjoints.get(i).cloned().unwrap_or_else(T::zero_element))
    }

    pub fn set_adjoint(&mut self, id: Identifier, value: T) -> Result<()> {
        let i = self.check_writable(id)?;
        *self.adjoint_slot(i) = value;
        Ok(())
    }

    pub fn adjoint_update(&mut self, id: Identifier, delta: &T) -> Result<()> {
        let i = self.check(id)?;
        if i == 0 || delta.is_unsized() {
            return Ok(());
        }
        let slot = self.adjoint_slot(i);
        if slot.is_unsized() {
            *slot = delta.clone();
            Ok(())
        } else {
            slot.add_assign_entity(delta)
        }
    }

    /// Adds `delta` to the `region` part of the adjoint. An unsized slot is
    /// first sized to `full_shape`.
    pub fn adjoint_update_region(
        &mut self,
        id: Identifier,
        region: Region,
        delta: &T,
        full_shape: Shape,
    ) -> Result<()> {
        let i = self.check(id)?;
        if i == 0 {
            return Ok(());
        }
        let slot = self.adjoint_slot(i);
        if slot.is_unsized() {
            *slot = T::zeros(full_shape)?;
        } else if slot.shape() != full_shape {
            return Err(Error::ShapeMismatch { expected: slot.shape(), found: full_shape });
        }
        slot.add_region(region, delta)
    }

    /// Returns the adjoint (or its `region` part) and zeroes exactly that part.
    /// Zeroing the whole entity resets a dynamic slot to the unsized state.
    pub fn adjoint_extract_and_zero(&mut self, id: Identifier, region: Option<Region>) -> Result<T> {
        let i = self.check(id)?;
        if i == 0 || i >= self.adjoints.len() {
            return Ok(match region {
                Some(r) if T::is_dynamic() => T::zeros(r.shape())?,
                _ => T::zero_element(),
            });
        }
        let slot = &mut self.adjoints[i];
        match region {
            None => Ok(std::mem::replace(slot, T::zero_element())),
            Some(r) if slot.is_unsized() => T::zeros(r.shape()),
            Some(r) => {
                let part = slot.region(r)?;
                slot.zero_region(r)?;
                Ok(part)
            }
        }
    }

    pub fn clear_adjoints(&mut self) {
        self.adjoints.clear();
    }

    pub fn reset(&mut self) {
        *self = KindStore::new(self.kind_id);
    }

    pub fn primal_elems(&self) -> usize {
        self.primals.iter().map(|p| p.as_slice().len()).sum()
    }

    pub fn adjoint_elems(&self) -> usize {
        self.adjoints.iter().map(|a| a.as_slice().len()).sum()
    }

    pub(crate) fn take_snapshot(&mut self) {
        let snap = self
            .index
            .live_ids()
            .map(|id| (id.get(), self.primals[id.get() as usize].clone()))
            .collect();
        self.snapshot = Some(snap);
    }

    /// Live-at-start identifiers whose primal differs from the snapshot.
    pub(crate) fn restoration_mismatches(&self) -> Vec<u32> {
        let Some(snap) = &self.snapshot else {
            return Vec::new();
        };
        snap.iter()
            .filter(|(id, v)| {
                let now = &self.primals[*id as usize];
                now.shape() != v.shape()
                    || now.as_slice().iter().zip(v.as_slice()).any(|(a, b)| a.to_bits() != b.to_bits())
            })
            .map(|(id, _)| *id)
            .collect()
    }
}

/// Kind-erased store interface used by the tape's statement engine.
pub(crate) trait ErasedStore: Send + Sync {
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
    fn kind_name(&self) -> &'static str;
    fn element_shape(&self) -> ElementShape;
    fn acquire(&mut self) -> Result<Identifier>;
    fn release(&mut self, id: Identifier) -> Result<()>;
    fn is_live(&self, id: Identifier) -> bool;
    fn primal_dyn(&self, id: Identifier) -> Result<&dyn AnyEntity>;
    fn set_primal_dyn(&mut self, id: Identifier, value: &dyn AnyEntity) -> Result<()>;
    fn set_primal_region_dyn(&mut self, id: Identifier, region: Region, value: &dyn AnyEntity) -> Result<()>;
    fn reset_primal(&mut self, id: Identifier) -> Result<()>;
    /// Extracted adjoint and whether the slot held data. Unsized parts come
    /// back as zeros of `shape` (or of the region shape).
    fn extract_dyn(
        &mut self,
        id: Identifier,
        region: Option<Region>,
        shape: Shape,
    ) -> Result<(Box<dyn AnyEntity>, bool)>;
    fn update_dyn(
        &mut self,
        id: Identifier,
        region: Option<Region>,
        delta: &dyn AnyEntity,
        full_shape: Shape,
    ) -> Result<()>;
    fn decode_dyn(&self, cursor: &mut PayloadCursor<'_>) -> Result<Box<dyn AnyEntity>>;
    fn decode_data_dyn(&self, shape: Shape, cursor: &mut PayloadCursor<'_>) -> Result<Box<dyn AnyEntity>>;
    fn encode_dyn(&self, value: &dyn AnyEntity, out: &mut PayloadWriter) -> Result<()>;
    fn region_dyn(&self, value: &dyn AnyEntity, region: Region) -> Result<Box<dyn AnyEntity>>;
    fn set_region_in(&self, target: &mut dyn AnyEntity, region: Region, value: &dyn AnyEntity) -> Result<()>;
    fn clone_dyn(&self, value: &dyn AnyEntity) -> Result<Box<dyn AnyEntity>>;
    fn take_snapshot(&mut self);
    fn restoration_mismatches(&self) -> Vec<u32>;
    fn clear_adjoints(&mut self);
    fn reset(&mut self);
    fn elems(&self) -> (usize, usize);
}

impl<T: Entity> ErasedStore for KindStore<T> {
    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }

    fn kind_name(&self) -> &'static str {
        T::KIND_NAME
    }

    fn element_shape(&self) -> ElementShape {
        T::ELEMENT_SHAPE
    }

    fn acquire(&mut self) -> Result<Identifier> {
        KindStore::acquire(self)
    }

    fn release(&mut self, id: Identifier) -> Result<()> {
        KindStore::release(self, id)
    }

    fn is_live(&self, id: Identifier) -> bool {
        self.index.is_live(id)
    }

    fn primal_dyn(&self, id: Identifier) -> Result<&dyn AnyEntity> {
        Ok(self.primal(id)?)
    }

    fn set_primal_dyn(&mut self, id: Identifier, value: &dyn AnyEntity) -> Result<()> {
        let v = downcast_ref::<T>(value)?.clone();
        self.set_primal(id, v)
    }

    fn set_primal_region_dyn(&mut self, id: Identifier, region: Region, value: &dyn AnyEntity) -> Result<()> {
        self.set_primal_region(id, region, downcast_ref::<T>(value)?)
    }

    fn reset_primal(&mut self, id: Identifier) -> Result<()> {
        self.set_primal(id, T::zero_element())
    }

    fn extract_dyn(
        &mut self,
        id: Identifier,
        region: Option<Region>,
        shape: Shape,
    ) -> Result<(Box<dyn AnyEntity>, bool)> {
        let v = self.adjoint_extract_and_zero(id, region)?;
        if v.is_unsized() {
            let want = region.map(|r| r.shape()).unwrap_or(shape);
            Ok((Box::new(T::zeros(want)?), false))
        } else {
            Ok((Box::new(v), true))
        }
    }

    fn update_dyn(
        &mut self,
        id: Identifier,
        region: Option<Region>,
        delta: &dyn AnyEntity,
        full_shape: Shape,
    ) -> Result<()> {
        let d = downcast_ref::<T>(delta)?;
        match region {
            None => {
                if !d.is_unsized() {
                    crate::entity::check_shape(full_shape, d.shape())?;
                }
                self.adjoint_update(id, d)
            }
            Some(r) => self.adjoint_update_region(id, r, d, full_shape),
        }
    }

    fn decode_dyn(&self, cursor: &mut PayloadCursor<'_>) -> Result<Box<dyn AnyEntity>> {
        Ok(Box::new(T::decode(cursor)?))
    }

    fn decode_data_dyn(&self, shape: Shape, cursor: &mut PayloadCursor<'_>) -> Result<Box<dyn AnyEntity>> {
        Ok(Box::new(T::decode_data(shape, cursor)?))
    }

    fn encode_dyn(&self, value: &dyn AnyEntity, out: &mut PayloadWriter) -> Result<()> {
        downcast_ref::<T>(value)?.encode(out);
        Ok(())
    }

    fn region_dyn(&self, value: &dyn AnyEntity, region: Region) -> Result<Box<dyn AnyEntity>> {
        Ok(Box::new(downcast_ref::<T>(value)?.region(region)?))
    }

    fn set_region_in(&self, target: &mut dyn AnyEntity, region: Region, value: &dyn AnyEntity) -> Result<()> {
        let v = downcast_ref::<T>(value)?;
        crate::entity::downcast_mut::<T>(target)?.set_region(region, v)
    }

    fn clone_dyn(&self, value: &dyn AnyEntity) -> Result<Box<dyn AnyEntity>> {
        Ok(Box::new(downcast_ref::<T>(value)?.clone()))
    }

    fn take_snapshot(&mut self) {
        KindStore::take_snapshot(self)
    }

    fn restoration_mismatches(&self) -> Vec<u32> {
        KindStore::restoration_mismatches(self)
    }

    fn clear_adjoints(&mut self) {
        KindStore::clear_adjoints(self)
    }

    fn reset(&mut self) {
        KindStore::reset(self)
    }

    fn elems(&self) -> (usize, usize) {
        (self.primal_elems(), self.adjoint_elems())
    }
}
