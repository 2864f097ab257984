use std::any::TypeId;
use std::fmt;

use crate::entity::{downcast_box, AnyEntity, Entity, Shape};
use crate::error::Result;

/// Largest identifier a kind can issue. The top three bits of a stored
/// identifier word carry payload tags.
pub const MAX_IDENTIFIER: u32 = (1 << 29) - 1;

/// Tape identifier of an entity. Zero marks a passive value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Identifier(u32);

impl Identifier {
    pub const PASSIVE: Identifier = Identifier(0);

    pub const fn new(raw: u32) -> Self {
        Identifier(raw)
    }

    pub const fn get(self) -> u32 {
        self.0
    }

    pub const fn is_passive(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An entity paired with its tape identifier.
///
/// The value is stored unchanged; the identifier sits next to it. `Active`
/// is deliberately not `Clone`: two values sharing one identifier would break
/// the reuse scheme. Copy through a recorded assignment instead, or take a
/// passive copy with `Active::passive(v.value().clone())`.
///
/// Identifiers are returned to the tape with `Tape::release`. Dropping an
/// active value without releasing it only leaks the identifier.
#[derive(Debug)]
pub struct Active<T: Entity> {
    pub(crate) value: T,
    pub(crate) id: Identifier,
}

impl<T: Entity> Active<T> {
    pub fn passive(value: T) -> Self {
        Active { value, id: Identifier::PASSIVE }
    }

    pub fn value(&self) -> &T {
        &self.value
    }

    pub fn id(&self) -> Identifier {
        self.id
    }

    pub fn is_active(&self) -> bool {
        !self.id.is_passive()
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    pub fn into_value(self) -> T {
        self.value
    }
}

impl<T: Entity> From<T> for Active<T> {
    fn from(value: T) -> Self {
        Active::passive(value)
    }
}

impl Active<f64> {
    pub fn get(&self) -> f64 {
        self.value
    }
}

/// Object-safe view of an [`Active`] used to pass mixed-kind arguments to
/// statement recording.
pub trait AnyActive {
    fn id(&self) -> Identifier;
    fn value_any(&self) -> &dyn AnyEntity;
    fn entity_type(&self) -> TypeId;
    fn entity_kind_name(&self) -> &'static str;
    #[doc(hidden)]
    fn set_id(&mut self, id: Identifier);
    #[doc(hidden)]
    fn set_value_any(&mut self, value: Box<dyn AnyEntity>) -> Result<()>;
    #[doc(hidden)]
    fn value_any_mut(&mut self) -> &mut dyn AnyEntity;
}

impl<T: Entity> AnyActive for Active<T> {
    fn id(&self) -> Identifier {
        self.id
    }

    fn value_any(&self) -> &dyn AnyEntity {
        &self.value
    }

    fn entity_type(&self) -> TypeId {
        TypeId::of::<T>()
    }

    fn entity_kind_name(&self) -> &'static str {
        T::KIND_NAME
    }

    fn set_id(&mut self, id: Identifier) {
        self.id = id;
    }

    fn set_value_any(&mut self, value: Box<dyn AnyEntity>) -> Result<()> {
        self.value = downcast_box::<T>(value)?;
        Ok(())
    }

    fn value_any_mut(&mut self) -> &mut dyn AnyEntity {
        &mut self.value
    }
}
