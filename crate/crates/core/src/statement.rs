//! Operation descriptors and the per-statement payload engine.
//!
//! A descriptor lists the arguments of an operation with their roles, an
//! optional set of constants, a primal routine and one adjoint rule per read
//! argument. The tape turns a descriptor into record, reverse and forward
//! routines.
//!
//! Payload of one statement, in order:
//!
//! 1. every read argument (`In`, `InOut`): its identifier, then its value if
//!    the identifier is 0;
//! 2. every constant: 4 bytes for an index, 8 for a real;
//! 3. every written argument (`Out`, `InOut`): a tagged identifier word and
//!    the old primal held by that identifier;
//! 4. directly after a written argument, its new value when the argument was
//!    passive before and is read back during reversal.
//!
//! The identifier word keeps the identifier in the low 29 bits. Bit 29 marks
//! an appended new value, bits 30 and 31 select how the old primal is stored
//! (see [`OldStore`]).

use std::any::{Any, TypeId};
use std::cell::OnceCell;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::active::{AnyActive, Identifier, MAX_IDENTIFIER};
use crate::entity::{downcast_ref, AnyEntity, ElementShape, Entity, Region};
use crate::error::{Error, Result};
use crate::payload::{PayloadCursor, PayloadWriter};
use crate::store::ErasedStore;

pub(crate) const ID_MASK: u32 = MAX_IDENTIFIER;
pub(crate) const FLAG_CURRENT: u32 = 1 << 29;
const MODE_SHIFT: u32 = 30;

/// How the old primal of a written argument is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum OldStore {
    /// Same shape as the new value, data only.
    Full = 0,
    /// The old slot was unsized; nothing stored.
    Empty = 1,
    /// Explicit rows/cols header, then data.
    Shaped = 2,
    /// Element count, then the data of the written region only.
    Partial = 3,
}

impl OldStore {
    fn from_word(word: u32) -> Self {
        match word >> MODE_SHIFT {
            0 => OldStore::Full,
            1 => OldStore::Empty,
            2 => OldStore::Shaped,
            _ => OldStore::Partial,
        }
    }
}

/// Argument role of an operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    In,
    Out,
    InOut,
    /// Read argument of an element-passive operation.
    Inp,
    /// Written argument of an element-passive operation.
    Outp,
    InOutp,
}

impl Role {
    pub fn is_read(self) -> bool {
        matches!(self, Role::In | Role::InOut)
    }

    pub fn is_written(self) -> bool {
        matches!(self, Role::Out | Role::InOut)
    }

    pub fn is_element_passive(self) -> bool {
        matches!(self, Role::Inp | Role::Outp | Role::InOutp)
    }

    fn takes_mut(self) -> bool {
        matches!(self, Role::Out | Role::InOut | Role::Outp | Role::InOutp)
    }

    pub fn label(self) -> &'static str {
        match self {
            Role::In => "IN",
            Role::Out => "OUT",
            Role::InOut => "INOUT",
            Role::Inp => "INP",
            Role::Outp => "OUTP",
            Role::InOutp => "INOUTP",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstKind {
    Index,
    Real,
}

/// A constant leaf of a statement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constant {
    Index(u32),
    Real(f64),
}

impl Constant {
    pub fn kind(&self) -> ConstKind {
        match self {
            Constant::Index(_) => ConstKind::Index,
            Constant::Real(_) => ConstKind::Real,
        }
    }

    pub fn index(i: usize) -> Self {
        Constant::Index(i as u32)
    }

    pub fn as_index(&self) -> Result<usize> {
        match self {
            Constant::Index(i) => Ok(*i as usize),
            Constant::Real(_) => Err(Error::Statement { op: "constant".into(), message: "expected an index constant".into() }),
        }
    }

    pub fn as_real(&self) -> Result<f64> {
        match self {
            Constant::Real(x) => Ok(*x),
            Constant::Index(_) => Err(Error::Statement { op: "constant".into(), message: "expected a real constant".into() }),
        }
    }
}

pub type RegionFn = Arc<dyn Fn(&[Constant]) -> Result<Region> + Send + Sync>;
pub type PrimalFn = Arc<dyn Fn(&Frame<'_>) -> Result<Vec<Box<dyn AnyEntity>>> + Send + Sync>;
pub type RuleFn = Arc<dyn Fn(&Frame<'_>) -> Result<Contribution> + Send + Sync>;
/// Reverse or forward routine of a raw statement: statement index and a
/// cursor over exactly its payload.
pub type RawFn = Arc<dyn Fn(usize, &mut PayloadCursor<'_>) -> Result<()> + Send + Sync>;

/// How a written argument is accessed.
#[derive(Clone)]
pub enum LhsAccess {
    Full,
    /// Only the region computed from the constants is written. With
    /// `partial_store`, only that region's old primal goes on the tape.
    Region { region: RegionFn, partial_store: bool },
}

impl fmt::Debug for LhsAccess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LhsAccess::Full => f.write_str("Full"),
            LhsAccess::Region { partial_store, .. } => {
                f.debug_struct("Region").field("partial_store", partial_store).finish()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArgSpec {
    pub name: String,
    pub kind: TypeId,
    pub kind_name: &'static str,
    pub element_shape: ElementShape,
    pub role: Role,
    pub access: LhsAccess,
}

#[derive(Debug, Clone)]
pub struct ConstSpec {
    pub name: String,
    pub kind: ConstKind,
}

/// Adjoint contribution returned by a rule.
pub enum Contribution {
    Zero,
    Full(Box<dyn AnyEntity>),
    Region(Region, Box<dyn AnyEntity>),
}

impl Contribution {
    pub fn full<T: Entity>(value: T) -> Self {
        Contribution::Full(Box::new(value))
    }

    pub fn region<T: Entity>(region: Region, value: T) -> Self {
        Contribution::Region(region, Box::new(value))
    }
}

impl fmt::Debug for Contribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Contribution::Zero => f.write_str("Zero"),
            Contribution::Full(v) => f.debug_tuple("Full").field(v).finish(),
            Contribution::Region(r, v) => f.debug_tuple("Region").field(r).field(v).finish(),
        }
    }
}

/// Inputs visible to primal routines and adjoint rules.
///
/// `value(k)` is the primal of read argument `k` as it was when the statement
/// executed. `bar(k)` is the adjoint of written argument `k` (its region part
/// for region access); it is only available to rules.
pub struct Frame<'a> {
    name: &'a str,
    values: Vec<Option<&'a dyn AnyEntity>>,
    bars: Vec<Option<&'a dyn AnyEntity>>,
    constants: &'a [Constant],
    memo: OnceCell<Box<dyn Any>>,
}

impl<'a> Frame<'a> {
    fn missing(&self, what: &str, arg: usize) -> Error {
        Error::Statement { op: self.name.to_string(), message: format!("no {what} for argument {arg}") }
    }

    pub fn value<T: Entity>(&self, arg: usize) -> Result<&'a T> {
        let v = self.values.get(arg).copied().flatten().ok_or_else(|| self.missing("value", arg))?;
        downcast_ref::<T>(v)
    }

    pub fn bar<T: Entity>(&self, arg: usize) -> Result<&'a T> {
        let v = self.bars.get(arg).copied().flatten().ok_or_else(|| self.missing("adjoint", arg))?;
        downcast_ref::<T>(v)
    }

    pub fn constants(&self) -> &'a [Constant] {
        self.constants
    }

    pub fn index(&self, k: usize) -> Result<usize> {
        match self.constants.get(k) {
            Some(Constant::Index(i)) => Ok(*i as usize),
            _ => Err(self.missing("index constant", k)),
        }
    }

    pub fn real(&self, k: usize) -> Result<f64> {
        match self.constants.get(k) {
            Some(Constant::Real(r)) => Ok(*r),
            _ => Err(self.missing("real constant", k)),
        }
    }

    pub fn name(&self) -> &str {
        self.name
    }

    /// Value shared by all rules of one statement reversal, computed by the
    /// first rule that asks for it.
    pub fn memo<R: 'static>(&self, init: impl FnOnce() -> Result<R>) -> Result<&R> {
        if self.memo.get().is_none() {
            let _ = self.memo.set(Box::new(init()?));
        }
        self.memo
            .get()
            .and_then(|b| b.downcast_ref::<R>())
            .ok_or_else(|| Error::Statement { op: self.name.to_string(), message: "memo type mismatch".into() })
    }
}

/// Declarative description of one operation.
#[derive(Clone)]
pub struct StatementDescriptor {
    pub(crate) name: String,
    pub(crate) args: Vec<ArgSpec>,
    pub(crate) consts: Vec<ConstSpec>,
    pub(crate) element_passive: bool,
    pub(crate) primal: Option<PrimalFn>,
    pub(crate) rules: Vec<(String, RuleFn)>,
}

impl fmt::Debug for StatementDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StatementDescriptor")
            .field("name", &self.name)
            .field("args", &self.args)
            .field("consts", &self.consts)
            .field("element_passive", &self.element_passive)
            .field("rules", &self.rules.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>())
            .finish()
    }
}

impl StatementDescriptor {
    pub fn builder(name: impl Into<String>) -> DescriptorBuilder {
        DescriptorBuilder {
            desc: StatementDescriptor {
                name: name.into(),
                args: Vec::new(),
                consts: Vec::new(),
                element_passive: false,
                primal: None,
                rules: Vec::new(),
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn args(&self) -> &[ArgSpec] {
        &self.args
    }

    pub fn constants(&self) -> &[ConstSpec] {
        &self.consts
    }

    pub fn is_element_passive(&self) -> bool {
        self.element_passive
    }

    fn invalid(&self, arg: &str, reason: impl Into<String>) -> Error {
        Error::Validation { descriptor: self.name.clone(), arg: arg.to_string(), reason: reason.into() }
    }

    /// Checks the role rules and the rule-per-argument contract.
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.args.iter().enumerate() {
            if self.args[..i].iter().any(|b| b.name == a.name) {
                return Err(self.invalid(&a.name, "duplicate argument name"));
            }
            if self.element_passive != a.role.is_element_passive() {
                let reason = if self.element_passive {
                    format!("role {} in an element-passive operation", a.role)
                } else {
                    format!("element-passive role {} in a differentiated operation", a.role)
                };
                return Err(self.invalid(&a.name, reason));
            }
            if matches!(a.access, LhsAccess::Region { .. }) && !matches!(a.role, Role::Out | Role::Outp) {
                return Err(self.invalid(&a.name, "region access is only allowed on written arguments"));
            }
        }
        for (i, c) in self.consts.iter().enumerate() {
            if self.consts[..i].iter().any(|d| d.name == c.name) || self.args.iter().any(|a| a.name == c.name) {
                return Err(self.invalid(&c.name, "duplicate argument name"));
            }
        }
        if self.element_passive {
            if let Some((name, _)) = self.rules.first() {
                return Err(self.invalid(name, "element-passive operations carry no adjoint rules"));
            }
            return Ok(());
        }
        if !self.args.iter().any(|a| a.role.is_written()) {
            return Err(self.invalid("<return>", "operation has no OUT or INOUT argument"));
        }
        if self.primal.is_none() {
            return Err(self.invalid("<primal>", "missing primal routine"));
        }
        for (name, _) in &self.rules {
            match self.args.iter().find(|a| &a.name == name) {
                None => return Err(self.invalid(name, "adjoint rule for unknown argument")),
                Some(a) if !a.role.is_read() => {
                    return Err(self.invalid(name, format!("adjoint rule on {} argument", a.role)))
                }
                _ => {}
            }
            if self.rules.iter().filter(|(n, _)| n == name).count() > 1 {
                return Err(self.invalid(name, "more than one adjoint rule"));
            }
        }
        for a in self.args.iter().filter(|a| a.role.is_read()) {
            if !self.rules.iter().any(|(n, _)| n == &a.name) {
                return Err(self.invalid(&a.name, "missing adjoint rule"));
            }
        }
        Ok(())
    }
}

pub struct DescriptorBuilder {
    desc: StatementDescriptor,
}

impl DescriptorBuilder {
    fn arg<T: Entity>(mut self, name: &str, role: Role, access: LhsAccess) -> Self {
        self.desc.args.push(ArgSpec {
            name: name.to_string(),
            kind: TypeId::of::<T>(),
            kind_name: T::KIND_NAME,
            element_shape: T::ELEMENT_SHAPE,
            role,
            access,
        });
        self
    }

    pub fn input<T: Entity>(self, name: &str) -> Self {
        self.arg::<T>(name, Role::In, LhsAccess::Full)
    }

    pub fn output<T: Entity>(self, name: &str) -> Self {
        self.arg::<T>(name, Role::Out, LhsAccess::Full)
    }

    pub fn inout<T: Entity>(self, name: &str) -> Self {
        self.arg::<T>(name, Role::InOut, LhsAccess::Full)
    }

    /// Written argument of which only `region(constants)` changes.
    pub fn output_region<T: Entity>(
        self,
        name: &str,
        region: impl Fn(&[Constant]) -> Result<Region> + Send + Sync + 'static,
        partial_store: bool,
    ) -> Self {
        self.arg::<T>(name, Role::Out, LhsAccess::Region { region: Arc::new(region), partial_store })
    }

    pub fn passive_input<T: Entity>(self, name: &str) -> Self {
        self.arg::<T>(name, Role::Inp, LhsAccess::Full)
    }

    pub fn passive_output<T: Entity>(self, name: &str) -> Self {
        self.arg::<T>(name, Role::Outp, LhsAccess::Full)
    }

    pub fn passive_inout<T: Entity>(self, name: &str) -> Self {
        self.arg::<T>(name, Role::InOutp, LhsAccess::Full)
    }

    pub fn element_passive(mut self) -> Self {
        self.desc.element_passive = true;
        self
    }

    pub fn index_const(mut self, name: &str) -> Self {
        self.desc.consts.push(ConstSpec { name: name.to_string(), kind: ConstKind::Index });
        self
    }

    pub fn real_const(mut self, name: &str) -> Self {
        self.desc.consts.push(ConstSpec { name: name.to_string(), kind: ConstKind::Real });
        self
    }

    /// Returns one value per written argument, in argument order. For a
    /// region argument the value is the region content.
    pub fn primal(
        mut self,
        f: impl Fn(&Frame<'_>) -> Result<Vec<Box<dyn AnyEntity>>> + Send + Sync + 'static,
    ) -> Self {
        self.desc.primal = Some(Arc::new(f));
        self
    }

    pub fn adjoint(mut self, arg: &str, rule: impl Fn(&Frame<'_>) -> Result<Contribution> + Send + Sync + 'static) -> Self {
        self.desc.rules.push((arg.to_string(), Arc::new(rule)));
        self
    }

    pub fn build(self) -> StatementDescriptor {
        self.desc
    }
}

/// Dense handle of a registered statement kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StatementHandle(pub(crate) u32);

impl StatementHandle {
    pub fn get(self) -> u32 {
        self.0
    }
}

/// Argument passed to `Tape::record`, in descriptor order.
pub enum ArgRef<'a> {
    In(&'a dyn AnyActive),
    Lhs(&'a mut dyn AnyActive),
}

impl<'a> ArgRef<'a> {
    fn get(&self) -> &dyn AnyActive {
        match self {
            ArgRef::In(a) => *a,
            ArgRef::Lhs(a) => &**a,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegistryArg {
    pub name: String,
    pub kind: String,
    pub role: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegistryEntry {
    pub handle: u32,
    pub name: String,
    pub args: Vec<RegistryArg>,
}

/// A descriptor resolved against a tape's kinds.
pub(crate) struct Registered {
    pub(crate) desc: StatementDescriptor,
    kind_ids: Vec<usize>,
    rules: Vec<Option<RuleFn>>,
    read: Vec<usize>,
    written: Vec<usize>,
}

impl Registered {
    pub(crate) fn new(desc: StatementDescriptor, kind_ids: Vec<usize>) -> Self {
        let rules = desc
            .args
            .iter()
            .map(|a| desc.rules.iter().find(|(n, _)| n == &a.name).map(|(_, r)| r.clone()))
            .collect();
        let read = (0..desc.args.len()).filter(|&i| desc.args[i].role.is_read()).collect();
        let written = (0..desc.args.len())
            .filter(|&i| matches!(desc.args[i].role, Role::Out | Role::InOut | Role::Outp | Role::InOutp))
            .collect();
        Registered { desc, kind_ids, rules, read, written }
    }

    pub(crate) fn registry_entry(&self, handle: u32) -> RegistryEntry {
        let mut args: Vec<RegistryArg> = self
            .desc
            .args
            .iter()
            .map(|a| RegistryArg { name: a.name.clone(), kind: a.kind_name.to_string(), role: a.role.label().to_string() })
            .collect();
        args.extend(self.desc.consts.iter().map(|c| RegistryArg {
            name: c.name.clone(),
            kind: match c.kind {
                ConstKind::Index => "index".to_string(),
                ConstKind::Real => "real".to_string(),
            },
            role: "PASSIVE".to_string(),
        }));
        RegistryEntry { handle, name: self.desc.name.clone(), args }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Statement { op: self.desc.name.clone(), message: message.into() }
    }

    fn region_of(&self, arg: usize, constants: &[Constant]) -> Result<Option<(Region, bool)>> {
        match &self.desc.args[arg].access {
            LhsAccess::Full => Ok(None),
            LhsAccess::Region { region, partial_store } => Ok(Some((region(constants)?, *partial_store))),
        }
    }

    fn check_call(&self, args: &[ArgRef<'_>], constants: &[Constant]) -> Result<()> {
        if args.len() != self.desc.args.len() {
            return Err(self.error(format!("expected {} arguments, got {}", self.desc.args.len(), args.len())));
        }
        for (spec, arg) in self.desc.args.iter().zip(args) {
            let is_mut = matches!(arg, ArgRef::Lhs(_));
            if is_mut != spec.role.takes_mut() {
                return Err(self.error(format!("argument `{}` ({}) passed with the wrong access", spec.name, spec.role)));
            }
            if arg.get().entity_type() != spec.kind {
                return Err(Error::KindMismatch {
                    expected: spec.kind_name.to_string(),
                    found: arg.get().entity_kind_name().to_string(),
                });
            }
        }
        if constants.len() != self.desc.consts.len()
            || constants.iter().zip(&self.desc.consts).any(|(c, s)| c.kind() != s.kind)
        {
            return Err(self.error("constants do not match the descriptor"));
        }
        Ok(())
    }

    fn compute_primal(&self, frame: &Frame<'_>) -> Result<Vec<Box<dyn AnyEntity>>> {
        let primal = self.desc.primal.as_ref().ok_or_else(|| self.error("no primal routine"))?;
        let out = primal(frame)?;
        if out.len() != self.written.len() {
            return Err(self.error(format!("primal returned {} values for {} outputs", out.len(), self.written.len())));
        }
        for (v, &a) in out.iter().zip(&self.written) {
            if v.as_any().type_id() != self.desc.args[a].kind {
                return Err(Error::KindMismatch {
                    expected: self.desc.args[a].kind_name.to_string(),
                    found: v.kind_name().to_string(),
                });
            }
        }
        Ok(out)
    }
}

fn is_dynamic(store: &dyn ErasedStore) -> bool {
    matches!(store.element_shape(), ElementShape::Dynamic)
}

fn read_constants(reg: &Registered, cursor: &mut PayloadCursor<'_>) -> Result<Vec<Constant>> {
    reg.desc
        .consts
        .iter()
        .map(|c| {
            Ok(match c.kind {
                ConstKind::Index => Constant::Index(cursor.get_u32()?),
                ConstKind::Real => Constant::Real(cursor.get_f64()?),
            })
        })
        .collect()
}

/// Read-side identifiers and stored passive values of a statement.
struct ReadSide {
    ids: Vec<Identifier>,
    stored: Vec<Option<Box<dyn AnyEntity>>>,
}

fn read_rhs(reg: &Registered, stores: &[Box<dyn ErasedStore>], cursor: &mut PayloadCursor<'_>) -> Result<ReadSide> {
    let n = reg.desc.args.len();
    let mut ids = vec![Identifier::PASSIVE; n];
    let mut stored: Vec<Option<Box<dyn AnyEntity>>> = (0..n).map(|_| None).collect();
    for &a in &reg.read {
        let id = Identifier::new(cursor.get_u32()?);
        if id.is_passive() {
            stored[a] = Some(stores[reg.kind_ids[a]].decode_dyn(cursor)?);
        }
        ids[a] = id;
    }
    Ok(ReadSide { ids, stored })
}

fn frame_values<'a>(
    reg: &Registered,
    stores: &'a [Box<dyn ErasedStore>],
    rhs: &'a ReadSide,
) -> Result<Vec<Option<&'a dyn AnyEntity>>> {
    let mut values: Vec<Option<&dyn AnyEntity>> = vec![None; reg.desc.args.len()];
    for &a in &reg.read {
        values[a] = Some(match &rhs.stored[a] {
            Some(v) => &**v,
            None => stores[reg.kind_ids[a]].primal_dyn(rhs.ids[a])?,
        });
    }
    Ok(values)
}

struct WrittenRecord {
    arg: usize,
    id: Identifier,
    mode: OldStore,
    region: Option<Region>,
    old: Option<Box<dyn AnyEntity>>,
    current: Option<Box<dyn AnyEntity>>,
}

fn read_lhs(
    reg: &Registered,
    stores: &[Box<dyn ErasedStore>],
    constants: &[Constant],
    cursor: &mut PayloadCursor<'_>,
    forward: bool,
) -> Result<Vec<WrittenRecord>> {
    let mut out = Vec::with_capacity(reg.written.len());
    for &a in &reg.written {
        let store = &*stores[reg.kind_ids[a]];
        let word = cursor.get_u32()?;
        let id = Identifier::new(word & ID_MASK);
        let mode = OldStore::from_word(word);
        let region = reg.region_of(a, constants)?.map(|(r, _)| r);
        let old = match mode {
            OldStore::Full => {
                // The slot holds the new value during reversal and the old
                // one during forward replay; both have the stored shape.
                let shape = store.primal_dyn(id)?.entity_shape();
                if forward {
                    cursor.get_bytes(shape.len() * 8)?;
                    None
                } else {
                    Some(store.decode_data_dyn(shape, cursor)?)
                }
            }
            OldStore::Empty => None,
            OldStore::Shaped => Some(store.decode_dyn(cursor)?),
            OldStore::Partial => {
                let r = region.ok_or_else(|| reg.error("partial store without region access"))?;
                let count = cursor.get_u32()? as usize;
                if count != r.len() {
                    return Err(reg.error(format!("stored region holds {count} elements, region {r} needs {}", r.len())));
                }
                Some(store.decode_data_dyn(r.shape(), cursor)?)
            }
        };
        let current = if word & FLAG_CURRENT != 0 { Some(store.decode_dyn(cursor)?) } else { None };
        out.push(WrittenRecord { arg: a, id, mode, region, old, current });
    }
    Ok(out)
}

/// Reverse routine of a descriptor statement.
pub(crate) fn reverse(reg: &Registered, stores: &mut [Box<dyn ErasedStore>], payload: &[u8]) -> Result<()> {
    let mut cursor = PayloadCursor::new(payload);
    let rhs = read_rhs(reg, stores, &mut cursor)?;
    let constants = read_constants(reg, &mut cursor)?;
    let lhs = read_lhs(reg, stores, &constants, &mut cursor, false)?;
    cursor.finish()?;

    for w in &lhs {
        if let Some(cur) = &w.current {
            stores[reg.kind_ids[w.arg]].set_primal_dyn(w.id, &**cur)?;
        }
    }

    let mut bars: Vec<Option<Box<dyn AnyEntity>>> = (0..reg.desc.args.len()).map(|_| None).collect();
    let mut any_seeded = false;
    for w in &lhs {
        let store = &mut *stores[reg.kind_ids[w.arg]];
        let shape = store.primal_dyn(w.id)?.entity_shape();
        let partial = w.mode == OldStore::Partial;
        let (bar, seeded) = store.extract_dyn(w.id, if partial { w.region } else { None }, shape)?;
        any_seeded |= seeded;
        bars[w.arg] = Some(match w.region {
            Some(r) if !partial => store.region_dyn(&*bar, r)?,
            _ => bar,
        });
    }

    for w in &lhs {
        let store = &mut *stores[reg.kind_ids[w.arg]];
        match (w.mode, &w.old) {
            (OldStore::Empty, _) => store.reset_primal(w.id)?,
            (OldStore::Partial, Some(old)) => {
                let r = w.region.ok_or_else(|| reg.error("partial store without region access"))?;
                store.set_primal_region_dyn(w.id, r, &**old)?
            }
            (_, Some(old)) => store.set_primal_dyn(w.id, &**old)?,
            (_, None) => return Err(reg.error("missing old primal")),
        }
    }

    if !any_seeded {
        return Ok(());
    }

    let mut updates = Vec::new();
    {
        let values = frame_values(reg, stores, &rhs)?;
        let frame = Frame {
            name: &reg.desc.name,
            values,
            bars: bars.iter().map(|b| b.as_deref()).collect(),
            constants: &constants,
            memo: OnceCell::new(),
        };
        for &a in &reg.read {
            if rhs.ids[a].is_passive() {
                continue;
            }
            let rule = reg.rules[a].as_ref().ok_or_else(|| reg.error("missing adjoint rule"))?;
            let full_shape = frame.values[a].map(|v| v.entity_shape()).unwrap_or_default();
            updates.push((a, rule(&frame)?, full_shape));
        }
    }
    for (a, contribution, full_shape) in updates {
        let store = &mut *stores[reg.kind_ids[a]];
        match contribution {
            Contribution::Zero => {}
            Contribution::Full(d) => store.update_dyn(rhs.ids[a], None, &*d, full_shape)?,
            Contribution::Region(r, d) => store.update_dyn(rhs.ids[a], Some(r), &*d, full_shape)?,
        }
    }
    Ok(())
}

/// Forward replay of a descriptor statement: recomputes and writes the new
/// primals.
pub(crate) fn forward(reg: &Registered, stores: &mut [Box<dyn ErasedStore>], payload: &[u8]) -> Result<()> {
    let mut cursor = PayloadCursor::new(payload);
    let rhs = read_rhs(reg, stores, &mut cursor)?;
    let constants = read_constants(reg, &mut cursor)?;
    let outputs = {
        let frame = Frame {
            name: &reg.desc.name,
            values: frame_values(reg, stores, &rhs)?,
            bars: Vec::new(),
            constants: &constants,
            memo: OnceCell::new(),
        };
        reg.compute_primal(&frame)?
    };
    let lhs = read_lhs(reg, stores, &constants, &mut cursor, true)?;
    cursor.finish()?;
    for (w, out) in lhs.iter().zip(outputs) {
        let store = &mut *stores[reg.kind_ids[w.arg]];
        match (&w.current, w.region) {
            (Some(cur), _) => store.set_primal_dyn(w.id, &**cur)?,
            (None, Some(r)) => store.set_primal_region_dyn(w.id, r, &*out)?,
            (None, None) => store.set_primal_dyn(w.id, &*out)?,
        }
    }
    Ok(())
}

/// Outcome of the recording front half: computed outputs and regions.
pub(crate) struct Prepared {
    outputs: Vec<Box<dyn AnyEntity>>,
    regions: Vec<Option<(Region, bool)>>,
}

/// Validates the call and runs the primal routine. Touches nothing.
pub(crate) fn prepare(reg: &Registered, args: &[ArgRef<'_>], constants: &[Constant]) -> Result<Prepared> {
    reg.check_call(args, constants)?;
    let mut values: Vec<Option<&dyn AnyEntity>> = vec![None; args.len()];
    for &a in &reg.read {
        values[a] = Some(args[a].get().value_any());
    }
    let frame = Frame { name: &reg.desc.name, values, bars: Vec::new(), constants, memo: OnceCell::new() };
    let outputs = reg.compute_primal(&frame)?;
    let mut regions = Vec::with_capacity(reg.written.len());
    for (out, &a) in outputs.iter().zip(&reg.written) {
        let region = reg.region_of(a, constants)?;
        let target = args[a].get().value_any().entity_shape();
        match region {
            Some((r, _)) => {
                r.check_within(target)?;
                crate::entity::check_shape(r.shape(), out.entity_shape())?;
            }
            None => {
                if let ElementShape::Static(s) = reg.desc.args[a].element_shape {
                    crate::entity::check_shape(s, out.entity_shape())?;
                }
            }
        }
        regions.push(region);
    }
    Ok(Prepared { outputs, regions })
}

/// Whether the statement must be taped.
pub(crate) fn is_active_statement(reg: &Registered, args: &[ArgRef<'_>], prepared: &Prepared) -> bool {
    if reg.desc.element_passive {
        return false;
    }
    let read_active = reg.read.iter().any(|&a| !args[a].get().id().is_passive());
    let region_active = reg
        .written
        .iter()
        .zip(&prepared.regions)
        .any(|(&a, r)| r.is_some() && !args[a].get().id().is_passive());
    read_active || region_active
}

fn write_value(
    store: &dyn ErasedStore,
    arg: &mut dyn AnyActive,
    out: Box<dyn AnyEntity>,
    region: Option<Region>,
) -> Result<()> {
    match region {
        Some(r) => store.set_region_in(arg.value_any_mut(), r, &*out),
        None => arg.set_value_any(out),
    }
}

/// Applies the outputs without taping. Written arguments become passive.
pub(crate) fn apply_passive(
    reg: &Registered,
    stores: &mut [Box<dyn ErasedStore>],
    args: &mut [ArgRef<'_>],
    prepared: Prepared,
) -> Result<()> {
    for ((&a, out), region) in reg.written.iter().zip(prepared.outputs).zip(prepared.regions) {
        let store = &mut *stores[reg.kind_ids[a]];
        let ArgRef::Lhs(arg) = &mut args[a] else { unreachable!("checked by check_call") };
        let id = arg.id();
        if !id.is_passive() && store.is_live(id) {
            store.release(id)?;
        }
        arg.set_id(Identifier::PASSIVE);
        write_value(store, &mut **arg, out, region.map(|(r, _)| r))?;
    }
    Ok(())
}

/// Writes the payload of an active statement and applies the outputs.
pub(crate) fn record_active(
    reg: &Registered,
    stores: &mut [Box<dyn ErasedStore>],
    args: &mut [ArgRef<'_>],
    constants: &[Constant],
    prepared: Prepared,
    out: &mut PayloadWriter,
) -> Result<()> {
    for &a in &reg.read {
        let arg = args[a].get();
        out.put_u32(arg.id().get());
        if arg.id().is_passive() {
            stores[reg.kind_ids[a]].encode_dyn(arg.value_any(), out)?;
        }
    }
    for c in constants {
        match *c {
            Constant::Index(i) => out.put_u32(i),
            Constant::Real(r) => out.put_f64(r),
        }
    }

    let mut ids = Vec::with_capacity(reg.written.len());
    for ((&a, new), region) in reg.written.iter().zip(&prepared.outputs).zip(&prepared.regions) {
        let store = &mut *stores[reg.kind_ids[a]];
        let arg = args[a].get();
        let old_id = arg.id();
        let was_passive = old_id.is_passive();
        let id = if was_passive {
            store.acquire()?
        } else if store.is_live(old_id) {
            old_id
        } else {
            return Err(Error::NotLive(old_id.get()));
        };
        let new_shape = match region {
            Some(_) => arg.value_any().entity_shape(),
            None => new.entity_shape(),
        };
        let flag_current = was_passive && (reg.desc.args[a].role == Role::InOut || region.is_some());
        let dynamic = is_dynamic(store);
        let old = store.primal_dyn(id)?;
        let old_shape = old.entity_shape();
        let mode = match region {
            Some((_, true)) if !was_passive => OldStore::Partial,
            _ if dynamic && old_shape.is_empty() => OldStore::Empty,
            _ if old_shape == new_shape && !(flag_current && dynamic) => OldStore::Full,
            _ => OldStore::Shaped,
        };
        let tags = (mode as u32) << MODE_SHIFT | if flag_current { FLAG_CURRENT } else { 0 };
        out.put_u32(id.get() | tags);
        match mode {
            OldStore::Full => out.put_f64s(old.entity_data()),
            OldStore::Empty => {}
            OldStore::Shaped => store.encode_dyn(old, out)?,
            OldStore::Partial => {
                let (r, _) = region.expect("partial store implies region");
                let part = store.region_dyn(old, r)?;
                out.put_u32(r.len() as u32);
                out.put_f64s(part.entity_data());
            }
        }
        if flag_current {
            match region {
                Some((r, _)) => {
                    let mut full = store.clone_dyn(arg.value_any())?;
                    store.set_region_in(&mut *full, *r, &**new)?;
                    store.encode_dyn(&*full, out)?;
                }
                None => store.encode_dyn(&**new, out)?,
            }
        }
        ids.push(id);
    }

    for (((&a, new), region), id) in reg.written.iter().zip(prepared.outputs).zip(prepared.regions).zip(ids) {
        let store = &mut *stores[reg.kind_ids[a]];
        let ArgRef::Lhs(arg) = &mut args[a] else { unreachable!("checked by check_call") };
        let region = region.map(|(r, _)| r);
        let was_passive = arg.id().is_passive();
        match region {
            Some(r) if !was_passive => store.set_primal_region_dyn(id, r, &*new)?,
            _ => {}
        }
        write_value(store, &mut **arg, new, region)?;
        if region.is_none() || was_passive {
            store.set_primal_dyn(id, arg.value_any())?;
        }
        arg.set_id(id);
    }
    Ok(())
}
