//! The primal value tape.

use std::any::TypeId;
use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::active::{Active, Identifier};
use crate::entity::{check_shape, Entity};
use crate::error::{Error, Result};
use crate::payload::{PayloadCursor, PayloadWriter};
use crate::statement::{self, ArgRef, Constant, RawFn, Registered, RegistryEntry, StatementDescriptor, StatementHandle};
use crate::store::{ErasedStore, KindStore};

#[derive(Clone)]
enum Entry {
    Descriptor(Arc<Registered>),
    Raw { name: Arc<str>, reverse: RawFn, forward: Option<RawFn> },
}

impl Entry {
    fn name(&self) -> &str {
        match self {
            Entry::Descriptor(r) => r.desc.name(),
            Entry::Raw { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KindStatistics {
    pub kind_id: usize,
    pub primal_elems: usize,
    pub adjoint_elems: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TapeStatistics {
    pub statement_count: usize,
    pub bytes_handles: usize,
    pub bytes_sizes: usize,
    pub bytes_payload: usize,
    pub kinds: Vec<KindStatistics>,
}

/// Where the primal vectors currently stand relative to the recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalState {
    /// As left by the last recorded statement.
    AtEnd,
    /// Restored to the state before the first statement by a reverse sweep.
    AtStart,
}

/// Recording and evaluation engine.
///
/// Statements go to three streams: handles, payload sizes and raw payload
/// bytes. Each registered kind owns a [`KindStore`].
///
/// A reverse sweep restores every primal overwritten during recording. A
/// later `evaluate` or recording first replays the statements forward, so a
/// tape can be evaluated any number of times.
pub struct Tape {
    stores: Vec<Box<dyn ErasedStore>>,
    kind_by_type: HashMap<TypeId, usize>,
    registry: Vec<Entry>,
    handles: Vec<u32>,
    sizes: Vec<u32>,
    bytes: Vec<u8>,
    active: bool,
    primal_state: PrimalState,
    scratch: PayloadWriter,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape")
            .field("kinds", &self.stores.iter().map(|s| s.kind_name()).collect::<Vec<_>>())
            .field("statements", &self.handles.len())
            .field("bytes", &self.bytes.len())
            .field("active", &self.active)
            .field("primal_state", &self.primal_state)
            .finish()
    }
}

fn fault(err: Error, statement: usize, name: &str) -> Error {
    match err {
        Error::Payload(kind) => Error::PayloadFault { statement, name: name.to_string(), kind },
        other => other,
    }
}

impl Tape {
    /// A passive tape with no kinds.
    pub fn new() -> Self {
        Tape {
            stores: Vec::new(),
            kind_by_type: HashMap::new(),
            registry: Vec::new(),
            handles: Vec::new(),
            sizes: Vec::new(),
            bytes: Vec::new(),
            active: false,
            primal_state: PrimalState::AtEnd,
            scratch: PayloadWriter::new(),
        }
    }

    fn recording_started(&self) -> bool {
        !self.handles.is_empty()
    }

    pub fn register_value_kind<T: Entity>(&mut self) -> Result<usize> {
        if self.kind_by_type.contains_key(&TypeId::of::<T>()) {
            return Err(Error::KindAlreadyRegistered(T::KIND_NAME));
        }
        if self.recording_started() {
            return Err(Error::RecordingStarted);
        }
        let kind_id = self.stores.len();
        self.stores.push(Box::new(KindStore::<T>::new(kind_id)));
        self.kind_by_type.insert(TypeId::of::<T>(), kind_id);
        Ok(kind_id)
    }

    pub fn kind_id<T: Entity>(&self) -> Result<usize> {
        self.kind_by_type.get(&TypeId::of::<T>()).copied().ok_or(Error::KindNotRegistered(T::KIND_NAME))
    }

    pub fn kind_count(&self) -> usize {
        self.stores.len()
    }

    pub fn store<T: Entity>(&self) -> Result<&KindStore<T>> {
        let k = self.kind_id::<T>()?;
        Ok(self.stores[k].as_any().downcast_ref().expect("kind map is consistent"))
    }

    /// Direct store access. Writing primals behind the tape's back breaks
    /// restoration; meant for diagnostics and tests.
    pub fn store_mut<T: Entity>(&mut self) -> Result<&mut KindStore<T>> {
        let k = self.kind_id::<T>()?;
        Ok(self.stores[k].as_any_mut().downcast_mut().expect("kind map is consistent"))
    }

    pub fn set_active(&mut self) {
        self.active = true;
    }

    pub fn set_passive(&mut self) {
        self.active = false;
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn primal_state(&self) -> PrimalState {
        self.primal_state
    }

    /// Gives `v` a fresh identifier and stores its value. Nothing is taped.
    pub fn register_input<T: Entity>(&mut self, v: &mut Active<T>) -> Result<()> {
        if !self.active {
            return Err(Error::TapePassive);
        }
        self.ensure_at_end()?;
        let started = self.recording_started();
        let store = self.store_mut::<T>()?;
        if v.is_active() && store.index_manager().is_live(v.id) {
            store.release(v.id)?;
        }
        // Once statements exist, a reused slot may still be restored and
        // replayed; inputs take never-used identifiers instead.
        let id = if started { store.acquire_unused()? } else { store.acquire()? };
        store.set_primal(id, v.value.clone())?;
        v.id = id;
        Ok(())
    }

    pub fn new_input<T: Entity>(&mut self, value: T) -> Result<Active<T>> {
        let mut v = Active::passive(value);
        self.register_input(&mut v)?;
        Ok(v)
    }

    /// Pins the identifier of `v` until [`Tape::reset`].
    pub fn register_output<T: Entity>(&mut self, v: &Active<T>) -> Result<()> {
        if !v.is_active() {
            return Err(Error::PassiveOutput);
        }
        self.store_mut::<T>()?.pin(v.id)
    }

    /// Returns the identifier of `v` to its kind and makes `v` passive.
    pub fn release<T: Entity>(&mut self, v: &mut Active<T>) -> Result<()> {
        if v.is_active() {
            self.store_mut::<T>()?.release(v.id)?;
            v.id = Identifier::PASSIVE;
        }
        Ok(())
    }

    /// Overwrites `v` with a passive value.
    pub fn assign_passive<T: Entity>(&mut self, v: &mut Active<T>, value: T) -> Result<()> {
        self.release(v)?;
        v.value = value;
        Ok(())
    }

    pub fn set_gradient<T: Entity>(&mut self, v: &Active<T>, gradient: T) -> Result<()> {
        if !v.is_active() {
            return Err(Error::PassiveIdentifier);
        }
        if !gradient.is_unsized() {
            check_shape(v.value.shape(), gradient.shape())?;
        }
        self.store_mut::<T>()?.set_adjoint(v.id, gradient)
    }

    /// Adjoint of `v`. Passive values give the zero element, untouched
    /// active values give zeros of their shape.
    pub fn get_gradient<T: Entity>(&self, v: &Active<T>) -> Result<T> {
        if !v.is_active() {
            return Ok(T::zero_element());
        }
        let g = self.store::<T>()?.adjoint(v.id)?;
        if g.is_unsized() {
            T::zeros(v.value.shape())
        } else {
            Ok(g)
        }
    }

    pub fn register_descriptor(&mut self, desc: StatementDescriptor) -> Result<StatementHandle> {
        if self.recording_started() {
            return Err(Error::RecordingStarted);
        }
        desc.validate()?;
        let kind_ids = desc
            .args()
            .iter()
            .map(|a| self.kind_by_type.get(&a.kind).copied().ok_or(Error::KindNotRegistered(a.kind_name)))
            .collect::<Result<Vec<_>>>()?;
        let handle = self.next_handle()?;
        self.registry.push(Entry::Descriptor(Arc::new(Registered::new(desc, kind_ids))));
        Ok(handle)
    }

    /// Registers a hand-written statement kind working directly on payload
    /// bytes. `forward`, if given, runs during forward replay.
    pub fn register_raw(&mut self, name: &str, reverse: RawFn, forward: Option<RawFn>) -> Result<StatementHandle> {
        if self.recording_started() {
            return Err(Error::RecordingStarted);
        }
        let handle = self.next_handle()?;
        self.registry.push(Entry::Raw { name: name.into(), reverse, forward });
        Ok(handle)
    }

    fn next_handle(&self) -> Result<StatementHandle> {
        u32::try_from(self.registry.len()).map(StatementHandle).map_err(|_| Error::IdentifiersExhausted)
    }

    fn entry(&self, handle: StatementHandle) -> Result<&Entry> {
        self.registry.get(handle.0 as usize).ok_or(Error::UnknownHandle(handle.0))
    }

    pub fn descriptor_name(&self, handle: StatementHandle) -> Result<&str> {
        Ok(self.entry(handle)?.name())
    }

    fn begin_statement(&mut self) -> Result<()> {
        self.ensure_at_end()?;
        if !self.recording_started() {
            for s in &mut self.stores {
                s.take_snapshot();
            }
        }
        Ok(())
    }

    fn push_statement(&mut self, handle: StatementHandle, len: usize) -> Result<()> {
        let op = self.entry(handle)?.name().to_string();
        let size = u32::try_from(len).map_err(|_| Error::Statement {
            op,
            message: format!("payload of {len} bytes exceeds the size stream range"),
        })?;
        self.handles.push(handle.0);
        self.sizes.push(size);
        Ok(())
    }

    /// Appends a raw statement. No-op while passive.
    pub fn record_statement(&mut self, handle: StatementHandle, payload: &[u8]) -> Result<()> {
        self.entry(handle)?;
        if !self.active {
            return Ok(());
        }
        self.begin_statement()?;
        self.bytes.extend_from_slice(payload);
        self.push_statement(handle, payload.len())
    }

    /// Executes a descriptor statement and tapes it when it is active.
    ///
    /// Written arguments keep a nonzero identifier and get a fresh one when
    /// passive. If the tape is passive or nothing read is active, the
    /// outputs are computed, written arguments become passive and nothing is
    /// taped.
    pub fn record(&mut self, handle: StatementHandle, args: &mut [ArgRef<'_>], constants: &[Constant]) -> Result<()> {
        let Entry::Descriptor(reg) = self.entry(handle)?.clone() else {
            return Err(Error::Statement {
                op: self.entry(handle)?.name().to_string(),
                message: "raw statements are recorded with record_statement".into(),
            });
        };
        let prepared = statement::prepare(&reg, args, constants)?;
        if !self.active || !statement::is_active_statement(&reg, args, &prepared) {
            return statement::apply_passive(&reg, &mut self.stores, args, prepared);
        }
        self.begin_statement()?;
        let mut out = std::mem::take(&mut self.scratch);
        out.clear();
        let res = statement::record_active(&reg, &mut self.stores, args, constants, prepared, &mut out);
        if res.is_ok() {
            self.bytes.extend_from_slice(out.as_bytes());
        }
        let len = out.len();
        self.scratch = out;
        res?;
        self.push_statement(handle, len)
    }

    fn ensure_at_end(&mut self) -> Result<()> {
        if self.primal_state == PrimalState::AtStart {
            self.replay_forward()?;
        }
        Ok(())
    }

    fn replay_forward(&mut self) -> Result<()> {
        let bytes = std::mem::take(&mut self.bytes);
        let res = self.sweep_forward(&bytes);
        self.bytes = bytes;
        res?;
        self.primal_state = PrimalState::AtEnd;
        Ok(())
    }

    fn sweep_forward(&mut self, bytes: &[u8]) -> Result<()> {
        let mut start = 0usize;
        for i in 0..self.handles.len() {
            let end = start + self.sizes[i] as usize;
            let slice = &bytes[start..end];
            let entry = self.registry[self.handles[i] as usize].clone();
            let res = match &entry {
                Entry::Descriptor(reg) => statement::forward(reg, &mut self.stores, slice),
                Entry::Raw { forward: Some(f), .. } => {
                    let mut cursor = PayloadCursor::new(slice);
                    f(i, &mut cursor).and_then(|_| cursor.finish())
                }
                Entry::Raw { forward: None, .. } => Ok(()),
            };
            res.map_err(|e| fault(e, i, entry.name()))?;
            start = end;
        }
        Ok(())
    }

    /// Recomputes the primals of all statements if a reverse sweep left them
    /// at the recording start.
    pub fn evaluate_primal(&mut self) -> Result<()> {
        self.ensure_at_end()
    }

    /// Reverse sweep over all statements.
    pub fn evaluate(&mut self) -> Result<()> {
        self.ensure_at_end()?;
        let bytes = std::mem::take(&mut self.bytes);
        let res = self.sweep_reverse(&bytes);
        self.bytes = bytes;
        res?;
        self.primal_state = PrimalState::AtStart;
        Ok(())
    }

    fn sweep_reverse(&mut self, bytes: &[u8]) -> Result<()> {
        let mut end = bytes.len();
        for i in (0..self.handles.len()).rev() {
            let start = end - self.sizes[i] as usize;
            let slice = &bytes[start..end];
            let entry = self.registry[self.handles[i] as usize].clone();
            let res = match &entry {
                Entry::Descriptor(reg) => statement::reverse(reg, &mut self.stores, slice),
                Entry::Raw { reverse, .. } => {
                    let mut cursor = PayloadCursor::new(slice);
                    reverse(i, &mut cursor).and_then(|_| cursor.finish())
                }
            };
            res.map_err(|e| fault(e, i, entry.name()))?;
            end = start;
        }
        Ok(())
    }

    /// Zeroes all adjoints, e.g. before re-seeding.
    pub fn clear_adjoints(&mut self) {
        for s in &mut self.stores {
            s.clear_adjoints();
        }
    }

    /// Drops all statements, adjoints, pins, identifiers and primals. Kinds
    /// and descriptors stay registered. Active values from before the reset
    /// must be re-registered.
    pub fn reset(&mut self) {
        self.handles.clear();
        self.sizes.clear();
        self.bytes.clear();
        for s in &mut self.stores {
            s.reset();
        }
        self.primal_state = PrimalState::AtEnd;
    }

    pub fn statement_count(&self) -> usize {
        self.handles.len()
    }

    pub fn handle_stream(&self) -> &[u32] {
        &self.handles
    }

    pub fn size_stream(&self) -> &[u32] {
        &self.sizes
    }

    pub fn byte_stream(&self) -> &[u8] {
        &self.bytes
    }

    /// Payload slice of statement `i`.
    pub fn statement_payload(&self, i: usize) -> Option<&[u8]> {
        let size = *self.sizes.get(i)? as usize;
        let start: usize = self.sizes[..i].iter().map(|&s| s as usize).sum();
        Some(&self.bytes[start..start + size])
    }

    pub fn statistics(&self) -> TapeStatistics {
        let n = self.handles.len();
        TapeStatistics {
            statement_count: n,
            bytes_handles: 4 * n,
            bytes_sizes: 4 * n,
            bytes_payload: self.bytes.len(),
            kinds: self
                .stores
                .iter()
                .enumerate()
                .map(|(kind_id, s)| {
                    let (primal_elems, adjoint_elems) = s.elems();
                    KindStatistics { kind_id, primal_elems, adjoint_elems }
                })
                .collect(),
        }
    }

    pub fn registry(&self) -> Vec<RegistryEntry> {
        self.registry
            .iter()
            .enumerate()
            .map(|(h, e)| match e {
                Entry::Descriptor(r) => r.registry_entry(h as u32),
                Entry::Raw { name, .. } => RegistryEntry { handle: h as u32, name: name.to_string(), args: Vec::new() },
            })
            .collect()
    }

    pub fn registry_json(&self) -> serde_json::Value {
        serde_json::to_value(self.registry()).expect("registry serializes")
    }

    /// `(kind_id, id)` pairs live at the first statement whose primal now
    /// differs bit-wise from its value at that point. Meaningful right after
    /// [`Tape::evaluate`].
    pub fn primal_restoration_mismatches(&self) -> Vec<(usize, u32)> {
        self.stores
            .iter()
            .enumerate()
            .flat_map(|(k, s)| s.restoration_mismatches().into_iter().map(move |id| (k, id)))
            .collect()
    }
}
