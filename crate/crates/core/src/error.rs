use thiserror::Error;

use crate::entity::{Region, Shape};

/// Direction in which a statement payload was misread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadFaultKind {
    /// A reader asked for more bytes than the statement stored.
    Overrun { requested: usize, remaining: usize },
    /// A reader finished with bytes left over.
    Underrun { unread: usize },
}

impl std::fmt::Display for PayloadFaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PayloadFaultKind::Overrun { requested, remaining } => {
                write!(f, "overrun: requested {requested} bytes, {remaining} remaining")
            }
            PayloadFaultKind::Underrun { unread } => write!(f, "underrun: {unread} bytes unread"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kind already registered: {0}")]
    KindAlreadyRegistered(&'static str),

    #[error("kind not registered: {0}")]
    KindNotRegistered(&'static str),

    #[error("unknown kind id {0}")]
    UnknownKind(usize),

    #[error("kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("registration rejected: recording has already started")]
    RecordingStarted,

    #[error("tape is passive")]
    TapePassive,

    #[error("identifier {id} out of range for kind {kind} (max issued {max_issued})")]
    OutOfRange { kind: &'static str, id: u32, max_issued: u32 },

    #[error("identifier 0 is reserved for passive values")]
    PassiveIdentifier,

    #[error("identifier {0} is not live")]
    NotLive(u32),

    #[error("identifier space exhausted")]
    IdentifiersExhausted,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("region {region} outside entity of shape {shape}")]
    RegionOutOfBounds { region: Region, shape: Shape },

    #[error("index {index} out of bounds for {what} of length {len}")]
    IndexOutOfBounds { what: &'static str, index: usize, len: usize },

    #[error("invalid shape {shape} for {kind}")]
    InvalidShape { kind: &'static str, shape: Shape },

    #[error("output does not depend on inputs")]
    PassiveOutput,

    #[error("unknown statement handle {0}")]
    UnknownHandle(u32),

    #[error("descriptor `{descriptor}` argument `{arg}`: {reason}")]
    Validation { descriptor: String, arg: String, reason: String },

    #[error("statement `{op}`: {message}")]
    Statement { op: String, message: String },

    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    DimensionMismatch { op: &'static str, lhs: Shape, rhs: Shape },

    #[error("matrix is numerically singular (pivot {pivot} of magnitude {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },

    #[error("payload read {0}")]
    Payload(PayloadFaultKind),

    #[error("payload fault in statement {statement} (`{name}`): {kind}")]
    PayloadFault { statement: usize, name: String, kind: PayloadFaultKind },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
