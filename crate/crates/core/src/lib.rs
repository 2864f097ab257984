//! Entity-level reverse-mode algorithmic differentiation.
//!
//! One identifier is assigned per entity (scalar, vector, matrix) instead of
//! per floating-point element. Statements are recorded on a primal value
//! tape and reversed with per-operation adjoint rules.
//!
//! ```
//! use dslad::Tape;
//! use dslad::linalg::LinAlgTape;
//!
//! let mut tape = LinAlgTape::new().unwrap();
//! tape.set_active();
//! let a = tape.new_input(4.0).unwrap();
//! let w = tape.mul(&a, &a).unwrap();
//! tape.register_output(&w).unwrap();
//! tape.set_passive();
//!
//! tape.set_gradient(&w, 1.0).unwrap();
//! tape.evaluate().unwrap();
//! assert_eq!(tape.get_gradient(&a).unwrap(), 8.0);
//! # let _: &Tape = &tape;
//! ```

pub mod active;
pub mod entity;
pub mod error;
pub mod index;
pub mod linalg;
pub mod payload;
pub mod statement;
pub mod store;
pub mod tape;

pub use active::{Active, AnyActive, Identifier};
pub use entity::{ElementShape, Entity, Region, Shape};
pub use error::{Error, PayloadFaultKind, Result};
pub use index::IndexManager;
pub use payload::{PayloadCursor, PayloadWriter};
pub use statement::{ArgRef, Constant, Contribution, Frame, Role, StatementDescriptor, StatementHandle};
pub use store::KindStore;
pub use tape::{KindStatistics, PrimalState, Tape, TapeStatistics};
