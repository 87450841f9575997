//! A user-level compositional runtime: many program instances share one
//! process, each running against its own namespace woven from module
//! instances, with execution flows that switch namespaces in constant time.
//!
//! The vocabulary, bottom up:
//!
//! * **module** — code plus a schema of named globals.
//! * **bead** — one instantiation of a module: a private set of cells
//!   backing its globals, optionally merged with sibling beads through
//!   tuple spaces.
//! * **weave** — a namespace assembled from beads, at most one per module.
//!   Realized as an indirection table, so symbol resolution is one lookup
//!   regardless of how many weaves exist.
//! * **string** — an execution flow bound to one weave. All strings live in
//!   a single OS process; the scheduler hands a baton between them at
//!   switch boundaries.
//! * **tapestry** — the whole arrangement: modules, beads, weaves, strings.
//!
//! [`Runtime`] owns a tapestry and drives it; guest code sees the
//! runtime through [`Ctx`]. Strings exchange messages over a rank-addressed
//! fabric with buffered sends, filtered receives, callbacks, and barriers,
//! all recorded in a logically-clocked event log.

pub mod demos;
mod error;
mod events;
mod fabric;
mod module;
pub mod monitor;
mod namespace;
pub mod plan;
mod report;
mod rng;
mod runtime;
mod value;

pub use error::{CoreError, RtError};
pub use events::{EventCounts, EventKind, EventRecord};
pub use fabric::Message;
pub use module::{EntryBody, ModuleDef, ModuleLibrary, SymbolDef};
pub use namespace::{BeadId, CellId, ModuleId, TupleGroup, WeaveId};
pub use report::{RunReport, StringReport};
pub use rng::{fnv1a_f64, SplitMix64};
pub use monitor::Monitor;
pub use runtime::{
    BlockReason, CmdOutcome, Ctx, RewireCommand, Runtime, SchedulerPolicy, StringId,
    StringStatus, TapestryView,
};
pub use value::{Value, ValueKind};
