//! Error types for composition and execution.
//!
//! [`CoreError`] covers structural operations on a tapestry (registering
//! modules, creating beads, defining weaves, resolving symbols). [`RtError`]
//! is what guest entries and host callers see from the live runtime; it
//! wraps `CoreError` and adds scheduling and fabric failures. Each variant
//! has a stable kebab-case code used by the monitor protocol and by CSV
//! reports.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CoreError {
    #[error("module name `{0}` is already registered")]
    DuplicateModule(String),
    #[error("module `{0}` declares duplicate symbol `{1}`")]
    DuplicateSymbol(String, String),
    #[error("module `{0}` declares duplicate entry `{1}`")]
    DuplicateEntry(String, String),
    #[error("initial value for `{module}.{symbol}` does not conform to its declared kind")]
    BadInitial { module: String, symbol: String },
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("unknown symbol `{module}.{symbol}`")]
    UnknownSymbol { module: String, symbol: String },
    #[error("unknown entry `{module}.{entry}`")]
    UnknownEntry { module: String, entry: String },
    #[error("unknown bead id {0}")]
    UnknownBead(u32),
    #[error("unknown weave id {0}")]
    UnknownWeave(u32),
    #[error("unknown string id {0}")]
    UnknownString(u32),
    #[error("unknown bead `{0}`")]
    UnknownBeadName(String),
    #[error("unknown weave `{0}`")]
    UnknownWeaveName(String),
    #[error("unknown string `{0}`")]
    UnknownStringName(String),
    #[error("bead name `{0}` is already taken")]
    DuplicateBeadName(String),
    #[error("weave name `{0}` is already taken")]
    DuplicateWeaveName(String),
    #[error("string name `{0}` is already taken")]
    DuplicateStringName(String),
    #[error("weave would contain two beads of module `{0}`, making its symbols multi-valued")]
    ModuleCollision(String),
    #[error("weave must contain at least one bead")]
    EmptyWeave,
    #[error("module `{module}` has no bead in weave `{weave}`")]
    ModuleNotInWeave { module: String, weave: String },
    #[error("tuple space member `{module}.{symbol}` already belongs to another group")]
    TupleOverlap { module: String, symbol: String },
    #[error("tuple space for module `{0}` declared after a bead in its group was created")]
    TupleAfterBead(String),
    #[error("tuple space group for module `{module}` names bead {bead} of a different module")]
    TupleGroupModuleMismatch { module: String, bead: u32 },
    #[error("tuple space group must not be empty")]
    EmptyTupleGroup,
    #[error("value written to `{module}.{symbol}` does not conform to its declared kind")]
    KindMismatch { module: String, symbol: String },
    #[error("unknown cell id {0}")]
    UnknownCell(u32),
    #[error("string {0} was removed from the tapestry")]
    StringRemoved(u32),
}

/// Errors surfaced to guest entries and to `run()`.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RtError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("scheduler is already running")]
    SchedulerActive,
    #[error("runtime is shutting down")]
    Shutdown,
    #[error("entry `{module}.{entry}` would re-enter a busy non-reentrant bead")]
    BeadBusy { module: String, entry: String },
    #[error("message fabric is not initialized")]
    FabricUninitialized,
    #[error("message fabric is already initialized")]
    FabricReinit,
    #[error("string is not bound to a fabric rank")]
    NotAnEndpoint,
    #[error("invalid destination rank {0}")]
    InvalidRank(u32),
    #[error("endpoint rank {rank} is in {mode} mode; {op} is not available")]
    ModeMismatch { rank: u32, mode: &'static str, op: &'static str },
    #[error("barrier broken: endpoint rank {0} finished without arriving")]
    BrokenBarrier(u32),
    #[error("scheduler is already paused")]
    AlreadyPaused,
    #[error("scheduler is not paused")]
    NotPaused,
    #[error("guest failure: {0}")]
    Guest(String),
}

impl CoreError {
    /// Stable machine-readable code, used on monitor `ERR` lines.
    pub fn code(&self) -> &'static str {
        match self {
            CoreError::DuplicateModule(_) => "duplicate-module",
            CoreError::DuplicateSymbol(..) => "duplicate-symbol",
            CoreError::DuplicateEntry(..) => "duplicate-entry",
            CoreError::BadInitial { .. } => "bad-initial",
            CoreError::UnknownModule(_) => "unknown-module",
            CoreError::UnknownSymbol { .. } => "unknown-symbol",
            CoreError::UnknownEntry { .. } => "unknown-entry",
            CoreError::UnknownBead(_) => "unknown-bead",
            CoreError::UnknownWeave(_) => "unknown-weave",
            CoreError::UnknownString(_) => "unknown-string",
            CoreError::UnknownBeadName(_) => "unknown-bead",
            CoreError::UnknownWeaveName(_) => "unknown-weave",
            CoreError::UnknownStringName(_) => "unknown-string",
            CoreError::DuplicateBeadName(_) => "duplicate-bead-name",
            CoreError::DuplicateWeaveName(_) => "duplicate-weave-name",
            CoreError::DuplicateStringName(_) => "duplicate-string-name",
            CoreError::ModuleCollision(_) => "multi-valued-symbol",
            CoreError::EmptyWeave => "empty-weave",
            CoreError::ModuleNotInWeave { .. } => "module-not-in-weave",
            CoreError::TupleOverlap { .. } => "tuple-overlap",
            CoreError::TupleAfterBead(_) => "tuple-after-bead",
            CoreError::TupleGroupModuleMismatch { .. } => "tuple-group-module-mismatch",
            CoreError::EmptyTupleGroup => "empty-tuple-group",
            CoreError::KindMismatch { .. } => "kind-mismatch",
            CoreError::UnknownCell(_) => "unknown-cell",
            CoreError::StringRemoved(_) => "string-removed",
        }
    }
}

impl RtError {
    pub fn code(&self) -> &'static str {
        match self {
            RtError::Core(e) => e.code(),
            RtError::SchedulerActive => "scheduler-active",
            RtError::Shutdown => "shutdown",
            RtError::BeadBusy { .. } => "bead-busy",
            RtError::FabricUninitialized => "fabric-uninitialized",
            RtError::FabricReinit => "fabric-reinit",
            RtError::NotAnEndpoint => "not-an-endpoint",
            RtError::InvalidRank(_) => "invalid-rank",
            RtError::ModeMismatch { .. } => "mode-mismatch",
            RtError::BrokenBarrier(_) => "broken-barrier",
            RtError::AlreadyPaused => "already-paused",
            RtError::NotPaused => "not-paused",
            RtError::Guest(_) => "guest-failure",
        }
    }
}
