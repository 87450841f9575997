//! The live runtime: strings, scheduling, and the host-facing handle.
//!
//! Execution model: every string is an OS thread, but exactly one string
//! thread runs at a time. A "baton" (run grant) is handed directly from the
//! suspending string to its successor through a per-string gate, so a
//! context switch is one condvar signal plus scheduler bookkeeping — no
//! kernel involvement beyond waking the parked thread, and no dependence on
//! how many symbols, beads, or weaves exist. The `run()` driver only takes
//! the baton when no string is eligible (startup, pause, deadlock, or
//! completion).
//!
//! All mutable state sits behind one mutex in [`Shared`]. Strings touch it
//! only inside guest API calls, which are also the boundaries where
//! simulated preemption and rewiring commands take effect; between two
//! boundaries a string runs uninterrupted native code.

mod ctx;
mod sched;

pub use ctx::Ctx;

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{CoreError, RtError};
use crate::fabric::{Envelope, Fabric};
use crate::events::EventLog;
use crate::module::{ModuleDef, ModuleLibrary};
use crate::namespace::{BeadId, ModuleId, Namespaces, TupleGroup, TupleSpaceId, WeaveId};
use crate::report::{RunReport, StringReport};
use crate::value::Value;

use sched::Gate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StringId(pub u32);

impl std::fmt::Display for StringId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl StringId {
    fn ix(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerPolicy {
    /// Strings run until they yield, block, or finish.
    Cooperative,
    /// Additionally, a forced switch is injected every `quantum` guest API
    /// calls. Native code between API calls is never interrupted.
    Preemptive { quantum: u32 },
}

impl SchedulerPolicy {
    fn quantum(&self) -> Option<u32> {
        match self {
            SchedulerPolicy::Cooperative => None,
            SchedulerPolicy::Preemptive { quantum } => Some(*quantum),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockReason {
    /// Waiting for a message; the filter decides which tags can wake it.
    Recv { filter: Option<i64> },
    /// Waiting at the fabric barrier opened at this epoch.
    Barrier { epoch: u64 },
}

impl BlockReason {
    pub fn describe(&self) -> String {
        match self {
            BlockReason::Recv { filter: None } => "recv".to_string(),
            BlockReason::Recv { filter: Some(t) } => format!("recv(tag={t})"),
            BlockReason::Barrier { .. } => "barrier".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StringStatus {
    Created,
    Runnable,
    Running,
    Blocked(BlockReason),
    Finished,
    Failed,
}

impl StringStatus {
    pub fn label(&self) -> String {
        match self {
            StringStatus::Created => "created".into(),
            StringStatus::Runnable => "runnable".into(),
            StringStatus::Running => "running".into(),
            StringStatus::Blocked(r) => format!("blocked({})", r.describe()),
            StringStatus::Finished => "finished".into(),
            StringStatus::Failed => "failed".into(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, StringStatus::Finished | StringStatus::Failed)
    }
}

/// An active entry invocation: which bead the code is executing in.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    pub bead: BeadId,
    pub module: ModuleId,
}

pub(crate) struct StringSlot {
    pub name: String,
    pub weave: WeaveId,
    pub entry: (ModuleId, String),
    pub args: Arc<Vec<Value>>,
    pub status: StringStatus,
    pub failure: Option<RtError>,
    pub frames: Vec<Frame>,
    pub gate: Arc<Gate>,
    pub thread: Option<std::thread::JoinHandle<()>>,
    pub started: bool,
    pub removed: bool,
    pub pending_remove: bool,
    pub in_handler: bool,
    pub current_msg: Option<crate::fabric::Message>,
    pub activations: VecDeque<Envelope>,
    pub switches: u64,
    pub guest_calls: u64,
    pub calls_since_switch: u32,
    pub wall: Duration,
    pub resumed_at: Option<Instant>,
}

impl StringSlot {
    fn report(&self, id: StringId) -> StringReport {
        StringReport {
            id: id.0,
            name: self.name.clone(),
            status: self.status.label(),
            switches: self.switches,
            guest_calls: self.guest_calls,
            wall_ms: self.wall.as_secs_f64() * 1e3,
        }
    }
}

/// Tapestry-level rewiring, applied atomically between context switches.
#[derive(Debug, Clone, PartialEq)]
pub enum RewireCommand {
    AddBead { name: String, module: String },
    AddWeave { name: String, beads: Vec<String> },
    AddString { name: Option<String>, weave: String, module: String, entry: String, args: Vec<Value> },
    RemoveString { id: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CmdOutcome {
    Unit,
    Module(ModuleId),
    Bead(BeadId),
    Weave(WeaveId),
    String(StringId),
}

pub(crate) enum ControlOp {
    Rewire(RewireCommand),
    InsertModule(String),
    InsertModuleDef(Box<ModuleDef>),
    SpawnString { weave: WeaveId, module: String, entry: String, args: Vec<Value>, name: Option<String> },
    Pause,
    Resume,
}

pub(crate) struct CmdWaiter {
    slot: Mutex<Option<Result<CmdOutcome, RtError>>>,
    cv: Condvar,
}

impl CmdWaiter {
    fn new() -> Arc<Self> {
        Arc::new(CmdWaiter { slot: Mutex::new(None), cv: Condvar::new() })
    }

    fn post(&self, r: Result<CmdOutcome, RtError>) {
        *self.slot.lock().unwrap() = Some(r);
        self.cv.notify_all();
    }

    fn take(&self) -> Result<CmdOutcome, RtError> {
        let mut g = self.slot.lock().unwrap();
        loop {
            if let Some(r) = g.take() {
                return r;
            }
            g = self.cv.wait(g).unwrap();
        }
    }
}

pub(crate) struct PendingCmd {
    pub op: ControlOp,
    pub done: Arc<CmdWaiter>,
}

/// One internally consistent structural snapshot of the tapestry, taken
/// under a single lock acquisition so every row reflects the same
/// generation. This is what monitor queries are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TapestryView {
    pub generation: u64,
    /// (id, name, reentrant)
    pub modules: Vec<(u32, String, bool)>,
    /// (id, name, module name)
    pub beads: Vec<(u32, String, String)>,
    /// (id, name, bead names)
    pub weaves: Vec<(u32, String, Vec<String>)>,
    /// (name, module name, member symbol names, group: bead ids or None for
    /// all-beads)
    pub tuples: Vec<(String, String, Vec<String>, Option<Vec<u32>>)>,
    /// Live strings only, with their weave's name attached.
    pub strings: Vec<(StringReport, String)>,
}

/// Cached equivalence-class partition, keyed by tapestry generation.
pub(crate) struct ClassCache {
    pub generation: u64,
    /// string id -> class index
    pub class_of: Vec<u32>,
    /// bead id -> number of live strings whose weave contains it
    pub bead_users: Vec<u32>,
}

pub(crate) struct RtState {
    pub ns: Namespaces,
    pub strings: Vec<StringSlot>,
    pub string_names: HashMap<String, StringId>,
    pub run_queue: VecDeque<StringId>,
    pub running: Option<StringId>,
    pub scheduler_active: bool,
    pub paused: bool,
    pub shutdown: bool,
    pub policy: SchedulerPolicy,
    pub fabric: Option<Fabric>,
    pub events: EventLog,
    pub virtual_latency: u64,
    pub commands: VecDeque<PendingCmd>,
    pub library: ModuleLibrary,
    pub classes: Option<ClassCache>,
    pub total_switches: u64,
    pub verify_switches: bool,
}

pub(crate) struct Shared {
    pub state: Mutex<RtState>,
    pub driver: Gate,
}

/// Handle to one tapestry: a composition of modules, beads, weaves, and
/// strings hosted in this process. Cheap to clone; all clones address the
/// same tapestry.
#[derive(Clone)]
pub struct Runtime {
    pub(crate) shared: Arc<Shared>,
}

impl Runtime {
    pub fn new() -> Self {
        Runtime::with_library(ModuleLibrary::new())
    }

    /// A runtime that can later pull module definitions from `library`
    /// (monitor `INSERT-MODULE`, tapestry instantiation).
    pub fn with_library(library: ModuleLibrary) -> Self {
        Runtime {
            shared: Arc::new(Shared {
                state: Mutex::new(RtState {
                    ns: Namespaces::new(),
                    strings: Vec::new(),
                    string_names: HashMap::new(),
                    run_queue: VecDeque::new(),
                    running: None,
                    scheduler_active: false,
                    paused: false,
                    shutdown: false,
                    policy: SchedulerPolicy::Cooperative,
                    fabric: None,
                    events: EventLog::new(),
                    virtual_latency: 0,
                    commands: VecDeque::new(),
                    library,
                    classes: None,
                    total_switches: 0,
                    verify_switches: false,
                }),
                driver: Gate::new(),
            }),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, RtState> {
        self.shared.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    // --- composition (host side) ------------------------------------------
    //
    // Structural mutators funnel through `control`: applied inline while the
    // scheduler is idle, or queued and applied at the next switch boundary
    // while it runs. Either way a mutation never lands mid-execution of a
    // string's native code.

    pub fn register_module(&self, def: ModuleDef) -> Result<ModuleId, RtError> {
        match self.control(ControlOp::InsertModuleDef(Box::new(def)))? {
            CmdOutcome::Module(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    /// Register the library definition named `name`.
    pub fn insert_module(&self, name: &str) -> Result<ModuleId, RtError> {
        match self.control(ControlOp::InsertModule(name.to_string()))? {
            CmdOutcome::Module(m) => Ok(m),
            _ => unreachable!(),
        }
    }

    pub fn create_bead(&self, module: ModuleId, name: Option<&str>) -> Result<BeadId, RtError> {
        let module = {
            let st = self.lock();
            if module.0 as usize >= st.ns.module_count() {
                return Err(CoreError::UnknownModule(format!("#{}", module.0)).into());
            }
            st.ns.module_name(module).to_string()
        };
        match self.control(ControlOp::Rewire(RewireCommand::AddBead {
            name: name.map(str::to_string).unwrap_or_default(),
            module,
        }))? {
            CmdOutcome::Bead(b) => Ok(b),
            _ => unreachable!(),
        }
    }

    pub fn define_weave(&self, beads: &[BeadId], name: Option<&str>) -> Result<WeaveId, RtError> {
        let bead_names = {
            let st = self.lock();
            beads
                .iter()
                .map(|&b| st.ns.bead_name(b).map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?
        };
        match self.control(ControlOp::Rewire(RewireCommand::AddWeave {
            name: name.map(str::to_string).unwrap_or_default(),
            beads: bead_names,
        }))? {
            CmdOutcome::Weave(w) => Ok(w),
            _ => unreachable!(),
        }
    }

    pub fn declare_tuple_space(
        &self,
        name: &str,
        module: ModuleId,
        members: &[&str],
        group: TupleGroup,
    ) -> Result<TupleSpaceId, RtError> {
        // Tuple spaces must precede their beads, so they are composition-
        // phase only; no rewire command adds one mid-run.
        let mut st = self.lock();
        if st.scheduler_active {
            return Err(RtError::SchedulerActive);
        }
        let id = st.ns.declare_tuple_space(name, module, members, group)?;
        Ok(id)
    }

    pub fn spawn_string(
        &self,
        weave: WeaveId,
        module: &str,
        entry: &str,
        args: Vec<Value>,
        name: Option<&str>,
    ) -> Result<StringId, RtError> {
        match self.control(ControlOp::SpawnString {
            weave,
            module: module.to_string(),
            entry: entry.to_string(),
            args,
            name: name.map(str::to_string),
        })? {
            CmdOutcome::String(s) => Ok(s),
            _ => unreachable!(),
        }
    }

    /// Spawn the OS thread behind every not-yet-started string now, parked
    /// at its gate. By default threads come to life at their first grant;
    /// this only moves that creation cost to startup (where timing harnesses
    /// want it) — scheduling semantics are identical either way.
    pub fn prestart_strings(&self) -> Result<(), RtError> {
        let to_spawn: Vec<(StringId, Arc<Gate>)> = {
            let mut st = self.lock();
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            st.strings
                .iter_mut()
                .enumerate()
                .filter(|(_, s)| !s.started && !s.removed)
                .map(|(i, s)| {
                    s.started = true;
                    (StringId(i as u32), s.gate.clone())
                })
                .collect()
        };
        for (id, gate) in to_spawn {
            sched::spawn_string_thread(self.shared.clone(), id, gate);
        }
        Ok(())
    }

    pub fn apply_rewire(&self, cmd: RewireCommand) -> Result<CmdOutcome, RtError> {
        self.control(ControlOp::Rewire(cmd))
    }

    pub fn pause(&self) -> Result<(), RtError> {
        self.control(ControlOp::Pause).map(|_| ())
    }

    pub fn resume(&self) -> Result<(), RtError> {
        self.control(ControlOp::Resume).map(|_| ())
    }

    fn control(&self, op: ControlOp) -> Result<CmdOutcome, RtError> {
        let waiter = {
            let mut st = self.lock();
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            if !st.scheduler_active {
                return st.apply_control(op);
            }
            let waiter = CmdWaiter::new();
            st.commands.push_back(PendingCmd { op, done: waiter.clone() });
            // If the baton is parked with the driver, wake it to process the
            // queue; otherwise the current string drains it at its next
            // switch boundary.
            if st.running.is_none() {
                self.shared.driver.grant(sched::Grant::Run);
            }
            waiter
        };
        waiter.take()
    }

    // --- queries -----------------------------------------------------------

    pub fn generation(&self) -> u64 {
        self.lock().ns.generation()
    }

    pub fn resolve(&self, weave: WeaveId, module: &str, symbol: &str) -> Result<crate::namespace::CellId, RtError> {
        Ok(self.lock().ns.resolve_named(weave, module, symbol)?)
    }

    pub fn read_cell(&self, cell: crate::namespace::CellId) -> Result<Value, RtError> {
        Ok(self.lock().ns.read_cell(cell)?)
    }

    pub fn write_cell(&self, cell: crate::namespace::CellId, value: Value) -> Result<(), RtError> {
        Ok(self.lock().ns.write_cell(cell, value)?)
    }

    /// Read `(module, symbol)` through `weave`'s indirection table.
    pub fn read(&self, weave: WeaveId, module: &str, symbol: &str) -> Result<Value, RtError> {
        let st = self.lock();
        let cell = st.ns.resolve_named(weave, module, symbol)?;
        Ok(st.ns.read_cell(cell)?)
    }

    pub fn write(&self, weave: WeaveId, module: &str, symbol: &str, value: Value) -> Result<(), RtError> {
        let mut st = self.lock();
        let cell = st.ns.resolve_named(weave, module, symbol)?;
        Ok(st.ns.write_cell(cell, value)?)
    }

    pub fn snapshot(&self, weave: WeaveId) -> Result<std::collections::BTreeMap<(String, String), Value>, RtError> {
        Ok(self.lock().ns.snapshot(weave)?)
    }

    pub fn weave_id(&self, name: &str) -> Result<WeaveId, RtError> {
        Ok(self.lock().ns.weave_id(name)?)
    }

    pub fn bead_id(&self, name: &str) -> Result<BeadId, RtError> {
        Ok(self.lock().ns.bead_id(name)?)
    }

    pub fn module_id(&self, name: &str) -> Result<ModuleId, RtError> {
        Ok(self.lock().ns.module_id(name)?)
    }

    pub fn string_id(&self, name: &str) -> Result<StringId, RtError> {
        self.lock()
            .string_names
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::UnknownStringName(name.to_string()).into())
    }

    pub fn string_status(&self, id: StringId) -> Result<StringStatus, RtError> {
        let st = self.lock();
        let s = st.strings.get(id.ix()).ok_or(CoreError::UnknownString(id.0))?;
        if s.removed {
            return Err(CoreError::StringRemoved(id.0).into());
        }
        Ok(s.status.clone())
    }

    pub fn string_failure(&self, id: StringId) -> Result<Option<RtError>, RtError> {
        let st = self.lock();
        let s = st.strings.get(id.ix()).ok_or(CoreError::UnknownString(id.0))?;
        Ok(s.failure.clone())
    }

    /// Partition of live (non-removed) string ids into equivalence classes:
    /// two strings are related when their weaves share a bead, transitively.
    pub fn equivalence_classes(&self) -> Vec<Vec<u32>> {
        let mut st = self.lock();
        st.refresh_classes();
        let cache = st.classes.as_ref().unwrap();
        let mut groups: std::collections::BTreeMap<u32, Vec<u32>> = std::collections::BTreeMap::new();
        for (i, s) in st.strings.iter().enumerate() {
            if s.removed {
                continue;
            }
            groups.entry(cache.class_of[i]).or_default().push(i as u32);
        }
        let mut out: Vec<Vec<u32>> = groups.into_values().collect();
        out.sort_by_key(|g| g[0]);
        out
    }

    pub fn event_log_csv(&self) -> String {
        self.lock().events.to_csv()
    }

    pub fn event_counts(&self) -> crate::events::EventCounts {
        self.lock().events.counts()
    }

    pub fn event_records(&self) -> Vec<crate::events::EventRecord> {
        self.lock().events.records().to_vec()
    }

    pub fn total_switches(&self) -> u64 {
        self.lock().total_switches
    }

    /// Snapshot per-string reports without running (used by monitor STATS).
    pub fn string_reports(&self) -> Vec<StringReport> {
        let st = self.lock();
        st.strings
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.removed)
            .map(|(i, s)| s.report(StringId(i as u32)))
            .collect()
    }

    /// One-lock structural snapshot; see [`TapestryView`].
    pub fn tapestry_view(&self) -> TapestryView {
        let st = self.lock();
        let modules = (0..st.ns.module_count())
            .map(|i| {
                let id = ModuleId(i as u32);
                let m = st.ns.module(id);
                (i as u32, m.def.name.clone(), m.def.reentrant)
            })
            .collect();
        let beads = (0..st.ns.bead_count())
            .map(|i| {
                let id = BeadId(i as u32);
                let name = st.ns.bead_name(id).expect("dense ids").to_string();
                let module = st.ns.module_name(st.ns.bead_module(id).expect("dense ids"));
                (i as u32, name, module.to_string())
            })
            .collect();
        let weaves = (0..st.ns.weave_count())
            .map(|i| {
                let id = WeaveId(i as u32);
                let name = st.ns.weave_name(id).expect("dense ids").to_string();
                let beads = st
                    .ns
                    .weave_beads(id)
                    .expect("dense ids")
                    .iter()
                    .map(|&b| st.ns.bead_name(b).expect("woven bead").to_string())
                    .collect();
                (i as u32, name, beads)
            })
            .collect();
        let tuples = st
            .ns
            .tuples
            .iter()
            .map(|t| {
                let symbols = st.ns.module_symbols(t.module);
                let members = t.members.iter().map(|&i| symbols[i as usize].name.clone()).collect();
                let group = match &t.group {
                    TupleGroup::AllBeads => None,
                    TupleGroup::Beads(ids) => Some(ids.iter().copied().collect()),
                };
                (t.name.clone(), st.ns.module_name(t.module).to_string(), members, group)
            })
            .collect();
        let strings = st
            .strings
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.removed)
            .map(|(i, s)| {
                let weave = st.ns.weave_name(s.weave).unwrap_or("?").to_string();
                (s.report(StringId(i as u32)), weave)
            })
            .collect();
        TapestryView {
            generation: st.ns.generation(),
            modules,
            beads,
            weaves,
            tuples,
            strings,
        }
    }

    /// Weave snapshot plus the generation it was taken at, under one lock.
    pub fn snapshot_named(
        &self,
        weave: &str,
    ) -> Result<(u64, std::collections::BTreeMap<(String, String), Value>), RtError> {
        let st = self.lock();
        let w = st.ns.weave_id(weave)?;
        Ok((st.ns.generation(), st.ns.snapshot(w)?))
    }

    pub fn is_shutdown(&self) -> bool {
        self.lock().shutdown
    }

    /// Enable per-switch invariant checking (table-route consistency and
    /// switch purity). Expensive; intended for tests.
    pub fn set_switch_verification(&self, on: bool) {
        self.lock().verify_switches = on;
    }

    /// Structural self-check of the namespace layer: cell ownership, alias
    /// layout, table exactness, and alias-count conservation.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.lock().ns.check_invariants()
    }

    /// Total weave-table lookups performed by `resolve` so far.
    pub fn resolve_lookups(&self) -> u64 {
        self.lock().ns.resolve_lookups()
    }

    // --- fabric -------------------------------------------------------------

    /// Bind `endpoints[i]` to rank `i` and open the message fabric.
    pub fn fabric_init(&self, endpoints: &[StringId]) -> Result<(), RtError> {
        let mut st = self.lock();
        if st.scheduler_active {
            return Err(RtError::SchedulerActive);
        }
        if st.fabric.is_some() {
            return Err(RtError::FabricReinit);
        }
        let mut seen = std::collections::HashSet::new();
        for &e in endpoints {
            let s = st.strings.get(e.ix()).ok_or(CoreError::UnknownString(e.0))?;
            if s.removed {
                return Err(CoreError::StringRemoved(e.0).into());
            }
            if !seen.insert(e) {
                return Err(RtError::Guest(format!("string {e} bound to two ranks")));
            }
        }
        st.fabric = Some(Fabric::new(endpoints.to_vec()));
        st.ns.bump();
        Ok(())
    }

    /// Fixed virtual latency added to the logged delivery time of every
    /// message. Bookkeeping only: delivery order and blocking are unchanged.
    pub fn set_virtual_latency(&self, ticks: u64) {
        self.lock().virtual_latency = ticks;
    }

    // --- lifecycle -----------------------------------------------------------

    /// Tear the runtime down: wake every parked string thread with a
    /// shutdown grant and join all string threads. Idempotent.
    pub fn shutdown(&self) {
        let handles = {
            let mut st = self.lock();
            if st.shutdown {
                Vec::new()
            } else {
                st.shutdown = true;
                let running = st.running;
                let mut handles = Vec::new();
                for i in 0..st.strings.len() {
                    let id = StringId(i as u32);
                    if Some(id) != running {
                        let s = &mut st.strings[i];
                        if s.started && !s.status.is_terminal() {
                            s.gate.grant(sched::Grant::Shutdown);
                        }
                    }
                }
                while let Some(pc) = st.commands.pop_front() {
                    pc.done.post(Err(RtError::Shutdown));
                }
                self.shared.driver.grant(sched::Grant::Run);
                for s in st.strings.iter_mut() {
                    if let Some(h) = s.thread.take() {
                        handles.push(h);
                    }
                }
                handles
            }
        };
        for h in handles {
            let _ = h.join();
        }
    }
}

impl Default for Runtime {
    fn default() -> Self {
        Runtime::new()
    }
}

impl RtState {
    /// Apply one control operation. Caller holds the state lock and sits at
    /// a switch boundary (or the scheduler is idle).
    pub(crate) fn apply_control(&mut self, op: ControlOp) -> Result<CmdOutcome, RtError> {
        match op {
            ControlOp::InsertModuleDef(def) => Ok(CmdOutcome::Module(self.ns.register_module(*def)?)),
            ControlOp::InsertModule(name) => {
                let def = self
                    .library
                    .get(&name)
                    .cloned()
                    .ok_or_else(|| CoreError::UnknownModule(name.clone()))?;
                Ok(CmdOutcome::Module(self.ns.register_module(def)?))
            }
            ControlOp::SpawnString { weave, module, entry, args, name } => {
                let id = self.spawn_string(weave, &module, &entry, args, name.as_deref())?;
                Ok(CmdOutcome::String(id))
            }
            ControlOp::Pause => {
                if self.paused {
                    return Err(RtError::AlreadyPaused);
                }
                self.paused = true;
                Ok(CmdOutcome::Unit)
            }
            ControlOp::Resume => {
                if !self.paused {
                    return Err(RtError::NotPaused);
                }
                self.paused = false;
                Ok(CmdOutcome::Unit)
            }
            ControlOp::Rewire(cmd) => match cmd {
                RewireCommand::AddBead { name, module } => {
                    let m = self.ns.module_id(&module)?;
                    let n = if name.is_empty() { None } else { Some(name.as_str()) };
                    Ok(CmdOutcome::Bead(self.ns.create_bead(m, n)?))
                }
                RewireCommand::AddWeave { name, beads } => {
                    let ids = beads
                        .iter()
                        .map(|b| self.ns.bead_id(b))
                        .collect::<Result<Vec<_>, _>>()?;
                    let n = if name.is_empty() { None } else { Some(name.as_str()) };
                    Ok(CmdOutcome::Weave(self.ns.define_weave(&ids, n)?))
                }
                RewireCommand::AddString { name, weave, module, entry, args } => {
                    let w = self.ns.weave_id(&weave)?;
                    let id = self.spawn_string(w, &module, &entry, args, name.as_deref())?;
                    Ok(CmdOutcome::String(id))
                }
                RewireCommand::RemoveString { id } => {
                    let sid = StringId(id);
                    let s = self
                        .strings
                        .get(sid.ix())
                        .ok_or(CoreError::UnknownString(id))?;
                    if s.removed {
                        return Err(CoreError::StringRemoved(id).into());
                    }
                    if self.running == Some(sid) {
                        // Deferred: takes effect at the string's next boundary.
                        self.strings[sid.ix()].pending_remove = true;
                    } else {
                        self.retire_string(sid, true);
                    }
                    Ok(CmdOutcome::Unit)
                }
            },
        }
    }

    fn spawn_string(
        &mut self,
        weave: WeaveId,
        module: &str,
        entry: &str,
        args: Vec<Value>,
        name: Option<&str>,
    ) -> Result<StringId, RtError> {
        let m = self.ns.module_id(module)?;
        // The entry must exist and its module must be woven in.
        if !self.ns.module(m).def.entries.contains_key(entry) {
            return Err(CoreError::UnknownEntry { module: module.to_string(), entry: entry.to_string() }.into());
        }
        self.ns.weave_bead_of(weave, m)?;
        let id = StringId(self.strings.len() as u32);
        let name = match name {
            Some(n) => {
                if self.string_names.contains_key(n) {
                    return Err(CoreError::DuplicateStringName(n.to_string()).into());
                }
                n.to_string()
            }
            None => {
                let mut n = format!("s{}", id.0);
                while self.string_names.contains_key(&n) {
                    n.push('_');
                }
                n
            }
        };
        self.string_names.insert(name.clone(), id);
        self.strings.push(StringSlot {
            name,
            weave,
            entry: (m, entry.to_string()),
            args: Arc::new(args),
            status: StringStatus::Runnable,
            failure: None,
            frames: Vec::new(),
            gate: Arc::new(Gate::new()),
            thread: None,
            started: false,
            removed: false,
            pending_remove: false,
            in_handler: false,
            current_msg: None,
            activations: VecDeque::new(),
            switches: 0,
            guest_calls: 0,
            calls_since_switch: 0,
            wall: Duration::ZERO,
            resumed_at: None,
        });
        if self.scheduler_active {
            self.run_queue.push_back(id);
        }
        self.ns.bump();
        Ok(id)
    }

    /// Tombstone a string that is not currently running. With `wake`, parked
    /// threads get a shutdown grant so they unwind and exit.
    pub(crate) fn retire_string(&mut self, id: StringId, wake: bool) {
        let rq: Vec<StringId> = self.run_queue.iter().copied().filter(|&s| s != id).collect();
        self.run_queue = rq.into();
        self.on_string_terminal(id);
        let s = &mut self.strings[id.ix()];
        s.removed = true;
        s.pending_remove = false;
        if wake && s.started && !s.status.is_terminal() {
            s.gate.grant(sched::Grant::Shutdown);
        }
        self.ns.bump();
    }

    /// Fabric-side consequences of a string ceasing to participate
    /// (finished, failed, or removed): mark its rank dead and break any
    /// barrier it had not arrived at.
    pub(crate) fn on_string_terminal(&mut self, id: StringId) {
        let Some(fab) = self.fabric.as_mut() else { return };
        let Some(rank) = fab.rank_of(id) else { return };
        if !fab.finished.insert(rank) {
            return;
        }
        // An endpoint that dies after arriving does not break the current
        // barrier; the remaining arrivals can still complete it. Dying
        // before arriving strands every waiter.
        if fab.barrier_arrived.contains(&rank) {
            return;
        }
        let waiters_exist = self
            .strings
            .iter()
            .any(|s| !s.removed && matches!(s.status, StringStatus::Blocked(BlockReason::Barrier { .. })));
        if waiters_exist && fab.barrier_broken.is_none() {
            fab.barrier_broken = Some(rank);
            self.events.log_barrier_break(rank);
            let to_wake: Vec<StringId> = self
                .strings
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    !s.removed && matches!(s.status, StringStatus::Blocked(BlockReason::Barrier { .. }))
                })
                .map(|(i, _)| StringId(i as u32))
                .collect();
            for w in to_wake {
                self.make_runnable(w);
            }
        }
    }

    pub(crate) fn make_runnable(&mut self, id: StringId) {
        let s = &mut self.strings[id.ix()];
        debug_assert!(matches!(s.status, StringStatus::Blocked(_)));
        s.status = StringStatus::Runnable;
        debug_assert!(!self.run_queue.contains(&id));
        self.run_queue.push_back(id);
    }

    pub(crate) fn drain_commands(&mut self) {
        while let Some(pc) = self.commands.pop_front() {
            let res = self.apply_control(pc.op);
            pc.done.post(res);
        }
    }

    /// Recompute class partition and bead-user counts if the tapestry
    /// changed since the cache was built.
    pub(crate) fn refresh_classes(&mut self) {
        let gen = self.ns.generation();
        if self.classes.as_ref().map(|c| c.generation) == Some(gen) {
            return;
        }
        let n = self.strings.len();
        let mut bead_users = vec![0u32; self.ns.bead_count()];
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        let mut bead_rep: HashMap<BeadId, u32> = HashMap::new();
        for i in 0..n {
            if self.strings[i].removed {
                continue;
            }
            let weave = self.strings[i].weave;
            let beads: Vec<BeadId> = self.ns.weave_beads(weave).unwrap().to_vec();
            for b in beads {
                bead_users[b.0 as usize] += 1;
                match bead_rep.get(&b) {
                    Some(&o) => {
                        let (a, b2) = (find(&mut parent, i as u32), find(&mut parent, o));
                        if a != b2 {
                            parent[a as usize] = b2;
                        }
                    }
                    None => {
                        bead_rep.insert(b, i as u32);
                    }
                }
            }
        }
        let mut class_of = vec![0u32; n];
        for i in 0..n {
            class_of[i] = find(&mut parent, i as u32);
        }
        self.classes = Some(ClassCache { generation: gen, class_of, bead_users });
    }

    pub(crate) fn make_report(&self, wall: Duration) -> RunReport {
        let mut strings = Vec::new();
        let mut deadlocked = Vec::new();
        for (i, s) in self.strings.iter().enumerate() {
            if s.removed {
                continue;
            }
            strings.push(s.report(StringId(i as u32)));
            if let StringStatus::Blocked(r) = &s.status {
                deadlocked.push((i as u32, r.describe()));
            }
        }
        RunReport {
            strings,
            total_switches: self.total_switches,
            wall_ms: wall.as_secs_f64() * 1e3,
            deadlocked,
        }
    }
}
