//! Baton-handoff scheduling.
//!
//! Exactly one grant ("the baton") exists while the scheduler runs. A
//! suspending string picks its successor under the state lock, releases the
//! lock, and signals the successor's gate; the driver inside `run()` only
//! receives the baton when nothing is eligible. Every parked thread waits
//! on its own gate, so waking a specific string is O(1) and never thunders.
//!
//! Switch boundaries are the only places where rewiring commands apply,
//! simulated preemption fires, and pending callback activations drain; in
//! between, guest code runs as plain native code.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Instant;

use crate::error::RtError;
use crate::events::EventKind;
use crate::report::RunReport;

use super::{
    BlockReason, Ctx, Frame, RtState, Runtime, SchedulerPolicy, Shared,
    StringId, StringStatus,
};

/// Stack size for string threads. Guest entries are ordinary Rust with
/// bounded recursion; a quarter megabyte keeps a thousand strings cheap.
const STRING_STACK: usize = 256 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Grant {
    Run,
    Shutdown,
}

/// One-slot handoff gate. `Shutdown` is sticky: it is never downgraded by a
/// later `Run` grant.
pub(crate) struct Gate {
    slot: Mutex<Option<Grant>>,
    cv: Condvar,
}

impl Gate {
    pub fn new() -> Self {
        Gate { slot: Mutex::new(None), cv: Condvar::new() }
    }

    pub fn grant(&self, g: Grant) {
        let mut s = self.slot.lock().unwrap_or_else(|p| p.into_inner());
        if *s != Some(Grant::Shutdown) {
            *s = Some(g);
        }
        self.cv.notify_one();
    }

    pub fn wait(&self) -> Grant {
        let mut s = self.slot.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            if let Some(g) = s.take() {
                return g;
            }
            s = self.cv.wait(s).unwrap_or_else(|p| p.into_inner());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SwitchReason {
    Yield,
    Quantum,
    Block,
}

impl RtState {
    pub(crate) fn start_timer(&mut self, id: StringId) {
        self.strings[id.ix()].resumed_at = Some(Instant::now());
    }

    pub(crate) fn stop_timer(&mut self, id: StringId) {
        let s = &mut self.strings[id.ix()];
        if let Some(t) = s.resumed_at.take() {
            s.wall += t.elapsed();
        }
    }

    fn frames_in_shared_bead(&self, ix: usize) -> bool {
        let cache = self.classes.as_ref().expect("class cache refreshed");
        self.strings[ix].frames.iter().any(|f: &Frame| {
            cache.bead_users.get(f.bead.0 as usize).copied().unwrap_or(0) >= 2
                && !self.ns.module(f.module).def.reentrant
        })
    }

    /// May `c` be scheduled, given that at most one string per equivalence
    /// class may sit inside a non-reentrant shared bead? If a classmate is
    /// suspended inside one, only that classmate is eligible.
    fn class_rep_ok(&self, c: StringId) -> bool {
        let cache = self.classes.as_ref().expect("class cache refreshed");
        let cls = cache.class_of[c.ix()];
        for (i, s) in self.strings.iter().enumerate() {
            if i == c.ix() || s.removed || s.frames.is_empty() {
                continue;
            }
            if cache.class_of[i] != cls || s.status.is_terminal() {
                continue;
            }
            if self.frames_in_shared_bead(i) {
                return false;
            }
        }
        true
    }

    /// Choose the next string to run, honoring FIFO order and — under the
    /// preemptive policy — the shared-bead class restrictions. A string
    /// suspending voluntarily is in the queue itself and is returned as a
    /// last resort (continue without switching).
    pub(crate) fn pick(&mut self, from: Option<(StringId, SwitchReason)>) -> Option<StringId> {
        let preemptive = matches!(self.policy, SchedulerPolicy::Preemptive { .. });
        if preemptive {
            self.refresh_classes();
        }
        let exclude_class = match (preemptive, from) {
            (true, Some((me, SwitchReason::Yield | SwitchReason::Quantum))) => {
                self.refresh_classes();
                if self.frames_in_shared_bead(me.ix()) {
                    Some(self.classes.as_ref().unwrap().class_of[me.ix()])
                } else {
                    None
                }
            }
            _ => None,
        };
        let mut idx = 0;
        while idx < self.run_queue.len() {
            let c = self.run_queue[idx];
            let s = &self.strings[c.ix()];
            if s.removed || s.status != StringStatus::Runnable {
                self.run_queue.remove(idx);
                continue;
            }
            if preemptive {
                let cls = self.classes.as_ref().unwrap().class_of[c.ix()];
                if exclude_class == Some(cls) {
                    idx += 1;
                    continue;
                }
                if !self.class_rep_ok(c) {
                    idx += 1;
                    continue;
                }
            }
            self.run_queue.remove(idx);
            return Some(c);
        }
        if let Some((me, SwitchReason::Yield | SwitchReason::Quantum)) = from {
            if let Some(pos) = self.run_queue.iter().position(|&x| x == me) {
                self.run_queue.remove(pos);
                return Some(me);
            }
        }
        None
    }

    /// Hand the baton to `to`. Returns the gate to signal (after the caller
    /// drops the state lock) and whether the thread must be spawned first.
    pub(crate) fn prepare_grant(&mut self, to: StringId) -> (Arc<Gate>, bool) {
        if self.verify_switches {
            self.verify_weave_routes(to);
        }
        let s = &mut self.strings[to.ix()];
        s.status = StringStatus::Running;
        s.calls_since_switch = 0;
        s.switches += 1;
        let need_spawn = !s.started;
        s.started = true;
        let gate = s.gate.clone();
        self.running = Some(to);
        self.total_switches += 1;
        self.start_timer(to);
        (gate, need_spawn)
    }

    /// Table-route consistency for the incoming string's weave: every
    /// (module, symbol) slot must target exactly the cell bound by the
    /// weave's bead for that module.
    fn verify_weave_routes(&self, to: StringId) {
        let weave = self.strings[to.ix()].weave;
        let beads = self.ns.weave_beads(weave).expect("string weave exists").to_vec();
        for b in beads {
            let module = self.ns.bead_module(b).unwrap();
            for sym in 0..self.ns.module_symbols(module).len() as u32 {
                let via_table = self.ns.resolve(weave, module, sym).unwrap();
                let via_bead = self.ns.beads[b.0 as usize].cells[sym as usize];
                assert_eq!(
                    via_table, via_bead,
                    "switch verification: weave {weave} slot ({module}, {sym}) diverges from bead route"
                );
            }
        }
    }

    /// Digest of all cell values, for switch-purity verification.
    pub(crate) fn cells_fingerprint(&self) -> Vec<crate::value::Value> {
        self.ns.cells.iter().map(|c| c.value.clone()).collect()
    }
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

/// Suspend the current string at a switch boundary. Applies queued rewiring
/// first, honors deferred removal, picks and grants a successor, parks, and
/// drains callback activations once resumed.
pub(crate) fn switch_point_locked(
    shared: &Arc<Shared>,
    mut st: MutexGuard<'_, RtState>,
    me: StringId,
    reason: SwitchReason,
    block: Option<BlockReason>,
) -> Result<(), RtError> {
    debug_assert_eq!(st.running, Some(me), "switch point without the baton");
    st.strings[me.ix()].calls_since_switch = 0;
    st.drain_commands();
    if st.shutdown {
        // Keep the baton; the string unwinds and its epilogue hands off.
        return Err(RtError::Shutdown);
    }
    if st.strings[me.ix()].pending_remove {
        st.stop_timer(me);
        st.retire_string(me, false);
        hand_off_terminal(shared, st, me);
        return Err(RtError::Shutdown);
    }
    let purity = if st.verify_switches { Some(st.cells_fingerprint()) } else { None };
    match reason {
        SwitchReason::Yield | SwitchReason::Quantum => {
            st.strings[me.ix()].status = StringStatus::Runnable;
            st.run_queue.push_back(me);
        }
        SwitchReason::Block => {
            st.strings[me.ix()].status =
                StringStatus::Blocked(block.expect("block reason for a blocking switch"));
        }
    }
    st.stop_timer(me);
    // While paused, the baton goes back to the driver, which sits on the
    // command queue until a resume arrives.
    let next = if st.paused { None } else { st.pick(Some((me, reason))) };
    let gate = st.strings[me.ix()].gate.clone();
    match next {
        Some(n) if n == me => {
            st.strings[me.ix()].status = StringStatus::Running;
            st.start_timer(me);
            if let Some(fp) = purity {
                assert_eq!(fp, st.cells_fingerprint(), "switch purity violated");
            }
            drop(st);
        }
        Some(n) => {
            let (next_gate, need_spawn) = st.prepare_grant(n);
            if let Some(fp) = purity {
                assert_eq!(fp, st.cells_fingerprint(), "switch purity violated");
            }
            drop(st);
            if need_spawn {
                spawn_string_thread(shared.clone(), n, next_gate.clone());
            }
            next_gate.grant(Grant::Run);
            match gate.wait() {
                Grant::Run => {}
                Grant::Shutdown => return Err(RtError::Shutdown),
            }
            let st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            drop(st);
        }
        None => {
            st.running = None;
            if let Some(fp) = purity {
                assert_eq!(fp, st.cells_fingerprint(), "switch purity violated");
            }
            drop(st);
            shared.driver.grant(Grant::Run);
            match gate.wait() {
                Grant::Run => {}
                Grant::Shutdown => return Err(RtError::Shutdown),
            }
            let st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            drop(st);
        }
    }
    drain_activations(shared, me)
}

/// Hand the baton onward on behalf of a string that is done (finished,
/// failed, or removed) and will not park again.
fn hand_off_terminal(shared: &Arc<Shared>, mut st: MutexGuard<'_, RtState>, me: StringId) {
    debug_assert_eq!(st.running, Some(me));
    st.drain_commands();
    let next = if st.paused { None } else { st.pick(None) };
    match next {
        Some(n) => {
            let (gate, need_spawn) = st.prepare_grant(n);
            drop(st);
            if need_spawn {
                spawn_string_thread(shared.clone(), n, gate.clone());
            }
            gate.grant(Grant::Run);
        }
        None => {
            st.running = None;
            drop(st);
            shared.driver.grant(Grant::Run);
        }
    }
}

/// Deliver queued callback activations to `me`, which holds the baton.
/// Handlers run as entry frames of the registered module's bead in the
/// string's own weave, one at a time; a handler that suspends simply leaves
/// the rest of the queue for the next boundary.
pub(crate) fn drain_activations(shared: &Arc<Shared>, me: StringId) -> Result<(), RtError> {
    loop {
        let body = {
            let mut st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            if st.strings[me.ix()].in_handler || st.strings[me.ix()].activations.is_empty() {
                return Ok(());
            }
            let env = st.strings[me.ix()].activations.pop_front().unwrap();
            let fab = st.fabric.as_ref().expect("activation without a fabric");
            let rank = fab.rank_of(me).expect("activation for an unbound string");
            let (hmod, hentry) = fab.handlers[rank as usize]
                .clone()
                .expect("activation without a registered handler");
            let bead = st.ns.weave_bead_of(st.strings[me.ix()].weave, hmod)?;
            let body = st.ns.module(hmod).def.entries[&hentry].clone();
            let latency = st.virtual_latency;
            st.events.log_delivery(
                EventKind::Callback,
                env.msg.src,
                env.msg.dst,
                env.msg.tag,
                env.msg.seq,
                env.sent_at,
                latency,
                me.0,
            );
            let s = &mut st.strings[me.ix()];
            s.frames.push(Frame { bead, module: hmod });
            s.in_handler = true;
            s.current_msg = Some(env.msg);
            body
        };
        let ctx = Ctx::new(shared.clone(), me);
        let out = catch_unwind(AssertUnwindSafe(|| body(&ctx)));
        {
            let mut st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
            let s = &mut st.strings[me.ix()];
            s.frames.pop();
            s.in_handler = false;
            s.current_msg = None;
        }
        match out {
            Ok(Ok(())) => continue,
            Ok(Err(e)) => return Err(e),
            Err(p) => return Err(RtError::Guest(panic_text(p))),
        }
    }
}

pub(crate) fn spawn_string_thread(shared: Arc<Shared>, id: StringId, gate: Arc<Gate>) {
    let name = {
        let st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
        st.strings[id.ix()].name.clone()
    };
    let thread_shared = shared.clone();
    let handle = std::thread::Builder::new()
        .name(format!("string-{name}"))
        .stack_size(STRING_STACK)
        .spawn(move || string_main(thread_shared, id, gate))
        .expect("spawn string thread");
    // The thread parks on its gate before touching shared state, and the
    // first grant is signalled only after this store.
    let mut st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
    st.strings[id.ix()].thread = Some(handle);
}

fn string_main(shared: Arc<Shared>, me: StringId, gate: Arc<Gate>) {
    match gate.wait() {
        Grant::Shutdown => {
            finish_string(&shared, me, Err(RtError::Shutdown));
            return;
        }
        Grant::Run => {}
    }
    let body = {
        let mut st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
        if st.shutdown {
            drop(st);
            finish_string(&shared, me, Err(RtError::Shutdown));
            return;
        }
        let (module, entry) = st.strings[me.ix()].entry.clone();
        let bead = st
            .ns
            .weave_bead_of(st.strings[me.ix()].weave, module)
            .expect("entry bead validated at spawn");
        st.strings[me.ix()].frames.push(Frame { bead, module });
        st.ns.module(module).def.entries[&entry].clone()
    };
    let ctx = Ctx::new(shared.clone(), me);
    let mut result = match catch_unwind(AssertUnwindSafe(|| body(&ctx))) {
        Ok(Ok(())) => Ok(()),
        Ok(Err(e)) => Err(e),
        Err(p) => Err(RtError::Guest(panic_text(p))),
    };
    // Finish boundary: deliver stragglers before the string goes dark, so a
    // clean run conserves messages.
    if result.is_ok() {
        let holds_baton = {
            let st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
            st.running == Some(me)
        };
        if holds_baton {
            result = drain_activations(&shared, me);
        }
    }
    finish_string(&shared, me, result);
}

/// Common epilogue: record the outcome, propagate fabric consequences, and
/// hand the baton onward if this thread still holds it.
fn finish_string(shared: &Arc<Shared>, me: StringId, result: Result<(), RtError>) {
    let mut st = shared.state.lock().unwrap_or_else(|p| p.into_inner());
    st.stop_timer(me);
    {
        let s = &mut st.strings[me.ix()];
        s.frames.clear();
        s.in_handler = false;
        s.current_msg = None;
    }
    if !st.strings[me.ix()].removed {
        match result {
            Ok(()) => st.strings[me.ix()].status = StringStatus::Finished,
            Err(e) => {
                st.strings[me.ix()].status = StringStatus::Failed;
                st.strings[me.ix()].failure = Some(e);
            }
        }
        st.on_string_terminal(me);
    }
    if st.running == Some(me) {
        hand_off_terminal(shared, st, me);
    }
}

impl Runtime {
    /// Run the scheduler until every string finished or failed, or until no
    /// eligible string remains (deadlock — reported, not an error). Strings
    /// left blocked keep their state and can be resumed by a later `run()`
    /// if new strings unblock them.
    pub fn run(&self, policy: SchedulerPolicy) -> Result<RunReport, RtError> {
        let t0 = Instant::now();
        {
            let mut st = self.lock();
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            if st.scheduler_active {
                return Err(RtError::SchedulerActive);
            }
            st.scheduler_active = true;
            st.policy = policy;
            st.running = None;
            st.run_queue.clear();
            let runnable: Vec<StringId> = st
                .strings
                .iter()
                .enumerate()
                .filter(|(_, s)| !s.removed && s.status == StringStatus::Runnable)
                .map(|(i, _)| StringId(i as u32))
                .collect();
            st.run_queue.extend(runnable);
        }
        let report = loop {
            let mut st = self.lock();
            st.drain_commands();
            if st.shutdown {
                st.scheduler_active = false;
                break st.make_report(t0.elapsed());
            }
            let next = if st.paused { None } else { st.pick(None) };
            if let Some(n) = next {
                let (gate, need_spawn) = st.prepare_grant(n);
                drop(st);
                if need_spawn {
                    spawn_string_thread(self.shared.clone(), n, gate.clone());
                }
                gate.grant(Grant::Run);
                // Park until the baton comes back (idle, pause, or done).
                self.shared.driver.wait();
                continue;
            }
            let all_done = st
                .strings
                .iter()
                .all(|s| s.removed || s.status.is_terminal());
            if st.commands.is_empty() && (all_done || !st.paused) {
                // Clean completion, or strings remain but none is eligible:
                // either way the report (with its deadlock list) says which.
                st.scheduler_active = false;
                break st.make_report(t0.elapsed());
            }
            drop(st);
            self.shared.driver.wait();
        };
        // Reap threads that are done; parked blocked strings keep theirs.
        let handles: Vec<std::thread::JoinHandle<()>> = {
            let mut st = self.lock();
            let mut hs = Vec::new();
            for s in st.strings.iter_mut() {
                if (s.removed || s.status.is_terminal()) && s.thread.is_some() {
                    hs.push(s.thread.take().unwrap());
                }
            }
            hs
        };
        for h in handles {
            let _ = h.join();
        }
        Ok(report)
    }
}
