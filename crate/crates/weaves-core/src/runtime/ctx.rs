//! The guest API: what module code can do while running on a string.
//!
//! Every method that touches runtime state is a guest call: it is counted,
//! and under the preemptive policy it is a potential forced switch point.
//! Pure accessors (`string_id`, `args`, `message`) are free.
//!
//! Symbol access is always routed through the executing string's weave
//! table; the "current module" for unqualified names is the module of the
//! innermost active frame (entry, cross-module call, or callback handler).

use std::sync::{Arc, MutexGuard};

use crate::error::{CoreError, RtError};
use crate::events::EventKind;
use crate::fabric::{EndpointMode, Envelope, Message};
use crate::namespace::ModuleId;
use crate::value::Value;

use super::sched::{drain_activations, switch_point_locked, SwitchReason};
use super::{BlockReason, Frame, RtState, Shared, StringId, StringStatus};

pub struct Ctx {
    shared: Arc<Shared>,
    id: StringId,
}

impl Ctx {
    pub(crate) fn new(shared: Arc<Shared>, id: StringId) -> Self {
        Ctx { shared, id }
    }

    fn lock(&self) -> MutexGuard<'_, RtState> {
        self.shared.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Count a state-touching call; fire a forced switch if the quantum
    /// expired or this string's removal was requested.
    fn guest_call(&self) -> Result<(), RtError> {
        let st = self.lock();
        self.guest_call_locked(st).map(|_| ())
    }

    fn guest_call_locked<'a>(
        &'a self,
        mut st: MutexGuard<'a, RtState>,
    ) -> Result<Option<MutexGuard<'a, RtState>>, RtError> {
        if st.shutdown {
            return Err(RtError::Shutdown);
        }
        let quantum = st.policy.quantum();
        let s = &mut st.strings[self.id.ix()];
        if s.removed {
            return Err(RtError::Shutdown);
        }
        s.guest_calls += 1;
        s.calls_since_switch += 1;
        let force = s.pending_remove || quantum.map(|q| s.calls_since_switch >= q).unwrap_or(false);
        if force {
            switch_point_locked(&self.shared, st, self.id, SwitchReason::Quantum, None)?;
            return Ok(None);
        }
        Ok(Some(st))
    }

    // --- identity ----------------------------------------------------------

    pub fn string_id(&self) -> u32 {
        self.id.0
    }

    /// Arguments this string was spawned with.
    pub fn args(&self) -> Arc<Vec<Value>> {
        self.lock().strings[self.id.ix()].args.clone()
    }

    pub fn arg_int(&self, i: usize) -> Result<i64, RtError> {
        self.args()
            .get(i)
            .and_then(Value::as_int)
            .ok_or_else(|| RtError::Guest(format!("argument {i} missing or not an int")))
    }

    pub fn arg_real(&self, i: usize) -> Result<f64, RtError> {
        self.args()
            .get(i)
            .and_then(Value::as_real)
            .ok_or_else(|| RtError::Guest(format!("argument {i} missing or not a real")))
    }

    /// The message being delivered, when running inside a callback handler.
    pub fn message(&self) -> Option<Message> {
        self.lock().strings[self.id.ix()].current_msg.clone()
    }

    // --- namespace access ----------------------------------------------------

    fn current_module(&self, st: &RtState) -> Result<ModuleId, RtError> {
        st.strings[self.id.ix()]
            .frames
            .last()
            .map(|f| f.module)
            .ok_or_else(|| RtError::Guest("no active frame".into()))
    }

    /// Read an unqualified global of the current module.
    pub fn get(&self, symbol: &str) -> Result<Value, RtError> {
        let Some(st) = self.guest_call_locked(self.lock())? else {
            return self.get_postswitch(None, symbol);
        };
        self.read_in(st, None, symbol)
    }

    pub fn get_in(&self, module: &str, symbol: &str) -> Result<Value, RtError> {
        let Some(st) = self.guest_call_locked(self.lock())? else {
            return self.get_postswitch(Some(module), symbol);
        };
        self.read_in(st, Some(module), symbol)
    }

    fn get_postswitch(&self, module: Option<&str>, symbol: &str) -> Result<Value, RtError> {
        let st = self.lock();
        self.read_in(st, module, symbol)
    }

    fn read_in(
        &self,
        st: MutexGuard<'_, RtState>,
        module: Option<&str>,
        symbol: &str,
    ) -> Result<Value, RtError> {
        let m = match module {
            Some(name) => st.ns.module_id(name)?,
            None => self.current_module(&st)?,
        };
        let sym = st.ns.symbol_index(m, symbol)?;
        let cell = st.ns.resolve(st.strings[self.id.ix()].weave, m, sym)?;
        Ok(st.ns.read_cell(cell)?)
    }

    /// Write an unqualified global of the current module.
    pub fn set(&self, symbol: &str, value: Value) -> Result<(), RtError> {
        self.guest_call()?;
        self.write_in(None, symbol, value)
    }

    pub fn set_in(&self, module: &str, symbol: &str, value: Value) -> Result<(), RtError> {
        self.guest_call()?;
        self.write_in(Some(module), symbol, value)
    }

    fn write_in(&self, module: Option<&str>, symbol: &str, value: Value) -> Result<(), RtError> {
        let mut st = self.lock();
        let m = match module {
            Some(name) => st.ns.module_id(name)?,
            None => self.current_module(&st)?,
        };
        let sym = st.ns.symbol_index(m, symbol)?;
        let cell = st.ns.resolve(st.strings[self.id.ix()].weave, m, sym)?;
        Ok(st.ns.write_cell(cell, value)?)
    }

    pub fn get_int(&self, symbol: &str) -> Result<i64, RtError> {
        self.get(symbol)?
            .as_int()
            .ok_or_else(|| RtError::Guest(format!("symbol `{symbol}` is not an int")))
    }

    pub fn get_real(&self, symbol: &str) -> Result<f64, RtError> {
        self.get(symbol)?
            .as_real()
            .ok_or_else(|| RtError::Guest(format!("symbol `{symbol}` is not a real")))
    }

    // --- control -------------------------------------------------------------

    /// Voluntarily offer a switch point. Round-robin among eligible strings;
    /// a lone string resumes immediately.
    pub fn yield_now(&self) -> Result<(), RtError> {
        let mut st = self.lock();
        if st.shutdown {
            return Err(RtError::Shutdown);
        }
        if st.strings[self.id.ix()].removed {
            return Err(RtError::Shutdown);
        }
        st.strings[self.id.ix()].guest_calls += 1;
        switch_point_locked(&self.shared, st, self.id, SwitchReason::Yield, None)
    }

    /// Invoke an entry of another woven module on this string, in that
    /// module's bead. Under the preemptive policy, entering a busy
    /// non-reentrant shared bead is refused.
    pub fn call(&self, module: &str, entry: &str) -> Result<(), RtError> {
        self.guest_call()?;
        let body = {
            let mut st = self.lock();
            let m = st.ns.module_id(module)?;
            let bead = st.ns.weave_bead_of(st.strings[self.id.ix()].weave, m)?;
            let data = st.ns.module(m);
            let body = data.def.entries.get(entry).cloned().ok_or_else(|| CoreError::UnknownEntry {
                module: module.to_string(),
                entry: entry.to_string(),
            })?;
            let reentrant = data.def.reentrant;
            if !reentrant && st.policy.quantum().is_some() {
                let busy = st.strings.iter().enumerate().any(|(i, s)| {
                    i != self.id.ix() && !s.removed && s.frames.iter().any(|f| f.bead == bead)
                });
                if busy {
                    return Err(RtError::BeadBusy {
                        module: module.to_string(),
                        entry: entry.to_string(),
                    });
                }
            }
            st.strings[self.id.ix()].frames.push(Frame { bead, module: m });
            body
        };
        let out = body(self);
        let mut st = self.lock();
        st.strings[self.id.ix()].frames.pop();
        drop(st);
        out
    }

    // --- message fabric --------------------------------------------------------

    fn my_rank(&self, st: &RtState) -> Result<u32, RtError> {
        let fab = st.fabric.as_ref().ok_or(RtError::FabricUninitialized)?;
        fab.rank_of(self.id).ok_or(RtError::NotAnEndpoint)
    }

    pub fn rank(&self) -> Result<u32, RtError> {
        self.guest_call()?;
        let st = self.lock();
        self.my_rank(&st)
    }

    pub fn size(&self) -> Result<u32, RtError> {
        self.guest_call()?;
        let st = self.lock();
        let fab = st.fabric.as_ref().ok_or(RtError::FabricUninitialized)?;
        Ok(fab.size())
    }

    /// Buffered, non-blocking send. A receiver blocked on a matching filter
    /// becomes runnable; a callback-mode receiver gets an activation,
    /// delivered at its next switch boundary.
    pub fn send(&self, dst: u32, tag: i64, payload: Value) -> Result<(), RtError> {
        self.guest_call()?;
        let mut st = self.lock();
        let src = self.my_rank(&st)?;
        let fab = st.fabric.as_ref().unwrap();
        if dst >= fab.size() {
            return Err(RtError::InvalidRank(dst));
        }
        let dst_string = fab.ranks[dst as usize];
        let mode = fab.modes[dst as usize];
        let seq = st.fabric.as_mut().unwrap().next_seq(src, dst);
        let sent_at = st.events.log_send(src, dst, tag, seq, self.id.0);
        let env = Envelope { msg: Message { src, dst, tag, seq, payload }, sent_at };
        match mode {
            Some(EndpointMode::Callback) => {
                st.strings[dst_string.ix()].activations.push_back(env);
            }
            _ => {
                st.fabric.as_mut().unwrap().mailboxes[dst as usize].push_back(env);
                let wake = matches!(
                    &st.strings[dst_string.ix()].status,
                    StringStatus::Blocked(BlockReason::Recv { filter })
                        if filter.map(|f| f == tag).unwrap_or(true)
                );
                if wake {
                    st.make_runnable(dst_string);
                }
            }
        }
        Ok(())
    }

    /// Blocking receive: the oldest pending message passing `filter`.
    /// Commits this endpoint to receive mode.
    pub fn recv(&self, filter: Option<i64>) -> Result<Message, RtError> {
        self.guest_call()?;
        loop {
            let mut st = self.lock();
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            let rank = self.my_rank(&st)?;
            let fab = st.fabric.as_mut().unwrap();
            match fab.modes[rank as usize] {
                Some(mode @ EndpointMode::Callback) => {
                    return Err(RtError::ModeMismatch { rank, mode: mode.label(), op: "recv" })
                }
                None => fab.modes[rank as usize] = Some(EndpointMode::Recv),
                Some(EndpointMode::Recv) => {}
            }
            if let Some(env) = fab.take_matching(rank, filter) {
                let latency = st.virtual_latency;
                st.events.log_delivery(
                    EventKind::Recv,
                    env.msg.src,
                    env.msg.dst,
                    env.msg.tag,
                    env.msg.seq,
                    env.sent_at,
                    latency,
                    self.id.0,
                );
                return Ok(env.msg);
            }
            switch_point_locked(
                &self.shared,
                st,
                self.id,
                SwitchReason::Block,
                Some(BlockReason::Recv { filter }),
            )?;
        }
    }

    /// Route future messages for this endpoint to `module.entry`, invoked on
    /// this string at switch boundaries. Replaces any earlier registration;
    /// commits the endpoint to callback mode. Messages already buffered are
    /// converted to activations in arrival order.
    pub fn register_callback(&self, module: &str, entry: &str) -> Result<(), RtError> {
        self.guest_call()?;
        let mut st = self.lock();
        let rank = self.my_rank(&st)?;
        let m = st.ns.module_id(module)?;
        if !st.ns.module(m).def.entries.contains_key(entry) {
            return Err(CoreError::UnknownEntry {
                module: module.to_string(),
                entry: entry.to_string(),
            }
            .into());
        }
        st.ns.weave_bead_of(st.strings[self.id.ix()].weave, m)?;
        let fab = st.fabric.as_mut().unwrap();
        if let Some(mode @ EndpointMode::Recv) = fab.modes[rank as usize] {
            return Err(RtError::ModeMismatch { rank, mode: mode.label(), op: "register_callback" });
        }
        fab.modes[rank as usize] = Some(EndpointMode::Callback);
        fab.handlers[rank as usize] = Some((m, entry.to_string()));
        let pending: Vec<Envelope> = fab.mailboxes[rank as usize].drain(..).collect();
        st.strings[self.id.ix()].activations.extend(pending);
        Ok(())
    }

    /// Block until every endpoint arrives. Release waits for quiescence:
    /// every endpoint's pending callback activations run before anyone
    /// proceeds, so handler effects are visible past the barrier. An
    /// endpoint that is already dead, or dies without arriving while others
    /// wait, breaks the barrier.
    pub fn barrier(&self) -> Result<(), RtError> {
        self.guest_call()?;
        let entry_epoch = {
            let st = self.lock();
            self.my_rank(&st)?;
            st.fabric.as_ref().unwrap().barrier_epoch
        };
        let mut arrive_logged = false;
        loop {
            drain_activations(&self.shared, self.id)?;
            let mut st = self.lock();
            if st.shutdown {
                return Err(RtError::Shutdown);
            }
            let rank = self.my_rank(&st)?;
            let (broken, epoch_now, dead) = {
                let fab = st.fabric.as_ref().unwrap();
                // A dead endpoint that already arrived still counts toward
                // the current barrier; only one that never will breaks it.
                let dead =
                    fab.finished.iter().find(|r| !fab.barrier_arrived.contains(r)).copied();
                (fab.barrier_broken, fab.barrier_epoch, dead)
            };
            if let Some(b) = broken {
                return Err(RtError::BrokenBarrier(b));
            }
            if epoch_now != entry_epoch {
                // Released while this string was draining handlers.
                return Ok(());
            }
            if let Some(d) = dead {
                return Err(RtError::BrokenBarrier(d));
            }
            if !arrive_logged {
                st.events.log_barrier_arrive(rank, self.id.0);
                arrive_logged = true;
            }
            let (all_arrived, endpoints) = {
                let fab = st.fabric.as_mut().unwrap();
                fab.barrier_arrived.insert(rank);
                (fab.barrier_arrived.len() as u32 == fab.size(), fab.ranks.clone())
            };
            if all_arrived {
                let quiescent = endpoints.iter().all(|&s| {
                    let slot = &st.strings[s.ix()];
                    slot.activations.is_empty() && !slot.in_handler
                });
                if quiescent {
                    let fab = st.fabric.as_mut().unwrap();
                    fab.barrier_arrived.clear();
                    fab.barrier_epoch += 1;
                    let released = fab.barrier_epoch;
                    st.events.log_barrier_release(released);
                    let waiters: Vec<StringId> = st
                        .strings
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| {
                            !s.removed
                                && matches!(
                                    s.status,
                                    StringStatus::Blocked(BlockReason::Barrier { .. })
                                )
                        })
                        .map(|(i, _)| StringId(i as u32))
                        .collect();
                    for w in waiters {
                        st.make_runnable(w);
                    }
                    return Ok(());
                }
                // Everyone is here but some endpoints still owe handler work:
                // wake them so they drain, then re-check.
                let owing: Vec<StringId> = endpoints
                    .iter()
                    .copied()
                    .filter(|&s| {
                        let slot = &st.strings[s.ix()];
                        !slot.removed
                            && matches!(
                                slot.status,
                                StringStatus::Blocked(BlockReason::Barrier { .. })
                            )
                            && !slot.activations.is_empty()
                    })
                    .collect();
                for w in owing {
                    st.make_runnable(w);
                }
            }
            switch_point_locked(
                &self.shared,
                st,
                self.id,
                SwitchReason::Block,
                Some(BlockReason::Barrier { epoch: entry_epoch }),
            )?;
        }
    }
}
