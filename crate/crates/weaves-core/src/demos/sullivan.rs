//! The "hello, world" counting benchmark: `p` endpoints, each in its own
//! weave with a private counter bead, all sharing the fabric. Every round,
//! each endpoint draws `n1` (a destination) and `n2` (a copy count) from
//! its own derived generator and fires `n2` greetings at `n1` without
//! waiting. Deliveries run as callback activations on the receiver's
//! string, which bump the receiver's private `count` cell.
//!
//! The numbers are checkable three ways, and the tests use all of them:
//!
//! * conservation — Σ counts must equal Σ n2 exactly, since the fabric
//!   neither drops nor duplicates;
//! * replay — the draws come from [`SplitMix64::derive`](crate::rng::SplitMix64::derive)`(seed, rank)`,
//!   so a loop over the same generators predicts every rank's expected
//!   count without running the tapestry;
//! * the event log — callback records grouped by destination must agree
//!   with the count cells.
//!
//! Each weave also holds a distinct sentinel written *before* the handler
//! is registered. Every activation re-reads it through the receiver's own
//! weave; a handler resolving cells through the wrong namespace would trip
//! the mismatch counter immediately.

use crate::namespace::CellId;
use crate::report::RunReport;
use crate::rng::SplitMix64;
use crate::runtime::{Ctx, Runtime, SchedulerPolicy};
use crate::value::{Value, ValueKind};
use crate::{ModuleDef, RtError};

/// Sentinel base: rank r's weave holds `SENTINEL_BASE + r`.
pub const SENTINEL_BASE: i64 = 1_000_000;

#[derive(Debug, Clone, Copy)]
pub struct SullivanParams {
    /// Endpoint count; at least 2.
    pub p: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Each round sends `n2` copies with `n2` uniform in `0..=n2_max`.
    pub n2_max: u64,
}

impl Default for SullivanParams {
    fn default() -> Self {
        SullivanParams { p: 4, rounds: 1000, seed: 0x5eed, n2_max: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct SullivanReport {
    /// Final `count` cell per rank.
    pub counts: Vec<i64>,
    /// Messages each rank sent (Σ of its own n2 draws).
    pub sent: Vec<i64>,
    pub total_sent: i64,
    /// Activations that saw their own weave's sentinel.
    pub checked: i64,
    /// Activations that saw anything else; zero on a correct runtime.
    pub mismatches: i64,
    /// Resolved `count` cells, one per rank — for alias checks.
    pub count_cells: Vec<CellId>,
    pub event_csv: String,
    pub run: RunReport,
}

/// What the draws alone predict: per-rank received counts and sent totals.
/// This touches no runtime machinery, only the generator contract.
pub fn replay_draws(params: &SullivanParams) -> (Vec<i64>, Vec<i64>) {
    let mut counts = vec![0i64; params.p];
    let mut sent = vec![0i64; params.p];
    for rank in 0..params.p {
        let mut rng = SplitMix64::derive(params.seed, rank as u64);
        for _ in 0..params.rounds {
            let n1 = rng.below(params.p as u64) as usize;
            let n2 = rng.below(params.n2_max + 1) as i64;
            counts[n1] += n2;
            sent[rank] += n2;
        }
    }
    (counts, sent)
}

pub fn counter_module() -> ModuleDef {
    ModuleDef::new("counter")
        .symbol("count", ValueKind::Int)
        .symbol("sentinel", ValueKind::Int)
        .symbol("checked", ValueKind::Int)
        .symbol("mismatch", ValueKind::Int)
        .symbol("sent", ValueKind::Int)
        .entry("main", |ctx| counter_main(ctx))
        .entry("on_message", |ctx| on_message(ctx))
}

fn counter_main(ctx: &Ctx) -> Result<(), RtError> {
    let rounds = ctx.arg_int(0)?;
    let seed = ctx.arg_int(1)? as u64;
    let n2_max = ctx.arg_int(2)? as u64;
    let rank = ctx.rank()?;
    let p = ctx.size()? as u64;

    // The sentinel must exist before any activation can run, i.e. before
    // the handler is registered.
    ctx.set("sentinel", Value::Int(SENTINEL_BASE + rank as i64))?;
    ctx.register_callback("counter", "on_message")?;
    // Nobody sends until everybody listens.
    ctx.barrier()?;

    let mut rng = SplitMix64::derive(seed, rank as u64);
    let mut sent: i64 = 0;
    for _ in 0..rounds {
        let n1 = rng.below(p) as u32;
        let n2 = rng.below(n2_max + 1);
        for _ in 0..n2 {
            ctx.send(n1, 0, Value::Bytes(b"hello, world".to_vec()))?;
        }
        sent += n2 as i64;
        // A switch boundary per round lets our own pending activations run
        // instead of piling up behind the send loop.
        ctx.yield_now()?;
    }
    ctx.set("sent", Value::Int(sent))?;
    // The closing barrier releases only at quiescence, so every greeting is
    // delivered and counted before any string passes this line.
    ctx.barrier()?;
    Ok(())
}

fn on_message(ctx: &Ctx) -> Result<(), RtError> {
    ctx.set("count", Value::Int(ctx.get_int("count")? + 1))?;
    let expected = SENTINEL_BASE + ctx.rank()? as i64;
    if ctx.get_int("sentinel")? == expected {
        ctx.set("checked", Value::Int(ctx.get_int("checked")? + 1))
    } else {
        ctx.set("mismatch", Value::Int(ctx.get_int("mismatch")? + 1))
    }
}

pub fn run_sullivan(params: &SullivanParams, policy: SchedulerPolicy) -> Result<SullivanReport, RtError> {
    if params.p < 2 {
        return Err(RtError::Guest(format!("sullivan needs p >= 2, got {}", params.p)));
    }
    let rt = Runtime::new();
    let counter = rt.register_module(counter_module())?;
    let emulator = rt.register_module(super::emulator_module())?;
    let shared = rt.create_bead(emulator, Some("emu"))?;
    let args = vec![
        Value::Int(params.rounds as i64),
        Value::Int(params.seed as i64),
        Value::Int(params.n2_max as i64),
    ];
    let mut strings = Vec::with_capacity(params.p);
    let mut weaves = Vec::with_capacity(params.p);
    for rank in 0..params.p {
        let bead = rt.create_bead(counter, Some(&format!("counter{rank}")))?;
        let weave = rt.define_weave(&[bead, shared], Some(&format!("endpoint{rank}")))?;
        strings.push(rt.spawn_string(weave, "counter", "main", args.clone(), Some(&format!("ep{rank}")))?);
        weaves.push(weave);
    }
    rt.fabric_init(&strings)?;
    let run = rt.run(policy)?;
    if !run.all_finished() {
        rt.shutdown();
        return Err(RtError::Guest(format!("endpoints failed: {:?}", run.failed())));
    }

    let cell = |w, s| rt.read(w, "counter", s);
    let mut counts = Vec::new();
    let mut sent = Vec::new();
    let mut checked = 0;
    let mut mismatches = 0;
    let mut count_cells = Vec::new();
    for &w in &weaves {
        counts.push(cell(w, "count")?.as_int().unwrap_or(0));
        sent.push(cell(w, "sent")?.as_int().unwrap_or(0));
        checked += cell(w, "checked")?.as_int().unwrap_or(0);
        mismatches += cell(w, "mismatch")?.as_int().unwrap_or(0);
        count_cells.push(rt.resolve(w, "counter", "count")?);
    }
    let report = SullivanReport {
        total_sent: sent.iter().sum(),
        counts,
        sent,
        checked,
        mismatches,
        count_cells,
        event_csv: rt.event_log_csv(),
        run,
    };
    rt.shutdown();
    Ok(report)
}
