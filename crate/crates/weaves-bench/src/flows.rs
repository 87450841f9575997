//! The four flow models under one work contract: `total_iters` of busy
//! work split across n flows ([`flow_shares`]), every flow pausing at each
//! `slice_iters` boundary to offer a switch. The boundary op is the only
//! thing that differs — nothing, `thread::yield_now`, `sched_yield`, or a
//! string yield — so the measured spread is switch machinery, not work.

use std::sync::{Arc, Barrier};
use std::time::Instant;

use weaves_core::{ModuleDef, Runtime, SchedulerPolicy, Value, ValueKind};

use crate::{calibrate_delay, flow_shares, median, spin, BenchError, TimingRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowModel {
    Baseline,
    HostThreads,
    Processes,
    Weaves,
}

impl FlowModel {
    pub const ALL: [FlowModel; 4] =
        [FlowModel::Baseline, FlowModel::HostThreads, FlowModel::Processes, FlowModel::Weaves];

    pub fn label(self) -> &'static str {
        match self {
            FlowModel::Baseline => "baseline",
            FlowModel::HostThreads => "host-threads",
            FlowModel::Processes => "processes",
            FlowModel::Weaves => "weaves",
        }
    }

    pub fn from_label(label: &str) -> Option<FlowModel> {
        FlowModel::ALL.into_iter().find(|m| m.label() == label)
    }
}

/// A calibrated workload: the total iteration budget and the slice between
/// switch offers (one millisecond's worth).
#[derive(Debug, Clone, Copy)]
pub struct FlowExperiment {
    pub total_iters: u64,
    pub slice_iters: u64,
}

impl FlowExperiment {
    pub fn calibrate(target_ms: f64) -> Result<Self, BenchError> {
        let total_iters = calibrate_delay(target_ms)?;
        let slice_iters = ((total_iters as f64 / target_ms) as u64).max(1);
        Ok(FlowExperiment { total_iters, slice_iters })
    }
}

/// One timed run: what it cost to stand the flows up, and what the work
/// phase took. Creation is a startup cost, so it is visible on its own.
/// The `_cpu_` twins are the same phases on the process CPU clock — a
/// hypervisor stretches wall time invisibly, but switch machinery burns
/// CPU, so CPU time is where small overheads stay measurable.
#[derive(Debug, Clone, Copy)]
pub struct ModelRun {
    pub setup_ms: f64,
    pub work_ms: f64,
    pub setup_cpu_ms: f64,
    pub work_cpu_ms: f64,
}

impl ModelRun {
    pub fn total_ms(&self) -> f64 {
        self.setup_ms + self.work_ms
    }

    pub fn total_cpu_ms(&self) -> f64 {
        self.setup_cpu_ms + self.work_cpu_ms
    }
}

#[cfg(unix)]
fn process_cpu_ms() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    ts.tv_sec as f64 * 1e3 + ts.tv_nsec as f64 / 1e6
}

#[cfg(not(unix))]
fn process_cpu_ms() -> f64 {
    // No portable process clock: fall back to wall time.
    use std::sync::OnceLock;
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_secs_f64() * 1e3
}

/// CPU consumed by reaped children (user + system), for the process model.
#[cfg(unix)]
fn children_cpu_ms() -> f64 {
    let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
    unsafe { libc::getrusage(libc::RUSAGE_CHILDREN, &mut ru) };
    let tv = |t: libc::timeval| t.tv_sec as f64 * 1e3 + t.tv_usec as f64 / 1e3;
    tv(ru.ru_utime) + tv(ru.ru_stime)
}

fn sliced_spin(share: u64, slice: u64, mut boundary: impl FnMut()) {
    let mut left = share;
    while left > 0 {
        let chunk = left.min(slice);
        spin(chunk);
        left -= chunk;
        if left > 0 {
            boundary();
        }
    }
}

/// The guest-side delay loop: args are `[share, slice]`, the boundary op is
/// a string yield.
pub fn delay_module() -> ModuleDef {
    ModuleDef::new("delay").symbol("done", ValueKind::Int).entry("main", |ctx| {
        let share = ctx.arg_int(0)? as u64;
        let slice = ctx.arg_int(1)? as u64;
        let mut left = share;
        while left > 0 {
            let chunk = left.min(slice);
            spin(chunk);
            left -= chunk;
            if left > 0 {
                ctx.yield_now()?;
            }
        }
        ctx.set("done", Value::Int(1))
    })
}

fn run_baseline(exp: &FlowExperiment) -> ModelRun {
    // The lone flow still runs on a freshly spawned thread: a busy loop's
    // wall rate differs measurably between a long-lived thread and a new
    // one on this box, so the reference must get its flow the same way
    // every model does.
    let share = exp.total_iters;
    let slice = exp.slice_iters;
    let start = Arc::new(Barrier::new(2));
    let cpu0 = process_cpu_ms();
    let t0 = Instant::now();
    let handle = {
        let start = Arc::clone(&start);
        std::thread::spawn(move || {
            start.wait();
            sliced_spin(share, slice, || {});
        })
    };
    let setup_ms = t0.elapsed().as_secs_f64() * 1e3;
    let setup_cpu_ms = process_cpu_ms() - cpu0;
    let t1 = Instant::now();
    let cpu1 = process_cpu_ms();
    start.wait();
    handle.join().expect("baseline flow panicked");
    ModelRun {
        setup_ms,
        work_ms: t1.elapsed().as_secs_f64() * 1e3,
        setup_cpu_ms,
        work_cpu_ms: process_cpu_ms() - cpu1,
    }
}

fn run_host_threads(n_flows: u32, exp: &FlowExperiment) -> ModelRun {
    let shares = flow_shares(exp.total_iters, n_flows);
    let slice = exp.slice_iters;
    let start = Arc::new(Barrier::new(shares.len() + 1));
    let cpu0 = process_cpu_ms();
    let t0 = Instant::now();
    let handles: Vec<_> = shares
        .into_iter()
        .map(|share| {
            let start = Arc::clone(&start);
            std::thread::spawn(move || {
                start.wait();
                sliced_spin(share, slice, std::thread::yield_now);
            })
        })
        .collect();
    let setup_ms = t0.elapsed().as_secs_f64() * 1e3;
    let setup_cpu_ms = process_cpu_ms() - cpu0;
    let t1 = Instant::now();
    let cpu1 = process_cpu_ms();
    start.wait();
    for h in handles {
        h.join().expect("flow thread panicked");
    }
    ModelRun {
        setup_ms,
        work_ms: t1.elapsed().as_secs_f64() * 1e3,
        setup_cpu_ms,
        work_cpu_ms: process_cpu_ms() - cpu1,
    }
}

#[cfg(unix)]
fn run_processes(n_flows: u32, exp: &FlowExperiment) -> Result<ModelRun, BenchError> {
    let shares = flow_shares(exp.total_iters, n_flows);
    let slice = exp.slice_iters;
    // A child's CPU lands in RUSAGE_CHILDREN when it is reaped, so the
    // children's share of the work phase is the delta across the waits.
    let kids0 = children_cpu_ms();
    let cpu0 = process_cpu_ms();
    let t0 = Instant::now();
    let mut pids = Vec::with_capacity(shares.len());
    for share in shares {
        // The child only spins and yields — no allocation, no locks — so
        // forking from a threaded test runner is safe.
        match unsafe { libc::fork() } {
            -1 => return Err(BenchError::Unsupported("processes (fork failed)")),
            0 => {
                sliced_spin(share, slice, || unsafe {
                    libc::sched_yield();
                });
                unsafe { libc::_exit(0) }
            }
            pid => pids.push(pid),
        }
    }
    let setup_ms = t0.elapsed().as_secs_f64() * 1e3;
    let setup_cpu_ms = process_cpu_ms() - cpu0;
    let t1 = Instant::now();
    let cpu1 = process_cpu_ms();
    for pid in pids {
        let mut status = 0;
        unsafe { libc::waitpid(pid, &mut status, 0) };
    }
    // Children start spinning the moment they exist, so part of the work
    // overlaps the remaining forks; total_ms() is still the honest
    // end-to-end figure.
    Ok(ModelRun {
        setup_ms,
        work_ms: t1.elapsed().as_secs_f64() * 1e3,
        setup_cpu_ms,
        work_cpu_ms: (process_cpu_ms() - cpu1) + (children_cpu_ms() - kids0),
    })
}

#[cfg(not(unix))]
fn run_processes(_n_flows: u32, _exp: &FlowExperiment) -> Result<ModelRun, BenchError> {
    Err(BenchError::Unsupported("processes"))
}

fn run_weaves(n_flows: u32, exp: &FlowExperiment) -> Result<ModelRun, BenchError> {
    let shares = flow_shares(exp.total_iters, n_flows);
    let cpu0 = process_cpu_ms();
    let t0 = Instant::now();
    let rt = Runtime::new();
    let delay = rt.register_module(delay_module())?;
    for (i, share) in shares.into_iter().enumerate() {
        let bead = rt.create_bead(delay, None)?;
        let weave = rt.define_weave(&[bead], None)?;
        let args = vec![Value::Int(share as i64), Value::Int(exp.slice_iters as i64)];
        rt.spawn_string(weave, "delay", "main", args, Some(&format!("flow{i}")))?;
    }
    // String threads otherwise spawn lazily at first grant; the host-thread
    // model pays its creation in setup, so this model must too.
    rt.prestart_strings()?;
    let setup_ms = t0.elapsed().as_secs_f64() * 1e3;
    let setup_cpu_ms = process_cpu_ms() - cpu0;
    let t1 = Instant::now();
    let cpu1 = process_cpu_ms();
    let report = rt.run(SchedulerPolicy::Cooperative)?;
    let work_ms = t1.elapsed().as_secs_f64() * 1e3;
    let work_cpu_ms = process_cpu_ms() - cpu1;
    rt.shutdown();
    if !report.all_finished() {
        return Err(BenchError::Runtime(weaves_core::RtError::Guest(format!(
            "delay flows failed: {:?}",
            report.failed()
        ))));
    }
    Ok(ModelRun { setup_ms, work_ms, setup_cpu_ms, work_cpu_ms })
}

/// One timed execution of a model. Flow counts other than 1 are meaningless
/// for the baseline and rejected.
pub fn run_model(model: FlowModel, n_flows: u32, exp: &FlowExperiment) -> Result<ModelRun, BenchError> {
    match model {
        FlowModel::Baseline => {
            assert_eq!(n_flows, 1, "the baseline is single-flow by definition");
            Ok(run_baseline(exp))
        }
        FlowModel::HostThreads => Ok(run_host_threads(n_flows, exp)),
        FlowModel::Processes => run_processes(n_flows, exp),
        FlowModel::Weaves => run_weaves(n_flows, exp),
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub record: TimingRecord,
    /// Median creation cost, reported apart from the steady-state loop.
    pub setup_ms: f64,
    /// The interleaved baseline median this record's overhead is against.
    pub baseline_ms: f64,
    /// Fastest total and fastest interleaved baseline. On a shared box,
    /// scheduler steal inflates samples but never deflates them, so the
    /// minima estimate the uncontaminated cost; comparisons that need to
    /// resolve fractions of a percent use these instead of the medians.
    pub min_total_ms: f64,
    pub min_baseline_ms: f64,
    /// The same run on the process CPU clock (children included for the
    /// process model). A host hypervisor can dilate the wall clock by tens
    /// of percent without the guest ever seeing why; CPU time never
    /// inflates that way, so these carry the fine-grained comparisons.
    pub min_cpu_total_ms: f64,
    pub min_cpu_work_ms: f64,
    pub min_cpu_baseline_ms: f64,
    pub min_cpu_baseline_work_ms: f64,
}

impl FlowOutcome {
    /// Overhead computed from the wall-clock minima — the steal-robust
    /// counterpart of `record.overhead_pct`.
    pub fn min_overhead_pct(&self) -> f64 {
        (self.min_total_ms - self.min_baseline_ms) / self.min_baseline_ms * 100.0
    }

    /// End-to-end overhead on the CPU clock: creation plus work, against
    /// the paired single-flow reference.
    pub fn cpu_overhead_pct(&self) -> f64 {
        (self.min_cpu_total_ms - self.min_cpu_baseline_ms) / self.min_cpu_baseline_ms * 100.0
    }

    /// Steady-state overhead on the CPU clock: work phase only, creation
    /// excluded on both sides.
    pub fn cpu_work_overhead_pct(&self) -> f64 {
        (self.min_cpu_work_ms - self.min_cpu_baseline_work_ms) / self.min_cpu_baseline_work_ms
            * 100.0
    }
}

/// A calibrated workload. Machine speed drifts on a shared box, so every
/// [`Harness::record`] interleaves a fresh baseline rep with each model
/// rep and computes overhead against its own paired baseline median — a
/// reference taken minutes earlier would bake the drift into the numbers.
pub struct Harness {
    pub exp: FlowExperiment,
    /// Baseline median observed at construction; a reference point for
    /// reports, not the denominator of later overheads.
    pub baseline_ms: f64,
    pub reps: u32,
}

impl Harness {
    pub fn new(target_ms: f64, reps: u32) -> Result<Self, BenchError> {
        let reps = reps.max(1);
        let exp = FlowExperiment::calibrate(target_ms)?;
        let mut samples: Vec<f64> =
            (0..reps).map(|_| run_baseline(&exp).total_ms()).collect();
        let baseline_ms = median(&mut samples);
        Ok(Harness { exp, baseline_ms, reps })
    }

    pub fn record(&self, model: FlowModel, n_flows: u32) -> Result<FlowOutcome, BenchError> {
        let min_of = |xs: &[f64]| xs.iter().copied().fold(f64::MAX, f64::min);
        let mut totals = Vec::with_capacity(self.reps as usize);
        let mut setups = Vec::with_capacity(self.reps as usize);
        let mut cpu_totals = Vec::with_capacity(self.reps as usize);
        let mut cpu_works = Vec::with_capacity(self.reps as usize);
        let mut baselines = Vec::with_capacity(self.reps as usize);
        let mut base_cpu_totals = Vec::with_capacity(self.reps as usize);
        let mut base_cpu_works = Vec::with_capacity(self.reps as usize);
        for _ in 0..self.reps {
            let base = run_baseline(&self.exp);
            baselines.push(base.total_ms());
            base_cpu_totals.push(base.total_cpu_ms());
            base_cpu_works.push(base.work_cpu_ms);
            if model == FlowModel::Baseline {
                continue;
            }
            let run = run_model(model, n_flows, &self.exp)?;
            totals.push(run.total_ms());
            setups.push(run.setup_ms);
            cpu_totals.push(run.total_cpu_ms());
            cpu_works.push(run.work_cpu_ms);
        }
        let min_baseline_ms = min_of(&baselines);
        let min_cpu_baseline_ms = min_of(&base_cpu_totals);
        let min_cpu_baseline_work_ms = min_of(&base_cpu_works);
        let baseline_ms = median(&mut baselines);
        if model == FlowModel::Baseline {
            // The reference itself: zero overhead by definition.
            return Ok(FlowOutcome {
                record: TimingRecord {
                    model,
                    n_flows: 1,
                    total_wall_ms: baseline_ms,
                    overhead_pct: 0.0,
                    reps: self.reps,
                },
                setup_ms: 0.0,
                baseline_ms,
                min_total_ms: min_baseline_ms,
                min_baseline_ms,
                min_cpu_total_ms: min_cpu_baseline_ms,
                min_cpu_work_ms: min_cpu_baseline_work_ms,
                min_cpu_baseline_ms,
                min_cpu_baseline_work_ms,
            });
        }
        let min_total_ms = min_of(&totals);
        let total_wall_ms = median(&mut totals);
        Ok(FlowOutcome {
            record: TimingRecord {
                model,
                n_flows,
                total_wall_ms,
                overhead_pct: (total_wall_ms - baseline_ms) / baseline_ms * 100.0,
                reps: self.reps,
            },
            setup_ms: median(&mut setups),
            baseline_ms,
            min_total_ms,
            min_baseline_ms,
            min_cpu_total_ms: min_of(&cpu_totals),
            min_cpu_work_ms: min_of(&cpu_works),
            min_cpu_baseline_ms,
            min_cpu_baseline_work_ms,
        })
    }
}

/// Self-contained variant: calibrate, measure the baseline, then the model.
pub fn run_flow_experiment(
    model: FlowModel,
    n_flows: u32,
    target_ms: f64,
    reps: u32,
) -> Result<TimingRecord, BenchError> {
    let harness = Harness::new(target_ms, reps)?;
    Ok(harness.record(model, n_flows)?.record)
}
