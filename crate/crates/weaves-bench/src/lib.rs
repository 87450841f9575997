//! Timing harness for the flow-model comparison and the many-weave
//! scalability run.
//!
//! The comparison pits four ways of splitting one calibrated busy-loop
//! across n flows — a single-flow baseline, host OS threads, OS processes,
//! and strings over weaves — with every flow yielding at a fixed work
//! slice so the models pay a comparable number of switches. What matters
//! is the overhead relative to the baseline, never the absolute time;
//! records carry medians over repetitions, and each model rep is paired
//! with a fresh baseline rep because shared machines drift. For bounds
//! tighter than the drift itself, [`FlowOutcome`] also exposes minima:
//! contention only ever inflates a busy loop, so the fastest rep is the
//! cleanest estimate of what the machinery costs.
//!
//! The scalability side re-runs the sweep-kernel demo at large VM counts
//! and checks reproducibility by digest rather than by wall clock.

mod flows;
mod scale;

pub use flows::{
    delay_module, run_flow_experiment, run_model, FlowExperiment, FlowModel, FlowOutcome, Harness,
    ModelRun,
};
pub use scale::{run_scalability, ScaleParams, ScaleRecord};

use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("target must be a positive duration, got {0} ms")]
    InvalidTarget(f64),
    #[error("calibration did not converge: {0}")]
    Calibration(String),
    #[error("model `{0}` is not supported on this platform")]
    Unsupported(&'static str),
    #[error(transparent)]
    Runtime(#[from] weaves_core::RtError),
}

/// The busy-work unit: a loop-carried multiply-add chain the optimizer
/// cannot fold, finished through `black_box` so it cannot be discarded.
/// Never inlined: every caller — calibration, the baseline, guest code —
/// must execute the one machine-code copy, because separately inlined
/// copies of a loop this tight land on different alignments and run at
/// measurably different speeds.
#[inline(never)]
pub fn spin(iters: u64) -> u64 {
    let mut acc = 0x9e37_79b9_7f4a_7c15u64;
    for i in 0..iters {
        acc = acc.wrapping_mul(6364136223846793005).wrapping_add(i | 1);
    }
    std::hint::black_box(acc)
}

/// Wall time of one `spin(iters)` call, in milliseconds.
pub fn time_iterations(iters: u64) -> f64 {
    let t0 = Instant::now();
    spin(iters);
    t0.elapsed().as_secs_f64() * 1e3
}

pub(crate) fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    samples[samples.len() / 2]
}

/// Find an iteration count whose `spin` wall time is within 2% of
/// `target_ms`, as the median of five timings. The warmup gets the core to
/// steady speed before the rate is trusted; on a shared box the accepted
/// rate still ages as neighbors come and go, which is why overhead
/// comparisons re-measure their baseline instead of trusting this one.
pub fn calibrate_delay(target_ms: f64) -> Result<u64, BenchError> {
    if !(target_ms > 0.0) || !target_ms.is_finite() {
        return Err(BenchError::InvalidTarget(target_ms));
    }
    // Probe upward until the timer sees something substantial, then keep
    // the core busy a little longer so it reaches its steady speed.
    let mut probe: u64 = 10_000;
    let mut probe_ms = time_iterations(probe);
    while probe_ms < 20.0 {
        probe = probe.saturating_mul(4);
        probe_ms = time_iterations(probe);
        if probe == u64::MAX {
            return Err(BenchError::Calibration("machine too fast to probe".into()));
        }
    }
    for _ in 0..4 {
        probe_ms = time_iterations(probe);
    }
    let mut rate = probe as f64 / probe_ms; // iterations per millisecond
    for _ in 0..12 {
        let iters = ((rate * target_ms) as u64).max(1);
        // The fastest of five, not the median: contention only ever adds
        // time, so the minimum is the loop's true speed and two separate
        // calibrations agree even when their weather differs.
        let best = (0..5).map(|_| time_iterations(iters)).fold(f64::MAX, f64::min);
        if (best - target_ms).abs() / target_ms <= 0.02 {
            return Ok(iters);
        }
        rate = iters as f64 / best;
    }
    Err(BenchError::Calibration(format!(
        "no stable rate for {target_ms} ms after 12 attempts"
    )))
}

/// Each flow's share of the total: even split with the remainder assigned
/// to flow 0, so the summed work is exactly the baseline's.
pub fn flow_shares(total: u64, n_flows: u32) -> Vec<u64> {
    let n = n_flows.max(1) as u64;
    let share = total / n;
    let rem = total % n;
    (0..n).map(|i| if i == 0 { share + rem } else { share }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub model: FlowModel,
    pub n_flows: u32,
    pub total_wall_ms: f64,
    /// (total − baseline)/baseline × 100, medians over repetitions.
    pub overhead_pct: f64,
    pub reps: u32,
}

/// Render records as CSV, rows sorted by (model, n_flows). Same records in,
/// same bytes out.
pub fn emit_report(records: &[TimingRecord]) -> String {
    let mut rows: Vec<&TimingRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        a.model
            .label()
            .cmp(b.model.label())
            .then(a.n_flows.cmp(&b.n_flows))
    });
    let mut out = String::from("model,n_flows,total_wall_ms,overhead_pct,reps\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.3},{:.3},{}\n",
            r.model.label(),
            r.n_flows,
            r.total_wall_ms,
            r.overhead_pct,
            r.reps
        ));
    }
    out
}
