//! Harness self-checks, kept at small targets so the suite stays quick.
//! Timing-sensitive tests share one lock — concurrent busy-loops on the
//! same box would measure each other.

use std::sync::{Mutex, MutexGuard, PoisonError};

use weaves_bench::{
    calibrate_delay, emit_report, flow_shares, run_scalability, time_iterations, FlowModel,
    Harness, ScaleParams, TimingRecord,
};
use weaves_core::demos::sweep::{reference_field, SweepParams};
use weaves_core::fnv1a_f64;

static STOPWATCH: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    STOPWATCH.lock().unwrap_or_else(PoisonError::into_inner)
}

#[test]
fn degenerate_targets_are_rejected() {
    assert!(calibrate_delay(0.0).is_err());
    assert!(calibrate_delay(-5.0).is_err());
    assert!(calibrate_delay(f64::NAN).is_err());
}

#[test]
fn calibration_retimes_within_tolerance() {
    let _lock = serial();
    let target = 150.0;
    let iters = calibrate_delay(target).unwrap();
    // Re-time on the steal-robust statistic: scheduler contention inflates
    // samples only, so the fastest of nine is the honest speed. The box's
    // effective clock rate still drifts several percent between stretches,
    // which is why the harness re-anchors against a paired baseline every
    // rep; calibration only needs to land in the right neighbourhood.
    let best = (0..9).map(|_| time_iterations(iters)).fold(f64::MAX, f64::min);
    assert!(
        best <= target * 1.12 && best >= target * 0.88,
        "fastest re-timing {best:.1} ms for {target} ms target"
    );
}

#[test]
fn doubling_the_target_doubles_the_iterations() {
    let _lock = serial();
    let one = calibrate_delay(100.0).unwrap() as f64;
    let two = calibrate_delay(200.0).unwrap() as f64;
    let ratio = two / one;
    assert!((ratio - 2.0).abs() / 2.0 <= 0.05, "ratio {ratio}");
}

#[test]
fn shares_conserve_work_with_remainder_on_flow_zero() {
    for (total, n) in [(1000u64, 3u32), (7, 4), (128, 128), (5, 1), (1_000_003, 16)] {
        let shares = flow_shares(total, n);
        assert_eq!(shares.len(), n as usize);
        assert_eq!(shares.iter().sum::<u64>(), total, "total={total} n={n}");
        assert_eq!(shares[0], total / n as u64 + total % n as u64);
        for &s in &shares[1..] {
            assert_eq!(s, total / n as u64);
        }
    }
}

#[test]
fn report_rows_are_sorted_and_deterministic() {
    let rec = |model, n_flows, ms| TimingRecord {
        model,
        n_flows,
        total_wall_ms: ms,
        overhead_pct: 0.5,
        reps: 3,
    };
    let one = emit_report(&[rec(FlowModel::Weaves, 4, 101.0)]);
    assert_eq!(one.lines().count(), 2);
    assert!(one.starts_with("model,n_flows,total_wall_ms,overhead_pct,reps\n"));

    let records = vec![
        rec(FlowModel::Weaves, 16, 130.0),
        rec(FlowModel::Baseline, 1, 100.0),
        rec(FlowModel::Weaves, 2, 110.0),
        rec(FlowModel::HostThreads, 2, 111.0),
    ];
    let csv = emit_report(&records);
    let order: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().0)
        .collect();
    assert_eq!(order, ["baseline", "host-threads", "weaves", "weaves"]);
    let again = emit_report(&records);
    assert_eq!(csv, again);
}

#[test]
fn single_weave_flow_stays_near_the_baseline() {
    let _lock = serial();
    let harness = Harness::new(150.0, 5).unwrap();
    let outcome = harness.record(FlowModel::Weaves, 1).unwrap();
    // The CPU clock is immune to the wall-time weather on this box; a lone
    // string doing the same spin should cost within a few percent of the
    // plain loop.
    let overhead = outcome.cpu_overhead_pct();
    assert!(overhead.abs() < 5.0, "single-flow CPU overhead {overhead:.2}%");
    assert!(outcome.setup_ms < harness.baseline_ms, "setup should be a sliver of the work");
}

#[test]
fn weaves_track_host_threads_at_small_scale() {
    let _lock = serial();
    let harness = Harness::new(150.0, 5).unwrap();
    let threads = harness.record(FlowModel::HostThreads, 4).unwrap();
    let weaves = harness.record(FlowModel::Weaves, 4).unwrap();
    let gap = (weaves.cpu_overhead_pct() - threads.cpu_overhead_pct()).abs();
    // The acceptance gate runs this comparison at a 2 s target with a
    // 2-point bound; at 150 ms (and in debug builds) the same machinery
    // gets more headroom.
    assert!(
        gap < 6.0,
        "weaves {:.2}% vs threads {:.2}% (CPU)",
        weaves.cpu_overhead_pct(),
        threads.cpu_overhead_pct()
    );
}

/// Per-switch cost must not grow with the number of weaves: the whole point
/// of the indirection table is that 128 namespaces switch as cheaply as 2.
/// Setup (spawning 128 string threads) is a real but one-time cost, so the
/// comparison is on the steady-state work phase.
#[test]
fn switch_cost_is_flat_in_the_weave_count() {
    let _lock = serial();
    let harness = Harness::new(150.0, 5).unwrap();
    let few = harness.record(FlowModel::Weaves, 2).unwrap().cpu_work_overhead_pct();
    let many = harness.record(FlowModel::Weaves, 128).unwrap().cpu_work_overhead_pct();
    // If a switch cost anything proportional to the weave count, 128
    // weaves would blow straight past this bound; both scales sitting
    // within noise of zero is the flatness claim.
    assert!(
        few.abs() < 6.0 && many.abs() < 6.0,
        "work-phase overhead {few:.2}% at 2 weaves, {many:.2}% at 128"
    );
}

#[test]
fn scalability_run_is_reproducible_and_anchored() {
    let _lock = serial();
    // n_weaves=1 must reproduce the plain reference digest.
    let single = run_scalability(&ScaleParams { n_weaves: 1, runs: 1, ..ScaleParams::default() }).unwrap();
    let reference = fnv1a_f64(&reference_field(&SweepParams {
        grid: (32, 16, 16),
        n_vms: 1,
        sweeps: 4,
        seed: 0x5eed,
    }));
    assert_eq!(single.digests, vec![reference]);

    // A mid-sized run: three times, one digest.
    let record = run_scalability(&ScaleParams { n_weaves: 64, runs: 3, ..ScaleParams::default() }).unwrap();
    assert!(record.identical, "digests diverged: {:?}", record.digests);
    assert_eq!(record.wall_ms.len(), 3);
    assert!(record.median_wall_ms > 0.0);
}
