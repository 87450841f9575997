//! Sweep-kernel checks. The anchor is a test-local single-grid wavefront
//! over a nested 3-D array — same arithmetic expression per cell, entirely
//! different code and layout — and every decomposed run must match it bit
//! for bit, not within a tolerance.

use weaves_core::demos::sweep::{
    reference_field, run_sweep, run_sweep_with_latency, SweepParams,
};
use weaves_core::{SchedulerPolicy, SplitMix64};

/// Test-local oracle on a nested `[x][y][z]` layout.
fn oracle(params: &SweepParams) -> Vec<f64> {
    let (nx, ny, nz) = params.grid;
    let mut u = vec![vec![vec![0.0f64; nz]; ny]; nx];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let g = ((x * ny + y) * nz + z) as u64;
                u[x][y][z] = SplitMix64::derive(params.seed, g).next_f64();
            }
        }
    }
    for _ in 0..params.sweeps {
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let xm = if x == 0 { 0.0 } else { u[x - 1][y][z] };
                    let ym = if y == 0 { 0.0 } else { u[x][y - 1][z] };
                    let zm = if z == 0 { 0.0 } else { u[x][y][z - 1] };
                    u[x][y][z] = 0.25 * (u[x][y][z] + xm + ym + zm);
                }
            }
        }
        for x in (0..nx).rev() {
            for y in (0..ny).rev() {
                for z in (0..nz).rev() {
                    let xp = if x + 1 == nx { 0.0 } else { u[x + 1][y][z] };
                    let yp = if y + 1 == ny { 0.0 } else { u[x][y + 1][z] };
                    let zp = if z + 1 == nz { 0.0 } else { u[x][y][z + 1] };
                    u[x][y][z] = 0.25 * (u[x][y][z] + xp + yp + zp);
                }
            }
        }
    }
    u.into_iter().flatten().flatten().collect()
}

fn assert_bits_equal(a: &[f64], b: &[f64], label: &str) {
    assert_eq!(a.len(), b.len(), "{label}: length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert_eq!(x.to_bits(), y.to_bits(), "{label}: cell {i}: {x} vs {y}");
    }
}

#[test]
fn crate_reference_matches_the_test_oracle() {
    let params = SweepParams::default();
    assert_bits_equal(&oracle(&params), &reference_field(&params), "reference");
    let field = reference_field(&params);
    assert!(field.iter().all(|v| v.is_finite()));
}

#[test]
fn decomposed_runs_are_bit_equal_to_monolithic() {
    let params = SweepParams::default();
    let expected = oracle(&params);
    for n_vms in [1usize, 2, 4, 8] {
        let p = SweepParams { n_vms, ..params };
        let report = run_sweep(&p, SchedulerPolicy::Cooperative).unwrap();
        assert_bits_equal(&expected, &report.field, &format!("n_vms={n_vms}"));
    }
}

#[test]
fn message_volume_is_exactly_two_ghost_planes_per_cut_per_sweep() {
    for n_vms in [1usize, 2, 4, 8] {
        let p = SweepParams { n_vms, ..SweepParams::default() };
        let report = run_sweep(&p, SchedulerPolicy::Cooperative).unwrap();
        let expected = 2 * (n_vms as u64 - 1) * p.sweeps as u64;
        assert_eq!(report.messages_sent, expected, "n_vms={n_vms}");
    }
}

#[test]
fn fixed_seed_runs_produce_identical_digests() {
    let p = SweepParams { n_vms: 8, ..SweepParams::default() };
    let first = run_sweep(&p, SchedulerPolicy::Cooperative).unwrap();
    for _ in 0..2 {
        let again = run_sweep(&p, SchedulerPolicy::Cooperative).unwrap();
        assert_eq!(first.digest, again.digest);
        assert_eq!(first.per_vm_digests, again.per_vm_digests);
    }
}

/// Uneven extents: the remainder goes to the last slab, and the stitching
/// must still be exact.
#[test]
fn remainder_slabs_still_match() {
    let p = SweepParams { grid: (13, 6, 5), n_vms: 4, sweeps: 3, seed: 7 };
    let report = run_sweep(&p, SchedulerPolicy::Cooperative).unwrap();
    assert_bits_equal(&oracle(&p), &report.field, "13/4 split");
}

/// One x-plane per VM is the thinnest legal slab.
#[test]
fn single_plane_slabs_work() {
    let p = SweepParams { grid: (8, 4, 4), n_vms: 8, sweeps: 2, seed: 11 };
    let report = run_sweep(&p, SchedulerPolicy::Cooperative).unwrap();
    assert_bits_equal(&oracle(&p), &report.field, "plane-wide slabs");
}

/// Neither preemption nor virtual message latency may change the data:
/// the ghost-plane protocol fixes the dataflow order regardless of how
/// the scheduler interleaves the strings.
#[test]
fn schedule_and_latency_do_not_perturb_results() {
    let p = SweepParams { grid: (16, 8, 8), n_vms: 4, sweeps: 3, seed: 23 };
    let expected = oracle(&p);
    let pre = run_sweep(&p, SchedulerPolicy::Preemptive { quantum: 2 }).unwrap();
    assert_bits_equal(&expected, &pre.field, "preemptive");
    let lat = run_sweep_with_latency(&p, SchedulerPolicy::Cooperative, 5).unwrap();
    assert_bits_equal(&expected, &lat.field, "latency 5");
}
