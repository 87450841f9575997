//! Scalability: the sweep-kernel demo pushed to large VM counts in one
//! process. Wall clock on a shared machine is weather; the contract is
//! that repeated fixed-seed runs agree bit for bit, so the record carries
//! digests per run alongside the times.

use std::time::Instant;

use weaves_core::demos::sweep::{run_sweep, SweepParams};
use weaves_core::SchedulerPolicy;

use crate::{median, BenchError};

#[derive(Debug, Clone, Copy)]
pub struct ScaleParams {
    pub n_weaves: usize,
    /// Plane extents; the x axis grows with the weave count (weak scaling),
    /// never below the stock demo grid.
    pub ny: usize,
    pub nz: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub runs: usize,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams { n_weaves: 1024, ny: 16, nz: 16, sweeps: 4, seed: 0x5eed, runs: 3 }
    }
}

impl ScaleParams {
    pub fn sweep_params(&self) -> SweepParams {
        SweepParams {
            grid: (self.n_weaves.max(32), self.ny, self.nz),
            n_vms: self.n_weaves,
            sweeps: self.sweeps,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaleRecord {
    pub n_weaves: usize,
    pub wall_ms: Vec<f64>,
    pub digests: Vec<u64>,
    pub median_wall_ms: f64,
    /// True when every run produced the same digest.
    pub identical: bool,
}

pub fn run_scalability(params: &ScaleParams) -> Result<ScaleRecord, BenchError> {
    let sweep = params.sweep_params();
    let runs = params.runs.max(1);
    let mut wall_ms = Vec::with_capacity(runs);
    let mut digests = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t0 = Instant::now();
        let report = run_sweep(&sweep, SchedulerPolicy::Cooperative)?;
        wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        digests.push(report.digest);
    }
    let mut sorted = wall_ms.clone();
    Ok(ScaleRecord {
        n_weaves: params.n_weaves,
        identical: digests.windows(2).all(|w| w[0] == w[1]),
        median_wall_ms: median(&mut sorted),
        wall_ms,
        digests,
    })
}
