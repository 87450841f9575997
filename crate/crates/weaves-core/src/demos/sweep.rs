//! Distributed sweep kernel: a 3-D Gauss–Seidel wavefront split into slabs
//! along x, one slab per "VM" (here, one string in its own weave). Each
//! sweep is a forward pass ordered so every cell reads already-updated
//! x−1/y−1/z−1 neighbours, then a mirrored backward pass over x+1/y+1/z+1.
//! Slab boundaries are stitched with ghost-plane messages over the fabric:
//! the forward pass flows rank 0 → rank n−1 on tag 0, the backward pass
//! flows back on tag 1.
//!
//! Because the per-cell arithmetic and its order are identical to a single
//! full-grid pass, the decomposed run reproduces the monolithic field
//! *bit for bit* at any VM count — the check is `==` on f64 bits, not a
//! tolerance. [`reference_field`] is the independent single-loop oracle.
//!
//! Every weave also carries a bead of the `emulator` module. The kernel
//! never touches it; it exists so the weaves share structural state the
//! way a device-emulator bead would be shared, which keeps all kernel
//! strings in one equivalence class.

use crate::demos::{decode_f64s, encode_f64s};
use crate::fabric::Message;
use crate::report::RunReport;
use crate::rng::{fnv1a_f64, SplitMix64};
use crate::runtime::{Ctx, Runtime, SchedulerPolicy};
use crate::value::{Value, ValueKind};
use crate::{ModuleDef, RtError};

#[derive(Debug, Clone, Copy)]
pub struct SweepParams {
    /// Grid extents (nx, ny, nz); nx is the decomposed axis.
    pub grid: (usize, usize, usize),
    pub n_vms: usize,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams { grid: (32, 16, 16), n_vms: 4, sweeps: 4, seed: 0x5eed }
    }
}

impl SweepParams {
    fn validate(&self) -> Result<(), RtError> {
        let (nx, ny, nz) = self.grid;
        let ok = nx >= 1 && ny >= 1 && nz >= 1 && self.n_vms >= 1 && self.n_vms <= nx;
        if ok {
            Ok(())
        } else {
            Err(RtError::Guest(format!(
                "invalid sweep params: grid={:?} n_vms={}",
                self.grid, self.n_vms
            )))
        }
    }

    /// Slab extent along x for `rank`: even split, remainder to the last.
    fn slab(&self, rank: usize) -> (usize, usize) {
        let base = self.grid.0 / self.n_vms;
        let x0 = rank * base;
        let lx = if rank + 1 == self.n_vms { self.grid.0 - x0 } else { base };
        (x0, lx)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    /// Slabs concatenated back into the full nx·ny·nz field, x-major.
    pub field: Vec<f64>,
    /// FNV-1a digest of each rank's slab, in rank order.
    pub per_vm_digests: Vec<u64>,
    /// Digest of the whole assembled field.
    pub digest: u64,
    pub messages_sent: u64,
    pub run: RunReport,
}

/// Initial condition: one value per global cell, independent of the
/// decomposition. Each cell gets its own derived generator so slab owners
/// can reproduce exactly their cells without streaming the others.
fn initial_value(seed: u64, global_idx: u64) -> f64 {
    SplitMix64::derive(seed, global_idx).next_f64()
}

/// Single-loop reference: the whole grid swept in one pass order. The
/// decomposed kernel must reproduce this exactly.
pub fn reference_field(params: &SweepParams) -> Vec<f64> {
    let (nx, ny, nz) = params.grid;
    let idx = |x: usize, y: usize, z: usize| (x * ny + y) * nz + z;
    let mut u: Vec<f64> = (0..nx * ny * nz).map(|i| initial_value(params.seed, i as u64)).collect();
    for _ in 0..params.sweeps {
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let xm = if x == 0 { 0.0 } else { u[idx(x - 1, y, z)] };
                    let ym = if y == 0 { 0.0 } else { u[idx(x, y - 1, z)] };
                    let zm = if z == 0 { 0.0 } else { u[idx(x, y, z - 1)] };
                    u[idx(x, y, z)] = 0.25 * (u[idx(x, y, z)] + xm + ym + zm);
                }
            }
        }
        for x in (0..nx).rev() {
            for y in (0..ny).rev() {
                for z in (0..nz).rev() {
                    let xp = if x + 1 == nx { 0.0 } else { u[idx(x + 1, y, z)] };
                    let yp = if y + 1 == ny { 0.0 } else { u[idx(x, y + 1, z)] };
                    let zp = if z + 1 == nz { 0.0 } else { u[idx(x, y, z + 1)] };
                    u[idx(x, y, z)] = 0.25 * (u[idx(x, y, z)] + xp + yp + zp);
                }
            }
        }
    }
    u
}

pub fn kernel_module() -> ModuleDef {
    ModuleDef::new("kernel")
        .symbol("slab", ValueKind::Bytes)
        .entry("main", |ctx| kernel_main(ctx))
}

fn kernel_main(ctx: &Ctx) -> Result<(), RtError> {
    let rank = ctx.rank()? as usize;
    let n_vms = ctx.arg_int(0)? as usize;
    let ny = ctx.arg_int(2)? as usize;
    let nz = ctx.arg_int(3)? as usize;
    let x0 = ctx.arg_int(4)? as usize;
    let lx = ctx.arg_int(5)? as usize;
    let sweeps = ctx.arg_int(6)?;
    let seed = ctx.arg_int(7)? as u64;
    let plane = ny * nz;
    let idx = |x: usize, y: usize, z: usize| (x * ny + y) * nz + z;

    let mut u: Vec<f64> = (0..lx * plane)
        .map(|i| initial_value(seed, (x0 * plane + i) as u64))
        .collect();

    fn ghost_plane(msg: Message, plane: usize) -> Result<Vec<f64>, RtError> {
        match msg.payload {
            Value::RealArray(p) if p.len() == plane => Ok(p),
            other => Err(RtError::Guest(format!("bad ghost plane payload: {}", other.kind_name()))),
        }
    }

    for _ in 0..sweeps {
        // Forward: wait for the updated top plane of the slab below, sweep
        // ascending, pass our updated top plane up.
        let below: Option<Vec<f64>> =
            if rank > 0 { Some(ghost_plane(ctx.recv(Some(0))?, plane)?) } else { None };
        for x in 0..lx {
            for y in 0..ny {
                for z in 0..nz {
                    let xm = if x > 0 {
                        u[idx(x - 1, y, z)]
                    } else {
                        below.as_ref().map_or(0.0, |g| g[y * nz + z])
                    };
                    let ym = if y == 0 { 0.0 } else { u[idx(x, y - 1, z)] };
                    let zm = if z == 0 { 0.0 } else { u[idx(x, y, z - 1)] };
                    u[idx(x, y, z)] = 0.25 * (u[idx(x, y, z)] + xm + ym + zm);
                }
            }
        }
        if rank + 1 < n_vms {
            let top = u[(lx - 1) * plane..].to_vec();
            ctx.send(rank as u32 + 1, 0, Value::RealArray(top))?;
        }

        // Backward: the mirror image, flowing down on tag 1.
        let above: Option<Vec<f64>> =
            if rank + 1 < n_vms { Some(ghost_plane(ctx.recv(Some(1))?, plane)?) } else { None };
        for x in (0..lx).rev() {
            for y in (0..ny).rev() {
                for z in (0..nz).rev() {
                    let xp = if x + 1 < lx {
                        u[idx(x + 1, y, z)]
                    } else {
                        above.as_ref().map_or(0.0, |g| g[y * nz + z])
                    };
                    let yp = if y + 1 == ny { 0.0 } else { u[idx(x, y + 1, z)] };
                    let zp = if z + 1 == nz { 0.0 } else { u[idx(x, y, z + 1)] };
                    u[idx(x, y, z)] = 0.25 * (u[idx(x, y, z)] + xp + yp + zp);
                }
            }
        }
        if rank > 0 {
            let bottom = u[..plane].to_vec();
            ctx.send(rank as u32 - 1, 1, Value::RealArray(bottom))?;
        }
    }

    ctx.set("slab", Value::Bytes(encode_f64s(&u)))
}

pub fn run_sweep(params: &SweepParams, policy: SchedulerPolicy) -> Result<SweepReport, RtError> {
    run_sweep_with_latency(params, policy, 0)
}

pub fn run_sweep_with_latency(
    params: &SweepParams,
    policy: SchedulerPolicy,
    latency_ticks: u64,
) -> Result<SweepReport, RtError> {
    params.validate()?;
    let (nx, ny, nz) = params.grid;
    let rt = Runtime::new();
    rt.set_virtual_latency(latency_ticks);
    let kernel = rt.register_module(kernel_module())?;
    let emulator = rt.register_module(super::emulator_module())?;
    let shared = rt.create_bead(emulator, Some("emu"))?;
    let mut strings = Vec::with_capacity(params.n_vms);
    for rank in 0..params.n_vms {
        let (x0, lx) = params.slab(rank);
        let bead = rt.create_bead(kernel, Some(&format!("slab{rank}")))?;
        let weave = rt.define_weave(&[bead, shared], Some(&format!("vm{rank}")))?;
        let args = vec![
            Value::Int(params.n_vms as i64),
            Value::Int(nx as i64),
            Value::Int(ny as i64),
            Value::Int(nz as i64),
            Value::Int(x0 as i64),
            Value::Int(lx as i64),
            Value::Int(params.sweeps as i64),
            Value::Int(params.seed as i64),
        ];
        strings.push(rt.spawn_string(weave, "kernel", "main", args, Some(&format!("vm{rank}")))?);
    }
    rt.fabric_init(&strings)?;
    let run = rt.run(policy)?;
    if !run.all_finished() {
        rt.shutdown();
        return Err(RtError::Guest(format!("kernel strings failed: {:?}", run.failed())));
    }

    let mut field = Vec::with_capacity(nx * ny * nz);
    let mut per_vm_digests = Vec::with_capacity(params.n_vms);
    for rank in 0..params.n_vms {
        let weave = rt.weave_id(&format!("vm{rank}"))?;
        let slab = decode_f64s(rt.read(weave, "kernel", "slab")?.as_bytes().unwrap_or(&[]));
        let (_, lx) = params.slab(rank);
        if slab.len() != lx * ny * nz {
            rt.shutdown();
            return Err(RtError::Guest(format!("rank {rank} slab has wrong extent")));
        }
        per_vm_digests.push(fnv1a_f64(&slab));
        field.extend_from_slice(&slab);
    }
    let digest = fnv1a_f64(&field);
    let messages_sent = rt.event_counts().sends;
    rt.shutdown();
    Ok(SweepReport { field, per_vm_digests, digest, messages_sent, run })
}
