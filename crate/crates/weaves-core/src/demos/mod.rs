//! Three demonstration applications, each exercising a different sharing
//! shape of the runtime:
//!
//! * [`sweep`] — a wavefront stencil kernel decomposed into per-VM slabs:
//!   all state private, neighbours exchange boundary planes over the
//!   fabric. Monolithic and decomposed runs agree bit for bit.
//! * [`sullivan`] — an asynchronous counting benchmark: every endpoint
//!   scatters randomly many messages to randomly chosen peers and counts
//!   arrivals in callbacks. Checks conservation and namespace isolation.
//! * [`collab`] — two boundary-value solvers coupled through one shared
//!   mediator bead performing interface relaxation; the canonical
//!   selective-sharing tapestry.
//!
//! Each demo builds its tapestry programmatically and also publishes its
//! module definitions through a [`ModuleLibrary`](crate::ModuleLibrary), so
//! the same applications can be assembled from tapestry files.

pub mod collab;
pub mod sullivan;
pub mod sweep;

/// One library holding every demo module, for file-driven composition.
pub fn demo_library() -> crate::ModuleLibrary {
    let mut lib = crate::ModuleLibrary::new();
    for def in [
        collab::solver_module(),
        collab::mediator_module(),
        sullivan::counter_module(),
        sweep::kernel_module(),
        emulator_module(),
    ] {
        lib.insert(def);
    }
    lib
}

/// The structural stand-in for a message-passing library instance: one bead
/// of this module is woven into every VM's weave, tying the endpoints into
/// a single equivalence class without carrying any per-VM state.
pub fn emulator_module() -> crate::ModuleDef {
    crate::ModuleDef::new("emulator").symbol("ticks", crate::ValueKind::Int)
}

/// Variable-length real vectors live in `bytes` cells (array cells have a
/// fixed schema length); little-endian f64, same as the digest input.
pub fn encode_f64s(xs: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}
