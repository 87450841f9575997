//! Microbenchmarks for the switch path itself: baton handoff between two
//! strings, and guest cell access through the indirection table.

use criterion::{criterion_group, criterion_main, Criterion};
use std::time::{Duration, Instant};

use weaves_core::{ModuleDef, Runtime, SchedulerPolicy, Value, ValueKind};

fn yielder() -> ModuleDef {
    ModuleDef::new("yielder").symbol("spun", ValueKind::Int).entry("main", |ctx| {
        let count = ctx.arg_int(0)?;
        for _ in 0..count {
            ctx.yield_now()?;
        }
        ctx.set("spun", Value::Int(count))
    })
}

/// Two strings ping-ponging the baton `iters` times each.
fn bench_handoff(c: &mut Criterion) {
    c.bench_function("baton-handoff", |b| {
        b.iter_custom(|iters| {
            let rt = Runtime::new();
            let m = rt.register_module(yielder()).unwrap();
            for i in 0..2 {
                let bead = rt.create_bead(m, None).unwrap();
                let weave = rt.define_weave(&[bead], None).unwrap();
                rt.spawn_string(weave, "yielder", "main", vec![Value::Int(iters as i64)], Some(&format!("p{i}")))
                    .unwrap();
            }
            let t0 = Instant::now();
            let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
            let elapsed = t0.elapsed();
            assert!(report.all_finished());
            rt.shutdown();
            // Two strings × iters yields ≈ 2·iters switches; report per
            // requested iteration.
            elapsed.checked_div(2).unwrap_or(Duration::ZERO)
        })
    });
}

fn reader() -> ModuleDef {
    ModuleDef::new("reader").symbol("n", ValueKind::Int).entry("main", |ctx| {
        let count = ctx.arg_int(0)?;
        let mut acc = 0i64;
        for _ in 0..count {
            acc = acc.wrapping_add(ctx.get_int("n")?);
        }
        ctx.set("n", Value::Int(acc))
    })
}

/// Guest reads of one cell, resolution included.
fn bench_cell_read(c: &mut Criterion) {
    c.bench_function("guest-cell-read", |b| {
        b.iter_custom(|iters| {
            let rt = Runtime::new();
            let m = rt.register_module(reader()).unwrap();
            let bead = rt.create_bead(m, None).unwrap();
            let weave = rt.define_weave(&[bead], None).unwrap();
            rt.spawn_string(weave, "reader", "main", vec![Value::Int(iters as i64)], None).unwrap();
            let t0 = Instant::now();
            let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
            let elapsed = t0.elapsed();
            assert!(report.all_finished());
            rt.shutdown();
            elapsed
        })
    });
}

criterion_group!(benches, bench_handoff, bench_cell_read);
criterion_main!(benches);
