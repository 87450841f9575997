//! Scheduler behavior: handoff order, preemption, the class rule, rewiring
//! at switch boundaries, and serial equivalence on disjoint tapestries.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use weaves_core::{
    ModuleDef, RewireCommand, RtError, Runtime, SchedulerPolicy, SplitMix64, StringStatus, Value,
    ValueKind, WeaveId,
};

type Trace = Arc<Mutex<Vec<i64>>>;

fn new_trace() -> Trace {
    Arc::new(Mutex::new(Vec::new()))
}

fn taken(trace: &Trace) -> Vec<i64> {
    trace.lock().unwrap().clone()
}

/// A module whose single string appends its id to `trace` once per round,
/// yielding between rounds.
fn round_logger(name: &str, rounds: usize, trace: &Trace) -> ModuleDef {
    let t = trace.clone();
    ModuleDef::new(name).symbol("pad", ValueKind::Int).entry("main", move |ctx| {
        for _ in 0..rounds {
            t.lock().unwrap().push(ctx.string_id() as i64);
            ctx.yield_now()?;
        }
        Ok(())
    })
}

/// One private bead + weave + string for `module`, returning the weave.
fn solo_string(rt: &Runtime, module: &str, entry: &str, args: Vec<Value>) -> WeaveId {
    let m = rt.module_id(module).unwrap();
    let b = rt.create_bead(m, None).unwrap();
    let w = rt.define_weave(&[b], None).unwrap();
    rt.spawn_string(w, module, entry, args, None).unwrap();
    w
}

#[test]
fn empty_run_returns_empty_report() {
    let rt = Runtime::new();
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert!(report.strings.is_empty());
    assert!(report.all_finished());
    rt.shutdown();
}

#[test]
fn single_string_runs_to_completion() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("cnt").symbol("count", ValueKind::Int).entry("bump", |ctx| {
            let n = ctx.arg_int(0)?;
            for _ in 0..n {
                let c = ctx.get_int("count")?;
                ctx.set("count", Value::Int(c + 1))?;
            }
            Ok(())
        }),
    )
    .unwrap();
    let w = solo_string(&rt, "cnt", "bump", vec![Value::Int(10)]);
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert!(report.all_finished());
    assert_eq!(rt.read(w, "cnt", "count").unwrap(), Value::Int(10));
    rt.shutdown();
}

#[test]
fn cooperative_yield_is_fifo_round_robin() {
    let trace = new_trace();
    let rt = Runtime::new();
    rt.register_module(round_logger("worker", 4, &trace)).unwrap();
    for _ in 0..3 {
        solo_string(&rt, "worker", "main", vec![]);
    }
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert!(report.all_finished());
    let want: Vec<i64> = (0..4).flat_map(|_| 0..3).collect();
    assert_eq!(taken(&trace), want);
    rt.shutdown();
}

#[test]
fn yield_alone_resumes_immediately() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("loner").symbol("pad", ValueKind::Int).entry("main", |ctx| {
            for _ in 0..100 {
                ctx.yield_now()?;
            }
            Ok(())
        }),
    )
    .unwrap();
    solo_string(&rt, "loner", "main", vec![]);
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert!(report.all_finished());
    // The only handoff is the initial dispatch; self-resumption is free.
    assert_eq!(report.total_switches, 1);
    rt.shutdown();
}

#[test]
fn string_ids_are_dense_and_stable() {
    let trace = new_trace();
    let rt = Runtime::new();
    let t = trace.clone();
    rt.register_module(
        ModuleDef::new("ident").symbol("pad", ValueKind::Int).entry("main", move |ctx| {
            for _ in 0..3 {
                t.lock().unwrap().push(ctx.string_id() as i64);
                ctx.yield_now()?;
            }
            Ok(())
        }),
    )
    .unwrap();
    let mut spawned = Vec::new();
    for _ in 0..4 {
        let m = rt.module_id("ident").unwrap();
        let b = rt.create_bead(m, None).unwrap();
        let w = rt.define_weave(&[b], None).unwrap();
        spawned.push(rt.spawn_string(w, "ident", "main", vec![], None).unwrap());
    }
    assert_eq!(spawned.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    rt.run(SchedulerPolicy::Cooperative).unwrap();
    let mut seen: BTreeMap<i64, usize> = BTreeMap::new();
    for id in taken(&trace) {
        *seen.entry(id).or_default() += 1;
    }
    assert_eq!(seen.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert!(seen.values().all(|&n| n == 3));
    rt.shutdown();
}

#[test]
fn private_beads_do_not_share_state() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("cnt").symbol("count", ValueKind::Int).entry("bump", |ctx| {
            for _ in 0..25 {
                let c = ctx.get_int("count")?;
                ctx.set("count", Value::Int(c + 1))?;
                ctx.yield_now()?;
            }
            Ok(())
        }),
    )
    .unwrap();
    let w0 = solo_string(&rt, "cnt", "bump", vec![]);
    let w1 = solo_string(&rt, "cnt", "bump", vec![]);
    rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert_eq!(rt.read(w0, "cnt", "count").unwrap(), Value::Int(25));
    assert_eq!(rt.read(w1, "cnt", "count").unwrap(), Value::Int(25));
    rt.shutdown();
}

#[test]
fn shared_bead_aliases_state_across_weaves() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("cnt").symbol("count", ValueKind::Int).entry("bump", |ctx| {
            for _ in 0..25 {
                let c = ctx.get_int("count")?;
                ctx.set("count", Value::Int(c + 1))?;
                ctx.yield_now()?;
            }
            Ok(())
        }),
    )
    .unwrap();
    let m = rt.module_id("cnt").unwrap();
    let b = rt.create_bead(m, None).unwrap();
    let w0 = rt.define_weave(&[b], None).unwrap();
    let w1 = rt.define_weave(&[b], None).unwrap();
    rt.spawn_string(w0, "cnt", "bump", vec![], None).unwrap();
    rt.spawn_string(w1, "cnt", "bump", vec![], None).unwrap();
    rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert_eq!(rt.read(w0, "cnt", "count").unwrap(), Value::Int(50));
    assert_eq!(rt.read(w1, "cnt", "count").unwrap(), Value::Int(50));
    rt.shutdown();
}

#[test]
fn equivalence_classes_follow_shared_beads() {
    let rt = Runtime::new();
    for name in ["solver", "med_a", "med_b"] {
        rt.register_module(
            ModuleDef::new(name).symbol("pad", ValueKind::Int).entry("main", |_| Ok(())),
        )
        .unwrap();
    }
    let solver = rt.module_id("solver").unwrap();
    let med_a = rt.module_id("med_a").unwrap();
    let med_b = rt.module_id("med_b").unwrap();
    let ma = rt.create_bead(med_a, None).unwrap();
    let mb = rt.create_bead(med_b, None).unwrap();
    for med in [ma, ma, mb, mb] {
        let s = rt.create_bead(solver, None).unwrap();
        let w = rt.define_weave(&[s, med], None).unwrap();
        rt.spawn_string(w, "solver", "main", vec![], None).unwrap();
    }
    assert_eq!(rt.equivalence_classes(), vec![vec![0, 1], vec![2, 3]]);
    rt.shutdown();
}

#[test]
fn chain_sharing_merges_classes() {
    let rt = Runtime::new();
    for name in ["mx", "my", "priv"] {
        rt.register_module(
            ModuleDef::new(name).symbol("pad", ValueKind::Int).entry("main", |_| Ok(())),
        )
        .unwrap();
    }
    let mx = rt.create_bead(rt.module_id("mx").unwrap(), None).unwrap();
    let my = rt.create_bead(rt.module_id("my").unwrap(), None).unwrap();
    let pa = rt.create_bead(rt.module_id("priv").unwrap(), None).unwrap();
    let pc = rt.create_bead(rt.module_id("priv").unwrap(), None).unwrap();
    let wa = rt.define_weave(&[mx, pa], None).unwrap();
    let wb = rt.define_weave(&[mx, my], None).unwrap();
    let wc = rt.define_weave(&[my, pc], None).unwrap();
    rt.spawn_string(wa, "priv", "main", vec![], None).unwrap();
    rt.spawn_string(wb, "mx", "main", vec![], None).unwrap();
    rt.spawn_string(wc, "priv", "main", vec![], None).unwrap();
    assert_eq!(rt.equivalence_classes(), vec![vec![0, 1, 2]]);

    let disjoint = Runtime::new();
    disjoint
        .register_module(
            ModuleDef::new("solo").symbol("pad", ValueKind::Int).entry("main", |_| Ok(())),
        )
        .unwrap();
    for _ in 0..3 {
        solo_string(&disjoint, "solo", "main", vec![]);
    }
    assert_eq!(disjoint.equivalence_classes(), vec![vec![0], vec![1], vec![2]]);
    rt.shutdown();
    disjoint.shutdown();
}

#[test]
fn preemption_forces_switches_and_is_reproducible() {
    let run_once = || {
        let rt = Runtime::new();
        rt.register_module(
            ModuleDef::new("cnt").symbol("count", ValueKind::Int).entry("bump", |ctx| {
                for _ in 0..25 {
                    let c = ctx.get_int("count")?;
                    ctx.set("count", Value::Int(c + 1))?;
                }
                Ok(())
            }),
        )
        .unwrap();
        let w0 = solo_string(&rt, "cnt", "bump", vec![]);
        let w1 = solo_string(&rt, "cnt", "bump", vec![]);
        let report = rt.run(SchedulerPolicy::Preemptive { quantum: 5 }).unwrap();
        assert!(report.all_finished());
        assert_eq!(rt.read(w0, "cnt", "count").unwrap(), Value::Int(25));
        assert_eq!(rt.read(w1, "cnt", "count").unwrap(), Value::Int(25));
        let switches: Vec<u64> = report.strings.iter().map(|s| s.switches).collect();
        rt.shutdown();
        (report.total_switches, switches)
    };
    let (total_a, per_a) = run_once();
    let (total_b, per_b) = run_once();
    // 50 guest calls per string at quantum 5 forces at least 9 handoffs each.
    assert!(total_a >= 18, "expected forced switches, saw {total_a}");
    assert_eq!(total_a, total_b);
    assert_eq!(per_a, per_b);
}

#[test]
fn class_rule_suppresses_same_class_switch_inside_shared_bead() {
    let build = |trace: &Trace| {
        let rt = Runtime::new();
        let t = trace.clone();
        rt.register_module(
            ModuleDef::new("med").symbol("pad", ValueKind::Int).entry("visit", move |ctx| {
                let id = ctx.string_id() as i64;
                t.lock().unwrap().push(id * 10);
                ctx.yield_now()?;
                t.lock().unwrap().push(id * 10 + 1);
                Ok(())
            }),
        )
        .unwrap();
        let t = trace.clone();
        rt.register_module(
            ModuleDef::new("solo").symbol("pad", ValueKind::Int).entry("main", move |ctx| {
                t.lock().unwrap().push(ctx.string_id() as i64 * 10 + 5);
                Ok(())
            }),
        )
        .unwrap();
        let med = rt.create_bead(rt.module_id("med").unwrap(), None).unwrap();
        let w0 = rt.define_weave(&[med], None).unwrap();
        let w1 = rt.define_weave(&[med], None).unwrap();
        rt.spawn_string(w0, "med", "visit", vec![], None).unwrap();
        rt.spawn_string(w1, "med", "visit", vec![], None).unwrap();
        solo_string(&rt, "solo", "main", vec![]);
        rt
    };

    // Preemptive: string 0 suspends inside the shared non-reentrant bead, so
    // its classmate (string 1) may not run until 0 leaves; string 2 may.
    let trace = new_trace();
    let rt = build(&trace);
    assert_eq!(rt.equivalence_classes(), vec![vec![0, 1], vec![2]]);
    rt.run(SchedulerPolicy::Preemptive { quantum: 1_000_000 }).unwrap();
    assert_eq!(taken(&trace), vec![0, 25, 1, 10, 11]);
    rt.shutdown();

    // Cooperative: plain FIFO, classmates interleave freely.
    let trace = new_trace();
    let rt = build(&trace);
    rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert_eq!(taken(&trace), vec![0, 10, 25, 1, 11]);
    rt.shutdown();
}

#[test]
fn reentrant_shared_bead_permits_same_class_switches() {
    let trace = new_trace();
    let rt = Runtime::new();
    let t = trace.clone();
    rt.register_module(
        ModuleDef::new("med")
            .reentrant()
            .symbol("pad", ValueKind::Int)
            .entry("visit", move |ctx| {
                let id = ctx.string_id() as i64;
                t.lock().unwrap().push(id * 10);
                ctx.yield_now()?;
                t.lock().unwrap().push(id * 10 + 1);
                Ok(())
            }),
    )
    .unwrap();
    let med = rt.create_bead(rt.module_id("med").unwrap(), None).unwrap();
    let w0 = rt.define_weave(&[med], None).unwrap();
    let w1 = rt.define_weave(&[med], None).unwrap();
    rt.spawn_string(w0, "med", "visit", vec![], None).unwrap();
    rt.spawn_string(w1, "med", "visit", vec![], None).unwrap();
    rt.run(SchedulerPolicy::Preemptive { quantum: 1_000_000 }).unwrap();
    assert_eq!(taken(&trace), vec![0, 10, 1, 11]);
    rt.shutdown();
}

#[test]
fn guest_panic_marks_string_failed_without_poisoning_the_run() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("bad").symbol("pad", ValueKind::Int).entry("main", |_| {
            panic!("guest exploded");
        }),
    )
    .unwrap();
    rt.register_module(
        ModuleDef::new("good").symbol("count", ValueKind::Int).entry("main", |ctx| {
            ctx.set("count", Value::Int(7))?;
            Ok(())
        }),
    )
    .unwrap();
    solo_string(&rt, "bad", "main", vec![]);
    let w = solo_string(&rt, "good", "main", vec![]);
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert_eq!(report.failed().iter().map(|s| s.id).collect::<Vec<_>>(), vec![0]);
    assert_eq!(rt.read(w, "good", "count").unwrap(), Value::Int(7));
    let failure = rt.string_failure(weaves_core::StringId(0)).unwrap().unwrap();
    assert!(failure.to_string().contains("guest exploded"), "got: {failure}");
    assert!(matches!(rt.string_status(weaves_core::StringId(1)), Ok(StringStatus::Finished)));
    rt.shutdown();
}

#[test]
fn guest_error_is_recorded_as_failure() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("sour").symbol("pad", ValueKind::Int).entry("main", |_| {
            Err(RtError::Guest("declined".into()))
        }),
    )
    .unwrap();
    solo_string(&rt, "sour", "main", vec![]);
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert_eq!(report.failed().iter().map(|s| s.id).collect::<Vec<_>>(), vec![0]);
    let failure = rt.string_failure(weaves_core::StringId(0)).unwrap().unwrap();
    assert!(failure.to_string().contains("declined"));
    rt.shutdown();
}

#[test]
fn spawn_during_run_is_applied_at_a_switch_boundary() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("gate")
            .symbol("flag", ValueKind::Int)
            .entry("wait", |ctx| {
                for _ in 0..1_000_000 {
                    if ctx.get_int("flag")? == 1 {
                        return Ok(());
                    }
                    ctx.yield_now()?;
                }
                Err(RtError::Guest("flag never flipped".into()))
            })
            .entry("open", |ctx| ctx.set("flag", Value::Int(1))),
    )
    .unwrap();
    let m = rt.module_id("gate").unwrap();
    let b = rt.create_bead(m, None).unwrap();
    let w = rt.define_weave(&[b], None).unwrap();
    rt.spawn_string(w, "gate", "wait", vec![], None).unwrap();

    let rt2 = rt.clone();
    let spawner = std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(20));
        rt2.spawn_string(w, "gate", "open", vec![], None).unwrap()
    });
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    let late = spawner.join().unwrap();
    assert!(report.all_finished());
    assert_eq!(late.0, 1);
    assert_eq!(report.strings.len(), 2);
    rt.shutdown();
}

#[test]
fn remove_string_retires_it_at_the_next_boundary() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("spin").symbol("pad", ValueKind::Int).entry("forever", |ctx| {
            loop {
                ctx.yield_now()?;
            }
        }),
    )
    .unwrap();
    rt.register_module(
        ModuleDef::new("brief").symbol("pad", ValueKind::Int).entry("main", |ctx| {
            for _ in 0..5 {
                ctx.yield_now()?;
            }
            Ok(())
        }),
    )
    .unwrap();
    let victim_weave = solo_string(&rt, "spin", "forever", vec![]);
    let _ = victim_weave;
    solo_string(&rt, "brief", "main", vec![]);

    let rt2 = rt.clone();
    let killer = std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(20));
        rt2.apply_rewire(RewireCommand::RemoveString { id: 0 }).unwrap();
    });
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    killer.join().unwrap();
    assert!(matches!(
        rt.string_status(weaves_core::StringId(0)),
        Err(RtError::Core(weaves_core::CoreError::StringRemoved(0)))
    ));
    assert!(matches!(rt.string_status(weaves_core::StringId(1)), Ok(StringStatus::Finished)));
    assert_eq!(report.strings.len(), 1);
    rt.shutdown();
}

#[test]
fn pause_freezes_progress_until_resume() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("cnt").symbol("count", ValueKind::Int).entry("bump", |ctx| {
            for _ in 0..200 {
                let c = ctx.get_int("count")?;
                ctx.set("count", Value::Int(c + 1))?;
                ctx.yield_now()?;
            }
            Ok(())
        }),
    )
    .unwrap();
    let w = solo_string(&rt, "cnt", "bump", vec![]);
    let rt2 = rt.clone();
    let controller = std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(10));
        rt2.pause().unwrap();
        let c1 = rt2.read(w, "cnt", "count").unwrap();
        std::thread::sleep(std::time::Duration::from_millis(30));
        let c2 = rt2.read(w, "cnt", "count").unwrap();
        rt2.resume().unwrap();
        (c1, c2)
    });
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    let (c1, c2) = controller.join().unwrap();
    assert_eq!(c1, c2, "counter advanced while paused");
    assert!(report.all_finished());
    assert_eq!(rt.read(w, "cnt", "count").unwrap(), Value::Int(200));
    rt.shutdown();
}

#[test]
fn shutdown_mid_run_unwinds_all_strings() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("spin").symbol("pad", ValueKind::Int).entry("forever", |ctx| {
            loop {
                ctx.yield_now()?;
            }
        }),
    )
    .unwrap();
    for _ in 0..3 {
        solo_string(&rt, "spin", "forever", vec![]);
    }
    let rt2 = rt.clone();
    let stopper = std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(20));
        rt2.shutdown();
    });
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    stopper.join().unwrap();
    assert!(!report.all_finished());
    rt.shutdown();
}

/// Serial equivalence: when strings touch disjoint cells, any interleaving
/// (cooperative or preempted at any quantum) must leave every namespace
/// exactly as running the strings one-by-one would.
#[test]
fn serial_equivalence_on_disjoint_tapestries() {
    fn final_states(seed: u64, mode: Option<SchedulerPolicy>) -> Vec<BTreeMap<(String, String), Value>> {
        let mut rng = SplitMix64::new(seed);
        let n = 2 + rng.below(3) as usize;
        let specs: Vec<(u64, u64)> =
            (0..n).map(|_| (5 + rng.below(20), 1 + rng.below(4))).collect();
        let rt = Runtime::new();
        for (i, &(steps, stride)) in specs.iter().enumerate() {
            rt.register_module(
                ModuleDef::new(&format!("m{i}")).symbol("acc", ValueKind::Int).entry(
                    "main",
                    move |ctx| {
                        for k in 0..steps {
                            let a = ctx.get_int("acc")?;
                            ctx.set("acc", Value::Int(a.wrapping_mul(7).wrapping_add(k as i64)))?;
                            if k % stride == 0 {
                                ctx.yield_now()?;
                            }
                        }
                        Ok(())
                    },
                ),
            )
            .unwrap();
        }
        let mut weaves = Vec::new();
        match mode {
            Some(policy) => {
                for i in 0..n {
                    weaves.push(solo_string(&rt, &format!("m{i}"), "main", vec![]));
                }
                rt.set_switch_verification(true);
                let report = rt.run(policy).unwrap();
                assert!(report.all_finished());
            }
            None => {
                // The oracle: each string runs to completion alone.
                for i in 0..n {
                    weaves.push(solo_string(&rt, &format!("m{i}"), "main", vec![]));
                    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
                    assert!(report.all_finished());
                }
            }
        }
        let out = weaves.iter().map(|&w| rt.snapshot(w).unwrap()).collect();
        rt.shutdown();
        out
    }

    for seed in 0..12u64 {
        let oracle = final_states(seed, None);
        let coop = final_states(seed, Some(SchedulerPolicy::Cooperative));
        assert_eq!(coop, oracle, "cooperative diverged from serial oracle at seed {seed}");
        let quantum = 1 + SplitMix64::new(seed ^ 0xabcdef).below(7);
        let pre = final_states(seed, Some(SchedulerPolicy::Preemptive { quantum: quantum as u32 }));
        assert_eq!(pre, oracle, "preemptive diverged from serial oracle at seed {seed}");
    }
}

#[test]
fn rewire_add_bead_weave_string_by_name_during_run() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("gate")
            .symbol("flag", ValueKind::Int)
            .entry("wait", |ctx| {
                for _ in 0..1_000_000 {
                    if ctx.get_int("flag")? == 1 {
                        return Ok(());
                    }
                    ctx.yield_now()?;
                }
                Err(RtError::Guest("flag never flipped".into()))
            })
            .entry("noop", |_| Ok(())),
    )
    .unwrap();
    rt.register_module(
        ModuleDef::new("toggler").symbol("pad", ValueKind::Int).entry("open", |ctx| {
            ctx.set_in("gate", "flag", Value::Int(1))
        }),
    )
    .unwrap();
    let m = rt.module_id("gate").unwrap();
    let b = rt.create_bead(m, Some("gate_bead")).unwrap();
    let w = rt.define_weave(&[b], Some("front")).unwrap();
    rt.spawn_string(w, "gate", "wait", vec![], None).unwrap();
    let gen_before = rt.generation();

    let rt2 = rt.clone();
    let wirer = std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(15));
        rt2.apply_rewire(RewireCommand::AddBead {
            name: "tog".into(),
            module: "toggler".into(),
        })
        .unwrap();
        rt2.apply_rewire(RewireCommand::AddWeave {
            name: "back".into(),
            beads: vec!["tog".into(), "gate_bead".into()],
        })
        .unwrap();
        rt2.apply_rewire(RewireCommand::AddString {
            name: Some("opener".into()),
            weave: "back".into(),
            module: "toggler".into(),
            entry: "open".into(),
            args: vec![],
        })
        .unwrap();
    });
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    wirer.join().unwrap();
    assert!(report.all_finished(), "report: {report:?}");
    assert!(rt.generation() > gen_before);
    assert!(rt.weave_id("back").is_ok());
    assert_eq!(rt.read(w, "gate", "flag").unwrap(), Value::Int(1));
    rt.shutdown();
}

#[test]
fn cross_module_call_runs_in_callee_bead() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("lib").symbol("stash", ValueKind::Int).entry("store", |ctx| {
            ctx.set("stash", Value::Int(41))
        }),
    )
    .unwrap();
    rt.register_module(
        ModuleDef::new("app").symbol("local", ValueKind::Int).entry("main", |ctx| {
            ctx.call("lib", "store")?;
            // After returning, unqualified access is the caller's module again.
            ctx.set("local", Value::Int(1))?;
            let stash = ctx.get_in("lib", "stash")?.as_int().unwrap();
            ctx.set("local", Value::Int(stash + 1))
        }),
    )
    .unwrap();
    let lib = rt.create_bead(rt.module_id("lib").unwrap(), None).unwrap();
    let app = rt.create_bead(rt.module_id("app").unwrap(), None).unwrap();
    let w = rt.define_weave(&[lib, app], None).unwrap();
    rt.spawn_string(w, "app", "main", vec![], None).unwrap();
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    assert!(report.all_finished(), "{:?}", report.deadlocked);
    assert_eq!(rt.read(w, "lib", "stash").unwrap(), Value::Int(41));
    assert_eq!(rt.read(w, "app", "local").unwrap(), Value::Int(42));
    rt.shutdown();
}

#[test]
fn run_report_csv_has_one_row_per_string() {
    let rt = Runtime::new();
    rt.register_module(
        ModuleDef::new("quick").symbol("pad", ValueKind::Int).entry("main", |_| Ok(())),
    )
    .unwrap();
    for _ in 0..3 {
        solo_string(&rt, "quick", "main", vec![]);
    }
    let report = rt.run(SchedulerPolicy::Cooperative).unwrap();
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "string_id,status,switches,guest_calls,wall_ms");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,finished,"));
    rt.shutdown();
}
