//! `weaves demo`: the canned compositions with every parameter surfaced
//! as a flag. Stdout carries only deterministic results — `key,value` CSV
//! rows by default, one JSON object per line with `--format json` — so
//! identical invocations produce identical output.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;
use weaves_core::demos::collab::{run_collab, run_fig2, CollabProblem, Forcing};
use weaves_core::demos::sullivan::{run_sullivan, SullivanParams};
use weaves_core::demos::sweep::{run_sweep_with_latency, SweepParams};

use crate::run::parse_policy;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
pub enum DemoCmd {
    /// Slab-decomposed 3-D wavefront relaxation; prints result digests.
    Sweep(SweepArgs),
    /// Message-scattering counters with callback delivery and sentinels.
    Sullivan(SullivanArgs),
    /// Two boundary-value solvers relaxing a shared interface value.
    Collab(CollabArgs),
    /// Two independent solver pairs in one tapestry (four weaves).
    Fig2(Fig2Args),
}

pub fn exec(cmd: DemoCmd) -> Result<()> {
    match cmd {
        DemoCmd::Sweep(a) => sweep(a),
        DemoCmd::Sullivan(a) => sullivan(a),
        DemoCmd::Collab(a) => collab(a),
        DemoCmd::Fig2(a) => fig2(a),
    }
}

#[derive(Args)]
pub struct SweepArgs {
    /// Grid extents as `NXxNYxNZ`; x is the decomposed axis.
    #[arg(long, default_value = "32x16x16")]
    grid: String,
    /// Virtual machines (slabs along x).
    #[arg(long, default_value_t = 4)]
    vms: usize,
    #[arg(long, default_value_t = 4)]
    sweeps: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Virtual ticks charged per message delivery.
    #[arg(long, default_value_t = 0)]
    latency: u64,
    #[arg(long, default_value = "cooperative")]
    policy: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn parse_grid(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        bail!("grid must be `NXxNYxNZ`, got `{s}`");
    }
    let dim = |p: &str| p.parse::<usize>().with_context(|| format!("bad grid extent `{p}`"));
    Ok((dim(parts[0])?, dim(parts[1])?, dim(parts[2])?))
}

fn sweep(a: SweepArgs) -> Result<()> {
    let params = SweepParams {
        grid: parse_grid(&a.grid)?,
        n_vms: a.vms,
        sweeps: a.sweeps,
        seed: a.seed,
    };
    let policy = parse_policy(&a.policy)?;
    let report = run_sweep_with_latency(&params, policy, a.latency)?;
    match a.format {
        Format::Json => {
            let per_vm: Vec<String> =
                report.per_vm_digests.iter().map(|d| format!("{d:016x}")).collect();
            println!(
                "{}",
                json!({
                    "demo": "sweep",
                    "grid": a.grid,
                    "vms": a.vms,
                    "sweeps": a.sweeps,
                    "seed": a.seed,
                    "digest": format!("{:016x}", report.digest),
                    "vm_digests": per_vm,
                    "messages": report.messages_sent,
                })
            );
        }
        Format::Csv => {
            println!("demo,sweep");
            println!("grid,{}", a.grid);
            println!("vms,{}", a.vms);
            println!("sweeps,{}", a.sweeps);
            println!("seed,{}", a.seed);
            println!("digest,{:016x}", report.digest);
            for (rank, d) in report.per_vm_digests.iter().enumerate() {
                println!("vm_digest,{rank},{d:016x}");
            }
            println!("messages,{}", report.messages_sent);
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct SullivanArgs {
    /// Endpoint count (at least 2).
    #[arg(long, default_value_t = 4)]
    endpoints: usize,
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Copies per round are drawn uniformly from 0..=n2-max.
    #[arg(long, default_value_t = 3)]
    n2_max: u64,
    /// Write the full event log (CSV) to this file.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, default_value = "cooperative")]
    policy: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn sullivan(a: SullivanArgs) -> Result<()> {
    let params = SullivanParams {
        p: a.endpoints,
        rounds: a.rounds,
        seed: a.seed,
        n2_max: a.n2_max,
    };
    let report = run_sullivan(&params, parse_policy(&a.policy)?)?;
    if let Some(path) = &a.events {
        fs::write(path, &report.event_csv)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    match a.format {
        Format::Json => {
            println!(
                "{}",
                json!({
                    "demo": "sullivan",
                    "endpoints": a.endpoints,
                    "rounds": a.rounds,
                    "seed": a.seed,
                    "n2_max": a.n2_max,
                    "counts": report.counts,
                    "sent": report.sent,
                    "total_sent": report.total_sent,
                    "checked": report.checked,
                    "mismatches": report.mismatches,
                })
            );
        }
        Format::Csv => {
            println!("demo,sullivan");
            println!("endpoints,{}", a.endpoints);
            println!("rounds,{}", a.rounds);
            println!("seed,{}", a.seed);
            println!("n2_max,{}", a.n2_max);
            for (rank, c) in report.counts.iter().enumerate() {
                println!("count,{rank},{c}");
            }
            for (rank, s) in report.sent.iter().enumerate() {
                println!("sent,{rank},{s}");
            }
            println!("total_sent,{}", report.total_sent);
            println!("checked,{}", report.checked);
            println!("mismatches,{}", report.mismatches);
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct CollabArgs {
    /// Right-hand side of u'' = f.
    #[arg(long, default_value = "const-neg2")]
    forcing: String,
    /// Mesh intervals over [0, 1].
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// Interface node index.
    #[arg(long, default_value_t = 256)]
    interface: usize,
    /// Boundary values u(0) and u(1).
    #[arg(long, default_value_t = 0.0)]
    bc_left: f64,
    #[arg(long, default_value_t = 0.0)]
    bc_right: f64,
    /// Relaxation factor in (0, 1].
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Write the assembled solution (`x,u` rows) to this file.
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long, default_value = "cooperative")]
    policy: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn parse_forcing(name: &str) -> Result<Forcing> {
    Forcing::from_name(name).with_context(|| {
        let names: Vec<&str> = Forcing::ALL.iter().map(|f| f.name()).collect();
        format!("unknown forcing `{name}` (expected one of: {})", names.join(", "))
    })
}

impl CollabArgs {
    fn problem(&self) -> Result<CollabProblem> {
        Ok(CollabProblem {
            forcing: parse_forcing(&self.forcing)?,
            n: self.n,
            xi_index: self.interface,
            bc: (self.bc_left, self.bc_right),
            theta: self.theta,
            tol: self.tol,
            max_iters: self.max_iters,
        })
    }
}

fn collab(a: CollabArgs) -> Result<()> {
    let problem = a.problem()?;
    let report = run_collab(&problem, parse_policy(&a.policy)?)?;
    if let Some(path) = &a.solution {
        let h = 1.0 / problem.n as f64;
        let mut out = String::from("x,u\n");
        for (i, u) in report.u.iter().enumerate() {
            out.push_str(&format!("{:?},{u:?}\n", i as f64 * h));
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    }
    match a.format {
        Format::Json => {
            println!(
                "{}",
                json!({
                    "demo": "collab",
                    "forcing": a.forcing,
                    "n": a.n,
                    "interface": a.interface,
                    "gamma": report.gamma,
                    "iters": report.iters,
                    "converged": report.converged,
                    "history": report.history,
                })
            );
        }
        Format::Csv => {
            println!("demo,collab");
            println!("forcing,{}", a.forcing);
            println!("n,{}", a.n);
            println!("interface,{}", a.interface);
            println!("gamma,{:?}", report.gamma);
            println!("iters,{}", report.iters);
            println!("converged,{}", report.converged);
            for (i, g) in report.history.iter().enumerate() {
                println!("history,{i},{g:?}");
            }
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct Fig2Args {
    /// Forcing for the first solver pair.
    #[arg(long, default_value = "const-neg2")]
    first: String,
    /// Forcing for the second solver pair.
    #[arg(long, default_value = "poly-6x")]
    second: String,
    #[arg(long, default_value_t = 512)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    interface: usize,
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value = "cooperative")]
    policy: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn fig2(a: Fig2Args) -> Result<()> {
    let base = CollabProblem {
        n: a.n,
        xi_index: a.interface,
        theta: a.theta,
        tol: a.tol,
        max_iters: a.max_iters,
        ..CollabProblem::default()
    };
    let first = CollabProblem { forcing: parse_forcing(&a.first)?, ..base };
    let second = CollabProblem { forcing: parse_forcing(&a.second)?, ..base };
    let report = run_fig2(&first, &second, parse_policy(&a.policy)?)?;
    match a.format {
        Format::Json => {
            println!(
                "{}",
                json!({
                    "demo": "fig2",
                    "first": {
                        "forcing": a.first,
                        "gamma": report.first.gamma,
                        "iters": report.first.iters,
                        "converged": report.first.converged,
                    },
                    "second": {
                        "forcing": a.second,
                        "gamma": report.second.gamma,
                        "iters": report.second.iters,
                        "converged": report.second.converged,
                    },
                    "classes": report.classes,
                })
            );
        }
        Format::Csv => {
            println!("demo,fig2");
            println!("first,{},{:?},{},{}", a.first, report.first.gamma, report.first.iters, report.first.converged);
            println!("second,{},{:?},{},{}", a.second, report.second.gamma, report.second.iters, report.second.converged);
            for (i, class) in report.classes.iter().enumerate() {
                let ids: Vec<String> = class.iter().map(u32::to_string).collect();
                println!("class,{i},{}", ids.join(" "));
            }
        }
    }
    Ok(())
}
