//! `weaves bench`: the timing harnesses. The CSV goes to stdout (or
//! `--out`); measurement diagnostics — the steal-robust minima and the
//! CPU-clock overheads — go to stderr.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use weaves_bench::{emit_report, FlowModel, Harness, ScaleParams, TimingRecord};

#[derive(Subcommand)]
pub enum BenchCmd {
    /// One work contract across the four flow models.
    Flows(FlowsArgs),
    /// Weak-scaling sweep runs with digest reproducibility.
    Scale(ScaleArgs),
}

pub fn exec(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Flows(a) => flows(a),
        BenchCmd::Scale(a) => scale(a),
    }
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Args)]
pub struct FlowsArgs {
    /// baseline | host-threads | processes | weaves
    #[arg(long)]
    model: String,
    /// Flow count.
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Calibrated single-flow work target.
    #[arg(long, default_value_t = 2000.0)]
    target_ms: f64,
    #[arg(long, default_value_t = 3)]
    reps: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn flows(a: FlowsArgs) -> Result<()> {
    let Some(model) = FlowModel::from_label(&a.model) else {
        let labels: Vec<&str> = FlowModel::ALL.iter().map(|m| m.label()).collect();
        bail!("unknown model `{}` (expected one of: {})", a.model, labels.join(", "));
    };
    if model == FlowModel::Baseline && a.n != 1 {
        bail!("the baseline is single-flow by definition");
    }
    let harness = Harness::new(a.target_ms, a.reps)?;
    let mut records: Vec<TimingRecord> = Vec::new();
    let reference = harness.record(FlowModel::Baseline, 1)?;
    records.push(reference.record.clone());
    if model != FlowModel::Baseline {
        let outcome = harness.record(model, a.n)?;
        eprintln!(
            "{} n={}: setup {:.2} ms, min overhead {:+.2}% wall / {:+.2}% cpu",
            model.label(),
            a.n,
            outcome.setup_ms,
            outcome.min_overhead_pct(),
            outcome.cpu_overhead_pct(),
        );
        records.push(outcome.record.clone());
    }
    write_out(a.out.as_ref(), &emit_report(&records))
}

#[derive(Args)]
pub struct ScaleArgs {
    /// Weave count; the grid's x extent grows with it (weak scaling).
    #[arg(long, default_value_t = 1024)]
    weaves: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 4)]
    sweeps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn scale(a: ScaleArgs) -> Result<()> {
    let record = weaves_bench::run_scalability(&ScaleParams {
        n_weaves: a.weaves,
        seed: a.seed,
        runs: a.runs,
        sweeps: a.sweeps,
        ..ScaleParams::default()
    })?;
    let mut text = String::from("n_weaves,run,wall_ms,digest\n");
    for (i, (ms, digest)) in record.wall_ms.iter().zip(&record.digests).enumerate() {
        text.push_str(&format!("{},{},{:.3},{:016x}\n", record.n_weaves, i, ms, digest));
    }
    eprintln!(
        "median {:.1} ms over {} runs, digests identical: {}",
        record.median_wall_ms,
        record.wall_ms.len(),
        record.identical
    );
    write_out(a.out.as_ref(), &text)?;
    if !record.identical {
        bail!("fixed-seed runs disagreed: {:?}", record.digests);
    }
    Ok(())
}
