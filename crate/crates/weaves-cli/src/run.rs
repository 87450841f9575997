//! `weaves run`: file-driven composition. The plan's modules resolve
//! against the demo library, so every shipped tapestry runs as-is.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use weaves_core::demos::demo_library;
use weaves_core::plan::{instantiate, parse_tapestry, substitute_seed};
use weaves_core::{Monitor, RunReport, Runtime, SchedulerPolicy};

#[derive(Args)]
pub struct RunArgs {
    /// Tapestry file to load.
    #[arg(long)]
    pub tapestry: PathBuf,
    /// Serve the monitor protocol while running: `stdio`, or a unix
    /// socket path. The stdio session ends at EOF; the socket serves
    /// clients until the run completes.
    #[arg(long)]
    pub monitor: Option<String>,
    /// Scheduling policy: `cooperative` or `preempt:<quantum>`.
    #[arg(long, default_value = "cooperative")]
    pub policy: String,
    /// Substituted for every `"$seed"` argument in the file.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn parse_policy(s: &str) -> Result<SchedulerPolicy> {
    if s == "cooperative" {
        return Ok(SchedulerPolicy::Cooperative);
    }
    if let Some(q) = s.strip_prefix("preempt:") {
        let quantum: u32 = q.parse().with_context(|| format!("bad quantum `{q}`"))?;
        if quantum == 0 {
            bail!("quantum must be at least 1");
        }
        return Ok(SchedulerPolicy::Preemptive { quantum });
    }
    bail!("unknown policy `{s}` (expected `cooperative` or `preempt:<quantum>`)")
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Runtime> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.display().to_string();
    let mut plan = parse_tapestry(&text, &name).map_err(|e| anyhow!("{e}"))?;
    substitute_seed(&mut plan, seed)?;
    Ok(instantiate(&plan, &demo_library())?)
}

fn finish(rt: &Runtime, report: &RunReport) -> Result<()> {
    rt.shutdown();
    if !report.deadlocked.is_empty() {
        bail!("strings deadlocked: {:?}", report.deadlocked);
    }
    let failed = report.failed();
    if !failed.is_empty() {
        let names: Vec<&str> = failed.iter().map(|s| s.name.as_str()).collect();
        bail!("strings failed: {}", names.join(", "));
    }
    Ok(())
}

pub fn exec(args: RunArgs) -> Result<()> {
    let policy = parse_policy(&args.policy)?;
    let rt = load(&args.tapestry, args.seed)?;
    match args.monitor.as_deref() {
        None => {
            let report = rt.run(policy)?;
            print!("{}", report.to_csv());
            eprintln!("total_switches,{}", report.total_switches);
            finish(&rt, &report)
        }
        Some(transport) => {
            let monitor = Monitor::new(rt.clone());
            let stdio = transport == "stdio";
            let driver = {
                let rt = rt.clone();
                std::thread::spawn(move || {
                    let report = rt.run(policy);
                    if !stdio {
                        // Socket service covers the run; completing it
                        // releases the accept loop.
                        rt.shutdown();
                    }
                    report
                })
            };
            if stdio {
                // Responses own stdout for the session; the run summary
                // moves to stderr. The session ends at EOF, so the final
                // state stays inspectable after the strings finish.
                monitor.serve_stdio()?;
                // EOF with the scheduler paused would hang the join below.
                let _ = rt.resume();
            } else {
                monitor.serve_unix(Path::new(transport))?;
            }
            let report =
                driver.join().map_err(|_| anyhow!("scheduler thread panicked"))??;
            eprint!("{}", report.to_csv());
            eprintln!("total_switches,{}", report.total_switches);
            finish(&rt, &report)
        }
    }
}
