//! `weaves` — the hosting binary: loads tapestry files against the
//! built-in module library, serves the monitor protocol, runs the canned
//! demo compositions, and drives the timing harnesses.
//!
//! Results go to standard output; diagnostics and run summaries go to
//! standard error, so piped output stays machine-readable.

mod bench;
mod demo;
mod run;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "weaves",
    version,
    about = "Compositional runtime host: tapestries, demos, timing harnesses"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a tapestry file, optionally serving the monitor protocol.
    Run(run::RunArgs),
    /// Canned compositions with their parameters exposed as flags.
    #[command(subcommand)]
    Demo(demo::DemoCmd),
    /// Timing harnesses: flow-model comparison and weak scaling.
    #[command(subcommand)]
    Bench(bench::BenchCmd),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => run::exec(args),
        Cmd::Demo(cmd) => demo::exec(cmd),
        Cmd::Bench(cmd) => bench::exec(cmd),
    };
    if let Err(e) = result {
        eprintln!("{e:#}");
        std::process::exit(1);
    }
}
