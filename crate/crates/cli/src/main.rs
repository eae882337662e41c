use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grainflow_cli::commands::{self, Invocation};

#[derive(Parser)]
#[command(name = "grainflow", version, about = "Time-discrete solver for the phi-eta-theta grain boundary model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `[output] directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces `[init] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Allow h >= h*; results are flagged as outside the hypotheses.
    #[arg(long)]
    override_h_gate: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme and write the energy log and snapshots.
    Run(Common),
    /// Run the check suite and write checks.csv.
    Verify(Common),
    /// Run the nu -> 0 study and write sweep.csv.
    SweepNu(Common),
    /// Measure fixed-point contraction ratios at the configured h.
    ProbeContraction(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, action): (&Common, fn(&_, &Invocation) -> _) = match &cli.command {
        Command::Run(c) => (c, commands::run),
        Command::Verify(c) => (c, commands::verify),
        Command::SweepNu(c) => (c, commands::sweep_nu),
        Command::ProbeContraction(c) => (c, commands::probe_contraction),
    };
    let inv = Invocation {
        out: common.out.clone(),
        seed: common.seed,
        override_h_gate: common.override_h_gate,
    };
    let outcome = commands::load(&common.config).and_then(|cfg| action(&cfg, &inv));
    match outcome {
        Ok(o) => {
            for c in o.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {}: {:e} > {:e} ({})", c.name, c.worst_violation, c.tolerance, c.context);
            }
            println!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
