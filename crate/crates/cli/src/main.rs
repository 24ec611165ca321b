use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hetflow::ArithmeticMode;
use hetflow_cli::{run, Command, Options, Status};

#[derive(Parser)]
#[command(
    name = "hetflow",
    version,
    about = "Exclusion dynamics among obstacles: simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Unrecorded steps before measuring (default: steps/10).
    #[arg(long, global = true)]
    burn_in: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Replaces the seeds of random generators.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extended obstacle chain and its density bounds.
    Extend,
    /// Single run: trajectory and velocity summary.
    Simulate,
    /// Fundamental diagram over a density range.
    FdSweep {
        #[arg(long)]
        rho_min: Option<String>,
        #[arg(long)]
        rho_max: Option<String>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Dynamical coupling of `particles` and `partner`.
    Couple,
    /// Lattice zero-range run compared with the continuum map.
    ZeroRange,
    /// Named scenario; exits 0 iff its property holds.
    Scenario { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Fast,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut opts = Options {
        config: cli.config,
        steps: cli.steps,
        burn_in: cli.burn_in,
        out: cli.out,
        mode: cli.mode.map(|m| match m {
            Mode::Exact => ArithmeticMode::Exact,
            Mode::Fast => ArithmeticMode::Fast,
        }),
        seed: cli.seed,
        threads: cli.threads,
        ..Options::default()
    };
    let cmd = match cli.command {
        Cmd::Extend => Command::Extend,
        Cmd::Simulate => Command::Simulate,
        Cmd::FdSweep {
            rho_min,
            rho_max,
            points,
        } => {
            opts.rho_min = rho_min;
            opts.rho_max = rho_max;
            opts.points = points;
            Command::FdSweep
        }
        Cmd::Couple => Command::Couple,
        Cmd::ZeroRange => Command::ZeroRange,
        Cmd::Scenario { name } => {
            opts.name = Some(name);
            Command::Scenario
        }
    };
    match run(cmd, &opts) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            match &outcome.status {
                Status::Ok => {}
                Status::Degenerate(m) => eprintln!("degenerate input: {m}"),
                Status::Violated(m) => eprintln!("property violated: {m}"),
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
