use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tumbletrack::pipeline::Mode;
use tumbletrack_cli::{cmd_compare, cmd_run, cmd_selftest, default_out, Overrides};

#[derive(Parser)]
#[command(name = "tumbletrack", version, about = "Pose and inertia tracking of a tumbling target from point-cloud scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cl,
    Ol,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory [default: out/<config name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Tracking mode, overriding the config.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            mode: self.mode.map(|m| match m {
                ModeArg::Cl => Mode::Cl,
                ModeArg::Ol => Mode::Ol,
            }),
        }
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| default_out(&self.config))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write track, filter trace, truth and summary files.
    Run(RunArgs),
    /// Run a scenario in closed and open loop and print both side by side.
    Compare(RunArgs),
    /// Run the built-in numerical checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(a) => cmd_run(&a.config, &a.out(), &a.overrides()),
        Command::Compare(a) => cmd_compare(&a.config, &a.out(), &a.overrides()),
        Command::Selftest => cmd_selftest(),
    };
    ExitCode::from(code as u8)
}
