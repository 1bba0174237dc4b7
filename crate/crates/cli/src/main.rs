use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ultimax_cli::{run, Command, Options};

#[derive(Parser)]
#[command(name = "ultimax", version, about = "Optimal prediction of the ultimate maximum under regime switching")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration (not used by `figure`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `outputs.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; the output does not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also write the first few simulated paths to `paths.csv`.
    #[arg(long, global = true)]
    paths_dump: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Gain surfaces and their Monte Carlo cross-check.
    Gcheck,
    /// Value, gain and gap surfaces.
    Solve,
    /// Stopping boundaries and their shape checks.
    Boundary,
    /// Residual of the boundary integral equation.
    Volterra,
    /// Regret of the boundary policy against simple rules.
    Eval,
    /// Surfaces and boundaries for the pinned two-regime example.
    Figure,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Gcheck => Command::Gcheck,
            Cmd::Solve => Command::Solve,
            Cmd::Boundary => Command::Boundary,
            Cmd::Volterra => Command::Volterra,
            Cmd::Eval => Command::Eval,
            Cmd::Figure => Command::Figure,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
        paths_dump: cli.paths_dump,
    };
    match run(cli.command.into(), &opts) {
        Ok(report) => {
            let failed = report.failed();
            for c in &failed {
                eprintln!("check failed: {} = {} (bound {})", c.name, c.value, c.bound);
            }
            println!("wrote {} files to {}", report.files.len(), report.out_dir.display());
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => {
            eprintln!("ultimax: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
