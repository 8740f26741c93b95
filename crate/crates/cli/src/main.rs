use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use drp_cli::scenario::Overrides;
use drp_cli::{run, Command, Options};

/// Simulate and certify differential repetitive processes.
#[derive(Parser)]
#[command(name = "drp", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Print the spectral stability certificate of a scenario.
    Certify(Common),
    /// Run a linear scenario and write per-pass output norms.
    Simulate(Common),
    /// Run the learning-control scenario and write tracking-error norms.
    Ilc(Common),
    /// Run a Picard scenario and write per-pass errors to the true solution.
    Picard(Common),
    /// Run the randomized property suites.
    Claims {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run the inverted negative-control suite, which must report violations.
        #[arg(long)]
        self_test: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin scenario name; overrides the file's `scenario`.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; CSV goes to stdout without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of passes K.
    #[arg(long)]
    passes: Option<usize>,
    /// Number of grid intervals N.
    #[arg(long)]
    grid: Option<usize>,
    /// Also write an SVG semilog plot.
    #[arg(long)]
    svg: bool,
}

impl Common {
    fn into_options(self) -> Options {
        Options {
            config: self.config,
            scenario: self.scenario,
            overrides: Overrides {
                seed: self.seed,
                passes: self.passes,
                intervals: self.grid,
                out: self.out,
                svg: self.svg,
            },
            self_test: false,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, opts) = match cli.command {
        Sub::Certify(c) => (Command::Certify, c.into_options()),
        Sub::Simulate(c) => (Command::Simulate, c.into_options()),
        Sub::Ilc(c) => (Command::Ilc, c.into_options()),
        Sub::Picard(c) => (Command::Picard, c.into_options()),
        Sub::Claims { seed, out, self_test } => (
            Command::Claims,
            Options {
                overrides: Overrides {
                    seed,
                    out,
                    ..Overrides::default()
                },
                self_test,
                ..Options::default()
            },
        ),
    };
    match run(cmd, &opts, &mut io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
