use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pvkit_cli::{cmd_attack_suite, cmd_dump, cmd_list, cmd_provision, cmd_run, CliError, SuiteChoice};

#[derive(Parser)]
#[command(name = "pvkit", version, about = "Passport/Visa roaming authentication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate keys, certificates, a registry and a smart card.
    Provision {
        /// Directory to write into; existing files are never overwritten.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a scenario script and check its assertions.
    Run {
        /// Path to a script, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        /// Overrides the script's own seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "standard")]
        suite: SuiteChoice,
        /// Where to write the annotated trace.
        #[arg(long, env = "PVKIT_OUT")]
        out: Option<PathBuf>,
        /// Also print the trace.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Check the forgery, authentication, replay and key-freshness claims.
    AttackSuite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "standard")]
        suite: SuiteChoice,
        /// Fewer trials per claim.
        #[arg(long)]
        quick: bool,
    },
    /// Decode a message given as hex or as a file of raw bytes.
    Dump { input: String },
    /// List bundled scenarios.
    Scenarios,
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Provision { out: dir, seed } => cmd_provision(&dir, seed, &mut out),
        Command::Run {
            scenario,
            seed,
            suite,
            out: trace_out,
            verbose,
        } => cmd_run(&scenario, seed, suite, trace_out.as_deref(), verbose, &mut out),
        Command::AttackSuite { seed, suite, quick } => cmd_attack_suite(seed, suite, quick, &mut out),
        Command::Dump { input } => cmd_dump(&input, &mut out),
        Command::Scenarios => cmd_list(&mut out),
    }
}

fn main() -> ExitCode {
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pvkit: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
