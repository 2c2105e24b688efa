//! Command implementations behind the `pvkit` binary. Each command writes
//! its report to the given sink and returns the process exit code.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pvkit::crypto::{CryptoSuite, StandardSuite, UnauthenticatedSymmetric};
use pvkit::sim::provision::{self, ProvisionError};
use pvkit::sim::scenario::{self, Scenario, ScenarioError};
use pvkit::sim::{run_attack_suite, AttackConfig, SimError};
use pvkit::wire;
use thiserror::Error;

/// Every assertion held / every claim held.
pub const EXIT_OK: i32 = 0;
/// An assertion or security claim failed.
pub const EXIT_FAILED: i32 = 1;
/// The input could not be parsed or the scenario could not run.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Provision(#[from] ProvisionError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_ERROR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SuiteChoice {
    /// X25519 sealing, Ed25519 signatures, ChaCha20-Poly1305.
    Standard,
    /// The standard suite with an unauthenticated symmetric layer.
    Unauthenticated,
}

impl SuiteChoice {
    pub fn build(self) -> Arc<dyn CryptoSuite> {
        match self {
            SuiteChoice::Standard => Arc::new(StandardSuite),
            SuiteChoice::Unauthenticated => Arc::new(UnauthenticatedSymmetric(StandardSuite)),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

/// Writes a CA, an HN, two FNs and a registered MU into `out_dir`.
pub fn cmd_provision(out_dir: &Path, seed: u64, out: &mut dyn Write) -> Result<i32, CliError> {
    let written = provision::provision(out_dir, seed, Arc::new(StandardSuite))?;
    for path in written {
        emit(out, &format!("wrote {}\n", path.display()))?;
    }
    Ok(EXIT_OK)
}

/// Loads a scenario from a file, or from the bundled set by name.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, CliError> {
    let path = Path::new(name_or_path);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        return Ok(Scenario::parse(&text, base)?);
    }
    match scenario::bundled(name_or_path) {
        Some(text) => Ok(Scenario::parse(text, Path::new("."))?),
        None => Err(CliError::Input(format!(
            "no scenario file {name_or_path:?} and no bundled scenario of that name"
        ))),
    }
}

/// Runs a scenario, writes its trace to `trace_out` if given, and reports
/// each assertion.
pub fn cmd_run(
    scenario: &str,
    seed: Option<u64>,
    suite: SuiteChoice,
    trace_out: Option<&Path>,
    verbose: bool,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let sc = load_scenario(scenario)?;
    let run = scenario::run_scenario(&sc, seed, suite.build())?;
    let trace = run.trace().render();
    if let Some(path) = trace_out {
        fs::write(path, &trace).map_err(io_err(path))?;
    }
    if verbose {
        emit(out, &trace)?;
    }
    for a in &run.assertions {
        let mark = if a.passed { "PASS" } else { "FAIL" };
        emit(
            out,
            &format!("{mark} line {}: expect {} ({})\n", a.line, a.text, a.detail),
        )?;
    }
    let failed = run.assertions.iter().filter(|a| !a.passed).count();
    emit(
        out,
        &format!(
            "seed {}: {} assertions, {} failed\n",
            run.seed,
            run.assertions.len(),
            failed
        ),
    )?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILED })
}

/// Runs the four claim families; exit 0 iff every claim holds.
pub fn cmd_attack_suite(seed: u64, suite: SuiteChoice, quick: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = if quick {
        AttackConfig {
            forgeries: 10,
            replay_traces: 5,
            mitm_trials: 6,
            sessions: 10,
        }
    } else {
        AttackConfig::default()
    };
    let report = run_attack_suite(seed, suite.build(), &cfg)?;
    emit(out, &report.render())?;
    Ok(if report.all_upheld() { EXIT_OK } else { EXIT_FAILED })
}

/// Decodes one message and prints its fields and an annotated hex dump.
pub fn cmd_dump(hex_or_path: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let path = Path::new(hex_or_path);
    let bytes = if path.exists() {
        fs::read(path).map_err(io_err(path))?
    } else {
        let cleaned: String = hex_or_path.chars().filter(|c| !c.is_whitespace()).collect();
        hex::decode(cleaned).map_err(|e| CliError::Input(format!("not a file and not hex: {e}")))?
    };
    emit(out, &wire::annotate(&bytes))?;
    Ok(match wire::ProtocolMessage::decode(&bytes) {
        Ok(_) => EXIT_OK,
        Err(_) => EXIT_FAILED,
    })
}

/// Names of the bundled scenarios.
pub fn cmd_list(out: &mut dyn Write) -> Result<i32, CliError> {
    for (name, _) in scenario::BUNDLED {
        emit(out, &format!("{name}\n"))?;
    }
    Ok(EXIT_OK)
}
