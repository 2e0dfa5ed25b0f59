//! Subcommand implementations behind the `stresslab` binary.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use stresslab_core::analysis::{analyze_dirs, AnalysisError, PhaseReport, SessionAnalysis};
use stresslab_core::simulate::{write_synth_session, SynthProfile};
use stresslab_core::Strategy;
use stresslab_service::{Server, ServiceConfig, ServiceError, SystemClock};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    /// One line per failing input.
    Data(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    fn data(msg: impl fmt::Display) -> CliError {
        CliError::Data(vec![msg.to_string()])
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(lines) => write!(f, "{}", lines.join("\n")),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug)]
pub struct AnalyzeOutcome {
    pub report: PhaseReport,
    pub files: Vec<PathBuf>,
    /// Incomplete sessions left out of the report.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Analyse `dirs` and write the report files into `out`.
///
/// Sessions whose protocol never finished are skipped with a warning; any
/// other per-session failure aborts before anything is written.
pub fn cmd_analyze(dirs: &[PathBuf], out: &Path, strategy: Strategy) -> Result<AnalyzeOutcome, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Usage("analyze needs at least one session directory".into()));
    }
    let mut analyses: Vec<SessionAnalysis> = Vec::new();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    for (dir, result) in dirs.iter().zip(analyze_dirs(dirs, strategy)) {
        match result {
            Ok(a) => analyses.push(a),
            Err(e @ AnalysisError::OpenWindow(_)) => {
                tracing::warn!(session = %dir.display(), "skipping: {e}");
                skipped.push((dir.clone(), e.to_string()));
            }
            Err(e) => failures.push(format!("{}: {e}", dir.display())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Data(failures));
    }
    let report = PhaseReport::build(analyses).map_err(|_| CliError::data("no complete sessions to report"))?;
    let files = report
        .write_to(out)
        .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    Ok(AnalyzeOutcome { report, files, skipped })
}

/// Read a profile file and write one synthetic session into `out`.
pub fn cmd_synth_session(profile: &Path, seed: u64, out: &Path) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(profile)
        .map_err(|e| CliError::data(format!("{}: {e}", profile.display())))?;
    let profile = SynthProfile::from_toml(&text).map_err(|e| CliError::data(format!("{}: {e}", profile.display())))?;
    write_synth_session(&profile, seed, out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    Ok(out.to_path_buf())
}

/// Run the service until `shutdown` resolves.
pub async fn cmd_serve(
    config: Option<&Path>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), CliError> {
    let config = ServiceConfig::load(config).map_err(|e| CliError::Usage(e.to_string()))?;
    serve(config, shutdown).await
}

pub async fn serve(
    config: ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), CliError> {
    let server = Server::bind(config, Arc::new(SystemClock)).await.map_err(service_error)?;
    server.run(shutdown).await.map_err(service_error)
}

fn service_error(e: ServiceError) -> CliError {
    match e {
        ServiceError::Config(e) => CliError::Usage(e.to_string()),
        other => CliError::data(other),
    }
}
