//! Config-driven experiments on top of `heavybrw`: TOML run descriptions,
//! a rayon replicate runner, CSV results and a JSON manifest per run.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod runner;

use std::path::{Path, PathBuf};

use heavybrw::harness::ReplicateRunner;

pub use config::{ExperimentKind, RunConfig};
pub use error::{exit, LabError};
pub use experiments::Report;
pub use runner::RayonRunner;

/// Name of the main results table.
pub const RESULTS_CSV: &str = "results.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub config_hash: String,
    pub out_dir: PathBuf,
    /// Files written, relative to `out_dir`.
    pub files: Vec<String>,
}

/// Runs `kind` and writes its artifacts under `cfg.out`.
///
/// With `assert`, a failed check becomes [`LabError::Assert`] after the
/// artifacts are on disk.
pub fn run<P: ReplicateRunner>(kind: ExperimentKind, cfg: &RunConfig, runner: &P, assert: bool) -> Result<RunOutcome, LabError> {
    cfg.validate_for(kind)?;
    let hash = output::config_hash(cfg)?;
    let report = experiments::run_experiment(kind, cfg, &hash, runner)?;
    let dir = Path::new(&cfg.out).to_path_buf();
    let mut files = vec![RESULTS_CSV.to_string()];
    output::write_file(&dir, RESULTS_CSV, &output::rows_to_csv(&report.rows)?)?;
    for (name, bytes) in &report.files {
        output::write_file(&dir, name, bytes)?;
        files.push(name.clone());
    }
    let manifest = output::manifest_json(cfg, kind.name(), &hash, &files, &report.checks)?;
    output::write_file(&dir, MANIFEST_JSON, &manifest)?;
    files.push(MANIFEST_JSON.to_string());
    if assert && !report.passed() {
        let failed: Vec<String> =
            report.checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail)).collect();
        return Err(LabError::Assert(failed.join("; ")));
    }
    Ok(RunOutcome { report, config_hash: hash, out_dir: dir, files })
}
