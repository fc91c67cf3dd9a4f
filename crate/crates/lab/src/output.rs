//! CSV rows, config hashing and the run manifest.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::LabError;

/// One line of `results.csv`. Empty cells mean "not applicable".
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ResultRow {
    pub experiment: String,
    pub quantity: String,
    pub n: Option<u64>,
    pub t_n: Option<f64>,
    pub r_n: Option<f64>,
    pub m_n: Option<u32>,
    /// Secondary coordinate: cutoff `T`, probe argument, etc.
    pub parameter: Option<f64>,
    pub estimate: f64,
    pub se: Option<f64>,
    pub reference: Option<f64>,
    pub remainder_bound: Option<f64>,
    pub status: Option<String>,
    pub reps: u64,
    pub seed: u64,
    pub config_hash: String,
}

/// A named pass/fail verdict evaluated under `--assert`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Hex SHA-256 of the canonical TOML of `config` with the output directory blanked.
pub fn config_hash(config: &RunConfig) -> Result<String, LabError> {
    let mut canonical = config.clone();
    canonical.out = String::new();
    let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<Vec<u8>, LabError> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| LabError::Io(e.into_error()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    tool_version: &'static str,
    core_version: &'static str,
    experiment: &'a str,
    master_seed: u64,
    config_hash: &'a str,
    config: &'a RunConfig,
    outputs: &'a [String],
    checks: &'a [Check],
}

pub fn manifest_json(
    config: &RunConfig,
    experiment: &str,
    hash: &str,
    outputs: &[String],
    checks: &[Check],
) -> Result<Vec<u8>, LabError> {
    let m = Manifest {
        tool: "brwlab",
        tool_version: env!("CARGO_PKG_VERSION"),
        core_version: heavybrw::VERSION,
        experiment,
        master_seed: config.seed,
        config_hash: hash,
        config,
        outputs,
        checks,
    };
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), LabError> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cells_and_quoting() {
        let row = ResultRow {
            experiment: "x".into(),
            quantity: "a,b".into(),
            estimate: 0.5,
            reps: 3,
            seed: 9,
            config_hash: "h".into(),
            ..Default::default()
        };
        let text = String::from_utf8(rows_to_csv(&[row]).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "experiment,quantity,n,t_n,r_n,m_n,parameter,estimate,se,reference,remainder_bound,status,reps,seed,config_hash"
        );
        assert_eq!(lines.next().unwrap(), "x,\"a,b\",,,,,,0.5,,,,,3,9,h");
    }
}
