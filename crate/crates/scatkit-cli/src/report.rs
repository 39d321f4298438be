//! Deterministic report files.
//!
//! Every numeric cell is written in scientific notation with 17 significant
//! digits, which round-trips `f64` bit for bit; complex values occupy two
//! columns (re, im). Tables are assembled in memory in a deterministic row
//! order and written in one shot, so identical configs and seeds produce
//! byte-identical bodies. The only run-dependent outputs — the generation
//! timestamp in `run.json` and the wall-clock columns of the summaries —
//! are suppressed by `--no-timestamp`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use scatkit::Result;

/// 17-significant-digit scientific notation; `f64` round-trips exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table with a fixed header, buffered until [`CsvTable::write`].
pub struct CsvTable {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &'static [&'static str]) -> Self {
        CsvTable { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "report row width mismatch");
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut body = self.header.join(",");
        body.push('\n');
        for row in &self.rows {
            body.push_str(&row.join(","));
            body.push('\n');
        }
        fs::write(path, body)?;
        Ok(())
    }
}

/// Index of one `probe` output directory: where each matrix lives, plus the
/// scalar values that have no CSV representation of their own.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeManifest {
    pub kappa: f64,
    /// Probe ball radius `a`.
    pub radius: f64,
    pub impedance_exponent: f64,
    pub closeness_exponent: f64,
    /// File name of the background matrix, relative to the directory.
    pub background: String,
    pub sites: Vec<ManifestSite>,
}

/// One probe site of a manifest.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSite {
    /// Single-ball matrices, one per ball of the site.
    pub singles: Vec<String>,
    /// Pair matrix; absent for single-ball sites.
    #[serde(default)]
    pub pair: Option<String>,
    /// Interaction value recorded at synthesis time (re, im), kept as the
    /// scoring reference of downstream reconstructions.
    #[serde(default)]
    pub interaction: Option<(f64, f64)>,
    #[serde(default)]
    pub interaction_surrogate: bool,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn save_manifest(dir: &Path, manifest: &ProbeManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<ProbeManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    Ok(serde_json::from_str(&text)?)
}

/// Solver diagnostics written by `forward` next to the matrix files.
#[derive(Debug, Serialize)]
pub struct ForwardDiagnostics {
    pub kappa: f64,
    pub direction_count: usize,
    /// Grid dimensions of the volume solve; absent for the trivial medium,
    /// which needs no solve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_dims: Option<[usize; 3]>,
    /// Iterations per incidence direction.
    pub iterations: Vec<usize>,
    /// Final relative residual per incidence direction.
    pub residuals: Vec<f64>,
    /// Largest entry gap between the solver matrix and the independent
    /// partial-wave series, relative to the largest series entry; present
    /// only for constant-ball media.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_series_gap: Option<f64>,
}

pub fn save_diagnostics(dir: &Path, diagnostics: &ForwardDiagnostics) -> Result<()> {
    let mut text = serde_json::to_string_pretty(diagnostics)?;
    text.push('\n');
    fs::write(dir.join("forward.json"), text)?;
    Ok(())
}

/// Sidecar describing a run: the command, the config it used, and — unless
/// suppressed — when it was generated.
#[derive(Debug, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub experiment_id: String,
    pub config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

pub fn save_run_info(dir: &Path, info: &RunInfo) -> Result<()> {
    let mut text = serde_json::to_string_pretty(info)?;
    text.push('\n');
    fs::write(dir.join("run.json"), text)?;
    Ok(())
}
