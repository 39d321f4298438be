//! On-disk formats for measurement data.
//!
//! Far-field matrices are stored as CSV with one row per entry:
//!
//! ```text
//! i,j,theta_i_x,theta_i_y,theta_i_z,theta_j_x,theta_j_y,theta_j_z,re,im
//! ```
//!
//! Floats are written with 17 significant decimal digits, which `f64`
//! round-trips bit for bit, so data can leave and re-enter the toolkit
//! without perturbing a single reconstruction. The matrix kind, wavenumber
//! and probe geometry travel in a JSON sidecar next to the CSV (same stem,
//! `.meta.json` extension). A whole [`MeasurementBundle`] round-trips
//! through a single JSON document.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScatError};
use crate::farfield::{FarFieldMatrix, MatrixKind};
use crate::foldy::MeasurementBundle;
use crate::geom::Vec3;

/// Expected CSV header.
pub const CSV_HEADER: [&str; 10] = [
    "i", "j", "theta_i_x", "theta_i_y", "theta_i_z", "theta_j_x", "theta_j_y", "theta_j_z",
    "re", "im",
];

/// Sidecar metadata describing one stored far-field matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMetadata {
    pub kind: MatrixKind,
    pub kappa: f64,
    /// Probe centers present during the measurement; empty for the
    /// background matrix.
    #[serde(default)]
    pub centers: Vec<Vec3>,
    /// Probe radius, when probes were present.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub impedance_exponent: Option<f64>,
    #[serde(default)]
    pub closeness_exponent: Option<f64>,
}

impl MatrixMetadata {
    /// Metadata for a background matrix (no probes).
    pub fn background(kappa: f64) -> Self {
        MatrixMetadata {
            kind: MatrixKind::Background,
            kappa,
            centers: Vec::new(),
            radius: None,
            impedance_exponent: None,
            closeness_exponent: None,
        }
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a matrix in the CSV entry format (kind and wavenumber travel in
/// the sidecar, not here). Rows are emitted row-major.
pub fn write_matrix_csv<W: Write>(matrix: &FarFieldMatrix, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(CSV_HEADER)?;
    let n = matrix.len();
    for i in 0..n {
        let ti = matrix.directions[i];
        for j in 0..n {
            let tj = matrix.directions[j];
            let v = matrix.get(i, j);
            csv.write_record([
                i.to_string(),
                j.to_string(),
                fmt_float(ti.x),
                fmt_float(ti.y),
                fmt_float(ti.z),
                fmt_float(tj.x),
                fmt_float(tj.y),
                fmt_float(tj.z),
                fmt_float(v.re),
                fmt_float(v.im),
            ])?;
        }
    }
    csv.flush().map_err(ScatError::Io)?;
    Ok(())
}

fn parse_float(field: &str, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|e| {
        ScatError::InvalidConfig(format!("cannot parse {what} from {field:?}: {e}"))
    })
}

fn parse_index(field: &str, what: &str) -> Result<usize> {
    field.parse::<usize>().map_err(|e| {
        ScatError::InvalidConfig(format!("cannot parse {what} from {field:?}: {e}"))
    })
}

/// Read a matrix from the CSV entry format. `kind` and `kappa` come from
/// the caller (usually a metadata sidecar). The reader checks the header,
/// squareness, duplicate or missing entries, and that every row states the
/// same direction for a given index.
pub fn read_matrix_csv<R: Read>(reader: R, kind: MatrixKind, kappa: f64) -> Result<FarFieldMatrix> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv.headers()?;
        let expected: Vec<&str> = CSV_HEADER.to_vec();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(ScatError::InvalidConfig(format!(
                "unexpected CSV header {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }
    let mut rows: Vec<(usize, usize, Vec3, Vec3, Complex64)> = Vec::new();
    for record in csv.records() {
        let record = record?;
        if record.len() != CSV_HEADER.len() {
            return Err(ScatError::InvalidConfig(format!(
                "CSV row has {} fields, expected {}",
                record.len(),
                CSV_HEADER.len()
            )));
        }
        let i = parse_index(&record[0], "row index")?;
        let j = parse_index(&record[1], "column index")?;
        let ti = Vec3::new(
            parse_float(&record[2], "theta_i_x")?,
            parse_float(&record[3], "theta_i_y")?,
            parse_float(&record[4], "theta_i_z")?,
        );
        let tj = Vec3::new(
            parse_float(&record[5], "theta_j_x")?,
            parse_float(&record[6], "theta_j_y")?,
            parse_float(&record[7], "theta_j_z")?,
        );
        let v = Complex64::new(
            parse_float(&record[8], "re")?,
            parse_float(&record[9], "im")?,
        );
        rows.push((i, j, ti, tj, v));
    }

    let count = rows.len();
    let n = (count as f64).sqrt().round() as usize;
    if n * n != count || n == 0 {
        return Err(ScatError::InvalidConfig(format!(
            "CSV holds {count} entries, which is not a positive square"
        )));
    }

    let mut directions: Vec<Option<Vec3>> = vec![None; n];
    let mut values: Vec<Option<Complex64>> = vec![None; n * n];
    let mut check_direction = |idx: usize, dir: Vec3| -> Result<()> {
        if idx >= n {
            return Err(ScatError::InvalidConfig(format!(
                "direction index {idx} out of range for {n} directions"
            )));
        }
        match directions[idx] {
            None => {
                directions[idx] = Some(dir);
                Ok(())
            }
            Some(existing) if existing == dir => Ok(()),
            Some(existing) => Err(ScatError::InvalidConfig(format!(
                "direction {idx} stated inconsistently: {:?} vs {:?}",
                existing.as_array(),
                dir.as_array()
            ))),
        }
    };
    for &(i, j, ti, tj, v) in &rows {
        check_direction(i, ti)?;
        check_direction(j, tj)?;
        let slot = &mut values[i * n + j];
        if slot.is_some() {
            return Err(ScatError::InvalidConfig(format!("duplicate entry ({i}, {j})")));
        }
        *slot = Some(v);
    }

    let directions: Vec<Vec3> = directions
        .into_iter()
        .enumerate()
        .map(|(idx, d)| {
            d.ok_or_else(|| {
                ScatError::InvalidConfig(format!("no entry mentions direction {idx}"))
            })
        })
        .collect::<Result<_>>()?;
    let values: Vec<Complex64> = values
        .into_iter()
        .enumerate()
        .map(|(flat, v)| {
            v.ok_or_else(|| {
                ScatError::InvalidConfig(format!(
                    "missing entry ({}, {})",
                    flat / n,
                    flat % n
                ))
            })
        })
        .collect::<Result<_>>()?;

    FarFieldMatrix::new(kind, kappa, directions, values)
}

/// Sidecar path convention: same stem, `.meta.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Write a matrix and its metadata sidecar next to each other.
pub fn save_matrix(
    csv_path: &Path,
    matrix: &FarFieldMatrix,
    metadata: &MatrixMetadata,
) -> Result<()> {
    let file = fs::File::create(csv_path)?;
    write_matrix_csv(matrix, file)?;
    let meta = fs::File::create(sidecar_path(csv_path))?;
    serde_json::to_writer_pretty(meta, metadata)?;
    Ok(())
}

/// Load a matrix and its metadata sidecar.
pub fn load_matrix(csv_path: &Path) -> Result<(FarFieldMatrix, MatrixMetadata)> {
    let meta_file = fs::File::open(sidecar_path(csv_path))?;
    let metadata: MatrixMetadata = serde_json::from_reader(meta_file)?;
    let file = fs::File::open(csv_path)?;
    let matrix = read_matrix_csv(file, metadata.kind, metadata.kappa)?;
    Ok((matrix, metadata))
}

/// Serialise a whole measurement bundle to one JSON document. JSON floats
/// use shortest-exact formatting, so the bundle round-trips bit for bit.
pub fn save_bundle(path: &Path, bundle: &MeasurementBundle) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer(file, bundle)?;
    Ok(())
}

/// Load a bundle previously written by [`save_bundle`].
pub fn load_bundle(path: &Path) -> Result<MeasurementBundle> {
    let file = fs::File::open(path)?;
    Ok(serde_json::from_reader(file)?)
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------
