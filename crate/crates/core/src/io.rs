//! File formats: crosstalk CSV and sidecar, state files, density matrices.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back gives bit-identical values.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crosstalk::{mean_efficiency, visibility, CrosstalkMatrix};
use crate::detection::DetectionModel;
use crate::error::{Error, Result};
use crate::modes::{ModeIndex, SpatialState};
use crate::quadrature::GridSpec;
use crate::tomography::DensityMatrix;

/// Shortest round-trip text for a float, in exponent form outside
/// `[1e-5, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Header `label,<labels...>`, then one `label,<values...>` row per input.
pub fn write_crosstalk_csv<W: Write>(m: &CrosstalkMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("label").chain(m.labels().iter().map(String::as_str)))?;
    for (i, label) in m.labels().iter().enumerate() {
        let row = m.row(i).iter().map(|&x| fmt_f64(x));
        w.write_record(std::iter::once(label.clone()).chain(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the schema written by [`write_crosstalk_csv`]. Works for measured
/// matrices too; row labels must repeat the header labels in order.
pub fn read_crosstalk_csv<R: Read>(input: R) -> Result<CrosstalkMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::Format("crosstalk CSV must start with a `label` column".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let d = labels.len();
    let mut values = Vec::with_capacity(d * d);
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != d + 1 {
            return Err(Error::Format(format!("row {} has {} values, expected {d}", i + 1, record.len() - 1)));
        }
        if labels.get(i).map(String::as_str) != record.get(0) {
            return Err(Error::Format(format!(
                "row {} is labelled {:?}, expected {:?}",
                i + 1,
                record.get(0).unwrap_or(""),
                labels.get(i).map(String::as_str).unwrap_or("<none>")
            )));
        }
        for field in record.iter().skip(1) {
            values.push(field.parse::<f64>().map_err(|e| Error::Format(format!("row {}: {field:?}: {e}", i + 1)))?);
        }
        rows += 1;
    }
    if rows != d {
        return Err(Error::Format(format!("matrix has {rows} rows and {d} columns")));
    }
    CrosstalkMatrix::new(labels, values, None)
}

pub fn load_crosstalk_csv(path: &Path) -> Result<CrosstalkMatrix> {
    read_crosstalk_csv(BufReader::new(File::open(path)?))
}

/// Summary written next to a crosstalk CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkSidecar {
    pub dimension: usize,
    pub labels: Vec<String>,
    pub model: Option<DetectionModel>,
    pub grid: Option<GridSpec>,
    pub visibility: f64,
    pub mean_efficiency: f64,
}

impl CrosstalkSidecar {
    pub fn for_matrix(m: &CrosstalkMatrix) -> Result<Self> {
        Ok(Self {
            dimension: m.dim(),
            labels: m.labels().to_vec(),
            model: m.model().copied(),
            grid: m.model().map(|model| *model.grid()),
            visibility: visibility(m)?,
            mean_efficiency: mean_efficiency(m),
        })
    }
}

/// `{support: [tokens], coeffs: [[re, im], ...], waist}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub support: Vec<ModeIndex>,
    pub coeffs: Vec<[f64; 2]>,
    pub waist: f64,
}

impl StateFile {
    pub fn from_state(state: &SpatialState) -> Self {
        Self {
            support: state.modes().to_vec(),
            coeffs: state.coeffs().iter().map(|c| [c.re, c.im]).collect(),
            waist: state.waist(),
        }
    }

    /// The state with its coefficients rescaled to unit norm.
    pub fn to_state(&self) -> Result<SpatialState> {
        let coeffs = self.coeffs.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
        SpatialState::normalized(self.support.clone(), coeffs, self.waist)
    }
}

pub fn read_state_file(path: &Path) -> Result<SpatialState> {
    let file: StateFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    file.to_state()
}

/// Density matrix as JSON, entries as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixFile {
    pub support: Vec<ModeIndex>,
    pub rho: Vec<Vec<[f64; 2]>>,
}

impl DensityMatrixFile {
    pub fn from_density(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        Self {
            support: rho.support().to_vec(),
            rho: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
        }
    }
}

/// `|rho_ij|` with mode tokens as row and column labels.
pub fn write_density_abs_csv<W: Write>(rho: &DensityMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labels: Vec<String> = rho.support().iter().map(ToString::to_string).collect();
    w.write_record(std::iter::once("label".to_string()).chain(labels.iter().cloned()))?;
    let m = rho.matrix();
    for (i, label) in labels.iter().enumerate() {
        let row = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)].norm()));
        w.write_record(std::iter::once(label.clone()).chain(row))?;
    }
    w.flush()?;
    Ok(())
}
