//! On-disk formats: trajectory CSV, supply-rate JSON, noise-model JSON.
//!
//! Trajectories are CSV with one row per signal channel.  The header names
//! the channel column and the time indices `t0 ..= tT`; state rows carry
//! `T + 1` samples, input and output rows carry `T` (their final cell is
//! left empty).  Floats are written with 17 significant digits so parsing
//! reproduces them bit-exactly.
//!
//! Supply rates and noise models are JSON documents with explicit
//! dimensions and full (unpacked) symmetric matrices, so files stay
//! diff-able and language-neutral.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use dissipacert_core::sysmodel::{DataRecord, NoiseSpec, SupplyRate};
use dissipacert_core::{SymMat, Tolerances};

use crate::error::CliError;

/// Writes `bytes` to `path` atomically: the content lands in a temporary
/// file in the same directory first and is renamed over the target, so a
/// crash never leaves a half-written file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| CliError::Internal(format!("creating temporary file: {e}")))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Internal(format!("renaming into {}: {e}", path.display())))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::usage(&format!("reading {}", path.display()), e))
}

/// 17-significant-digit decimal form; round-trips every finite `f64`.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

/// Serialises a record to CSV bytes (see the module docs for the layout).
pub fn data_to_csv(record: &DataRecord) -> Result<Vec<u8>, CliError> {
    let t = record.t_len();
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(Vec::new());
    let mut header = vec!["channel".to_string()];
    header.extend((0..=t).map(|k| format!("t{k}")));
    w.write_record(&header)
        .map_err(|e| CliError::Internal(format!("csv write: {e}")))?;

    let mut write_channel = |name: String, values: Vec<f64>| -> Result<(), CliError> {
        let mut row = vec![name];
        row.extend(values.into_iter().map(fmt_float));
        // Keep rows rectangular: pad short (input/output) rows with one
        // empty cell so every row has T + 2 fields.
        while row.len() < t + 2 {
            row.push(String::new());
        }
        w.write_record(&row)
            .map_err(|e| CliError::Internal(format!("csv write: {e}")))
    };

    for i in 0..record.m() {
        write_channel(format!("u{i}"), record.u_minus().row(i).iter().copied().collect())?;
    }
    for i in 0..record.n() {
        write_channel(format!("x{i}"), record.x().row(i).iter().copied().collect())?;
    }
    for i in 0..record.p() {
        write_channel(format!("y{i}"), record.y_minus().row(i).iter().copied().collect())?;
    }
    w.into_inner()
        .map_err(|e| CliError::Internal(format!("csv flush: {e}")))
}

/// Parses a trajectory CSV; dimensions are inferred from the channel rows.
pub fn data_from_csv(bytes: &[u8]) -> Result<DataRecord, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(bytes);
    let mut u_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut x_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut y_rows: Vec<(usize, Vec<f64>)> = Vec::new();

    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Usage(format!("trajectory csv: {e}")))?;
        let mut fields = rec.iter();
        let name = fields
            .next()
            .ok_or_else(|| CliError::Usage("trajectory csv: empty row".into()))?
            .trim()
            .to_string();
        if name.is_empty() {
            continue;
        }
        let mut values = Vec::new();
        for f in fields {
            let f = f.trim();
            if f.is_empty() {
                continue;
            }
            values.push(f.parse::<f64>().map_err(|e| {
                CliError::Usage(format!("trajectory csv, channel {name}: bad float {f:?} ({e})"))
            })?);
        }
        let (prefix, index) = name.split_at(1);
        let index: usize = index.parse().map_err(|_| {
            CliError::Usage(format!(
                "trajectory csv: channel {name:?} is not of the form u<i>, x<i> or y<i>"
            ))
        })?;
        match prefix {
            "u" => u_rows.push((index, values)),
            "x" => x_rows.push((index, values)),
            "y" => y_rows.push((index, values)),
            _ => {
                return Err(CliError::Usage(format!(
                    "trajectory csv: unknown channel prefix in {name:?}"
                )))
            }
        }
    }

    let assemble = |mut rows: Vec<(usize, Vec<f64>)>, what: &str| -> Result<DMatrix<f64>, CliError> {
        rows.sort_by_key(|(i, _)| *i);
        for (pos, (i, _)) in rows.iter().enumerate() {
            if *i != pos {
                return Err(CliError::Usage(format!(
                    "trajectory csv: {what} channels must be indexed 0..k without gaps"
                )));
            }
        }
        let ncols = rows.first().map(|(_, v)| v.len()).unwrap_or(0);
        if rows.iter().any(|(_, v)| v.len() != ncols) {
            return Err(CliError::Usage(format!(
                "trajectory csv: {what} channels have inconsistent lengths"
            )));
        }
        let data: Vec<f64> = rows.into_iter().flat_map(|(_, v)| v).collect();
        Ok(DMatrix::from_row_slice(data.len() / ncols.max(1), ncols, &data))
    };

    if x_rows.is_empty() {
        return Err(CliError::Usage(
            "trajectory csv: no state channels (x0, x1, ...) present".into(),
        ));
    }
    let u = assemble(u_rows, "input")?;
    let x = assemble(x_rows, "state")?;
    let y = assemble(y_rows, "output")?;
    DataRecord::new(u, x, y).map_err(|e| CliError::Usage(format!("trajectory csv: {e}")))
}

pub fn write_data_csv(path: &Path, record: &DataRecord) -> Result<(), CliError> {
    write_atomic(path, &data_to_csv(record)?)
}

pub fn read_data_csv(path: &Path) -> Result<DataRecord, CliError> {
    data_from_csv(&read_bytes(path)?)
}

// ---------------------------------------------------------------------------
// Supply-rate JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SupplyFile {
    /// Number of input channels (leading block of the matrix).
    m: usize,
    /// Number of output channels (trailing block).
    p: usize,
    /// Full symmetric `(m+p) × (m+p)` coefficient matrix.
    matrix: Vec<Vec<f64>>,
}

pub fn supply_to_json(supply: &SupplyRate) -> Result<Vec<u8>, CliError> {
    let doc = SupplyFile {
        m: supply.m(),
        p: supply.p(),
        matrix: rows_of(supply.matrix().entries()),
    };
    to_pretty_bytes(&doc)
}

pub fn supply_from_json(bytes: &[u8]) -> Result<SupplyRate, CliError> {
    let doc: SupplyFile = serde_json::from_slice(bytes)
        .map_err(|e| CliError::Usage(format!("supply json: {e}")))?;
    let matrix = matrix_of(&doc.matrix, "supply json")?;
    let sym = SymMat::new(matrix, &Tolerances::default())
        .map_err(|e| CliError::Usage(format!("supply json: {e}")))?;
    SupplyRate::new(sym, doc.m, doc.p).map_err(|e| CliError::Usage(format!("supply json: {e}")))
}

pub fn write_supply_json(path: &Path, supply: &SupplyRate) -> Result<(), CliError> {
    write_atomic(path, &supply_to_json(supply)?)
}

pub fn read_supply_json(path: &Path) -> Result<SupplyRate, CliError> {
    supply_from_json(&read_bytes(path)?)
}

// ---------------------------------------------------------------------------
// Noise-model JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct NoiseFile {
    /// `N0` (exact), `N1` (transposed-form bound) or `N2` (direct form).
    model: String,
    /// Noise signal dimension `n + p` (quadratic models only).
    #[serde(skip_serializing_if = "Option::is_none")]
    signal_dim: Option<usize>,
    /// Number of samples `T` (quadratic models only).
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    /// Full symmetric parameter matrix (quadratic models only).
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
}

pub fn noise_to_json(spec: &NoiseSpec) -> Result<Vec<u8>, CliError> {
    let doc = match spec {
        NoiseSpec::N0 => NoiseFile {
            model: "N0".into(),
            signal_dim: None,
            horizon: None,
            matrix: None,
        },
        NoiseSpec::N1 { phi, q } => NoiseFile {
            model: "N1".into(),
            signal_dim: Some(*q),
            horizon: Some(phi.dim() - q),
            matrix: Some(rows_of(phi.entries())),
        },
        NoiseSpec::N2 { theta, q } => NoiseFile {
            model: "N2".into(),
            signal_dim: Some(theta.dim() - q),
            horizon: Some(*q),
            matrix: Some(rows_of(theta.entries())),
        },
    };
    to_pretty_bytes(&doc)
}

pub fn noise_from_json(bytes: &[u8]) -> Result<NoiseSpec, CliError> {
    let doc: NoiseFile =
        serde_json::from_slice(bytes).map_err(|e| CliError::Usage(format!("noise json: {e}")))?;
    let quadratic = |doc: &NoiseFile| -> Result<(SymMat, usize, usize), CliError> {
        let rows = doc
            .matrix
            .as_ref()
            .ok_or_else(|| CliError::Usage("noise json: quadratic model without matrix".into()))?;
        let q = doc.signal_dim.ok_or_else(|| {
            CliError::Usage("noise json: quadratic model without signal_dim".into())
        })?;
        let t = doc
            .horizon
            .ok_or_else(|| CliError::Usage("noise json: quadratic model without horizon".into()))?;
        let m = matrix_of(rows, "noise json")?;
        if m.nrows() != q + t {
            return Err(CliError::Usage(format!(
                "noise json: matrix of size {} does not match signal_dim {q} + horizon {t}",
                m.nrows()
            )));
        }
        let sym = SymMat::new(m, &Tolerances::default())
            .map_err(|e| CliError::Usage(format!("noise json: {e}")))?;
        Ok((sym, q, t))
    };
    match doc.model.as_str() {
        "N0" => Ok(NoiseSpec::N0),
        "N1" => {
            let (sym, q, _) = quadratic(&doc)?;
            NoiseSpec::n1(sym, q).map_err(|e| CliError::Usage(format!("noise json: {e}")))
        }
        "N2" => {
            let (sym, _, t) = quadratic(&doc)?;
            NoiseSpec::n2(sym, t).map_err(|e| CliError::Usage(format!("noise json: {e}")))
        }
        other => Err(CliError::Usage(format!(
            "noise json: unknown model {other:?} (expected N0, N1 or N2)"
        ))),
    }
}

pub fn write_noise_json(path: &Path, spec: &NoiseSpec) -> Result<(), CliError> {
    write_atomic(path, &noise_to_json(spec)?)
}

pub fn read_noise_json(path: &Path) -> Result<NoiseSpec, CliError> {
    noise_from_json(&read_bytes(path)?)
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn matrix_of(rows: &[Vec<f64>], context: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{context}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Usage(format!(
            "{context}: matrix rows must be nonempty and of equal length"
        )));
    }
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("{context}: non-finite matrix entry")));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

pub fn to_pretty_bytes<T: Serialize>(doc: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(doc)
        .map_err(|e| CliError::Internal(format!("json serialise: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}
