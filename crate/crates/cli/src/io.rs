//! File formats: data CSV ingestion, matrix CSVs, JSON and hashing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gidag::score::MultiEnvDataset;
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// A dataset read from CSV together with non-fatal diagnostics.
#[derive(Debug)]
pub struct Ingested {
    pub data: MultiEnvDataset,
    pub columns: Vec<String>,
    pub warnings: Vec<String>,
}

/// Reads a CSV whose header starts with `context` (values `1..=K`) followed
/// by one numeric column per variable. Rows of a context need not be
/// contiguous; `K` is the largest context index present.
pub fn ingest(path: &Path) -> Result<Ingested> {
    let text = fs::read(path).map_err(CliError::io(path))?;
    ingest_bytes(&text, &path.display().to_string())
}

pub fn ingest_bytes(bytes: &[u8], name: &str) -> Result<Ingested> {
    let data_err = |msg: String| CliError::Data(format!("{name}: {msg}"));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    if header.get(0) != Some("context") {
        return Err(data_err("first header column must be `context`".into()));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let q = columns.len();
    if q == 0 {
        return Err(data_err("no variable columns".into()));
    }
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        if rec.len() != q + 1 {
            return Err(data_err(format!(
                "row {line} has {} fields, expected {}",
                rec.len(),
                q + 1
            )));
        }
        let k: usize = rec[0]
            .parse()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| {
                data_err(format!("row {line}: context `{}` is not an integer >= 1", &rec[0]))
            })?;
        if k > 64 {
            return Err(data_err(format!("row {line}: at most 64 contexts are supported")));
        }
        let mut vals = Vec::with_capacity(q);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                data_err(format!("row {line}, column `{}`: `{cell}` is not numeric", columns[j]))
            })?;
            if !v.is_finite() {
                return Err(data_err(format!(
                    "row {line}, column `{}`: value is not finite",
                    columns[j]
                )));
            }
            vals.push(v);
        }
        if rows.len() < k {
            rows.resize(k, Vec::new());
        }
        rows[k - 1].push(vals);
    }
    if rows.first().is_none_or(|r| r.is_empty()) {
        return Err(data_err(
            "context 1 (observational) has no rows; it must be present".into(),
        ));
    }
    let mut warnings = Vec::new();
    let blocks = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if r.is_empty() {
                warnings.push(format!("context {} has no rows", k + 1));
            }
            DMatrix::from_fn(r.len(), q, |i, j| r[i][j])
        })
        .collect();
    let data = MultiEnvDataset::new(q, blocks).map_err(|e| data_err(e.to_string()))?;
    Ok(Ingested { data, columns, warnings })
}

/// Renders a dataset in the ingest format.
pub fn format_dataset(data: &MultiEnvDataset) -> String {
    let q = data.q();
    let mut s = String::from("context");
    for j in 1..=q {
        let _ = write!(s, ",X{j}");
    }
    s.push('\n');
    for k in 0..data.k_count() {
        let b = data.block(k);
        for i in 0..b.nrows() {
            let _ = write!(s, "{}", k + 1);
            for j in 0..q {
                let _ = write!(s, ",{:e}", b[(i, j)]);
            }
            s.push('\n');
        }
    }
    s
}

/// Headerless numeric CSV into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read(path).map_err(CliError::io(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|c| {
                c.parse::<f64>().map_err(|_| {
                    CliError::Data(format!("{}: row {}: `{c}` is not numeric", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Matrix as CSV with six decimals and no header.
pub fn format_matrix(rows: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:.6}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Splits a row-major `q x q` vector into rows.
pub fn square(v: &[f64], q: usize) -> Vec<Vec<f64>> {
    v.chunks(q).map(<[f64]>::to_vec).collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serializing {}: {e}", path.display())))?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
