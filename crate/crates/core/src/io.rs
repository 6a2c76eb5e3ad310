//! Plain-text and binary export of sampled complex fields.
//!
//! Binary layout: one line of UTF-8 JSON header terminated by `\n`, then
//! `rows × columns` little-endian IEEE-754 f64 values in row order
//! `(x, re, im)` for one-dimensional fields, or `(re, im)` for grids whose
//! axes live in the header `meta`. The header records `rows`, `columns` and
//! `dtype`.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Result};
use crate::Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHeader {
    pub rows: usize,
    pub columns: Vec<String>,
    pub dtype: String,
    /// Free-form run metadata.
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Writes `x,re,im` rows with a header line naming the abscissa.
pub fn write_complex_csv(path: &Path, x_name: &str, x: &[f64], values: &[Complex64]) -> Result<()> {
    if x.len() != values.len() {
        return Err(invalid("values", "abscissa and values differ in length"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{x_name},re,im")?;
    for (a, v) in x.iter().zip(values) {
        writeln!(w, "{a:.12e},{:.12e},{:.12e}", v.re, v.im)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a flat little-endian f64 table, `rows × columns.len()` values.
pub fn write_binary(path: &Path, columns: &[&str], flat: &[f64], meta: serde_json::Value) -> Result<()> {
    if columns.is_empty() || !flat.len().is_multiple_of(columns.len()) {
        return Err(invalid("values", "data length is not a multiple of the column count"));
    }
    let header = BinaryHeader {
        rows: flat.len() / columns.len(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
        dtype: "<f8".into(),
        meta,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for f in flat {
        w.write_all(&f.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<(BinaryHeader, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: BinaryHeader = serde_json::from_str(line.trim_end())?;
    if header.dtype != "<f8" || header.columns.is_empty() {
        return Err(invalid("header", "unsupported binary layout"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = header.rows * header.columns.len() * 8;
    if bytes.len() != expected {
        return Err(invalid(
            "body",
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let vals = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, vals))
}

pub fn write_complex_binary(
    path: &Path,
    x_name: &str,
    x: &[f64],
    values: &[Complex64],
    meta: serde_json::Value,
) -> Result<()> {
    if x.len() != values.len() {
        return Err(invalid("values", "abscissa and values differ in length"));
    }
    let flat: Vec<f64> = x.iter().zip(values).flat_map(|(a, v)| [*a, v.re, v.im]).collect();
    write_binary(path, &[x_name, "re", "im"], &flat, meta)
}

pub fn read_complex_binary(path: &Path) -> Result<(BinaryHeader, Vec<f64>, Vec<Complex64>)> {
    let (header, vals) = read_binary(path)?;
    if header.columns.len() != 3 {
        return Err(invalid("header", "expected three columns"));
    }
    let x = vals.chunks_exact(3).map(|c| c[0]).collect();
    let v = vals.chunks_exact(3).map(|c| Complex64::new(c[1], c[2])).collect();
    Ok((header, x, v))
}
