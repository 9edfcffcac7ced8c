//! Matrix and mask files.
//!
//! CSV: one example per row, comma-separated, no header, `.` decimals.
//! Binary: `RSM1`, then `u32` row count and `u32` column count (little
//! endian), then row-major little-endian `f64` values.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::RepresentationMatrix;

pub const BINARY_MAGIC: &[u8; 4] = b"RSM1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

pub fn parse_csv_matrix<R: Read>(reader: R) -> Result<RepresentationMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                let field = field.trim();
                field.parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "line {}: cannot parse {field:?} as a number",
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no rows".into()));
    }
    RepresentationMatrix::from_rows(&rows)
}

pub fn write_csv_matrix<W: Write>(mut out: W, x: &RepresentationMatrix) -> Result<()> {
    let mut line = String::new();
    for row in x.data().rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn decode_binary_matrix(bytes: &[u8]) -> Result<RepresentationMatrix> {
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::Parse("missing RSM1 header".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Parse("dimensions overflow".into()))?;
    if body.len() != expected {
        return Err(Error::Parse(format!(
            "{rows}x{cols} matrix needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let data =
        Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Parse(e.to_string()))?;
    RepresentationMatrix::new(data)
}

pub fn encode_binary_matrix(x: &RepresentationMatrix) -> Result<Vec<u8>> {
    let rows =
        u32::try_from(x.n()).map_err(|_| Error::InvalidMatrix("too many rows for RSM1".into()))?;
    let cols = u32::try_from(x.p())
        .map_err(|_| Error::InvalidMatrix("too many columns for RSM1".into()))?;
    let mut out = Vec::with_capacity(12 + 8 * x.n() * x.p());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in x.data().rows().into_iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses either format, detected by the `RSM1` magic.
pub fn decode_matrix(bytes: &[u8]) -> Result<RepresentationMatrix> {
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary_matrix(bytes)
    } else {
        parse_csv_matrix(bytes)
    }
}

pub fn read_matrix(path: &Path) -> Result<RepresentationMatrix> {
    decode_matrix(&fs::read(path)?)
}

pub fn write_matrix(path: &Path, x: &RepresentationMatrix, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => {
            let mut buf = Vec::new();
            write_csv_matrix(&mut buf, x)?;
            fs::write(path, buf)?;
        }
        MatrixFormat::Binary => fs::write(path, encode_binary_matrix(x)?)?,
    }
    Ok(())
}

/// Mask sidecar: a single CSV row of `0`/`1`.
pub fn parse_mask(text: &str) -> Result<Vec<bool>> {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| Error::Parse("empty mask".into()))?;
    line.split(',')
        .map(|f| match f.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Parse(format!(
                "mask entries must be 0 or 1, found {other:?}"
            ))),
        })
        .collect()
}

pub fn format_mask(mask: &[bool]) -> String {
    let mut s: String = mask
        .iter()
        .map(|&m| if m { "1" } else { "0" })
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
    parse_mask(&fs::read_to_string(path)?)
}

pub fn write_mask(path: &Path, mask: &[bool]) -> Result<()> {
    fs::write(path, format_mask(mask))?;
    Ok(())
}
