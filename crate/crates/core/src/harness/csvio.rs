//! Plain CSV readers and writers for matrices, masks, labels and sparse
//! coefficient triplets.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file read back yields bit-identical values. Missing entries are `NaN`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SssaError};

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| SssaError::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file)))
}

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| SssaError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file)))
}

fn csv_err(path: &Path, e: csv::Error) -> SssaError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => SssaError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        SssaError::Data(format!("{}: {e}", path.display()))
    }
}

fn flush(path: &Path, mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush().map_err(|e| SssaError::io(path, e))
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_float(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        SssaError::Data(format!(
            "{}: line {}: cannot parse '{field}' as a number",
            path.display(),
            line + 1
        ))
    })
}

/// Reads a rectangular table, converting each cell with `parse`.
fn read_table<T>(
    path: &Path,
    parse: impl Fn(usize, &str) -> Result<T>,
) -> Result<(usize, usize, Vec<T>)> {
    let mut rdr = reader(path, false)?;
    let mut cells = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(SssaError::Data(format!(
                    "{}: line {} has {} fields, expected {c}",
                    path.display(),
                    line + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            cells.push(parse(line, field)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| SssaError::Data(format!("{}: empty file", path.display())))?;
    Ok((rows, cols, cells))
}

/// One matrix row per line.
pub fn write_matrix(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    for i in 0..x.nrows() {
        w.write_record(x.row(i).iter().map(|&v| format_float(v)))
            .map_err(|e| csv_err(path, e))?;
    }
    flush(path, w)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let (rows, cols, cells) = read_table(path, |line, f| parse_float(path, line, f))?;
    Ok(DMatrix::from_row_slice(rows, cols, &cells))
}

/// `1` for observed, `0` for missing.
pub fn write_mask(path: &Path, mask: &DMatrix<bool>) -> Result<()> {
    let mut w = writer(path)?;
    for i in 0..mask.nrows() {
        w.write_record(mask.row(i).iter().map(|&b| if b { "1" } else { "0" }))
            .map_err(|e| csv_err(path, e))?;
    }
    flush(path, w)
}

pub fn read_mask(path: &Path) -> Result<DMatrix<bool>> {
    let (rows, cols, cells) = read_table(path, |line, f| match f {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(SssaError::Data(format!(
            "{}: line {}: mask entries must be 0 or 1, got '{f}'",
            path.display(),
            line + 1
        ))),
    })?;
    Ok(DMatrix::from_row_slice(rows, cols, &cells))
}

/// One integer label per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = writer(path)?;
    for l in labels {
        w.write_record([l.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    flush(path, w)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let (_, cols, cells) = read_table(path, |line, f| {
        f.parse::<usize>().map_err(|_| {
            SssaError::Data(format!(
                "{}: line {}: '{f}' is not a non-negative integer label",
                path.display(),
                line + 1
            ))
        })
    })?;
    if cols != 1 {
        return Err(SssaError::Data(format!(
            "{}: expected one label per line",
            path.display()
        )));
    }
    Ok(cells)
}

/// Nonzero entries as `row,col,value` triplets in column-major order.
pub fn write_sparse(path: &Path, c: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["row", "col", "value"])
        .map_err(|e| csv_err(path, e))?;
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            let v = c[(i, j)];
            if v != 0.0 {
                w.write_record([i.to_string(), j.to_string(), format_float(v)])
                    .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    flush(path, w)
}

pub fn read_sparse(path: &Path, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut rdr = reader(path, true)?;
    let mut c = DMatrix::zeros(rows, cols);
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let bad = || SssaError::Data(format!("{}: line {}: malformed triplet", path.display(), line + 2));
        if record.len() != 3 {
            return Err(bad());
        }
        let i: usize = record[0].parse().map_err(|_| bad())?;
        let j: usize = record[1].parse().map_err(|_| bad())?;
        let v = parse_float(path, line + 1, &record[2])?;
        if i >= rows || j >= cols {
            return Err(SssaError::Shape {
                expected: (rows, cols),
                got: (i + 1, j + 1),
            });
        }
        c[(i, j)] = v;
    }
    Ok(c)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| SssaError::Data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| SssaError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| SssaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SssaError::Data(format!("{}: {e}", path.display())))
}
