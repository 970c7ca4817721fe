//! Plain-text artifacts.
//!
//! Complex matrices are stored as a `rows cols` line followed by one line per
//! row of interleaved `re im` pairs. Real vectors are one value per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{cplx, CMatrix};

use super::ResultRow;

pub fn write_matrix(path: &Path, m: &CMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:e} {:e}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<CMatrix> {
    let bad = |reason: &str| Error::invalid(path.display().to_string(), reason.to_string());
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad header")))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad("header must be `rows cols`"));
    };
    let mut m = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| bad("missing row"))??;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad number")))
            .collect::<Result<_>>()?;
        if v.len() != 2 * cols {
            return Err(bad("wrong row length"));
        }
        for j in 0..cols {
            m[(i, j)] = cplx(v[2 * j], v[2 * j + 1]);
        }
    }
    Ok(m)
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    w.flush()?;
    Ok(())
}

pub(super) fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iteration,rate_nats,rate_bits")?;
    for (i, r) in trace.iter().enumerate() {
        writeln!(w, "{i},{r:e},{:e}", r / std::f64::consts::LN_2)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid("csv", format!("{other:?}")),
    }
}

/// Row-at-a-time CSV output, flushed after each row.
pub(super) struct RowWriter {
    inner: csv::Writer<File>,
}

impl RowWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(csv_error)?;
        inner.write_record(super::CSV_HEADER.split(',')).map_err(csv_error)?;
        inner.flush()?;
        Ok(RowWriter { inner })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        self.inner.serialize(row).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub(super) fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = RowWriter::create(path)?;
    for row in rows {
        w.write(row)?;
    }
    Ok(())
}
