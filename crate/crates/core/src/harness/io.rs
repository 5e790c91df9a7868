//! CSV formats.
//!
//! - Matrix: header of 1-based column ids, one row per period, values with
//!   17 significant digits so that a write/read round trip is exact.
//! - Scheme: `column,start,length`, 1-based column and start row.
//! - Observations: `segment,value`, 1-based segment id in scheme order.
//! - Thresholds: `column,rho`, 1-based.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{AggregationScheme, ObservationVector, Segment};
use crate::SeriesMatrix;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::csv(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix(path: &Path, matrix: &SeriesMatrix) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record((1..=matrix.ncols()).map(|n| n.to_string())).map_err(|e| Error::csv(path, e))?;
    for row in matrix.rows() {
        w.write_record(row.iter().map(|&v| format_value(v))).map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

pub fn read_matrix(path: &Path) -> Result<SeriesMatrix> {
    let mut r = reader(path)?;
    let series = r.headers().map_err(|e| Error::csv(path, e))?.len();
    let mut values = Vec::new();
    let mut periods = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() != series {
            return Err(Error::Input(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                record.len(),
                series
            )));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Input(format!("{}: row {}, column {}: not a number: '{field}'", path.display(), i + 1, j + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Input(format!(
                    "{}: row {}, column {}: non-finite value",
                    path.display(),
                    i + 1,
                    j + 1
                )));
            }
            values.push(v);
        }
        periods += 1;
    }
    if periods == 0 || series == 0 {
        return Err(Error::Input(format!("{}: empty matrix", path.display())));
    }
    Array2::from_shape_vec((periods, series), values).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRecord {
    column: usize,
    start: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRecord {
    segment: usize,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RhoRecord {
    column: usize,
    rho: f64,
}

pub fn write_scheme(path: &Path, scheme: &AggregationScheme) -> Result<()> {
    let mut w = writer(path)?;
    for s in scheme.segments() {
        w.serialize(SegmentRecord { column: s.column + 1, start: s.start + 1, length: s.length })
            .map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

/// Reads a scheme. Without explicit dimensions they are inferred as the
/// smallest shape containing every segment, which misses uncovered trailing
/// rows or columns.
pub fn read_scheme(path: &Path, shape: Option<(usize, usize)>) -> Result<AggregationScheme> {
    let mut segments = Vec::new();
    for (i, record) in reader(path)?.deserialize::<SegmentRecord>().enumerate() {
        let rec = record.map_err(|e| Error::csv(path, e))?;
        if rec.column == 0 || rec.start == 0 {
            return Err(Error::Input(format!(
                "{}: row {}: column and start are 1-based",
                path.display(),
                i + 1
            )));
        }
        segments.push(Segment { column: rec.column - 1, start: rec.start - 1, length: rec.length });
    }
    let (periods, series) = match shape {
        Some(shape) => shape,
        None => {
            let periods = segments.iter().map(|s| s.start + s.length).max().unwrap_or(0);
            let series = segments.iter().map(|s| s.column + 1).max().unwrap_or(0);
            log::warn!(
                "{}: dimensions inferred from segments as {periods}x{series}; pass --periods/--series if rows or \
                 columns are unobserved",
                path.display()
            );
            (periods, series)
        }
    };
    AggregationScheme::new(periods, series, segments)
}

pub fn write_observations(path: &Path, b: &ObservationVector) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["segment", "value"]).map_err(|e| Error::csv(path, e))?;
    for (d, &v) in b.values().iter().enumerate() {
        w.write_record([(d + 1).to_string(), format_value(v)]).map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

pub fn read_observations(path: &Path, scheme: AggregationScheme) -> Result<ObservationVector> {
    let mut values = vec![f64::NAN; scheme.len()];
    for (i, record) in reader(path)?.deserialize::<ObservationRecord>().enumerate() {
        let rec = record.map_err(|e| Error::csv(path, e))?;
        if rec.segment == 0 || rec.segment > values.len() {
            return Err(Error::Dimension(format!(
                "{}: row {}: segment {} outside 1..={}",
                path.display(),
                i + 1,
                rec.segment,
                values.len()
            )));
        }
        if !values[rec.segment - 1].is_nan() {
            return Err(Error::Input(format!("{}: segment {} listed twice", path.display(), rec.segment)));
        }
        values[rec.segment - 1] = rec.value;
    }
    if let Some(d) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Dimension(format!("{}: no value for segment {}", path.display(), d + 1)));
    }
    ObservationVector::new(scheme, Array1::from(values))
}

pub fn write_rho(path: &Path, rho: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["column", "rho"]).map_err(|e| Error::csv(path, e))?;
    for (n, &r) in rho.iter().enumerate() {
        w.write_record([(n + 1).to_string(), format_value(r)]).map_err(|e| Error::csv(path, e))?;
    }
    finish(w, path)
}

/// Reads one threshold per column `1..=series`.
pub fn read_rho(path: &Path, series: usize) -> Result<Vec<f64>> {
    let mut rho = vec![f64::NAN; series];
    for (i, record) in reader(path)?.deserialize::<RhoRecord>().enumerate() {
        let rec = record.map_err(|e| Error::csv(path, e))?;
        if rec.column == 0 || rec.column > series {
            return Err(Error::Dimension(format!(
                "{}: row {}: column {} outside 1..={series}",
                path.display(),
                i + 1,
                rec.column
            )));
        }
        rho[rec.column - 1] = rec.rho;
    }
    if let Some(n) = rho.iter().position(|v| v.is_nan()) {
        return Err(Error::Dimension(format!("{}: no threshold for column {}", path.display(), n + 1)));
    }
    Ok(rho)
}

/// Writes any serializable value as TOML.
pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
