//! Sample CSV input and CSV/JSON output.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use kolmogorov::PointCloud;

use crate::CliError;

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Reads one sample per row. With `header = None` the first row is treated
/// as a header when any of its fields fails to parse as a number.
pub fn read_samples(path: &Path, header: Option<bool>) -> Result<PointCloud, CliError> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Validation(format!("cannot read samples {}: {e}", path.display())))?;
    parse_samples(&text, header).map_err(|e| match e {
        CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_samples(text: &str, header: Option<bool>) -> Result<PointCloud, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("row {}: {e}", k + 1)))?;
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(CliError::Validation("no rows".into()));
    }
    let skip = header.unwrap_or_else(|| rows[0].iter().any(|f| parse_field(f).is_none()));
    let data = &rows[usize::from(skip)..];
    let Some(first) = data.first() else {
        return Err(CliError::Validation("no data rows after the header".into()));
    };
    let m = first.len();
    let mut coords = Vec::with_capacity(data.len() * m);
    for (k, rec) in data.iter().enumerate() {
        let row = k + 1 + usize::from(skip);
        if rec.len() != m {
            return Err(CliError::Validation(format!(
                "row {row} has {} fields, expected {m}",
                rec.len()
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v = parse_field(field).ok_or_else(|| {
                CliError::Validation(format!("row {row}, column {}: '{field}' is not a number", c + 1))
            })?;
            if !v.is_finite() {
                return Err(CliError::Validation(format!(
                    "row {row}, column {}: non-finite value {field}",
                    c + 1
                )));
            }
            coords.push(v);
        }
    }
    Ok(PointCloud::new(coords, m)?)
}

/// Column-oriented CSV writer; numbers use the shortest round-trip form.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(&self.header).map_err(|e| csv_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn coord_names(m: usize) -> Vec<String> {
    (1..=m).map(|s| format!("x{s}")).collect()
}

/// `index, x1..xm` prefix for per-sample rows.
pub fn sample_prefix(cloud: &PointCloud, i: usize) -> Vec<String> {
    std::iter::once(i.to_string())
        .chain(cloud.point(i).iter().map(|v| num(*v)))
        .collect()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir.to_path_buf())
}
