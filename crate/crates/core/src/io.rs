//! Delimited-text datasets and result files.
//!
//! Datasets are comma-separated with a header row of column names, one row
//! per sample and the response in the final column. Reports are written as
//! per-feature CSV tables or as versioned JSON documents that carry the
//! configuration and seeds of the run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, FitResult, ResponseVector, Task};
use crate::error::{Error, Result};
use crate::selection::StabilityReport;

/// Schema version written into every JSON report.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: ResponseVector,
    pub feature_names: Vec<String>,
    pub response_name: String,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

/// Reads a dataset. Standardization is left to the caller.
pub fn load_dataset(path: impl AsRef<Path>, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.len() < 2 || header.iter().all(String::is_empty) {
        return Err(parse_error(
            path,
            1,
            "expected a header with at least one feature column and a response column",
        ));
    }
    let width = header.len();
    let mut rows = Vec::new();
    let mut response = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_error(
                path,
                line,
                format!("row has {} fields, header has {width}", record.len()),
            ));
        }
        let mut row = Vec::with_capacity(width);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                parse_error(
                    path,
                    line,
                    format!(
                        "column {} ('{}'): '{cell}' is not a number",
                        col + 1,
                        header[col]
                    ),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    line,
                    format!(
                        "column {} ('{}'): non-finite value '{cell}'",
                        col + 1,
                        header[col]
                    ),
                ));
            }
            row.push(v);
        }
        response.push(row.pop().unwrap_or_default());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 2, "no data rows"));
    }
    let x = DesignMatrix::from_rows(&rows)?;
    let y = ResponseVector::new(Array1::from(response), task)?;
    let mut names = header;
    let response_name = names.pop().unwrap_or_default();
    Ok(Dataset {
        x,
        y,
        feature_names: names,
        response_name,
    })
}

/// Writes `x` (raw values) and `y` in the dataset layout. Missing feature
/// names default to `x0, x1, …`.
pub fn save_dataset(
    path: impl AsRef<Path>,
    x: &DesignMatrix,
    y: &ResponseVector,
    feature_names: Option<&[String]>,
) -> Result<()> {
    let path = path.as_ref();
    if x.n_samples() != y.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} responses",
            x.n_samples(),
            y.len()
        )));
    }
    let n = x.n_features();
    let mut header: Vec<String> = match feature_names {
        Some(names) if names.len() == n => names.to_vec(),
        Some(names) => {
            return Err(Error::Dimension(format!(
                "{} feature names for {n} features",
                names.len()
            )))
        }
        None => (0..n).map(|j| format!("x{j}")).collect(),
    };
    header.push("y".into());
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    let xv = x.values();
    let mut row = Vec::with_capacity(n + 1);
    for i in 0..x.n_samples() {
        row.clear();
        row.extend(xv.row(i).iter().map(|v| v.to_string()));
        row.push(y.values()[i].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "result")]
pub enum Report {
    Fit(FitResult),
    Stability(StabilityReport),
}

impl Report {
    /// Per-feature value (weight or selection probability) and selected flag.
    fn rows(&self) -> Vec<(f64, bool)> {
        match self {
            Report::Fit(f) => {
                let active: std::collections::BTreeSet<usize> =
                    f.active_set.iter().copied().collect();
                f.weights
                    .0
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (v, active.contains(&j)))
                    .collect()
            }
            Report::Stability(s) => {
                let stable: std::collections::BTreeSet<usize> =
                    s.stable_set.iter().copied().collect();
                s.probabilities
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| (p, stable.contains(&j)))
                    .collect()
            }
        }
    }
}

/// A report together with everything needed to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: u32,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub report: Report,
}

impl ReportFile {
    pub fn new(report: Report, config: serde_json::Value, seeds: BTreeMap<String, u64>) -> Self {
        ReportFile {
            version: REPORT_VERSION,
            config,
            seeds,
            report,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn save_report(file: &ReportFile, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, file).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        ReportFormat::Csv => {
            let value = match file.report {
                Report::Fit(_) => "weight",
                Report::Stability(_) => "probability",
            };
            let mut w = csv::Writer::from_writer(&mut out);
            let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
            w.write_record(["index", value, "selected"])
                .map_err(csv_err)?;
            for (j, (v, sel)) in file.report.rows().into_iter().enumerate() {
                w.write_record([j.to_string(), v.to_string(), sel.to_string()])
                    .map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<ReportFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let r: ReportFile =
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
    if r.version != REPORT_VERSION {
        return Err(parse_error(
            path,
            0,
            format!(
                "unsupported report version {} (expected {REPORT_VERSION})",
                r.version
            ),
        ));
    }
    Ok(r)
}

/// Reads a per-feature CSV report back as `(value, selected)` rows.
pub fn load_report_csv(path: impl AsRef<Path>) -> Result<Vec<(f64, bool)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record
            .map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = || parse_error(path, line, "expected index,value,selected");
        let v: f64 = record.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let s: bool = record.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        rows.push((v, s));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::ThresholdMode;
    use ndarray::array;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn three_by_two_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,y\n1,2\n3,4\n5,6\n");
        let d = load_dataset(&p, Task::Regression).unwrap();
        assert_eq!(d.x.n_samples(), 3);
        assert_eq!(d.x.n_features(), 1);
        assert_eq!(d.y.values().to_vec(), vec![2.0, 4.0, 6.0]);
        assert_eq!(d.feature_names, vec!["a"]);
        assert!(!d.x.is_standardized());
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "a,b,y\n1,2,3\n4,NaN,6\n");
        let err = load_dataset(&p, Task::Regression).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        assert!(err.contains("column 2"), "{err}");
    }

    #[test]
    fn ragged_and_non_numeric_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", "a,b,y\n1,2,3\n4,5\n");
        assert!(matches!(
            load_dataset(&p, Task::Regression),
            Err(Error::Parse { line: 3, .. })
        ));
        let p = write(&dir, "n.csv", "a,y\n1,x\n");
        assert!(matches!(
            load_dataset(&p, Task::Regression),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "");
        assert!(load_dataset(&p, Task::Regression).is_err());
        let p = write(&dir, "h.csv", "a,y\n");
        assert!(load_dataset(&p, Task::Regression).is_err());
    }

    #[test]
    fn missing_file_carries_path() {
        let err = load_dataset("/nonexistent/x.csv", Task::Regression).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.csv"));
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x =
            DesignMatrix::new(array![[0.1, 1.0 / 3.0], [-2.5e-17, 1e300], [7.0, -0.0]]).unwrap();
        let y = ResponseVector::regression(array![std::f64::consts::PI, -1.0, 2.0]).unwrap();
        let p = dir.path().join("rt.csv");
        save_dataset(&p, &x, &y, None).unwrap();
        let d = load_dataset(&p, Task::Regression).unwrap();
        assert_eq!(d.x.values(), x.values());
        assert_eq!(d.y, y);
    }

    #[test]
    fn empty_stable_set_csv() {
        let dir = tempfile::tempdir().unwrap();
        let s =
            StabilityReport::from_selections(3, vec![vec![], vec![]], ThresholdMode::Fixed(0.5), 0)
                .unwrap();
        let f = ReportFile::new(Report::Stability(s), serde_json::json!({}), BTreeMap::new());
        let p = dir.path().join("s.csv");
        save_report(&f, &p, ReportFormat::Csv).unwrap();
        let rows = load_report_csv(&p).unwrap();
        assert_eq!(rows, vec![(0.0, false); 3]);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fit = FitResult::new(array![0.0, 1.5, -2.0], vec![3.0, 2.0], true, 2);
        let seeds = BTreeMap::from([("rng_seed".to_string(), 42u64)]);
        let f = ReportFile::new(Report::Fit(fit), serde_json::json!({"lambda": 0.5}), seeds);
        let p = dir.path().join("r.json");
        save_report(&f, &p, ReportFormat::Json).unwrap();
        assert_eq!(load_report(&p).unwrap(), f);
    }
}
