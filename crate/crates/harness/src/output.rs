//! CSV and metadata files.
//!
//! All files are UTF-8 with a header row. Floating-point values are written
//! with 17 significant digits so they parse back to the same `f64`.
//!
//! | file | columns |
//! |---|---|
//! | `diagnostics.csv` | step, t, rank, eta, reject_bound, norm, retries, tail, working_rank, theta, truncation_error, rank_capped, rejections |
//! | `flux_t<time>.csv` | x, phi |
//! | `sv_t<time>.csv` | index, sigma |
//! | `timings.csv` | step, k_seconds, l_seconds, s_seconds, merge_seconds, total_seconds |
//! | `compare.csv` | requested, time, a_vs_b, a_vs_reference, b_vs_reference |
//! | `convergence.csv` | h, theta, error, steps, final_rank |
//!
//! `rejections` joins the reasons of the retries of a step with `;`.
//! `run_meta.txt` and `converge_meta.txt` hold `key = value` lines.

use std::fs::File;
use std::path::{Path, PathBuf};

use dlra::integrators::StepRecord;

use crate::error::{HarnessError, Result};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const RUN_META_FILE: &str = "run_meta.txt";
pub const COMPARE_FILE: &str = "compare.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const CONVERGE_META_FILE: &str = "converge_meta.txt";

pub const DIAGNOSTICS_HEADER: [&str; 13] = [
    "step",
    "t",
    "rank",
    "eta",
    "reject_bound",
    "norm",
    "retries",
    "tail",
    "working_rank",
    "theta",
    "truncation_error",
    "rank_capped",
    "rejections",
];

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn flux_file_name(requested: f64) -> String {
    format!("flux_t{requested}.csv")
}

pub fn singular_values_file_name(requested: f64) -> String {
    format!("sv_t{requested}.csv")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes rows of already formatted fields.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Header and rows of a CSV file.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err(path))?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Reads a table whose columns are all numeric.
pub fn read_numeric_table(path: &Path, expected_header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_table(path)?;
    if header != expected_header {
        return Err(parse_err(
            path,
            format!("header {header:?}, expected {expected_header:?}"),
        ));
    }
    rows.into_iter()
        .map(|row| {
            row.iter()
                .map(|v| v.parse::<f64>().map_err(|e| parse_err(path, format!("'{v}': {e}"))))
                .collect()
        })
        .collect()
}

/// Streams `diagnostics.csv` one step at a time.
pub struct DiagnosticsWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(csv_err(path))?;
        inner.write_record(DIAGNOSTICS_HEADER).map_err(csv_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<()> {
        let rejections: Vec<String> = r.rejections.iter().map(|x| x.to_string()).collect();
        self.inner
            .write_record([
                r.step.to_string(),
                fmt_f64(r.t),
                r.rank.to_string(),
                fmt_f64(r.eta),
                fmt_f64(r.reject_bound),
                fmt_f64(r.norm),
                r.retries.to_string(),
                fmt_f64(r.tail),
                r.working_rank.to_string(),
                fmt_f64(r.theta),
                fmt_f64(r.truncation_error),
                r.rank_capped.to_string(),
                rejections.join(";"),
            ])
            .map_err(csv_err(&self.path))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(io_err(&self.path))
    }
}

/// One parsed row of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    pub rank: usize,
    pub eta: f64,
    pub reject_bound: f64,
    pub norm: f64,
    pub retries: usize,
    pub tail: f64,
    pub working_rank: usize,
    pub theta: f64,
    pub truncation_error: f64,
    pub rank_capped: bool,
    pub rejections: Vec<String>,
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let (header, rows) = read_table(path)?;
    if header != DIAGNOSTICS_HEADER {
        return Err(parse_err(path, format!("unexpected header {header:?}")));
    }
    fn field<T: std::str::FromStr>(path: &Path, v: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        v.parse().map_err(|e| parse_err(path, format!("'{v}': {e}")))
    }
    rows.iter()
        .map(|row| {
            Ok(DiagnosticsRow {
                step: field(path, &row[0])?,
                t: field(path, &row[1])?,
                rank: field(path, &row[2])?,
                eta: field(path, &row[3])?,
                reject_bound: field(path, &row[4])?,
                norm: field(path, &row[5])?,
                retries: field(path, &row[6])?,
                tail: field(path, &row[7])?,
                working_rank: field(path, &row[8])?,
                theta: field(path, &row[9])?,
                truncation_error: field(path, &row[10])?,
                rank_capped: field(path, &row[11])?,
                rejections: if row[12].is_empty() {
                    Vec::new()
                } else {
                    row[12].split(';').map(str::to_string).collect()
                },
            })
        })
        .collect()
}

pub fn write_flux(path: &Path, x: &[f64], phi: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = x.iter().zip(phi).map(|(a, b)| vec![fmt_f64(*a), fmt_f64(*b)]).collect();
    write_table(path, &["x", "phi"], &rows)
}

/// `(x, phi)` columns of a flux file.
pub fn read_flux(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = read_numeric_table(path, &["x", "phi"])?;
    Ok(rows.into_iter().map(|r| (r[0], r[1])).unzip())
}

pub fn write_singular_values(path: &Path, sigma: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = sigma
        .iter()
        .enumerate()
        .map(|(i, s)| vec![i.to_string(), fmt_f64(*s)])
        .collect();
    write_table(path, &["index", "sigma"], &rows)
}

pub fn write_timings(path: &Path, records: &[StepRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let t = &r.timings;
            vec![
                r.step.to_string(),
                fmt_f64(t.k.as_secs_f64()),
                fmt_f64(t.l.as_secs_f64()),
                fmt_f64(t.s.as_secs_f64()),
                fmt_f64(t.merge.as_secs_f64()),
                fmt_f64(t.total.as_secs_f64()),
            ]
        })
        .collect();
    write_table(
        path,
        &[
            "step",
            "k_seconds",
            "l_seconds",
            "s_seconds",
            "merge_seconds",
            "total_seconds",
        ],
        &rows,
    )
}

pub fn write_meta(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_meta(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| parse_err(path, format!("line without '=': {l}")))
        })
        .collect()
}
