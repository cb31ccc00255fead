//! CSV tables written by the commands.
//!
//! Reals are written with 17 significant digits so that they parse back to
//! the same `f64`. A missing value (the symbol error rate of a non-QPSK
//! prior) is an empty field. Sweeps add a leading `point` column holding the
//! sweep label.

use std::io::Write;
use std::path::Path;

use mlgamp::{ExperimentRecord, IterationSummary, SeLayer};

use crate::CliError;

pub const RUN_HEADER: [&str; 7] = ["trial", "iter", "nmse", "nmse_db", "ser", "se_mse", "se_mse_db"];
pub const COMPARE_HEADER: [&str; 9] =
    ["iter", "trials", "mean_nmse", "mean_nmse_db", "std_err", "ser", "se_mse", "se_mse_db", "gap_db"];

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

pub fn se_header(layers: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "mse", "mse_db"].iter().map(|s| s.to_string()).collect();
    for l in 1..=layers {
        for name in ["V", "q", "Sigma", "d"] {
            h.push(format!("{name}{l}"));
        }
    }
    h
}

/// Builds a table in memory; the file is only created by [`Table::write`].
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
    with_point: bool,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S], with_point: bool) -> Result<Self, CliError> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut row: Vec<&str> = Vec::with_capacity(header.len() + 1);
        if with_point {
            row.push("point");
        }
        row.extend(header.iter().map(AsRef::as_ref));
        writer.write_record(&row).map_err(io)?;
        Ok(Self { writer, with_point })
    }

    fn push(&mut self, point: &str, fields: Vec<String>) -> Result<(), CliError> {
        if self.with_point {
            self.writer.write_field(point).map_err(io)?;
        }
        self.writer.write_record(&fields).map_err(io)
    }

    pub fn run_row(&mut self, point: &str, r: &ExperimentRecord) -> Result<(), CliError> {
        self.push(
            point,
            vec![
                r.trial.to_string(),
                r.iteration.to_string(),
                real(r.nmse),
                real(r.nmse_db),
                opt_real(r.ser),
                real(r.se_mse),
                real(r.se_mse_db),
            ],
        )
    }

    pub fn se_row(&mut self, point: &str, iter: usize, mse: f64, layers: &[SeLayer]) -> Result<(), CliError> {
        let mut fields = vec![iter.to_string(), real(mse), real(mlgamp::to_db(mse))];
        for s in layers {
            fields.extend([real(s.v), real(s.q), real(s.sigma), real(s.d)]);
        }
        self.push(point, fields)
    }

    pub fn compare_row(&mut self, point: &str, s: &IterationSummary) -> Result<(), CliError> {
        self.push(
            point,
            vec![
                s.iteration.to_string(),
                s.trials.to_string(),
                real(s.mean_nmse),
                real(s.mean_nmse_db),
                real(s.std_err),
                opt_real(s.pooled_ser),
                real(s.se_mse),
                real(s.se_mse_db),
                real(s.gap_db),
            ],
        )
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        let bytes = self.writer.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::File::create(path).and_then(|mut f| f.write_all(&bytes)).map_err(|e| {
            CliError::Io(format!("{}: {e}", path.display()))
        })
    }
}

fn io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// One row of a run table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub point: Option<String>,
    pub trial: usize,
    pub iter: usize,
    pub nmse: f64,
    pub nmse_db: f64,
    pub ser: Option<f64>,
    pub se_mse: f64,
    pub se_mse_db: f64,
}

impl RunRow {
    pub fn from_record(point: Option<&str>, r: &ExperimentRecord) -> Self {
        Self {
            point: point.map(str::to_string),
            trial: r.trial,
            iter: r.iteration,
            nmse: r.nmse,
            nmse_db: r.nmse_db,
            ser: r.ser,
            se_mse: r.se_mse,
            se_mse_db: r.se_mse_db,
        }
    }
}

/// Parses a table written by the `run` command.
pub fn read_run_table(text: &str) -> Result<Vec<RunRow>, CliError> {
    let bad = |msg: String| CliError::Io(format!("malformed run table: {msg}"));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(io)?.iter().map(str::to_string).collect();
    let with_point = header.first().is_some_and(|h| h == "point");
    if header[usize::from(with_point)..] != RUN_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let real = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
    let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(io)?;
            let f: Vec<&str> = rec.iter().collect();
            let (point, f) = if with_point { (Some(f[0].to_string()), &f[1..]) } else { (None, &f[..]) };
            Ok(RunRow {
                point,
                trial: int(f[0])?,
                iter: int(f[1])?,
                nmse: real(f[2])?,
                nmse_db: real(f[3])?,
                ser: if f[4].is_empty() { None } else { Some(real(f[4])?) },
                se_mse: real(f[5])?,
                se_mse_db: real(f[6])?,
            })
        })
        .collect()
}
