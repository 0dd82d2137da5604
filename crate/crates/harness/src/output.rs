//! Result files.
//!
//! | file          | contents                                                      |
//! |---------------|---------------------------------------------------------------|
//! | `result.json` | the full [`ExperimentResult`] (`json` format)                 |
//! | `scalars.csv` | `key,value` for every scalar (`csv` format)                   |
//! | `errors.csv`  | error table columns, header only when there is no table       |
//! | `trace.jsonl` | `{"fit", "step", "elbo", "std_error"}` per optimizer step     |
//! | `curve.csv`   | `series,x,y`, written when the experiment produced curves     |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use symvi_core::diagnostics::ErrorTable;

use crate::error::HarnessError;
use crate::result::ExperimentResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

pub const CURVE_CSV_HEADER: &str = "series,x,y";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn result_to_json(result: &ExperimentResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("result serializes");
    s.push('\n');
    s
}

pub fn result_from_json(s: &str) -> Result<ExperimentResult, HarnessError> {
    serde_json::from_str(s).map_err(|e| HarnessError::InvalidConfig(format!("result.json: {e}")))
}

pub fn errors_csv(result: &ExperimentResult) -> String {
    match result.error_tables.first() {
        Some(t) => t.table.to_csv_string(),
        None => ErrorTable::empty().to_csv_string(),
    }
}

pub fn curves_csv(result: &ExperimentResult) -> String {
    let mut s = String::from(CURVE_CSV_HEADER);
    s.push('\n');
    for c in &result.curves {
        for (x, y) in &c.points {
            s.push_str(&format!("{},{x},{y}\n", c.series));
        }
    }
    s
}

pub fn scalars_csv(result: &ExperimentResult) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in &result.scalars {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

fn write_trace(path: &Path, result: &ExperimentResult) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Line<'a> {
        fit: &'a str,
        step: usize,
        elbo: f64,
        std_error: f64,
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for f in &result.fits {
        for r in &f.trace.records {
            let line = Line {
                fit: &f.label,
                step: r.step,
                elbo: r.elbo,
                std_error: r.std_error,
            };
            serde_json::to_writer(&mut w, &line).expect("trace line serializes");
            w.write_all(b"\n").map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Writes the result files into `dir`, creating it if needed, and returns
/// the paths written.
pub fn emit(result: &ExperimentResult, dir: &Path, format: Format) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let main = match format {
        Format::Json => (dir.join("result.json"), result_to_json(result)),
        Format::Csv => (dir.join("scalars.csv"), scalars_csv(result)),
    };
    write_file(&main.0, main.1.as_bytes())?;
    written.push(main.0);

    let errors = dir.join("errors.csv");
    write_file(&errors, errors_csv(result).as_bytes())?;
    written.push(errors);

    let trace = dir.join("trace.jsonl");
    write_trace(&trace, result)?;
    written.push(trace);

    if !result.curves.is_empty() {
        let curve = dir.join("curve.csv");
        write_file(&curve, curves_csv(result).as_bytes())?;
        written.push(curve);
    }
    Ok(written)
}
