//! Trace and table emission.
//!
//! CSV values are written with 17 significant digits, which round-trips
//! every finite `f64`. JSON numbers use the shortest round-trip form.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use asyrgs_core::ErrorTrace;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Explicit choice, else `.json` extension, else CSV.
    pub fn resolve(explicit: Option<Format>, path: &Path) -> Format {
        explicit.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        })
    }
}

pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

pub fn trace_csv<W: Write>(trace: &ErrorTrace, w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = trace.a_norm_error_sq.as_ref();
    let mut header = vec!["iteration", "residual"];
    if err.is_some() {
        header.push("a_norm_error_sq");
    }
    header.push("time_seconds");
    wr.write_record(&header)?;
    for k in 0..trace.len() {
        let mut row = vec![trace.checkpoint_index[k].to_string(), fmt17(trace.residual_2norm[k])];
        if let Some(e) = err {
            row.push(fmt17(e[k]));
        }
        row.push(fmt17(trace.wall_time_seconds[k]));
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Inverse of [`trace_csv`].
pub fn read_trace_csv(path: &Path) -> CliResult<ErrorTrace> {
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (it, res, time) = match (col("iteration"), col("residual"), col("time_seconds")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(bad("missing trace columns".into())),
    };
    let err_col = col("a_norm_error_sq");
    let mut t = ErrorTrace {
        a_norm_error_sq: err_col.map(|_| Vec::new()),
        ..ErrorTrace::default()
    };
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{e} in {:?}", &rec[i])));
        t.checkpoint_index
            .push(rec[it].parse().map_err(|e| bad(format!("{e}")))?);
        t.residual_2norm.push(num(res)?);
        t.wall_time_seconds.push(num(time)?);
        if let (Some(c), Some(v)) = (err_col, t.a_norm_error_sq.as_mut()) {
            v.push(num(c)?);
        }
    }
    Ok(t)
}

pub fn trace_json(trace: &ErrorTrace) -> Value {
    let rows: Vec<Value> = (0..trace.len())
        .map(|k| {
            let mut r = json!({
                "iteration": trace.checkpoint_index[k],
                "residual": trace.residual_2norm[k],
                "time_seconds": trace.wall_time_seconds[k],
            });
            if let Some(e) = &trace.a_norm_error_sq {
                r["a_norm_error_sq"] = json!(e[k]);
            }
            r
        })
        .collect();
    Value::Array(rows)
}

/// The document validated by `schemas/trace.schema.json`.
pub fn trace_document(command: &str, trace: &ErrorTrace, summary: &Value, metadata: Option<Value>) -> Value {
    let mut doc = json!({
        "command": command,
        "summary": summary,
        "trace": trace_json(trace),
    });
    if let Some(m) = metadata {
        doc["metadata"] = m;
    }
    doc
}

/// Writes the trace; `summary` and `metadata` only reach the JSON form.
pub fn emit_trace(
    trace: &ErrorTrace,
    format: Format,
    path: &Path,
    command: &str,
    summary: &Value,
    metadata: Option<Value>,
) -> CliResult<()> {
    if trace.is_empty() {
        return Err(CliError::Solver("empty trace".into()));
    }
    match format {
        Format::Csv => {
            let f = File::create(path).map_err(|e| io_err(path, e))?;
            trace_csv(trace, f).map_err(|e| io_err(path, e))
        }
        Format::Json => write_json(path, &trace_document(command, trace, summary, metadata)),
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| io_err(path, e))?;
    f.write_all(b"\n").map_err(|e| io_err(path, e))
}

/// A table of homogeneous rows, headed by the serialized field names.
pub fn emit_table<T: Serialize>(rows: &[T], format: Format, path: &Path) -> CliResult<()> {
    match format {
        Format::Json => write_json(path, rows),
        Format::Csv => {
            let mut wr = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
            for r in rows {
                wr.serialize(r).map_err(|e| io_err(path, e))?;
            }
            wr.flush().map_err(|e| io_err(path, e))
        }
    }
}

/// `x` as a CSV of `step, x_0, …` rows or a JSON array of arrays.
pub fn emit_trajectory(iterates: &[Vec<f64>], format: Format, path: &Path) -> CliResult<()> {
    match format {
        Format::Json => write_json(path, iterates),
        Format::Csv => {
            let mut wr = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
            let n = iterates.first().map_or(0, Vec::len);
            let mut header = vec!["step".to_string()];
            header.extend((0..n).map(|i| format!("x{i}")));
            wr.write_record(&header).map_err(|e| io_err(path, e))?;
            for (s, x) in iterates.iter().enumerate() {
                let mut row = vec![s.to_string()];
                row.extend(x.iter().map(|v| fmt17(*v)));
                wr.write_record(&row).map_err(|e| io_err(path, e))?;
            }
            wr.flush().map_err(|e| io_err(path, e))
        }
    }
}
