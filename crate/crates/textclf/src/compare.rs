//! A grid of training runs, one worker process per model, summarized in a
//! single table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use textclf_core::train::RunReport;
use textclf_core::zoo::ModelId;

use crate::error::CliError;
use crate::formats::{csv_writer, load_json};
use crate::pipeline::REPORT_FILE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub model: ModelId,
    pub status: String,
    pub test_auc: Option<f64>,
    pub validation_auc: Option<f64>,
    pub stop_epoch: Option<usize>,
    pub selected_epoch: Option<usize>,
    pub seconds_to_stop: Option<f64>,
    pub parameter_count: Option<usize>,
}

impl Row {
    fn failed(model: ModelId, why: String) -> Self {
        Self {
            model,
            status: format!("failed: {why}"),
            test_auc: None,
            validation_auc: None,
            stop_epoch: None,
            selected_epoch: None,
            seconds_to_stop: None,
            parameter_count: None,
        }
    }

    fn from_report(r: &RunReport) -> Self {
        Self {
            model: r.model_id,
            status: "ok".into(),
            test_auc: Some(r.test.auc),
            validation_auc: r.validation.as_ref().map(|v| v.auc),
            stop_epoch: Some(r.stop_epoch),
            selected_epoch: Some(r.selected_epoch),
            seconds_to_stop: Some(r.seconds_to_stop),
            parameter_count: Some(r.spec.parameter_count),
        }
    }
}

/// Trains every model of `models` by running `exe train --model m --out
/// <out>/m <train_args>`, at most `parallel` at a time. A failed run yields
/// a failed row; the rest of the grid still runs.
pub fn compare(
    exe: &Path,
    models: &[ModelId],
    train_args: &[String],
    out: &Path,
    parallel: usize,
) -> Result<Vec<Row>, CliError> {
    if models.is_empty() {
        return Err(CliError::usage("empty model grid"));
    }
    fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;
    let queue = Mutex::new(models.iter().copied().enumerate());
    let rows: Mutex<Vec<Option<Row>>> = Mutex::new(vec![None; models.len()]);
    thread::scope(|s| {
        for _ in 0..parallel.clamp(1, models.len()) {
            s.spawn(|| loop {
                let Some((i, model)) = queue.lock().unwrap().next() else {
                    break;
                };
                let row = run_cell(exe, model, train_args, &out.join(model.as_str()));
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let rows: Vec<Row> = rows
        .into_inner()
        .unwrap()
        .into_iter()
        .map(Option::unwrap)
        .collect();
    write_csv(&rows, &out.join("table.csv"))?;
    let text = format_table(&rows);
    let path = out.join("table.txt");
    fs::write(&path, &text).map_err(|e| CliError::write(&path, e))?;
    Ok(rows)
}

fn run_cell(exe: &Path, model: ModelId, train_args: &[String], dir: &PathBuf) -> Row {
    let output = Command::new(exe)
        .arg("train")
        .args(["--model", model.as_str()])
        .arg("--out")
        .arg(dir)
        .args(train_args)
        .output();
    match output {
        Err(e) => Row::failed(model, e.to_string()),
        Ok(o) if !o.status.success() => {
            let stderr = String::from_utf8_lossy(&o.stderr);
            let last = stderr.lines().last().unwrap_or("").trim().to_string();
            Row::failed(
                model,
                format!("exit {}: {last}", o.status.code().unwrap_or(-1)),
            )
        }
        Ok(_) => match load_json::<RunReport>(&dir.join(REPORT_FILE)) {
            Ok(r) => Row::from_report(&r),
            Err(e) => Row::failed(model, e.message),
        },
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cells(r: &Row) -> [String; 8] {
    let f4 = |v: Option<f64>| opt(v.map(|x| format!("{x:.4}")));
    [
        r.model.to_string(),
        f4(r.test_auc),
        f4(r.validation_auc),
        opt(r.stop_epoch),
        opt(r.selected_epoch),
        opt(r.seconds_to_stop.map(|x| format!("{x:.1}"))),
        opt(r.parameter_count),
        r.status.clone(),
    ]
}

const HEADER: [&str; 8] = [
    "model",
    "test_auc",
    "validation_auc",
    "stop_epoch",
    "selected_epoch",
    "seconds_to_stop",
    "parameters",
    "status",
];

fn write_csv(rows: &[Row], path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(HEADER)
        .map_err(|e| CliError::write(path, e))?;
    for r in rows {
        w.write_record(cells(r))
            .map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// Columns padded to their widest cell.
pub fn format_table(rows: &[Row]) -> String {
    let body: Vec<[String; 8]> = rows.iter().map(cells).collect();
    let mut widths = HEADER.map(str::len);
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cols: &[String]| {
        let cells: Vec<String> = cols
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    };
    line(&HEADER.map(String::from));
    for r in &body {
        line(r);
    }
    out
}
