//! Training metrics as JSON lines.
//!
//! `metrics.jsonl` holds one object per line:
//!
//! ```text
//! {"header": {"schema": 1, "config": {...}, "process": {...}}}
//! {"epoch": 1, "J": 0.52, "novelty": 0.31, "dt_ms": null, "seed": 0}
//! ...
//! {"summary": {"epochs": 30, "initial_j": 0.5, "final_j": 0.98, ...}}
//! ```
//!
//! Epoch records always carry exactly [`RECORD_KEYS`]. Every line is
//! flushed as soon as it is written. While a run is in progress the output
//! directory holds [`PARTIAL_MARKER`]; it is removed only after the
//! summary is written, and on failure it records why the run stopped.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ResolvedRun;
use crate::error::{Error, Result};
use crate::io::save_json;
use crate::optimizer::{train, EpochRecord, RunReport};

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const RECORD_KEYS: [&str; 5] = ["epoch", "J", "novelty", "dt_ms", "seed"];
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CSV_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOCUS_FILE: &str = "final_locus.json";
pub const ARCHIVE_FILE: &str = "archive.json";
pub const PARTIAL_MARKER: &str = "metrics.partial";

/// Writes header, records and summary to a JSONL sink, with an optional
/// CSV projection of the records.
pub struct MetricsWriter<W: Write, C: Write = W> {
    out: W,
    csv: Option<C>,
    records: u64,
}

fn line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn csv_field(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl<W: Write, C: Write> MetricsWriter<W, C> {
    pub fn new(out: W, csv: Option<C>) -> Self {
        Self { out, csv, records: 0 }
    }

    pub fn header(&mut self, header: Value) -> Result<()> {
        line(&mut self.out, &json!({ "header": header }))?;
        if let Some(csv) = &mut self.csv {
            writeln!(csv, "{}", RECORD_KEYS.join(","))?;
            csv.flush()?;
        }
        Ok(())
    }

    pub fn record(&mut self, r: &EpochRecord) -> Result<()> {
        line(&mut self.out, r)?;
        if let Some(csv) = &mut self.csv {
            writeln!(csv, "{},{},{},{},{}", r.epoch, r.j, csv_field(r.novelty), csv_field(r.dt_ms), r.seed)?;
            csv.flush()?;
        }
        self.records += 1;
        Ok(())
    }

    pub fn summary(&mut self, report: &RunReport) -> Result<()> {
        line(&mut self.out, &json!({ "summary": summary_value(report) }))
    }

    pub fn records_written(&self) -> u64 {
        self.records
    }

    pub fn into_inner(self) -> (W, Option<C>) {
        (self.out, self.csv)
    }
}

/// The scalar part of a run report.
pub fn summary_value(report: &RunReport) -> Value {
    json!({
        "epochs": report.epochs,
        "seed": report.seed,
        "initial_j": report.initial_j,
        "final_j": report.final_j,
        "best_j": report.best_j,
        "best_epoch": report.best_epoch,
    })
}

pub fn header_value(run: &ResolvedRun) -> Value {
    json!({
        "schema": METRICS_SCHEMA_VERSION,
        "config": run.config,
        "process": {
            "name": run.process.name(),
            "n_states": run.process.n_states(),
            "n_actions": run.process.n_actions(),
            "gamma": run.spec.gamma,
        },
    })
}

/// Files produced by [`run_to_dir`].
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub csv: Option<PathBuf>,
    pub summary: PathBuf,
}

/// Trains `run` and writes its metrics, summary, final locus and archive
/// into `dir`. A failure leaves [`PARTIAL_MARKER`] describing it.
pub fn run_to_dir(run: &ResolvedRun, dir: &Path, csv: bool) -> Result<(RunReport, RunFiles)> {
    std::fs::create_dir_all(dir)?;
    let marker = dir.join(PARTIAL_MARKER);
    std::fs::write(&marker, "{\"partial\": true, \"reason\": \"run in progress\"}\n")?;
    let files = RunFiles {
        metrics: dir.join(METRICS_FILE),
        csv: csv.then(|| dir.join(CSV_FILE)),
        summary: dir.join(SUMMARY_FILE),
    };
    let result = write_run(run, dir, &files);
    match &result {
        Ok(_) => std::fs::remove_file(&marker)?,
        Err((written, e)) => {
            // Best effort: the sink that failed may be the disk itself.
            let note = json!({"partial": true, "records_written": written, "error": e.to_string()});
            let _ = std::fs::write(&marker, format!("{note}\n"));
        }
    }
    result.map(|r| (r, files)).map_err(|(_, e)| e)
}

fn write_run(run: &ResolvedRun, dir: &Path, files: &RunFiles) -> std::result::Result<RunReport, (u64, Error)> {
    let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| (0, Error::from(e)));
    let out = open(&files.metrics)?;
    let csv = files.csv.as_deref().map(open).transpose()?;
    let mut writer = MetricsWriter::new(out, csv);
    writer.header(header_value(run)).map_err(|e| (0, e))?;
    let report = train(&run.process, &run.spec, run.locus.clone(), &run.settings, |r| writer.record(r));
    let written = writer.records_written();
    let report = report.map_err(|e| (written, e))?;
    let mut finish = || -> Result<()> {
        writer.summary(&report)?;
        let mut summary = summary_value(&report);
        summary["config"] = serde_json::to_value(&run.config)?;
        save_json(&files.summary, &summary)?;
        save_json(&dir.join(LOCUS_FILE), &report.final_locus)?;
        save_json(&dir.join(ARCHIVE_FILE), &report.archive)?;
        Ok(())
    };
    finish().map_err(|e| (written, e))?;
    Ok(report)
}
