use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::train::{TrainOutcome, Variant};

use super::MetricsReport;

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Column names of a CSV file.
pub fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    Ok(r.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect())
}

/// One line of a metrics history file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub loss: f64,
}

pub const HISTORY_COLUMNS: [&str; 5] = ["epoch", "split", "accuracy", "macro_precision", "loss"];

pub fn history_rows(outcome: &TrainOutcome) -> Vec<HistoryRow> {
    outcome
        .history
        .iter()
        .map(|h| HistoryRow {
            epoch: h.epoch,
            split: h.split.to_string(),
            accuracy: h.accuracy,
            macro_precision: h.macro_precision,
            loss: h.loss,
        })
        .collect()
}

/// Per-seed results of one split, plus a `mean` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: String,
    pub split: String,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub best_epoch: Option<usize>,
    pub runtime_secs: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn summary_rows(outcomes: &[TrainOutcome]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let parts: [(&str, fn(&TrainOutcome) -> &MetricsReport); 2] = [("val", |o| &o.val), ("test", |o| &o.test)];
    for (split, report) in parts {
        for o in outcomes {
            let r = report(o);
            rows.push(SummaryRow {
                seed: o.seed.to_string(),
                split: split.into(),
                accuracy: r.accuracy,
                macro_precision: r.macro_precision,
                best_epoch: Some(o.best_epoch),
                runtime_secs: o.runtime_secs,
            });
        }
        rows.push(SummaryRow {
            seed: "mean".into(),
            split: split.into(),
            accuracy: mean(outcomes.iter().map(|o| report(o).accuracy)),
            macro_precision: mean(outcomes.iter().map(|o| report(o).macro_precision)),
            best_epoch: None,
            runtime_secs: mean(outcomes.iter().map(|o| o.runtime_secs)),
        });
    }
    rows
}

/// Test accuracy in one SNR bin for one seed, or the seed mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub seed: String,
    pub snr_db: f64,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

pub const SNR_COLUMNS: [&str; 5] = ["seed", "snr_db", "correct", "total", "accuracy"];

/// Per-seed bins of each report followed by the seed-mean bins.
pub fn snr_rows(reports: &[(u64, &MetricsReport)]) -> Vec<SnrRow> {
    let mut rows: Vec<SnrRow> = reports
        .iter()
        .flat_map(|(seed, r)| {
            r.per_snr.iter().map(|b| SnrRow {
                seed: seed.to_string(),
                snr_db: b.snr_db,
                correct: b.correct,
                total: b.total,
                accuracy: b.accuracy(),
            })
        })
        .collect();
    let mut grid: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    for snr in grid {
        let bin: Vec<&SnrRow> = rows.iter().filter(|r| r.snr_db == snr).collect();
        let m = SnrRow {
            seed: "mean".into(),
            snr_db: snr,
            correct: bin.iter().map(|r| r.correct).sum(),
            total: bin.iter().map(|r| r.total).sum(),
            accuracy: mean(bin.iter().map(|r| r.accuracy)),
        };
        rows.push(m);
    }
    rows
}

/// Mean test macro-precision of one ablation variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub macro_precision: f64,
    pub accuracy: f64,
    pub seeds: usize,
}

pub const ABLATION_COLUMNS: [&str; 4] = ["variant", "macro_precision", "accuracy", "seeds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSeedRow {
    pub variant: String,
    pub seed: u64,
    pub macro_precision: f64,
    pub accuracy: f64,
}

pub fn ablation_rows(results: &[(Variant, Vec<TrainOutcome>)]) -> (Vec<AblationRow>, Vec<AblationSeedRow>) {
    let mut rows = Vec::new();
    let mut per_seed = Vec::new();
    for (v, outs) in results {
        rows.push(AblationRow {
            variant: v.name().into(),
            macro_precision: mean(outs.iter().map(|o| o.test.macro_precision)),
            accuracy: mean(outs.iter().map(|o| o.test.accuracy)),
            seeds: outs.len(),
        });
        per_seed.extend(outs.iter().map(|o| AblationSeedRow {
            variant: v.name().into(),
            seed: o.seed,
            macro_precision: o.test.macro_precision,
            accuracy: o.test.accuracy,
        }));
    }
    (rows, per_seed)
}

/// `truth \ predicted` count table with class names as headers.
pub fn write_confusion(path: &Path, report: &MetricsReport, names: &[String]) -> Result<()> {
    let c = report.confusion.classes;
    ensure!(
        names.len() == c,
        Error::Dimension(format!("{} class names for {c} classes", names.len()))
    );
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["truth".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for t in 0..c {
        let mut row = vec![names[t].clone()];
        row.extend((0..c).map(|p| report.confusion.get(t, p).to_string()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}
