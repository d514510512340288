//! Evaluation artifacts: a machine-readable JSON report plus CSV tables and
//! SVG plots for the metrics computed by [`crate::eval`].
//!
//! Files written into the output directory:
//!
//! - `report.json` — accuracy, per-class precision/recall/F1/support/AUC,
//!   macro and weighted averages, micro AUC, and the confusion matrix;
//! - `metrics.csv` — the same table flattened, six-decimal fixed point;
//! - `confusion.csv` — true-class rows by predicted-class columns;
//! - `roc_<class>.csv` — one (fpr, tpr) table per class;
//! - `roc.svg` — the non-degenerate one-vs-rest curves with a chance line.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::eval::{class_name, AucSummary, MetricsReport, RocCurve};
use crate::ingest::N_CLASSES;
use crate::plot::{write_line_plot, PlotSpec, Series};
use crate::train::TrainingHistory;

pub type ReportResult<T> = Result<T, ReportError>;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize)]
struct ClassJson {
    precision: f64,
    recall: f64,
    f1: f64,
    support: usize,
    auc: Option<f64>,
}

#[derive(Serialize)]
struct AverageJson {
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Serialize)]
struct ReportJson {
    n_rows: usize,
    accuracy: f64,
    per_class: std::collections::BTreeMap<String, ClassJson>,
    #[serde(rename = "macro")]
    macro_avg: AverageJson,
    weighted: AverageJson,
    macro_auc: f64,
    micro_auc: f64,
    /// Rows are true classes in label order, columns predicted classes.
    confusion: [[usize; N_CLASSES]; N_CLASSES],
}

fn six(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes every evaluation artifact into `dir` (created if needed).
pub fn emit_evaluation(
    dir: &Path,
    metrics: &MetricsReport,
    aucs: &AucSummary,
    curves: &[RocCurve],
) -> ReportResult<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    // report.json
    let mut per_class = std::collections::BTreeMap::new();
    for c in 0..N_CLASSES {
        let m = &metrics.per_class[c];
        per_class.insert(
            class_name(c as u8).to_string(),
            ClassJson {
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support: m.support,
                auc: aucs.per_class[c],
            },
        );
    }
    let report = ReportJson {
        n_rows: metrics.confusion.total(),
        accuracy: metrics.accuracy,
        per_class,
        macro_avg: AverageJson {
            precision: metrics.macro_precision,
            recall: metrics.macro_recall,
            f1: metrics.macro_f1,
        },
        weighted: AverageJson {
            precision: metrics.weighted_precision,
            recall: metrics.weighted_recall,
            f1: metrics.weighted_f1,
        },
        macro_auc: aucs.macro_avg,
        micro_auc: aucs.micro,
        confusion: metrics.confusion.counts,
    };
    let path = dir.join("report.json");
    let file = std::fs::File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;

    // metrics.csv
    let path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["class", "precision", "recall", "f1", "support", "auc"])
        .map_err(csv_err(&path))?;
    for c in 0..N_CLASSES {
        let m = &metrics.per_class[c];
        w.write_record([
            class_name(c as u8).to_string(),
            six(m.precision),
            six(m.recall),
            six(m.f1),
            m.support.to_string(),
            aucs.per_class[c].map(six).unwrap_or_default(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.write_record([
        "macro".to_string(),
        six(metrics.macro_precision),
        six(metrics.macro_recall),
        six(metrics.macro_f1),
        metrics.confusion.total().to_string(),
        six(aucs.macro_avg),
    ])
    .map_err(csv_err(&path))?;
    w.write_record([
        "weighted".to_string(),
        six(metrics.weighted_precision),
        six(metrics.weighted_recall),
        six(metrics.weighted_f1),
        metrics.confusion.total().to_string(),
        six(aucs.micro),
    ])
    .map_err(csv_err(&path))?;
    w.flush().map_err(io_err(&path))?;

    // confusion.csv
    let path = dir.join("confusion.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = vec!["true_class".to_string()];
    header.extend((0..N_CLASSES).map(|c| format!("pred_{}", class_name(c as u8))));
    w.write_record(&header).map_err(csv_err(&path))?;
    for t in 0..N_CLASSES {
        let mut row = vec![class_name(t as u8).to_string()];
        row.extend(metrics.confusion.counts[t].iter().map(|n| n.to_string()));
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    // roc_<class>.csv
    for curve in curves {
        let name = class_name(curve.class).to_lowercase();
        let path = dir.join(format!("roc_{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["fpr", "tpr"]).map_err(csv_err(&path))?;
        for &(fpr, tpr) in &curve.points {
            w.write_record([six(fpr), six(tpr)]).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }

    // roc.svg
    let series: Vec<Series> = curves
        .iter()
        .filter(|c| !c.degenerate)
        .map(|c| Series {
            label: format!(
                "{} (auc {})",
                class_name(c.class),
                aucs.per_class[c.class as usize]
                    .map(|a| format!("{a:.3}"))
                    .unwrap_or_else(|| "n/a".into())
            ),
            points: c.points.clone(),
        })
        .collect();
    if !series.is_empty() {
        let path = dir.join("roc.svg");
        write_line_plot(
            &path,
            &PlotSpec {
                title: "One-vs-rest ROC".into(),
                x_label: "false positive rate".into(),
                y_label: "true positive rate".into(),
                series,
                diagonal: true,
            },
        )
        .map_err(io_err(&path))?;
    }
    Ok(())
}

/// Writes `history.svg` with the loss and accuracy trajectories.
pub fn emit_history_plot(dir: &Path, history: &TrainingHistory) -> ReportResult<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let epochs: Vec<f64> = history.epochs.iter().map(|e| e.epoch as f64).collect();
    let series = vec![
        Series {
            label: "train loss".into(),
            points: epochs
                .iter()
                .zip(history.epochs.iter())
                .map(|(&x, e)| (x, e.train_loss))
                .collect(),
        },
        Series {
            label: "val loss".into(),
            points: epochs
                .iter()
                .zip(history.epochs.iter())
                .map(|(&x, e)| (x, e.val_loss))
                .collect(),
        },
        Series {
            label: "train acc".into(),
            points: epochs
                .iter()
                .zip(history.epochs.iter())
                .map(|(&x, e)| (x, e.train_accuracy))
                .collect(),
        },
        Series {
            label: "val acc".into(),
            points: epochs
                .iter()
                .zip(history.epochs.iter())
                .map(|(&x, e)| (x, e.val_accuracy))
                .collect(),
        },
    ];
    let path = dir.join("history.svg");
    write_line_plot(
        &path,
        &PlotSpec {
            title: "Training history".into(),
            x_label: "epoch".into(),
            y_label: "loss / accuracy".into(),
            series,
            diagonal: false,
        },
    )
    .map_err(io_err(&path))
}
