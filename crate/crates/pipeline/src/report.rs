//! CSV tables and JSON summaries.

use std::path::Path;

use earlysib_core::detect::DetectorFold;
use earlysib_core::explain::{Histogram, LeadTimeStat};
use earlysib_core::metrics::{Confusion, MeanSd};
use earlysib_core::trainer::{EvalReport, GridSearch, McNemar, SweepPoint, TrainingCurve};
use earlysib_core::userset::HistoryStats;
use serde::Serialize;

use crate::config::SCHEMA_VERSION;
use crate::error::{PipelineError, Result};

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    PipelineError::Runtime(format!("{}: {e}", path.display()))
}

/// Writes `header` and `rows`; floats use Rust's shortest round-trip form.
pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn counts(c: &Confusion) -> [String; 4] {
    [c.tn.to_string(), c.fp.to_string(), c.fn_.to_string(), c.tp.to_string()]
}

pub fn detector_folds(path: &Path, folds: &[DetectorFold]) -> Result<()> {
    write_csv(
        path,
        &["fold", "weighted_f1", "recall", "precision", "tn", "fp", "fn", "tp"],
        folds.iter().map(|f| {
            let m = &f.metrics;
            let mut row = vec![f.fold.to_string(), m.weighted_f1.to_string(), m.recall.to_string(), opt(m.precision)];
            row.extend(counts(&m.confusion));
            row
        }),
    )
}

const EVAL_HEADER: [&str; 10] =
    ["config", "fold", "balanced_accuracy", "recall", "precision", "weighted_f1", "tn", "fp", "fn", "tp"];

fn eval_rows(r: &EvalReport) -> Vec<Vec<String>> {
    r.folds
        .iter()
        .map(|f| {
            let m = &f.metrics;
            let mut row = vec![
                r.name.clone(),
                f.fold.to_string(),
                m.balanced_accuracy.to_string(),
                m.recall.to_string(),
                opt(m.precision),
                m.weighted_f1.to_string(),
            ];
            row.extend(counts(&m.confusion));
            row
        })
        .collect()
}

/// One row per fold per configuration.
pub fn eval_folds(path: &Path, reports: &[&EvalReport]) -> Result<()> {
    write_csv(path, &EVAL_HEADER, reports.iter().flat_map(|r| eval_rows(r)))
}

fn mean_sd(m: &MeanSd) -> [String; 2] {
    [m.mean.to_string(), m.sd.to_string()]
}

/// Mean and population SD per configuration.
pub fn eval_summary(path: &Path, reports: &[&EvalReport]) -> Result<()> {
    write_csv(
        path,
        &["config", "balanced_accuracy_mean", "balanced_accuracy_sd", "recall_mean", "recall_sd", "precision_mean", "precision_sd", "weighted_f1_mean", "weighted_f1_sd"],
        reports.iter().map(|r| {
            let mut row = vec![r.name.clone()];
            row.extend(mean_sd(&r.balanced_accuracy));
            row.extend(mean_sd(&r.recall));
            match &r.precision {
                Some(p) => row.extend(mean_sd(p)),
                None => row.extend([String::new(), String::new()]),
            }
            row.extend(mean_sd(&r.weighted_f1));
            row
        }),
    )
}

/// Row-normalized confusion matrix pooled over folds.
pub fn confusion_matrix(path: &Path, report: &EvalReport) -> Result<()> {
    let m = report.pooled_confusion().row_normalized();
    write_csv(
        path,
        &["true", "predicted_0", "predicted_1"],
        [0, 1].iter().map(|&r| vec![r.to_string(), m[r][0].to_string(), m[r][1].to_string()]),
    )
}

pub fn predictions(path: &Path, users: &[String], report: &EvalReport) -> Result<()> {
    write_csv(
        path,
        &["user", "label", "predicted", "probability"],
        report.predictions.iter().map(|p| {
            vec![users[p.index].clone(), p.label.to_string(), p.predicted.to_string(), p.probability.to_string()]
        }),
    )
}

pub fn curves(path: &Path, curves: &[(usize, &TrainingCurve)]) -> Result<()> {
    write_csv(
        path,
        &["fold", "epoch", "train_loss", "val_balanced_accuracy", "val_loss", "best"],
        curves.iter().flat_map(|(fold, c)| {
            c.epochs.iter().map(move |e| {
                vec![
                    fold.to_string(),
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.val_balanced_accuracy.to_string(),
                    e.val_loss.to_string(),
                    (e.epoch == c.best_epoch).to_string(),
                ]
            })
        }),
    )
}

pub fn grid(path: &Path, g: &GridSearch) -> Result<()> {
    write_csv(
        path,
        &["lr", "grad_accum", "weight_decay", "resample", "mean_val_balanced_accuracy", "selected"],
        g.points.iter().map(|p| {
            let h = &p.hyper;
            vec![
                h.lr.to_string(),
                h.grad_accum.to_string(),
                h.weight_decay.to_string(),
                h.resample.to_string(),
                p.mean_val_balanced_accuracy.to_string(),
                (*h == g.best).to_string(),
            ]
        }),
    )
}

pub fn sweep(path: &Path, points: &[SweepPoint]) -> Result<()> {
    write_csv(
        path,
        &["max_interactions", "balanced_accuracy_mean", "balanced_accuracy_sd"],
        points.iter().map(|p| {
            let mut row = vec![p.max_interactions.to_string()];
            row.extend(mean_sd(&p.balanced_accuracy));
            row
        }),
    )
}

pub fn mcnemar_table(path: &Path, rows: &[(String, String, McNemar)]) -> Result<()> {
    write_csv(
        path,
        &["model_a", "model_b", "n", "b", "c", "chi2", "p"],
        rows.iter().map(|(a, b, m)| {
            vec![a.clone(), b.clone(), m.n.to_string(), m.b.to_string(), m.c.to_string(), m.chi2.to_string(), m.p.to_string()]
        }),
    )
}

pub fn history_stats(path: &Path, s: &HistoryStats) -> Result<()> {
    write_csv(
        path,
        &["users", "sib_users", "nosib_users", "p25", "p50", "p75", "max"],
        [[s.users, s.sib_users, s.nosib_users, s.p25, s.p50, s.p75, s.max].map(|v| v.to_string())],
    )
}

pub fn histogram(path: &Path, h: &Histogram) -> Result<()> {
    write_csv(
        path,
        &["bin_start", "bin_end", "count"],
        h.counts.iter().enumerate().map(|(i, c)| {
            let (lo, hi) = h.bounds(i);
            vec![lo.to_string(), hi.to_string(), c.to_string()]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortRow {
    pub user: String,
    pub label: u8,
    pub interactions: usize,
    pub fx: f64,
    pub complexity: Option<f64>,
    pub lead_time: Option<LeadTimeStat>,
}

pub fn cohort(path: &Path, rows: &[CohortRow]) -> Result<()> {
    write_csv(
        path,
        &["user", "label", "interactions", "fx", "complexity", "most_predictive", "days_before_sib"],
        rows.iter().map(|r| {
            vec![
                r.user.clone(),
                r.label.to_string(),
                r.interactions.to_string(),
                r.fx.to_string(),
                opt(r.complexity),
                r.lead_time.as_ref().map(|l| l.most_predictive.clone()).unwrap_or_default(),
                r.lead_time.as_ref().map(|l| l.days_before_sib.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

/// Machine-readable record of one command's results.
#[derive(Debug, Serialize)]
pub struct Summary<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub results: T,
}

pub fn write_summary<T: Serialize>(path: &Path, command: &str, config_hash: &str, seed: u64, results: T) -> Result<()> {
    let s = Summary { schema_version: SCHEMA_VERSION, command, config_hash, seed, results };
    let text = serde_json::to_string_pretty(&s).map_err(|e| PipelineError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}
