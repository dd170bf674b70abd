//! Text file formats: prediction dumps, prior vectors, and the
//! comma-separated tables the benchmark emits.
//!
//! Two precision regimes are used deliberately. Probability payloads
//! (prediction dumps, pmf tables, priors) are written with Rust's shortest
//! round-trip float formatting so that reading a dump back reproduces the
//! in-memory values bit for bit. Metric reports and summary tables are
//! fixed six-decimal text meant for diffing and plotting, not re-ingestion.

use crate::metrics::{BinStatistics, HistogramBar, MetricsError, PredictionRecord, PredictionSet};
use crate::train::{AblationCurves, EpochRecord, FeatureNormPoint, MetricRow};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Errors from reading or validating the text formats.
#[derive(Debug, Error)]
pub enum FileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: file is empty")]
    Empty { path: String },
    #[error("{path}:1: expected header `{want}`, found `{got}`")]
    HeaderMismatch {
        path: String,
        want: String,
        got: String,
    },
    #[error("{path}:{line}: expected {want} fields, found {got}")]
    RaggedRow {
        path: String,
        line: usize,
        want: usize,
        got: usize,
    },
    #[error("{path}:{line}: bad label `{value}`")]
    BadLabel {
        path: String,
        line: usize,
        value: String,
    },
    #[error("{path}:{line}: bad number `{value}`")]
    BadNumber {
        path: String,
        line: usize,
        value: String,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The expected prediction-file header for `k` value columns.
pub fn prediction_header(k: usize) -> String {
    let mut h = String::from("label");
    for i in 0..k {
        let _ = write!(h, ",v{i}");
    }
    h
}

/// Raw rows of a prediction file: labels plus per-class values that may be
/// probabilities or logits depending on how the file was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub k: usize,
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl PredictionFile {
    /// Interpret the value columns as probabilities.
    pub fn to_probability_set(&self) -> Result<PredictionSet, MetricsError> {
        let records = self
            .labels
            .iter()
            .zip(&self.rows)
            .map(|(&label, row)| PredictionRecord {
                probs: row.clone(),
                label,
            })
            .collect();
        PredictionSet::new(records, self.k)
    }

    /// Interpret the value columns as logits and softmax them.
    pub fn to_softmax_set(&self) -> Result<PredictionSet, MetricsError> {
        let records = self
            .labels
            .iter()
            .zip(&self.rows)
            .map(|(&label, row)| PredictionRecord {
                probs: crate::loss::softmax(row),
                label,
            })
            .collect();
        PredictionSet::new(records, self.k)
    }
}

/// Parse the prediction format: a `label,v0,...,v{K-1}` header line, then
/// one comma-separated record per line.
pub fn parse_predictions(text: &str, path: &str) -> Result<PredictionFile, FileError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| FileError::Empty {
        path: path.to_string(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    let k = columns.len().saturating_sub(1);
    if k == 0 || header != prediction_header(k) {
        return Err(FileError::HeaderMismatch {
            path: path.to_string(),
            want: prediction_header(k.max(2)),
            got: header.to_string(),
        });
    }
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 1 {
            return Err(FileError::RaggedRow {
                path: path.to_string(),
                line: line_no,
                want: k + 1,
                got: fields.len(),
            });
        }
        let label: usize = fields[0].parse().map_err(|_| FileError::BadLabel {
            path: path.to_string(),
            line: line_no,
            value: fields[0].to_string(),
        })?;
        if label >= k {
            return Err(FileError::BadLabel {
                path: path.to_string(),
                line: line_no,
                value: fields[0].to_string(),
            });
        }
        let mut row = Vec::with_capacity(k);
        for field in &fields[1..] {
            let value: f64 = field.parse().map_err(|_| FileError::BadNumber {
                path: path.to_string(),
                line: line_no,
                value: field.to_string(),
            })?;
            row.push(value);
        }
        labels.push(label);
        rows.push(row);
    }
    Ok(PredictionFile { k, labels, rows })
}

/// Read and parse a prediction file from disk.
pub fn read_predictions(path: &Path) -> Result<PredictionFile, FileError> {
    let text = fs::read_to_string(path)?;
    parse_predictions(&text, &path.display().to_string())
}

/// Render a prediction set in the dump format, full round-trip precision.
pub fn render_predictions(ps: &PredictionSet) -> String {
    let mut out = prediction_header(ps.k());
    out.push('\n');
    for rec in ps.records() {
        let _ = write!(out, "{}", rec.label);
        for &p in &rec.probs {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}

/// Parse a prior file: one probability per line, `#` comments and blank
/// lines ignored.
pub fn parse_prior(text: &str, path: &str) -> Result<Vec<f64>, FileError> {
    let mut probs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| FileError::BadNumber {
            path: path.to_string(),
            line: i + 1,
            value: line.to_string(),
        })?;
        probs.push(value);
    }
    if probs.is_empty() {
        return Err(FileError::Empty {
            path: path.to_string(),
        });
    }
    Ok(probs)
}

/// Read a prior file from disk.
pub fn read_prior(path: &Path) -> Result<Vec<f64>, FileError> {
    let text = fs::read_to_string(path)?;
    parse_prior(&text, &path.display().to_string())
}

/// Render a prior vector, one entry per line, round-trip precision.
pub fn render_prior(probs: &[f64]) -> String {
    let mut out = String::new();
    for &p in probs {
        let _ = writeln!(out, "{p}");
    }
    out
}

/// Render a `class,probability` table, round-trip precision.
pub fn render_pmf(weights: &[f64]) -> String {
    let mut out = String::from("class,probability\n");
    for (class, &w) in weights.iter().enumerate() {
        let _ = writeln!(out, "{class},{w}");
    }
    out
}

/// Render metric name/value pairs as `name=value` lines, six decimals.
pub fn render_metrics_kv(pairs: &[(&str, f64)]) -> String {
    let mut out = String::new();
    for (name, value) in pairs {
        let _ = writeln!(out, "{name}={value:.6}");
    }
    out
}

/// Header and six-decimal rows of the per-level metric table.
pub fn render_metric_table(rows: &[MetricRow]) -> String {
    let mut out = String::from("level,noise_scale,error,ece,cece,kse,mce,ada_ece,nll,brier\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.level, r.noise_scale, r.error, r.ece, r.cece, r.kse, r.mce, r.ada_ece, r.nll, r.brier
        );
    }
    out
}

/// Parse a metric table back into rows (used by the report aggregator).
pub fn parse_metric_table(text: &str, path: &str) -> Result<Vec<MetricRow>, FileError> {
    let want = "level,noise_scale,error,ece,cece,kse,mce,ada_ece,nll,brier";
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| FileError::Empty {
        path: path.to_string(),
    })?;
    if header != want {
        return Err(FileError::HeaderMismatch {
            path: path.to_string(),
            want: want.to_string(),
            got: header.to_string(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(FileError::RaggedRow {
                path: path.to_string(),
                line: line_no,
                want: 10,
                got: fields.len(),
            });
        }
        let level: usize = fields[0].parse().map_err(|_| FileError::BadNumber {
            path: path.to_string(),
            line: line_no,
            value: fields[0].to_string(),
        })?;
        let mut nums = [0.0f64; 9];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| FileError::BadNumber {
                path: path.to_string(),
                line: line_no,
                value: field.to_string(),
            })?;
        }
        rows.push(MetricRow {
            level,
            noise_scale: nums[0],
            error: nums[1],
            ece: nums[2],
            cece: nums[3],
            kse: nums[4],
            mce: nums[5],
            ada_ece: nums[6],
            nll: nums[7],
            brier: nums[8],
        });
    }
    Ok(rows)
}

/// Render the per-epoch training log.
pub fn render_train_log(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,learning_rate,mean_loss,val_accuracy\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            r.epoch, r.learning_rate, r.mean_loss, r.val_accuracy
        );
    }
    out
}

/// Render the feature-norm study pairs.
pub fn render_feature_norms(points: &[FeatureNormPoint]) -> String {
    let mut out = String::from("level,mean_norm,ece\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6},{:.6}", p.level, p.mean_norm, p.ece);
    }
    out
}

/// Render the constraint-locality ablation table.
pub fn render_ablation(curves: &AblationCurves) -> String {
    let mut out = String::from("level,global_only_ece,global_local_ece\n");
    for (i, &level) in curves.levels.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6}",
            level, curves.global_only[i], curves.global_local[i]
        );
    }
    out
}

/// Render a reliability-diagram table.
pub fn render_reliability(stats: &BinStatistics) -> String {
    let mut out = String::from("bin,lower,upper,count,accuracy,confidence\n");
    for (i, b) in stats.bins.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{:.6},{:.6}",
            i, b.lower, b.upper, b.count, b.accuracy, b.confidence
        );
    }
    out
}

/// Render a confidence-histogram table.
pub fn render_strength(bars: &[HistogramBar]) -> String {
    let mut out = String::from("bin,lower,upper,count,mass\n");
    for (i, b) in bars.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{:.6}",
            i, b.lower, b.upper, b.count, b.mass
        );
    }
    out
}
