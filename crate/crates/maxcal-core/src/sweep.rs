//! Benchmark orchestration: run every configured loss across every seed,
//! write a deterministic artifact tree, and aggregate seed-level metric
//! tables into a mean ± standard-error report.
//!
//! The artifact tree under a root directory looks like:
//!
//! ```text
//! config.txt                       effective run configuration echo
//! report.csv                       aggregated mean/stderr per loss, level, metric
//! <loss>/seed<N>/train_log.csv     per-epoch loss and validation accuracy
//! <loss>/seed<N>/metrics.csv       calibration metrics per severity level
//! <loss>/seed<N>/feature_norms.csv penultimate-norm vs calibration pairs
//! <loss>/seed<N>/ablation.csv      constraint-locality curves (moment losses)
//! <loss>/seed<N>/predictions_level<L>.csv
//! ```
//!
//! Everything is deterministic in the configuration: rerunning the same
//! sweep into the same root reproduces every file byte for byte.

use crate::files::{
    parse_metric_table, render_ablation, render_feature_norms, render_metric_table,
    render_predictions, render_train_log, FileError,
};
use crate::labels::PriorDistribution;
use crate::loss::{BaseWeighting, LossConfig, LossForm, PenaltyStyle};
use crate::solver::DEFAULT_TOL;
use crate::train::{
    evaluate_across_shifts, feature_norm_study, generate_blobs, train, AblationCurves, MetricRow,
    ShiftSpec, TrainConfig, TrainError,
};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Metric column names, in table order.
pub const METRIC_NAMES: [&str; 8] = [
    "error", "ece", "cece", "kse", "mce", "ada_ece", "nll", "brier",
];

/// Errors from configuration parsing or sweep execution.
#[derive(Debug, Error)]
pub enum SweepError {
    #[error("config line {line}: expected `key = value`, found `{text}`")]
    BadLine { line: usize, text: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: key `{key}` appears twice")]
    DuplicateKey { line: usize, key: String },
    #[error("config line {line}: bad value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("config is missing the required `{0}` field")]
    MissingField(&'static str),
    #[error("bad sweep configuration: {0}")]
    BadConfig(String),
    #[error("no seed-level metric tables under `{path}`")]
    EmptyTree { path: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Short name of a loss form, used for config values and directory names.
pub fn loss_slug(form: LossForm) -> &'static str {
    match form {
        LossForm::CrossEntropy => "ce",
        LossForm::Focal => "focal",
        LossForm::MaxEntMean => "maxent-mean",
        LossForm::MaxEntVariance => "maxent-variance",
        LossForm::MaxEntJoint => "maxent-joint",
    }
}

/// Inverse of [`loss_slug`].
pub fn parse_loss(name: &str) -> Option<LossForm> {
    match name {
        "ce" => Some(LossForm::CrossEntropy),
        "focal" => Some(LossForm::Focal),
        "maxent-mean" => Some(LossForm::MaxEntMean),
        "maxent-variance" => Some(LossForm::MaxEntVariance),
        "maxent-joint" => Some(LossForm::MaxEntJoint),
        _ => None,
    }
}

/// Full benchmark configuration: which losses and seeds to run, the data
/// and optimizer shape, and the severity ladder to evaluate on.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub losses: Vec<LossForm>,
    /// Focal exponent shared by the focal and moment-constrained losses.
    pub gamma: f64,
    pub smoothing_alpha: f64,
    /// Whether moment losses blend per-class local constraints in.
    pub include_local: bool,
    /// Whether constraint residuals are hinged (active only on violation)
    /// rather than signed; hinged is what the benchmark trains with.
    pub hinge_penalty: bool,
    /// Whether the base term weights only the labelled class.
    pub target_weighted_base: bool,
    pub seeds: Vec<u64>,
    pub noise_scales: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub k: usize,
    pub d_in: usize,
    pub n_per_class: usize,
    pub bins: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            losses: vec![LossForm::CrossEntropy, LossForm::MaxEntMean],
            gamma: 1.0,
            smoothing_alpha: 0.0,
            include_local: true,
            hinge_penalty: true,
            target_weighted_base: true,
            seeds: vec![0, 1, 2],
            noise_scales: ShiftSpec::six_levels().noise_scales().to_vec(),
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.05,
            hidden: 64,
            k: 10,
            d_in: 20,
            n_per_class: 1500,
            bins: 15,
        }
    }
}

impl SweepConfig {
    /// Parse a `key = value` configuration. Blank lines and `#` comments
    /// are skipped; the `losses` field is required, everything else
    /// defaults. `loss` is accepted as an alias for `losses`.
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let mut cfg = SweepConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut losses_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SweepError::BadLine {
                line: line_no,
                text: line.to_string(),
            })?;
            let key = key.trim().to_string();
            let value = value.trim();
            let canonical = if key == "loss" { "losses" } else { key.as_str() };
            if seen.iter().any(|s| s == canonical) {
                return Err(SweepError::DuplicateKey { line: line_no, key });
            }
            seen.push(canonical.to_string());
            let bad = |k: &str, v: &str| SweepError::BadValue {
                line: line_no,
                key: k.to_string(),
                value: v.to_string(),
            };
            match canonical {
                "losses" => {
                    cfg.losses = value
                        .split(',')
                        .map(|s| parse_loss(s.trim()).ok_or_else(|| bad(&key, s.trim())))
                        .collect::<Result<_, _>>()?;
                    losses_set = true;
                }
                "gamma" => cfg.gamma = value.parse().map_err(|_| bad(&key, value))?,
                "smoothing_alpha" => {
                    cfg.smoothing_alpha = value.parse().map_err(|_| bad(&key, value))?
                }
                "include_local" => {
                    cfg.include_local = value.parse().map_err(|_| bad(&key, value))?
                }
                "penalty" => {
                    cfg.hinge_penalty = match value {
                        "hinge" => true,
                        "signed" => false,
                        _ => return Err(bad(&key, value)),
                    }
                }
                "base" => {
                    cfg.target_weighted_base = match value {
                        "target-weighted" => true,
                        "all-class" => false,
                        _ => return Err(bad(&key, value)),
                    }
                }
                "seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|_| bad(&key, s.trim())))
                        .collect::<Result<_, _>>()?
                }
                "noise_scales" => {
                    cfg.noise_scales = value
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|_| bad(&key, s.trim())))
                        .collect::<Result<_, _>>()?
                }
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad(&key, value))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad(&key, value))?,
                "learning_rate" => {
                    cfg.learning_rate = value.parse().map_err(|_| bad(&key, value))?
                }
                "hidden" => cfg.hidden = value.parse().map_err(|_| bad(&key, value))?,
                "k" => cfg.k = value.parse().map_err(|_| bad(&key, value))?,
                "d_in" => cfg.d_in = value.parse().map_err(|_| bad(&key, value))?,
                "n_per_class" => cfg.n_per_class = value.parse().map_err(|_| bad(&key, value))?,
                "bins" => cfg.bins = value.parse().map_err(|_| bad(&key, value))?,
                _ => return Err(SweepError::UnknownKey { line: line_no, key }),
            }
        }
        if !losses_set {
            return Err(SweepError::MissingField("losses"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Render the configuration in canonical key order; `parse` of the
    /// result reproduces the value exactly.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let join_f64 = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(
            out,
            "losses = {}",
            self.losses
                .iter()
                .map(|&f| loss_slug(f))
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "gamma = {}", self.gamma);
        let _ = writeln!(out, "smoothing_alpha = {}", self.smoothing_alpha);
        let _ = writeln!(out, "include_local = {}", self.include_local);
        let _ = writeln!(
            out,
            "penalty = {}",
            if self.hinge_penalty { "hinge" } else { "signed" }
        );
        let _ = writeln!(
            out,
            "base = {}",
            if self.target_weighted_base {
                "target-weighted"
            } else {
                "all-class"
            }
        );
        let _ = writeln!(
            out,
            "seeds = {}",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "noise_scales = {}", join_f64(&self.noise_scales));
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(out, "hidden = {}", self.hidden);
        let _ = writeln!(out, "k = {}", self.k);
        let _ = writeln!(out, "d_in = {}", self.d_in);
        let _ = writeln!(out, "n_per_class = {}", self.n_per_class);
        let _ = writeln!(out, "bins = {}", self.bins);
        out
    }

    /// Reject configurations that cannot name a coherent sweep.
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.losses.is_empty() {
            return Err(SweepError::MissingField("losses"));
        }
        for (i, &form) in self.losses.iter().enumerate() {
            if self.losses[..i].contains(&form) {
                return Err(SweepError::BadConfig(format!(
                    "loss `{}` is listed twice",
                    loss_slug(form)
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(SweepError::BadConfig("no seeds listed".into()));
        }
        for (i, &seed) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(&seed) {
                return Err(SweepError::BadConfig(format!(
                    "seed {seed} is listed twice"
                )));
            }
        }
        Ok(())
    }

    /// Build the loss configuration for one form under this sweep's
    /// gamma, base weighting, smoothing, and locality settings.
    pub fn build_loss(&self, form: LossForm) -> LossConfig {
        let base = if self.target_weighted_base {
            BaseWeighting::TargetWeighted
        } else {
            BaseWeighting::AllClass
        };
        let (gamma, include_local) = match form {
            LossForm::CrossEntropy => (0.0, false),
            LossForm::Focal => (self.gamma, false),
            _ => (self.gamma, self.include_local),
        };
        LossConfig {
            form,
            gamma,
            base,
            include_local,
            penalty: if self.hinge_penalty {
                PenaltyStyle::Hinge
            } else {
                PenaltyStyle::Signed
            },
            label_smoothing_alpha: self.smoothing_alpha,
            multipliers: None,
        }
    }

    /// Training hyper-parameters for one (loss, seed) run.
    pub fn train_config(&self, form: LossForm, seed: u64) -> TrainConfig {
        TrainConfig {
            loss: self.build_loss(form),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            hidden: self.hidden,
            seed,
            tol: DEFAULT_TOL,
        }
    }
}

/// In-memory results of one (loss, seed) run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub form: LossForm,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    /// Locality ablation curves; present for moment-constrained losses.
    pub ablation: Option<AblationCurves>,
}

/// Everything a sweep produced, for callers that want numbers rather than
/// files.
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub runs: Vec<RunArtifacts>,
}

impl SweepSummary {
    /// Seed-mean of one metric for one loss at one severity level.
    pub fn mean_over_seeds<F: Fn(&MetricRow) -> f64>(
        &self,
        form: LossForm,
        level: usize,
        pick: F,
    ) -> Option<f64> {
        let values: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.form == form)
            .filter_map(|r| r.rows.iter().find(|row| row.level == level))
            .map(|row| pick(row))
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    /// Seed-mean ablation curves for one loss form.
    pub fn ablation_means(&self, form: LossForm) -> Option<AblationCurves> {
        let curves: Vec<&AblationCurves> = self
            .runs
            .iter()
            .filter(|r| r.form == form)
            .filter_map(|r| r.ablation.as_ref())
            .collect();
        let first = curves.first()?;
        let levels = first.levels.clone();
        let n = curves.len() as f64;
        let mean_at = |side: fn(&AblationCurves) -> &Vec<f64>, i: usize| {
            curves.iter().map(|c| side(c)[i]).sum::<f64>() / n
        };
        Some(AblationCurves {
            global_only: (0..levels.len())
                .map(|i| mean_at(|c| &c.global_only, i))
                .collect(),
            global_local: (0..levels.len())
                .map(|i| mean_at(|c| &c.global_local, i))
                .collect(),
            levels,
        })
    }
}

/// Run the full sweep, writing the artifact tree under `root`.
///
/// Existing files are overwritten in place; the tree is reproduced byte
/// for byte when the same configuration is run again.
pub fn run_sweep(cfg: &SweepConfig, root: &Path) -> Result<SweepSummary, SweepError> {
    cfg.validate()?;
    let spec = ShiftSpec::new(cfg.noise_scales.clone())?;
    let prior = PriorDistribution::uniform(cfg.k).map_err(TrainError::from)?;
    fs::create_dir_all(root)?;
    fs::write(root.join("config.txt"), cfg.render())?;

    let mut runs = Vec::new();
    for &form in &cfg.losses {
        for &seed in &cfg.seeds {
            let dir = root.join(loss_slug(form)).join(format!("seed{seed}"));
            fs::create_dir_all(&dir)?;
            let ds = generate_blobs(cfg.k, cfg.d_in, cfg.n_per_class, seed, &prior)?;
            let tc = cfg.train_config(form, seed);
            let outcome = train(&ds, &tc)?;
            let eval = evaluate_across_shifts(&outcome.model, &ds, &spec, cfg.bins, seed)?;
            let norms = feature_norm_study(&outcome.model, &ds, &spec, cfg.bins, seed)?;

            fs::write(
                dir.join("train_log.csv"),
                render_train_log(&outcome.log.records),
            )?;
            fs::write(dir.join("metrics.csv"), render_metric_table(&eval.rows))?;
            fs::write(dir.join("feature_norms.csv"), render_feature_norms(&norms))?;
            for (level, ps) in eval.predictions.iter().enumerate() {
                fs::write(
                    dir.join(format!("predictions_level{level}.csv")),
                    render_predictions(ps),
                )?;
            }

            // For moment-constrained losses, train the twin with the
            // locality flag flipped and pair the two ECE curves; the main
            // run provides its own side, so only one extra model is fit.
            let ablation = if form.constraint_form().is_some() {
                let mut twin = tc.clone();
                twin.loss.include_local = !tc.loss.include_local;
                twin.loss.multipliers = None;
                let twin_out = train(&ds, &twin)?;
                let twin_eval =
                    evaluate_across_shifts(&twin_out.model, &ds, &spec, cfg.bins, seed)?;
                let main_ece: Vec<f64> = eval.rows.iter().map(|r| r.ece).collect();
                let twin_ece: Vec<f64> = twin_eval.rows.iter().map(|r| r.ece).collect();
                let (global_only, global_local) = if tc.loss.include_local {
                    (twin_ece, main_ece)
                } else {
                    (main_ece, twin_ece)
                };
                let curves = AblationCurves {
                    levels: (0..spec.levels()).collect(),
                    global_only,
                    global_local,
                };
                fs::write(dir.join("ablation.csv"), render_ablation(&curves))?;
                Some(curves)
            } else {
                None
            };

            runs.push(RunArtifacts {
                form,
                seed,
                rows: eval.rows,
                ablation,
            });
        }
    }

    let report = collect_report(root)?;
    fs::write(root.join("report.csv"), render_report(&report))?;
    Ok(SweepSummary { runs })
}

/// One aggregated report line: seed-mean and standard error of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub loss: String,
    pub level: usize,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error (sample standard deviation over the square
/// root of the count) of a value list; the standard error of a single
/// value is zero.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn metric_value(row: &MetricRow, name: &str) -> f64 {
    match name {
        "error" => row.error,
        "ece" => row.ece,
        "cece" => row.cece,
        "kse" => row.kse,
        "mce" => row.mce,
        "ada_ece" => row.ada_ece,
        "nll" => row.nll,
        "brier" => row.brier,
        other => unreachable!("unknown metric name {other}"),
    }
}

/// Aggregate per-seed metric tables, grouped by loss name in first-seen
/// order, into mean ± standard-error rows per level and metric.
pub fn aggregate_rows(per_seed: &[(String, Vec<MetricRow>)]) -> Vec<ReportRow> {
    let mut order: Vec<&String> = Vec::new();
    for (slug, _) in per_seed {
        if !order.contains(&slug) {
            order.push(slug);
        }
    }
    let mut out = Vec::new();
    for slug in order {
        let tables: Vec<&Vec<MetricRow>> = per_seed
            .iter()
            .filter(|(s, _)| s == slug)
            .map(|(_, t)| t)
            .collect();
        let mut levels: Vec<usize> = tables
            .iter()
            .flat_map(|t| t.iter().map(|r| r.level))
            .collect();
        levels.sort_unstable();
        levels.dedup();
        for level in levels {
            for name in METRIC_NAMES {
                let values: Vec<f64> = tables
                    .iter()
                    .filter_map(|t| t.iter().find(|r| r.level == level))
                    .map(|r| metric_value(r, name))
                    .collect();
                let (mean, stderr) = mean_and_stderr(&values);
                out.push(ReportRow {
                    loss: slug.clone(),
                    level,
                    metric: name,
                    mean,
                    stderr,
                });
            }
        }
    }
    out
}

/// Walk an artifact tree and aggregate every `<loss>/seed<N>/metrics.csv`
/// into report rows. Loss directories are visited in name order, seeds in
/// numeric order, so the result is deterministic.
pub fn collect_report(root: &Path) -> Result<Vec<ReportRow>, SweepError> {
    let mut loss_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.path().is_dir() {
            loss_dirs.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    loss_dirs.sort();
    let mut per_seed: Vec<(String, Vec<MetricRow>)> = Vec::new();
    for (slug, dir) in loss_dirs {
        let mut seed_dirs: Vec<(u64, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(num) = name.strip_prefix("seed") {
                if let Ok(seed) = num.parse::<u64>() {
                    if entry.path().join("metrics.csv").is_file() {
                        seed_dirs.push((seed, entry.path()));
                    }
                }
            }
        }
        seed_dirs.sort();
        for (_, sdir) in seed_dirs {
            let path = sdir.join("metrics.csv");
            let text = fs::read_to_string(&path)?;
            per_seed.push((
                slug.clone(),
                parse_metric_table(&text, &path.display().to_string())?,
            ));
        }
    }
    if per_seed.is_empty() {
        return Err(SweepError::EmptyTree {
            path: root.display().to_string(),
        });
    }
    Ok(aggregate_rows(&per_seed))
}

/// Render report rows as a `loss,level,metric,mean,stderr` table.
pub fn render_report(rows: &[ReportRow]) -> String {
    let mut out = String::from("loss,level,metric,mean,stderr\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            r.loss, r.level, r.metric, r.mean, r.stderr
        );
    }
    out
}
