//! Desk-scale training of a rectifier MLP on synthetic blob data, with the
//! shift-sweep evaluations built on top of it: calibration-vs-severity
//! tables, the global-vs-local constraint ablation, and the feature-norm
//! study.
//!
//! Multipliers for the moment-constrained losses are solved once, before
//! the first epoch; the training loop itself never re-solves them.

pub(crate) mod data;
mod mlp;

pub use data::{apply_shift, generate_blobs, ShiftSpec, Split, SyntheticDataset};
pub use mlp::{MlpGradients, MlpModel};

use crate::adhoc::{label_smooth, smoothed_moments};
use crate::labels::{LabelError, LabelSpace, PriorDistribution};
use crate::loss::{multipliers_with_tolerance, LossConfig, LossError};
use crate::metrics::{
    ada_ece, brier, cece, ece, kse, mce, nll, MetricsError, PredictionRecord, PredictionSet,
};
use crate::solver::{MomentConstraints, SolverError, DEFAULT_TOL};
use data::stream;
use rand::seq::SliceRandom;
use thiserror::Error;

/// RNG stream tags for the trainer's independent randomness sources.
const INIT_TAG: u64 = 11;
const SHUFFLE_TAG: u64 = 12;

/// Errors from data generation, training, or shift evaluation.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad dataset shape: {0}")]
    BadDataShape(String),
    #[error("bad shift specification: {0}")]
    BadShiftSpec(String),
    #[error("shift level {level} out of range for a {levels}-level schedule")]
    UnknownLevel { level: usize, levels: usize },
    #[error("bad training configuration: {0}")]
    BadConfig(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("the ablation needs a moment-constrained loss form")]
    NotMomentForm,
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Base learning rate; per-epoch rates follow a cosine ramp down.
    pub learning_rate: f64,
    /// Hidden-layer width.
    pub hidden: usize,
    pub seed: u64,
    /// Residual tolerance handed to the multiplier solves.
    pub tol: f64,
}

impl TrainConfig {
    /// Benchmark defaults: 100 epochs, batch 128, base rate 0.05, hidden
    /// width 64.
    pub fn new(loss: LossConfig, seed: u64) -> Self {
        Self {
            loss,
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.05,
            hidden: 64,
            seed,
            tol: DEFAULT_TOL,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(TrainError::BadConfig(
                "epochs, batch size, and hidden width must be positive".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::BadConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.tol > 0.0) {
            return Err(TrainError::BadConfig(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// One epoch's summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub val_accuracy: f64,
}

/// Per-epoch training history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

/// A trained model plus everything needed to evaluate or audit it.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub log: TrainLog,
    /// The loss actually used, with multipliers filled in.
    pub loss: LossConfig,
    /// Constraint table the loss evaluated against.
    pub constraints: MomentConstraints,
}

/// Cosine-annealed learning rate for epoch `e` of `total`.
fn cosine_rate(base: f64, epoch: usize, total: usize) -> f64 {
    base * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos())
}

/// Train an MLP on the dataset's train split under the configured loss.
///
/// Fully deterministic in `(dataset, config)`: initialization, shuffling,
/// and multiplier solves all derive from `cfg.seed`. The per-class targets
/// are one-hot vectors smoothed by `cfg.loss.label_smoothing_alpha`; when
/// smoothing is active the local constraint moments are recomputed from the
/// smoothed targets.
pub fn train(ds: &SyntheticDataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    cfg.loss
        .validate()
        .or_else(|err| match err {
            // Multipliers may legitimately be absent here: solving them is
            // this function's first step.
            LossError::MissingMultipliers { .. } => Ok(()),
            other => Err(other),
        })?;
    let train_idx = ds.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let val_idx = ds.indices_of(Split::Val);

    let ls = LabelSpace::new(ds.k)?;
    let mut train_counts = vec![0u64; ds.k];
    for &i in &train_idx {
        train_counts[ds.labels[i]] += 1;
    }
    let prior = PriorDistribution::from_counts(&train_counts)?;
    let alpha = cfg.loss.label_smoothing_alpha;
    let mc = smoothed_moments(&prior, &ls, alpha)?;

    // Solve the multipliers once, before the epoch loop, unless the caller
    // already provided them.
    let mut loss_cfg = cfg.loss.clone();
    if let Some(form) = loss_cfg.form.constraint_form() {
        if loss_cfg.multipliers.is_none() {
            loss_cfg.multipliers = Some(multipliers_with_tolerance(
                &mc,
                &ls,
                form,
                loss_cfg.include_local,
                cfg.tol,
            )?);
        }
    }

    // Per-class targets, smoothed once up front.
    let targets: Vec<Vec<f64>> = (0..ds.k)
        .map(|class| {
            let mut onehot = vec![0.0; ds.k];
            onehot[class] = 1.0;
            label_smooth(&onehot, alpha)
        })
        .collect();

    let mut model = MlpModel::init(ds.d_in, cfg.hidden, ds.k, &mut stream(cfg.seed, INIT_TAG));
    let mut shuffle_rng = stream(cfg.seed, SHUFFLE_TAG);
    let mut order = train_idx.clone();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        let lr = cosine_rate(cfg.learning_rate, epoch, cfg.epochs);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| ds.row(i)).collect();
            let batch_targets: Vec<&[f64]> = batch
                .iter()
                .map(|&i| targets[ds.labels[i]].as_slice())
                .collect();
            let (batch_loss, grads) =
                model.batch_gradients(&rows, &batch_targets, &loss_cfg, &mc)?;
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            model.apply_update(&grads, lr);
            // Exploded parameters can still produce a finite loss through
            // the rectifier and probability floor; catch them directly.
            if !model.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            epoch_loss += batch_loss * batch.len() as f64;
        }
        let mean_loss = epoch_loss / order.len() as f64;
        if !mean_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let val_accuracy = if val_idx.is_empty() {
            f64::NAN
        } else {
            let correct = val_idx
                .iter()
                .filter(|&&i| argmax(&model.forward(ds.row(i))) == ds.labels[i])
                .count();
            correct as f64 / val_idx.len() as f64
        };
        log.records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            mean_loss,
            val_accuracy,
        });
    }

    Ok(TrainOutcome {
        model,
        log,
        loss: loss_cfg,
        constraints: mc,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Softmax predictions of a model over one split of a dataset.
pub fn predict_split(
    model: &MlpModel,
    ds: &SyntheticDataset,
    split: Split,
) -> Result<PredictionSet, TrainError> {
    let records = ds
        .indices_of(split)
        .into_iter()
        .map(|i| PredictionRecord {
            probs: crate::loss::softmax(&model.forward(ds.row(i))),
            label: ds.labels[i],
        })
        .collect();
    Ok(PredictionSet::new(records, ds.k)?)
}

/// One row of the calibration-vs-severity table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub level: usize,
    pub noise_scale: f64,
    pub error: f64,
    pub ece: f64,
    pub cece: f64,
    pub kse: f64,
    pub mce: f64,
    pub ada_ece: f64,
    pub nll: f64,
    pub brier: f64,
}

/// Metric table plus the prediction sets it was computed from.
#[derive(Debug, Clone)]
pub struct ShiftEvaluation {
    pub rows: Vec<MetricRow>,
    /// Test-split predictions at each level, aligned with `rows`.
    pub predictions: Vec<PredictionSet>,
}

/// Score a PredictionSet into one table row.
pub fn metric_row(
    ps: &PredictionSet,
    level: usize,
    noise_scale: f64,
    bins: usize,
) -> Result<MetricRow, TrainError> {
    Ok(MetricRow {
        level,
        noise_scale,
        error: 1.0 - ps.accuracy()?,
        ece: ece(ps, bins)?,
        cece: cece(ps, bins)?,
        kse: kse(ps)?,
        mce: mce(ps, bins)?,
        ada_ece: ada_ece(ps, bins)?,
        nll: nll(ps)?,
        brier: brier(ps)?,
    })
}

/// Evaluate a trained model on the test split at every shift severity.
///
/// `shift_seed` drives the noise; level 0 is always the clean test set.
pub fn evaluate_across_shifts(
    model: &MlpModel,
    ds: &SyntheticDataset,
    spec: &ShiftSpec,
    bins: usize,
    shift_seed: u64,
) -> Result<ShiftEvaluation, TrainError> {
    let mut rows = Vec::with_capacity(spec.levels());
    let mut predictions = Vec::with_capacity(spec.levels());
    for level in 0..spec.levels() {
        let shifted = apply_shift(ds, spec, level, shift_seed)?;
        let ps = predict_split(model, &shifted, Split::Test)?;
        rows.push(metric_row(&ps, level, spec.noise_scale(level)?, bins)?);
        predictions.push(ps);
    }
    Ok(ShiftEvaluation { rows, predictions })
}

/// One point of the feature-norm study.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormPoint {
    pub level: usize,
    /// Mean Euclidean norm of penultimate activations over the test split.
    pub mean_norm: f64,
    pub ece: f64,
}

/// Pair each severity level's mean penultimate-feature norm with its ECE.
pub fn feature_norm_study(
    model: &MlpModel,
    ds: &SyntheticDataset,
    spec: &ShiftSpec,
    bins: usize,
    shift_seed: u64,
) -> Result<Vec<FeatureNormPoint>, TrainError> {
    let mut points = Vec::with_capacity(spec.levels());
    for level in 0..spec.levels() {
        let shifted = apply_shift(ds, spec, level, shift_seed)?;
        let test_idx = shifted.indices_of(Split::Test);
        if test_idx.is_empty() {
            return Err(TrainError::EmptySplit("test"));
        }
        let mean_norm = test_idx
            .iter()
            .map(|&i| {
                model
                    .penultimate(shifted.row(i))
                    .iter()
                    .map(|a| a * a)
                    .sum::<f64>()
                    .sqrt()
            })
            .sum::<f64>()
            / test_idx.len() as f64;
        let ps = predict_split(model, &shifted, Split::Test)?;
        points.push(FeatureNormPoint {
            level,
            mean_norm,
            ece: ece(&ps, bins)?,
        });
    }
    Ok(points)
}

/// Paired ECE-vs-severity curves for the constraint-locality ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCurves {
    pub levels: Vec<usize>,
    /// ECE per level with the global constraint only.
    pub global_only: Vec<f64>,
    /// ECE per level with blended global and local constraints.
    pub global_local: Vec<f64>,
}

/// Train twin models differing only in whether local constraints blend in,
/// and compare their calibration across severities.
pub fn ablate_local_constraints(
    ds: &SyntheticDataset,
    cfg: &TrainConfig,
    spec: &ShiftSpec,
    bins: usize,
) -> Result<AblationCurves, TrainError> {
    if cfg.loss.form.constraint_form().is_none() {
        return Err(TrainError::NotMomentForm);
    }
    let run = |include_local: bool| -> Result<Vec<f64>, TrainError> {
        let mut twin = cfg.clone();
        twin.loss.include_local = include_local;
        twin.loss.multipliers = None;
        let outcome = train(ds, &twin)?;
        let eval = evaluate_across_shifts(&outcome.model, ds, spec, bins, cfg.seed)?;
        Ok(eval.rows.iter().map(|r| r.ece).collect())
    };
    Ok(AblationCurves {
        levels: (0..spec.levels()).collect(),
        global_only: run(false)?,
        global_local: run(true)?,
    })
}
