//! Constrained maximum-entropy calibration toolkit.
//!
//! The crate is organised around one idea: treat a classifier's class index
//! as a discrete random variable, constrain its first and second moments
//! with Lagrange multipliers solved by Newton's method, and fold the
//! resulting penalty terms into the training loss so that the network stays
//! calibrated when the test distribution drifts.
//!
//! Module map:
//! - [`labels`]: class-index label spaces and validated priors.
//! - [`solver`]: moment constraints and the Newton solvers for the mean,
//!   variance, and joint multiplier systems, plus normalized maximum-entropy
//!   pmfs for visualisation.
//! - [`loss`]: cross-entropy, multi-class focal, and the three
//!   moment-constrained loss forms with analytic logit gradients.
//! - [`metrics`]: the calibration metric suite (ECE, CECE, KSE, MCE, AdaECE,
//!   NLL, Brier) with reliability-diagram and bin-strength data.
//! - [`adhoc`]: label smoothing and temperature scaling.
//! - [`train`]: a small deterministic MLP trainer on synthetic Gaussian-blob
//!   data with a severity-levelled covariate-shift harness.
//! - [`sweep`]: multi-loss, multi-seed benchmark orchestration and its text
//!   artifact formats.
//! - [`files`]: prediction-file, prior-file, and run-config parsing shared
//!   by the library and the command-line front-end.

pub mod adhoc;
pub mod files;
pub mod labels;
#[cfg(test)]
pub(crate) mod test_support;
pub mod loss;
pub mod metrics;
pub mod solver;
pub mod sweep;
pub mod train;

pub use adhoc::{
    fit_temperature, label_smooth, smoothed_moments, temperature_scale, AdhocError,
    TemperatureFit, DEFAULT_SMOOTHING_ALPHA, DEFAULT_TEMPERATURE_GRID,
};
pub use labels::{LabelError, LabelSpace, PriorDistribution};
pub use loss::{
    cross_entropy, entropy, focal_multiclass, maxent_loss, maxent_loss_grad,
    multipliers_from_constraints, multipliers_with_tolerance, precompute_multipliers, softmax,
    BaseWeighting, LossConfig, LossError, LossForm, PenaltyStyle,
};
pub use train::{
    ablate_local_constraints, apply_shift, evaluate_across_shifts, feature_norm_study,
    generate_blobs, metric_row, predict_split, train, AblationCurves, EpochRecord,
    FeatureNormPoint, MetricRow, MlpGradients, MlpModel, ShiftEvaluation, ShiftSpec, Split,
    SyntheticDataset, TrainConfig, TrainError, TrainLog, TrainOutcome,
};
pub use metrics::{
    ada_ece, bin_strength, brier, cece, ece, kse, kse_average, mce, misclassified_subset, nll,
    reliability_bins, BinRow, BinStatistics, HistogramBar, MetricsError, PredictionRecord,
    PredictionSet, DIAGRAM_BINS, TABLE_BINS,
};
pub use solver::{
    gibbs_pmf, global_moments, local_moments, solve_joint, solve_joint_centered, solve_mean,
    solve_normalized, solve_variance, verify_constraints, ConstraintForm, GibbsDistribution,
    LagrangeSolution, MomentConstraints, MultiplierEntry, NormalizedTarget, SolverError,
};
pub use files::{
    parse_predictions, parse_prior, read_predictions, read_prior, render_metrics_kv, render_pmf,
    render_predictions, render_prior, FileError, PredictionFile,
};
pub use sweep::{
    aggregate_rows, collect_report, loss_slug, mean_and_stderr, parse_loss, render_report,
    run_sweep, ReportRow, RunArtifacts, SweepConfig, SweepError, SweepSummary,
};
