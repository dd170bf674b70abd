//! Pre- and post-hoc calibration baselines: label smoothing of targets and
//! temperature scaling with an NLL grid search.

use crate::labels::{LabelSpace, PriorDistribution};
use crate::loss::{softmax, PROB_FLOOR};
use crate::solver::{global_moments, local_moments, MomentConstraints, SolverError};
use thiserror::Error;

/// Standard smoothing strength.
pub const DEFAULT_SMOOTHING_ALPHA: f64 = 0.01;

/// Temperature values searched by default.
pub const DEFAULT_TEMPERATURE_GRID: [f64; 4] = [1.25, 1.50, 1.75, 2.00];

/// Errors from temperature fitting or scaling.
#[derive(Debug, Error)]
pub enum AdhocError {
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("temperature grid entry {index} is {value}; entries must be positive and finite")]
    BadGridEntry { index: usize, value: f64 },
    #[error("temperature grid is empty")]
    EmptyGrid,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("{logits} logit rows but {labels} labels")]
    LengthMismatch { logits: usize, labels: usize },
    #[error("validation label {label} out of range for {k} classes")]
    BadLabel { label: usize, k: usize },
}

/// Result of the temperature grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureFit {
    /// Temperatures evaluated, in the order given.
    pub grid: Vec<f64>,
    /// Mean NLL at each grid temperature.
    pub nll_at: Vec<f64>,
    /// The NLL-minimizing temperature; ties go to the smaller value.
    pub chosen_t: f64,
    /// NLL achieved at `chosen_t`.
    pub nll_at_chosen: f64,
}

/// Redistribute target mass: `s_k = (1 − α)·y_k + α/K`.
///
/// Keeps the vector normalized and, for α < 1, the argmax unchanged.
pub fn label_smooth(target: &[f64], alpha: f64) -> Vec<f64> {
    assert!(
        (0.0..1.0).contains(&alpha),
        "smoothing alpha must lie in [0, 1), got {alpha}"
    );
    let k = target.len() as f64;
    target.iter().map(|&y| (1.0 - alpha) * y + alpha / k).collect()
}

/// Soften or sharpen logits by a positive temperature: `softmax(g / t)`.
pub fn temperature_scale(logits: &[f64], t: f64) -> Result<Vec<f64>, AdhocError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(AdhocError::BadTemperature(t));
    }
    let scaled: Vec<f64> = logits.iter().map(|&g| g / t).collect();
    Ok(softmax(&scaled))
}

/// Mean NLL of true labels after scaling each logit row by `t`.
fn nll_at_temperature(
    logits: &[Vec<f64>],
    labels: &[usize],
    t: f64,
) -> Result<f64, AdhocError> {
    let mut total = 0.0;
    for (row, &label) in logits.iter().zip(labels) {
        if label >= row.len() {
            return Err(AdhocError::BadLabel {
                label,
                k: row.len(),
            });
        }
        let p = temperature_scale(row, t)?;
        total -= p[label].max(PROB_FLOOR).ln();
    }
    Ok(total / logits.len() as f64)
}

/// Grid-search the temperature minimizing validation NLL.
///
/// Evaluates every grid point; equal NLLs resolve toward the smaller
/// temperature.
pub fn fit_temperature(
    logits: &[Vec<f64>],
    labels: &[usize],
    grid: &[f64],
) -> Result<TemperatureFit, AdhocError> {
    if logits.is_empty() {
        return Err(AdhocError::EmptyValidation);
    }
    if logits.len() != labels.len() {
        return Err(AdhocError::LengthMismatch {
            logits: logits.len(),
            labels: labels.len(),
        });
    }
    if grid.is_empty() {
        return Err(AdhocError::EmptyGrid);
    }
    for (index, &value) in grid.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(AdhocError::BadGridEntry { index, value });
        }
    }
    let mut nll_at = Vec::with_capacity(grid.len());
    for &t in grid {
        nll_at.push(nll_at_temperature(logits, labels, t)?);
    }
    let mut best = 0;
    for i in 1..grid.len() {
        let better = nll_at[i] < nll_at[best]
            || (nll_at[i] == nll_at[best] && grid[i] < grid[best]);
        if better {
            best = i;
        }
    }
    Ok(TemperatureFit {
        grid: grid.to_vec(),
        nll_at: nll_at.clone(),
        chosen_t: grid[best],
        nll_at_chosen: nll_at[best],
    })
}

/// Constraint table whose local moments come from smoothed one-hot targets
/// instead of the raw class indices. The global (prior) moments are
/// untouched; only the per-class local entries change.
pub fn smoothed_moments(
    prior: &PriorDistribution,
    ls: &LabelSpace,
    alpha: f64,
) -> Result<MomentConstraints, SolverError> {
    let mut mc = global_moments(prior, ls)?;
    if alpha == 0.0 {
        return Ok(mc);
    }
    for class in 0..ls.k() {
        let mut onehot = vec![0.0; ls.k()];
        onehot[class] = 1.0;
        let lm = local_moments(&label_smooth(&onehot, alpha), ls)?;
        mc.local_means[class] = lm.mean;
        mc.local_second_moments[class] = lm.second_moment;
        mc.local_central_variances[class] = lm.central_variance;
    }
    Ok(mc)
}
