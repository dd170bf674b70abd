//! Class-index label spaces and training priors.
//!
//! The calibration machinery treats the class label as a discrete random
//! variable over the indices `0..K`. [`LabelSpace`] owns that support and
//! [`PriorDistribution`] is a validated probability vector over it, in
//! practice the training-set class frequencies.

use thiserror::Error;

/// How far a prior's entries may stray from summing to exactly one.
pub const PRIOR_SUM_TOL: f64 = 1e-9;

/// Errors from constructing label spaces or priors.
#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("label space needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("prior has {got} entries but the label space has {want} classes")]
    LengthMismatch { got: usize, want: usize },
    #[error("prior entry {index} is {value}; entries must be finite and non-negative")]
    InvalidEntry { index: usize, value: f64 },
    #[error("prior entries sum to {0}; they must sum to 1 within 1e-9 (use counts for raw tallies)")]
    NotNormalized(f64),
    #[error("count vector sums to zero; nothing to normalize")]
    ZeroCounts,
}

/// The ordered support `[0, 1, ..., K-1]` of the class-index variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpace {
    values: Vec<f64>,
}

impl LabelSpace {
    /// Build the space for `k` classes. Requires `k >= 2`.
    pub fn new(k: usize) -> Result<Self, LabelError> {
        if k < 2 {
            return Err(LabelError::TooFewClasses(k));
        }
        Ok(Self {
            values: (0..k).map(|c| c as f64).collect(),
        })
    }

    /// Number of classes `K`.
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Class indices as reals, in increasing order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest class index as a real, `K - 1`.
    pub fn max_value(&self) -> f64 {
        (self.values.len() - 1) as f64
    }
}

/// A validated probability vector over a label space.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDistribution {
    probs: Vec<f64>,
}

impl PriorDistribution {
    /// Validate and wrap a probability vector: finite non-negative entries
    /// summing to 1 within [`PRIOR_SUM_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self, LabelError> {
        if probs.len() < 2 {
            return Err(LabelError::TooFewClasses(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(LabelError::InvalidEntry { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(LabelError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    /// Normalize raw class counts into a prior.
    pub fn from_counts(counts: &[u64]) -> Result<Self, LabelError> {
        if counts.len() < 2 {
            return Err(LabelError::TooFewClasses(counts.len()));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(LabelError::ZeroCounts);
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        // Normalized by construction; skip the sum re-check to avoid
        // rejecting inputs over float rounding of very large counts.
        Ok(Self { probs })
    }

    /// The uniform prior over `k` classes.
    pub fn uniform(k: usize) -> Result<Self, LabelError> {
        if k < 2 {
            return Err(LabelError::TooFewClasses(k));
        }
        Ok(Self {
            probs: vec![1.0 / k as f64; k],
        })
    }

    /// Class probabilities, indexed by class.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of classes covered.
    pub fn k(&self) -> usize {
        self.probs.len()
    }
}
