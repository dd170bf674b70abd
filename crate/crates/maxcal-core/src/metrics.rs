//! Calibration metrics over prediction sets: expected/maximum/adaptive
//! calibration errors, classwise ECE, a binning-free cumulative estimator,
//! negative log-likelihood, Brier score, and the reliability-diagram and
//! confidence-histogram tables behind them.
//!
//! Binning convention used throughout: `B` equal-width bins partitioning
//! `(0, 1]`, each left-open right-closed, with a confidence of exactly 0
//! assigned to the first bin. Bin membership is decided by comparisons
//! against the edge values `b/B`, so results match a brute-force
//! reimplementation bit for bit.

use crate::loss::PROB_FLOOR;
use thiserror::Error;

/// Default bin count for metric tables.
pub const TABLE_BINS: usize = 15;
/// Default bin count for reliability diagrams and histograms.
pub const DIAGRAM_BINS: usize = 10;

/// Tolerance on the probability-vector sum of a prediction record.
const PROB_SUM_TOL: f64 = 1e-9;

/// Errors from prediction-set construction or metric evaluation.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric needs a nonempty prediction set")]
    EmptySet,
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("adaptive binning needs bins ≤ records, got {bins} bins for {records} records")]
    TooManyBins { bins: usize, records: usize },
    #[error("record {index}: label {label} out of range for {k} classes")]
    BadLabel { index: usize, label: usize, k: usize },
    #[error("record {index} has {got} probabilities, expected {want}")]
    BadWidth { index: usize, got: usize, want: usize },
    #[error("record {index}, class {class}: probability {value} outside [0, 1]")]
    BadProbability { index: usize, class: usize, value: f64 },
    #[error("record {index}: probabilities sum to {sum}, not 1 within 1e-9")]
    UnnormalizedProbabilities { index: usize, sum: f64 },
}

/// One scored sample: a probability vector and its true label.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub probs: Vec<f64>,
    pub label: usize,
}

impl PredictionRecord {
    /// Predicted class and its confidence: the first maximal probability.
    pub fn top1(&self) -> (usize, f64) {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > best_p {
                best = k;
                best_p = p;
            }
        }
        (best, best_p)
    }

    /// Whether the predicted class equals the true label.
    pub fn is_correct(&self) -> bool {
        self.top1().0 == self.label
    }
}

/// An ordered collection of prediction records over a fixed class count.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    records: Vec<PredictionRecord>,
    k: usize,
}

impl PredictionSet {
    /// Validate and wrap records: every row must have `k` probabilities in
    /// `[0, 1]` summing to 1, and a label below `k`. Empty sets are legal;
    /// the metrics reject them at call time.
    pub fn new(records: Vec<PredictionRecord>, k: usize) -> Result<Self, MetricsError> {
        for (index, rec) in records.iter().enumerate() {
            if rec.probs.len() != k {
                return Err(MetricsError::BadWidth {
                    index,
                    got: rec.probs.len(),
                    want: k,
                });
            }
            if rec.label >= k {
                return Err(MetricsError::BadLabel {
                    index,
                    label: rec.label,
                    k,
                });
            }
            let mut sum = 0.0;
            for (class, &value) in rec.probs.iter().enumerate() {
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(MetricsError::BadProbability {
                        index,
                        class,
                        value,
                    });
                }
                sum += value;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(MetricsError::UnnormalizedProbabilities { index, sum });
            }
        }
        Ok(Self { records, k })
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of records whose predicted class is the true label.
    pub fn accuracy(&self) -> Result<f64, MetricsError> {
        if self.is_empty() {
            return Err(MetricsError::EmptySet);
        }
        let correct = self.records.iter().filter(|r| r.is_correct()).count();
        Ok(correct as f64 / self.len() as f64)
    }
}

/// One reliability-diagram bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinRow {
    /// Open lower confidence edge.
    pub lower: f64,
    /// Closed upper confidence edge.
    pub upper: f64,
    /// Records assigned to the bin.
    pub count: usize,
    /// Mean correctness of members; 0 when empty.
    pub accuracy: f64,
    /// Mean confidence of members; 0 when empty.
    pub confidence: f64,
}

/// Reliability-diagram table: per-bin accuracy and confidence means.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStatistics {
    /// Total records across bins.
    pub total: usize,
    pub bins: Vec<BinRow>,
}

impl BinStatistics {
    /// `Σ_b (n_b/N)·|acc_b − conf_b|` over the bins in order — the expected
    /// calibration error this table encodes.
    pub fn expected_error(&self) -> f64 {
        let n = self.total as f64;
        self.bins
            .iter()
            .map(|b| (b.count as f64 / n) * (b.accuracy - b.confidence).abs())
            .sum()
    }

    /// `max_b |acc_b − conf_b|` over nonempty bins.
    pub fn max_error(&self) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.accuracy - b.confidence).abs())
            .fold(0.0, f64::max)
    }
}

/// One bar of a confidence histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBar {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Fraction of all records in the bar; bars sum to 1.
    pub mass: f64,
}

/// Equal-width bin index for a confidence in `[0, 1]`: left-open,
/// right-closed, with 0 falling into the first bin. The arithmetic
/// candidate is corrected against the exact edge values so membership
/// agrees with direct comparisons.
fn bin_index(confidence: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut index = ((confidence * b).ceil() as i64 - 1).clamp(0, bins as i64 - 1) as usize;
    while index > 0 && confidence <= index as f64 / b {
        index -= 1;
    }
    while index + 1 < bins && confidence > (index + 1) as f64 / b {
        index += 1;
    }
    index
}

fn require_nonempty(ps: &PredictionSet) -> Result<(), MetricsError> {
    if ps.is_empty() {
        Err(MetricsError::EmptySet)
    } else {
        Ok(())
    }
}

fn require_bins(bins: usize) -> Result<(), MetricsError> {
    if bins == 0 {
        Err(MetricsError::NoBins)
    } else {
        Ok(())
    }
}

/// Reliability-diagram table over equal-width top-1 confidence bins.
pub fn reliability_bins(ps: &PredictionSet, bins: usize) -> Result<BinStatistics, MetricsError> {
    require_nonempty(ps)?;
    require_bins(bins)?;
    let mut count = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    for rec in ps.records() {
        let (pred, conf) = rec.top1();
        let b = bin_index(conf, bins);
        count[b] += 1;
        conf_sum[b] += conf;
        if pred == rec.label {
            correct[b] += 1;
        }
    }
    let rows = (0..bins)
        .map(|b| BinRow {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: count[b],
            accuracy: if count[b] > 0 {
                correct[b] as f64 / count[b] as f64
            } else {
                0.0
            },
            confidence: if count[b] > 0 {
                conf_sum[b] / count[b] as f64
            } else {
                0.0
            },
        })
        .collect();
    Ok(BinStatistics {
        total: ps.len(),
        bins: rows,
    })
}

/// Expected calibration error over equal-width top-1 confidence bins.
pub fn ece(ps: &PredictionSet, bins: usize) -> Result<f64, MetricsError> {
    Ok(reliability_bins(ps, bins)?.expected_error())
}

/// Maximum calibration error: the worst nonempty bin's |acc − conf| gap.
pub fn mce(ps: &PredictionSet, bins: usize) -> Result<f64, MetricsError> {
    Ok(reliability_bins(ps, bins)?.max_error())
}

/// Classwise expected calibration error: one-vs-rest binning of each
/// class's probability, averaged over classes.
pub fn cece(ps: &PredictionSet, bins: usize) -> Result<f64, MetricsError> {
    require_nonempty(ps)?;
    require_bins(bins)?;
    let n = ps.len() as f64;
    let mut total = 0.0;
    for class in 0..ps.k() {
        let mut count = vec![0usize; bins];
        let mut hits = vec![0usize; bins];
        let mut conf_sum = vec![0.0f64; bins];
        for rec in ps.records() {
            let p = rec.probs[class];
            let b = bin_index(p, bins);
            count[b] += 1;
            conf_sum[b] += p;
            if rec.label == class {
                hits[b] += 1;
            }
        }
        for b in 0..bins {
            if count[b] == 0 {
                continue;
            }
            let acc = hits[b] as f64 / count[b] as f64;
            let conf = conf_sum[b] / count[b] as f64;
            total += (count[b] as f64 / n) * (acc - conf).abs();
        }
    }
    Ok(total / ps.k() as f64)
}

/// Cumulative correctness-vs-confidence deviations in confidence order,
/// shared by the two binning-free estimators.
fn cumulative_deviations(ps: &PredictionSet) -> Vec<f64> {
    let mut order: Vec<usize> = (0..ps.len()).collect();
    // Stable sort: ties keep original record order.
    order.sort_by(|&a, &b| {
        ps.records()[a]
            .top1()
            .1
            .total_cmp(&ps.records()[b].top1().1)
    });
    let mut deviations = Vec::with_capacity(ps.len());
    let mut cum_correct = 0.0;
    let mut cum_conf = 0.0;
    for &i in &order {
        let rec = &ps.records()[i];
        let (pred, conf) = rec.top1();
        if pred == rec.label {
            cum_correct += 1.0;
        }
        cum_conf += conf;
        deviations.push((cum_correct - cum_conf).abs());
    }
    deviations
}

/// Binning-free calibration error: the largest gap between cumulative
/// correctness and cumulative confidence along the confidence-sorted
/// records, normalized by the record count.
pub fn kse(ps: &PredictionSet) -> Result<f64, MetricsError> {
    require_nonempty(ps)?;
    let n = ps.len() as f64;
    Ok(cumulative_deviations(ps).into_iter().fold(0.0, f64::max) / n)
}

/// Average-gap variant of [`kse`]: the mean (rather than maximum) of the
/// same normalized cumulative deviations.
pub fn kse_average(ps: &PredictionSet) -> Result<f64, MetricsError> {
    require_nonempty(ps)?;
    let n = ps.len() as f64;
    let dev = cumulative_deviations(ps);
    Ok(dev.iter().sum::<f64>() / (n * n))
}

/// Adaptive (equal-mass) calibration error: records sorted by confidence
/// are split into `bins` groups whose sizes differ by at most one — the
/// first `N mod B` groups take the extra record — then scored with the
/// expected-error formula.
pub fn ada_ece(ps: &PredictionSet, bins: usize) -> Result<f64, MetricsError> {
    require_nonempty(ps)?;
    require_bins(bins)?;
    if bins > ps.len() {
        return Err(MetricsError::TooManyBins {
            bins,
            records: ps.len(),
        });
    }
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| {
        ps.records()[a]
            .top1()
            .1
            .total_cmp(&ps.records()[b].top1().1)
    });
    let n = ps.len();
    let base = n / bins;
    let extra = n % bins;
    let mut total = 0.0;
    let mut cursor = 0;
    for b in 0..bins {
        let size = base + usize::from(b < extra);
        let members = &order[cursor..cursor + size];
        cursor += size;
        let mut correct = 0usize;
        let mut conf_sum = 0.0;
        for &i in members {
            let rec = &ps.records()[i];
            let (pred, conf) = rec.top1();
            conf_sum += conf;
            if pred == rec.label {
                correct += 1;
            }
        }
        let acc = correct as f64 / size as f64;
        let conf = conf_sum / size as f64;
        total += (size as f64 / n as f64) * (acc - conf).abs();
    }
    Ok(total)
}

/// Mean negative log-likelihood of the true labels, probabilities floored
/// at 1e-12 before the log.
pub fn nll(ps: &PredictionSet) -> Result<f64, MetricsError> {
    require_nonempty(ps)?;
    let total: f64 = ps
        .records()
        .iter()
        .map(|r| -r.probs[r.label].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / ps.len() as f64)
}

/// Mean squared distance between the probability vector and the one-hot
/// label, summed over classes.
pub fn brier(ps: &PredictionSet) -> Result<f64, MetricsError> {
    require_nonempty(ps)?;
    let total: f64 = ps
        .records()
        .iter()
        .map(|r| {
            r.probs
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let y = if k == r.label { 1.0 } else { 0.0 };
                    (y - p) * (y - p)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / ps.len() as f64)
}

/// Histogram of top-1 confidences over equal-width bins, with per-bar mass
/// summing to 1.
pub fn bin_strength(ps: &PredictionSet, bins: usize) -> Result<Vec<HistogramBar>, MetricsError> {
    require_nonempty(ps)?;
    require_bins(bins)?;
    let mut count = vec![0usize; bins];
    for rec in ps.records() {
        count[bin_index(rec.top1().1, bins)] += 1;
    }
    let n = ps.len() as f64;
    Ok((0..bins)
        .map(|b| HistogramBar {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: count[b],
            mass: count[b] as f64 / n,
        })
        .collect())
}

/// The records whose predicted class differs from the true label, in their
/// original order. May be empty; downstream metrics then error.
pub fn misclassified_subset(ps: &PredictionSet) -> PredictionSet {
    PredictionSet {
        records: ps
            .records()
            .iter()
            .filter(|r| !r.is_correct())
            .cloned()
            .collect(),
        k: ps.k(),
    }
}
