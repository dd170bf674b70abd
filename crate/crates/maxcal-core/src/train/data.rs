//! Synthetic Gaussian-blob classification data with severity-levelled
//! covariate shift.

use super::TrainError;
use crate::labels::PriorDistribution;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Spread of the class centers around the origin.
const CENTER_SCALE: f64 = 1.5;

/// Within-cluster standard deviation.
const CLUSTER_STD: f64 = 1.0;

/// Train fraction of each class; validation and test split the rest evenly.
const TRAIN_SHARE: usize = 70;
const VAL_SHARE: usize = 15;

/// Split membership of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A labelled feature matrix with split tags and its intended class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub d_in: usize,
    pub k: usize,
    /// Row-major `N × d_in` feature matrix.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    /// The prior the class counts were drawn to match.
    pub prior: PriorDistribution,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature row of record `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d_in..(i + 1) * self.d_in]
    }

    /// Record indices belonging to a split, in storage order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Empirical class frequencies over the whole dataset.
    pub fn empirical_prior(&self) -> Result<PriorDistribution, TrainError> {
        let mut counts = vec![0u64; self.k];
        for &label in &self.labels {
            counts[label] += 1;
        }
        Ok(PriorDistribution::from_counts(&counts)?)
    }

    /// Population standard deviation of each feature across all records.
    pub fn feature_stds(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.d_in];
        for i in 0..self.len() {
            for (j, &v) in self.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; self.d_in];
        for i in 0..self.len() {
            for (j, &v) in self.row(i).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        var.into_iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Noise multipliers per shift severity level; level 0 must be 0 and the
/// scales strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    noise_scales: Vec<f64>,
}

impl ShiftSpec {
    pub fn new(noise_scales: Vec<f64>) -> Result<Self, TrainError> {
        if noise_scales.is_empty() || noise_scales[0] != 0.0 {
            return Err(TrainError::BadShiftSpec(
                "level 0 must exist with scale 0".into(),
            ));
        }
        for pair in noise_scales.windows(2) {
            if !(pair[1] > pair[0]) || !pair[1].is_finite() {
                return Err(TrainError::BadShiftSpec(
                    "noise scales must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(Self { noise_scales })
    }

    /// Six severities 0..5 with evenly ramped noise.
    pub fn six_levels() -> Self {
        Self::new(vec![0.0, 0.25, 0.5, 0.8, 1.1, 1.4]).expect("static spec is valid")
    }

    pub fn levels(&self) -> usize {
        self.noise_scales.len()
    }

    pub fn noise_scale(&self, level: usize) -> Result<f64, TrainError> {
        self.noise_scales
            .get(level)
            .copied()
            .ok_or(TrainError::UnknownLevel {
                level,
                levels: self.levels(),
            })
    }

    pub fn noise_scales(&self) -> &[f64] {
        &self.noise_scales
    }
}

/// Deterministic stream RNG: one independent generator per (seed, tag).
pub(crate) fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03)),
    )
}

const CENTER_TAG: u64 = 1;
const SAMPLE_TAG: u64 = 2;
const SHIFT_TAG: u64 = 3;

/// Class counts matching a prior via largest-remainder rounding; ties go to
/// the smaller class index.
fn prior_counts(prior: &PriorDistribution, total: usize) -> Vec<usize> {
    let k = prior.k();
    let mut counts = vec![0usize; k];
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(k);
    let mut assigned = 0usize;
    for (class, &p) in prior.probs().iter().enumerate() {
        let exact = p * total as f64;
        let floor = exact.floor() as usize;
        counts[class] = floor;
        assigned += floor;
        remainders.push((class, exact - floor as f64));
    }
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(class, _) in remainders.iter().take(total - assigned) {
        counts[class] += 1;
    }
    counts
}

/// Sample Gaussian class clusters with seed-deterministic centers.
///
/// `n_per_class` fixes the total record count at `K · n_per_class`; the
/// per-class counts follow the prior by largest-remainder rounding, so a
/// non-uniform prior yields non-uniform classes. Records are laid down
/// class by class with a stratified 70/15/15 train/val/test split.
pub fn generate_blobs(
    k: usize,
    d_in: usize,
    n_per_class: usize,
    seed: u64,
    prior: &PriorDistribution,
) -> Result<SyntheticDataset, TrainError> {
    if k < 2 || prior.k() != k {
        return Err(TrainError::BadDataShape(format!(
            "need K ≥ 2 classes with a matching prior, got K = {k}, prior K = {}",
            prior.k()
        )));
    }
    if d_in == 0 || n_per_class < 10 {
        return Err(TrainError::BadDataShape(format!(
            "need d_in ≥ 1 and n_per_class ≥ 10, got d_in = {d_in}, n_per_class = {n_per_class}"
        )));
    }
    let total = k * n_per_class;
    let counts = prior_counts(prior, total);

    let mut center_rng = stream(seed, CENTER_TAG);
    let mut centers = vec![0.0f64; k * d_in];
    for c in &mut centers {
        *c = CENTER_SCALE * center_rng.sample::<f64, _>(StandardNormal);
    }

    let mut sample_rng = stream(seed, SAMPLE_TAG);
    let mut features = Vec::with_capacity(total * d_in);
    let mut labels = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);
    for class in 0..k {
        let m = counts[class];
        let train_n = m * TRAIN_SHARE / 100;
        let val_n = m * VAL_SHARE / 100;
        for i in 0..m {
            for j in 0..d_in {
                let noise: f64 = sample_rng.sample(StandardNormal);
                features.push(centers[class * d_in + j] + CLUSTER_STD * noise);
            }
            labels.push(class);
            splits.push(if i < train_n {
                Split::Train
            } else if i < train_n + val_n {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(SyntheticDataset {
        d_in,
        k,
        features,
        labels,
        splits,
        prior: prior.clone(),
    })
}

/// Perturb features with additive Gaussian noise scaled per feature by
/// `noise_scale(level) · std(feature)`. Level 0 returns the dataset
/// unchanged, bit for bit.
pub fn apply_shift(
    ds: &SyntheticDataset,
    spec: &ShiftSpec,
    level: usize,
    seed: u64,
) -> Result<SyntheticDataset, TrainError> {
    let scale = spec.noise_scale(level)?;
    if level == 0 {
        return Ok(ds.clone());
    }
    let stds = ds.feature_stds();
    let mut rng = stream(seed, SHIFT_TAG.wrapping_add((level as u64) << 8));
    let mut shifted = ds.clone();
    for i in 0..ds.len() {
        for j in 0..ds.d_in {
            let noise: f64 = rng.sample(StandardNormal);
            shifted.features[i * ds.d_in + j] += scale * stds[j] * noise;
        }
    }
    Ok(shifted)
}
