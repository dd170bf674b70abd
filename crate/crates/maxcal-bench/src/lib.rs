//! Deterministic fixture builders shared by the benchmark targets.

use maxcal_core::{softmax, PredictionRecord, PredictionSet};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A batch of random logit rows.
pub fn logit_batch(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect()
}

/// Random labels matching a batch of the given size.
pub fn label_batch(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// A softmaxed prediction set over random logits.
pub fn prediction_set(n: usize, k: usize, seed: u64) -> PredictionSet {
    let labels = label_batch(n, k, seed);
    let records = logit_batch(n, k, seed)
        .into_iter()
        .zip(labels)
        .map(|(row, label)| PredictionRecord {
            probs: softmax(&row),
            label,
        })
        .collect();
    PredictionSet::new(records, k).expect("random fixture is valid")
}
