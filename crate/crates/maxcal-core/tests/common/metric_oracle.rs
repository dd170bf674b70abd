//! Brute-force recomputations of the calibration metrics, written straight
//! from the definitions — bin membership decided by comparing against the
//! exact bin edges, explicit per-bin scans — so they exercise none of the
//! library's binning arithmetic, yet support exact-equality comparison.

use maxcal_core::{PredictionRecord, PredictionSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const PROB_FLOOR: f64 = 1e-12;

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PredictionSet {
    let records = (0..n)
        .map(|_| {
            let mut probs: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = probs.iter().sum();
            for p in &mut probs {
                *p /= sum;
            }
            PredictionRecord {
                probs,
                label: rng.random_range(0..k),
            }
        })
        .collect();
    PredictionSet::new(records, k).expect("generated rows are valid")
}

/// A set salted with confidences that sit exactly on bin edges: uniform
/// rows (top-1 exactly 1/k), exact halves, and a certain prediction.
pub fn edge_heavy_set(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PredictionSet {
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let probs = match i % 4 {
            0 => vec![1.0 / k as f64; k],
            1 => {
                let mut p = vec![0.5 / (k as f64 - 1.0); k];
                p[rng.random_range(0..k)] = 0.5;
                p
            }
            2 => {
                let mut p = vec![0.0; k];
                p[rng.random_range(0..k)] = 1.0;
                p
            }
            _ => {
                let mut p = vec![0.25 / (k as f64 - 1.0); k];
                p[0] = 0.75;
                p
            }
        };
        records.push(PredictionRecord {
            probs,
            label: rng.random_range(0..k),
        });
    }
    PredictionSet::new(records, k).expect("generated rows are valid")
}

/// First maximal probability, written as a plain scan.
pub fn oracle_top1(probs: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best, probs[best])
}

/// Membership by direct comparison with the exact edges: bins are
/// left-open and right-closed except the first, which also takes 0.
pub fn in_bin(c: f64, b: usize, bins: usize) -> bool {
    let lower = b as f64 / bins as f64;
    let upper = (b + 1) as f64 / bins as f64;
    let above = b == 0 || c > lower;
    let below = b + 1 == bins || c <= upper;
    above && below
}

/// Per-bin `(count, accuracy, mean confidence)` by direct scanning.
pub fn oracle_reliability(ps: &PredictionSet, bins: usize) -> Vec<(usize, f64, f64)> {
    (0..bins)
        .map(|b| {
            let mut count = 0usize;
            let mut correct = 0usize;
            let mut conf_sum = 0.0f64;
            for rec in ps.records() {
                let (pred, conf) = oracle_top1(&rec.probs);
                if in_bin(conf, b, bins) {
                    count += 1;
                    conf_sum += conf;
                    if pred == rec.label {
                        correct += 1;
                    }
                }
            }
            let acc = if count > 0 {
                correct as f64 / count as f64
            } else {
                0.0
            };
            let conf = if count > 0 {
                conf_sum / count as f64
            } else {
                0.0
            };
            (count, acc, conf)
        })
        .collect()
}

pub fn oracle_ece(ps: &PredictionSet, bins: usize) -> f64 {
    let n = ps.len() as f64;
    oracle_reliability(ps, bins)
        .into_iter()
        .map(|(count, acc, conf)| (count as f64 / n) * (acc - conf).abs())
        .sum()
}

pub fn oracle_mce(ps: &PredictionSet, bins: usize) -> f64 {
    oracle_reliability(ps, bins)
        .into_iter()
        .filter(|&(count, _, _)| count > 0)
        .map(|(_, acc, conf)| (acc - conf).abs())
        .fold(0.0, f64::max)
}

pub fn oracle_cece(ps: &PredictionSet, bins: usize) -> f64 {
    let n = ps.len() as f64;
    let mut total = 0.0;
    for class in 0..ps.k() {
        for b in 0..bins {
            let mut count = 0usize;
            let mut hits = 0usize;
            let mut conf_sum = 0.0f64;
            for rec in ps.records() {
                let p = rec.probs[class];
                if in_bin(p, b, bins) {
                    count += 1;
                    conf_sum += p;
                    if rec.label == class {
                        hits += 1;
                    }
                }
            }
            if count == 0 {
                continue;
            }
            let acc = hits as f64 / count as f64;
            let conf = conf_sum / count as f64;
            total += (count as f64 / n) * (acc - conf).abs();
        }
    }
    total / ps.k() as f64
}

/// Record indices in ascending top-1 confidence, ties kept in input order.
pub fn confidence_order(ps: &PredictionSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| {
        oracle_top1(&ps.records()[a].probs)
            .1
            .total_cmp(&oracle_top1(&ps.records()[b].probs).1)
    });
    order
}

pub fn oracle_ada_ece(ps: &PredictionSet, bins: usize) -> f64 {
    let order = confidence_order(ps);
    let n = ps.len();
    let mut total = 0.0;
    let mut cursor = 0usize;
    for b in 0..bins {
        let size = n / bins + usize::from(b < n % bins);
        let members = &order[cursor..cursor + size];
        cursor += size;
        let mut correct = 0usize;
        let mut conf_sum = 0.0f64;
        for &i in members {
            let rec = &ps.records()[i];
            let (pred, conf) = oracle_top1(&rec.probs);
            conf_sum += conf;
            if pred == rec.label {
                correct += 1;
            }
        }
        let acc = correct as f64 / size as f64;
        let conf = conf_sum / size as f64;
        total += (size as f64 / n as f64) * (acc - conf).abs();
    }
    total
}

pub fn oracle_kse_deviations(ps: &PredictionSet) -> Vec<f64> {
    let mut cum_correct = 0.0f64;
    let mut cum_conf = 0.0f64;
    let mut out = Vec::with_capacity(ps.len());
    for &i in &confidence_order(ps) {
        let rec = &ps.records()[i];
        let (pred, conf) = oracle_top1(&rec.probs);
        if pred == rec.label {
            cum_correct += 1.0;
        }
        cum_conf += conf;
        out.push((cum_correct - cum_conf).abs());
    }
    out
}

pub fn oracle_kse(ps: &PredictionSet) -> f64 {
    let n = ps.len() as f64;
    oracle_kse_deviations(ps).into_iter().fold(0.0, f64::max) / n
}

pub fn oracle_kse_average(ps: &PredictionSet) -> f64 {
    let n = ps.len() as f64;
    oracle_kse_deviations(ps).iter().sum::<f64>() / (n * n)
}

pub fn oracle_nll(ps: &PredictionSet) -> f64 {
    let total: f64 = ps
        .records()
        .iter()
        .map(|r| -r.probs[r.label].max(PROB_FLOOR).ln())
        .sum();
    total / ps.len() as f64
}

pub fn oracle_brier(ps: &PredictionSet) -> f64 {
    let total: f64 = ps
        .records()
        .iter()
        .map(|r| {
            r.probs
                .iter()
                .enumerate()
                .map(|(c, &p)| {
                    let y = if c == r.label { 1.0 } else { 0.0 };
                    (y - p) * (y - p)
                })
                .sum::<f64>()
        })
        .sum();
    total / ps.len() as f64
}

/// The worked three-record example: 0.9 correct, 0.8 wrong, 0.6 correct.
/// In a single bin both the expected and worst-bin error are
/// `|2/3 − 2.3/3| = 0.1`.
pub fn hand_case_set() -> PredictionSet {
    let records = vec![
        PredictionRecord {
            probs: vec![0.9, 0.1],
            label: 0,
        },
        PredictionRecord {
            probs: vec![0.8, 0.2],
            label: 1,
        },
        PredictionRecord {
            probs: vec![0.6, 0.4],
            label: 0,
        },
    ];
    PredictionSet::new(records, 2).unwrap()
}
