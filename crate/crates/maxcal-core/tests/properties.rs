//! Randomized structural properties: solver monotonicity and
//! back-substitution, metric invariances and orderings, focal-base
//! inequalities, gradient conservation, and argmax preservation of the
//! post-hoc adjustments.

use std::sync::OnceLock;

use maxcal_core::solver::{solve_joint_centered, ConstraintForm, DEFAULT_TOL};
use maxcal_core::{
    ada_ece, brier, cece, ece, focal_multiclass, gibbs_pmf, kse, label_smooth, maxent_loss_grad,
    mce, multipliers_from_constraints, nll, solve_mean, solve_normalized, temperature_scale,
    LabelSpace, LagrangeSolution, LossConfig, LossForm, NormalizedTarget, PredictionRecord,
    PredictionSet, PriorDistribution,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A fixed non-uniform prior so solved multipliers are non-trivial.
fn test_prior() -> PriorDistribution {
    let counts = [5u64, 9, 6, 11, 8, 10, 12, 7, 13, 9];
    PriorDistribution::from_counts(&counts).unwrap()
}

/// One multiplier solution per form and locality, solved once.
fn solutions() -> &'static [LagrangeSolution; 6] {
    static CELL: OnceLock<[LagrangeSolution; 6]> = OnceLock::new();
    CELL.get_or_init(|| {
        let ls = LabelSpace::new(10).unwrap();
        let mc = maxcal_core::solver::global_moments(&test_prior(), &ls).unwrap();
        let solve = |form, local| multipliers_from_constraints(&mc, &ls, form, local).unwrap();
        [
            solve(ConstraintForm::Mean, false),
            solve(ConstraintForm::Mean, true),
            solve(ConstraintForm::Variance, false),
            solve(ConstraintForm::Variance, true),
            solve(ConstraintForm::Joint, false),
            solve(ConstraintForm::Joint, true),
        ]
    })
}

/// Strategy: one record over `k` classes with normalized probabilities.
fn record_strategy(k: usize) -> impl Strategy<Value = PredictionRecord> {
    (prop::collection::vec(0.01f64..1.0, k), 0..k).prop_map(move |(raw, label)| {
        let sum: f64 = raw.iter().sum();
        PredictionRecord {
            probs: raw.iter().map(|v| v / sum).collect(),
            label,
        }
    })
}

/// Strategy: a non-empty prediction set over 2–6 classes.
fn set_strategy(max_n: usize) -> impl Strategy<Value = PredictionSet> {
    (2usize..=6).prop_flat_map(move |k| {
        prop::collection::vec(record_strategy(k), 1..=max_n)
            .prop_map(move |records| PredictionSet::new(records, k).unwrap())
    })
}

/// Relative closeness with an absolute fallback near zero.
fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn mean_multiplier_decreases_as_the_target_grows(
        t1 in 0.05f64..16.0,
        gap in 1e-3f64..4.0,
    ) {
        let ls = LabelSpace::new(10).unwrap();
        let t2 = t1 + gap;
        let l1 = solve_mean(t1, &ls, DEFAULT_TOL).unwrap().entry().mean_multiplier.unwrap();
        let l2 = solve_mean(t2, &ls, DEFAULT_TOL).unwrap().entry().mean_multiplier.unwrap();
        prop_assert!(l1 > l2, "targets {t1} < {t2} but multipliers {l1} <= {l2}");
    }

    #[test]
    fn joint_solver_back_substitutes_forward_mapped_targets(
        l1 in -0.5f64..1.2,
        l2 in -0.12f64..0.5,
        center in 1.0f64..8.0,
    ) {
        let ls = LabelSpace::new(10).unwrap();
        let values = ls.values();
        let weight = |y: f64, a: f64, b: f64| (-1.0 - a * y - b * (y - center) * (y - center)).exp();
        let mean_target: f64 = values.iter().map(|&y| weight(y, l1, l2) * y).sum();
        let var_target: f64 = values
            .iter()
            .map(|&y| weight(y, l1, l2) * (y - center) * (y - center))
            .sum();
        let solved = solve_joint_centered(mean_target, var_target, center, &ls, DEFAULT_TOL).unwrap();
        let entry = solved.entry();
        let (s1, s2) = (entry.mean_multiplier.unwrap(), entry.variance_multiplier.unwrap());
        let back_mean: f64 = values.iter().map(|&y| weight(y, s1, s2) * y).sum();
        let back_var: f64 = values
            .iter()
            .map(|&y| weight(y, s1, s2) * (y - center) * (y - center))
            .sum();
        prop_assert!((back_mean - mean_target).abs() <= 1e-9, "mean residual {}", back_mean - mean_target);
        prop_assert!((back_var - var_target).abs() <= 1e-9, "deviation residual {}", back_var - var_target);
    }

    #[test]
    fn binned_metrics_ignore_record_order(
        ps in set_strategy(30),
        bins in 1usize..=15,
        seed in 0u64..1000,
    ) {
        let mut shuffled = ps.records().to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let qs = PredictionSet::new(shuffled, ps.k()).unwrap();
        prop_assert!(close(ece(&ps, bins).unwrap(), ece(&qs, bins).unwrap(), 1e-12));
        prop_assert!(close(mce(&ps, bins).unwrap(), mce(&qs, bins).unwrap(), 1e-12));
        prop_assert!(close(cece(&ps, bins).unwrap(), cece(&qs, bins).unwrap(), 1e-12));
        prop_assert!(close(nll(&ps).unwrap(), nll(&qs).unwrap(), 1e-12));
        prop_assert!(close(brier(&ps).unwrap(), brier(&qs).unwrap(), 1e-12));
        // The sorted metrics need distinct confidences to be order-free.
        let mut confs: Vec<f64> = ps.records().iter().map(|r| r.top1().1).collect();
        confs.sort_by(f64::total_cmp);
        if confs.windows(2).all(|w| w[0] != w[1]) {
            prop_assert!(close(kse(&ps).unwrap(), kse(&qs).unwrap(), 1e-12));
            prop_assert!(close(ada_ece(&ps, bins.min(ps.len())).unwrap(),
                               ada_ece(&qs, bins.min(ps.len())).unwrap(), 1e-12));
        }
    }

    #[test]
    fn classwise_error_ignores_class_relabeling(
        ps in set_strategy(25),
        bins in 1usize..=15,
        seed in 0u64..1000,
    ) {
        let k = ps.k();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let relabeled: Vec<PredictionRecord> = ps
            .records()
            .iter()
            .map(|r| {
                let mut probs = vec![0.0; k];
                for (c, &p) in r.probs.iter().enumerate() {
                    probs[perm[c]] = p;
                }
                PredictionRecord { probs, label: perm[r.label] }
            })
            .collect();
        let qs = PredictionSet::new(relabeled, k).unwrap();
        prop_assert!(close(cece(&ps, bins).unwrap(), cece(&qs, bins).unwrap(), 1e-12));
        prop_assert!(close(nll(&ps).unwrap(), nll(&qs).unwrap(), 1e-12));
        prop_assert!(close(brier(&ps).unwrap(), brier(&qs).unwrap(), 1e-12));
    }

    #[test]
    fn focal_damping_never_falls_below_its_linear_bound(
        p in 0.0f64..=1.0,
        gamma in 1.0f64..6.0,
    ) {
        prop_assert!((1.0 - p).powf(gamma) >= 1.0 - gamma * p - 1e-12);
    }

    #[test]
    fn loss_gradients_sum_to_zero_across_logits(
        logits in prop::collection::vec(-8.0f64..8.0, 10),
        class in 0usize..10,
        form_index in 0usize..8,
        gamma in 0.0f64..3.0,
        hinged in any::<bool>(),
    ) {
        let ls = LabelSpace::new(10).unwrap();
        let mc = maxcal_core::solver::global_moments(&test_prior(), &ls).unwrap();
        let mut cfg = match form_index {
            0 => LossConfig::cross_entropy(),
            1 => LossConfig::focal(gamma),
            i => {
                let solution = solutions()[i - 2].clone();
                let form = match solution.form() {
                    ConstraintForm::Mean => LossForm::MaxEntMean,
                    ConstraintForm::Variance => LossForm::MaxEntVariance,
                    ConstraintForm::Joint => LossForm::MaxEntJoint,
                };
                LossConfig::maxent(form, gamma, solution)
            }
        };
        if hinged && form_index >= 2 {
            cfg = cfg.with_hinged_penalty();
        }
        let mut target = vec![0.0; 10];
        target[class] = 1.0;
        let grad = maxent_loss_grad(&logits, &target, &cfg, &mc).unwrap();
        let total: f64 = grad.iter().sum();
        let scale: f64 = grad.iter().map(|g| g.abs()).sum::<f64>() + 1.0;
        prop_assert!(total.abs() <= 1e-12 * scale, "gradient sum {total}");
    }

    #[test]
    fn maximum_bin_error_dominates_the_expected_error(
        ps in set_strategy(40),
        bins in 1usize..=20,
    ) {
        let e = ece(&ps, bins).unwrap();
        let m = mce(&ps, bins).unwrap();
        prop_assert!(m >= e - 1e-15, "mce {m} below ece {e}");
    }

    #[test]
    fn normalized_mean_solutions_mirror_around_the_midpoint(
        mean in 0.3f64..8.7,
    ) {
        let ls = LabelSpace::new(10).unwrap();
        let forward = solve_normalized(&NormalizedTarget::Mean(mean), &ls, DEFAULT_TOL).unwrap();
        let backward =
            solve_normalized(&NormalizedTarget::Mean(9.0 - mean), &ls, DEFAULT_TOL).unwrap();
        for (a, b) in forward.weights.iter().zip(backward.weights.iter().rev()) {
            prop_assert!((a - b).abs() <= 1e-9, "mirror mismatch {a} vs {b}");
        }
    }

    #[test]
    fn adaptive_bins_of_single_records_average_the_confidence_gaps(
        ps in set_strategy(20),
    ) {
        let mut confs: Vec<f64> = ps.records().iter().map(|r| r.top1().1).collect();
        confs.sort_by(f64::total_cmp);
        prop_assume!(confs.windows(2).all(|w| w[0] != w[1]));
        let expected: f64 = ps
            .records()
            .iter()
            .map(|r| {
                let correct = if r.is_correct() { 1.0 } else { 0.0 };
                (correct - r.top1().1).abs()
            })
            .sum::<f64>()
            / ps.len() as f64;
        let got = ada_ece(&ps, ps.len()).unwrap();
        prop_assert!(close(got, expected, 1e-12), "{got} vs {expected}");
    }

    #[test]
    fn smoothing_and_temperature_preserve_the_argmax(
        raw in prop::collection::vec(0.01f64..1.0, 2..=10),
        alpha in 0.0f64..0.999,
        t in 0.05f64..20.0,
    ) {
        let sum: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        let best = argmax(&probs);
        prop_assume!(probs.iter().enumerate().all(|(i, &p)| i == best || p < probs[best]));
        prop_assert_eq!(argmax(&label_smooth(&probs, alpha)), best);
        let logits: Vec<f64> = probs.iter().map(|&p| p.ln()).collect();
        prop_assert_eq!(argmax(&temperature_scale(&logits, t).unwrap()), best);
    }

    #[test]
    fn focal_at_zero_exponent_sums_the_classwise_log_loss(
        raw in prop::collection::vec(0.05f64..1.0, 2..=10),
    ) {
        let sum: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        let plain: f64 = probs.iter().map(|&p| -p.ln()).sum();
        prop_assert!(close(focal_multiclass(&probs, 0.0), plain, 1e-12));
    }

    #[test]
    fn normalized_solutions_are_unit_mass(
        target_pick in 0usize..3,
        mean in 1.0f64..8.0,
    ) {
        let ls = LabelSpace::new(10).unwrap();
        let target = match target_pick {
            0 => NormalizedTarget::Unconstrained,
            1 => NormalizedTarget::Mean(mean),
            _ => NormalizedTarget::MeanAndVariance { mean, variance: 4.0 },
        };
        let solution = solve_normalized(&target, &ls, DEFAULT_TOL).unwrap();
        let total: f64 = solution.weights.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "mass {total}");
        prop_assert!(solution.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn unnormalized_solutions_expose_raw_positive_weights(
        target in 0.5f64..12.0,
    ) {
        let ls = LabelSpace::new(10).unwrap();
        let solution = solve_mean(target, &ls, DEFAULT_TOL).unwrap();
        let gibbs = gibbs_pmf(&solution, &ls, false).unwrap();
        prop_assert!(gibbs.weights.iter().all(|&w| w > 0.0));
        let back: f64 = gibbs.weighted_sum(ls.values());
        prop_assert!((back - target).abs() <= 1e-9 * target.max(1.0));
    }
}
