//! Independent root-finding oracles for the multiplier solvers: interval
//! bisection for the scalar constraint expressions, exhaustive grid search
//! with monotone refinement for the coupled system, and feasible-
//! perturbation entropy checks for the normalized distributions.

mod common;

use common::solver_oracle::{bisect_decreasing, grid_refine, joint_residuals, scalar_expression};
use maxcal_core::solver::{
    gibbs_pmf, solve_joint, solve_mean, solve_normalized, solve_variance, NormalizedTarget,
    DEFAULT_TOL,
};
use maxcal_core::{entropy, LabelSpace};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn mean_solver_matches_bisection_on_random_targets() {
    let ls = LabelSpace::new(10).unwrap();
    let stats: Vec<f64> = ls.values().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..50 {
        // Drawing λ first and mapping it forward guarantees feasibility and
        // covers both signs of the multiplier.
        let lambda_pick: f64 = rng.random_range(-0.3..1.5);
        let target = scalar_expression(lambda_pick, &stats);
        let solved = solve_mean(target, &ls, DEFAULT_TOL).unwrap();
        let newton = solved.entry().mean_multiplier.unwrap();
        let oracle = bisect_decreasing(target, |l| scalar_expression(l, &stats));
        assert!(
            (newton - oracle).abs() <= 1e-6,
            "trial {trial}: target {target}: newton {newton} vs bisection {oracle}"
        );
    }
}

#[test]
fn variance_solver_matches_bisection_on_random_targets() {
    let ls = LabelSpace::new(10).unwrap();
    let stats: Vec<f64> = ls.values().iter().map(|&y| y * y).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..50 {
        let lambda_pick: f64 = rng.random_range(-0.05..0.6);
        let target = scalar_expression(lambda_pick, &stats);
        let solved = solve_variance(target, &ls, DEFAULT_TOL).unwrap();
        let newton = solved.entry().variance_multiplier.unwrap();
        let oracle = bisect_decreasing(target, |l| scalar_expression(l, &stats));
        assert!(
            (newton - oracle).abs() <= 1e-6,
            "trial {trial}: target {target}: newton {newton} vs bisection {oracle}"
        );
    }
}

#[test]
fn joint_solver_matches_grid_refinement_on_random_targets() {
    let ls = LabelSpace::new(10).unwrap();
    let values = ls.values().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for trial in 0..50 {
        // Feasible pairs by construction: fix the center and a second-moment
        // multiplier, then bisect the mean multiplier until the mean
        // expression sits exactly on the center.
        let center: f64 = rng.random_range(1.5..7.5);
        let l2_pick: f64 = rng.random_range(-0.15..0.5);
        let l1_pick = bisect_decreasing(center, |l1| {
            let (r, _) = joint_residuals(l1, l2_pick, center, 0.0, &values);
            r + center
        });
        let (_, var_res) = joint_residuals(l1_pick, l2_pick, center, 0.0, &values);
        let var = var_res;
        assert!(var > 0.0, "constructed variance target must be positive");

        let solved = solve_joint(center, var, &ls, DEFAULT_TOL).unwrap();
        let entry = solved.entry();
        let n1 = entry.mean_multiplier.unwrap();
        let n2 = entry.variance_multiplier.unwrap();
        let (g1, g2) = grid_refine(center, var, &values);
        assert!(
            (n1 - g1).abs() <= 1e-6 && (n2 - g2).abs() <= 1e-6,
            "trial {trial}: μ={center} σ²={var}: newton ({n1},{n2}) vs grid ({g1},{g2})"
        );
        // The generating multipliers are the unique root, so Newton must
        // also have recovered them.
        assert!(
            (n1 - l1_pick).abs() <= 1e-9 && (n2 - l2_pick).abs() <= 1e-9,
            "trial {trial}: newton ({n1},{n2}) vs generator ({l1_pick},{l2_pick})"
        );
    }
}

#[test]
fn normalized_mean_solver_matches_bisection() {
    let ls = LabelSpace::new(10).unwrap();
    let values = ls.values().to_vec();
    // Normalized tilted mean as a direct function of λ.
    let tilted_mean = |l: f64| {
        let w: Vec<f64> = values.iter().map(|&y| (-l * y).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter().zip(&values).map(|(wk, y)| wk * y).sum::<f64>() / z
    };
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..50 {
        let target: f64 = rng.random_range(0.3..8.7);
        let solution = solve_normalized(&NormalizedTarget::Mean(target), &ls, DEFAULT_TOL).unwrap();
        let oracle_lambda = bisect_decreasing(target, tilted_mean);
        let mean = solution.weighted_sum(&values);
        assert!((mean - target).abs() <= 1e-9, "mean residual for {target}");
        // Rebuild the pmf from the bisected multiplier and compare pointwise.
        let w: Vec<f64> = values.iter().map(|&y| (-oracle_lambda * y).exp()).collect();
        let z: f64 = w.iter().sum();
        for (p, wk) in solution.weights.iter().zip(&w) {
            assert!((p - wk / z).abs() <= 1e-8, "pmf mismatch at target {target}");
        }
    }
}

/// A fixed feasible comparison pmf with mean 6.5 and variance 8.25.
fn mixture_pmf() -> Vec<f64> {
    vec![
        5.0 / 36.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.25,
        0.25,
        0.0,
        13.0 / 36.0,
    ]
}

#[test]
fn normalized_joint_solution_maximizes_entropy_over_feasible_points() {
    let ls = LabelSpace::new(10).unwrap();
    let values = ls.values().to_vec();
    let mean = 6.5;
    let variance = 8.25;

    let mix = mixture_pmf();
    let mix_mean: f64 = values.iter().zip(&mix).map(|(y, p)| y * p).sum();
    let mix_var: f64 = values
        .iter()
        .zip(&mix)
        .map(|(y, p)| (y - mean) * (y - mean) * p)
        .sum();
    assert!((mix_mean - mean).abs() < 1e-12 && (mix_var - variance).abs() < 1e-12);

    let solution = solve_normalized(
        &NormalizedTarget::MeanAndVariance { mean, variance },
        &ls,
        DEFAULT_TOL,
    )
    .unwrap();
    let p = solution.weights.clone();
    let got_mean: f64 = values.iter().zip(&p).map(|(y, pk)| y * pk).sum();
    let got_var: f64 = values
        .iter()
        .zip(&p)
        .map(|(y, pk)| (y - mean) * (y - mean) * pk)
        .sum();
    assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    assert!((got_mean - mean).abs() <= 1e-9);
    assert!((got_var - variance).abs() <= 1e-9);

    // Any feasible pmf scores lower entropy than the solved one.
    assert!(
        entropy(&p) >= entropy(&mix),
        "mixture beat the solution: {} vs {}",
        entropy(&mix),
        entropy(&p)
    );

    // Random feasible perturbations: directions orthogonal to the constant,
    // mean, and squared-deviation statistics keep both constraints exact,
    // so entropy must not increase along either sign.
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // Orthogonalize the constraint rows so sequential projection removes
    // every constrained component of the perturbation.
    let mut rows: Vec<Vec<f64>> = vec![
        vec![1.0; 10],
        values.clone(),
        values.iter().map(|&y| (y - mean) * (y - mean)).collect(),
    ];
    for i in 1..rows.len() {
        for j in 0..i {
            let coeff = dot(&rows[i], &rows[j]) / dot(&rows[j], &rows[j]);
            for idx in 0..10 {
                rows[i][idx] -= coeff * rows[j][idx];
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..200 {
        let mut v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        for row in &rows {
            let coeff = dot(&v, row) / dot(row, row);
            for (vi, ri) in v.iter_mut().zip(row) {
                *vi -= coeff * ri;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm < 1e-9 {
            continue;
        }
        // Step small enough to stay a valid pmf.
        let headroom = p
            .iter()
            .zip(&v)
            .map(|(pk, vk)| if vk.abs() > 1e-12 { pk / vk.abs() } else { 1.0 })
            .fold(f64::INFINITY, f64::min);
        let eps = 0.5 * headroom.min(0.05);
        for sign in [-1.0, 1.0] {
            let q: Vec<f64> = p.iter().zip(&v).map(|(pk, vk)| pk + sign * eps * vk).collect();
            assert!(q.iter().all(|&x| x >= 0.0));
            assert!(
                entropy(&q) <= entropy(&p) + 1e-12,
                "perturbation increased entropy"
            );
        }
    }
}

#[test]
fn unnormalized_pmf_back_substitutes_its_constraint() {
    let ls = LabelSpace::new(10).unwrap();
    let solution = solve_mean(4.5082005, &ls, DEFAULT_TOL).unwrap();
    let gibbs = gibbs_pmf(&solution, &ls, false).unwrap();
    let back = gibbs.weighted_sum(ls.values());
    assert!((back - 4.5082005).abs() <= 1e-9, "residual {back}");
}
