//! Independent root-finding oracles for the multiplier solvers: interval
//! bisection for the scalar constraint expressions and coarse grid search
//! plus monotone refinement for the coupled system.

/// `Σ_k stat_k · e^{−1−λ·stat_k}` — the scalar constraint expressions.
pub fn scalar_expression(lambda: f64, stats: &[f64]) -> f64 {
    stats
        .iter()
        .map(|&s| (-1.0 - lambda * s).exp() * s)
        .sum()
}

/// Bisection root of `f(λ) = target` for a strictly decreasing `f`.
pub fn bisect_decreasing(target: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut lo = -1.0;
    let mut hi = 1.0;
    while f(lo) < target {
        lo *= 2.0;
        assert!(lo > -1e6, "bracket search ran away low");
    }
    while f(hi) > target {
        hi *= 2.0;
        assert!(hi < 1e6, "bracket search ran away high");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The two coupled constraint expressions with the squared deviation
/// centered on `mu`; returns residuals against the targets.
pub fn joint_residuals(l1: f64, l2: f64, mu: f64, var: f64, values: &[f64]) -> (f64, f64) {
    let mut r_mean = 0.0;
    let mut r_var = 0.0;
    for &y in values {
        let dev = (y - mu) * (y - mu);
        let w = (-1.0 - l1 * y - l2 * dev).exp();
        r_mean += w * y;
        r_var += w * dev;
    }
    (r_mean - mu, r_var - var)
}

/// Coarse exhaustive grid search over the multiplier plane followed by
/// monotone refinement.  The grid score is the inf-norm of the log-ratio
/// residuals — the same zero set as the raw residuals, but flat across the
/// exponential weight scale, so the best cell lands in the root's valley
/// rather than in a far region with coincidentally small raw sums.
pub fn grid_refine(mu: f64, var: f64, values: &[f64]) -> (f64, f64) {
    let score_at = |l1: f64, l2: f64| {
        let (r1, r2) = joint_residuals(l1, l2, mu, var, values);
        ((r1 + mu) / mu).ln().abs().max(((r2 + var) / var).ln().abs())
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=60 {
        for j in 0..=60 {
            let l1 = -3.0 + i as f64 * 0.1;
            let l2 = -3.0 + j as f64 * 0.1;
            let score = score_at(l1, l2);
            if score < best.0 {
                best = (score, l1, l2);
            }
        }
    }

    // For a fixed second multiplier the mean expression is strictly
    // decreasing in the first, giving a unique partner that restores the
    // mean constraint.
    let partner = |l2: f64| {
        bisect_decreasing(mu, |l1| {
            let (r_mean, _) = joint_residuals(l1, l2, mu, var, values);
            r_mean + mu
        })
    };
    // Along that partner curve the deviation expression is strictly
    // decreasing in the second multiplier (its slope is a negated Schur
    // complement of the positive-definite weighted Gram matrix), so a
    // bracket expanded outward from the located cell pins the root.
    let dev_on_curve = |l2: f64| {
        let (_, r_var) = joint_residuals(partner(l2), l2, mu, var, values);
        r_var + var
    };
    let mut lo = best.2 - 0.1;
    let mut hi = best.2 + 0.1;
    while dev_on_curve(lo) < var {
        lo -= 0.2;
        assert!(lo > best.2 - 8.0, "second-multiplier bracket ran away low");
    }
    while dev_on_curve(hi) > var {
        hi += 0.2;
        assert!(hi < best.2 + 8.0, "second-multiplier bracket ran away high");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dev_on_curve(mid) > var {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l2 = 0.5 * (lo + hi);
    (partner(l2), l2)
}
