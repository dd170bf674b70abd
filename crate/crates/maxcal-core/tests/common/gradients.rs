//! Central finite-difference machinery for validating analytic gradients,
//! logit-level and through the full network.

use maxcal_core::solver::{global_moments, ConstraintForm, MomentConstraints, MultiplierEntry};
use maxcal_core::{
    label_smooth, maxent_loss, maxent_loss_grad, multipliers_from_constraints, softmax,
    LabelSpace, LagrangeSolution, LossConfig, LossForm, MlpModel, PenaltyStyle,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const LOGIT_TOL: f64 = 1e-5;
pub const NETWORK_TOL: f64 = 1e-4;

/// Relative disagreement with an absolute fallback near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Central finite difference of the loss with respect to each logit.
pub fn fd_grad(
    logits: &[f64],
    target: &[f64],
    cfg: &LossConfig,
    mc: &MomentConstraints,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    let mut work = logits.to_vec();
    for j in 0..logits.len() {
        work[j] = logits[j] + FD_STEP;
        let up = maxent_loss(&work, target, cfg, mc).unwrap();
        work[j] = logits[j] - FD_STEP;
        let down = maxent_loss(&work, target, cfg, mc).unwrap();
        work[j] = logits[j];
        out.push((up - down) / (2.0 * FD_STEP));
    }
    out
}

/// Summed residual of each multiplier's constraint group, recomputed from
/// the public solution fields; used to keep hinged instances away from the
/// kink where a finite difference straddles the max.
fn group_residuals(
    p: &[f64],
    class: usize,
    entry: &MultiplierEntry,
    form: ConstraintForm,
    mc: &MomentConstraints,
    include_local: bool,
) -> Vec<f64> {
    let expect = |stat: &dyn Fn(f64) -> f64| -> f64 {
        p.iter()
            .enumerate()
            .map(|(m, &pm)| pm * stat(m as f64))
            .sum()
    };
    match form {
        ConstraintForm::Mean => {
            let mut r = expect(&|y| y) - mc.global_mean;
            if include_local {
                r += expect(&|y| y) - mc.local_means[class];
            }
            vec![r]
        }
        ConstraintForm::Variance => {
            let mut r = expect(&|y| y * y) - mc.global_second_moment;
            if include_local {
                r += expect(&|y| y * y) - mc.local_second_moments[class];
            }
            vec![r]
        }
        ConstraintForm::Joint => {
            let c = entry.center.expect("joint entries carry a center");
            let mut r1 = expect(&|y| y) - mc.global_mean;
            let mut r2 = expect(&|y| (y - c) * (y - c)) - mc.global_variance;
            if include_local {
                r1 += expect(&|y| y) - mc.local_means[class];
                r2 += expect(&|y| (y - c) * (y - c)) - mc.local_central_variances[class];
            }
            vec![r1, r2]
        }
    }
}

/// Random logits kept away from hinge kinks for the configured loss.
fn draw_instance(
    rng: &mut ChaCha8Rng,
    k: usize,
    cfg: &LossConfig,
    mc: &MomentConstraints,
    class: usize,
) -> Vec<f64> {
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();
        if cfg.penalty != PenaltyStyle::Hinge {
            return logits;
        }
        let form = cfg.form.constraint_form().expect("hinge needs a moment form");
        let entry = cfg
            .multipliers
            .as_ref()
            .expect("moment form carries multipliers")
            .entry_for_class(class);
        let p = softmax(&logits);
        let residuals = group_residuals(&p, class, entry, form, mc, cfg.include_local);
        if residuals.iter().all(|r| r.abs() >= 1e-3) {
            return logits;
        }
    }
    panic!("could not draw logits away from the hinge kink");
}

/// Check one form across random instances, cycling the focal exponent, the
/// base weighting, the residual style, and the local-constraint switch.
/// Returns the worst relative disagreement seen.
pub fn check_form(form: LossForm, seed: u64, instances: usize) -> f64 {
    let k = 10;
    let ls = LabelSpace::new(k).unwrap();
    let mc = global_moments(&super::test_prior(), &ls).unwrap();
    let solutions: Option<(LagrangeSolution, LagrangeSolution)> =
        form.constraint_form().map(|cf| {
            (
                multipliers_from_constraints(&mc, &ls, cf, false).unwrap(),
                multipliers_from_constraints(&mc, &ls, cf, true).unwrap(),
            )
        });
    let gammas = [0.0, 0.5, 1.0, 2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for instance in 0..instances {
        let gamma = gammas[instance % gammas.len()];
        let mut cfg = match (form, &solutions) {
            (LossForm::CrossEntropy, _) => LossConfig::cross_entropy(),
            (LossForm::Focal, _) => LossConfig::focal(gamma),
            (_, Some((global, local))) => {
                let solution = if instance % 2 == 0 { global } else { local };
                LossConfig::maxent(form, gamma, solution.clone())
            }
            _ => unreachable!("moment forms always carry solutions"),
        };
        if instance % 3 == 0 {
            cfg = cfg.with_target_weighted_base();
        }
        if form.constraint_form().is_some() && instance % 4 < 2 {
            cfg = cfg.with_hinged_penalty();
        }
        let class = rng.random_range(0..k);
        let mut target = vec![0.0; k];
        target[class] = 1.0;
        if instance % 5 == 0 {
            target = label_smooth(&target, 0.1);
        }
        let logits = draw_instance(&mut rng, k, &cfg, &mc, class);

        let analytic = maxent_loss_grad(&logits, &target, &cfg, &mc).unwrap();
        let numeric = fd_grad(&logits, &target, &cfg, &mc);
        for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = rel_err(*a, *n);
            worst = worst.max(err);
            assert!(
                err <= LOGIT_TOL,
                "{form:?} instance {instance} logit {j}: analytic {a} vs numeric {n}"
            );
        }
    }
    worst
}

/// Mean batch loss through the full network at the model's current weights.
fn batch_loss(
    model: &MlpModel,
    rows: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &LossConfig,
    mc: &MomentConstraints,
) -> f64 {
    let total: f64 = rows
        .iter()
        .zip(targets)
        .map(|(x, t)| maxent_loss(&model.forward(x), t, cfg, mc).unwrap())
        .sum();
    total / rows.len() as f64
}

/// Check the network backward pass parameter-by-parameter for every loss
/// form. Returns the worst relative disagreement seen.
pub fn network_check(seed: u64) -> f64 {
    let d_in = 4;
    let hidden = 6;
    let k = 10;
    let batch = 8;
    let ls = LabelSpace::new(k).unwrap();
    let mc = global_moments(&super::test_prior(), &ls).unwrap();
    let forms = [
        LossForm::CrossEntropy,
        LossForm::Focal,
        LossForm::MaxEntMean,
        LossForm::MaxEntVariance,
        LossForm::MaxEntJoint,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for form in forms {
        let cfg = match form.constraint_form() {
            None => LossConfig::focal(1.0).with_target_weighted_base(),
            Some(cf) => {
                let solution = multipliers_from_constraints(&mc, &ls, cf, true).unwrap();
                LossConfig::maxent(form, 1.0, solution)
                    .with_hinged_penalty()
                    .with_target_weighted_base()
            }
        };
        let mut model = MlpModel::init(d_in, hidden, k, &mut rng);
        let rows: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..d_in).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                let mut t = vec![0.0; k];
                t[rng.random_range(0..k)] = 1.0;
                t
            })
            .collect();
        let row_refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let target_refs: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
        let (_, grads) = model
            .batch_gradients(&row_refs, &target_refs, &cfg, &mc)
            .unwrap();
        for index in 0..model.param_count() {
            let saved = model.param(index);
            model.set_param(index, saved + FD_STEP);
            let up = batch_loss(&model, &rows, &targets, &cfg, &mc);
            model.set_param(index, saved - FD_STEP);
            let down = batch_loss(&model, &rows, &targets, &cfg, &mc);
            model.set_param(index, saved);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = MlpModel::grad_entry(&grads, index);
            let err = rel_err(analytic, numeric);
            worst = worst.max(err);
            assert!(
                err <= NETWORK_TOL,
                "{form:?} parameter {index}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
    worst
}
