//! Training losses: cross-entropy, multi-class focal, and the three
//! moment-constrained forms, with analytic gradients with respect to logits.
//!
//! The moment-constrained losses add signed penalty terms of the shape
//! `λ·[(E_p[f(𝒴)] − global target) + (E_p[f(𝒴)] − local target)]` on top of
//! a focal base, where `𝒴` is the class-index variable, the multipliers
//! come from [`precompute_multipliers`], and the local target belongs to the
//! sample's labelled class. Every loss here is a function of the logits
//! through the softmax only, so all gradients satisfy `Σ_j ∂𝓛/∂g_j = 0`.

use crate::labels::{LabelSpace, PriorDistribution};
use crate::solver::{
    solve_joint_centered, solve_mean, solve_variance, ConstraintForm,
    LagrangeSolution, MomentConstraints, MultiplierEntry, SolverError, DEFAULT_TOL,
};
use thiserror::Error;

/// Floor applied to probabilities before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Errors from loss configuration or evaluation.
#[derive(Debug, Error)]
pub enum LossError {
    #[error("loss form {form:?} needs solved multipliers in the config")]
    MissingMultipliers { form: LossForm },
    #[error("multipliers solve the {got:?} system but the loss form is {want:?}")]
    MultiplierFormMismatch {
        got: ConstraintForm,
        want: LossForm,
    },
    #[error("logits have {logits} entries, target has {target}")]
    DimensionMismatch { logits: usize, target: usize },
    #[error("constraint tables cover {got} classes but the input has {want}")]
    ConstraintClasses { got: usize, want: usize },
    #[error("gamma must be finite and non-negative, got {0}")]
    BadGamma(f64),
    #[error("label-smoothing alpha must lie in [0, 1), got {0}")]
    BadAlpha(f64),
}

/// Which objective to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossForm {
    /// Plain cross-entropy against the target vector.
    CrossEntropy,
    /// Focal base alone, no moment penalties.
    Focal,
    /// Focal base plus the mean-constraint penalty.
    MaxEntMean,
    /// Focal base plus the raw-second-moment penalty.
    MaxEntVariance,
    /// Focal base plus mean and central-second-moment penalties.
    MaxEntJoint,
}

impl LossForm {
    /// The multiplier system this form consumes, if any.
    pub fn constraint_form(self) -> Option<ConstraintForm> {
        match self {
            LossForm::CrossEntropy | LossForm::Focal => None,
            LossForm::MaxEntMean => Some(ConstraintForm::Mean),
            LossForm::MaxEntVariance => Some(ConstraintForm::Variance),
            LossForm::MaxEntJoint => Some(ConstraintForm::Joint),
        }
    }
}

/// How the focal base weights its per-class terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaseWeighting {
    /// `−Σ_k (1−p_k)^γ log p_k`: every class contributes. This is the form
    /// the entropy decomposition at γ = 1 holds for, but it carries no
    /// class-label signal of its own.
    #[default]
    AllClass,
    /// `−Σ_k y_k (1−p_k)^γ log p_k`: classes weighted by the target vector,
    /// the form a classifier can actually learn from.
    TargetWeighted,
}

/// How each constraint residual enters the penalty.
///
/// The constraints are one-sided (the expectation should not exceed its
/// target), so the two readings differ: the signed style charges the raw
/// residual, rewarding expectations that undershoot; the hinged style
/// charges a multiplier only while its summed residual is violated.
/// Signed is the literal penalty expression; hinged is the form a
/// classifier can train under, because the signed reward for
/// undershooting drags every prediction toward class zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyStyle {
    /// `λ·(E[f] − target)`, positive or negative.
    #[default]
    Signed,
    /// `λ·max(0, E[f] − target)`: active only while violated.
    Hinge,
}

/// Full description of a training objective.
///
/// `label_smoothing_alpha` records how targets should be smoothed before
/// evaluation; the loss functions themselves consume the target as given,
/// so callers (the trainer, the CLI) apply the smoothing.
#[derive(Debug, Clone)]
pub struct LossConfig {
    pub form: LossForm,
    /// Focal exponent γ; 1 makes the all-class base equal CE-sum − entropy.
    pub gamma: f64,
    /// Weighting of the focal base term.
    pub base: BaseWeighting,
    /// Whether the per-class local constraint residuals are included.
    pub include_local: bool,
    /// Signed or hinged constraint residuals.
    pub penalty: PenaltyStyle,
    /// Target smoothing the caller should apply before evaluation.
    pub label_smoothing_alpha: f64,
    /// Solved multipliers; required for the moment-constrained forms.
    pub multipliers: Option<LagrangeSolution>,
}

impl LossConfig {
    /// Cross-entropy objective.
    pub fn cross_entropy() -> Self {
        Self {
            form: LossForm::CrossEntropy,
            gamma: 0.0,
            base: BaseWeighting::TargetWeighted,
            include_local: false,
            penalty: PenaltyStyle::Signed,
            label_smoothing_alpha: 0.0,
            multipliers: None,
        }
    }

    /// Focal objective with the given exponent.
    pub fn focal(gamma: f64) -> Self {
        Self {
            form: LossForm::Focal,
            gamma,
            base: BaseWeighting::AllClass,
            include_local: false,
            penalty: PenaltyStyle::Signed,
            label_smoothing_alpha: 0.0,
            multipliers: None,
        }
    }

    /// Moment-constrained objective around solved multipliers, with the
    /// local residual terms switched on to match the multiplier blend.
    pub fn maxent(form: LossForm, gamma: f64, multipliers: LagrangeSolution) -> Self {
        let include_local = multipliers.is_per_class();
        Self {
            form,
            gamma,
            base: BaseWeighting::AllClass,
            include_local,
            penalty: PenaltyStyle::Signed,
            label_smoothing_alpha: 0.0,
            multipliers: Some(multipliers),
        }
    }

    /// Switch the focal base to target weighting (builder style).
    pub fn with_target_weighted_base(mut self) -> Self {
        self.base = BaseWeighting::TargetWeighted;
        self
    }

    /// Switch the constraint residuals to the hinged style.
    pub fn with_hinged_penalty(mut self) -> Self {
        self.penalty = PenaltyStyle::Hinge;
        self
    }

    /// Set the smoothing the caller should apply to targets.
    pub fn with_label_smoothing(mut self, alpha: f64) -> Self {
        self.label_smoothing_alpha = alpha;
        self
    }

    /// Check internal consistency: gamma and alpha ranges, and multipliers
    /// present and of the right system exactly when the form needs them.
    pub fn validate(&self) -> Result<(), LossError> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(LossError::BadGamma(self.gamma));
        }
        if !self.label_smoothing_alpha.is_finite()
            || !(0.0..1.0).contains(&self.label_smoothing_alpha)
        {
            return Err(LossError::BadAlpha(self.label_smoothing_alpha));
        }
        match self.form.constraint_form() {
            None => Ok(()),
            Some(want) => match &self.multipliers {
                None => Err(LossError::MissingMultipliers { form: self.form }),
                Some(solution) if solution.form() != want => {
                    Err(LossError::MultiplierFormMismatch {
                        got: solution.form(),
                        want: self.form,
                    })
                }
                Some(_) => Ok(()),
            },
        }
    }
}

/// Numerically stable softmax: `p_k = e^{g_k − max g} / Σ_j e^{g_j − max g}`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&g| (g - m).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// Shannon entropy `−Σ p log p` in nats, with `0·log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Cross-entropy `−Σ y log p` in nats, with probabilities floored at 1e-12.
pub fn cross_entropy(p: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), target.len());
    -p.iter()
        .zip(target)
        .map(|(&pk, &yk)| yk * pk.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Multi-class focal value `−Σ_k (1 − p_k)^γ log p_k` over all classes.
///
/// At γ = 0 this is the all-class CE sum; at γ = 1 it equals that sum minus
/// the Shannon entropy of `p`, exactly.
pub fn focal_multiclass(p: &[f64], gamma: f64) -> f64 {
    -p.iter()
        .map(|&pk| (1.0 - pk).powf(gamma) * pk.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Focal base under the configured weighting.
fn focal_base(p: &[f64], target: &[f64], gamma: f64, base: BaseWeighting) -> f64 {
    match base {
        BaseWeighting::AllClass => focal_multiclass(p, gamma),
        BaseWeighting::TargetWeighted => -p
            .iter()
            .zip(target)
            .map(|(&pk, &yk)| yk * (1.0 - pk).powf(gamma) * pk.max(PROB_FLOOR).ln())
            .sum::<f64>(),
    }
}

/// `d base / d p_m` for every class.
fn focal_base_grad_p(p: &[f64], target: &[f64], gamma: f64, base: BaseWeighting) -> Vec<f64> {
    p.iter()
        .zip(target)
        .map(|(&pk, &yk)| {
            let pf = pk.max(PROB_FLOOR);
            // d/dp [−(1−p)^γ log p] = γ(1−p)^{γ−1} log p − (1−p)^γ / p,
            // with the γ = 0 branch written out to dodge 0·∞ at p = 1.
            let dd = if gamma == 0.0 {
                -1.0 / pf
            } else {
                gamma * (1.0 - pk).powf(gamma - 1.0) * pf.ln() - (1.0 - pk).powf(gamma) / pf
            };
            match base {
                BaseWeighting::AllClass => dd,
                BaseWeighting::TargetWeighted => yk * dd,
            }
        })
        .collect()
}

/// Index of the largest target entry: the labelled class for one-hot or
/// smoothed targets.
fn target_class(target: &[f64]) -> usize {
    target
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// The per-class statistic inside one constraint expectation.
#[derive(Debug, Clone, Copy)]
enum Statistic {
    /// The class index itself.
    Index,
    /// The squared class index.
    IndexSquared,
    /// Squared deviation of the class index from a fixed center.
    CenteredSquare(f64),
}

impl Statistic {
    fn eval(self, y: f64) -> f64 {
        match self {
            Statistic::Index => y,
            Statistic::IndexSquared => y * y,
            Statistic::CenteredSquare(c) => (y - c) * (y - c),
        }
    }
}

/// One `E[f] − target` residual inside a multiplier's bracket.
#[derive(Debug, Clone, Copy)]
struct ResidualPart {
    statistic: Statistic,
    target: f64,
}

impl ResidualPart {
    fn residual(&self, p: &[f64]) -> f64 {
        let expectation: f64 = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| self.statistic.eval(k as f64) * pk)
            .sum();
        expectation - self.target
    }
}

/// Every residual scaled by one multiplier. The hinge gates the group's
/// summed residual, so slack in one part offsets violation in another and
/// the group stops charging exactly where the parts' blended target sits —
/// the same blend the multiplier was solved against.
#[derive(Debug, Clone)]
struct PenaltyGroup {
    lambda: f64,
    parts: Vec<ResidualPart>,
}

impl PenaltyGroup {
    fn residual(&self, p: &[f64]) -> f64 {
        self.parts.iter().map(|t| t.residual(p)).sum()
    }

    /// Whether the group contributes at this point under the style.
    fn active(&self, p: &[f64], style: PenaltyStyle) -> bool {
        match style {
            PenaltyStyle::Signed => true,
            PenaltyStyle::Hinge => self.residual(p) > 0.0,
        }
    }
}

/// The penalty groups a form sums: one group per multiplier, each holding
/// its global residual first and the matching local residual when included.
fn penalty_groups(
    class: usize,
    entry: &MultiplierEntry,
    form: ConstraintForm,
    mc: &MomentConstraints,
    include_local: bool,
) -> Vec<PenaltyGroup> {
    let part = |statistic, target| ResidualPart { statistic, target };
    match form {
        ConstraintForm::Mean => {
            let lambda = entry.mean_multiplier.expect("mean multiplier solved");
            let mut parts = vec![part(Statistic::Index, mc.global_mean)];
            if include_local {
                parts.push(part(Statistic::Index, mc.local_means[class]));
            }
            vec![PenaltyGroup { lambda, parts }]
        }
        ConstraintForm::Variance => {
            let lambda = entry
                .variance_multiplier
                .expect("variance multiplier solved");
            let mut parts = vec![part(Statistic::IndexSquared, mc.global_second_moment)];
            if include_local {
                parts.push(part(Statistic::IndexSquared, mc.local_second_moments[class]));
            }
            vec![PenaltyGroup { lambda, parts }]
        }
        ConstraintForm::Joint => {
            let l1 = entry.mean_multiplier.expect("mean multiplier solved");
            let l2 = entry
                .variance_multiplier
                .expect("variance multiplier solved");
            let c = entry.center.expect("joint entry carries its center");
            let mut mean_parts = vec![part(Statistic::Index, mc.global_mean)];
            let mut var_parts = vec![part(Statistic::CenteredSquare(c), mc.global_variance)];
            if include_local {
                mean_parts.push(part(Statistic::Index, mc.local_means[class]));
                var_parts.push(part(
                    Statistic::CenteredSquare(c),
                    mc.local_central_variances[class],
                ));
            }
            vec![
                PenaltyGroup {
                    lambda: l1,
                    parts: mean_parts,
                },
                PenaltyGroup {
                    lambda: l2,
                    parts: var_parts,
                },
            ]
        }
    }
}

/// Moment-penalty value added by the constrained forms.
fn moment_penalty(p: &[f64], groups: &[PenaltyGroup], style: PenaltyStyle) -> f64 {
    groups
        .iter()
        .map(|g| {
            let residual = g.residual(p);
            g.lambda
                * match style {
                    PenaltyStyle::Signed => residual,
                    PenaltyStyle::Hinge => residual.max(0.0),
                }
        })
        .sum()
}

/// `d penalty / d p_m` for every class: each active group contributes its
/// multiplier times the sum of its parts' statistics, so with both global
/// and local residuals present the slope doubles.
fn moment_penalty_grad_p(
    p: &[f64],
    k: usize,
    groups: &[PenaltyGroup],
    style: PenaltyStyle,
) -> Vec<f64> {
    let mut grad = vec![0.0; k];
    for g in groups {
        if g.active(p, style) {
            for part in &g.parts {
                for (m, slot) in grad.iter_mut().enumerate() {
                    *slot += g.lambda * part.statistic.eval(m as f64);
                }
            }
        }
    }
    grad
}

fn check_shapes(
    logits: &[f64],
    target: &[f64],
    cfg: &LossConfig,
    mc: &MomentConstraints,
) -> Result<(), LossError> {
    cfg.validate()?;
    if logits.len() != target.len() {
        return Err(LossError::DimensionMismatch {
            logits: logits.len(),
            target: target.len(),
        });
    }
    if cfg.form.constraint_form().is_some() && mc.local_means.len() != logits.len() {
        return Err(LossError::ConstraintClasses {
            got: mc.local_means.len(),
            want: logits.len(),
        });
    }
    Ok(())
}

/// Evaluate the configured loss at the given logits.
pub fn maxent_loss(
    logits: &[f64],
    target: &[f64],
    cfg: &LossConfig,
    mc: &MomentConstraints,
) -> Result<f64, LossError> {
    check_shapes(logits, target, cfg, mc)?;
    let p = softmax(logits);
    let value = match cfg.form {
        LossForm::CrossEntropy => cross_entropy(&p, target),
        LossForm::Focal => focal_base(&p, target, cfg.gamma, cfg.base),
        _ => {
            let form = cfg.form.constraint_form().expect("moment form");
            let solution = cfg.multipliers.as_ref().expect("validated above");
            let class = target_class(target);
            let entry = solution.entry_for_class(class);
            let groups = penalty_groups(class, entry, form, mc, cfg.include_local);
            focal_base(&p, target, cfg.gamma, cfg.base)
                + moment_penalty(&p, &groups, cfg.penalty)
        }
    };
    Ok(value)
}

/// Analytic gradient of [`maxent_loss`] with respect to the logits.
pub fn maxent_loss_grad(
    logits: &[f64],
    target: &[f64],
    cfg: &LossConfig,
    mc: &MomentConstraints,
) -> Result<Vec<f64>, LossError> {
    check_shapes(logits, target, cfg, mc)?;
    let p = softmax(logits);
    let k = p.len();
    // dL/dp for the configured form...
    let dl_dp: Vec<f64> = match cfg.form {
        LossForm::CrossEntropy => p
            .iter()
            .zip(target)
            .map(|(&pk, &yk)| -yk / pk.max(PROB_FLOOR))
            .collect(),
        LossForm::Focal => focal_base_grad_p(&p, target, cfg.gamma, cfg.base),
        _ => {
            let form = cfg.form.constraint_form().expect("moment form");
            let solution = cfg.multipliers.as_ref().expect("validated above");
            let class = target_class(target);
            let entry = solution.entry_for_class(class);
            let groups = penalty_groups(class, entry, form, mc, cfg.include_local);
            let base = focal_base_grad_p(&p, target, cfg.gamma, cfg.base);
            let pen = moment_penalty_grad_p(&p, k, &groups, cfg.penalty);
            base.iter().zip(&pen).map(|(b, q)| b + q).collect()
        }
    };
    // ...then one softmax chain step: ∂L/∂g_j = p_j (dL/dp_j − Σ_m p_m dL/dp_m).
    let inner: f64 = p.iter().zip(&dl_dp).map(|(pm, dm)| pm * dm).sum();
    Ok(p
        .iter()
        .zip(&dl_dp)
        .map(|(pj, dj)| pj * (dj - inner))
        .collect())
}

/// Solve the Lagrange multipliers a moment-constrained loss consumes.
///
/// With `include_local` the targets blend the prior moments with each
/// class's local moments (their average), giving one multiplier set per
/// class; without it a single set is solved from the prior moments alone.
pub fn precompute_multipliers(
    prior: &PriorDistribution,
    ls: &LabelSpace,
    form: ConstraintForm,
    include_local: bool,
) -> Result<LagrangeSolution, SolverError> {
    multipliers_from_constraints(&crate::solver::global_moments(prior, ls)?, ls, form, include_local)
}

/// [`precompute_multipliers`] over an explicit constraint table, for
/// callers whose local moments differ from the one-hot defaults (smoothed
/// targets).
pub fn multipliers_from_constraints(
    mc: &MomentConstraints,
    ls: &LabelSpace,
    form: ConstraintForm,
    include_local: bool,
) -> Result<LagrangeSolution, SolverError> {
    multipliers_with_tolerance(mc, ls, form, include_local, DEFAULT_TOL)
}

/// [`multipliers_from_constraints`] at an explicit residual tolerance.
pub fn multipliers_with_tolerance(
    mc: &MomentConstraints,
    ls: &LabelSpace,
    form: ConstraintForm,
    include_local: bool,
    tol: f64,
) -> Result<LagrangeSolution, SolverError> {
    if !include_local {
        return match form {
            ConstraintForm::Mean => solve_mean(mc.global_mean, ls, tol),
            ConstraintForm::Variance => solve_variance(mc.global_second_moment, ls, tol),
            ConstraintForm::Joint => solve_joint_centered(
                mc.global_mean,
                mc.global_variance,
                mc.global_mean,
                ls,
                tol,
            ),
        };
    }
    let mut entries = Vec::with_capacity(ls.k());
    for class in 0..ls.k() {
        let solved = match form {
            ConstraintForm::Mean => {
                solve_mean(0.5 * (mc.global_mean + mc.local_means[class]), ls, tol)
            }
            ConstraintForm::Variance => solve_variance(
                0.5 * (mc.global_second_moment + mc.local_second_moments[class]),
                ls,
                tol,
            ),
            ConstraintForm::Joint => {
                let mu = 0.5 * (mc.global_mean + mc.local_means[class]);
                let var = 0.5 * (mc.global_variance + mc.local_central_variances[class]);
                solve_joint_centered(mu, var, mu, ls, tol)
            }
        }
        .map_err(|e| SolverError::ClassSolve {
            class,
            source: Box::new(e),
        })?;
        entries.push(*solved.entry());
    }
    Ok(LagrangeSolution::per_class(form, entries))
}
