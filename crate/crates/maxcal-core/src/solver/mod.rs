//! Moment constraints over the class-index variable and the Newton solvers
//! for their Lagrange multipliers.
//!
//! Two families of solves live here:
//!
//! - **Unnormalized** ([`solve_mean`], [`solve_variance`], [`solve_joint`]):
//!   the general-solution weights `e^{-1-λ·f(y)}` carry no partition
//!   function, so each multiplier is the root of a fixed-point sum such as
//!   `Σ_k e^{-1-λ y_k} y_k = μ`. These are the multipliers the loss terms
//!   consume.
//! - **Normalized** ([`solve_normalized`]): adds the `Σp = 1` constraint and
//!   returns the entropy-maximizing pmf with the requested moments, used for
//!   plotting and sanity checks rather than training.
//!
//! Residual conventions: every converged entry records its targets so that
//! [`verify_constraints`] can re-evaluate the constraint expressions and
//! report signed residuals (`value − target`) and the one-sided
//! `value ≤ target` flags.

mod newton;

use crate::labels::{LabelError, LabelSpace, PriorDistribution, PRIOR_SUM_TOL};
use newton::{newton_1d, newton_2d, NewtonFailure, System2d, MAX_ITERATIONS};
use thiserror::Error;

/// Default residual tolerance for multiplier solves.
pub const DEFAULT_TOL: f64 = 1e-15;

/// Nudge applied to both multipliers when a joint solve meets a singular
/// Jacobian; the solve is retried once from the nudged point.
const SINGULAR_RETRY_NUDGE: f64 = 1e-6;

/// Errors from moment computation or multiplier solving.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("prior has {got} entries but the label space has {want} classes")]
    DimensionMismatch { got: usize, want: usize },
    #[error("target vector has {got} entries but the label space has {want} classes")]
    TargetLength { got: usize, want: usize },
    #[error("target vector sums to {0}; it must sum to 1 within 1e-9")]
    UnnormalizedTarget(f64),
    #[error("target vector entry {index} is {value}; entries must be finite and non-negative")]
    InvalidTargetEntry { index: usize, value: f64 },
    #[error("{what} target {target} lies outside the feasible range ({lo}, {hi})")]
    InfeasibleTarget {
        what: &'static str,
        target: f64,
        lo: f64,
        hi: f64,
    },
    #[error("no convergence after {iterations} iterations; residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(
        "jacobian nearly singular (condition estimate {cond:.3e}) at lambda = ({at0}, {at1})"
    )]
    SingularJacobian { cond: f64, at0: f64, at1: f64 },
    #[error("solve for class {class} failed: {source}")]
    ClassSolve {
        class: usize,
        #[source]
        source: Box<SolverError>,
    },
    #[error("solution holds per-class entries; evaluate a single entry instead")]
    PerClassPmf,
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// Which moment system a solution answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintForm {
    /// First moment of the class index.
    Mean,
    /// Raw second moment of the class index.
    Variance,
    /// First moment and central second moment, solved simultaneously.
    Joint,
}

/// First and second moments of the class-index variable, global (from the
/// training prior) and local (from a single target vector).
///
/// Local entries are stored in both the raw weighting (`Σ y² t_k`) used by
/// the variance-only form and the central weighting (`Σ (y − μ_t)² t_k`,
/// zero for one-hot targets) used by the joint form.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConstraints {
    /// Mean of the class index under the prior.
    pub global_mean: f64,
    /// Central variance of the class index under the prior.
    pub global_variance: f64,
    /// Raw second moment of the class index under the prior.
    pub global_second_moment: f64,
    /// Per-class local means (class index itself for one-hot targets).
    pub local_means: Vec<f64>,
    /// Per-class local raw second moments (`k²` for one-hot targets).
    pub local_second_moments: Vec<f64>,
    /// Per-class local central variances (0 for one-hot targets).
    pub local_central_variances: Vec<f64>,
    /// Whether downstream consumers should blend the local terms in.
    pub include_local: bool,
}

/// Moments of a single target vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMoments {
    /// `Σ_k y_k t_k` — the expected class index under the target.
    pub mean: f64,
    /// `Σ_k y_k² t_k` — raw second moment, the variance-only weighting.
    pub second_moment: f64,
    /// `Σ_k (y_k − mean)² t_k` — central variance, the joint weighting.
    pub central_variance: f64,
}

/// One converged multiplier set: a scalar solve or one class of a per-class
/// solve. Targets are recorded so residuals can be re-derived later.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierEntry {
    /// λ for the mean constraint (Mean and Joint forms).
    pub mean_multiplier: Option<f64>,
    /// λ for the (raw or central) second-moment constraint.
    pub variance_multiplier: Option<f64>,
    /// Center of the squared-deviation statistic (Joint form only).
    pub center: Option<f64>,
    /// Mean target the entry was solved against.
    pub mean_target: Option<f64>,
    /// Second-moment target the entry was solved against.
    pub variance_target: Option<f64>,
    /// Newton iterations spent.
    pub iterations: usize,
    /// Absolute residual at convergence (inf-norm for Joint).
    pub residual: f64,
}

impl MultiplierEntry {
    /// Entry for a converged mean solve.
    pub fn mean(multiplier: f64, target: f64, iterations: usize, residual: f64) -> Self {
        Self {
            mean_multiplier: Some(multiplier),
            variance_multiplier: None,
            center: None,
            mean_target: Some(target),
            variance_target: None,
            iterations,
            residual,
        }
    }

    /// Entry for a converged raw-second-moment solve.
    pub fn variance(multiplier: f64, target: f64, iterations: usize, residual: f64) -> Self {
        Self {
            mean_multiplier: None,
            variance_multiplier: Some(multiplier),
            center: None,
            mean_target: None,
            variance_target: Some(target),
            iterations,
            residual,
        }
    }

    /// Entry for a converged joint solve about `center`.
    pub fn joint(
        multipliers: [f64; 2],
        targets: [f64; 2],
        center: f64,
        iterations: usize,
        residual: f64,
    ) -> Self {
        Self {
            mean_multiplier: Some(multipliers[0]),
            variance_multiplier: Some(multipliers[1]),
            center: Some(center),
            mean_target: Some(targets[0]),
            variance_target: Some(targets[1]),
            iterations,
            residual,
        }
    }
}

/// A converged multiplier solution: either one entry (global or standalone
/// solve) or one entry per class (blended local constraints).
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeSolution {
    form: ConstraintForm,
    entries: Vec<MultiplierEntry>,
    per_class: bool,
}

impl LagrangeSolution {
    /// Wrap a standalone solve.
    pub fn single(form: ConstraintForm, entry: MultiplierEntry) -> Self {
        Self {
            form,
            entries: vec![entry],
            per_class: false,
        }
    }

    /// Wrap a per-class solve (one entry per class index).
    pub fn per_class(form: ConstraintForm, entries: Vec<MultiplierEntry>) -> Self {
        assert!(
            entries.len() >= 2,
            "per-class solutions need one entry per class"
        );
        Self {
            form,
            entries,
            per_class: true,
        }
    }

    pub fn form(&self) -> ConstraintForm {
        self.form
    }

    pub fn is_per_class(&self) -> bool {
        self.per_class
    }

    pub fn entries(&self) -> &[MultiplierEntry] {
        &self.entries
    }

    /// The sole entry of a standalone solve.
    ///
    /// Panics when called on a per-class solution.
    pub fn entry(&self) -> &MultiplierEntry {
        assert!(!self.per_class, "per-class solution: select a class entry");
        &self.entries[0]
    }

    /// Entry governing a sample of the given true class: the class's own
    /// entry when solved per class, the shared entry otherwise.
    pub fn entry_for_class(&self, class: usize) -> &MultiplierEntry {
        if self.per_class {
            &self.entries[class]
        } else {
            &self.entries[0]
        }
    }

    /// Worst-case iteration count across entries.
    pub fn iterations(&self) -> usize {
        self.entries.iter().map(|e| e.iterations).max().unwrap_or(0)
    }

    /// Worst-case absolute residual across entries.
    pub fn residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }
}

/// Gibbs-form weights over the label space, optionally normalized to a pmf.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDistribution {
    /// Per-class weights, positive (up to floating-point underflow).
    pub weights: Vec<f64>,
    /// Whether the weights were divided by their sum.
    pub normalized: bool,
}

impl GibbsDistribution {
    /// `Σ_k weights_k · values_k` — the constraint-expression value when fed
    /// the label-space statistics.
    pub fn weighted_sum(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Expected class index; a true expectation only when normalized.
    pub fn mean(&self, ls: &LabelSpace) -> f64 {
        self.weighted_sum(ls.values())
    }
}

/// Verdict for one constraint equation of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualLine {
    /// Class index when the solution is per class.
    pub class: Option<usize>,
    /// Which moment the equation constrains.
    pub kind: MomentKind,
    /// Constraint expression evaluated at the solved multipliers.
    pub value: f64,
    /// Target the solve aimed for.
    pub target: f64,
    /// Signed residual `value − target`.
    pub residual: f64,
    /// Whether the one-sided form `value ≤ target` holds.
    pub within_bound: bool,
}

/// Which moment a [`ResidualLine`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Mean,
    Variance,
}

/// All residual lines of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub lines: Vec<ResidualLine>,
}

impl ResidualReport {
    /// Largest absolute residual across all lines.
    pub fn max_abs_residual(&self) -> f64 {
        self.lines
            .iter()
            .map(|l| l.residual.abs())
            .fold(0.0, f64::max)
    }
}

/// Moments of the prior over the label space, with locals pre-filled under
/// the one-hot assumption.
pub fn global_moments(
    prior: &PriorDistribution,
    ls: &LabelSpace,
) -> Result<MomentConstraints, SolverError> {
    if prior.k() != ls.k() {
        return Err(SolverError::DimensionMismatch {
            got: prior.k(),
            want: ls.k(),
        });
    }
    let mut mean = 0.0;
    let mut second = 0.0;
    for (&y, &p) in ls.values().iter().zip(prior.probs()) {
        mean += y * p;
        second += y * y * p;
    }
    let k = ls.k();
    Ok(MomentConstraints {
        global_mean: mean,
        global_variance: second - mean * mean,
        global_second_moment: second,
        local_means: ls.values().to_vec(),
        local_second_moments: ls.values().iter().map(|y| y * y).collect(),
        local_central_variances: vec![0.0; k],
        include_local: true,
    })
}

/// Moments of a single (one-hot or smoothed) target vector.
pub fn local_moments(target: &[f64], ls: &LabelSpace) -> Result<LocalMoments, SolverError> {
    if target.len() != ls.k() {
        return Err(SolverError::TargetLength {
            got: target.len(),
            want: ls.k(),
        });
    }
    for (index, &value) in target.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(SolverError::InvalidTargetEntry { index, value });
        }
    }
    let sum: f64 = target.iter().sum();
    if (sum - 1.0).abs() > PRIOR_SUM_TOL {
        return Err(SolverError::UnnormalizedTarget(sum));
    }
    let mut mean = 0.0;
    let mut second = 0.0;
    for (&y, &t) in ls.values().iter().zip(target) {
        mean += y * t;
        second += y * y * t;
    }
    let central_variance = ls
        .values()
        .iter()
        .zip(target)
        .map(|(&y, &t)| (y - mean) * (y - mean) * t)
        .sum();
    Ok(LocalMoments {
        mean,
        second_moment: second,
        central_variance,
    })
}

/// `Σ_k e^{-1-λ y_k} y_k` — the unnormalized mean-constraint expression.
fn mean_expression(lambda: f64, ls: &LabelSpace) -> f64 {
    ls.values()
        .iter()
        .map(|&y| (-1.0 - lambda * y).exp() * y)
        .sum()
}

/// `Σ_k e^{-1-λ y_k²} y_k²` — the unnormalized second-moment expression.
fn second_moment_expression(lambda: f64, ls: &LabelSpace) -> f64 {
    ls.values()
        .iter()
        .map(|&y| {
            let y2 = y * y;
            (-1.0 - lambda * y2).exp() * y2
        })
        .sum()
}

/// Joint-form residuals and Jacobian at `(λ₁, λ₂)` for targets `(μ, σ²)`
/// with the squared deviation taken about `center`.
fn joint_system(l: [f64; 2], targets: [f64; 2], center: f64, ls: &LabelSpace) -> System2d {
    let mut g = [0.0, 0.0];
    let mut jac = [[0.0; 2]; 2];
    for &y in ls.values() {
        let dev2 = (y - center) * (y - center);
        let w = (-1.0 - l[0] * y - l[1] * dev2).exp();
        g[0] += w * y;
        g[1] += w * dev2;
        jac[0][0] -= w * y * y;
        jac[0][1] -= w * y * dev2;
        jac[1][0] -= w * dev2 * y;
        jac[1][1] -= w * dev2 * dev2;
    }
    ([g[0] - targets[0], g[1] - targets[1]], jac)
}

fn scaled_tol(tol: f64, target_magnitude: f64) -> f64 {
    tol * target_magnitude.abs().max(1.0)
}

fn map_scalar_failure(err: NewtonFailure) -> SolverError {
    match err {
        NewtonFailure::NoConvergence {
            iterations,
            residual,
        } => SolverError::NonConvergence {
            iterations,
            residual,
        },
        NewtonFailure::BadDerivative { at } => SolverError::NonConvergence {
            iterations: MAX_ITERATIONS,
            residual: at.abs(),
        },
        NewtonFailure::Singular { cond, at } => SolverError::SingularJacobian {
            cond,
            at0: at[0],
            at1: at[1],
        },
    }
}

/// Solve `Σ_k e^{-1-λ y_k} y_k = mu_target` for λ.
///
/// The expression is a strictly decreasing bijection from λ ∈ ℝ onto
/// `(0, ∞)`, so any positive finite target is feasible.
pub fn solve_mean(
    mu_target: f64,
    ls: &LabelSpace,
    tol: f64,
) -> Result<LagrangeSolution, SolverError> {
    if !(mu_target > 0.0) || !mu_target.is_finite() {
        return Err(SolverError::InfeasibleTarget {
            what: "mean",
            target: mu_target,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let out = newton_1d(
        |l| mean_expression(l, ls) - mu_target,
        |l| {
            -ls.values()
                .iter()
                .map(|&y| (-1.0 - l * y).exp() * y * y)
                .sum::<f64>()
        },
        0.0,
        scaled_tol(tol, mu_target),
        MAX_ITERATIONS,
    )
    .map_err(map_scalar_failure)?;
    Ok(LagrangeSolution::single(
        ConstraintForm::Mean,
        MultiplierEntry::mean(out.root, mu_target, out.iterations, out.residual),
    ))
}

/// Solve `Σ_k e^{-1-λ y_k²} y_k² = m2_target` for λ.
pub fn solve_variance(
    m2_target: f64,
    ls: &LabelSpace,
    tol: f64,
) -> Result<LagrangeSolution, SolverError> {
    if !(m2_target > 0.0) || !m2_target.is_finite() {
        return Err(SolverError::InfeasibleTarget {
            what: "second-moment",
            target: m2_target,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let out = newton_1d(
        |l| second_moment_expression(l, ls) - m2_target,
        |l| {
            -ls.values()
                .iter()
                .map(|&y| {
                    let y2 = y * y;
                    (-1.0 - l * y2).exp() * y2 * y2
                })
                .sum::<f64>()
        },
        0.0,
        scaled_tol(tol, m2_target),
        MAX_ITERATIONS,
    )
    .map_err(map_scalar_failure)?;
    Ok(LagrangeSolution::single(
        ConstraintForm::Variance,
        MultiplierEntry::variance(out.root, m2_target, out.iterations, out.residual),
    ))
}

/// Solve the coupled system
/// `Σ e^{-1-λ₁y-λ₂(y-μ)²} y = μ` and `Σ e^{-1-λ₁y-λ₂(y-μ)²} (y-μ)² = σ²`
/// for `(λ₁, λ₂)`, with the squared deviation centered on the mean target.
pub fn solve_joint(
    mu_target: f64,
    var_target: f64,
    ls: &LabelSpace,
    tol: f64,
) -> Result<LagrangeSolution, SolverError> {
    solve_joint_centered(mu_target, var_target, mu_target, ls, tol)
}

/// [`solve_joint`] with an explicit squared-deviation center, for blended
/// per-class targets whose center is the blended mean.
pub fn solve_joint_centered(
    mu_target: f64,
    var_target: f64,
    center: f64,
    ls: &LabelSpace,
    tol: f64,
) -> Result<LagrangeSolution, SolverError> {
    if !(mu_target > 0.0) || !mu_target.is_finite() {
        return Err(SolverError::InfeasibleTarget {
            what: "mean",
            target: mu_target,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if !(var_target > 0.0) || !var_target.is_finite() {
        return Err(SolverError::InfeasibleTarget {
            what: "squared-deviation",
            target: var_target,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let targets = [mu_target, var_target];
    let tol_abs = scaled_tol(tol, mu_target.abs().max(var_target.abs()));
    let run = |start: [f64; 2]| {
        newton_2d(
            |l| joint_system(l, targets, center, ls),
            start,
            tol_abs,
            MAX_ITERATIONS,
        )
    };
    let out = match run([0.0, 0.0]) {
        Ok(out) => out,
        // A near-singular Jacobian can be a knife-edge start; nudge both
        // multipliers once and retry before giving up.
        Err(NewtonFailure::Singular { at, .. }) => run([
            at[0] + SINGULAR_RETRY_NUDGE,
            at[1] + SINGULAR_RETRY_NUDGE,
        ])
        .map_err(map_scalar_failure)?,
        Err(other) => return Err(map_scalar_failure(other)),
    };
    Ok(LagrangeSolution::single(
        ConstraintForm::Joint,
        MultiplierEntry::joint(out.root, targets, center, out.iterations, out.residual),
    ))
}

/// Gibbs weights of one converged entry.
fn entry_weights(form: ConstraintForm, entry: &MultiplierEntry, ls: &LabelSpace) -> Vec<f64> {
    match form {
        ConstraintForm::Mean => {
            let l = entry.mean_multiplier.expect("mean entry carries λ_μ");
            ls.values().iter().map(|&y| (-1.0 - l * y).exp()).collect()
        }
        ConstraintForm::Variance => {
            let l = entry
                .variance_multiplier
                .expect("variance entry carries λ_σ²");
            ls.values()
                .iter()
                .map(|&y| (-1.0 - l * y * y).exp())
                .collect()
        }
        ConstraintForm::Joint => {
            let l1 = entry.mean_multiplier.expect("joint entry carries λ_μ");
            let l2 = entry
                .variance_multiplier
                .expect("joint entry carries λ_σ²");
            let c = entry.center.expect("joint entry carries its center");
            ls.values()
                .iter()
                .map(|&y| (-1.0 - l1 * y - l2 * (y - c) * (y - c)).exp())
                .collect()
        }
    }
}

/// Materialize the Gibbs weights of a standalone solution, optionally
/// normalized into a pmf for display.
pub fn gibbs_pmf(
    solution: &LagrangeSolution,
    ls: &LabelSpace,
    normalize: bool,
) -> Result<GibbsDistribution, SolverError> {
    if solution.is_per_class() {
        return Err(SolverError::PerClassPmf);
    }
    let mut weights = entry_weights(solution.form(), solution.entry(), ls);
    if normalize {
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
    }
    Ok(GibbsDistribution {
        weights,
        normalized: normalize,
    })
}

/// Moment targets for the normalized (pmf) maximum-entropy solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizedTarget {
    /// No moment constraints: the uniform pmf.
    Unconstrained,
    /// Fix the mean of the class index.
    Mean(f64),
    /// Fix the expected squared deviation about a given center.
    Variance { center: f64, variance: f64 },
    /// Fix the mean and the squared deviation about that mean.
    MeanAndVariance { mean: f64, variance: f64 },
}

impl NormalizedTarget {
    /// Read the targets for a constraint form out of prior-derived moments;
    /// `None` means unconstrained.
    pub fn from_constraints(
        constraints: &MomentConstraints,
        form: Option<ConstraintForm>,
    ) -> Self {
        match form {
            None => Self::Unconstrained,
            Some(ConstraintForm::Mean) => Self::Mean(constraints.global_mean),
            Some(ConstraintForm::Variance) => Self::Variance {
                center: constraints.global_mean,
                variance: constraints.global_variance,
            },
            Some(ConstraintForm::Joint) => Self::MeanAndVariance {
                mean: constraints.global_mean,
                variance: constraints.global_variance,
            },
        }
    }
}

/// Normalized pmf over `values` proportional to `e^{-λ·stat}`.
fn tilted_pmf(values: &[f64], stats: &[f64], lambda: f64) -> Vec<f64> {
    debug_assert_eq!(values.len(), stats.len());
    let m = stats
        .iter()
        .map(|&s| -lambda * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = stats.iter().map(|&s| (-lambda * s - m).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

fn expectation(pmf: &[f64], stats: &[f64]) -> f64 {
    pmf.iter().zip(stats).map(|(p, s)| p * s).sum()
}

/// Solve the normalized maximum-entropy pmf for the given moment targets.
///
/// The mean must lie strictly inside `(0, K-1)` and a squared-deviation
/// target strictly inside the range spanned by the per-class deviations.
pub fn solve_normalized(
    target: &NormalizedTarget,
    ls: &LabelSpace,
    tol: f64,
) -> Result<GibbsDistribution, SolverError> {
    let k = ls.k();
    let values = ls.values();
    let weights = match *target {
        NormalizedTarget::Unconstrained => vec![1.0 / k as f64; k],
        NormalizedTarget::Mean(mean) => {
            if !(mean > 0.0 && mean < ls.max_value()) {
                return Err(SolverError::InfeasibleTarget {
                    what: "normalized mean",
                    target: mean,
                    lo: 0.0,
                    hi: ls.max_value(),
                });
            }
            let out = newton_1d(
                |l| expectation(&tilted_pmf(values, values, l), values) - mean,
                |l| {
                    let p = tilted_pmf(values, values, l);
                    let e = expectation(&p, values);
                    let e2: f64 = p.iter().zip(values).map(|(pk, v)| pk * v * v).sum();
                    -(e2 - e * e)
                },
                0.0,
                scaled_tol(tol, mean),
                MAX_ITERATIONS,
            )
            .map_err(map_scalar_failure)?;
            tilted_pmf(values, values, out.root)
        }
        NormalizedTarget::Variance { center, variance } => {
            let dev2: Vec<f64> = values.iter().map(|&y| (y - center) * (y - center)).collect();
            let lo = dev2.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = dev2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(variance > lo && variance < hi) {
                return Err(SolverError::InfeasibleTarget {
                    what: "normalized squared-deviation",
                    target: variance,
                    lo,
                    hi,
                });
            }
            let out = newton_1d(
                |l| expectation(&tilted_pmf(values, &dev2, l), &dev2) - variance,
                |l| {
                    let p = tilted_pmf(values, &dev2, l);
                    let e = expectation(&p, &dev2);
                    let e2: f64 = p.iter().zip(&dev2).map(|(pk, v)| pk * v * v).sum();
                    -(e2 - e * e)
                },
                0.0,
                scaled_tol(tol, variance),
                MAX_ITERATIONS,
            )
            .map_err(map_scalar_failure)?;
            tilted_pmf(values, &dev2, out.root)
        }
        NormalizedTarget::MeanAndVariance { mean, variance } => {
            if !(mean > 0.0 && mean < ls.max_value()) {
                return Err(SolverError::InfeasibleTarget {
                    what: "normalized mean",
                    target: mean,
                    lo: 0.0,
                    hi: ls.max_value(),
                });
            }
            if !(variance > 0.0) {
                return Err(SolverError::InfeasibleTarget {
                    what: "normalized squared-deviation",
                    target: variance,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
            let dev2: Vec<f64> = values.iter().map(|&y| (y - mean) * (y - mean)).collect();
            let pmf_at = |l: [f64; 2]| -> Vec<f64> {
                let m = values
                    .iter()
                    .zip(&dev2)
                    .map(|(&y, &d)| -l[0] * y - l[1] * d)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut w: Vec<f64> = values
                    .iter()
                    .zip(&dev2)
                    .map(|(&y, &d)| (-l[0] * y - l[1] * d - m).exp())
                    .collect();
                let sum: f64 = w.iter().sum();
                for v in &mut w {
                    *v /= sum;
                }
                w
            };
            let system = |l: [f64; 2]| -> System2d {
                let p = pmf_at(l);
                let ey = expectation(&p, values);
                let ed = expectation(&p, &dev2);
                let eyy: f64 = p.iter().zip(values).map(|(pk, &y)| pk * y * y).sum();
                let eyd: f64 = p
                    .iter()
                    .zip(values.iter().zip(&dev2))
                    .map(|(pk, (&y, &d))| pk * y * d)
                    .sum();
                let edd: f64 = p.iter().zip(&dev2).map(|(pk, &d)| pk * d * d).sum();
                (
                    [ey - mean, ed - variance],
                    // d E[f] / d λ_j = −Cov(f, stat_j)
                    [
                        [-(eyy - ey * ey), -(eyd - ey * ed)],
                        [-(eyd - ey * ed), -(edd - ed * ed)],
                    ],
                )
            };
            let tol_abs = scaled_tol(tol, mean.abs().max(variance.abs()));
            let out = match newton_2d(system, [0.0, 0.0], tol_abs, MAX_ITERATIONS) {
                Ok(out) => out,
                Err(NewtonFailure::Singular { at, .. }) => newton_2d(
                    system,
                    [at[0] + SINGULAR_RETRY_NUDGE, at[1] + SINGULAR_RETRY_NUDGE],
                    tol_abs,
                    MAX_ITERATIONS,
                )
                .map_err(map_scalar_failure)?,
                Err(other) => return Err(map_scalar_failure(other)),
            };
            pmf_at(out.root)
        }
    };
    Ok(GibbsDistribution {
        weights,
        normalized: true,
    })
}

/// Re-evaluate every constraint equation of a solution and report signed
/// residuals along with the one-sided `value ≤ target` flags.
pub fn verify_constraints(solution: &LagrangeSolution, ls: &LabelSpace) -> ResidualReport {
    let mut lines = Vec::new();
    for (index, entry) in solution.entries().iter().enumerate() {
        let class = solution.is_per_class().then_some(index);
        let weights = entry_weights(solution.form(), entry, ls);
        match solution.form() {
            ConstraintForm::Mean => {
                if let Some(target) = entry.mean_target {
                    let value: f64 = weights
                        .iter()
                        .zip(ls.values())
                        .map(|(w, &y)| w * y)
                        .sum();
                    lines.push(ResidualLine {
                        class,
                        kind: MomentKind::Mean,
                        value,
                        target,
                        residual: value - target,
                        within_bound: value <= target,
                    });
                }
            }
            ConstraintForm::Variance => {
                if let Some(target) = entry.variance_target {
                    let value: f64 = weights
                        .iter()
                        .zip(ls.values())
                        .map(|(w, &y)| w * y * y)
                        .sum();
                    lines.push(ResidualLine {
                        class,
                        kind: MomentKind::Variance,
                        value,
                        target,
                        residual: value - target,
                        within_bound: value <= target,
                    });
                }
            }
            ConstraintForm::Joint => {
                let center = entry.center.expect("joint entry carries its center");
                if let Some(target) = entry.mean_target {
                    let value: f64 = weights
                        .iter()
                        .zip(ls.values())
                        .map(|(w, &y)| w * y)
                        .sum();
                    lines.push(ResidualLine {
                        class,
                        kind: MomentKind::Mean,
                        value,
                        target,
                        residual: value - target,
                        within_bound: value <= target,
                    });
                }
                if let Some(target) = entry.variance_target {
                    let value: f64 = weights
                        .iter()
                        .zip(ls.values())
                        .map(|(w, &y)| w * (y - center) * (y - center))
                        .sum();
                    lines.push(ResidualLine {
                        class,
                        kind: MomentKind::Variance,
                        value,
                        target,
                        residual: value - target,
                        within_bound: value <= target,
                    });
                }
            }
        }
    }
    ResidualReport { lines }
}
