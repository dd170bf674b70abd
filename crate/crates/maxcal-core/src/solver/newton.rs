//! Damped Newton root-finders used by the multiplier solvers.
//!
//! Both drivers take analytic derivatives, start from a caller-supplied
//! guess, and halve the step whenever the residual would grow; convergence
//! is an absolute test on the residual (callers pre-scale the tolerance by
//! the target magnitude so tiny tolerances remain meaningful for large
//! targets).

/// Most Newton iterations before giving up.
pub(crate) const MAX_ITERATIONS: usize = 200;

/// Most step-halvings within one iteration before giving up.
const MAX_HALVINGS: usize = 60;

/// Condition-estimate limit above which a 2x2 Jacobian is treated as singular.
pub(crate) const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOutcome<X> {
    pub root: X,
    pub iterations: usize,
    /// Absolute residual (inf-norm for the 2-D driver) at the root.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum NewtonFailure {
    /// Residual never fell under the tolerance.
    NoConvergence { iterations: usize, residual: f64 },
    /// Derivative vanished or left the representable range.
    BadDerivative { at: f64 },
    /// 2-D only: Jacobian condition estimate exceeded [`CONDITION_LIMIT`].
    Singular { cond: f64, at: [f64; 2] },
}

/// Scalar damped Newton: finds `x` with `|r(x)| <= tol`.
pub(crate) fn newton_1d(
    r: impl Fn(f64) -> f64,
    dr: impl Fn(f64) -> f64,
    x0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome<f64>, NewtonFailure> {
    let mut x = x0;
    let mut res = r(x);
    for iteration in 0..max_iter {
        if res.abs() <= tol {
            return Ok(NewtonOutcome {
                root: x,
                iterations: iteration,
                residual: res.abs(),
            });
        }
        let slope = dr(x);
        if slope == 0.0 || !slope.is_finite() {
            return Err(NewtonFailure::BadDerivative { at: x });
        }
        let mut step = res / slope;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = x - step;
            let candidate_res = r(candidate);
            if candidate_res.abs() < res.abs() || candidate_res.abs() <= tol {
                x = candidate;
                res = candidate_res;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(NewtonFailure::NoConvergence {
                iterations: iteration + 1,
                residual: res.abs(),
            });
        }
    }
    if res.abs() <= tol {
        Ok(NewtonOutcome {
            root: x,
            iterations: max_iter,
            residual: res.abs(),
        })
    } else {
        Err(NewtonFailure::NoConvergence {
            iterations: max_iter,
            residual: res.abs(),
        })
    }
}

/// Residuals and Jacobian of a two-equation system at a point.
pub(crate) type System2d = ([f64; 2], [[f64; 2]; 2]);

fn inf_norm(v: [f64; 2]) -> f64 {
    v[0].abs().max(v[1].abs())
}

/// Condition estimate of a 2x2 matrix in the infinity norm.
fn condition_estimate(j: [[f64; 2]; 2], det: f64) -> f64 {
    let norm = (j[0][0].abs() + j[0][1].abs()).max(j[1][0].abs() + j[1][1].abs());
    let inv_norm =
        ((j[1][1].abs() + j[0][1].abs()).max(j[1][0].abs() + j[0][0].abs())) / det.abs();
    norm * inv_norm
}

/// 2-D damped Newton: finds `x` with `max(|r1|,|r2|) <= tol`.
pub(crate) fn newton_2d(
    system: impl Fn([f64; 2]) -> System2d,
    x0: [f64; 2],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome<[f64; 2]>, NewtonFailure> {
    let mut x = x0;
    let (mut res, mut jac) = system(x);
    for iteration in 0..max_iter {
        if inf_norm(res) <= tol {
            return Ok(NewtonOutcome {
                root: x,
                iterations: iteration,
                residual: inf_norm(res),
            });
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(NewtonFailure::Singular {
                cond: f64::INFINITY,
                at: x,
            });
        }
        let cond = condition_estimate(jac, det);
        if cond > CONDITION_LIMIT {
            return Err(NewtonFailure::Singular { cond, at: x });
        }
        // Solve J * step = res directly.
        let mut step = [
            (res[0] * jac[1][1] - res[1] * jac[0][1]) / det,
            (res[1] * jac[0][0] - res[0] * jac[1][0]) / det,
        ];
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let candidate = [x[0] - step[0], x[1] - step[1]];
            let (candidate_res, candidate_jac) = system(candidate);
            if inf_norm(candidate_res) < inf_norm(res) || inf_norm(candidate_res) <= tol {
                x = candidate;
                res = candidate_res;
                jac = candidate_jac;
                accepted = true;
                break;
            }
            step[0] *= 0.5;
            step[1] *= 0.5;
        }
        if !accepted {
            return Err(NewtonFailure::NoConvergence {
                iterations: iteration + 1,
                residual: inf_norm(res),
            });
        }
    }
    if inf_norm(res) <= tol {
        Ok(NewtonOutcome {
            root: x,
            iterations: max_iter,
            residual: inf_norm(res),
        })
    } else {
        Err(NewtonFailure::NoConvergence {
            iterations: max_iter,
            residual: inf_norm(res),
        })
    }
}
