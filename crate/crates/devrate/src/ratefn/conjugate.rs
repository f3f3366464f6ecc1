//! Fenchel–Legendre transform of the limiting cumulant.
//!
//! `I_x(t₁, t₂) = sup_{u,v} { ⟨u,t₁⟩ + v t₂ − Ψ_x(u,v) }` is computed by a
//! damped Newton ascent on the strictly concave objective, with the analytic
//! Hessian of the cumulant, trust-radius step capping and Armijo
//! backtracking. Values of `+∞` are legitimate — they
//! occur exactly when the target lies outside the closure of the range of
//! `∇Ψ` — and are reported with a machine-readable certificate (an ascent
//! ray along which the objective keeps increasing) rather than a sentinel
//! float.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use super::{CumulantContext, Variant};
use crate::{Error, Result};

/// Iterate-norm budget beyond which an ascent ray is checked for divergence.
pub const NORM_BUDGET: f64 = 1e6;
/// Directional-derivative threshold certifying divergence to `+∞`.
pub const DIVERGENCE_DERIVATIVE: f64 = 1e-12;

/// A rate-function value; infinities are explicit, never sentinel floats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateValue {
    Finite(f64),
    Infinite,
}

impl RateValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            RateValue::Finite(v) => Some(v),
            RateValue::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, RateValue::Finite(_))
    }

    /// Minimum under the extended-real order.
    pub fn min_with(self, other: RateValue) -> RateValue {
        match (self, other) {
            (RateValue::Finite(a), RateValue::Finite(b)) => RateValue::Finite(a.min(b)),
            (RateValue::Finite(a), RateValue::Infinite) => RateValue::Finite(a),
            (RateValue::Infinite, o) => o,
        }
    }
}

/// Certificate that the ascent left every bounded set: at `iterate_norm`
/// along `direction` the objective still increased at rate
/// `directional_derivative`. An infinite `iterate_norm` marks an analytic
/// (not iterative) determination.
#[derive(Clone, Debug, Serialize)]
pub struct AscentRay {
    pub direction_u: Vec<f64>,
    pub direction_v: f64,
    pub iterate_norm: f64,
    pub directional_derivative: f64,
}

/// Where the supremum was (or was not) attained.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Maximizer {
    /// Attained interior maximizer.
    Point { u: Vec<f64>, v: f64 },
    /// Supremum approached along a ray; see [`AscentRay`].
    Ray(AscentRay),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    Converged,
    DivergedToInfinite,
    /// Iteration budget exhausted without convergence or a divergence
    /// certificate; the result is indeterminate and must not be consumed as
    /// a plain number.
    MaxIter,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateResult {
    pub value: RateValue,
    pub maximizer: Maximizer,
    pub status: RateStatus,
    /// Norm of `∇Ψ(w*) − t` at exit.
    pub residual: f64,
}

impl RateResult {
    /// The value, provided the computation actually settled.
    pub fn settled_value(&self) -> Option<RateValue> {
        match self.status {
            RateStatus::Converged | RateStatus::DivergedToInfinite => Some(self.value),
            RateStatus::MaxIter => None,
        }
    }
}

/// Convex conjugate of the context's cumulant at target `(t1, t2)`, started
/// from the origin.
pub fn conjugate(ctx: &CumulantContext, t1: &[f64], t2: f64) -> Result<RateResult> {
    let zeros = vec![0.0; t1.len()];
    conjugate_from(ctx, t1, t2, &zeros, 0.0)
}

/// Convex conjugate with an explicit starting point, used to warm-start
/// sweeps over nearby targets.
pub fn conjugate_from(
    ctx: &CumulantContext,
    t1: &[f64],
    t2: f64,
    u0: &[f64],
    v0: f64,
) -> Result<RateResult> {
    let q = ctx.model().q();
    if t1.len() != q || u0.len() != q {
        return Err(Error::input(format!(
            "conjugate target/start must have {q} response components"
        )));
    }
    let p = q + 1;
    let gtol = ctx.settings().tol;

    let objective = |w: &DVector<f64>| -> f64 {
        let (u, v) = split(w, q);
        let psi = ctx.eval_psi(u, v);
        dot(t1, u) + t2 * v - psi
    };
    let gradient = |w: &DVector<f64>, out: &mut DVector<f64>| {
        let (u, v) = split(w, q);
        let mut buf = [0.0f64; 4];
        ctx.psi_grad_into(u, v, &mut buf[..p]);
        for j in 0..q {
            out[j] = t1[j] - buf[j];
        }
        out[q] = t2 - buf[q];
    };

    let mut w = DVector::from_iterator(p, u0.iter().copied().chain(std::iter::once(v0)));
    let mut f = objective(&w);
    if !f.is_finite() {
        // The supplied start lies outside the finiteness domain; the origin
        // always works since Ψ(0, 0) = 0.
        w.fill(0.0);
        f = 0.0;
    }
    let mut grad = DVector::zeros(p);
    gradient(&w, &mut grad);
    let mut trust = 1.0f64;
    // Direction of the most recent accepted step; when the supremum is
    // approached along a curved path (say, a parabola in the (u, v) plane),
    // this tracks the path's tangent while w/‖w‖ does not, and only the
    // tangent derivative stays bounded away from zero.
    let mut ascent_dir: Option<DVector<f64>> = None;

    for _ in 0..ctx.settings().max_iter {
        if !grad.iter().all(|g| g.is_finite()) {
            break;
        }
        if grad.norm() <= gtol {
            return Ok(converged_result(&w, f, &grad, q));
        }
        let wnorm = w.norm();
        if wnorm > NORM_BUDGET {
            let e = ascent_dir.clone().unwrap_or(&w / wnorm);
            let dd = grad.dot(&e);
            if dd > DIVERGENCE_DERIVATIVE {
                return Ok(RateResult {
                    value: RateValue::Infinite,
                    maximizer: Maximizer::Ray(AscentRay {
                        direction_u: e.as_slice()[..q].to_vec(),
                        direction_v: e[q],
                        iterate_norm: wnorm,
                        directional_derivative: dd,
                    }),
                    status: RateStatus::DivergedToInfinite,
                    residual: grad.norm(),
                });
            }
        }

        // Direction candidates: Newton on the cumulant's Hessian, then the
        // raw gradient as a fallback when the Hessian is unusable.
        let newton = newton_direction(ctx, &w, &grad, q)
            .filter(|s| s.iter().all(|v| v.is_finite()) && s.dot(&grad) > 0.0);
        let mut moved = false;
        for dir in [newton, Some(grad.clone())] {
            let Some(mut step) = dir else { continue };
            let snorm = step.norm();
            if snorm == 0.0 {
                continue;
            }
            if snorm > trust {
                step *= trust / snorm;
            }
            let slope = step.dot(&grad);
            // Close to the maximizer the true per-step gain drops below the
            // rounding noise of the objective; a strict Armijo gate would
            // then reject every productive Newton step and stall with the
            // gradient just above tolerance. Allow a few ulps of slack so
            // the iteration degrades gracefully into Newton on ∇F = 0.
            let noise = 32.0 * f64::EPSILON * (1.0 + f.abs());
            let mut alpha = 1.0f64;
            while alpha >= 1e-14 {
                let cand = &w + &step * alpha;
                if cand == w {
                    break;
                }
                let fc = objective(&cand);
                if fc.is_finite() && fc >= f + 1e-4 * alpha * slope - noise {
                    let moved_by = &cand - &w;
                    let mnorm = moved_by.norm();
                    if mnorm > 0.0 {
                        ascent_dir = Some(moved_by / mnorm);
                    }
                    w = cand;
                    f = fc;
                    gradient(&w, &mut grad);
                    trust = if alpha == 1.0 {
                        (trust * 2.0).min(1e8)
                    } else {
                        (trust * 0.5).max(1e-9)
                    };
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            trust *= 0.25;
            if trust < 1e-12 {
                break;
            }
        }
    }

    Ok(RateResult {
        value: RateValue::Finite(f),
        maximizer: Maximizer::Point {
            u: w.as_slice()[..q].to_vec(),
            v: w[q],
        },
        status: RateStatus::MaxIter,
        residual: grad.norm(),
    })
}

fn converged_result(w: &DVector<f64>, f: f64, grad: &DVector<f64>, q: usize) -> RateResult {
    RateResult {
        value: RateValue::Finite(f),
        maximizer: Maximizer::Point {
            u: w.as_slice()[..q].to_vec(),
            v: w[q],
        },
        status: RateStatus::Converged,
        residual: grad.norm(),
    }
}

fn split(w: &DVector<f64>, q: usize) -> (&[f64], f64) {
    (&w.as_slice()[..q], w[q])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `∇²Ψ(w) · step = ∇F(w)`; the cumulant Hessian is analytic — the
/// exact second derivative of the quadrature objective — and positive
/// definite on the interior of the finiteness domain.
fn newton_direction(
    ctx: &CumulantContext,
    w: &DVector<f64>,
    grad_f: &DVector<f64>,
    q: usize,
) -> Option<DVector<f64>> {
    let p = q + 1;
    let mut buf = [0.0f64; 16];
    let (u, v) = split(w, q);
    ctx.psi_hess_into(u, v, &mut buf[..p * p]);
    if !buf[..p * p].iter().all(|v| v.is_finite()) {
        return None;
    }
    let h = DMatrix::from_row_slice(p, p, &buf[..p * p]);
    let chol = Cholesky::new(h)?;
    Some(chol.solve(grad_f))
}

/// `I_x(0⃗, 0)`, the rate of a vanishing density estimate.
///
/// * Nonnegative kernel: the supremum is approached as `v → −∞` and equals
///   `g(x)·λ(S₊)` (batch) or `g(x)·λ(S₊)/(1 − ad)` (semi-recursive);
///   infinite positive support (the Gaussian kernel) gives `+∞`.
/// * Two-valued `±1` signed kernel, batch variant: the minimum of
///   `Ψ(u, v) = e^v λ₊ M(u) + e^{-v} λ₋ M(−u) − (λ₊+λ₋) g` sits at `u = 0`
///   (the symmetrized log-Laplace transform is convex with a critical point
///   there), `v* = ½ ln(λ₋/λ₊)`, giving `g(x)·(√λ₊ − √λ₋)²`.
/// * Anything else: numeric conjugate at the zero target.
pub fn rate_i00(ctx: &CumulantContext) -> Result<RateResult> {
    let q = ctx.model().q();
    let g = ctx.g_at_x();
    let kernel = ctx.kernel();
    let scale = 1.0 / (1.0 - ctx.ad());

    if kernel.is_nonnegative() {
        let lp = kernel.lambda_splus();
        let ray = |dd: f64| {
            Maximizer::Ray(AscentRay {
                direction_u: vec![0.0; q],
                direction_v: -1.0,
                iterate_norm: f64::INFINITY,
                directional_derivative: dd,
            })
        };
        if lp.is_infinite() {
            return Ok(RateResult {
                value: RateValue::Infinite,
                maximizer: ray(f64::INFINITY),
                status: RateStatus::DivergedToInfinite,
                residual: 0.0,
            });
        }
        return Ok(RateResult {
            value: RateValue::Finite(g * lp * scale),
            maximizer: ray(0.0),
            status: RateStatus::Converged,
            residual: 0.0,
        });
    }

    if ctx.variant() == Variant::Nw {
        if let Some(ind) = kernel.as_signed_indicator() {
            if ind.is_plus_minus_one() {
                let lp = kernel.lambda_splus();
                let lm = kernel.lambda_sminus();
                let value = g * (lp.sqrt() - lm.sqrt()).powi(2);
                return Ok(RateResult {
                    value: RateValue::Finite(value),
                    maximizer: Maximizer::Point {
                        u: vec![0.0; q],
                        v: 0.5 * (lm / lp).ln(),
                    },
                    status: RateStatus::Converged,
                    residual: 0.0,
                });
            }
        }
    }

    conjugate(ctx, &vec![0.0; q], 0.0)
}
