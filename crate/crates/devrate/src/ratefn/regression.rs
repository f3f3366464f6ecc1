//! Rate function of the regression estimator itself.
//!
//! The ratio `r_n = m_n / g_n` inherits a rate from the pair via the
//! contraction
//!
//! ```text
//! J_x(s) = min( inf_{t ≠ 0} I_x(s t, t),  I_x(0⃗, 0) ),
//! ```
//!
//! the second branch accounting for sample paths on which the density
//! estimate itself vanishes. The scalar infimum is located by bracket
//! expansion over `t = ±2^k` followed by a ternary refinement; `I_x(s t, t)`
//! is convex in `t` on each sign half-line, so the expansion can stop at the
//! first octave where the value turns upward without missing the basin.

use serde::Serialize;

use super::conjugate::{conjugate_from, rate_i00, Maximizer, RateStatus, RateValue};
use super::CumulantContext;
use crate::{Error, Result};

/// Result of evaluating `J_x` at a target ratio `s`.
#[derive(Clone, Debug, Serialize)]
pub struct RegressionRate {
    /// Target value for the regression estimate.
    pub s: Vec<f64>,
    /// `inf_{t ≠ 0} I_x(s t, t)`.
    pub jstar: RateValue,
    /// `J_x(s) = min(jstar, I_x(0⃗, 0))`.
    pub j: RateValue,
    /// `I_x(0⃗, 0)`, the vanishing-density branch.
    pub i00: RateValue,
    /// Density target `t` realizing `j`: the interior minimizer when the
    /// first branch wins, `0` when the vanishing-density branch wins, absent
    /// when both branches are infinite.
    pub minimizing_t: Option<f64>,
}

/// Exponent range for the bracket scan over `t = ±2^k`.
const SCAN_MIN_EXP: i32 = -20;
const SCAN_MAX_EXP: i32 = 20;
const TERNARY_ITERS: usize = 90;

/// Evaluates the regression rate `J_x(s)`.
pub fn regression_rate(ctx: &CumulantContext, s: &[f64]) -> Result<RegressionRate> {
    let q = ctx.model().q();
    if s.len() != q {
        return Err(Error::input(format!(
            "target ratio must have {q} components, got {}",
            s.len()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("target ratio must be finite"));
    }

    let i00 = rate_i00(ctx)?.value;

    let mut jstar = RateValue::Infinite;
    let mut best_t = None;
    for sign in [1.0, -1.0] {
        // A nonnegative kernel forces ∂Ψ/∂v ≥ 0 everywhere, so negative
        // density targets are unreachable: I(st, t) = +∞ for all t < 0.
        if sign < 0.0 && ctx.kernel().is_nonnegative() {
            continue;
        }
        if let Some((t, value)) = minimize_half_line(ctx, s, sign)? {
            if !jstar.is_finite() || value < jstar.finite().unwrap() {
                jstar = RateValue::Finite(value);
                best_t = Some(t);
            }
        }
    }

    let j = jstar.min_with(i00);
    let minimizing_t = match (jstar, i00) {
        (RateValue::Finite(a), RateValue::Finite(b)) => {
            if a <= b {
                best_t
            } else {
                Some(0.0)
            }
        }
        (RateValue::Finite(_), RateValue::Infinite) => best_t,
        (RateValue::Infinite, RateValue::Finite(_)) => Some(0.0),
        (RateValue::Infinite, RateValue::Infinite) => None,
    };

    Ok(RegressionRate {
        s: s.to_vec(),
        jstar,
        j,
        i00,
        minimizing_t,
    })
}

/// State threaded through successive conjugate evaluations so each one can
/// start from the previous maximizer.
struct WarmEvaluator<'a> {
    ctx: &'a CumulantContext,
    s: &'a [f64],
    warm: Option<(Vec<f64>, f64)>,
    target: Vec<f64>,
}

impl<'a> WarmEvaluator<'a> {
    fn new(ctx: &'a CumulantContext, s: &'a [f64]) -> WarmEvaluator<'a> {
        WarmEvaluator {
            ctx,
            s,
            warm: None,
            target: vec![0.0; s.len()],
        }
    }

    /// `I(s t, t)` as an extended real (`+∞` for certified divergence).
    fn eval(&mut self, t: f64) -> Result<f64> {
        for (tgt, &sj) in self.target.iter_mut().zip(self.s) {
            *tgt = sj * t;
        }
        let (u0, v0): (&[f64], f64) = match &self.warm {
            Some((u, v)) => (u, *v),
            None => (&[], 0.0),
        };
        let result = if u0.is_empty() {
            let zeros = vec![0.0; self.s.len()];
            conjugate_from(self.ctx, &self.target, t, &zeros, 0.0)
        } else {
            conjugate_from(self.ctx, &self.target, t, u0, v0)
        }?;
        match result.status {
            RateStatus::Converged => {
                if let Maximizer::Point { u, v } = result.maximizer {
                    self.warm = Some((u, v));
                }
                Ok(result.value.finite().unwrap_or(f64::INFINITY))
            }
            RateStatus::DivergedToInfinite => Ok(f64::INFINITY),
            RateStatus::MaxIter => Err(Error::numeric(format!(
                "conjugate ascent exhausted its iteration budget without a \
                 divergence certificate at density target t = {t}"
            ))),
        }
    }
}

/// Minimizes `t ↦ I(s t, t)` over one sign half-line. Returns the minimizer
/// and value, or `None` when every probe was infinite.
fn minimize_half_line(
    ctx: &CumulantContext,
    s: &[f64],
    sign: f64,
) -> Result<Option<(f64, f64)>> {
    let mut ev = WarmEvaluator::new(ctx, s);

    // Expand outward from the smallest magnitude until the value turns
    // upward. Convexity makes a non-decrease at octave k a certificate that
    // the minimum lies at or below 2^k, so probing further is never needed —
    // which also keeps the conjugate away from extreme targets where its
    // gradient cannot be resolved beyond the f64 noise floor. Infinities
    // (certified unreachable targets) compare as larger than every finite
    // value, so a convex finiteness interval is handled by the same rule.
    let mut probes: Vec<(f64, f64)> = Vec::with_capacity(8);
    let mut best_idx: Option<usize> = None;
    for k in SCAN_MIN_EXP..=SCAN_MAX_EXP {
        let t = sign * (k as f64).exp2();
        let value = ev.eval(t)?;
        probes.push((t, value));
        if value.is_finite()
            && best_idx.is_none_or(|i| value < probes[i].1)
        {
            best_idx = Some(probes.len() - 1);
        }
        if let Some(&(_, prev)) = probes.len().checked_sub(2).and_then(|i| probes.get(i)) {
            if prev.is_finite() && value >= prev {
                break;
            }
        }
    }
    let Some(best_idx) = best_idx else {
        return Ok(None);
    };
    let (mut best_t, mut best_v) = probes[best_idx];

    // Bracket around the best probe; neighbors default to a further halving
    // or doubling when the best sits on the edge of the expansion range.
    let lo_t = if best_idx > 0 {
        probes[best_idx - 1].0
    } else {
        best_t / 2.0
    };
    let hi_t = if best_idx + 1 < probes.len() {
        probes[best_idx + 1].0
    } else {
        best_t * 2.0
    };
    let (mut a, mut b) = (lo_t.min(hi_t), lo_t.max(hi_t));

    for _ in 0..TERNARY_ITERS {
        let third = (b - a) / 3.0;
        if third.abs() < 1e-14 * (1.0 + best_t.abs()) {
            break;
        }
        let m1 = a + third;
        let m2 = b - third;
        let f1 = ev.eval(m1)?;
        let f2 = ev.eval(m2)?;
        if f1 < best_v {
            (best_t, best_v) = (m1, f1);
        }
        if f2 < best_v {
            (best_t, best_v) = (m2, f2);
        }
        if !f1.is_finite() && !f2.is_finite() {
            // Both probes outside the finiteness interval: contract around
            // the best point seen so far, which stays inside [a, b].
            a = 0.5 * (a + best_t);
            b = 0.5 * (b + best_t);
        } else if f1 <= f2 {
            b = m2;
        } else {
            a = m1;
        }
    }

    Ok(Some((best_t, best_v)))
}
