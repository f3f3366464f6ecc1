//! Finite-sample normalized cumulant `Λ_{n,x}`, the convergence oracle for
//! the limiting cumulant `Ψ_x`.
//!
//! For the batch estimator with bandwidth `h = h_n`,
//!
//! ```text
//! Λ_{n,x}(u, v) = h^{-d} ln( 1 + h^d T(h, 1) ),
//! T(h, ρ) = ∫ [ e^{ρ v K(z)} M_{x−hz}(ρ u K(z)) − g(x − hz) ] dz,
//! ```
//!
//! which follows from `E exp[(⟨u,Y⟩ + v) K((x − X)/h)] = 1 + h^d T(h, 1)`
//! after substituting `z = (x − X)/h`. The semi-recursive estimator averages
//! one such term per observation, with the arguments scaled by
//! `ρ_i = (h_n/h_i)^d`:
//!
//! ```text
//! Λ̃_{n,x}(u, v) = (n h_n^d)^{-1} Σ_{i=1}^n ln( 1 + h_i^d T(h_i, ρ_i) ).
//! ```
//!
//! Both converge to the corresponding limit as `n → ∞`, `h_n → 0`,
//! `n h_n^d → ∞`.

use rayon::prelude::*;

use super::CumulantContext;
use crate::models::{MAX_D, MAX_Q};
use crate::schedules::BandwidthSchedule;
use crate::{Error, Result};

/// Observations per parallel chunk in the semi-recursive sum. Fixed so the
/// summation order — chunked partial sums combined sequentially — does not
/// depend on the number of worker threads.
const CHUNK: u64 = 8192;

/// Evaluates `Λ_{n,x}(u, v)` for the context's variant under the given
/// bandwidth schedule.
pub fn eval_lambda_n(
    ctx: &CumulantContext,
    u: &[f64],
    v: f64,
    n: u64,
    sched: &BandwidthSchedule,
) -> Result<f64> {
    let q = ctx.model().q();
    if u.len() != q {
        return Err(Error::input(format!(
            "direction must have {q} response components, got {}",
            u.len()
        )));
    }
    if n == 0 {
        return Err(Error::input("sample size must be at least 1"));
    }
    let d = ctx.model().d() as i32;
    let hn = sched.hn(n as f64);
    let hnd = hn.powi(d);

    match ctx.variant() {
        super::Variant::Nw => {
            let t = shifted_integral(ctx, u, v, hn, 1.0);
            log_term(hnd, t).map(|l| l / hnd)
        }
        super::Variant::Semirec { .. } => {
            let chunks = n.div_ceil(CHUNK);
            let partials: Result<Vec<f64>> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let lo = c * CHUNK + 1;
                    let hi = n.min((c + 1) * CHUNK);
                    let mut acc = 0.0;
                    for i in lo..=hi {
                        let h = sched.hn(i as f64);
                        let rho = (hn / h).powi(d);
                        let t = shifted_integral(ctx, u, v, h, rho);
                        acc += log_term(h.powi(d), t)?;
                    }
                    Ok(acc)
                })
                .collect();
            let total: f64 = partials?.iter().sum();
            Ok(total / (n as f64 * hnd))
        }
    }
}

fn log_term(hd: f64, t: f64) -> Result<f64> {
    let arg = hd * t;
    if !arg.is_finite() || arg <= -1.0 {
        return Err(Error::numeric(format!(
            "finite-sample cumulant left its domain: h^d T = {arg}"
        )));
    }
    Ok(arg.ln_1p())
}

/// `T(h, ρ) = ∫ [e^{ρ v K(z)} M_{x−hz}(ρ u K(z)) − g(x − hz)] dz` over the
/// cached `z` grid. Unlike the limit, the Laplace transform and density are
/// evaluated at the shifted point `x − hz`, so the grouped fast path does not
/// apply.
fn shifted_integral(ctx: &CumulantContext, u: &[f64], v: f64, h: f64, rho: f64) -> f64 {
    let d = ctx.model().d();
    let q = u.len();
    let x = ctx.x();
    let (points, weights, kvals) = ctx.z_nodes();
    let mut shifted = [0.0f64; MAX_D];
    let mut theta = [0.0f64; MAX_Q];
    let mut acc = 0.0;
    for (idx, (w, &k)) in weights.iter().zip(kvals).enumerate() {
        if k == 0.0 {
            continue;
        }
        let z = &points[idx * d..(idx + 1) * d];
        for j in 0..d {
            shifted[j] = x[j] - h * z[j];
        }
        let rk = rho * k;
        for j in 0..q {
            theta[j] = rk * u[j];
        }
        // Combine the exponents before exponentiating: e^{ρvK} and the
        // Laplace factor can separately overflow or underflow while their
        // product stays representable. The expm1 form keeps the integrand
        // exactly zero at the origin and accurate when the exponent is small.
        let ex = rk * v + ctx.model().log_mgf(&shifted[..d], &theta[..q]);
        let g = ctx.model().g(&shifted[..d]);
        acc += w * g * ex.exp_m1();
    }
    acc
}
