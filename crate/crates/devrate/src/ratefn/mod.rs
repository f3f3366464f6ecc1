//! Deviation rate functions for kernel regression estimators.
//!
//! Everything here revolves around the limiting cumulant of the pair
//! `(m_n(x), g_n(x))`. For the batch estimator it is
//!
//! ```text
//! Ψ_x(u, v) = ∫ [ e^{v K(z)} M_x(u K(z)) − g(x) ] dz,
//! ```
//!
//! where `M_x(θ) = g(x) E[e^{θ·Y} | X = x]` is the joint Laplace transform
//! supplied by the model. For the semi-recursive estimator with bandwidth
//! exponent `a`, an auxiliary integral over `s ∈ [0, 1]` accounts for the
//! per-observation bandwidths:
//!
//! ```text
//! Ψ̃_{a,x}(u, v) = ∫ ∫₀¹ s^{-ad} [ e^{s^{ad} v K(z)} M_x(s^{ad} u K(z)) − g(x) ] ds dz.
//! ```
//!
//! The submodules build on these: convex conjugation (the Fenchel–Legendre
//! transform `I_x`), the ratio rate `J`, closed-form moderate-deviation rates,
//! the finite-sample cumulant `Λ_{n,x}` as a convergence oracle, and a check
//! of the zero-target condition that makes `J` a genuine rate function.

mod condition;
mod conjugate;
mod finite_n;
mod mdp;
mod regression;

pub use condition::{check_zero_target_condition, ConditionReport, ConditionVerdict};
pub use conjugate::{
    conjugate, conjugate_from, rate_i00, AscentRay, Maximizer, RateResult, RateStatus, RateValue,
};
pub use finite_n::eval_lambda_n;
pub use mdp::{mdp_rate, phi_limit};
pub use regression::{regression_rate, RegressionRate};

use crate::kernels::Kernel;
use crate::models::{JointModel, MAX_Q};
use crate::quad::{Axis, TensorGrid};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Which estimator's cumulant limit to use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Batch estimator: one bandwidth for all observations.
    Nw,
    /// Semi-recursive estimator with bandwidth exponent `a` (requires `a·d < 1`).
    Semirec { a: f64 },
}

/// Quadrature and iteration settings for a [`CumulantContext`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSettings {
    /// Gauss–Legendre nodes per panel on each `z` axis.
    pub z_nodes_per_panel: usize,
    /// Overrides the kernel's own truncation half-width when set.
    pub truncation_radius: Option<f64>,
    /// Target accuracy for quadrature and ascent residuals.
    pub tol: f64,
    /// Panel edges for the auxiliary `s ∈ [0, 1]` axis. Graded toward zero
    /// because the integrand contains fractional powers `s^{ad}` there.
    pub s_panel_edges: Vec<f64>,
    pub s_nodes_per_panel: usize,
    /// Iteration budget for the conjugate ascent. Divergent problems whose
    /// supremum is approached along a curved path (not a straight ray) need
    /// a few thousand short steps before the norm budget certifies them, so
    /// the default is generous; converging problems exit within dozens.
    pub max_iter: usize,
}

impl Default for QuadSettings {
    fn default() -> QuadSettings {
        QuadSettings {
            z_nodes_per_panel: 64,
            truncation_radius: None,
            tol: 1e-9,
            s_panel_edges: vec![0.0, 1e-4, 1e-2, 1.0],
            s_nodes_per_panel: 32,
            max_iter: 5000,
        }
    }
}

#[derive(Clone, Debug)]
struct SNode {
    w: f64,
    /// `s^{ad}`.
    s_ad: f64,
    /// `s^{-ad}`.
    s_neg_ad: f64,
}

/// Immutable evaluation context: model, kernel, point and cached quadrature
/// data. All rate-function operations are pure given a context, so contexts
/// can be shared freely across threads.
#[derive(Clone, Debug)]
pub struct CumulantContext {
    model: JointModel,
    kernel: Kernel,
    x: Vec<f64>,
    variant: Variant,
    settings: QuadSettings,
    g_x: f64,
    m_x: Vec<f64>,
    r_x: Vec<f64>,
    /// `∫ K²`, cached for the moderate-deviation rates.
    l2k: f64,
    /// Flattened `z` nodes: coordinates (`len·d`), weights, kernel values.
    z_points: Vec<f64>,
    z_weights: Vec<f64>,
    z_kvals: Vec<f64>,
    /// `(kernel value, total weight)` groups when the kernel is piecewise
    /// constant with few distinct values; collapses the `z` integral to a
    /// handful of Laplace evaluations. Zero values are excluded.
    kappa_groups: Option<Vec<(f64, f64)>>,
    /// Auxiliary `s` axis for the semi-recursive variant (empty otherwise).
    s_nodes: Vec<SNode>,
}

impl CumulantContext {
    pub fn new(
        model: JointModel,
        kernel: Kernel,
        x: Vec<f64>,
        variant: Variant,
        settings: QuadSettings,
    ) -> Result<CumulantContext> {
        let d = model.d();
        if kernel.dim() != d {
            return Err(Error::config(format!(
                "kernel dimension {} does not match model dimension {}",
                kernel.dim(),
                d
            )));
        }
        if x.len() != d {
            return Err(Error::config(format!(
                "evaluation point has dimension {}, expected {}",
                x.len(),
                d
            )));
        }
        if let Variant::Semirec { a } = variant {
            if !(a.is_finite() && a > 0.0 && a * (d as f64) < 1.0) {
                return Err(Error::config(format!(
                    "semi-recursive exponent must satisfy 0 < a·d < 1, got a = {a}, d = {d}"
                )));
            }
        }
        if !(settings.tol.is_finite() && settings.tol > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        if settings.z_nodes_per_panel < 2 || settings.s_nodes_per_panel < 2 {
            return Err(Error::config("need at least 2 quadrature nodes per panel"));
        }
        let g_x = model.g(&x);
        if !(g_x.is_finite() && g_x > 0.0) {
            return Err(Error::numeric(format!(
                "design density vanishes at the evaluation point (g = {g_x})"
            )));
        }
        let mut m_x = vec![0.0; model.q()];
        model.m_into(&x, &mut m_x);
        let mut r_x = vec![0.0; model.q()];
        model.r_into(&x, &mut r_x);

        let mut ctx = CumulantContext {
            model,
            kernel,
            x,
            variant,
            settings,
            g_x,
            m_x,
            r_x,
            l2k: 0.0,
            z_points: Vec::new(),
            z_weights: Vec::new(),
            z_kvals: Vec::new(),
            kappa_groups: None,
            s_nodes: Vec::new(),
        };
        ctx.build_grids(1)?;
        ctx.self_check()?;
        Ok(ctx)
    }

    /// Populates the cached grids; `refine` doubles the node counts (used by
    /// the construction-time convergence check).
    fn build_grids(&mut self, refine: usize) -> Result<()> {
        let grid = self.z_grid(self.settings.z_nodes_per_panel * refine)?;
        let d = self.model.d();
        let mut points = Vec::with_capacity(grid.len() * d);
        let mut weights = Vec::with_capacity(grid.len());
        let mut kvals = Vec::with_capacity(grid.len());
        grid.for_each(|z, w| {
            points.extend_from_slice(z);
            weights.push(w);
            kvals.push(self.kernel.eval(z));
        });
        let l2k = weights
            .iter()
            .zip(&kvals)
            .map(|(w, k)| w * k * k)
            .sum::<f64>();

        // Group nodes by exact kernel value when only a few distinct values
        // occur (piecewise-constant kernels). Panels split at breakpoints, so
        // per-value weight sums are exact interval measures.
        let mut by_value: HashMap<u64, f64> = HashMap::new();
        let mut few = true;
        for (w, k) in weights.iter().zip(&kvals) {
            if *k == 0.0 {
                continue;
            }
            *by_value.entry(k.to_bits()).or_insert(0.0) += *w;
            if by_value.len() > 8 {
                few = false;
                break;
            }
        }
        let kappa_groups = if few && !by_value.is_empty() {
            let mut groups: Vec<(f64, f64)> = by_value
                .into_iter()
                .map(|(bits, w)| (f64::from_bits(bits), w))
                .collect();
            groups.sort_by(|a, b| a.0.total_cmp(&b.0));
            Some(groups)
        } else {
            None
        };

        let s_nodes = match self.variant {
            Variant::Nw => Vec::new(),
            Variant::Semirec { a } => {
                let ad = a * d as f64;
                let axis = Axis::from_panels(
                    &self.settings.s_panel_edges,
                    self.settings.s_nodes_per_panel * refine,
                );
                axis.points
                    .iter()
                    .zip(&axis.weights)
                    .map(|(&s, &w)| {
                        let s_ad = s.powf(ad);
                        SNode {
                            w,
                            s_ad,
                            s_neg_ad: 1.0 / s_ad,
                        }
                    })
                    .collect()
            }
        };

        self.z_points = points;
        self.z_weights = weights;
        self.z_kvals = kvals;
        self.l2k = l2k;
        self.kappa_groups = kappa_groups;
        self.s_nodes = s_nodes;
        Ok(())
    }

    fn z_grid(&self, nodes_per_panel: usize) -> Result<TensorGrid> {
        let edges = match self.settings.truncation_radius {
            None => self.kernel.axis_panel_edges(),
            Some(r) => {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::config("truncation radius must be positive"));
                }
                let mut edges = vec![-r];
                edges.extend(
                    self.kernel
                        .axis_panel_edges()
                        .into_iter()
                        .filter(|&e| e > -r && e < r),
                );
                edges.push(r);
                edges
            }
        };
        let axis = Axis::from_panels(&edges, nodes_per_panel);
        Ok(TensorGrid::new(vec![axis; self.model.d()]))
    }

    /// Compares a few cumulant values against a grid with doubled node
    /// counts; quadrature that has not converged is rejected up front so the
    /// fast evaluation paths can stay check-free.
    fn self_check(&mut self) -> Result<()> {
        let q = self.model.q();
        let probes: Vec<(Vec<f64>, f64)> = vec![
            (vec![0.3; q], 0.4),
            (vec![-0.25; q], 0.2),
            (vec![0.15; q], -0.7),
        ];
        let coarse: Vec<f64> = probes.iter().map(|(u, v)| self.eval_psi(u, *v)).collect();
        let mut fine = self.clone();
        fine.build_grids(2)?;
        for ((u, v), cv) in probes.iter().zip(&coarse) {
            let fv = fine.eval_psi(u, *v);
            let err = (fv - cv).abs();
            let budget = (100.0 * self.settings.tol) * (1.0 + fv.abs());
            if !err.is_finite() || err > budget {
                return Err(Error::numeric(format!(
                    "cumulant quadrature did not converge at (u, v) = ({u:?}, {v}): \
                     refinement changed the value by {err:.3e} (budget {budget:.3e})"
                )));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> &JointModel {
        &self.model
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn settings(&self) -> &QuadSettings {
        &self.settings
    }

    /// `g(x)` at the context point.
    pub fn g_at_x(&self) -> f64 {
        self.g_x
    }

    /// `m(x) = r(x) g(x)` at the context point.
    pub fn m_at_x(&self) -> &[f64] {
        &self.m_x
    }

    /// `r(x)` at the context point.
    pub fn r_at_x(&self) -> &[f64] {
        &self.r_x
    }

    /// Cached `∫ K²`.
    pub fn kernel_l2(&self) -> f64 {
        self.l2k
    }

    /// `a·d` for the semi-recursive variant, 0 for the batch variant.
    pub(crate) fn ad(&self) -> f64 {
        match self.variant {
            Variant::Nw => 0.0,
            Variant::Semirec { a } => a * self.model.d() as f64,
        }
    }

    /// Limiting cumulant of the configured variant.
    pub fn eval_psi(&self, u: &[f64], v: f64) -> f64 {
        debug_assert_eq!(u.len(), self.model.q());
        match self.variant {
            Variant::Nw => self.psi_scaled(u, v, 1.0),
            Variant::Semirec { .. } => {
                let mut acc = 0.0;
                for node in &self.s_nodes {
                    acc += node.w * node.s_neg_ad * self.psi_scaled(u, v, node.s_ad);
                }
                acc
            }
        }
    }

    /// `∫ [e^{τ v K(z)} M_x(τ u K(z)) − g(x)] dz` for a scale `τ`.
    fn psi_scaled(&self, u: &[f64], v: f64, tau: f64) -> f64 {
        let q = u.len();
        let mut theta = [0.0f64; MAX_Q];
        // The integrand couples two exponentials, e^{τKv} and M(τKu); adding
        // exponents before exponentiating keeps it finite wherever the
        // product is representable, even when each factor alone overflows,
        // and the expm1 form keeps the term exactly zero at the origin.
        if let Some(groups) = &self.kappa_groups {
            let mut acc = 0.0;
            for &(kappa, weight) in groups {
                let tk = tau * kappa;
                for j in 0..q {
                    theta[j] = tk * u[j];
                }
                let ex = tk * v + self.model.log_mgf(&self.x, &theta[..q]);
                acc += weight * self.g_x * ex.exp_m1();
            }
            acc
        } else {
            let mut acc = 0.0;
            for (w, &k) in self.z_weights.iter().zip(&self.z_kvals) {
                if k == 0.0 {
                    continue;
                }
                let tk = tau * k;
                for j in 0..q {
                    theta[j] = tk * u[j];
                }
                let ex = tk * v + self.model.log_mgf(&self.x, &theta[..q]);
                acc += w * self.g_x * ex.exp_m1();
            }
            acc
        }
    }

    /// Gradient `(∂Ψ/∂u, ∂Ψ/∂v)`, written into `out[..q+1]`.
    ///
    /// Differentiating under the integral gives, for the batch variant,
    /// `∂_u Ψ = ∫ K e^{vK} ∇M(uK)` and `∂_v Ψ = ∫ K e^{vK} M(uK)`; for the
    /// semi-recursive variant the `s` powers cancel, leaving the plain
    /// average over `s` of the same expressions at scaled arguments.
    pub(crate) fn psi_grad_into(&self, u: &[f64], v: f64, out: &mut [f64]) {
        let q = u.len();
        debug_assert_eq!(out.len(), q + 1);
        out.fill(0.0);
        match self.variant {
            Variant::Nw => self.grad_scaled(u, v, 1.0, 1.0, out),
            Variant::Semirec { .. } => {
                for node in &self.s_nodes {
                    self.grad_scaled(u, v, node.s_ad, node.w, out);
                }
            }
        }
    }

    fn grad_scaled(&self, u: &[f64], v: f64, tau: f64, weight: f64, out: &mut [f64]) {
        let q = u.len();
        let mut theta = [0.0f64; MAX_Q];
        let mut lgrad = [0.0f64; MAX_Q];
        let mut add = |kappa: f64, w: f64, this: &CumulantContext, out: &mut [f64]| {
            let tk = tau * kappa;
            for j in 0..q {
                theta[j] = tk * u[j];
            }
            // e^{τκv} M = e^{τκv + ln M} and ∇M = M ∇ln M; combining the
            // exponents avoids intermediate overflow at large arguments.
            let lm = this
                .model
                .log_laplace_and_grad(&this.x, &theta[..q], &mut lgrad[..q]);
            let c = weight * w * kappa * (tk * v + lm).exp();
            for j in 0..q {
                out[j] += c * lgrad[j];
            }
            out[q] += c;
        };
        if let Some(groups) = &self.kappa_groups {
            for &(kappa, w) in groups {
                add(kappa, w, self, out);
            }
        } else {
            for (w, &k) in self.z_weights.iter().zip(&self.z_kvals) {
                if k == 0.0 {
                    continue;
                }
                add(k, *w, self, out);
            }
        }
    }

    /// Hessian `∇²Ψ` written row-major into `out[..(q+1)²]`.
    ///
    /// Every second derivative of a node term `g·e^{τκv + ln E[e^{τκu·Y}]}`
    /// carries the factor `(τκ)²`, so each node contributes
    /// `w·κ·τκ·e^{τκv} M(τκu) · [[ℓℓᵀ + ∇²ln M, ℓ], [ℓᵀ, 1]]`
    /// with `ℓ = ∇ln M` at `τκu`, assembled in log space like the gradient.
    /// Exact for the quadrature objective, and — unlike finite differences
    /// of the gradient — free of step-size trouble when `‖(u,v)‖` is large
    /// and the exponent varies steeply.
    pub(crate) fn psi_hess_into(&self, u: &[f64], v: f64, out: &mut [f64]) {
        let q = u.len();
        let p = q + 1;
        debug_assert_eq!(out.len(), p * p);
        out.fill(0.0);
        match self.variant {
            Variant::Nw => self.hess_scaled(u, v, 1.0, 1.0, out),
            Variant::Semirec { .. } => {
                for node in &self.s_nodes {
                    self.hess_scaled(u, v, node.s_ad, node.w, out);
                }
            }
        }
    }

    /// One `τ` slice of the Hessian; `weight` already carries the factor
    /// cancelling `s^{−ad}` against one power of `τ`, mirroring
    /// [`Self::grad_scaled`].
    fn hess_scaled(&self, u: &[f64], v: f64, tau: f64, weight: f64, out: &mut [f64]) {
        let q = u.len();
        let p = q + 1;
        let mut theta = [0.0f64; MAX_Q];
        let mut lgrad = [0.0f64; MAX_Q];
        let mut lhess = [0.0f64; MAX_Q * MAX_Q];
        let mut add = |kappa: f64, w: f64, this: &CumulantContext, out: &mut [f64]| {
            let tk = tau * kappa;
            for j in 0..q {
                theta[j] = tk * u[j];
            }
            let lm = this
                .model
                .log_laplace_and_grad(&this.x, &theta[..q], &mut lgrad[..q]);
            this.model
                .hessian_log_mgf(&theta[..q], &mut lhess[..q * q]);
            let scale = weight * w * kappa * tk * (tk * v + lm).exp();
            for j in 0..q {
                for i in 0..q {
                    out[j * p + i] += scale * (lgrad[j] * lgrad[i] + lhess[j * q + i]);
                }
                out[j * p + q] += scale * lgrad[j];
                out[q * p + j] += scale * lgrad[j];
            }
            out[q * p + q] += scale;
        };
        if let Some(groups) = &self.kappa_groups {
            for &(kappa, w) in groups {
                add(kappa, w, self, out);
            }
        } else {
            for (w, &k) in self.z_weights.iter().zip(&self.z_kvals) {
                if k == 0.0 {
                    continue;
                }
                add(k, *w, self, out);
            }
        }
    }

    pub(crate) fn z_nodes(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.z_points, &self.z_weights, &self.z_kvals)
    }
}

/// Gradient of the cumulant as `(∂Ψ/∂u ∈ R^q, ∂Ψ/∂v)`.
pub fn eval_psi_grad(ctx: &CumulantContext, u: &[f64], v: f64) -> (Vec<f64>, f64) {
    let q = ctx.model().q();
    let mut buf = vec![0.0; q + 1];
    ctx.psi_grad_into(u, v, &mut buf);
    let dv = buf[q];
    buf.truncate(q);
    (buf, dv)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::kernels::{make_builtin, BuiltinKernel};
    use crate::models::{build_model, ModelSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn psi_vanishes_at_the_origin() {
        for kernel in [
            BuiltinKernel::Uniform,
            BuiltinKernel::Epanechnikov,
            BuiltinKernel::Gaussian,
            BuiltinKernel::FourthOrderSigned,
        ] {
            for variant in [Variant::Nw, Variant::Semirec { a: 0.2 }] {
                let ctx = ctx_with(kernel, variant);
                assert_abs_diff_eq!(ctx.eval_psi(&[0.0], 0.0), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn psi_at_deeply_negative_v_approaches_minus_g_lambda() {
        let ctx = ctx_with(BuiltinKernel::Uniform, Variant::Nw);
        let g = ctx.g_at_x();
        // λ(S₊) = 1 for the unit box kernel.
        assert!((ctx.eval_psi(&[0.0], -30.0) + g).abs() < 1e-3);

        let ctx = ctx_with(BuiltinKernel::Uniform, Variant::Semirec { a: 0.2 });
        let limit = g / (1.0 - 0.2);
        assert!((ctx.eval_psi(&[0.0], -30.0) + limit).abs() < 1e-3);
    }

    #[test]
    fn signed_indicator_psi_matches_closed_form() {
        // For a two-valued ±1 kernel the z integral collapses to
        //   Ψ(u,v) = e^v λ₊ M(u) + e^{-v} λ₋ M(-u) − (λ₊+λ₋) g.
        let ctx = ctx_with(BuiltinKernel::FourthOrderSigned, Variant::Nw);
        let (lp, lm) = (ctx.kernel().lambda_splus(), ctx.kernel().lambda_sminus());
        let g = ctx.g_at_x();
        for &(u, v) in &[(0.0f64, 0.0f64), (0.7, -0.3), (-1.2, 0.9), (2.0, 1.5)] {
            let closed = v.exp() * lp * ctx.model().laplace(&[0.5], &[u])
                + (-v).exp() * lm * ctx.model().laplace(&[0.5], &[-u])
                - (lp + lm) * g;
            assert_abs_diff_eq!(ctx.eval_psi(&[u], v), closed, epsilon = 1e-10);
        }
    }

    #[test]
    fn gradient_at_origin_is_m_and_g() {
        for variant in [Variant::Nw, Variant::Semirec { a: 0.3 }] {
            for kernel in [BuiltinKernel::Epanechnikov, BuiltinKernel::FourthOrderSigned] {
                let ctx = ctx_with(kernel, variant);
                let (gu, gv) = eval_psi_grad(&ctx, &[0.0], 0.0);
                assert_abs_diff_eq!(gu[0], ctx.m_at_x()[0], epsilon = 1e-10);
                assert_abs_diff_eq!(gv, ctx.g_at_x(), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for variant in [Variant::Nw, Variant::Semirec { a: 0.2 }] {
            for kernel in [BuiltinKernel::Epanechnikov, BuiltinKernel::Gaussian] {
                let ctx = ctx_with(kernel, variant);
                for &(u, v) in &[(0.4, -0.2), (-0.8, 0.5), (1.1, 0.9)] {
                    let (gu, gv) = eval_psi_grad(&ctx, &[u], v);
                    let e = 1e-6;
                    let fu =
                        (ctx.eval_psi(&[u + e], v) - ctx.eval_psi(&[u - e], v)) / (2.0 * e);
                    let fv =
                        (ctx.eval_psi(&[u], v + e) - ctx.eval_psi(&[u], v - e)) / (2.0 * e);
                    assert_abs_diff_eq!(gu[0], fu, epsilon = 1e-6 * (1.0 + fu.abs()));
                    assert_abs_diff_eq!(gv, fv, epsilon = 1e-6 * (1.0 + fv.abs()));
                }
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_the_gradient() {
        for variant in [Variant::Nw, Variant::Semirec { a: 0.2 }] {
            for kernel in [BuiltinKernel::Epanechnikov, BuiltinKernel::FourthOrderSigned] {
                let ctx = ctx_with(kernel, variant);
                for &(u, v) in &[(0.4, -0.2), (-0.8, 0.5)] {
                    let mut hess = [0.0f64; 4];
                    ctx.psi_hess_into(&[u], v, &mut hess);
                    let e = 1e-6;
                    let fd = |up: f64, vp: f64, um: f64, vm: f64| {
                        let (gu_p, gv_p) = eval_psi_grad(&ctx, &[up], vp);
                        let (gu_m, gv_m) = eval_psi_grad(&ctx, &[um], vm);
                        [
                            (gu_p[0] - gu_m[0]) / (2.0 * e),
                            (gv_p - gv_m) / (2.0 * e),
                        ]
                    };
                    let col_u = fd(u + e, v, u - e, v);
                    let col_v = fd(u, v + e, u, v - e);
                    assert_abs_diff_eq!(hess[0], col_u[0], epsilon = 1e-5 * (1.0 + col_u[0].abs()));
                    assert_abs_diff_eq!(hess[2], col_u[1], epsilon = 1e-5 * (1.0 + col_u[1].abs()));
                    assert_abs_diff_eq!(hess[1], col_v[0], epsilon = 1e-5 * (1.0 + col_v[0].abs()));
                    assert_abs_diff_eq!(hess[3], col_v[1], epsilon = 1e-5 * (1.0 + col_v[1].abs()));
                }
            }
        }
    }

    #[test]
    fn grouped_and_dense_paths_agree() {
        let ctx = ctx_with(BuiltinKernel::Uniform, Variant::Nw);
        assert!(ctx.kappa_groups.is_some());
        let mut dense = ctx.clone();
        dense.kappa_groups = None;
        for &(u, v) in &[(0.6, -0.4), (-1.0, 0.8)] {
            assert_abs_diff_eq!(
                ctx.eval_psi(&[u], v),
                dense.eval_psi(&[u], v),
                epsilon = 1e-12
            );
            let (a_u, a_v) = eval_psi_grad(&ctx, &[u], v);
            let (b_u, b_v) = eval_psi_grad(&dense, &[u], v);
            assert_abs_diff_eq!(a_u[0], b_u[0], epsilon = 1e-12);
            assert_abs_diff_eq!(a_v, b_v, epsilon = 1e-12);
        }
    }

    #[test]
    fn convexity_along_a_segment() {
        let ctx = ctx_with(BuiltinKernel::Epanechnikov, Variant::Nw);
        let w1 = ([0.9], -0.5);
        let w2 = ([-0.6], 0.8);
        for &gamma in &[0.25, 0.5, 0.75] {
            let mid_u = gamma * w1.0[0] + (1.0 - gamma) * w2.0[0];
            let mid_v = gamma * w1.1 + (1.0 - gamma) * w2.1;
            let lhs = ctx.eval_psi(&[mid_u], mid_v);
            let rhs =
                gamma * ctx.eval_psi(&w1.0, w1.1) + (1.0 - gamma) * ctx.eval_psi(&w2.0, w2.1);
            assert!(lhs <= rhs + 1e-12, "convexity violated: {lhs} > {rhs}");
        }
    }

    #[test]
    fn context_construction_validates_input() {
        let model = sin_gaussian_model(1);
        let k2 = make_builtin(BuiltinKernel::Uniform, 2).unwrap();
        assert!(CumulantContext::new(
            model.clone(),
            k2,
            vec![0.0],
            Variant::Nw,
            QuadSettings::default()
        )
        .is_err());
        let k1 = make_builtin(BuiltinKernel::Uniform, 1).unwrap();
        assert!(CumulantContext::new(
            model.clone(),
            k1.clone(),
            vec![0.0, 0.0],
            Variant::Nw,
            QuadSettings::default()
        )
        .is_err());
        // Semi-recursive exponent out of range: a·d must stay below 1.
        assert!(CumulantContext::new(
            model.clone(),
            k1.clone(),
            vec![0.0],
            Variant::Semirec { a: 1.0 },
            QuadSettings::default()
        )
        .is_err());
        assert!(CumulantContext::new(
            model,
            k1,
            vec![0.0],
            Variant::Semirec { a: 0.5 },
            QuadSettings::default()
        )
        .is_ok());
    }

    #[test]
    fn two_dimensional_context_works() {
        let model = build_model(&ModelSpec::SymmetricY {
            d: 2,
            q: 1,
            cov: vec![vec![0.5]],
        })
        .unwrap();
        let kernel = make_builtin(BuiltinKernel::Epanechnikov, 2).unwrap();
        let settings = QuadSettings {
            z_nodes_per_panel: 32,
            ..QuadSettings::default()
        };
        let ctx =
            CumulantContext::new(model, kernel, vec![0.2, -0.1], Variant::Nw, settings).unwrap();
        assert_abs_diff_eq!(ctx.eval_psi(&[0.0], 0.0), 0.0, epsilon = 1e-12);
        // Symmetric response: Ψ is even in u.
        let a = ctx.eval_psi(&[0.7], 0.3);
        let b = ctx.eval_psi(&[-0.7], 0.3);
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }

    #[test]
    fn variant_spec_round_trips_through_json() {
        let v: Variant = serde_json::from_str(r#""nw""#).unwrap();
        assert_eq!(v, Variant::Nw);
        let v: Variant = serde_json::from_str(r#"{"semirec": {"a": 0.25}}"#).unwrap();
        assert_eq!(v, Variant::Semirec { a: 0.25 });
        let text = serde_json::to_string(&v).unwrap();
        let back: Variant = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }
}
