//! Moderate-deviation rate functions.
//!
//! On the moderate scale the estimator's fluctuations are Gaussian, so the
//! rate for `v_n (r_n(x) − E-surrogate)` is the quadratic form
//!
//! ```text
//! G_x(v) = g(x) · vᵀ Σ_x^{-1} v / (2 ∫K²)            (batch),
//! G̃_x(v) = (1 + ad) · G_x(v)                          (semi-recursive),
//! ```
//!
//! where `Σ_x` is the conditional covariance of `Y` given `X = x`. Its convex
//! dual, the limiting scaled cumulant
//!
//! ```text
//! Φ_x(u) = uᵀ Σ_x u · ∫K² / (2 g(x))                  (batch),
//! Φ̃_x(u) = Φ_x(u) / (1 + ad)                          (semi-recursive),
//! ```
//!
//! satisfies `G_x(v) = sup_u { ⟨u, v⟩ − Φ_x(u) }` exactly, which the tests
//! exercise.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::CumulantContext;
use crate::{Error, Result};

/// Quadratic moderate-deviation rate `G_x(v)` for the configured variant.
pub fn mdp_rate(ctx: &CumulantContext, v: &[f64]) -> Result<f64> {
    let quad = inverse_quadratic_form(ctx, v)?;
    let base = ctx.g_at_x() * quad / (2.0 * ctx.kernel_l2());
    Ok(base * (1.0 + ctx.ad()))
}

/// Limiting cumulant `Φ_x(u)` on the moderate scale for the configured
/// variant.
pub fn phi_limit(ctx: &CumulantContext, u: &[f64]) -> Result<f64> {
    let q = ctx.model().q();
    if u.len() != q {
        return Err(Error::input(format!(
            "direction must have {q} components, got {}",
            u.len()
        )));
    }
    let sigma = ctx.model().sigma();
    let mut quad = 0.0;
    for i in 0..q {
        for j in 0..q {
            quad += u[i] * sigma[i * q + j] * u[j];
        }
    }
    let base = quad * ctx.kernel_l2() / (2.0 * ctx.g_at_x());
    Ok(base / (1.0 + ctx.ad()))
}

/// `vᵀ Σ_x^{-1} v` via a Cholesky solve.
fn inverse_quadratic_form(ctx: &CumulantContext, v: &[f64]) -> Result<f64> {
    let q = ctx.model().q();
    if v.len() != q {
        return Err(Error::input(format!(
            "direction must have {q} components, got {}",
            v.len()
        )));
    }
    solve_quadratic(&ctx.model().sigma(), v)
}

fn solve_quadratic(sigma: &[f64], v: &[f64]) -> Result<f64> {
    let q = v.len();
    let mat = DMatrix::from_row_slice(q, q, sigma);
    let chol = Cholesky::new(mat).ok_or_else(|| {
        Error::input("conditional covariance is singular or not positive definite")
    })?;
    let rhs = DVector::from_column_slice(v);
    let sol = chol.solve(&rhs);
    Ok(rhs.dot(&sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_builtin, BuiltinKernel};
    use crate::models::{build_model, ModelSpec, RegressionSpec};
    use crate::ratefn::{CumulantContext, QuadSettings, Variant};
    use approx::assert_abs_diff_eq;

    fn ctx_at_zero(variant: Variant) -> CumulantContext {
        let model = build_model(&ModelSpec::GaussianNoise {
            d: 1,
            q: 1,
            regression: vec![RegressionSpec::Sin {
                amplitude: 1.0,
                frequency: 1.0,
            }],
            cov: vec![vec![1.0]],
        })
        .unwrap();
        let kernel = make_builtin(BuiltinKernel::Uniform, 1).unwrap();
        CumulantContext::new(model, kernel, vec![0.0], variant, QuadSettings::default()).unwrap()
    }

    #[test]
    fn rate_vanishes_only_at_zero() {
        let ctx = ctx_at_zero(Variant::Nw);
        assert_eq!(mdp_rate(&ctx, &[0.0]).unwrap(), 0.0);
        assert!(mdp_rate(&ctx, &[0.3]).unwrap() > 0.0);
    }

    #[test]
    fn unit_direction_value_for_the_box_kernel_at_the_mode() {
        // g(0)/(2·∫K²) with ∫K² = 1 and unit conditional variance:
        // φ(0)/2 = 1/(2√(2π)).
        let ctx = ctx_at_zero(Variant::Nw);
        let value = mdp_rate(&ctx, &[1.0]).unwrap();
        assert_abs_diff_eq!(value, 0.19947114020071635, epsilon = 1e-15);
    }

    #[test]
    fn semirec_rate_is_a_fixed_multiple_of_the_batch_rate() {
        let nw = ctx_at_zero(Variant::Nw);
        let sr = ctx_at_zero(Variant::Semirec { a: 0.2 });
        for &v in &[0.5, 1.0, 2.5] {
            let base = mdp_rate(&nw, &[v]).unwrap();
            let tilted = mdp_rate(&sr, &[v]).unwrap();
            assert_eq!(tilted, base * 1.2);
            let phi_base = phi_limit(&nw, &[v]).unwrap();
            let phi_tilted = phi_limit(&sr, &[v]).unwrap();
            assert_eq!(phi_tilted, phi_base / 1.2);
        }
    }

    #[test]
    fn quadratic_duality_holds_exactly() {
        // sup_u { u v − c u² } = v² / (4c) with c = Σ ∫K² / (2 g), which is
        // exactly G(v); checked for a correlated two-dimensional response.
        let model = build_model(&ModelSpec::GaussianNoise {
            d: 1,
            q: 2,
            regression: vec![
                RegressionSpec::Linear {
                    slope: 0.5,
                    intercept: 0.0,
                },
                RegressionSpec::Constant { value: 1.0 },
            ],
            cov: vec![vec![1.0, 0.3], vec![0.3, 0.64]],
        })
        .unwrap();
        let kernel = make_builtin(BuiltinKernel::Epanechnikov, 1).unwrap();
        for variant in [Variant::Nw, Variant::Semirec { a: 0.4 }] {
            let ctx = CumulantContext::new(
                model.clone(),
                kernel.clone(),
                vec![0.2],
                variant,
                QuadSettings::default(),
            )
            .unwrap();
            for v in [[1.0, 0.0], [0.4, -0.7], [-1.3, 2.0]] {
                // The supremum of ⟨u,v⟩ − Φ(u) is attained at
                // u* = g(x)(1+ad) Σ^{-1} v / ∫K²; evaluate it there.
                let g = ctx.g_at_x();
                let l2 = ctx.kernel_l2();
                let scale = g * (1.0 + ctx.ad()) / l2;
                let quad = solve_quadratic(&ctx.model().sigma(), &v).unwrap();
                let ustar: Vec<f64> = {
                    let q = 2;
                    let mat = nalgebra::DMatrix::from_row_slice(q, q, &ctx.model().sigma());
                    let chol = nalgebra::Cholesky::new(mat).unwrap();
                    let rhs = nalgebra::DVector::from_column_slice(&v);
                    (chol.solve(&rhs) * scale).iter().copied().collect()
                };
                let dual_value = ustar.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
                    - phi_limit(&ctx, &ustar).unwrap();
                let direct = mdp_rate(&ctx, &v).unwrap();
                assert_abs_diff_eq!(direct, dual_value, epsilon = 1e-10);
                // And the closed form: G(v) = (1+ad) g vᵀΣ⁻¹v / (2∫K²).
                let closed = (1.0 + ctx.ad()) * g * quad / (2.0 * l2);
                assert_abs_diff_eq!(direct, closed, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let sigma = [1.0, 1.0, 1.0, 1.0];
        assert!(solve_quadratic(&sigma, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let ctx = ctx_at_zero(Variant::Nw);
        assert!(mdp_rate(&ctx, &[1.0, 2.0]).is_err());
        assert!(phi_limit(&ctx, &[]).is_err());
    }
}
