//! Randomized invariants of the cumulant/rate machinery and the estimators.
//!
//! Each property states a structural fact that must hold on every admissible
//! input — convexity and duality of the limit cumulant, exactness of the
//! streaming and recursive estimator updates, invariances of the
//! Nadaraya–Watson weights, and bit-level reproducibility of the samplers —
//! and lets proptest hunt for counterexamples over bounded random inputs.

use std::sync::OnceLock;

use devrate::estimators::{eval_nw, eval_recursive, NwAccumulator};
use devrate::kernels::{make_builtin, BuiltinKernel};
use devrate::models::{build_model, sample, Dataset, JointModel, ModelSpec, RegressionSpec};
use devrate::ratefn::{
    conjugate, eval_psi_grad, CumulantContext, QuadSettings, RateValue, Variant,
};
use devrate::schedules::{BandwidthSchedule, SlowlyVarying};
use proptest::prelude::*;

fn nw_ctx() -> &'static CumulantContext {
    static CTX: OnceLock<CumulantContext> = OnceLock::new();
    CTX.get_or_init(|| {
        CumulantContext::new(
            sin_model(1),
            make_builtin(BuiltinKernel::Epanechnikov, 1).unwrap(),
            vec![0.5],
            Variant::Nw,
            QuadSettings::default(),
        )
        .unwrap()
    })
}

fn semirec_ctx() -> &'static CumulantContext {
    static CTX: OnceLock<CumulantContext> = OnceLock::new();
    CTX.get_or_init(|| {
        CumulantContext::new(
            sin_model(1),
            make_builtin(BuiltinKernel::Epanechnikov, 1).unwrap(),
            vec![0.5],
            Variant::Semirec { a: 0.3 },
            QuadSettings::default(),
        )
        .unwrap()
    })
}

fn sin_model(d: usize) -> JointModel {
    build_model(&ModelSpec::GaussianNoise {
        d,
        q: 1,
        regression: vec![RegressionSpec::Sin {
            amplitude: 1.0,
            frequency: 1.0,
        }],
        cov: vec![vec![1.0]],
    })
    .unwrap()
}

/// Builds a random regression model and a dataset drawn from it.
fn random_problem(d: usize, q: usize, n: usize, freq: f64, seed: u64) -> (JointModel, Dataset) {
    let model = build_model(&ModelSpec::GaussianNoise {
        d,
        q,
        regression: (0..q)
            .map(|j| {
                if j % 2 == 0 {
                    RegressionSpec::Sin {
                        amplitude: 1.0,
                        frequency: freq,
                    }
                } else {
                    RegressionSpec::Linear {
                        slope: 0.6,
                        intercept: -0.2,
                    }
                }
            })
            .collect(),
        cov: (0..q)
            .map(|i| (0..q).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
    })
    .unwrap();
    let data = sample(&model, n, seed);
    (model, data)
}

/// Relative difference with a unit floor, so near-zero values compare
/// absolutely.
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}

proptest! {
    /// Ψ is convex: every chord lies on or above the graph, for both the
    /// batch and semi-recursive limit cumulants.
    #[test]
    fn psi_is_convex_along_chords(
        u1 in -1.5..1.5f64,
        v1 in -1.5..1.5f64,
        u2 in -1.5..1.5f64,
        v2 in -1.5..1.5f64,
        lam in 0.0..1.0f64,
    ) {
        for ctx in [nw_ctx(), semirec_ctx()] {
            let mid = ctx.eval_psi(&[lam * u1 + (1.0 - lam) * u2], lam * v1 + (1.0 - lam) * v2);
            let chord = lam * ctx.eval_psi(&[u1], v1) + (1.0 - lam) * ctx.eval_psi(&[u2], v2);
            prop_assert!(mid <= chord + 1e-9, "convexity violated: {mid} > {chord}");
        }
    }

    /// The analytic gradient of Ψ agrees with central finite differences.
    #[test]
    fn psi_gradient_matches_central_differences(
        u in -1.8..1.8f64,
        v in -1.8..1.8f64,
    ) {
        let step = 1e-5;
        for ctx in [nw_ctx(), semirec_ctx()] {
            let (gu, gv) = eval_psi_grad(ctx, &[u], v);
            let fd_u = (ctx.eval_psi(&[u + step], v) - ctx.eval_psi(&[u - step], v)) / (2.0 * step);
            let fd_v = (ctx.eval_psi(&[u], v + step) - ctx.eval_psi(&[u], v - step)) / (2.0 * step);
            let scale = 1.0f64.max(gu[0].abs()).max(gv.abs());
            prop_assert!((gu[0] - fd_u).abs() / scale <= 1e-6);
            prop_assert!((gv - fd_v).abs() / scale <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Young–Fenchel: `I(t) + Ψ(w) ≥ ⟨t, w⟩` for targets on the gradient
    /// image, where the conjugate is finite; and the conjugate value at a
    /// gradient image is never negative.
    #[test]
    fn young_fenchel_inequality_holds(
        u in -1.5..1.5f64,
        v in -1.5..1.5f64,
        u2 in -1.5..1.5f64,
        v2 in -1.5..1.5f64,
    ) {
        let ctx = nw_ctx();
        let (gu, gv) = eval_psi_grad(ctx, &[u], v);
        let res = conjugate(ctx, &gu, gv).unwrap();
        let rate = match res.settled_value() {
            Some(RateValue::Finite(w)) => w,
            other => return Err(TestCaseError::fail(format!(
                "conjugate did not settle finitely at a gradient image: {other:?}"
            ))),
        };
        prop_assert!(rate >= -1e-10, "negative rate {rate}");
        let pairing = gu[0] * u2 + gv * v2;
        prop_assert!(
            rate + ctx.eval_psi(&[u2], v2) >= pairing - 1e-8,
            "duality gap: I = {rate}, pairing = {pairing}"
        );
    }

    /// The recursive estimator equals its defining per-index-bandwidth sums
    /// on random configurations.
    #[test]
    fn recursive_estimator_matches_its_defining_sums(
        d in 1..=2usize,
        q in 1..=2usize,
        n in 1..=80usize,
        freq in 0.5..2.0f64,
        seed in any::<u64>(),
        c in 0.5..1.5f64,
        a_frac in 0.1..0.4f64,
        x1 in -1.0..1.0f64,
        x2 in -1.0..1.0f64,
        kernel_ix in 0..3usize,
    ) {
        let (_, data) = random_problem(d, q, n, freq, seed);
        let kernel = make_builtin(
            [BuiltinKernel::Uniform, BuiltinKernel::Epanechnikov, BuiltinKernel::Gaussian][kernel_ix],
            d,
        )
        .unwrap();
        let x = [x1, x2][..d].to_vec();
        let sched = BandwidthSchedule::new(c, a_frac / d as f64, SlowlyVarying::None, d).unwrap();
        let rec = eval_recursive(&kernel, &x, &sched, &data).unwrap();

        let mut s_g = 0.0;
        let mut s_m = vec![0.0; q];
        for i in 0..n {
            let h_i = sched.hn((i + 1) as f64);
            let z: Vec<f64> = x
                .iter()
                .zip(data.x_row(i))
                .map(|(xj, xij)| (xj - xij) / h_i)
                .collect();
            let w = kernel.eval(&z) / h_i.powi(d as i32);
            s_g += w;
            for (s, &y) in s_m.iter_mut().zip(data.y_row(i)) {
                *s += y * w;
            }
        }
        prop_assert!(rel(rec.g_n, s_g / n as f64) <= 1e-10);
        for (m, s) in rec.m_n.iter().zip(&s_m) {
            prop_assert!(rel(*m, *s / n as f64) <= 1e-10);
        }
    }

    /// Pushing observations one at a time through the streaming accumulator
    /// reproduces the batch evaluation.
    #[test]
    fn streaming_accumulator_matches_batch_evaluation(
        d in 1..=2usize,
        q in 1..=2usize,
        n in 1..=80usize,
        freq in 0.5..2.0f64,
        seed in any::<u64>(),
        h in 0.2..1.5f64,
        x1 in -1.0..1.0f64,
        x2 in -1.0..1.0f64,
        kernel_ix in 0..3usize,
    ) {
        let (_, data) = random_problem(d, q, n, freq, seed);
        let kernel = make_builtin(
            [BuiltinKernel::Uniform, BuiltinKernel::Epanechnikov, BuiltinKernel::Gaussian][kernel_ix],
            d,
        )
        .unwrap();
        let x = [x1, x2][..d].to_vec();
        let batch = eval_nw(&kernel, &x, h, &data).unwrap();
        let mut acc = NwAccumulator::new(x, h, q).unwrap();
        for i in 0..n {
            acc.push(&kernel, data.x_row(i), data.y_row(i));
        }
        let streamed = acc.finalize();
        prop_assert_eq!(batch.g_n, streamed.g_n);
        prop_assert_eq!(batch.m_n, streamed.m_n);
        prop_assert_eq!(batch.g_zero, streamed.g_zero);
    }

    /// Scaling every response by α scales `m_n` and `r_n` by α and leaves
    /// `g_n` untouched.
    #[test]
    fn estimator_is_linear_in_the_response(
        q in 1..=2usize,
        n in 1..=60usize,
        freq in 0.5..2.0f64,
        seed in any::<u64>(),
        h in 0.2..1.5f64,
        x1 in -1.0..1.0f64,
        alpha in -3.0..3.0f64,
    ) {
        let (_, data) = random_problem(1, q, n, freq, seed);
        let mut scaled = data.clone();
        for y in &mut scaled.y {
            *y *= alpha;
        }
        let kernel = make_builtin(BuiltinKernel::Epanechnikov, 1).unwrap();
        let base = eval_nw(&kernel, &[x1], h, &data).unwrap();
        let other = eval_nw(&kernel, &[x1], h, &scaled).unwrap();
        prop_assert_eq!(base.g_n, other.g_n);
        for j in 0..q {
            prop_assert!(rel(alpha * base.m_n[j], other.m_n[j]) <= 1e-12);
            prop_assert!(rel(alpha * base.r_n[j], other.r_n[j]) <= 1e-12);
        }
    }

    /// Translating the design points and the evaluation point together leaves
    /// the estimate unchanged (up to roundoff in the shifted differences).
    #[test]
    fn estimator_is_translation_invariant(
        n in 1..=60usize,
        freq in 0.5..2.0f64,
        seed in any::<u64>(),
        h in 0.2..1.5f64,
        x1 in -1.0..1.0f64,
        shift in -2.0..2.0f64,
        kernel_ix in 0..2usize,
    ) {
        let (_, data) = random_problem(1, 1, n, freq, seed);
        let mut moved = data.clone();
        for xv in &mut moved.x {
            *xv += shift;
        }
        // Continuous kernels only: the shifted differences are off by one ulp,
        // which a jump kernel could amplify into a window-membership flip.
        let kernel = make_builtin(
            [BuiltinKernel::Epanechnikov, BuiltinKernel::Gaussian][kernel_ix],
            1,
        )
        .unwrap();
        let base = eval_nw(&kernel, &[x1], h, &data).unwrap();
        let other = eval_nw(&kernel, &[x1 + shift], h, &moved).unwrap();
        prop_assert!(rel(base.g_n, other.g_n) <= 1e-9);
        prop_assert!(rel(base.m_n[0], other.m_n[0]) <= 1e-9);
    }

    /// The density estimate depends on the design points only: swapping in a
    /// completely different response leaves `g_n` bit-identical.
    #[test]
    fn density_estimate_ignores_the_response(
        n in 1..=60usize,
        freq in 0.5..2.0f64,
        seed in any::<u64>(),
        h in 0.2..1.5f64,
        x1 in -1.0..1.0f64,
    ) {
        let (model, data) = random_problem(1, 1, n, freq, seed);
        let mut swapped = data.clone();
        swapped.y = sample(&model, n, seed.wrapping_add(1)).y;
        let kernel = make_builtin(BuiltinKernel::Uniform, 1).unwrap();
        let base = eval_nw(&kernel, &[x1], h, &data).unwrap();
        let other = eval_nw(&kernel, &[x1], h, &swapped).unwrap();
        prop_assert_eq!(base.g_n, other.g_n);
        prop_assert_eq!(base.g_zero, other.g_zero);
    }

    /// Sampling is a pure function of the model and seed.
    #[test]
    fn sampling_is_bit_reproducible(
        d in 1..=2usize,
        q in 1..=2usize,
        n in 1..=200usize,
        freq in 0.5..2.0f64,
        seed in any::<u64>(),
    ) {
        let (model, first) = random_problem(d, q, n, freq, seed);
        let second = sample(&model, n, seed);
        prop_assert_eq!(first.x, second.x);
        prop_assert_eq!(first.y, second.y);
    }

    /// Power-law bandwidths decrease, and the regular-variation average lies
    /// between 1 and its limit `1/(1 − a·e)`.
    #[test]
    fn regular_variation_average_is_bracketed(
        c in 0.2..3.0f64,
        a in 0.05..0.9f64,
        e in 0.1..1.0f64,
        n in 2..=5_000u64,
        log_b in -1.0..1.0f64,
    ) {
        let sched = BandwidthSchedule::new(c, a, SlowlyVarying::None, 1).unwrap();
        prop_assert!(sched.hn(n as f64 + 1.0) < sched.hn(n as f64));
        if a * e < 1.0 {
            let s = sched.regvar_sum(e, n).unwrap();
            prop_assert!(s >= 1.0 - 1e-12, "average {s} below 1");
            prop_assert!(
                s <= 1.0 / (1.0 - a * e) + 1e-12,
                "average {s} above its limit {}",
                1.0 / (1.0 - a * e)
            );
        }
        // The slowly varying factor must keep bandwidths positive and finite.
        let slow = BandwidthSchedule::new(c, a, SlowlyVarying::LogPower(log_b), 1).unwrap();
        let h = slow.hn(n as f64);
        prop_assert!(h.is_finite() && h > 0.0);
    }
}

/// `I(∇Ψ(0, 0)) = 0`: the rate vanishes at the law-of-large-numbers center.
#[test]
fn rate_vanishes_at_the_gradient_of_the_origin() {
    for ctx in [nw_ctx(), semirec_ctx()] {
        let (gu, gv) = eval_psi_grad(ctx, &[0.0], 0.0);
        let res = conjugate(ctx, &gu, gv).unwrap();
        match res.settled_value() {
            Some(RateValue::Finite(w)) => assert!(w.abs() <= 1e-10, "I(∇Ψ(0)) = {w}"),
            other => panic!("expected a finite value at the center, got {other:?}"),
        }
    }
}
