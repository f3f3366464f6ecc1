//! Monte Carlo verification harness.
//!
//! Each experiment replays many independent datasets through one of the
//! estimators at a fixed point and aggregates a statistic that the limit
//! theory predicts:
//!
//! * [`run_ldp_curve`] — deviation probabilities `P[‖r_n(x) − r(x)‖ ≥ δ]`
//!   with the normalization `−ln p̂ / (n h_n^d)`, compared against the rate
//!   function `J` minimized over a grid on the deviation boundary;
//! * [`run_mdp_variance`] — empirical covariance of `√(n h_n^d)(r_n − r)`
//!   against the closed-form `Σ_x ∫K² / g(x)` (over `1 + ad` for the
//!   semi-recursive estimator);
//! * [`run_linearized_error`] — the contiguity gap `v_n‖(r_n − r) − B_n‖`
//!   and the scaled mean of the linearized error
//!   `B_n = (m_n − m)/g − r·(g_n − g)/g`, both of which must shrink with `n`;
//! * [`run_concentration_ratio`] — paired comparison of deviation
//!   probabilities between the batch and semi-recursive estimators on
//!   identical data streams.
//!
//! Replications run in parallel but aggregate in a fixed order, and each
//! replication derives its generator from `(seed, n-index, replication)`
//! alone, so reports are bit-identical across runs and thread counts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{EvalPoint, NwAccumulator};
use crate::kernels::{from_spec, Kernel, KernelSpec};
use crate::models::{build_model, JointModel, ModelSpec, MAX_D, MAX_Q};
use crate::ratefn::{regression_rate, CumulantContext, QuadSettings, Variant};
use crate::schedules::{check_speed, BandwidthSchedule, ScheduleSpec, SpeedSequence};
use crate::{Error, Result};

/// What an experiment estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentTarget {
    /// Deviation probabilities for the event `‖r_n(x) − r(x)‖ ≥ δ`.
    LdpCurve { delta: f64 },
    /// Covariance of the CLT-scaled error at the largest `n`; `gamma` is the
    /// nominal moderate-deviation speed exponent and must be admissible.
    MdpVariance { gamma: f64 },
    /// Paired batch/semi-recursive deviation probabilities.
    ConcentrationRatio { delta: f64 },
    /// Contiguity gap and mean linearized error at speed `v_n = n^gamma`.
    LinearizedError { gamma: f64 },
}

/// Full, serializable description of one experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    pub schedule: ScheduleSpec,
    pub variant: Variant,
    pub x: Vec<f64>,
    pub ns: Vec<u64>,
    pub reps: u32,
    pub seed: u64,
    pub target: ExperimentTarget,
}

/// Validated runtime resources for an experiment.
struct Prepared {
    model: JointModel,
    kernel: Kernel,
    sched: BandwidthSchedule,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    if cfg.reps < 100 {
        return Err(Error::config(format!(
            "need at least 100 replications, got {}",
            cfg.reps
        )));
    }
    if cfg.ns.is_empty() {
        return Err(Error::config("need at least one sample size"));
    }
    if cfg.ns[0] == 0 || !cfg.ns.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::config(
            "sample sizes must be positive and strictly increasing",
        ));
    }
    let model = build_model(&cfg.model)?;
    let kernel = from_spec(&cfg.kernel)?;
    if kernel.dim() != model.d() {
        return Err(Error::config("kernel and model dimensions differ"));
    }
    if cfg.x.len() != model.d() {
        return Err(Error::config(format!(
            "evaluation point has dimension {}, model has {}",
            cfg.x.len(),
            model.d()
        )));
    }
    let sched = BandwidthSchedule::from_spec(&cfg.schedule, model.d())?;
    if let Variant::Semirec { a } = cfg.variant {
        if a != sched.a() {
            return Err(Error::config(format!(
                "semi-recursive variant exponent a = {a} must equal the schedule \
                 exponent a = {}; the limit theory ties them together",
                sched.a()
            )));
        }
    }
    match cfg.target {
        ExperimentTarget::LdpCurve { delta } | ExperimentTarget::ConcentrationRatio { delta } => {
            if !(delta.is_finite() && delta >= 0.0) {
                return Err(Error::config(
                    "deviation threshold must be a finite nonnegative number",
                ));
            }
        }
        ExperimentTarget::MdpVariance { gamma } | ExperimentTarget::LinearizedError { gamma } => {
            check_speed(&SpeedSequence::new(gamma)?, &sched, model.d())?;
        }
    }
    if matches!(cfg.target, ExperimentTarget::ConcentrationRatio { .. })
        && cfg.variant == Variant::Nw
    {
        return Err(Error::config(
            "concentration comparison needs the semi-recursive variant; the batch \
             estimator is the built-in baseline",
        ));
    }
    Ok(Prepared {
        model,
        kernel,
        sched,
    })
}

/// Stream tag for dataset generation, so every target draws the same data
/// for the same `(seed, n-index, replication)`.
const DATA_TAG: u64 = 0x6461_7461;

fn rep_rng(seed: u64, n_index: usize, rep: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(n_index as u64).to_le_bytes());
    key[16..24].copy_from_slice(&u64::from(rep).to_le_bytes());
    key[24..32].copy_from_slice(&DATA_TAG.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Per-index bandwidths `h_i` and their `d`-th powers for one sample size,
/// precomputed once and shared read-only across replications.
struct BandTable {
    h: Vec<f64>,
    hd: Vec<f64>,
}

fn band_table(sched: &BandwidthSchedule, d: usize, n: u64) -> BandTable {
    let mut h = Vec::with_capacity(n as usize);
    let mut hd = Vec::with_capacity(n as usize);
    for i in 1..=n {
        let hi = sched.hn(i as f64);
        h.push(hi);
        hd.push(hi.powi(d as i32));
    }
    BandTable { h, hd }
}

enum EstimatorKind<'a> {
    Batch { h: f64 },
    Recursive { table: &'a BandTable },
}

fn finish_point(x: &[f64], g_n: f64, m_n: Vec<f64>, n: usize) -> EvalPoint {
    let g_zero = g_n == 0.0;
    let r_n = if g_zero {
        vec![0.0; m_n.len()]
    } else {
        m_n.iter().map(|m| m / g_n).collect()
    };
    EvalPoint {
        x: x.to_vec(),
        g_n,
        m_n,
        r_n,
        n,
        g_zero,
    }
}

/// Runs one replication: samples `n` observations and pushes them through
/// the selected estimator.
fn run_one(
    model: &JointModel,
    kernel: &Kernel,
    kind: &EstimatorKind<'_>,
    x: &[f64],
    n: u64,
    rng: &mut ChaCha8Rng,
) -> Result<EvalPoint> {
    let d = model.d();
    let q = model.q();
    let mut xi = [0.0f64; MAX_D];
    let mut yi = [0.0f64; MAX_Q];
    match kind {
        EstimatorKind::Batch { h } => {
            let mut acc = NwAccumulator::new(x.to_vec(), *h, q)?;
            for _ in 0..n {
                model.sample_into(rng, &mut xi[..d], &mut yi[..q]);
                acc.push(kernel, &xi[..d], &yi[..q]);
            }
            Ok(acc.finalize())
        }
        EstimatorKind::Recursive { table } => {
            let mut s_g = 0.0f64;
            let mut s_m = [0.0f64; MAX_Q];
            let mut z = [0.0f64; MAX_D];
            for i in 0..n as usize {
                model.sample_into(rng, &mut xi[..d], &mut yi[..q]);
                let h = table.h[i];
                for j in 0..d {
                    z[j] = (x[j] - xi[j]) / h;
                }
                let k = kernel.eval(&z[..d]);
                if k != 0.0 {
                    let w = k / table.hd[i];
                    s_g += w;
                    for j in 0..q {
                        s_m[j] += yi[j] * w;
                    }
                }
            }
            let nf = n as f64;
            let m_n: Vec<f64> = s_m[..q].iter().map(|s| s / nf).collect();
            Ok(finish_point(x, s_g / nf, m_n, n as usize))
        }
    }
}

/// Addresses one replication batch: the sample size, its position in the
/// configured `ns` list (a seed-derivation input, so every batch gets an
/// independent stream), the experiment seed, and the number of replications.
#[derive(Clone, Copy)]
pub(crate) struct RepBatch {
    pub n: u64,
    pub n_index: usize,
    pub seed: u64,
    pub reps: u32,
}

/// Replications for one sample size, in replication order.
pub(crate) fn replicate_points(
    model: &JointModel,
    kernel: &Kernel,
    variant: Variant,
    sched: &BandwidthSchedule,
    x: &[f64],
    batch: RepBatch,
) -> Result<Vec<EvalPoint>> {
    let RepBatch {
        n,
        n_index,
        seed,
        reps,
    } = batch;
    let h = sched.hn(n as f64);
    match variant {
        Variant::Nw => {
            let kind = EstimatorKind::Batch { h };
            (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = rep_rng(seed, n_index, rep);
                    run_one(model, kernel, &kind, x, n, &mut rng)
                })
                .collect()
        }
        Variant::Semirec { .. } => {
            let table = band_table(sched, model.d(), n);
            let kind = EstimatorKind::Recursive { table: &table };
            (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = rep_rng(seed, n_index, rep);
                    run_one(model, kernel, &kind, x, n, &mut rng)
                })
                .collect()
        }
    }
}

fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn binomial_se(p: f64, reps: u32) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Deviation-probability curve.

#[derive(Clone, Debug, Serialize)]
pub struct CurveRow {
    pub n: u64,
    pub h: f64,
    pub p_hat: f64,
    pub se: f64,
    /// `−ln p̂ / (n h^d)`; absent when no deviation event occurred.
    pub norm_log: Option<f64>,
    /// Delta-method standard error of `norm_log`.
    pub norm_log_se: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationCurve {
    pub config: ExperimentConfig,
    pub delta: f64,
    /// `inf J` over a grid on the deviation boundary `‖s − r(x)‖ = δ`;
    /// absent when every grid target has an infinite rate.
    pub rate_bound: Option<f64>,
    pub rows: Vec<CurveRow>,
}

/// Grid of targets on the sphere `‖s − center‖ = delta`.
fn boundary_grid(center: &[f64], delta: f64, q: usize) -> Vec<Vec<f64>> {
    if delta == 0.0 {
        return vec![center.to_vec()];
    }
    match q {
        1 => vec![vec![center[0] - delta], vec![center[0] + delta]],
        2 => (0..16)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 16.0;
                vec![
                    center[0] + delta * th.cos(),
                    center[1] + delta * th.sin(),
                ]
            })
            .collect(),
        _ => {
            // Fibonacci sphere.
            let count = 32;
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - y * y).sqrt();
                    let th = golden * i as f64;
                    vec![
                        center[0] + delta * r * th.cos(),
                        center[1] + delta * y,
                        center[2] + delta * r * th.sin(),
                    ]
                })
                .collect()
        }
    }
}

pub fn run_ldp_curve(cfg: &ExperimentConfig) -> Result<DeviationCurve> {
    let ExperimentTarget::LdpCurve { delta } = cfg.target else {
        return Err(Error::config("experiment target must be ldp_curve"));
    };
    let prep = prepare(cfg)?;
    let d = prep.model.d() as i32;
    let mut r_true = vec![0.0; prep.model.q()];
    prep.model.r_into(&cfg.x, &mut r_true);

    let mut rows = Vec::with_capacity(cfg.ns.len());
    for (n_index, &n) in cfg.ns.iter().enumerate() {
        let h = prep.sched.hn(n as f64);
        let points = replicate_points(
            &prep.model,
            &prep.kernel,
            cfg.variant,
            &prep.sched,
            &cfg.x,
            RepBatch {
                n,
                n_index,
                seed: cfg.seed,
                reps: cfg.reps,
            },
        )?;
        let count = points
            .iter()
            .filter(|p| euclid_dist(&p.r_n, &r_true) >= delta)
            .count();
        let p_hat = count as f64 / cfg.reps as f64;
        let se = binomial_se(p_hat, cfg.reps);
        let speed = n as f64 * h.powi(d);
        let norm_log = (count > 0).then(|| -p_hat.ln() / speed);
        let norm_log_se = (count > 0).then(|| se / (p_hat * speed));
        rows.push(CurveRow {
            n,
            h,
            p_hat,
            se,
            norm_log,
            norm_log_se,
        });
    }

    // Rate-function bound: inf J over the deviation boundary.
    let ctx = CumulantContext::new(
        prep.model,
        prep.kernel,
        cfg.x.clone(),
        cfg.variant,
        QuadSettings::default(),
    )?;
    let mut rate_bound: Option<f64> = None;
    for s in boundary_grid(&r_true, delta, r_true.len()) {
        if let Some(j) = regression_rate(&ctx, &s)?.j.finite() {
            if rate_bound.is_none_or(|b| j < b) {
                rate_bound = Some(j);
            }
        }
    }

    Ok(DeviationCurve {
        config: cfg.clone(),
        delta,
        rate_bound,
        rows,
    })
}

// ---------------------------------------------------------------------------
// MDP variance check.

#[derive(Clone, Debug, Serialize)]
pub struct MdpVarianceReport {
    pub config: ExperimentConfig,
    /// Largest configured sample size (the one evaluated).
    pub n: u64,
    pub h: f64,
    /// Replications with a nonvanishing density estimate.
    pub successes: u64,
    pub zero_density: u64,
    /// Sample covariance of `√(n h^d)(r_n − r)`, row-major `q×q`.
    pub empirical: Vec<f64>,
    /// `Σ_x ∫K² / g(x)`, over `1 + ad` for the semi-recursive variant.
    pub predicted: Vec<f64>,
    /// Entrywise `empirical / predicted`; absent where the prediction is 0.
    pub ratio: Vec<Option<f64>>,
}

pub fn run_mdp_variance(cfg: &ExperimentConfig) -> Result<MdpVarianceReport> {
    if !matches!(cfg.target, ExperimentTarget::MdpVariance { .. }) {
        return Err(Error::config("experiment target must be mdp_variance"));
    }
    let prep = prepare(cfg)?;
    let d = prep.model.d();
    let q = prep.model.q();
    let n = *cfg.ns.last().expect("validated nonempty");
    let n_index = cfg.ns.len() - 1;
    let h = prep.sched.hn(n as f64);
    let mut r_true = vec![0.0; q];
    prep.model.r_into(&cfg.x, &mut r_true);

    let points = replicate_points(
        &prep.model,
        &prep.kernel,
        cfg.variant,
        &prep.sched,
        &cfg.x,
        RepBatch {
            n,
            n_index,
            seed: cfg.seed,
            reps: cfg.reps,
        },
    )?;
    let zero_density = points.iter().filter(|p| p.g_zero).count() as u64;
    let successes = cfg.reps as u64 - zero_density;
    if successes < 2 {
        return Err(Error::numeric(format!(
            "insufficient data: only {successes} of {} replications produced a \
             nonzero density estimate",
            cfg.reps
        )));
    }

    let scale = (n as f64 * h.powi(d as i32)).sqrt();
    let mut mean = vec![0.0f64; q];
    for p in points.iter().filter(|p| !p.g_zero) {
        for j in 0..q {
            mean[j] += scale * (p.r_n[j] - r_true[j]);
        }
    }
    for m in &mut mean {
        *m /= successes as f64;
    }
    let mut empirical = vec![0.0f64; q * q];
    let mut w = vec![0.0f64; q];
    for p in points.iter().filter(|p| !p.g_zero) {
        for j in 0..q {
            w[j] = scale * (p.r_n[j] - r_true[j]) - mean[j];
        }
        for i in 0..q {
            for j in 0..q {
                empirical[i * q + j] += w[i] * w[j];
            }
        }
    }
    for e in &mut empirical {
        *e /= (successes - 1) as f64;
    }

    let g = prep.model.g(&cfg.x);
    let l2k = prep
        .kernel
        .l2_norm_sq(QuadSettings::default().z_nodes_per_panel);
    let ad = match cfg.variant {
        Variant::Nw => 0.0,
        Variant::Semirec { a } => a * d as f64,
    };
    let sigma = prep.model.sigma();
    let predicted: Vec<f64> = sigma
        .iter()
        .map(|s| s * l2k / (g * (1.0 + ad)))
        .collect();
    let ratio: Vec<Option<f64>> = empirical
        .iter()
        .zip(&predicted)
        .map(|(e, p)| (p.abs() > 0.0).then(|| e / p))
        .collect();

    Ok(MdpVarianceReport {
        config: cfg.clone(),
        n,
        h,
        successes,
        zero_density,
        empirical,
        predicted,
        ratio,
    })
}

// ---------------------------------------------------------------------------
// Linearized-error diagnostic.

#[derive(Clone, Debug, Serialize)]
pub struct LinearizedRow {
    pub n: u64,
    pub h: f64,
    pub v_n: f64,
    /// Median over replications of `v_n ‖(r_n − r) − B_n‖`.
    pub median_gap: Option<f64>,
    /// 90th percentile of the same.
    pub q90_gap: Option<f64>,
    /// `v_n · ‖mean over replications of B_n‖`.
    pub vn_mean_bias_norm: f64,
    pub zero_density: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearizedErrorReport {
    pub config: ExperimentConfig,
    pub gamma: f64,
    pub rows: Vec<LinearizedRow>,
}

pub fn run_linearized_error(cfg: &ExperimentConfig) -> Result<LinearizedErrorReport> {
    let ExperimentTarget::LinearizedError { gamma } = cfg.target else {
        return Err(Error::config("experiment target must be linearized_error"));
    };
    let prep = prepare(cfg)?;
    let q = prep.model.q();
    let g = prep.model.g(&cfg.x);
    let mut r_true = vec![0.0; q];
    prep.model.r_into(&cfg.x, &mut r_true);
    let mut m_true = vec![0.0; q];
    prep.model.m_into(&cfg.x, &mut m_true);
    let speed = SpeedSequence::new(gamma)?;

    let mut rows = Vec::with_capacity(cfg.ns.len());
    for (n_index, &n) in cfg.ns.iter().enumerate() {
        let h = prep.sched.hn(n as f64);
        let v_n = speed.vn(n as f64);
        let points = replicate_points(
            &prep.model,
            &prep.kernel,
            cfg.variant,
            &prep.sched,
            &cfg.x,
            RepBatch {
                n,
                n_index,
                seed: cfg.seed,
                reps: cfg.reps,
            },
        )?;
        let zero_density = points.iter().filter(|p| p.g_zero).count() as u64;

        let mut gaps = Vec::with_capacity(points.len());
        let mut mean_b = vec![0.0f64; q];
        let mut b = vec![0.0f64; q];
        for p in &points {
            // Linearized error from this replication's own estimates.
            for j in 0..q {
                b[j] = (p.m_n[j] - m_true[j]) / g - r_true[j] * (p.g_n - g) / g;
                mean_b[j] += b[j];
            }
            if !p.g_zero {
                let gap_sq: f64 = (0..q)
                    .map(|j| {
                        let e = (p.r_n[j] - r_true[j]) - b[j];
                        e * e
                    })
                    .sum();
                gaps.push(v_n * gap_sq.sqrt());
            }
        }
        for m in &mut mean_b {
            *m /= points.len() as f64;
        }
        gaps.sort_by(f64::total_cmp);
        let quantile = |p: f64| -> Option<f64> {
            if gaps.is_empty() {
                None
            } else {
                let idx = ((gaps.len() - 1) as f64 * p).round() as usize;
                Some(gaps[idx])
            }
        };
        let bias_norm = mean_b.iter().map(|x| x * x).sum::<f64>().sqrt();
        rows.push(LinearizedRow {
            n,
            h,
            v_n,
            median_gap: quantile(0.5),
            q90_gap: quantile(0.9),
            vn_mean_bias_norm: v_n * bias_norm,
            zero_density,
        });
    }

    Ok(LinearizedErrorReport {
        config: cfg.clone(),
        gamma,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Paired concentration comparison.

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationRow {
    pub n: u64,
    pub h: f64,
    pub p_nw: f64,
    pub p_semirec: f64,
    pub se_nw: f64,
    pub se_semirec: f64,
    /// `p_semirec − p_nw`.
    pub diff: f64,
    /// Standard error of `diff` from the paired per-replication differences.
    pub se_diff: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub config: ExperimentConfig,
    pub delta: f64,
    pub rows: Vec<ConcentrationRow>,
}

/// One replication evaluated by both estimators on the same data stream.
fn run_pair(
    model: &JointModel,
    kernel: &Kernel,
    x: &[f64],
    h: f64,
    table: &BandTable,
    n: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(EvalPoint, EvalPoint)> {
    let d = model.d();
    let q = model.q();
    let mut xi = [0.0f64; MAX_D];
    let mut yi = [0.0f64; MAX_Q];
    let mut z = [0.0f64; MAX_D];
    let mut acc = NwAccumulator::new(x.to_vec(), h, q)?;
    let mut s_g = 0.0f64;
    let mut s_m = [0.0f64; MAX_Q];
    for i in 0..n as usize {
        model.sample_into(rng, &mut xi[..d], &mut yi[..q]);
        acc.push(kernel, &xi[..d], &yi[..q]);
        let hi = table.h[i];
        for j in 0..d {
            z[j] = (x[j] - xi[j]) / hi;
        }
        let k = kernel.eval(&z[..d]);
        if k != 0.0 {
            let w = k / table.hd[i];
            s_g += w;
            for j in 0..q {
                s_m[j] += yi[j] * w;
            }
        }
    }
    let nf = n as f64;
    let m_n: Vec<f64> = s_m[..q].iter().map(|s| s / nf).collect();
    Ok((acc.finalize(), finish_point(x, s_g / nf, m_n, n as usize)))
}

pub fn run_concentration_ratio(cfg: &ExperimentConfig) -> Result<ConcentrationReport> {
    let ExperimentTarget::ConcentrationRatio { delta } = cfg.target else {
        return Err(Error::config(
            "experiment target must be concentration_ratio",
        ));
    };
    let prep = prepare(cfg)?;
    let q = prep.model.q();
    let mut r_true = vec![0.0; q];
    prep.model.r_into(&cfg.x, &mut r_true);

    let mut rows = Vec::with_capacity(cfg.ns.len());
    for (n_index, &n) in cfg.ns.iter().enumerate() {
        let h = prep.sched.hn(n as f64);
        let table = band_table(&prep.sched, prep.model.d(), n);
        let pairs: Result<Vec<(bool, bool)>> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(cfg.seed, n_index, rep);
                let (nw, sr) = run_pair(
                    &prep.model,
                    &prep.kernel,
                    &cfg.x,
                    h,
                    &table,
                    n,
                    &mut rng,
                )?;
                Ok((
                    euclid_dist(&nw.r_n, &r_true) >= delta,
                    euclid_dist(&sr.r_n, &r_true) >= delta,
                ))
            })
            .collect();
        let pairs = pairs?;
        let reps = cfg.reps as f64;
        let count_nw = pairs.iter().filter(|(a, _)| *a).count() as f64;
        let count_sr = pairs.iter().filter(|(_, b)| *b).count() as f64;
        let p_nw = count_nw / reps;
        let p_sr = count_sr / reps;
        let diff = p_sr - p_nw;
        // Paired difference d_i ∈ {−1, 0, 1}.
        let mut var_d = 0.0;
        for (a, b) in &pairs {
            let di = (*b as i32 - *a as i32) as f64;
            var_d += (di - diff) * (di - diff);
        }
        var_d /= reps - 1.0;
        rows.push(ConcentrationRow {
            n,
            h,
            p_nw,
            p_semirec: p_sr,
            se_nw: binomial_se(p_nw, cfg.reps),
            se_semirec: binomial_se(p_sr, cfg.reps),
            diff,
            se_diff: (var_d / reps).sqrt(),
        });
    }

    Ok(ConcentrationReport {
        config: cfg.clone(),
        delta,
        rows,
    })
}
