//! Kernel regression estimators.
//!
//! Two estimators of `r(x) = E[Y | X = x]` are provided, both quotients of a
//! weighted response estimate `m_n` and a density estimate `g_n`:
//!
//! * the batch Nadaraya–Watson estimator, where every observation uses the
//!   same bandwidth `h_n`:
//!   `m_n(x) = (n h_n^d)^{-1} Σ_i Y_i K((x - X_i)/h_n)`;
//! * the semi-recursive estimator, where observation `i` keeps the bandwidth
//!   `h_i` it was absorbed with:
//!   `m̃_n(x) = n^{-1} Σ_i h_i^{-d} Y_i K((x - X_i)/h_i)`,
//!   so adding the `(n+1)`-st observation never revisits old ones.
//!
//! The ratio is set to zero with an explicit flag when the density estimate
//! vanishes (no observation in the kernel window).

use serde::Serialize;

use crate::kernels::Kernel;
use crate::models::{Dataset, JointModel, MAX_D};
use crate::schedules::BandwidthSchedule;
use crate::{Error, Result};

/// One evaluated estimate at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    pub x: Vec<f64>,
    /// Density estimate `g_n(x)`.
    pub g_n: f64,
    /// Weighted response estimate `m_n(x)`, one entry per response component.
    pub m_n: Vec<f64>,
    /// Ratio `r_n(x) = m_n(x)/g_n(x)`, zero when the denominator vanishes.
    pub r_n: Vec<f64>,
    /// Number of observations absorbed.
    pub n: usize,
    /// True when `g_n(x) = 0`, i.e. no observation fell in the kernel window.
    pub g_zero: bool,
}

fn ratio_point(x: Vec<f64>, g_n: f64, m_n: Vec<f64>, n: usize) -> EvalPoint {
    let g_zero = g_n == 0.0;
    let r_n = if g_zero {
        vec![0.0; m_n.len()]
    } else {
        m_n.iter().map(|m| m / g_n).collect()
    };
    EvalPoint {
        x,
        g_n,
        m_n,
        r_n,
        n,
        g_zero,
    }
}

/// Streaming accumulator for the batch estimator at a fixed point and
/// bandwidth. Observations are pushed one at a time; nothing is stored.
#[derive(Clone, Debug)]
pub struct NwAccumulator {
    x: Vec<f64>,
    h: f64,
    sum_k: f64,
    sum_yk: Vec<f64>,
    count: usize,
}

impl NwAccumulator {
    pub fn new(x: Vec<f64>, h: f64, q: usize) -> Result<NwAccumulator> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::config(format!("bandwidth must be positive, got {h}")));
        }
        if x.is_empty() || x.len() > MAX_D {
            return Err(Error::config("evaluation point has unsupported dimension"));
        }
        Ok(NwAccumulator {
            x,
            h,
            sum_k: 0.0,
            sum_yk: vec![0.0; q],
            count: 0,
        })
    }

    pub fn push(&mut self, kernel: &Kernel, xi: &[f64], yi: &[f64]) {
        debug_assert_eq!(xi.len(), self.x.len());
        debug_assert_eq!(yi.len(), self.sum_yk.len());
        let mut z = [0.0f64; MAX_D];
        for (j, zj) in z.iter_mut().enumerate().take(self.x.len()) {
            *zj = (self.x[j] - xi[j]) / self.h;
        }
        let k = kernel.eval(&z[..self.x.len()]);
        self.count += 1;
        if k != 0.0 {
            self.sum_k += k;
            for (s, &y) in self.sum_yk.iter_mut().zip(yi) {
                *s += y * k;
            }
        }
    }

    pub fn finalize(&self) -> EvalPoint {
        let d = self.x.len();
        let scale = 1.0 / (self.count.max(1) as f64 * self.h.powi(d as i32));
        let g_n = self.sum_k * scale;
        let m_n: Vec<f64> = self.sum_yk.iter().map(|s| s * scale).collect();
        ratio_point(self.x.clone(), g_n, m_n, self.count)
    }
}

/// Evaluates the batch estimator on a dataset.
pub fn eval_nw(kernel: &Kernel, x: &[f64], h: f64, data: &Dataset) -> Result<EvalPoint> {
    if x.len() != data.d {
        return Err(Error::input(format!(
            "evaluation point has dimension {}, dataset has {}",
            x.len(),
            data.d
        )));
    }
    if kernel.dim() != data.d {
        return Err(Error::input("kernel and dataset dimensions differ"));
    }
    let mut acc = NwAccumulator::new(x.to_vec(), h, data.q)?;
    for i in 0..data.n {
        acc.push(kernel, data.x_row(i), data.y_row(i));
    }
    Ok(acc.finalize())
}

/// Running state of the semi-recursive estimator at a fixed point. Each
/// update costs `O(d + q)` and uses the bandwidth of its own arrival index.
#[derive(Clone, Debug)]
pub struct RecursiveState {
    x: Vec<f64>,
    /// `Σ_i h_i^{-d} Y_i K((x - X_i)/h_i)`.
    s_m: Vec<f64>,
    /// `Σ_i h_i^{-d} K((x - X_i)/h_i)`.
    s_g: f64,
    i: usize,
}

impl RecursiveState {
    pub fn new(x: Vec<f64>, q: usize) -> Result<RecursiveState> {
        if x.is_empty() || x.len() > MAX_D {
            return Err(Error::config("evaluation point has unsupported dimension"));
        }
        Ok(RecursiveState {
            x,
            s_m: vec![0.0; q],
            s_g: 0.0,
            i: 0,
        })
    }

    pub fn count(&self) -> usize {
        self.i
    }

    /// Absorbs the next observation using the bandwidth of its index.
    pub fn update(
        &mut self,
        kernel: &Kernel,
        schedule: &BandwidthSchedule,
        xi: &[f64],
        yi: &[f64],
    ) {
        debug_assert_eq!(xi.len(), self.x.len());
        debug_assert_eq!(yi.len(), self.s_m.len());
        self.i += 1;
        let h = schedule.hn(self.i as f64);
        let mut z = [0.0f64; MAX_D];
        for (j, zj) in z.iter_mut().enumerate().take(self.x.len()) {
            *zj = (self.x[j] - xi[j]) / h;
        }
        let k = kernel.eval(&z[..self.x.len()]);
        if k != 0.0 {
            let w = k / h.powi(self.x.len() as i32);
            self.s_g += w;
            for (s, &y) in self.s_m.iter_mut().zip(yi) {
                *s += y * w;
            }
        }
    }

    pub fn eval(&self) -> EvalPoint {
        let n = self.i.max(1) as f64;
        let g_n = self.s_g / n;
        let m_n: Vec<f64> = self.s_m.iter().map(|s| s / n).collect();
        ratio_point(self.x.clone(), g_n, m_n, self.i)
    }
}

/// Evaluates the semi-recursive estimator on a dataset in arrival order.
pub fn eval_recursive(
    kernel: &Kernel,
    x: &[f64],
    schedule: &BandwidthSchedule,
    data: &Dataset,
) -> Result<EvalPoint> {
    if x.len() != data.d || kernel.dim() != data.d {
        return Err(Error::input("kernel, point and dataset dimensions differ"));
    }
    let mut state = RecursiveState::new(x.to_vec(), data.q)?;
    for i in 0..data.n {
        state.update(kernel, schedule, data.x_row(i), data.y_row(i));
    }
    Ok(state.eval())
}

/// Smoothing biases `(E m_n(x) − m(x), E g_n(x) − g(x))` at bandwidth `h`,
/// computed by quadrature: taking the expectation of the defining sums gives
/// exactly `E m_n(x) = ∫ K(z) m(x − h z) dz` and likewise for `g_n`, so the
/// mean error is a deterministic property of the model, kernel and bandwidth.
pub fn smoothing_bias(
    model: &JointModel,
    kernel: &Kernel,
    x: &[f64],
    h: f64,
    nodes_per_panel: usize,
) -> Result<(Vec<f64>, f64)> {
    if kernel.dim() != model.d() || x.len() != model.d() {
        return Err(Error::input("kernel, model and point dimensions differ"));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::config(format!("bandwidth must be positive, got {h}")));
    }
    let d = model.d();
    let q = model.q();
    let g = model.g(x);
    let mut m0 = vec![0.0; q];
    model.m_into(x, &mut m0);
    let grid = kernel.quad_grid(nodes_per_panel);

    let mut bias_m = vec![0.0f64; q];
    let mut bias_g = 0.0f64;
    let mut shifted = vec![0.0f64; d];
    let mut m_shift = vec![0.0f64; q];
    grid.for_each(|z, w| {
        let k = kernel.eval(z);
        if k == 0.0 {
            return;
        }
        for j in 0..d {
            shifted[j] = x[j] - h * z[j];
        }
        model.m_into(&shifted, &mut m_shift);
        for j in 0..q {
            bias_m[j] += w * k * (m_shift[j] - m0[j]);
        }
        bias_g += w * k * (model.g(&shifted) - g);
    });
    if bias_m.iter().any(|b| !b.is_finite()) || !bias_g.is_finite() {
        return Err(Error::numeric("bias quadrature produced non-finite values"));
    }
    Ok((bias_m, bias_g))
}

/// One row of a [`BiasProbe`] table.
#[derive(Clone, Debug, Serialize)]
pub struct BiasRow {
    pub n: u64,
    /// Bandwidth `h_n` from the schedule.
    pub h: f64,
    /// `‖E m_n(x) − m(x)‖`.
    pub m_bias: f64,
    /// `|E g_n(x) − g(x)|`.
    pub g_bias: f64,
}

/// Smoothing-bias table across sample sizes, with fitted log-log slopes.
///
/// For an order-`p` kernel both biases scale like `h_n^p`, so the slope of
/// `ln bias` against `ln h_n` recovers the kernel order.
#[derive(Clone, Debug, Serialize)]
pub struct BiasProbe {
    pub rows: Vec<BiasRow>,
    /// Slope of `ln ‖E m_n − m‖` against `ln h_n`; absent when fewer than
    /// two rows have a resolvably nonzero bias.
    pub slope_m: Option<f64>,
    /// Same for the density bias.
    pub slope_g: Option<f64>,
}

/// Nodes per quadrature panel used by [`bias_probe`]; biases down to the
/// order-4 range at small bandwidths stay far above the quadrature error.
const BIAS_NODES_PER_PANEL: usize = 64;

pub fn bias_probe(
    model: &JointModel,
    kernel: &Kernel,
    sched: &BandwidthSchedule,
    x: &[f64],
    ns: &[u64],
) -> Result<BiasProbe> {
    if ns.is_empty() {
        return Err(Error::config("need at least one sample size"));
    }
    if ns.contains(&0) {
        return Err(Error::config("sample sizes must be positive"));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let h = sched.hn(n as f64);
        let (bias_m, bias_g) = smoothing_bias(model, kernel, x, h, BIAS_NODES_PER_PANEL)?;
        rows.push(BiasRow {
            n,
            h,
            m_bias: bias_m.iter().map(|b| b * b).sum::<f64>().sqrt(),
            g_bias: bias_g.abs(),
        });
    }
    let slope_m = fit_loglog_slope(rows.iter().map(|r| (r.h, r.m_bias)));
    let slope_g = fit_loglog_slope(rows.iter().map(|r| (r.h, r.g_bias)));
    Ok(BiasProbe {
        rows,
        slope_m,
        slope_g,
    })
}

/// Least-squares slope of `ln y` against `ln x` over pairs with `y` large
/// enough to be distinguishable from quadrature noise.
fn fit_loglog_slope(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .filter(|&(h, v)| h > 0.0 && v.is_finite() && v > 1e-13)
        .map(|(h, v)| (h.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}
