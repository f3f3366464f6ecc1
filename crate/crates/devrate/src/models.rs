//! Joint models for the design/response pair `(X, Y)`.
//!
//! The design `X` is standard normal on `R^d`, so its density `g` is known in
//! closed form and strictly positive everywhere — the regularity the rate
//! functions need. The response is `Y = r(X) + ε` with a choice of noise:
//! Gaussian with a fixed covariance, or bounded uniform noise on a centered
//! box. A third family draws `Y` independent of `X` and centered, the
//! symmetric setting in which the regression function vanishes identically.
//!
//! Besides sampling, each model exposes the truncated joint Laplace transform
//! `M_x(θ) = ∫ e^{θ·y} f(x, y) dy = g(x) · E[e^{θ·Y} | X = x]` and its
//! gradient in `θ`, the two model-side ingredients of the deviation
//! cumulants. Both are closed-form for every family here.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::{Error, Result};

/// Largest supported design dimension.
pub const MAX_D: usize = 3;
/// Largest supported response dimension.
pub const MAX_Q: usize = 3;

/// Scalar regression shape, applied to the coordinate sum `s = x_1 + … + x_d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionSpec {
    Constant { value: f64 },
    Linear { slope: f64, intercept: f64 },
    Sin { amplitude: f64, frequency: f64 },
    Square { scale: f64 },
}

impl RegressionSpec {
    fn eval(self, s: f64) -> f64 {
        match self {
            RegressionSpec::Constant { value } => value,
            RegressionSpec::Linear { slope, intercept } => slope * s + intercept,
            RegressionSpec::Sin {
                amplitude,
                frequency,
            } => amplitude * (frequency * s).sin(),
            RegressionSpec::Square { scale } => scale * s * s,
        }
    }

    fn validate(self) -> Result<()> {
        let fields = match self {
            RegressionSpec::Constant { value } => vec![value],
            RegressionSpec::Linear { slope, intercept } => vec![slope, intercept],
            RegressionSpec::Sin {
                amplitude,
                frequency,
            } => vec![amplitude, frequency],
            RegressionSpec::Square { scale } => vec![scale],
        };
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("regression parameters must be finite"));
        }
        Ok(())
    }
}

/// Serializable model description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `Y = r(X) + ε`, `ε ~ N(0, cov)` independent of `X`.
    GaussianNoise {
        d: usize,
        q: usize,
        regression: Vec<RegressionSpec>,
        cov: Vec<Vec<f64>>,
    },
    /// `Y = r(X) + ε` with independent components `ε_j ~ U[-w, w]`.
    BoundedNoise {
        d: usize,
        q: usize,
        regression: Vec<RegressionSpec>,
        half_width: f64,
    },
    /// `Y ~ N(0, cov)` independent of `X`; the regression is identically zero.
    SymmetricY {
        d: usize,
        q: usize,
        cov: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
enum Noise {
    /// Covariance and its lower-triangular Cholesky factor, row-major `q × q`.
    Gaussian { cov: Vec<f64>, chol: Vec<f64> },
    BoundedUniform { half_width: f64 },
}

/// A concrete joint model, ready for evaluation and sampling.
#[derive(Clone, Debug)]
pub struct JointModel {
    spec: ModelSpec,
    d: usize,
    q: usize,
    /// One regression component per response coordinate; empty means `r ≡ 0`.
    regression: Vec<RegressionSpec>,
    noise: Noise,
    symmetric: bool,
}

/// Validates a model description and prepares it for use. Covariances must
/// be symmetric positive definite (checked by Cholesky factorization).
pub fn build_model(spec: &ModelSpec) -> Result<JointModel> {
    let (d, q) = match spec {
        ModelSpec::GaussianNoise { d, q, .. }
        | ModelSpec::BoundedNoise { d, q, .. }
        | ModelSpec::SymmetricY { d, q, .. } => (*d, *q),
    };
    if d == 0 || d > MAX_D {
        return Err(Error::config(format!(
            "design dimension d must be in 1..={MAX_D}, got {d}"
        )));
    }
    if q == 0 || q > MAX_Q {
        return Err(Error::config(format!(
            "response dimension q must be in 1..={MAX_Q}, got {q}"
        )));
    }
    let (regression, noise, symmetric) = match spec {
        ModelSpec::GaussianNoise {
            regression, cov, ..
        } => (
            regression.clone(),
            gaussian_noise(cov, q)?,
            regression
                .iter()
                .all(|r| matches!(r, RegressionSpec::Constant { value: 0.0 })),
        ),
        ModelSpec::BoundedNoise {
            regression,
            half_width,
            ..
        } => {
            if !(half_width.is_finite() && *half_width > 0.0) {
                return Err(Error::config(format!(
                    "noise half-width must be positive, got {half_width}"
                )));
            }
            (
                regression.clone(),
                Noise::BoundedUniform {
                    half_width: *half_width,
                },
                regression
                    .iter()
                    .all(|r| matches!(r, RegressionSpec::Constant { value: 0.0 })),
            )
        }
        ModelSpec::SymmetricY { cov, .. } => (Vec::new(), gaussian_noise(cov, q)?, true),
    };
    if !regression.is_empty() && regression.len() != q {
        return Err(Error::config(format!(
            "expected {} regression components, got {}",
            q,
            regression.len()
        )));
    }
    for r in &regression {
        r.validate()?;
    }
    Ok(JointModel {
        spec: spec.clone(),
        d,
        q,
        regression,
        noise,
        symmetric,
    })
}

fn gaussian_noise(cov: &[Vec<f64>], q: usize) -> Result<Noise> {
    if cov.len() != q || cov.iter().any(|row| row.len() != q) {
        return Err(Error::config(format!("covariance must be {q} x {q}")));
    }
    let mut flat = vec![0.0f64; q * q];
    for (j, row) in cov.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::config("covariance entries must be finite"));
            }
            flat[j * q + k] = v;
        }
    }
    for j in 0..q {
        for k in (j + 1)..q {
            let asym = (flat[j * q + k] - flat[k * q + j]).abs();
            if asym > 1e-12 * (1.0 + flat[j * q + j].abs().max(flat[k * q + k].abs())) {
                return Err(Error::config("covariance must be symmetric"));
            }
        }
    }
    let m = DMatrix::from_row_slice(q, q, &flat);
    let chol = nalgebra::Cholesky::new(m)
        .ok_or_else(|| Error::config("covariance must be positive definite"))?;
    let l = chol.l();
    let mut chol_flat = vec![0.0f64; q * q];
    for j in 0..q {
        for k in 0..=j {
            chol_flat[j * q + k] = l[(j, k)];
        }
    }
    Ok(Noise::Gaussian {
        cov: flat,
        chol: chol_flat,
    })
}

impl JointModel {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Density of the design `X` (standard normal on `R^d`).
    pub fn g(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        (-0.5 * norm_sq).exp() / (2.0 * std::f64::consts::PI).powf(self.d as f64 / 2.0)
    }

    /// Regression function `r(x) = E[Y | X = x]`.
    pub fn r_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.q);
        if self.regression.is_empty() {
            out.fill(0.0);
            return;
        }
        let s: f64 = x.iter().sum();
        for (o, reg) in out.iter_mut().zip(&self.regression) {
            *o = reg.eval(s);
        }
    }

    /// Density-weighted regression `m(x) = r(x) g(x)`.
    pub fn m_into(&self, x: &[f64], out: &mut [f64]) {
        self.r_into(x, out);
        let g = self.g(x);
        for o in out.iter_mut() {
            *o *= g;
        }
    }

    /// Conditional covariance `Σ_x = Cov(Y | X = x)`, row-major `q × q`.
    /// Constant in `x` for every family here.
    pub fn sigma(&self) -> Vec<f64> {
        match &self.noise {
            Noise::Gaussian { cov, .. } => cov.clone(),
            Noise::BoundedUniform { half_width } => {
                let mut m = vec![0.0f64; self.q * self.q];
                let v = half_width * half_width / 3.0;
                for j in 0..self.q {
                    m[j * self.q + j] = v;
                }
                m
            }
        }
    }

    /// Truncated joint Laplace transform `M_x(θ) = g(x) E[e^{θ·Y} | X = x]`.
    pub fn laplace(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.g(x) * self.conditional_mgf(x, theta)
    }

    /// `ln M_x(θ)`, assembled without ever forming the exponential, so large
    /// `θ` cannot overflow an intermediate. Callers that multiply `M` by
    /// another exponential factor should add exponents and exponentiate once.
    pub fn log_laplace(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.g(x).ln() + self.log_mgf(x, theta)
    }

    /// Fills `grad` with `∇_θ ln M_x(θ)` and returns `ln M_x(θ)`.
    pub fn log_laplace_and_grad(&self, x: &[f64], theta: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.q);
        self.grad_log_mgf(x, theta, grad);
        self.log_laplace(x, theta)
    }

    /// Fills `grad` with `∇_θ M_x(θ)` and returns `M_x(θ)`.
    pub fn laplace_and_grad(&self, x: &[f64], theta: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.q);
        let m = self.laplace(x, theta);
        // ∇ M = M ∇ log E[e^{θ·Y}] since g(x) does not depend on θ.
        self.grad_log_mgf(x, theta, grad);
        for gj in grad.iter_mut() {
            *gj *= m;
        }
        m
    }

    /// `E[e^{θ·Y} | X = x]`.
    fn conditional_mgf(&self, x: &[f64], theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.q);
        let mut exponent = 0.0;
        if !self.regression.is_empty() {
            let s: f64 = x.iter().sum();
            for (j, reg) in self.regression.iter().enumerate() {
                exponent += theta[j] * reg.eval(s);
            }
        }
        match &self.noise {
            Noise::Gaussian { cov, .. } => {
                let mut quad = 0.0;
                for j in 0..self.q {
                    for k in 0..self.q {
                        quad += theta[j] * cov[j * self.q + k] * theta[k];
                    }
                }
                (exponent + 0.5 * quad).exp()
            }
            Noise::BoundedUniform { half_width } => {
                let mut value = exponent.exp();
                for &tj in theta {
                    value *= sinhc(half_width * tj);
                }
                value
            }
        }
    }

    /// `ln E[e^{θ·Y} | X = x]` in closed form. Exactly zero at `θ = 0`, so
    /// `g·expm1(log_mgf + …)` reproduces the exact cancellation of
    /// `e^{…}·M − g` at the origin.
    pub(crate) fn log_mgf(&self, x: &[f64], theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.q);
        let mut exponent = 0.0;
        if !self.regression.is_empty() {
            let s: f64 = x.iter().sum();
            for (j, reg) in self.regression.iter().enumerate() {
                exponent += theta[j] * reg.eval(s);
            }
        }
        match &self.noise {
            Noise::Gaussian { cov, .. } => {
                let mut quad = 0.0;
                for j in 0..self.q {
                    for k in 0..self.q {
                        quad += theta[j] * cov[j * self.q + k] * theta[k];
                    }
                }
                exponent + 0.5 * quad
            }
            Noise::BoundedUniform { half_width } => {
                let mut value = exponent;
                for &tj in theta {
                    value += ln_sinhc(half_width * tj);
                }
                value
            }
        }
    }

    fn grad_log_mgf(&self, x: &[f64], theta: &[f64], grad: &mut [f64]) {
        if self.regression.is_empty() {
            grad.fill(0.0);
        } else {
            let s: f64 = x.iter().sum();
            for (gj, reg) in grad.iter_mut().zip(&self.regression) {
                *gj = reg.eval(s);
            }
        }
        match &self.noise {
            Noise::Gaussian { cov, .. } => {
                for j in 0..self.q {
                    let mut dot = 0.0;
                    for k in 0..self.q {
                        dot += cov[j * self.q + k] * theta[k];
                    }
                    grad[j] += dot;
                }
            }
            Noise::BoundedUniform { half_width } => {
                for (gj, &tj) in grad.iter_mut().zip(theta) {
                    // d/dθ log sinhc(wθ) = w (coth(wθ) - 1/(wθ)).
                    *gj += half_width * coth_minus_inv(half_width * tj);
                }
            }
        }
    }

    /// Fills `out` (row-major `q×q`) with `∇²_θ ln M_x(θ)`, the conditional
    /// covariance of `Y` under the `θ`-tilted law. Finite for every `θ`, so
    /// Newton steps built from it stay usable far from the origin where
    /// finite differences of the gradient lose all significance.
    pub(crate) fn hessian_log_mgf(&self, theta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.q);
        debug_assert_eq!(out.len(), self.q * self.q);
        match &self.noise {
            Noise::Gaussian { cov, .. } => out.copy_from_slice(cov),
            Noise::BoundedUniform { half_width } => {
                out.fill(0.0);
                for j in 0..self.q {
                    let t = half_width * theta[j];
                    out[j * self.q + j] = half_width * half_width * dcoth_minus_inv(t);
                }
            }
        }
    }

    /// True when `Y` is centered and distributed symmetrically about the
    /// origin independently of the design, so `r ≡ 0`.
    pub fn is_symmetric_y(&self) -> bool {
        self.symmetric
    }

    pub fn sample_x_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d);
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
    }

    /// Draws the noise `ε` alone; `Y = r(x) + ε`.
    pub fn sample_eps_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.q);
        match &self.noise {
            Noise::Gaussian { chol, .. } => {
                let mut z = [0.0f64; MAX_Q];
                for zj in z.iter_mut().take(self.q) {
                    *zj = rng.sample(StandardNormal);
                }
                for j in 0..self.q {
                    let mut acc = 0.0;
                    for k in 0..=j {
                        acc += chol[j * self.q + k] * z[k];
                    }
                    out[j] = acc;
                }
            }
            Noise::BoundedUniform { half_width } => {
                for o in out.iter_mut() {
                    *o = half_width * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
        }
    }

    /// Draws one observation `(X, Y)`.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, x: &mut [f64], y: &mut [f64]) {
        self.sample_x_into(rng, x);
        self.sample_eps_into(rng, y);
        if !self.regression.is_empty() {
            let s: f64 = x.iter().sum();
            for (j, reg) in self.regression.iter().enumerate() {
                y[j] += reg.eval(s);
            }
        }
    }
}

/// `sinh(x)/x`, continuous through zero.
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

/// `ln(sinh(x)/x)`, valid for arguments far beyond where `sinh` overflows.
fn ln_sinhc(x: f64) -> f64 {
    let a = x.abs();
    if a > 350.0 {
        // sinh(a) = e^a (1 - e^{-2a}) / 2.
        a - (2.0 * a).ln() + (-2.0 * a).exp().ln_1p()
    } else {
        sinhc(x).ln()
    }
}

/// `coth(x) - 1/x`, continuous through zero.
fn coth_minus_inv(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        x / 3.0 - x * x * x / 45.0
    } else {
        1.0 / x.tanh() - 1.0 / x
    }
}

/// Derivative of [`coth_minus_inv`]: `1/x² − 1/sinh²(x)`, continuous through
/// zero and evaluated asymptotically where `sinh` would overflow.
fn dcoth_minus_inv(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.1 {
        let x2 = x * x;
        1.0 / 3.0 - x2 / 15.0 + 2.0 * x2 * x2 / 189.0 - 7.0 * x2 * x2 * x2 / 4725.0
    } else if a > 350.0 {
        1.0 / (x * x)
    } else {
        let s = x.sinh();
        1.0 / (x * x) - 1.0 / (s * s)
    }
}

/// A sampled dataset laid out row-major: observation `i` occupies
/// `x[i*d..(i+1)*d]` and `y[i*q..(i+1)*q]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub q: usize,
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.q..(i + 1) * self.q]
    }
}

/// Draws `n` i.i.d. observations with a seed-keyed generator, so equal seeds
/// give bit-identical datasets.
pub fn sample(model: &JointModel, n: usize, seed: u64) -> Dataset {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&0x64617461u64.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let (d, q) = (model.d, model.q);
    let mut x = vec![0.0f64; n * d];
    let mut y = vec![0.0f64; n * q];
    for i in 0..n {
        let (xs, ys) = (&mut x[i * d..(i + 1) * d], &mut y[i * q..(i + 1) * q]);
        model.sample_into(&mut rng, xs, ys);
    }
    Dataset { d, q, n, x, y }
}

/// Writes a dataset as CSV with header `x1,…,xd,y1,…,yq`. Values use the
/// shortest representation that round-trips exactly.
pub fn write_samples_csv<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let mut header = Vec::new();
    for j in 1..=dataset.d {
        header.push(format!("x{j}"));
    }
    for j in 1..=dataset.q {
        header.push(format!("y{j}"));
    }
    writeln!(out, "{}", header.join(",")).map_err(io_error)?;
    for i in 0..dataset.n {
        let mut line = String::new();
        for (k, v) in dataset.x_row(i).iter().chain(dataset.y_row(i)).enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v}"));
        }
        writeln!(out, "{line}").map_err(io_error)?;
    }
    Ok(())
}

/// Reads a dataset written by [`write_samples_csv`] (or any CSV with the
/// same header convention).
pub fn read_samples_csv<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::input("dataset CSV is empty"))?
        .map_err(io_error)?;
    let columns: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    let d = columns.iter().take_while(|c| c.starts_with('x')).count();
    let q = columns.len() - d;
    if d == 0 || q == 0 || !columns[d..].iter().all(|c| c.starts_with('y')) {
        return Err(Error::input(format!(
            "dataset header must be x1,…,xd,y1,…,yq, got {header:?}"
        )));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(io_error)?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + q {
            return Err(Error::input(format!(
                "row {}: expected {} fields, got {}",
                lineno + 2,
                d + q,
                fields.len()
            )));
        }
        for (k, field) in fields.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::input(format!("row {}: bad number {field:?}", lineno + 2))
            })?;
            if k < d {
                x.push(value);
            } else {
                y.push(value);
            }
        }
        n += 1;
    }
    Ok(Dataset { d, q, n, x, y })
}

fn io_error(e: std::io::Error) -> Error {
    Error::input(format!("dataset I/O failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::Axis;
    use approx::assert_abs_diff_eq;

    fn sin_model_1d() -> JointModel {
        build_model(&ModelSpec::GaussianNoise {
            d: 1,
            q: 1,
            regression: vec![RegressionSpec::Sin {
                amplitude: 1.0,
                frequency: 1.0,
            }],
            cov: vec![vec![0.8]],
        })
        .unwrap()
    }

    #[test]
    fn design_density_is_standard_normal() {
        let model = sin_model_1d();
        assert_abs_diff_eq!(model.g(&[0.0]), 0.3989422804014327, epsilon = 1e-16);
        assert_abs_diff_eq!(
            model.g(&[1.0]),
            (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            epsilon = 1e-16
        );
        let model2 = build_model(&ModelSpec::SymmetricY {
            d: 2,
            q: 1,
            cov: vec![vec![1.0]],
        })
        .unwrap();
        assert_abs_diff_eq!(
            model2.g(&[0.0, 0.0]),
            1.0 / (2.0 * std::f64::consts::PI),
            epsilon = 1e-16
        );
    }

    #[test]
    fn weighted_regression_is_r_times_g() {
        let model = sin_model_1d();
        let x = [0.3];
        let mut r = [0.0];
        let mut m = [0.0];
        model.r_into(&x, &mut r);
        model.m_into(&x, &mut m);
        assert_abs_diff_eq!(r[0], 0.3f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(m[0], 0.3f64.sin() * model.g(&x), epsilon = 1e-15);
    }

    #[test]
    fn laplace_matches_numeric_integral_gaussian() {
        let model = sin_model_1d();
        let x = [0.3];
        let r = 0.3f64.sin();
        let sigma = 0.8f64.sqrt();
        // Numeric oracle: g(x) ∫ e^{θ y} N(r, σ²)(y) dy over ±12σ.
        for theta in [-1.5, 0.7, 2.0] {
            let axis = Axis::from_panels(&[r - 12.0 * sigma, r, r + 12.0 * sigma], 60);
            let oracle: f64 = model.g(&x)
                * axis
                    .points
                    .iter()
                    .zip(&axis.weights)
                    .map(|(&yv, &w)| {
                        let density = (-0.5 * ((yv - r) / sigma).powi(2)).exp()
                            / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                        w * (theta * yv).exp() * density
                    })
                    .sum::<f64>();
            let value = model.laplace(&x, &[theta]);
            assert_abs_diff_eq!(value, oracle, epsilon = 1e-10 * oracle.abs());
        }
    }

    #[test]
    fn laplace_matches_numeric_integral_bounded() {
        let model = build_model(&ModelSpec::BoundedNoise {
            d: 1,
            q: 1,
            regression: vec![RegressionSpec::Linear {
                slope: 0.5,
                intercept: 0.2,
            }],
            half_width: 0.7,
        })
        .unwrap();
        let x = [0.4];
        let r = 0.5 * 0.4 + 0.2;
        for theta in [-2.0, 1e-9, 0.9] {
            let axis = Axis::from_panels(&[r - 0.7, r + 0.7], 40);
            let oracle: f64 = model.g(&x)
                * axis
                    .points
                    .iter()
                    .zip(&axis.weights)
                    .map(|(&yv, &w)| w * (theta * yv).exp() / 1.4)
                    .sum::<f64>();
            let value = model.laplace(&x, &[theta]);
            assert_abs_diff_eq!(value, oracle, epsilon = 1e-12 * oracle.abs().max(1.0));
        }
        // At θ = 0 the transform reduces to the design density.
        assert_abs_diff_eq!(model.laplace(&x, &[0.0]), model.g(&x), epsilon = 1e-16);
    }

    #[test]
    fn sinhc_series_branch_is_continuous() {
        for x in [9.9e-5, 1.01e-4] {
            assert_abs_diff_eq!(sinhc(x), x.sinh() / x, epsilon = 1e-15);
            // The direct form subtracts two O(1/x) terms, so its own
            // rounding noise is a few ulps of 1/x ≈ 1e4.
            assert_abs_diff_eq!(
                coth_minus_inv(x),
                1.0 / x.tanh() - 1.0 / x,
                epsilon = 1e-11
            );
        }
    }

    #[test]
    fn laplace_gradient_matches_finite_differences() {
        let models = [
            sin_model_1d(),
            build_model(&ModelSpec::BoundedNoise {
                d: 1,
                q: 1,
                regression: vec![RegressionSpec::Square { scale: 0.3 }],
                half_width: 1.2,
            })
            .unwrap(),
            build_model(&ModelSpec::GaussianNoise {
                d: 2,
                q: 2,
                regression: vec![
                    RegressionSpec::Sin {
                        amplitude: 0.8,
                        frequency: 2.0,
                    },
                    RegressionSpec::Linear {
                        slope: -0.4,
                        intercept: 0.1,
                    },
                ],
                cov: vec![vec![1.0, 0.3], vec![0.3, 0.64]],
            })
            .unwrap(),
        ];
        for model in &models {
            let x = vec![0.25; model.d()];
            let theta: Vec<f64> = (0..model.q()).map(|j| 0.6 - 0.9 * j as f64).collect();
            let mut grad = vec![0.0; model.q()];
            let value = model.laplace_and_grad(&x, &theta, &mut grad);
            assert!(value > 0.0);
            let eps = 1e-6;
            for j in 0..model.q() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += eps;
                tm[j] -= eps;
                let fd = (model.laplace(&x, &tp) - model.laplace(&x, &tm)) / (2.0 * eps);
                assert_abs_diff_eq!(grad[j], fd, epsilon = 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn log_mgf_hessian_matches_finite_differences() {
        let models = [
            sin_model_1d(),
            build_model(&ModelSpec::BoundedNoise {
                d: 1,
                q: 2,
                regression: vec![
                    RegressionSpec::Constant { value: 0.3 },
                    RegressionSpec::Linear {
                        slope: 0.5,
                        intercept: -0.1,
                    },
                ],
                half_width: 0.9,
            })
            .unwrap(),
        ];
        for model in &models {
            let q = model.q();
            let x = vec![0.25; model.d()];
            for base in [-2.0, 0.05, 0.0999, 0.1001, 1.7] {
                let theta: Vec<f64> = (0..q).map(|j| base + 0.4 * j as f64).collect();
                let mut hess = vec![0.0; q * q];
                model.hessian_log_mgf(&theta, &mut hess);
                let eps = 1e-6;
                for j in 0..q {
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[j] += eps;
                    tm[j] -= eps;
                    let mut gp = vec![0.0; q];
                    let mut gm = vec![0.0; q];
                    model.grad_log_mgf(&x, &tp, &mut gp);
                    model.grad_log_mgf(&x, &tm, &mut gm);
                    for i in 0..q {
                        let fd = (gp[i] - gm[i]) / (2.0 * eps);
                        assert_abs_diff_eq!(hess[i * q + j], fd, epsilon = 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn log_laplace_agrees_and_survives_extreme_arguments() {
        let models = [
            sin_model_1d(),
            build_model(&ModelSpec::BoundedNoise {
                d: 1,
                q: 1,
                regression: vec![RegressionSpec::Linear {
                    slope: 0.5,
                    intercept: 0.2,
                }],
                half_width: 0.7,
            })
            .unwrap(),
        ];
        for model in &models {
            let x = [0.3];
            for theta in [-2.0, -0.3, 0.0, 0.9, 3.0] {
                let direct = model.laplace(&x, &[theta]).ln();
                let logged = model.log_laplace(&x, &[theta]);
                assert_abs_diff_eq!(logged, direct, epsilon = 1e-12 * (1.0 + direct.abs()));
                let mut ga = [0.0];
                let mut gb = [0.0];
                let va = model.laplace_and_grad(&x, &[theta], &mut ga);
                let vb = model.log_laplace_and_grad(&x, &[theta], &mut gb);
                assert_abs_diff_eq!(vb, va.ln(), epsilon = 1e-12 * (1.0 + direct.abs()));
                // laplace_and_grad returns M·∇ln M; log form returns ∇ln M.
                assert_abs_diff_eq!(gb[0] * va, ga[0], epsilon = 1e-10 * (1.0 + ga[0].abs()));
            }
            // Arguments far past the overflow point of M itself must still
            // produce a finite logarithm.
            for theta in [-2000.0, 2000.0] {
                let logged = model.log_laplace(&x, &[theta]);
                assert!(logged.is_finite(), "log-laplace at θ = {theta}: {logged}");
                assert!(model.laplace(&x, &[theta]).is_infinite() || theta.abs() < 750.0);
            }
        }
    }

    #[test]
    fn conditional_covariance() {
        let model = sin_model_1d();
        assert_eq!(model.sigma(), vec![0.8]);
        let bounded = build_model(&ModelSpec::BoundedNoise {
            d: 1,
            q: 2,
            regression: vec![
                RegressionSpec::Constant { value: 0.0 },
                RegressionSpec::Constant { value: 0.0 },
            ],
            half_width: 0.9,
        })
        .unwrap();
        let v = 0.9 * 0.9 / 3.0;
        assert_eq!(bounded.sigma(), vec![v, 0.0, 0.0, v]);
    }

    #[test]
    fn build_model_rejects_bad_input() {
        // Non-positive-definite covariance.
        assert!(build_model(&ModelSpec::SymmetricY {
            d: 1,
            q: 2,
            cov: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        })
        .is_err());
        // Asymmetric covariance.
        assert!(build_model(&ModelSpec::SymmetricY {
            d: 1,
            q: 2,
            cov: vec![vec![1.0, 0.5], vec![0.1, 1.0]],
        })
        .is_err());
        // Wrong regression arity.
        assert!(build_model(&ModelSpec::GaussianNoise {
            d: 1,
            q: 2,
            regression: vec![RegressionSpec::Constant { value: 0.0 }],
            cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        })
        .is_err());
        // Dimensions out of range.
        assert!(build_model(&ModelSpec::SymmetricY {
            d: 0,
            q: 1,
            cov: vec![vec![1.0]],
        })
        .is_err());
        assert!(build_model(&ModelSpec::SymmetricY {
            d: 4,
            q: 1,
            cov: vec![vec![1.0]],
        })
        .is_err());
    }

    #[test]
    fn symmetric_model_has_zero_regression() {
        let model = build_model(&ModelSpec::SymmetricY {
            d: 1,
            q: 1,
            cov: vec![vec![2.0]],
        })
        .unwrap();
        assert!(model.is_symmetric_y());
        let mut r = [1.0];
        model.r_into(&[0.7], &mut r);
        assert_eq!(r[0], 0.0);
        // A centered constant regression also counts as symmetric.
        let zero = build_model(&ModelSpec::GaussianNoise {
            d: 1,
            q: 1,
            regression: vec![RegressionSpec::Constant { value: 0.0 }],
            cov: vec![vec![1.0]],
        })
        .unwrap();
        assert!(zero.is_symmetric_y());
        assert!(!sin_model_1d().is_symmetric_y());
    }

    #[test]
    fn sampler_moments_match_the_model() {
        let model = sin_model_1d();
        let data = sample(&model, 20_000, 7);
        let n = data.n as f64;
        let mean_x: f64 = data.x.iter().sum::<f64>() / n;
        let var_x: f64 = data.x.iter().map(|v| (v - mean_x).powi(2)).sum::<f64>() / n;
        assert!(mean_x.abs() < 0.03, "mean_x = {mean_x}");
        assert!((var_x - 1.0).abs() < 0.05, "var_x = {var_x}");
        // Residual moments: ε = y - r(x) should be centered with variance 0.8.
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..data.n {
            let eps = data.y_row(i)[0] - data.x_row(i)[0].sin();
            sum += eps;
            sum_sq += eps * eps;
        }
        let mean_e = sum / n;
        let var_e = sum_sq / n - mean_e * mean_e;
        assert!(mean_e.abs() < 0.03, "mean_e = {mean_e}");
        assert!((var_e - 0.8).abs() < 0.05, "var_e = {var_e}");
    }

    #[test]
    fn bounded_noise_respects_its_support() {
        let model = build_model(&ModelSpec::BoundedNoise {
            d: 1,
            q: 1,
            regression: vec![RegressionSpec::Constant { value: 0.0 }],
            half_width: 0.5,
        })
        .unwrap();
        let data = sample(&model, 10_000, 3);
        let mut var = 0.0;
        for i in 0..data.n {
            let e = data.y_row(i)[0];
            assert!(e.abs() <= 0.5);
            var += e * e;
        }
        var /= data.n as f64;
        let expected = 0.25 / 3.0;
        assert!((var - expected).abs() < 0.05 * expected, "var = {var}");
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let model = sin_model_1d();
        let a = sample(&model, 100, 42);
        let b = sample(&model, 100, 42);
        assert_eq!(a, b);
        let c = sample(&model, 100, 43);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let model = build_model(&ModelSpec::GaussianNoise {
            d: 2,
            q: 2,
            regression: vec![
                RegressionSpec::Sin {
                    amplitude: 1.0,
                    frequency: 1.0,
                },
                RegressionSpec::Constant { value: -0.25 },
            ],
            cov: vec![vec![1.0, 0.2], vec![0.2, 0.5]],
        })
        .unwrap();
        let data = sample(&model, 50, 11);
        let mut buffer = Vec::new();
        write_samples_csv(&data, &mut buffer).unwrap();
        let back = read_samples_csv(&buffer[..]).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_reader_rejects_malformed_input() {
        assert!(read_samples_csv(&b""[..]).is_err());
        assert!(read_samples_csv(&b"u,v\n1,2\n"[..]).is_err());
        assert!(read_samples_csv(&b"x1,y1\n1.0\n"[..]).is_err());
        assert!(read_samples_csv(&b"x1,y1\n1.0,oops\n"[..]).is_err());
        // CRLF line endings are accepted.
        let data = read_samples_csv(&b"x1,y1\r\n1.5,2.5\r\n"[..]).unwrap();
        assert_eq!((data.d, data.q, data.n), (1, 1, 1));
        assert_eq!(data.x, vec![1.5]);
        assert_eq!(data.y, vec![2.5]);
    }

    #[test]
    fn model_spec_round_trips_through_json() {
        let text = r#"{
            "kind": "gaussian_noise", "d": 1, "q": 1,
            "regression": [{"kind": "sin", "amplitude": 1.0, "frequency": 1.0}],
            "cov": [[1.0]]
        }"#;
        let spec: ModelSpec = serde_json::from_str(text).unwrap();
        let model = build_model(&spec).unwrap();
        let round = serde_json::to_string(model.spec()).unwrap();
        let again: ModelSpec = serde_json::from_str(&round).unwrap();
        assert!(build_model(&again).is_ok());
    }
}
