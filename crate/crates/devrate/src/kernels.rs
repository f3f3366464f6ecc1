//! Smoothing kernels with exact metadata.
//!
//! A kernel here is an integrable function `K` on `R^d` with `∫K = 1`,
//! carrying the metadata the deviation machinery needs: order `p` (all
//! coordinate moments of orders `1..p-1` vanish), support radius, sup norm,
//! and the Lebesgue measures `λ(S₊)`, `λ(S₋)` of its positive and negative
//! regions. Built-ins are tensor products of one-dimensional profiles, except
//! for the signed indicator family which is one-dimensional by construction.
//!
//! Metadata is exact for built-ins and interval-based custom kernels;
//! [`verify_order`] re-derives the moment conditions numerically so that a
//! kernel can never silently claim an order it does not have.

use crate::quad::{Axis, TensorGrid};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Kernel values below this threshold are treated as zero when truncating
/// unbounded supports for quadrature.
const TRUNCATION_CUTOFF: f64 = 1e-12;

/// Built-in kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKernel {
    /// Indicator of the unit-volume box `[-1/2, 1/2]^d`.
    Uniform,
    /// Product of one-dimensional Epanechnikov profiles `(3/4)(1 - z^2)` on `[-1, 1]`.
    Epanechnikov,
    /// Product of standard normal densities.
    Gaussian,
    /// Fourth-order signed indicator `1_{[-a,a]} - 1_{[-b,-a) ∪ (a,b]}` (d = 1).
    FourthOrderSigned,
}

impl BuiltinKernel {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinKernel::Uniform => "uniform",
            BuiltinKernel::Epanechnikov => "epanechnikov",
            BuiltinKernel::Gaussian => "gaussian",
            BuiltinKernel::FourthOrderSigned => "fourth_order_signed",
        }
    }
}

/// Interval half-widths of the fourth-order signed indicator kernel. With
/// `b = 2a - 1/2` the kernel integrates to one and its second and third
/// moments vanish along with the first.
pub fn fourth_order_bounds() -> (f64, f64) {
    let c1 = 2f64.powf(1.0 / 3.0);
    let c2 = 2f64.powf(2.0 / 3.0);
    let a = c1 / 6.0 + c2 / 12.0 + 1.0 / 3.0;
    let b = c1 / 3.0 + c2 / 6.0 + 1.0 / 6.0;
    (a, b)
}

/// One-dimensional profile of a tensor-product kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Profile {
    UniformBox,
    Epanechnikov,
    Gaussian,
}

impl Profile {
    fn eval(self, z: f64) -> f64 {
        match self {
            Profile::UniformBox => {
                if z.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Epanechnikov => {
                if z.abs() <= 1.0 {
                    0.75 * (1.0 - z * z)
                } else {
                    0.0
                }
            }
            Profile::Gaussian => (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

/// Signed union of disjoint bounded intervals with constant values, the
/// piecewise-constant kernel family on the line. The classical signed
/// indicator case takes values `+1` and `-1`.
#[derive(Clone, Debug)]
pub struct SignedIndicatorKernel {
    /// Disjoint `(lo, hi, value)` pieces sorted by `lo`.
    pieces: Vec<(f64, f64, f64)>,
}

impl SignedIndicatorKernel {
    /// Validates disjointness and the unit-integral normalization.
    pub fn new(mut pieces: Vec<(f64, f64, f64)>) -> Result<SignedIndicatorKernel> {
        if pieces.is_empty() {
            return Err(Error::config("interval kernel needs at least one piece"));
        }
        for &(lo, hi, value) in &pieces {
            if !(lo.is_finite() && hi.is_finite() && value.is_finite()) {
                return Err(Error::config("interval kernel pieces must be finite"));
            }
            if hi <= lo {
                return Err(Error::config(format!(
                    "interval kernel piece [{lo}, {hi}] is empty or reversed"
                )));
            }
            if value == 0.0 {
                return Err(Error::config("interval kernel piece value must be nonzero"));
            }
        }
        pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
        for pair in pieces.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::config(format!(
                    "interval kernel pieces [{}, {}] and [{}, {}] overlap",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        let integral: f64 = pieces.iter().map(|&(lo, hi, v)| v * (hi - lo)).sum();
        if (integral - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "interval kernel must integrate to 1, got {integral}"
            )));
        }
        Ok(SignedIndicatorKernel { pieces })
    }

    pub fn eval(&self, z: f64) -> f64 {
        for &(lo, hi, value) in &self.pieces {
            if z >= lo && z <= hi {
                return value;
            }
        }
        0.0
    }

    pub fn pieces(&self) -> &[(f64, f64, f64)] {
        &self.pieces
    }

    /// Total length of the region where the kernel is positive.
    pub fn positive_measure(&self) -> f64 {
        self.pieces.iter().filter(|p| p.2 > 0.0).map(|p| p.1 - p.0).sum()
    }

    /// Total length of the region where the kernel is negative.
    pub fn negative_measure(&self) -> f64 {
        self.pieces.iter().filter(|p| p.2 < 0.0).map(|p| p.1 - p.0).sum()
    }

    /// True when the kernel takes only the values `+1` and `-1` on its support.
    pub fn is_plus_minus_one(&self) -> bool {
        self.pieces.iter().all(|p| p.2 == 1.0 || p.2 == -1.0)
    }
}

#[derive(Clone, Debug)]
enum KernelForm {
    Product(Profile),
    Indicator(SignedIndicatorKernel),
}

/// An evaluable kernel with exact metadata.
#[derive(Clone, Debug)]
pub struct Kernel {
    form: KernelForm,
    spec: KernelSpec,
    d: usize,
    support_radius: f64,
    truncation_radius: f64,
    sup_norm: f64,
    order: Option<u32>,
    lambda_splus: f64,
    lambda_sminus: f64,
    verified: bool,
}

impl Kernel {
    pub fn eval(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.d);
        match &self.form {
            KernelForm::Product(profile) => {
                let mut k = 1.0;
                for &zj in z {
                    k *= profile.eval(zj);
                    if k == 0.0 {
                        return 0.0;
                    }
                }
                k
            }
            KernelForm::Indicator(ind) => ind.eval(z[0]),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Per-axis half-width outside which the kernel vanishes; infinite for
    /// the Gaussian family.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Finite per-axis half-width used for quadrature; equals the support
    /// radius except for unbounded kernels, which are cut where their value
    /// drops below `1e-12`.
    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn order(&self) -> Option<u32> {
        self.order
    }

    pub fn lambda_splus(&self) -> f64 {
        self.lambda_splus
    }

    pub fn lambda_sminus(&self) -> f64 {
        self.lambda_sminus
    }

    pub fn is_nonnegative(&self) -> bool {
        self.lambda_sminus == 0.0
    }

    /// Built-ins and verified custom kernels carry trusted metadata.
    pub fn is_verified(&self) -> bool {
        self.verified
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn name(&self) -> String {
        match &self.spec {
            KernelSpec::Builtin { name, .. } => name.name().to_string(),
            KernelSpec::Custom { .. } => "custom_intervals".to_string(),
        }
    }

    pub fn as_signed_indicator(&self) -> Option<&SignedIndicatorKernel> {
        match &self.form {
            KernelForm::Indicator(ind) => Some(ind),
            KernelForm::Product(_) => None,
        }
    }

    /// Accepts the order certified by a passing verification report.
    pub fn assume_order(mut self, report: &OrderReport) -> Result<Kernel> {
        if !report.pass {
            return Err(Error::input(
                "cannot assume an order from a failing verification report",
            ));
        }
        self.order = Some(report.p);
        self.verified = true;
        Ok(self)
    }

    /// Sorted panel edges for one axis, splitting the truncated support at
    /// every breakpoint of the kernel so each panel is analytic.
    pub fn axis_panel_edges(&self) -> Vec<f64> {
        match &self.form {
            KernelForm::Product(Profile::UniformBox) => vec![-0.5, 0.5],
            KernelForm::Product(Profile::Epanechnikov) => vec![-1.0, 1.0],
            KernelForm::Product(Profile::Gaussian) => {
                vec![-self.truncation_radius, self.truncation_radius]
            }
            KernelForm::Indicator(ind) => {
                let mut edges = Vec::new();
                for &(lo, hi, _) in ind.pieces() {
                    edges.push(lo);
                    edges.push(hi);
                }
                edges.sort_by(f64::total_cmp);
                edges.dedup();
                edges
            }
        }
    }

    /// Tensor quadrature grid over the truncated support.
    pub fn quad_grid(&self, nodes_per_panel: usize) -> TensorGrid {
        let edges = self.axis_panel_edges();
        let axis = Axis::from_panels(&edges, nodes_per_panel);
        TensorGrid::new(vec![axis; self.d])
    }

    /// `∫ K^2` over the truncated support.
    pub fn l2_norm_sq(&self, nodes_per_panel: usize) -> f64 {
        self.quad_grid(nodes_per_panel).integrate(|z| {
            let k = self.eval(z);
            k * k
        })
    }
}

/// Serializable kernel description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Builtin {
        name: BuiltinKernel,
        d: usize,
    },
    /// Piecewise-constant kernel given by `(lo, hi, value)` intervals; d = 1.
    Custom {
        custom: CustomKernelSpec,
        d: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CustomKernelSpec {
    pub intervals: Vec<(f64, f64, f64)>,
}

/// Builds a kernel from its serializable description.
pub fn from_spec(spec: &KernelSpec) -> Result<Kernel> {
    match spec {
        KernelSpec::Builtin { name, d } => make_builtin(*name, *d),
        KernelSpec::Custom { custom, d } => {
            if *d != 1 {
                return Err(Error::config("interval kernels are one-dimensional"));
            }
            make_custom_intervals(custom.intervals.clone())
        }
    }
}

/// Builds one of the built-in kernels on `R^d`.
pub fn make_builtin(name: BuiltinKernel, d: usize) -> Result<Kernel> {
    if d == 0 {
        return Err(Error::config("kernel dimension must be at least 1"));
    }
    let spec = KernelSpec::Builtin { name, d };
    let kernel = match name {
        BuiltinKernel::Uniform => Kernel {
            form: KernelForm::Product(Profile::UniformBox),
            spec,
            d,
            support_radius: 0.5,
            truncation_radius: 0.5,
            sup_norm: 1.0,
            order: Some(2),
            lambda_splus: 1.0,
            lambda_sminus: 0.0,
            verified: true,
        },
        BuiltinKernel::Epanechnikov => Kernel {
            form: KernelForm::Product(Profile::Epanechnikov),
            spec,
            d,
            support_radius: 1.0,
            truncation_radius: 1.0,
            sup_norm: 0.75f64.powi(d as i32),
            order: Some(2),
            lambda_splus: 2f64.powi(d as i32),
            lambda_sminus: 0.0,
            verified: true,
        },
        BuiltinKernel::Gaussian => {
            // Solve (2*pi)^{-d/2} exp(-r^2/2) = cutoff for the box half-width.
            let two_pi = 2.0 * std::f64::consts::PI;
            let r2 = -2.0 * TRUNCATION_CUTOFF.ln() - d as f64 * two_pi.ln();
            Kernel {
                form: KernelForm::Product(Profile::Gaussian),
                spec,
                d,
                support_radius: f64::INFINITY,
                truncation_radius: r2.sqrt(),
                sup_norm: two_pi.powf(-(d as f64) / 2.0),
                order: Some(2),
                lambda_splus: f64::INFINITY,
                lambda_sminus: 0.0,
                verified: true,
            }
        }
        BuiltinKernel::FourthOrderSigned => {
            if d != 1 {
                return Err(Error::config(
                    "the fourth-order signed kernel is one-dimensional",
                ));
            }
            let (a, b) = fourth_order_bounds();
            let ind = SignedIndicatorKernel::new(vec![
                (-b, -a, -1.0),
                (-a, a, 1.0),
                (a, b, -1.0),
            ])?;
            let (lp, lm) = (ind.positive_measure(), ind.negative_measure());
            Kernel {
                form: KernelForm::Indicator(ind),
                spec,
                d,
                support_radius: b,
                truncation_radius: b,
                sup_norm: 1.0,
                order: Some(4),
                lambda_splus: lp,
                lambda_sminus: lm,
                verified: true,
            }
        }
    };
    Ok(kernel)
}

/// Builds a piecewise-constant kernel from `(lo, hi, value)` intervals.
/// The kernel starts unverified with unknown order; run [`verify_order`] and
/// [`Kernel::assume_order`] to certify it.
pub fn make_custom_intervals(pieces: Vec<(f64, f64, f64)>) -> Result<Kernel> {
    let ind = SignedIndicatorKernel::new(pieces)?;
    let radius = ind
        .pieces()
        .iter()
        .flat_map(|&(lo, hi, _)| [lo.abs(), hi.abs()])
        .fold(0.0f64, f64::max);
    let sup_norm = ind.pieces().iter().map(|p| p.2.abs()).fold(0.0f64, f64::max);
    let (lp, lm) = (ind.positive_measure(), ind.negative_measure());
    let spec = KernelSpec::Custom {
        custom: CustomKernelSpec {
            intervals: ind.pieces().to_vec(),
        },
        d: 1,
    };
    Ok(Kernel {
        form: KernelForm::Indicator(ind),
        spec,
        d: 1,
        support_radius: radius,
        truncation_radius: radius,
        sup_norm,
        order: None,
        lambda_splus: lp,
        lambda_sminus: lm,
        verified: false,
    })
}

/// Result of the numerical moment verification for a claimed order `p`.
#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    pub p: u32,
    pub tol: f64,
    /// `moments[j][s-1]` is the largest magnitude of the inner integral
    /// `∫ y_j^s K(y) dy_j` over a grid of the remaining coordinates,
    /// for `s = 1..p-1`.
    pub moments: Vec<Vec<f64>>,
    /// Largest over coordinates of `∫ |y_j|^p |K(y)| dy`.
    pub p_abs_moment: f64,
    pub pass: bool,
}

/// Checks the order-`p` moment conditions: for every coordinate `j` and every
/// `1 <= s <= p-1`, the inner integral `∫ y_j^s K(y) dy_j` must vanish (as a
/// function of the remaining coordinates, probed on a tensor grid), and the
/// `p`-th absolute moment must be finite.
pub fn verify_order(k: &Kernel, p: u32, tol: f64) -> Result<OrderReport> {
    if p < 2 {
        return Err(Error::input("kernel order must be at least 2"));
    }
    let d = k.dim();
    let edges = k.axis_panel_edges();
    let nodes = 64;
    let radius = k.truncation_radius();
    // Interior probe offsets for the coordinates not being integrated.
    let probe_fractions = [-0.35, 0.0, 0.4];

    let mut moments = vec![vec![0.0f64; (p - 1) as usize]; d];
    let mut point = vec![0.0f64; d];
    for (j, axis_moments) in moments.iter_mut().enumerate() {
        let mut probe = |others: &[f64], point: &mut [f64]| -> Result<()> {
            let mut oi = 0;
            for (t, pt) in point.iter_mut().enumerate() {
                if t != j {
                    *pt = others[oi];
                    oi += 1;
                }
            }
            for s in 1..p {
                let value = inner_moment_checked(k, j, s, &edges, nodes, point)?;
                let slot = &mut axis_moments[(s - 1) as usize];
                if value.abs() > *slot {
                    *slot = value.abs();
                }
            }
            Ok(())
        };
        if d == 1 {
            probe(&[], &mut point)?;
        } else {
            let offsets: Vec<f64> = probe_fractions.iter().map(|f| f * radius).collect();
            let mut others = vec![0.0f64; d - 1];
            let mut idx = vec![0usize; d - 1];
            let total = offsets.len().pow((d - 1) as u32);
            for _ in 0..total {
                for (t, &i) in idx.iter().enumerate() {
                    others[t] = offsets[i];
                }
                probe(&others, &mut point)?;
                for t in (0..d - 1).rev() {
                    idx[t] += 1;
                    if idx[t] < offsets.len() {
                        break;
                    }
                    idx[t] = 0;
                }
            }
        }
    }

    let grid = k.quad_grid(nodes);
    let mut p_abs_moment = 0.0f64;
    for j in 0..d {
        let m = grid.integrate(|z| z[j].abs().powi(p as i32) * k.eval(z).abs());
        p_abs_moment = p_abs_moment.max(m);
    }

    let pass = moments
        .iter()
        .flatten()
        .all(|m| m.abs() <= tol)
        && p_abs_moment.is_finite();
    Ok(OrderReport {
        p,
        tol,
        moments,
        p_abs_moment,
        pass,
    })
}

/// Inner integral `∫ y_j^s K(y) dy_j` at fixed remaining coordinates, with a
/// node-doubling consistency check so silent quadrature failure is impossible.
fn inner_moment_checked(
    k: &Kernel,
    j: usize,
    s: u32,
    edges: &[f64],
    nodes: usize,
    point: &mut [f64],
) -> Result<f64> {
    let coarse = inner_moment(k, j, s, edges, nodes, point);
    let fine = inner_moment(k, j, s, edges, 2 * nodes, point);
    let residual = (fine - coarse).abs();
    if residual > 1e-8 * (1.0 + fine.abs()) {
        return Err(Error::numeric(format!(
            "moment quadrature did not converge (order {s}, axis {j}, residual {residual:.3e})"
        )));
    }
    Ok(fine)
}

fn inner_moment(
    k: &Kernel,
    j: usize,
    s: u32,
    edges: &[f64],
    nodes: usize,
    point: &mut [f64],
) -> f64 {
    let axis = Axis::from_panels(edges, nodes);
    let mut acc = 0.0;
    for (&y, &w) in axis.points.iter().zip(&axis.weights) {
        point[j] = y;
        acc += w * y.powi(s as i32) * k.eval(point);
    }
    acc
}

/// Lebesgue measures `(λ(S₊), λ(S₋))` of the kernel's positive and negative
/// regions. Exact from metadata for built-ins and interval kernels.
pub fn support_measures(k: &Kernel) -> (f64, f64) {
    (k.lambda_splus, k.lambda_sminus)
}

/// Grid estimate of the support measures with its resolution-based
/// uncertainty, used to cross-check metadata. Counts the sign of the kernel
/// on `points_per_axis^d` cells over the truncated support box.
pub fn estimate_support_measures(k: &Kernel, points_per_axis: usize) -> ((f64, f64), f64) {
    let d = k.dim();
    let r = k.truncation_radius();
    let h = 2.0 * r / points_per_axis as f64;
    let cell = h.powi(d as i32);
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut point = vec![0.0f64; d];
    let mut idx = vec![0usize; d];
    let total = points_per_axis.pow(d as u32);
    for _ in 0..total {
        for t in 0..d {
            point[t] = -r + (idx[t] as f64 + 0.5) * h;
        }
        let v = k.eval(&point);
        if v > 0.0 {
            pos += cell;
        } else if v < 0.0 {
            neg += cell;
        }
        for t in (0..d).rev() {
            idx[t] += 1;
            if idx[t] < points_per_axis {
                break;
            }
            idx[t] = 0;
        }
    }
    // One boundary layer of cells per axis bounds the discretization error.
    let uncertainty = 2.0 * d as f64 * h * (2.0 * r).powi(d as i32 - 1);
    ((pos, neg), uncertainty)
}
