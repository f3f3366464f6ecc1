//! Gauss–Legendre quadrature on panels and tensor grids.
//!
//! All integrands in this crate are piecewise smooth: kernels are piecewise
//! polynomial (or truncated Gaussian) and the cumulant integrands inherit
//! their breakpoints. Panels therefore split every axis at the integrand's
//! breakpoints, and plain Gauss–Legendre is used inside each panel, where the
//! integrand is analytic. Nodes are strictly interior to their panel, so
//! integrands never get evaluated on a breakpoint.

/// Gauss–Legendre nodes and weights on the reference interval `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the n-point rule by Newton iteration on the Legendre
    /// polynomial, seeded with the Chebyshev-angle approximation of the
    /// roots. Converges to machine precision in a handful of steps.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() <= 1e-15 {
                    let (_, d2) = legendre_with_derivative(n, x);
                    dp = d2;
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        // The cosine seed enumerates roots in decreasing order.
        nodes.reverse();
        weights.reverse();
        GaussLegendre { nodes, weights }
    }
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature points and weights along one axis, assembled from panels.
#[derive(Clone, Debug)]
pub struct Axis {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Axis {
    /// Builds an axis from panel edges (sorted, at least two) with
    /// `nodes_per_panel` Gauss–Legendre nodes inside each panel. Zero-length
    /// panels are skipped.
    pub fn from_panels(edges: &[f64], nodes_per_panel: usize) -> Axis {
        assert!(edges.len() >= 2, "need at least one panel");
        let rule = GaussLegendre::new(nodes_per_panel);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            assert!(hi >= lo, "panel edges must be sorted");
            if hi - lo == 0.0 {
                continue;
            }
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                points.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Axis { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates a univariate function over the axis.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&x, &w) in self.points.iter().zip(&self.weights) {
            acc += w * f(x);
        }
        acc
    }
}

/// Tensor-product grid over `d` axes. Iteration order is row major
/// (last axis fastest), which fixes the summation order and keeps every
/// integral bit-reproducible.
#[derive(Clone, Debug)]
pub struct TensorGrid {
    axes: Vec<Axis>,
}

impl TensorGrid {
    pub fn new(axes: Vec<Axis>) -> TensorGrid {
        assert!(!axes.is_empty());
        TensorGrid { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Visits every grid point with its tensor weight.
    pub fn for_each(&self, mut f: impl FnMut(&[f64], f64)) {
        let d = self.axes.len();
        let mut point = vec![0.0; d];
        let mut index = vec![0usize; d];
        let total = self.len();
        for _ in 0..total {
            let mut w = 1.0;
            for (j, axis) in self.axes.iter().enumerate() {
                point[j] = axis.points[index[j]];
                w *= axis.weights[index[j]];
            }
            f(&point, w);
            for j in (0..d).rev() {
                index[j] += 1;
                if index[j] < self.axes[j].len() {
                    break;
                }
                index[j] = 0;
            }
        }
    }

    /// Integrates a multivariate function over the grid.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each(|point, w| acc += w * f(point));
        acc
    }
}
