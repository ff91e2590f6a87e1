//! One-dimensional quadrature rules on `[0, period]`, tensorized by callers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    GaussLegendre,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub rule: QuadratureRule,
    pub period: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(rule: QuadratureRule, nodes_per_axis: usize, period: f64) -> Self {
        match rule {
            QuadratureRule::GaussLegendre => Self::gauss_legendre(nodes_per_axis, period),
            QuadratureRule::Trapezoid => Self::trapezoid(nodes_per_axis, period),
        }
    }

    /// Gauss–Legendre rule mapped from `[-1, 1]` to `[0, period]`.
    pub fn gauss_legendre(n: usize, period: f64) -> Self {
        let (x, w) = gauss_legendre_unit(n);
        let half = 0.5 * period;
        Self {
            rule: QuadratureRule::GaussLegendre,
            period,
            nodes: x.iter().map(|&t| half * (t + 1.0)).collect(),
            weights: w.iter().map(|&v| half * v).collect(),
        }
    }

    /// Periodic trapezoid (equispaced, left endpoints).
    pub fn trapezoid(n: usize, period: f64) -> Self {
        let h = period / n as f64;
        Self {
            rule: QuadratureRule::Trapezoid,
            period,
            nodes: (0..n).map(|i| i as f64 * h).collect(),
            weights: vec![h; n],
        }
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Tensor grid in `dim` dimensions as flat `(point, weight)` lists,
    /// last axis varying fastest.
    pub fn tensor(&self, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.nodes.len();
        let total = n.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut p = vec![0.0; dim];
            let mut w = 1.0;
            let mut rest = flat;
            for axis in (0..dim).rev() {
                let i = rest % n;
                rest /= n;
                p[axis] = self.nodes[i];
                w *= self.weights[i];
            }
            points.push(p);
            weights.push(w);
        }
        (points, weights)
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// by Newton iteration on the three-term Legendre recurrence.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess.
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
