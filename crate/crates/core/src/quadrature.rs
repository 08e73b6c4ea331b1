//! One-dimensional quadrature rules for observation integrals.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Equally spaced cell midpoints with equal weights.
    #[default]
    Midpoint,
    GaussLegendre,
}

/// Nodes and weights of `rule` with `n` points on `[lo, hi]`.
pub fn nodes_and_weights(rule: QuadratureRule, n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    match rule {
        QuadratureRule::Midpoint => midpoint(n, lo, hi),
        QuadratureRule::GaussLegendre => gauss_legendre(n, lo, hi),
    }
}

pub fn midpoint(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / n as f64;
    let nodes = (0..n).map(|i| lo + h * (i as f64 + 0.5)).collect();
    (nodes, vec![h; n])
}

/// Gauss–Legendre rule by Newton iteration on `P_n`, mapped to `[lo, hi]`.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = mid - half * z;
        nodes[n - 1 - i] = mid + half * z;
        weights[i] = w * half;
        weights[n - 1 - i] = w * half;
    }
    (nodes, weights)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
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
