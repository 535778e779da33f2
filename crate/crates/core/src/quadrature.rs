//! Gauss rules on the reference triangle and edge, and r-weighted integration.
//!
//! Triangle rules are collapsed tensor rules: Gauss–Jacobi in one direction and
//! Gauss–Legendre in the other, so every point is strictly interior.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{FemError, Result};
use crate::geometry::{AffineMap, Point};

pub const MAX_TRIANGLE_EXACTNESS: u32 = 20;
pub const MAX_EDGE_POINTS: usize = 32;

/// Points and weights on the reference triangle (0,0), (1,0), (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reference-triangle integral of `f(ξ, η)`.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Gauss–Legendre points and weights on (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exactness: u32,
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(s, w)| w * f(*s)).sum()
    }
}

/// Gauss–Jacobi nodes and weights on [-1, 1] for the weight (1−t)^α (1+t)^β.
fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let ab = alpha + beta;
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let denom = (2.0 * kf + ab) * (2.0 * kf + ab + 2.0);
        jm[(k, k)] = if denom == 0.0 {
            0.0
        } else {
            (beta * beta - alpha * alpha) / denom
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + ab;
            let num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
            let den = s * s * (s + 1.0) * (s - 1.0);
            let b = (num / den).sqrt();
            jm[(k, k + 1)] = b;
            jm[(k + 1, k)] = b;
        }
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma_int(alpha) * gamma_int(beta) / gamma_int(ab + 1.0);
    let eig = SymmetricEigen::new(jm);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Γ(x + 1) for non-negative integer-valued x.
fn gamma_int(x: f64) -> f64 {
    (1..=x.round() as u64).map(|i| i as f64).product()
}

/// Triangle rule integrating every polynomial of total degree ≤ `exactness`.
pub fn triangle_gauss_rule(exactness: u32) -> Result<QuadratureRule> {
    if exactness > MAX_TRIANGLE_EXACTNESS {
        return Err(FemError::UnsupportedExactness(exactness));
    }
    let n = (exactness as usize + 2) / 2;
    let (xs, wx) = gauss_jacobi(n, 0.0, 0.0);
    let (ys, wy) = gauss_jacobi(n, 1.0, 0.0);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (ty, wyi) in ys.iter().zip(&wy) {
        let y = 0.5 * (1.0 + ty);
        for (tx, wxi) in xs.iter().zip(&wx) {
            let x = 0.5 * (1.0 + tx);
            points.push([x * (1.0 - y), y]);
            weights.push(0.5 * wxi * 0.25 * wyi);
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness: (2 * n - 1) as u32,
    })
}

/// Gauss–Legendre rule with `npoints` points on (0, 1).
pub fn edge_gauss_rule(npoints: usize) -> Result<EdgeRule> {
    if npoints == 0 || npoints > MAX_EDGE_POINTS {
        return Err(FemError::InvalidEdgePoints {
            got: npoints,
            max: MAX_EDGE_POINTS,
        });
    }
    let (ts, ws) = gauss_jacobi(npoints, 0.0, 0.0);
    let mut points: Vec<f64> = ts.iter().map(|t| 0.5 * (1.0 + t)).collect();
    let mut weights: Vec<f64> = ws.iter().map(|w| 0.5 * w).collect();
    // Symmetrise so that point j and point n−1−j sum to exactly 1.
    for j in 0..npoints / 2 {
        let k = npoints - 1 - j;
        let p = 0.5 * (points[j] + 1.0 - points[k]);
        points[j] = p;
        points[k] = 1.0 - p;
        let w = 0.5 * (weights[j] + weights[k]);
        weights[j] = w;
        weights[k] = w;
    }
    if npoints % 2 == 1 {
        points[npoints / 2] = 0.5;
    }
    Ok(EdgeRule {
        points,
        weights,
        exactness: (2 * npoints - 1) as u32,
    })
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// ∫ ξ^s η^t over the reference triangle: s! t! / (s+t+2)!.
pub fn reference_monomial_integral(s: u32, t: u32) -> f64 {
    factorial(s) * factorial(t) / factorial(s + t + 2)
}

/// Closed form of ∫ ξ^s η^t (r1 ξ + r2 η + [include_one]) over the reference triangle.
pub fn exact_weighted_monomial(s: u32, t: u32, r1: f64, r2: f64, include_one: bool) -> f64 {
    let scale = factorial(s) * factorial(t) / factorial(s + t + 3);
    let one = if include_one { f64::from(s + t + 3) } else { 0.0 };
    scale * (r1 * f64::from(s + 1) + r2 * f64::from(t + 1) + one)
}

/// Σ_q w_q f(F(ξ_q, η_q)) r(ξ_q, η_q) det J over one triangle.
pub fn integrate_weighted(
    map: &AffineMap,
    rule: &QuadratureRule,
    integrand: impl Fn(Point) -> f64,
) -> Result<f64> {
    let mut sum = 0.0;
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let x = map.apply(p[0], p[1]);
        let v = integrand(x);
        if !v.is_finite() {
            return Err(FemError::NonFiniteIntegrand);
        }
        sum += w * v * x.x;
    }
    Ok(sum * map.det)
}
