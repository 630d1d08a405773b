//! Quadrature on the reference triangle and the reference edge.
//!
//! Triangle rules are collapsed tensor-product Gauss rules (Duffy map),
//! exact for the declared total degree; edge rules are Gauss--Legendre
//! on [0,1].

use crate::{Error, Result};

/// Largest supported exactness degree.
pub const MAX_EXACTNESS: usize = 60;

/// Rule on the reference triangle {x,y >= 0, x+y <= 1}; weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Rule on the reference edge [0,1]; weights sum to 1.
#[derive(Debug, Clone)]
pub struct EdgeQuadrature {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss--Legendre nodes and weights on [0,1], computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Initial guess on [-1,1].
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, t);
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[n - 1 - i] = 0.5 * (t + 1.0);
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * t * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

/// Rule exact for all bivariate polynomials of total degree <= `exactness`
/// on the reference triangle.
pub fn cell_quadrature(exactness: usize) -> Result<QuadratureRule> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::Parameter(format!(
            "cell quadrature exactness {exactness} exceeds max {MAX_EXACTNESS}"
        )));
    }
    // Duffy map (x, y) = (u, v(1-u)): the Jacobian (1-u) raises the u-degree
    // by one.
    let nu = (exactness + 1) / 2 + 1;
    let nv = exactness / 2 + 1;
    let (xu, wu) = gauss_legendre_01(nu);
    let (xv, wv) = gauss_legendre_01(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (i, &u) in xu.iter().enumerate() {
        for (j, &v) in xv.iter().enumerate() {
            points.push([u, v * (1.0 - u)]);
            weights.push(wu[i] * wv[j] * (1.0 - u));
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Rule exact for univariate polynomials of degree <= `exactness` on [0,1].
pub fn face_quadrature(exactness: usize) -> Result<EdgeQuadrature> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::Parameter(format!(
            "face quadrature exactness {exactness} exceeds max {MAX_EXACTNESS}"
        )));
    }
    let (points, weights) = gauss_legendre_01(exactness / 2 + 1);
    Ok(EdgeQuadrature { points, weights })
}

/// Exact moment of x^a y^b over the reference triangle: a! b! / (a+b+2)!.
pub fn triangle_moment(a: usize, b: usize) -> f64 {
    let mut result = 1.0;
    // a! b! / (a+b+2)! computed as a running product to avoid overflow.
    let mut denom_factor = 1.0;
    for i in 1..=(a + b + 2) {
        denom_factor *= i as f64;
    }
    for i in 1..=a {
        result *= i as f64;
    }
    for i in 1..=b {
        result *= i as f64;
    }
    result / denom_factor
}
