//! Orthonormal polynomial bases on cells and faces, plus L2-orthogonal
//! projections.
//!
//! Cells use a warped tensor-product (Dubiner-type) basis in the reference
//! coordinates of the affine map, faces use shifted Legendre polynomials.
//! Both are evaluated by stable three-term recurrences, so the Gram matrix
//! is already diagonal up to roundoff and the Cholesky orthonormalization
//! only applies a well-conditioned correction. This keeps evaluation
//! accurate near machine precision even at high polynomial degree, which a
//! monomial representation cannot do.

use crate::quadrature::{cell_quadrature, face_quadrature};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Dimension of the bivariate polynomial space of total degree `m`.
pub fn poly_dim_2d(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Quadrature points and weights mapped to a physical triangle.
pub fn cell_quad_physical(
    verts: &[[f64; 2]; 3],
    exactness: usize,
) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    let rule = cell_quadrature(exactness)?;
    let [a, b, c] = *verts;
    let jac2 = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
    let points = rule
        .points
        .iter()
        .map(|&[u, v]| {
            [
                a[0] + u * (b[0] - a[0]) + v * (c[0] - a[0]),
                a[1] + u * (b[1] - a[1]) + v * (c[1] - a[1]),
            ]
        })
        .collect();
    let weights = rule.weights.iter().map(|w| w * jac2).collect();
    Ok((points, weights))
}

fn orthonormalize(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = gram.nrows();
    let mut coeffs = DMatrix::identity(dim, dim);
    // Repeated Cholesky refinement; twice is enough in practice, the loop
    // guard handles ill-conditioned Gram matrices.
    for _ in 0..4 {
        let g = &coeffs * gram * coeffs.transpose();
        let dev = (&g - DMatrix::identity(dim, dim)).amax();
        if dev < 1e-14 {
            break;
        }
        let chol = nalgebra::Cholesky::new(g)
            .ok_or_else(|| Error::Geometry("Gram matrix not positive definite".into()))?;
        let l = chol.l();
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(dim, dim))
            .ok_or_else(|| Error::Geometry("singular Gram factor".into()))?;
        coeffs = linv * coeffs;
    }
    Ok(coeffs)
}

/// Values and `z`-derivatives up to second order of the Jacobi polynomials
/// P_n^{(alpha,0)} for n = 0..=nmax, via the standard three-term recurrence
/// and its differentiated forms.
fn jacobi_table(alpha: f64, nmax: usize, z: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push([1.0, 0.0, 0.0]);
    if nmax == 0 {
        return out;
    }
    out.push([(alpha + 2.0) / 2.0 * z + alpha / 2.0, (alpha + 2.0) / 2.0, 0.0]);
    for n in 2..=nmax {
        let nf = n as f64;
        // Coefficients of the recurrence
        //   c0 P_n = (c1 z + c2) P_{n-1} - c3 P_{n-2}   (beta = 0).
        let c0 = 2.0 * nf * (nf + alpha) * (2.0 * nf + alpha - 2.0);
        let s = 2.0 * nf + alpha - 1.0;
        let c1 = s * (2.0 * nf + alpha) * (2.0 * nf + alpha - 2.0);
        let c2 = s * alpha * alpha;
        let c3 = 2.0 * (nf + alpha - 1.0) * (nf - 1.0) * (2.0 * nf + alpha);
        let [p1, d1, s1] = out[n - 1];
        let [p2, d2, s2] = out[n - 2];
        out.push([
            ((c1 * z + c2) * p1 - c3 * p2) / c0,
            (c1 * p1 + (c1 * z + c2) * d1 - c3 * d2) / c0,
            (2.0 * c1 * d1 + (c1 * z + c2) * s1 - c3 * s2) / c0,
        ]);
    }
    out
}

/// Homogenized Legendre polynomials p_n(xi, w) = w^n P_n(2 xi / w - 1) for
/// n = 0..=nmax, with partial derivatives up to second order in (xi, w).
/// Each entry stores [p, p_xi, p_w, p_xixi, p_xiw, p_ww]. The recurrence is
/// the Legendre one multiplied through by w^{n+1}, so it stays polynomial
/// and needs no division by w.
fn homogeneous_legendre_table(nmax: usize, xi: f64, w: f64) -> Vec<[f64; 6]> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    if nmax == 0 {
        return out;
    }
    out.push([2.0 * xi - w, 2.0, -1.0, 0.0, 0.0, 0.0]);
    let u = 2.0 * xi - w;
    for n in 1..nmax {
        let nf = n as f64;
        let (a, b) = ((2.0 * nf + 1.0) / (nf + 1.0), nf / (nf + 1.0));
        let p1 = out[n];
        let p2 = out[n - 1];
        out.push([
            a * u * p1[0] - b * w * w * p2[0],
            a * (2.0 * p1[0] + u * p1[1]) - b * w * w * p2[1],
            a * (-p1[0] + u * p1[2]) - b * (2.0 * w * p2[0] + w * w * p2[2]),
            a * (4.0 * p1[1] + u * p1[3]) - b * w * w * p2[3],
            a * (2.0 * p1[2] - p1[1] + u * p1[4]) - b * (2.0 * w * p2[1] + w * w * p2[4]),
            a * (-2.0 * p1[2] + u * p1[5])
                - b * (2.0 * p2[0] + 4.0 * w * p2[2] + w * w * p2[5]),
        ]);
    }
    out
}

/// Orthonormal basis of P^degree on a triangle, represented over a
/// Dubiner-type warped tensor-product basis in the reference coordinates of
/// the cell's affine map.
#[derive(Debug, Clone)]
pub struct CellBasis {
    pub degree: usize,
    pub dim: usize,
    pub verts: [[f64; 2]; 3],
    pub area: f64,
    tinv: [[f64; 2]; 2],
    pairs: Vec<(usize, usize)>,
    coeffs: DMatrix<f64>,
}

/// Reference values and derivatives of the raw (pre-orthonormalization)
/// Dubiner-type basis q_{a,b}(xi, eta) = p_a(xi, 1 - eta) P_b^{(2a+1,0)}(2
/// eta - 1) at one point, as [q, q_xi, q_eta, q_xixi, q_xieta, q_etaeta].
fn dubiner_eval(pairs: &[(usize, usize)], degree: usize, xi: f64, eta: f64) -> Vec<[f64; 6]> {
    let w = 1.0 - eta;
    let z = 2.0 * eta - 1.0;
    let p = homogeneous_legendre_table(degree, xi, w);
    let jac: Vec<Vec<[f64; 3]>> = (0..=degree)
        .map(|a| jacobi_table(2.0 * a as f64 + 1.0, degree - a, z))
        .collect();
    pairs
        .iter()
        .map(|&(a, b)| {
            let pa = p[a];
            let [j, dj, sj] = jac[a][b];
            // d/deta of p_a(xi, 1 - eta) flips the sign of the w-derivative;
            // d/deta of the Jacobi factor brings dz/deta = 2.
            [
                pa[0] * j,
                pa[1] * j,
                -pa[2] * j + pa[0] * 2.0 * dj,
                pa[3] * j,
                -pa[4] * j + pa[1] * 2.0 * dj,
                pa[5] * j - 4.0 * pa[2] * dj + pa[0] * 4.0 * sj,
            ]
        })
        .collect()
}

impl CellBasis {
    pub fn new(verts: &[[f64; 2]; 3], degree: usize) -> Result<Self> {
        let [a, b, c] = *verts;
        let jac = [
            [b[0] - a[0], c[0] - a[0]],
            [b[1] - a[1], c[1] - a[1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < f64::MIN_POSITIVE || !det.is_finite() {
            return Err(Error::Geometry("degenerate triangle".into()));
        }
        let tinv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        let dim = poly_dim_2d(degree);
        let mut pairs = Vec::with_capacity(dim);
        for d in 0..=degree {
            for a in (0..=d).rev() {
                pairs.push((a, d - a));
            }
        }
        // Gram of the raw basis over the physical cell equals |det| times
        // the reference-triangle Gram, which is diagonal, so the
        // orthonormalization below only rescales.
        let rule = cell_quadrature(2 * degree)?;
        let mut gram = DMatrix::zeros(dim, dim);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let vals = dubiner_eval(&pairs, degree, p[0], p[1]);
            let m = DVector::from_iterator(dim, vals.iter().map(|v| v[0]));
            gram.syger(w * det.abs(), &m, &m, 1.0);
        }
        gram.fill_upper_triangle_with_lower_triangle();
        let coeffs = orthonormalize(&gram)?;
        Ok(Self {
            degree,
            dim,
            verts: *verts,
            area: 0.5 * det.abs(),
            tinv,
            pairs,
            coeffs,
        })
    }

    fn ref_coords(&self, p: [f64; 2]) -> [f64; 2] {
        let d = [p[0] - self.verts[0][0], p[1] - self.verts[0][1]];
        [
            self.tinv[0][0] * d[0] + self.tinv[0][1] * d[1],
            self.tinv[1][0] * d[0] + self.tinv[1][1] * d[1],
        ]
    }

    /// Values of all basis functions at a physical point.
    pub fn eval(&self, p: [f64; 2]) -> DVector<f64> {
        let [x, y] = self.ref_coords(p);
        let vals = dubiner_eval(&self.pairs, self.degree, x, y);
        let m = DVector::from_iterator(self.dim, vals.iter().map(|v| v[0]));
        &self.coeffs * m
    }

    /// Physical gradients (d/dx, d/dy) of all basis functions at a point.
    pub fn eval_grad(&self, p: [f64; 2]) -> (DVector<f64>, DVector<f64>) {
        let [x, y] = self.ref_coords(p);
        let vals = dubiner_eval(&self.pairs, self.degree, x, y);
        let du = DVector::from_iterator(self.dim, vals.iter().map(|v| v[1]));
        let dv = DVector::from_iterator(self.dim, vals.iter().map(|v| v[2]));
        let (du, dv) = (&self.coeffs * du, &self.coeffs * dv);
        (
            &du * self.tinv[0][0] + &dv * self.tinv[1][0],
            du * self.tinv[0][1] + dv * self.tinv[1][1],
        )
    }

    /// Physical Laplacians of all basis functions at a point.
    pub fn eval_laplacian(&self, p: [f64; 2]) -> DVector<f64> {
        let [x, y] = self.ref_coords(p);
        let t = &self.tinv;
        let q = [
            [
                t[0][0] * t[0][0] + t[0][1] * t[0][1],
                t[0][0] * t[1][0] + t[0][1] * t[1][1],
            ],
            [
                t[1][0] * t[0][0] + t[1][1] * t[0][1],
                t[1][0] * t[1][0] + t[1][1] * t[1][1],
            ],
        ];
        let vals = dubiner_eval(&self.pairs, self.degree, x, y);
        let lap = DVector::from_iterator(
            self.dim,
            vals.iter()
                .map(|v| q[0][0] * v[3] + 2.0 * q[0][1] * v[4] + q[1][1] * v[5]),
        );
        &self.coeffs * lap
    }

    /// L2-orthogonal projection of `f` onto the basis span: since the basis
    /// is orthonormal, the coefficients are inner products.
    pub fn project(&self, f: &dyn Fn([f64; 2]) -> f64, exactness: usize) -> Result<DVector<f64>> {
        let (points, weights) = cell_quad_physical(&self.verts, exactness)?;
        let mut out = DVector::zeros(self.dim);
        for (p, w) in points.iter().zip(&weights) {
            out += self.eval(*p) * (w * f(*p));
        }
        Ok(out)
    }

    /// Gram matrix of the basis recomputed with the given quadrature
    /// exactness; equals identity up to roundoff.
    pub fn gram(&self, exactness: usize) -> Result<DMatrix<f64>> {
        let (points, weights) = cell_quad_physical(&self.verts, exactness)?;
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for (p, w) in points.iter().zip(&weights) {
            let v = self.eval(*p);
            g.syger(*w, &v, &v, 1.0);
        }
        // syger fills the lower triangle only.
        g.fill_upper_triangle_with_lower_triangle();
        Ok(g)
    }
}

/// Legendre polynomials and their first derivatives at `s` for orders
/// 0..=nmax.
fn legendre_table(nmax: usize, s: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push([1.0, 0.0]);
    if nmax == 0 {
        return out;
    }
    out.push([s, 1.0]);
    for n in 1..nmax {
        let nf = n as f64;
        let (a, b) = ((2.0 * nf + 1.0) / (nf + 1.0), nf / (nf + 1.0));
        let [p1, d1] = out[n];
        let [p2, d2] = out[n - 1];
        out.push([a * s * p1 - b * p2, a * (p1 + s * d1) - b * d2]);
    }
    out
}

/// Orthonormal basis of P^degree on a mesh face, built from Legendre
/// polynomials in the arc-length parameter mapped to [-1, 1].
#[derive(Debug, Clone)]
pub struct FaceBasis {
    pub degree: usize,
    pub dim: usize,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub length: f64,
    coeffs: DMatrix<f64>,
}

impl FaceBasis {
    pub fn new(start: [f64; 2], end: [f64; 2], degree: usize) -> Result<Self> {
        let length = ((end[0] - start[0]).powi(2) + (end[1] - start[1]).powi(2)).sqrt();
        if length <= 0.0 || !length.is_finite() {
            return Err(Error::Geometry("degenerate face".into()));
        }
        let dim = degree + 1;
        let rule = face_quadrature(2 * degree)?;
        let mut gram = DMatrix::zeros(dim, dim);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let vals = legendre_table(degree, 2.0 * t - 1.0);
            let m = DVector::from_iterator(dim, vals.iter().map(|v| v[0]));
            gram.syger(w * length, &m, &m, 1.0);
        }
        gram.fill_upper_triangle_with_lower_triangle();
        let coeffs = orthonormalize(&gram)?;
        Ok(Self {
            degree,
            dim,
            start,
            end,
            length,
            coeffs,
        })
    }

    /// Physical point at parameter `t` in [0,1].
    pub fn point(&self, t: f64) -> [f64; 2] {
        [
            self.start[0] + t * (self.end[0] - self.start[0]),
            self.start[1] + t * (self.end[1] - self.start[1]),
        ]
    }

    /// Unit tangent in the direction of increasing parameter.
    pub fn tangent(&self) -> [f64; 2] {
        [
            (self.end[0] - self.start[0]) / self.length,
            (self.end[1] - self.start[1]) / self.length,
        ]
    }

    /// Values of all basis functions at parameter `t`.
    pub fn eval_t(&self, t: f64) -> DVector<f64> {
        let vals = legendre_table(self.degree, 2.0 * t - 1.0);
        let m = DVector::from_iterator(self.dim, vals.iter().map(|v| v[0]));
        &self.coeffs * m
    }

    /// Arc-length derivatives of all basis functions at parameter `t`.
    pub fn eval_deriv_arc(&self, t: f64) -> DVector<f64> {
        let vals = legendre_table(self.degree, 2.0 * t - 1.0);
        // ds/dt = 2, dt/(arc length) = 1/length.
        let m = DVector::from_iterator(self.dim, vals.iter().map(|v| 2.0 * v[1]));
        (&self.coeffs * m) / self.length
    }

    /// L2-orthogonal projection of `f` (evaluated at physical points) onto
    /// the basis span.
    pub fn project(&self, f: &dyn Fn([f64; 2]) -> f64, exactness: usize) -> Result<DVector<f64>> {
        let rule = face_quadrature(exactness)?;
        let mut out = DVector::zeros(self.dim);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            out += self.eval_t(t) * (w * self.length * f(self.point(t)));
        }
        Ok(out)
    }

    pub fn gram(&self, exactness: usize) -> Result<DMatrix<f64>> {
        let rule = face_quadrature(exactness)?;
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let v = self.eval_t(t);
            g.syger(w * self.length, &v, &v, 1.0);
        }
        g.fill_upper_triangle_with_lower_triangle();
        Ok(g)
    }
}
