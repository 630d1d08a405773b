//! Per-cell operators: gradient reconstruction, stabilization, local
//! bilinear form, and the reduction interpolator.

use hho::basis::cell_quad_physical;
use hho::mesh::{build_connectivity, FaceKind, Mesh};
use hho::quadrature::face_quadrature;
use hho::solver::{Discretization, ProblemSpec};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

fn reference_triangle_mesh() -> Mesh {
    let labels: BTreeMap<(usize, usize), FaceKind> = [(0, 1), (1, 2), (0, 2)]
        .iter()
        .map(|&e| (e, FaceKind::Dirichlet))
        .collect();
    build_connectivity(
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![[0, 1, 2]],
        &labels,
        vec![0],
    )
    .unwrap()
}

fn disc_on_reference() -> (Mesh, ProblemSpec) {
    let mesh = reference_triangle_mesh();
    let problem = ProblemSpec::poisson_unit(Box::new(|_| 0.0));
    (mesh, problem)
}

#[test]
fn reconstruction_of_constants_is_constant() {
    let (mesh, problem) = disc_on_reference();
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let ops = &disc.local[0];
    let one = ops.reduce_interpolate(&|_| 1.0, &disc.face_bases).unwrap();
    let rec = ops.reconstruct(&one);
    for p in [[0.2, 0.2], [0.6, 0.1], [0.1, 0.7]] {
        let v = ops.basis.eval(p).dot(&rec);
        assert!((v - 1.0).abs() < 1e-12, "at {p:?}: {v}");
    }
}

#[test]
fn reconstruction_reproduces_degree_kp1_polynomials() {
    // R(I(w)) = w for w in P^{k+1}: the elliptic projection is exact there.
    let (mesh, problem) = disc_on_reference();
    for k in 0..=3usize {
        let disc = Discretization::new(&mesh, &problem, k).unwrap();
        let ops = &disc.local[0];
        let w = move |p: [f64; 2]| (p[0] - 2.0 * p[1] + 0.5).powi(k as i32 + 1);
        let iw = ops.reduce_interpolate(&w, &disc.face_bases).unwrap();
        let rec = ops.reconstruct(&iw);
        for p in [[0.2, 0.2], [0.6, 0.1], [0.1, 0.7]] {
            let v = ops.basis.eval(p).dot(&rec);
            assert!((v - w(p)).abs() < 1e-11, "k={k} at {p:?}: {v} vs {}", w(p));
        }
    }
}

/// Independent dense assembly of the reconstruction problem with
/// exactness-20 quadrature, solved with an explicit mean constraint.
#[test]
fn reconstruction_matches_dense_oracle() {
    let (mesh, problem) = disc_on_reference();
    let k = 2usize;
    let disc = Discretization::new(&mesh, &problem, k).unwrap();
    let ops = &disc.local[0];
    let n = ops.basis.dim;
    let nf = k + 1;

    // Random but deterministic local dof vector.
    let v = DVector::from_fn(ops.ndofs, |i, _| ((i * 7919 + 13) % 23) as f64 / 23.0 - 0.5);

    // Oracle: (grad R, grad w) = (grad v_K, grad w) - (v_K - v_dK, grad w . n)
    // assembled from quadrature at exactness 20, with the mean constraint
    // appended as an extra row (least squares via normal equations).
    let (qp, qw) = cell_quad_physical(&ops.basis.verts, 20).unwrap();
    let mut stiff = DMatrix::zeros(n, n);
    for (p, w) in qp.iter().zip(&qw) {
        let (gx, gy) = ops.basis.eval_grad(*p);
        stiff += (&gx * gx.transpose() + &gy * gy.transpose()) * *w;
    }
    let vc = v.rows(0, n).into_owned();
    let mut rhs = &stiff * &vc;
    let frule = face_quadrature(20).unwrap();
    for le in 0..3 {
        let fid = mesh.cells[0].faces[le];
        let fb = &disc.face_bases[fid];
        let nrm = mesh.outward_normal(0, le);
        let vf = v.rows(n + le * nf, nf).into_owned();
        for (&t, &w) in frule.points.iter().zip(&frule.weights) {
            let p = fb.point(t);
            let (gx, gy) = ops.basis.eval_grad(p);
            let gn = gx * nrm[0] + gy * nrm[1];
            let trace = ops.basis.eval(p).dot(&vc);
            let face_val = fb.eval_t(t).dot(&vf);
            rhs += gn * (w * fb.length * (face_val - trace));
        }
    }
    // Mean constraint: replace the null direction (constant mode) by
    // pinning the mean of R to the mean of v_K.
    let mut sys = stiff.clone();
    let mut b = rhs.clone();
    for j in 0..n {
        sys[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    b[0] = vc[0];
    let oracle = sys.lu().solve(&b).unwrap();

    let rec = ops.reconstruct(&v);
    assert!(
        (&rec - &oracle).amax() < 1e-10,
        "deviation {}",
        (&rec - &oracle).amax()
    );
}

#[test]
fn stabilization_vanishes_on_constants_and_interpolants() {
    let (mesh, problem) = disc_on_reference();
    for k in 0..=2usize {
        let disc = Discretization::new(&mesh, &problem, k).unwrap();
        let ops = &disc.local[0];
        let one = ops.reduce_interpolate(&|_| 3.5, &disc.face_bases).unwrap();
        assert!(ops.stabilization(&one) < 1e-24);
        // Interpolant of any w in P^{k+1} has zero stabilization.
        let w = move |p: [f64; 2]| (0.5 * p[0] + p[1] - 0.25).powi(k as i32 + 1);
        let iw = ops.reduce_interpolate(&w, &disc.face_bases).unwrap();
        assert!(ops.stabilization(&iw) < 1e-22, "k={k}: {}", ops.stabilization(&iw));
    }
}

#[test]
fn stabilization_single_face_hand_value() {
    // v_K = 0, v_F = 1 on one face, k = 0: S = (1/h_K) |F|.
    let (mesh, problem) = disc_on_reference();
    let disc = Discretization::new(&mesh, &problem, 0).unwrap();
    let ops = &disc.local[0];
    for le in 0..3 {
        let fid = mesh.cells[0].faces[le];
        let flen = mesh.faces[fid].length;
        let mut v = DVector::zeros(ops.ndofs);
        // Face basis is orthonormal in L2(F): the constant 1 has
        // coefficient sqrt(|F|).
        v[ops.cell_dim() + le] = flen.sqrt();
        let s = ops.stabilization(&v);
        let expected = flen / ops.diameter;
        assert!((s - expected).abs() < 1e-13, "face {le}: {s} vs {expected}");
    }
}

#[test]
fn bilinear_form_kernel_and_diffusion_linearity() {
    let mesh = reference_triangle_mesh();
    let mut problem = ProblemSpec::poisson_unit(Box::new(|_| 0.0));
    let disc1 = Discretization::new(&mesh, &problem, 1).unwrap();
    let ops1 = &disc1.local[0];
    let c = ops1.reduce_interpolate(&|_| 2.0, &disc1.face_bases).unwrap();
    let acc = (c.transpose() * &ops1.a * &c)[(0, 0)];
    assert!(acc.abs() < 1e-12, "a(c, c) = {acc}");

    problem.diffusion = BTreeMap::from([(0, 2.0)]);
    let disc2 = Discretization::new(&mesh, &problem, 1).unwrap();
    let dev = (&disc2.local[0].a - &ops1.a * 2.0).amax() / ops1.a.amax();
    assert!(dev < 1e-13, "doubling A deviates by {dev}");
}

#[test]
fn bilinear_form_smallest_nonzero_eigenvalue_oracle() {
    // Independently assembled a_K = R^T stiff R + S with exactness-20
    // quadrature; its spectrum must match the production matrix.
    let (mesh, problem) = disc_on_reference();
    let k = 1usize;
    let disc = Discretization::new(&mesh, &problem, k).unwrap();
    let ops = &disc.local[0];
    let n = ops.basis.dim;
    let nf = k + 1;

    let (qp, qw) = cell_quad_physical(&ops.basis.verts, 20).unwrap();
    let frule = face_quadrature(20).unwrap();
    let mut oracle = DMatrix::zeros(ops.ndofs, ops.ndofs);
    // Gradient part via columns of the reconstruction map.
    let recs: Vec<DVector<f64>> = (0..ops.ndofs)
        .map(|j| {
            let mut e = DVector::zeros(ops.ndofs);
            e[j] = 1.0;
            ops.reconstruct(&e)
        })
        .collect();
    for (p, w) in qp.iter().zip(&qw) {
        let (gx, gy) = ops.basis.eval_grad(*p);
        let rx: DVector<f64> = DVector::from_fn(ops.ndofs, |j, _| gx.dot(&recs[j]));
        let ry: DVector<f64> = DVector::from_fn(ops.ndofs, |j, _| gy.dot(&recs[j]));
        oracle += (&rx * rx.transpose() + &ry * ry.transpose()) * *w;
    }
    // Stabilization part from pointwise projected differences.
    for le in 0..3 {
        let fid = mesh.cells[0].faces[le];
        let fb = &disc.face_bases[fid];
        // D maps local dofs to face-basis coefficients of
        // Pi_F(v_dK - v_K).
        let mut d = DMatrix::zeros(nf, ops.ndofs);
        for (&t, &w) in frule.points.iter().zip(&frule.weights) {
            let psi = fb.eval_t(t);
            let phi = ops.basis.eval(fb.point(t));
            for m in 0..nf {
                for j in 0..n {
                    d[(m, j)] -= w * fb.length * psi[m] * phi[j];
                }
                for j in 0..nf {
                    d[(m, n + le * nf + j)] += w * fb.length * psi[m] * psi[j];
                }
            }
        }
        let dtd: DMatrix<f64> = d.transpose() * &d;
        oracle += dtd * (((k + 1) * (k + 1)) as f64 / ops.diameter);
    }

    let dev = (&oracle - &ops.a).amax() / ops.a.amax();
    assert!(dev < 1e-11, "matrix deviation {dev}");

    let eig_prod = ops.a.clone().symmetric_eigen().eigenvalues;
    let eig_orac = oracle.symmetric_eigen().eigenvalues;
    let min_nonzero = |eigs: &DVector<f64>| {
        eigs.iter().copied().filter(|&e| e > 1e-10).fold(f64::INFINITY, f64::min)
    };
    let (a, b) = (min_nonzero(&eig_prod), min_nonzero(&eig_orac));
    assert!((a - b).abs() < 1e-10 * b, "smallest nonzero eig {a} vs {b}");
    // Exactly one zero eigenvalue (the constant mode).
    assert_eq!(eig_prod.iter().filter(|&&e| e.abs() < 1e-10).count(), 1);
}

#[test]
fn reduction_interpolates_constants_and_polynomials() {
    let (mesh, problem) = disc_on_reference();
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let ops = &disc.local[0];
    let i1 = ops.reduce_interpolate(&|_| 1.0, &disc.face_bases).unwrap();
    // Cell part evaluates to 1 at the centroid; face parts are the
    // projections of 1 (coefficient sqrt(|F|) on the constant mode).
    let ctr = mesh.centroid(0);
    let v = ops.basis.eval(ctr).dot(&i1.rows(0, ops.cell_dim()).into_owned());
    assert!((v - 1.0).abs() < 1e-13);
    for le in 0..3 {
        let flen = mesh.faces[mesh.cells[0].faces[le]].length;
        let seg = i1.rows(ops.cell_dim() + le * 2, 2);
        assert!((seg[0] - flen.sqrt()).abs() < 1e-13);
        assert!(seg[1].abs() < 1e-13);
    }
    // f in P^{k+1}: the cell part reproduces f exactly.
    let f = |p: [f64; 2]| 1.0 + p[0] - 2.0 * p[1] * p[1];
    let iw = ops.reduce_interpolate(&f, &disc.face_bases).unwrap();
    for p in [[0.3, 0.3], [0.1, 0.6]] {
        let v = ops.basis.eval(p).dot(&iw.rows(0, ops.cell_dim()).into_owned());
        assert!((v - f(p)).abs() < 1e-12);
    }
}

#[test]
fn reduction_face_coefficients_match_quadrature_oracle() {
    let (mesh, problem) = disc_on_reference();
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let ops = &disc.local[0];
    let f = |p: [f64; 2]| (std::f64::consts::PI * p[0]).sin();
    let iw = ops.reduce_interpolate(&f, &disc.face_bases).unwrap();
    let rule = face_quadrature(40).unwrap();
    for le in 0..3 {
        let fid = mesh.cells[0].faces[le];
        let fb = &disc.face_bases[fid];
        let mut oracle = DVector::zeros(2);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            oracle += fb.eval_t(t) * (w * fb.length * f(fb.point(t)));
        }
        let seg = iw.rows(ops.cell_dim() + le * 2, 2).into_owned();
        // The projection uses exactness-(2k+8) quadrature; its residual
        // error on the transcendental integrand dominates the deviation.
        assert!(
            (&seg - &oracle).amax() < 1e-8,
            "face {le}: deviation {}",
            (&seg - &oracle).amax()
        );
    }
}

#[test]
fn seminorm_examples_and_stability() {
    let (mesh, problem) = disc_on_reference();
    let disc = Discretization::new(&mesh, &problem, 0).unwrap();
    let ops = &disc.local[0];
    // (c, c) -> 0.
    let c = ops.reduce_interpolate(&|_| 4.0, &disc.face_bases).unwrap();
    assert!(ops.seminorm_sq(&c) < 1e-22);

    // (x, 0 on all faces), k=0 on the reference triangle:
    // ||grad x||^2 = |K| = 1/2 and S = (1/h) sum_F |F| (mean_F x)^2
    // with means 1/2, 1/2, 0 on the legs/hypotenuse.
    let mut v = ops.reduce_interpolate(&|p| p[0], &disc.face_bases).unwrap();
    for le in 0..3 {
        v[ops.cell_dim() + le] = 0.0;
    }
    let h = 2.0f64.sqrt();
    let expected = 0.5 + (1.0 * 0.25 + 2.0f64.sqrt() * 0.25) / h;
    let got = ops.seminorm_sq(&v);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn local_stability_and_boundedness_across_k() {
    // alpha |v|^2 <= ||grad R||^2 + S <= alpha^{-1} |v|^2 with a stable
    // constant over k = 0..5, where |v|^2 is the HHO seminorm
    // ||grad v_K||^2 + h^{-1} ||v_dK - v_K||^2_dK.
    let mesh = reference_triangle_mesh();
    let problem = ProblemSpec::poisson_unit(Box::new(|_| 0.0));
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for k in 0..=5usize {
        let disc = Discretization::new(&mesh, &problem, k).unwrap();
        let ops = &disc.local[0];
        let n = ops.cell_dim();
        let nf = k + 1;
        let frule = face_quadrature(2 * (k + 1) + 4).unwrap();
        let (qp, qw) = cell_quad_physical(&ops.basis.verts, 2 * (k + 1)).unwrap();
        for trial in 0..8 {
            let mut v = DVector::from_fn(ops.ndofs, |i, _| {
                (((i + 1) * (trial + 3) * 2654435761) % 1000) as f64 / 500.0 - 1.0
            });
            // Remove the constant direction, which is the exact kernel.
            let ones = ops.reduce_interpolate(&|_| 1.0, &disc.face_bases).unwrap();
            let scale = v.dot(&ones) / ones.dot(&ones);
            v -= ones * scale;

            let energy = {
                let rec = ops.reconstruct(&v);
                let mut g = 0.0;
                for (p, w) in qp.iter().zip(&qw) {
                    let (gx, gy) = ops.basis.eval_grad(*p);
                    g += w * (gx.dot(&rec).powi(2) + gy.dot(&rec).powi(2));
                }
                g + ops.stabilization(&v)
            };
            let seminorm = {
                let vc = v.rows(0, n).into_owned();
                let mut g = 0.0;
                for (p, w) in qp.iter().zip(&qw) {
                    let (gx, gy) = ops.basis.eval_grad(*p);
                    g += w * (gx.dot(&vc).powi(2) + gy.dot(&vc).powi(2));
                }
                for le in 0..3 {
                    let fid = mesh.cells[0].faces[le];
                    let fb = &disc.face_bases[fid];
                    let vf = v.rows(n + le * nf, nf).into_owned();
                    for (&t, &w) in frule.points.iter().zip(&frule.weights) {
                        let d = fb.eval_t(t).dot(&vf) - ops.basis.eval(fb.point(t)).dot(&vc);
                        g += w * fb.length * d * d / ops.diameter;
                    }
                }
                g
            };
            if seminorm > 1e-14 {
                let r = energy / seminorm;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    assert!(lo > 1e-3 && hi < 1e3, "Rayleigh range [{lo}, {hi}]");
    assert!(hi / lo < 1e4, "stability constant drifts: [{lo}, {hi}]");
}
