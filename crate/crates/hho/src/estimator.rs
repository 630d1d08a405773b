//! Equilibrated face fluxes, the four hp a posteriori error indicators
//! with data oscillation terms, the total estimator, and the energy error
//! against exact solutions.

use crate::basis::{cell_quad_physical, FaceBasis};
use crate::mesh::{FaceKind, NO_CELL};
use crate::quadrature::face_quadrature;
use crate::solver::{Discretization, HhoSolution, ProblemSpec};
use crate::{Error, Result};
use nalgebra::DVector;

/// Per-cell indicator and oscillation values.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellEstimate {
    pub eta_res: f64,
    pub eta_sta: f64,
    pub eta_nor: f64,
    pub eta_tan: f64,
    pub osc_f: f64,
    pub osc_gn: f64,
    pub osc_gd: f64,
}

impl CellEstimate {
    /// Combined data oscillation O_K = O_K(f) + O_K(g_N) + O_K(g_D).
    pub fn osc_dat(&self) -> f64 {
        self.osc_f + self.osc_gn + self.osc_gd
    }

    /// Squared marking quantity: the per-cell total of the four indicators.
    pub fn marker_squared(&self) -> f64 {
        self.eta_res.powi(2) + self.eta_sta.powi(2) + self.eta_nor.powi(2) + self.eta_tan.powi(2)
    }
}

/// Global estimator report: per-cell entries, root-sum-square aggregates,
/// both total variants, and linear contribution percentages.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub k: usize,
    pub cells: Vec<CellEstimate>,
    pub eta_res: f64,
    pub eta_sta: f64,
    pub eta_nor: f64,
    pub eta_tan: f64,
    pub osc: f64,
    /// Upper-bound total with the min(k sum eta_sta^2, sum eta_nor^2) term.
    pub eta_total: f64,
    /// Variant that always includes the normal-jump sum instead of the min.
    pub eta_total_with_nor: f64,
    /// Percentages of (res, sta, nor, tan) under linear normalization.
    pub contributions: [f64; 4],
}

fn step_for_fd(length: f64) -> f64 {
    1e-6 * length.max(1e-12)
}

/// Tangential derivative of the Dirichlet datum along a face, from the
/// supplied gradient when available, otherwise by central differences.
fn dirichlet_arc_derivative(
    problem: &ProblemSpec,
    fb: &FaceBasis,
    t: f64,
) -> f64 {
    let tau = fb.tangent();
    if let Some(grad) = &problem.dirichlet_gradient {
        let g = grad(fb.point(t));
        g[0] * tau[0] + g[1] * tau[1]
    } else {
        let dt = step_for_fd(fb.length) / fb.length;
        let gp = (problem.dirichlet)(fb.point(t + dt));
        let gm = (problem.dirichlet)(fb.point(t - dt));
        (gp - gm) / (2.0 * dt * fb.length)
    }
}

/// Equilibrated flux of `cell` on `face`, as coefficients in the face basis:
/// phi = -A grad R(u) . n_K + A (k+1)^2/h_K Pi_F(u_K - u_F).
pub fn numerical_flux(
    disc: &Discretization,
    solution: &HhoSolution,
    cell: usize,
    face: usize,
) -> Result<DVector<f64>> {
    let le = disc
        .mesh
        .local_edge(cell, face)
        .ok_or_else(|| Error::Structural(format!("face {face} not incident to cell {cell}")))?;
    let ops = &disc.local[cell];
    let fb = &disc.face_bases[face];
    let nrm = disc.mesh.outward_normal(cell, le);
    let local = solution.local_dofs(disc, cell);
    let rec = ops.reconstruct(&local);
    // grad R . n restricted to the face is a polynomial of degree k; its
    // face-basis coefficients are exact inner products.
    let rule = face_quadrature(2 * (disc.k + 1))?;
    let mut grad_n = DVector::zeros(disc.k + 1);
    for (&t, &w) in rule.points.iter().zip(&rule.weights) {
        let p = fb.point(t);
        let (gx, gy) = ops.basis.eval_grad(p);
        let gn = gx.dot(&rec) * nrm[0] + gy.dot(&rec) * nrm[1];
        grad_n += fb.eval_t(t) * (w * fb.length * gn);
    }
    let penalty = ((disc.k + 1) * (disc.k + 1)) as f64 / ops.diameter;
    let trace = &ops.trace_proj[le] * &solution.cell_coeffs[cell];
    let diff = trace - &solution.face_coeffs[face];
    Ok(grad_n * (-ops.diffusion) + diff * (ops.diffusion * penalty))
}

/// Maximum face flux imbalance, normalized by ||A^{1/2} grad R(u)||.
pub fn conservation_residual(
    disc: &Discretization,
    solution: &HhoSolution,
    problem: &ProblemSpec,
) -> Result<f64> {
    let mesh = disc.mesh;
    let mut energy = 0.0;
    for (c, ops) in disc.local.iter().enumerate() {
        let rec = ops.reconstruct(&solution.local_dofs(disc, c));
        energy += ops.diffusion * (rec.transpose() * &ops.stiff * &rec)[(0, 0)];
    }
    let scale = energy.sqrt().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for (f, face) in mesh.faces.iter().enumerate() {
        let imbalance = match face.kind {
            FaceKind::Interior => {
                let phi1 = numerical_flux(disc, solution, face.cells[0], f)?;
                let phi2 = numerical_flux(disc, solution, face.cells[1], f)?;
                (phi1 + phi2).norm()
            }
            FaceKind::Neumann => {
                let phi = numerical_flux(disc, solution, face.cells[0], f)?;
                let gn = disc.face_bases[f].project(&|p| (problem.neumann)(p), 2 * disc.k + 8)?;
                (phi + gn).norm()
            }
            FaceKind::Dirichlet => continue,
        };
        worst = worst.max(imbalance);
    }
    Ok(worst / scale)
}

/// Computes all per-cell indicators and oscillation terms and the global
/// aggregates of the upper error bound.
pub fn estimate(
    disc: &Discretization,
    solution: &HhoSolution,
    problem: &ProblemSpec,
) -> Result<EstimatorReport> {
    let mesh = disc.mesh;
    let k = disc.k;
    let kp1 = (k + 1) as f64;
    let ncells = mesh.cells.len();

    // Reconstruction coefficients per cell.
    let recs: Vec<DVector<f64>> = (0..ncells)
        .map(|c| disc.local[c].reconstruct(&solution.local_dofs(disc, c)))
        .collect();

    // Per-face squared jump terms, scattered to cells afterwards.
    let mut tan_jump_sq = vec![0.0; mesh.faces.len()];
    let mut nor_jump_sq = vec![0.0; mesh.faces.len()];
    let mut dir_tan_sq = vec![0.0; mesh.faces.len()];
    let mut neu_nor_sq = vec![0.0; mesh.faces.len()];
    let mut osc_gn_sq = vec![0.0; mesh.faces.len()];
    let mut osc_gd_sq = vec![0.0; mesh.faces.len()];

    let jump_rule = face_quadrature(2 * (k + 1))?;
    let data_rule = face_quadrature(2 * k + 8)?;

    for (f, face) in mesh.faces.iter().enumerate() {
        let fb = &disc.face_bases[f];
        let tau = fb.tangent();
        match face.kind {
            FaceKind::Interior => {
                let (c1, c2) = (face.cells[0], face.cells[1]);
                let (a1, a2) = (disc.local[c1].diffusion, disc.local[c2].diffusion);
                let (mut jt, mut jn) = (0.0, 0.0);
                for (&t, &w) in jump_rule.points.iter().zip(&jump_rule.weights) {
                    let p = fb.point(t);
                    let wl = w * fb.length;
                    let (g1x, g1y) = disc.local[c1].basis.eval_grad(p);
                    let (g2x, g2y) = disc.local[c2].basis.eval_grad(p);
                    let u1 = [
                        g1x.dot(&solution.cell_coeffs[c1]),
                        g1y.dot(&solution.cell_coeffs[c1]),
                    ];
                    let u2 = [
                        g2x.dot(&solution.cell_coeffs[c2]),
                        g2y.dot(&solution.cell_coeffs[c2]),
                    ];
                    let dt_jump = (u1[0] - u2[0]) * tau[0] + (u1[1] - u2[1]) * tau[1];
                    jt += wl * dt_jump * dt_jump;
                    let r1 = [g1x.dot(&recs[c1]), g1y.dot(&recs[c1])];
                    let r2 = [g2x.dot(&recs[c2]), g2y.dot(&recs[c2])];
                    let dn_jump = (a1 * r1[0] - a2 * r2[0]) * face.normal[0]
                        + (a1 * r1[1] - a2 * r2[1]) * face.normal[1];
                    jn += wl * dn_jump * dn_jump;
                }
                tan_jump_sq[f] = jt;
                nor_jump_sq[f] = jn;
            }
            FaceKind::Dirichlet => {
                let c = face.cells[0];
                // Face-wise projection of g_D of degree k+1.
                let fb_hi = FaceBasis::new(fb.start, fb.end, k + 1)?;
                let gd = fb_hi.project(&|p| (problem.dirichlet)(p), 2 * k + 8)?;
                let (mut jd, mut od) = (0.0, 0.0);
                for (&t, &w) in data_rule.points.iter().zip(&data_rule.weights) {
                    let p = fb.point(t);
                    let wl = w * fb.length;
                    let (gx, gy) = disc.local[c].basis.eval_grad(p);
                    let du = gx.dot(&solution.cell_coeffs[c]) * tau[0]
                        + gy.dot(&solution.cell_coeffs[c]) * tau[1];
                    let dproj = fb_hi.eval_deriv_arc(t).dot(&gd);
                    jd += wl * (du - dproj) * (du - dproj);
                    let dgd = dirichlet_arc_derivative(problem, fb, t);
                    od += wl * (dgd - dproj) * (dgd - dproj);
                }
                dir_tan_sq[f] = jd;
                osc_gd_sq[f] = od;
            }
            FaceKind::Neumann => {
                let c = face.cells[0];
                let a = disc.local[c].diffusion;
                let gn_proj = fb.project(&|p| (problem.neumann)(p), 2 * k + 8)?;
                let (mut jn, mut on) = (0.0, 0.0);
                for (&t, &w) in data_rule.points.iter().zip(&data_rule.weights) {
                    let p = fb.point(t);
                    let wl = w * fb.length;
                    let (gx, gy) = disc.local[c].basis.eval_grad(p);
                    let flux = a
                        * (gx.dot(&recs[c]) * face.normal[0] + gy.dot(&recs[c]) * face.normal[1]);
                    let proj = fb.eval_t(t).dot(&gn_proj);
                    jn += wl * (flux - proj) * (flux - proj);
                    let g = (problem.neumann)(p);
                    on += wl * (g - proj) * (g - proj);
                }
                neu_nor_sq[f] = jn;
                osc_gn_sq[f] = on;
            }
        }
    }

    // Face diffusion floor A_F^flat.
    let a_flat: Vec<f64> = mesh
        .faces
        .iter()
        .map(|face| {
            let a1 = disc.local[face.cells[0]].diffusion;
            if face.cells[1] == NO_CELL {
                a1
            } else {
                a1.min(disc.local[face.cells[1]].diffusion)
            }
        })
        .collect();

    let mut cells = Vec::with_capacity(ncells);
    for (c, ops) in disc.local.iter().enumerate() {
        let a = ops.diffusion;
        let h = ops.diameter;
        let local = solution.local_dofs(disc, c);

        // Volume residual Pi^{k+1}(f) + A lap R(u), and the f oscillation.
        let f_proj = ops.basis.project(&|p| (problem.load)(p), 2 * (k + 1) + 6)?;
        let (qp, qw) = cell_quad_physical(&ops.basis.verts, 2 * (k + 1) + 6)?;
        let (mut res_sq, mut oscf_sq) = (0.0, 0.0);
        for (p, w) in qp.iter().zip(&qw) {
            let phi = ops.basis.eval(*p);
            let lap = ops.basis.eval_laplacian(*p);
            let pf = phi.dot(&f_proj);
            let r = pf + a * lap.dot(&recs[c]);
            res_sq += w * r * r;
            let df = (problem.load)(*p) - pf;
            oscf_sq += w * df * df;
        }
        let eta_res = a.powf(-0.5) * (h / kp1) * res_sq.sqrt();
        let osc_f = a.powf(-0.5) * (h / kp1) * oscf_sq.sqrt();

        let eta_sta = (a * ops.stabilization(&local)).sqrt();

        let (mut tan_int, mut tan_dir) = (0.0, 0.0);
        let (mut nor_int, mut nor_neu) = (0.0, 0.0);
        let (mut ogn_sq, mut ogd_sq) = (0.0, 0.0);
        for le in 0..3 {
            let f = ops.faces[le];
            match mesh.faces[f].kind {
                FaceKind::Interior => {
                    tan_int += a_flat[f] * tan_jump_sq[f];
                    nor_int += nor_jump_sq[f];
                }
                FaceKind::Dirichlet => {
                    tan_dir += a_flat[f] * dir_tan_sq[f];
                    ogd_sq += osc_gd_sq[f];
                }
                FaceKind::Neumann => {
                    nor_neu += neu_nor_sq[f];
                    ogn_sq += osc_gn_sq[f];
                }
            }
        }
        let eta_tan = (h / kp1).sqrt() * (tan_int.sqrt() + tan_dir.sqrt());
        let eta_nor = a.powf(-0.5) * (h / kp1).sqrt() * (nor_int.sqrt() + nor_neu.sqrt());
        let osc_gn = a.powf(-0.5) * (h / kp1).sqrt() * ogn_sq.sqrt();
        let osc_gd = a.sqrt() * (h / kp1).sqrt() * ogd_sq.sqrt();

        cells.push(CellEstimate {
            eta_res,
            eta_sta,
            eta_nor,
            eta_tan,
            osc_f,
            osc_gn,
            osc_gd,
        });
    }

    let rss = |sel: &dyn Fn(&CellEstimate) -> f64| -> f64 {
        cells.iter().map(|e| sel(e).powi(2)).sum::<f64>().sqrt()
    };
    let eta_res = rss(&|e| e.eta_res);
    let eta_sta = rss(&|e| e.eta_sta);
    let eta_nor = rss(&|e| e.eta_nor);
    let eta_tan = rss(&|e| e.eta_tan);
    let osc = rss(&|e| e.osc_dat());

    let base_sq = eta_res.powi(2) + eta_tan.powi(2) + eta_sta.powi(2) + osc.powi(2);
    let min_term = (k as f64 * eta_sta.powi(2)).min(eta_nor.powi(2));
    let eta_total = (base_sq + min_term).sqrt();
    let eta_total_with_nor = (base_sq + eta_nor.powi(2)).sqrt();

    let lin_sum = eta_res + eta_sta + eta_nor + eta_tan;
    let contributions = if lin_sum > 0.0 {
        [
            100.0 * eta_res / lin_sum,
            100.0 * eta_sta / lin_sum,
            100.0 * eta_nor / lin_sum,
            100.0 * eta_tan / lin_sum,
        ]
    } else {
        [0.0; 4]
    };

    Ok(EstimatorReport {
        k,
        cells,
        eta_res,
        eta_sta,
        eta_nor,
        eta_tan,
        osc,
        eta_total,
        eta_total_with_nor,
        contributions,
    })
}

/// Total estimator of the upper error bound with unit constant:
/// total^2 = sum(eta_res^2 + eta_tan^2 + eta_sta^2 + O_dat^2)
///         + min(k sum eta_sta^2, sum eta_nor^2).
pub fn total_estimator(report: &EstimatorReport, k: usize) -> f64 {
    let base_sq: f64 = report
        .cells
        .iter()
        .map(|e| e.eta_res.powi(2) + e.eta_tan.powi(2) + e.eta_sta.powi(2) + e.osc_dat().powi(2))
        .sum();
    let sta_sq: f64 = report.cells.iter().map(|e| e.eta_sta.powi(2)).sum();
    let nor_sq: f64 = report.cells.iter().map(|e| e.eta_nor.powi(2)).sum();
    (base_sq + (k as f64 * sta_sq).min(nor_sq)).sqrt()
}

/// Extra quadrature exactness on cells touching the singular point.
const SINGULAR_BUMP: usize = 10;

/// Energy error sqrt(sum_K A_K (||grad(u - u_K)||^2 + S(u,u))). Requires an
/// exact gradient.
pub fn energy_error(
    disc: &Discretization,
    solution: &HhoSolution,
    problem: &ProblemSpec,
) -> Result<f64> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Spec("energy error requires an exact solution".into()))?;
    let k = disc.k;
    let mut total = 0.0;
    for (c, ops) in disc.local.iter().enumerate() {
        let mut exactness = 2 * (k + 1) + 8;
        if let Some(sp) = problem.singular_point {
            let touches = ops.basis.verts.iter().any(|v| {
                (v[0] - sp[0]).abs() < 1e-13 && (v[1] - sp[1]).abs() < 1e-13
            });
            if touches {
                exactness += SINGULAR_BUMP;
            }
        }
        let (qp, qw) = cell_quad_physical(&ops.basis.verts, exactness)?;
        let mut grad_err = 0.0;
        for (p, w) in qp.iter().zip(&qw) {
            let (gx, gy) = ops.basis.eval_grad(*p);
            let g = (exact.gradient)(*p);
            let dx = g[0] - gx.dot(&solution.cell_coeffs[c]);
            let dy = g[1] - gy.dot(&solution.cell_coeffs[c]);
            grad_err += w * (dx * dx + dy * dy);
        }
        let local = solution.local_dofs(disc, c);
        total += ops.diffusion * (grad_err + ops.stabilization(&local));
    }
    Ok(total.sqrt())
}
