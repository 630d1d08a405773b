//! Per-cell HHO machinery: gradient reconstruction, Lehrenfeld--Schöberl
//! stabilization, the local bilinear form, and its static condensation
//! factorization.
//!
//! Local degrees of freedom are ordered cell coefficients first (dimension
//! of P^{k+1}), then the k+1 face coefficients per local edge.

use crate::basis::{cell_quad_physical, CellBasis, FaceBasis};
use crate::mesh::Mesh;
use crate::quadrature::face_quadrature;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub cell: usize,
    pub k: usize,
    /// Cell basis of degree k+1.
    pub basis: CellBasis,
    /// Face ids, in local edge order.
    pub faces: [usize; 3],
    pub diameter: f64,
    pub diffusion: f64,
    /// Number of local dofs: dim P^{k+1} + 3(k+1).
    pub ndofs: usize,
    /// Gradient Gram matrix of the cell basis.
    pub stiff: DMatrix<f64>,
    /// Reconstruction map: local dofs -> P^{k+1} coefficients.
    pub recon: DMatrix<f64>,
    /// Stabilization bilinear form (no diffusion factor).
    pub stab: DMatrix<f64>,
    /// Local bilinear form A_K ((grad R, grad R) + S).
    pub a: DMatrix<f64>,
    /// Trace projections onto each face basis: (k+1) x dim P^{k+1}.
    pub trace_proj: [DMatrix<f64>; 3],
    cell_block: Cholesky<f64, Dyn>,
}

impl LocalOperators {
    pub fn build(
        mesh: &Mesh,
        cell: usize,
        k: usize,
        face_bases: &[FaceBasis],
        diffusion: f64,
    ) -> Result<Self> {
        if diffusion <= 0.0 {
            return Err(Error::Parameter(format!(
                "diffusion must be positive, got {diffusion} on cell {cell}"
            )));
        }
        let verts = mesh.cell_coords(cell);
        let cdata = &mesh.cells[cell];
        let basis = CellBasis::new(&verts, k + 1)?;
        let n = basis.dim;
        let nf = k + 1;
        let ndofs = n + 3 * nf;
        let exact = 2 * (k + 1);

        // Volume gradient Gram.
        let (qp, qw) = cell_quad_physical(&verts, exact)?;
        let mut stiff = DMatrix::zeros(n, n);
        for (p, w) in qp.iter().zip(&qw) {
            let (gx, gy) = basis.eval_grad(*p);
            stiff.syger(*w, &gx, &gx, 1.0);
            stiff.syger(*w, &gy, &gy, 1.0);
        }
        stiff.fill_upper_triangle_with_lower_triangle();

        // Boundary coupling and trace projections.
        let frule = face_quadrature(exact)?;
        let mut bdry_cell = DMatrix::zeros(n, n); // (phi_j, grad phi_i . n)_dK
        let mut bdry_face: [DMatrix<f64>; 3] = [
            DMatrix::zeros(n, nf),
            DMatrix::zeros(n, nf),
            DMatrix::zeros(n, nf),
        ];
        let mut trace_proj: [DMatrix<f64>; 3] = [
            DMatrix::zeros(nf, n),
            DMatrix::zeros(nf, n),
            DMatrix::zeros(nf, n),
        ];
        for le in 0..3 {
            let fb = &face_bases[cdata.faces[le]];
            let nrm = mesh.outward_normal(cell, le);
            for (&t, &w) in frule.points.iter().zip(&frule.weights) {
                let p = fb.point(t);
                let wl = w * fb.length;
                let phi = basis.eval(p);
                let (gx, gy) = basis.eval_grad(p);
                let gn = gx * nrm[0] + gy * nrm[1];
                let psi = fb.eval_t(t);
                bdry_cell.ger(wl, &gn, &phi, 1.0);
                bdry_face[le].ger(wl, &gn, &psi, 1.0);
                trace_proj[le].ger(wl, &psi, &phi, 1.0);
            }
        }

        // Right-hand side of the reconstruction problem per local dof.
        let mut rhs = DMatrix::zeros(n, ndofs);
        rhs.view_mut((0, 0), (n, n)).copy_from(&(&stiff - &bdry_cell));
        for le in 0..3 {
            rhs.view_mut((0, n + le * nf), (n, nf)).copy_from(&bdry_face[le]);
        }
        // The constant mode is fixed by the mean constraint: with an
        // orthonormal basis whose first function is constant, it pins the
        // first reconstruction coefficient to the first cell coefficient.
        let mut sys = stiff.clone();
        sys.row_mut(0).fill(0.0);
        sys[(0, 0)] = 1.0;
        rhs.row_mut(0).fill(0.0);
        rhs[(0, 0)] = 1.0;
        let recon = sys.lu().solve(&rhs).ok_or_else(|| {
            Error::Solver(format!("singular reconstruction system on cell {cell}"))
        })?;

        // Stabilization: S = ((k+1)^2/h_K) sum_F D_F^T D_F with D_F the
        // face-projected difference map.
        let mut stab = DMatrix::zeros(ndofs, ndofs);
        for le in 0..3 {
            let mut d = DMatrix::zeros(nf, ndofs);
            d.view_mut((0, 0), (nf, n)).copy_from(&(-&trace_proj[le]));
            d.view_mut((0, n + le * nf), (nf, nf)).copy_from(&DMatrix::identity(nf, nf));
            stab += d.transpose() * d;
        }
        stab *= ((k + 1) * (k + 1)) as f64 / cdata.diameter;

        let mut a = (recon.transpose() * &stiff * &recon + &stab) * diffusion;
        // Enforce exact symmetry lost to the unsymmetric reconstruction solve.
        a = (&a + a.transpose()) * 0.5;

        let cell_block = Cholesky::new(a.view((0, 0), (n, n)).into_owned()).ok_or_else(|| {
            Error::Solver(format!("cell block of a_K not positive definite on cell {cell}"))
        })?;

        Ok(Self {
            cell,
            k,
            basis,
            faces: cdata.faces,
            diameter: cdata.diameter,
            diffusion,
            ndofs,
            stiff,
            recon,
            stab,
            a,
            trace_proj,
            cell_block,
        })
    }

    pub fn cell_dim(&self) -> usize {
        self.basis.dim
    }

    pub fn face_dim(&self) -> usize {
        self.k + 1
    }

    /// Reconstruction coefficients R_K(v) in the cell basis.
    pub fn reconstruct(&self, local_dofs: &DVector<f64>) -> DVector<f64> {
        &self.recon * local_dofs
    }

    /// Stabilization value S(v, v), evaluated in factored form: the
    /// per-face difference vectors are formed first, then squared. Going
    /// through the assembled `stab` matrix instead loses all accuracy when
    /// S(v, v) is many orders below `|v|^2`, because the quadratic form
    /// cancels catastrophically.
    pub fn stabilization(&self, local_dofs: &DVector<f64>) -> f64 {
        let n = self.cell_dim();
        let nf = self.face_dim();
        let vk = local_dofs.rows(0, n);
        let mut s = 0.0;
        for le in 0..3 {
            let d = &self.trace_proj[le] * vk - local_dofs.rows(n + le * nf, nf);
            s += d.norm_squared();
        }
        s * ((self.k + 1) * (self.k + 1)) as f64 / self.diameter
    }

    /// Local H1-like seminorm |v|^2 = ||grad v_K||^2 + S(v, v).
    pub fn seminorm_sq(&self, local_dofs: &DVector<f64>) -> f64 {
        let n = self.cell_dim();
        let vc = local_dofs.rows(0, n).into_owned();
        (vc.transpose() * &self.stiff * &vc)[(0, 0)] + self.stabilization(local_dofs)
    }

    /// Reduction operator: component-wise L2 projections of `f` onto the
    /// cell basis and the face bases.
    pub fn reduce_interpolate(
        &self,
        f: &dyn Fn([f64; 2]) -> f64,
        face_bases: &[FaceBasis],
    ) -> Result<DVector<f64>> {
        let n = self.cell_dim();
        let nf = self.face_dim();
        let mut out = DVector::zeros(self.ndofs);
        let cell_proj = self.basis.project(f, 2 * (self.k + 1) + 6)?;
        out.rows_mut(0, n).copy_from(&cell_proj);
        for le in 0..3 {
            let proj = face_bases[self.faces[le]].project(f, 2 * self.k + 8)?;
            out.rows_mut(n + le * nf, nf).copy_from(&proj);
        }
        Ok(out)
    }

    /// Solves the cell-cell block of a_K: the static condensation inner solve.
    pub fn solve_cell_block(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.cell_block.solve(rhs)
    }

    /// Coupling block a_K[cell, faces].
    pub fn cell_face_block(&self) -> DMatrix<f64> {
        let n = self.cell_dim();
        self.a.view((0, n), (n, self.ndofs - n)).into_owned()
    }

    /// Condensed face-face Schur complement and the condensation map
    /// X = (A_TT)^{-1} A_TF used for both rhs condensation and recovery.
    pub fn schur_complement(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.cell_dim();
        let nf3 = self.ndofs - n;
        let a_tf = self.cell_face_block();
        let x = self.cell_block.solve(&a_tf);
        let a_ff = self.a.view((n, n), (nf3, nf3)).into_owned();
        let mut s = a_ff - a_tf.transpose() * &x;
        s = (&s + s.transpose()) * 0.5;
        (s, x)
    }
}
