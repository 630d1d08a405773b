//! Global assembly with static condensation onto the face unknowns,
//! Dirichlet elimination, sparse SPD solve, and cell-unknown recovery.

use crate::basis::FaceBasis;
use crate::local::LocalOperators;
use crate::mesh::{FaceKind, Mesh};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
use std::collections::BTreeMap;

pub type ScalarFn = Box<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type GradientFn = Box<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Exact solution attached to a benchmark problem.
pub struct ExactSolution {
    pub value: ScalarFn,
    pub gradient: GradientFn,
}

/// Diffusion problem data: -div(A grad u) = f with piecewise-constant A,
/// Dirichlet data g_D, and Neumann data g_N.
pub struct ProblemSpec {
    /// Diffusion coefficient per mesh region id; all values positive.
    pub diffusion: BTreeMap<usize, f64>,
    pub load: ScalarFn,
    pub dirichlet: ScalarFn,
    /// Gradient of an extension of g_D, used for tangential derivatives
    /// along Dirichlet faces; finite differences are used when absent.
    pub dirichlet_gradient: Option<GradientFn>,
    pub neumann: ScalarFn,
    pub exact: Option<ExactSolution>,
    /// Point singularity of the exact solution, if any; quadrature is
    /// elevated on cells touching it.
    pub singular_point: Option<[f64; 2]>,
}

impl ProblemSpec {
    /// Homogeneous-data problem with unit diffusion on region 0.
    pub fn poisson_unit(load: ScalarFn) -> Self {
        Self {
            diffusion: BTreeMap::from([(0, 1.0)]),
            load,
            dirichlet: Box::new(|_| 0.0),
            dirichlet_gradient: None,
            neumann: Box::new(|_| 0.0),
            exact: None,
            singular_point: None,
        }
    }

    pub fn diffusion_of(&self, region: usize) -> Result<f64> {
        let a = *self
            .diffusion
            .get(&region)
            .ok_or_else(|| Error::Spec(format!("no diffusion coefficient for region {region}")))?;
        if a <= 0.0 {
            return Err(Error::Spec(format!(
                "diffusion coefficient for region {region} is {a}, must be positive"
            )));
        }
        Ok(a)
    }
}

/// Face-dof numbering. Dirichlet faces carry no global unknowns.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Global offset of each face's first dof, `None` for Dirichlet faces.
    pub face_offset: Vec<Option<usize>>,
    /// Dofs per face (k+1).
    pub per_face: usize,
    /// Total number of free dofs.
    pub ndofs: usize,
}

/// Builds the contiguous face-dof numbering in ascending face-id order.
pub fn build_dof_map(mesh: &Mesh, k: usize) -> Result<DofMap> {
    if !mesh.faces.iter().any(|f| f.kind == FaceKind::Dirichlet) {
        return Err(Error::Spec(
            "mesh has no Dirichlet face; the problem is not well-posed".into(),
        ));
    }
    let per_face = k + 1;
    let mut face_offset = Vec::with_capacity(mesh.faces.len());
    let mut next = 0;
    for face in &mesh.faces {
        if face.kind == FaceKind::Dirichlet {
            face_offset.push(None);
        } else {
            face_offset.push(Some(next));
            next += per_face;
        }
    }
    Ok(DofMap {
        face_offset,
        per_face,
        ndofs: next,
    })
}

/// Face dofs coupled in the global system, the paper's reported DoF count
/// (interior faces only).
pub fn reported_dofs(mesh: &Mesh, k: usize) -> usize {
    (k + 1) * mesh.interior_face_count()
}

/// Mesh-level HHO discretization: one face basis per face and the local
/// operators of every cell.
pub struct Discretization<'m> {
    pub mesh: &'m Mesh,
    pub k: usize,
    pub face_bases: Vec<FaceBasis>,
    pub local: Vec<LocalOperators>,
}

impl<'m> Discretization<'m> {
    pub fn new(mesh: &'m Mesh, problem: &ProblemSpec, k: usize) -> Result<Self> {
        let face_bases = mesh
            .faces
            .iter()
            .map(|f| {
                FaceBasis::new(
                    mesh.vertices[f.vertices[0]].coords,
                    mesh.vertices[f.vertices[1]].coords,
                    k,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let local = (0..mesh.cells.len())
            .map(|c| {
                let a = problem.diffusion_of(mesh.cells[c].region)?;
                LocalOperators::build(mesh, c, k, &face_bases, a)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mesh,
            k,
            face_bases,
            local,
        })
    }
}

/// Discrete solution: per-cell P^{k+1} coefficients and per-face P^k
/// coefficients in the orthonormal bases of a [`Discretization`].
#[derive(Debug, Clone)]
pub struct HhoSolution {
    pub k: usize,
    pub cell_coeffs: Vec<DVector<f64>>,
    pub face_coeffs: Vec<DVector<f64>>,
}

impl HhoSolution {
    /// Local dof vector (cell coefficients, then face coefficients in
    /// local edge order) of one cell.
    pub fn local_dofs(&self, disc: &Discretization, cell: usize) -> DVector<f64> {
        let ops = &disc.local[cell];
        let n = ops.cell_dim();
        let nf = ops.face_dim();
        let mut out = DVector::zeros(ops.ndofs);
        out.rows_mut(0, n).copy_from(&self.cell_coeffs[cell]);
        for le in 0..3 {
            out.rows_mut(n + le * nf, nf).copy_from(&self.face_coeffs[ops.faces[le]]);
        }
        out
    }
}

/// Statically condensed global system plus the data needed to recover the
/// cell unknowns.
pub struct CondensedSystem {
    pub matrix: CscMatrix<f64>,
    pub rhs: DVector<f64>,
    pub dof_map: DofMap,
    /// Dirichlet face coefficients (projections of g_D), where applicable.
    pub dirichlet_values: Vec<Option<DVector<f64>>>,
    /// Per-cell load vectors (f, phi_i)_K.
    pub cell_loads: Vec<DVector<f64>>,
    /// Per-face Neumann load vectors (g_N, psi_m)_F.
    pub face_loads: Vec<Option<DVector<f64>>>,
}

/// Assembles the Schur complement on the face unknowns. Dirichlet dofs are
/// eliminated by moving the lifted columns to the right-hand side.
pub fn assemble(disc: &Discretization, problem: &ProblemSpec) -> Result<CondensedSystem> {
    let mesh = disc.mesh;
    let k = disc.k;
    let nf = k + 1;
    let dof_map = build_dof_map(mesh, k)?;

    let mut dirichlet_values: Vec<Option<DVector<f64>>> = vec![None; mesh.faces.len()];
    let mut face_loads: Vec<Option<DVector<f64>>> = vec![None; mesh.faces.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        match face.kind {
            FaceKind::Dirichlet => {
                dirichlet_values[f] =
                    Some(disc.face_bases[f].project(&|p| (problem.dirichlet)(p), 2 * k + 8)?);
            }
            FaceKind::Neumann => {
                face_loads[f] =
                    Some(disc.face_bases[f].project(&|p| (problem.neumann)(p), 2 * k + 8)?);
            }
            FaceKind::Interior => {}
        }
    }

    let mut coo = CooMatrix::new(dof_map.ndofs, dof_map.ndofs);
    let mut rhs = DVector::zeros(dof_map.ndofs);
    let mut cell_loads = Vec::with_capacity(mesh.cells.len());

    for (c, ops) in disc.local.iter().enumerate() {
        let (schur, cond_map) = ops.schur_complement();
        let load = ops.basis.project(&|p| (problem.load)(p), 2 * (k + 1) + 6)?;
        // Condensed local rhs on the face dofs.
        let mut local_rhs = cond_map.transpose() * &load * -1.0;
        for le in 0..3 {
            if let Some(gn) = &face_loads[ops.faces[le]] {
                let mut seg = local_rhs.rows_mut(le * nf, nf);
                seg += gn;
            }
        }
        // Scatter; Dirichlet columns go to the rhs.
        for le_i in 0..3 {
            let fi = ops.faces[le_i];
            let Some(oi) = dof_map.face_offset[fi] else { continue };
            for le_j in 0..3 {
                let fj = ops.faces[le_j];
                match dof_map.face_offset[fj] {
                    Some(oj) => {
                        for i in 0..nf {
                            for j in 0..nf {
                                coo.push(oi + i, oj + j, schur[(le_i * nf + i, le_j * nf + j)]);
                            }
                        }
                    }
                    None => {
                        let g = dirichlet_values[fj].as_ref().unwrap();
                        for i in 0..nf {
                            let mut s = 0.0;
                            for j in 0..nf {
                                s += schur[(le_i * nf + i, le_j * nf + j)] * g[j];
                            }
                            rhs[oi + i] -= s;
                        }
                    }
                }
            }
            for i in 0..nf {
                rhs[oi + i] += local_rhs[le_i * nf + i];
            }
        }
        let _ = c;
        cell_loads.push(load);
    }

    Ok(CondensedSystem {
        matrix: CscMatrix::from(&coo),
        rhs,
        dof_map,
        dirichlet_values,
        cell_loads,
        face_loads,
    })
}

/// Size threshold between the sparse direct solve and conjugate gradients.
const DIRECT_SOLVE_MAX_DOFS: usize = 200_000;

/// Solves the SPD system to the requested relative residual.
pub fn solve_linear(matrix: &CscMatrix<f64>, rhs: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = matrix.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    if rhs.norm() == 0.0 {
        return Ok(DVector::zeros(n));
    }
    let x = if n <= DIRECT_SOLVE_MAX_DOFS {
        let perm = reverse_cuthill_mckee(matrix);
        let permuted = permute_symmetric(matrix, &perm);
        let chol = CscCholesky::factor(&permuted)
            .map_err(|e| Error::Solver(format!("sparse Cholesky failed: {e:?}")))?;
        let mut pb = DVector::zeros(n);
        for (new, &old) in perm.iter().enumerate() {
            pb[new] = rhs[old];
        }
        let mut py: DVector<f64> = chol.solve(&pb).column(0).into_owned();
        // Iterative refinement recovers the digits a single factorized
        // solve loses on ill-conditioned systems (strong coefficient
        // contrast, graded meshes).
        for _ in 0..3 {
            let r = &pb - &permuted * &py;
            if r.norm() <= tol * pb.norm() {
                break;
            }
            py += chol.solve(&r).column(0).into_owned();
        }
        let mut x = DVector::zeros(n);
        for (new, &old) in perm.iter().enumerate() {
            x[old] = py[new];
        }
        x
    } else {
        pcg_jacobi(matrix, rhs, tol)?
    };
    // Normwise backward error; normalizing by ||b|| alone is unreachable
    // when ||A|| ||x|| >> ||b|| (zero load with strong diffusion contrast).
    let anorm: f64 = matrix.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let res = (matrix * &x - rhs).norm() / (anorm * x.norm() + rhs.norm());
    if res > tol.max(1e-12) {
        return Err(Error::Solver(format!(
            "linear solve reached backward error {res:.3e} > tolerance"
        )));
    }
    Ok(x)
}

fn reverse_cuthill_mckee(matrix: &CscMatrix<f64>) -> Vec<usize> {
    let n = matrix.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (col, col_vec) in matrix.col_iter().enumerate() {
        for &row in col_vec.row_indices() {
            if row != col {
                adj[col].push(row);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.sort_by_key(|&v| adj[v].len());
    for &start in &nodes {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (adj[u].len(), u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn permute_symmetric(matrix: &CscMatrix<f64>, perm: &[usize]) -> CscMatrix<f64> {
    let n = matrix.nrows();
    let mut inv = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut coo = CooMatrix::new(n, n);
    for (col, col_vec) in matrix.col_iter().enumerate() {
        for (&row, &val) in col_vec.row_indices().iter().zip(col_vec.values()) {
            coo.push(inv[row], inv[col], val);
        }
    }
    CscMatrix::from(&coo)
}

fn pcg_jacobi(matrix: &CscMatrix<f64>, rhs: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let n = matrix.nrows();
    let mut diag = DVector::zeros(n);
    for (col, col_vec) in matrix.col_iter().enumerate() {
        for (&row, &val) in col_vec.row_indices().iter().zip(col_vec.values()) {
            if row == col {
                diag[col] = val;
            }
        }
    }
    let bnorm = rhs.norm();
    let mut x = DVector::zeros(n);
    let mut r = rhs.clone();
    let mut z = r.component_div(&diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let max_iters = 40 * n + 1000;
    for _ in 0..max_iters {
        if r.norm() <= tol * bnorm {
            return Ok(x);
        }
        let ap = matrix * &p;
        let alpha = rz / p.dot(&ap);
        x += &p * alpha;
        r -= ap * alpha;
        z = r.component_div(&diag);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(Error::Solver(format!(
        "PCG did not converge: relative residual {:.3e}",
        r.norm() / bnorm
    )))
}

/// Recovers the cell unknowns from the condensed face solution.
pub fn recover_solution(
    disc: &Discretization,
    system: &CondensedSystem,
    face_solution: &DVector<f64>,
) -> Result<HhoSolution> {
    if face_solution.len() != system.dof_map.ndofs {
        return Err(Error::Structural(format!(
            "face vector has {} entries, dof map expects {}",
            face_solution.len(),
            system.dof_map.ndofs
        )));
    }
    let nf = disc.k + 1;
    let mut face_coeffs = Vec::with_capacity(disc.mesh.faces.len());
    for f in 0..disc.mesh.faces.len() {
        match system.dof_map.face_offset[f] {
            Some(o) => face_coeffs.push(face_solution.rows(o, nf).into_owned()),
            None => face_coeffs.push(system.dirichlet_values[f].clone().unwrap()),
        }
    }
    let mut cell_coeffs = Vec::with_capacity(disc.mesh.cells.len());
    for (c, ops) in disc.local.iter().enumerate() {
        let mut uf = DVector::zeros(3 * nf);
        for le in 0..3 {
            uf.rows_mut(le * nf, nf).copy_from(&face_coeffs[ops.faces[le]]);
        }
        let rhs = &system.cell_loads[c] - ops.cell_face_block() * uf;
        cell_coeffs.push(ops.solve_cell_block(&rhs));
    }
    Ok(HhoSolution {
        k: disc.k,
        cell_coeffs,
        face_coeffs,
    })
}

/// Full pipeline: assemble, condensed solve, recovery.
pub fn solve_problem(disc: &Discretization, problem: &ProblemSpec) -> Result<HhoSolution> {
    let system = assemble(disc, problem)?;
    let x = solve_linear(&system.matrix, &system.rhs, 1e-12)?;
    recover_solution(disc, &system, &x)
}

/// Dof cap for the dense verification path.
const ORACLE_MAX_DOFS: usize = 8000;

/// Solves the full uncondensed system (all cell and face unknowns) by
/// dense factorization. Verification oracle for static condensation.
pub fn solve_uncondensed_oracle(
    disc: &Discretization,
    problem: &ProblemSpec,
) -> Result<HhoSolution> {
    let mesh = disc.mesh;
    let k = disc.k;
    let nf = k + 1;
    let dof_map = build_dof_map(mesh, k)?;
    let n_cell_dofs: usize = disc.local.iter().map(|o| o.cell_dim()).sum();
    let total = n_cell_dofs + dof_map.ndofs;
    if total > ORACLE_MAX_DOFS {
        return Err(Error::Oracle(format!(
            "uncondensed system has {total} dofs, oracle cap is {ORACLE_MAX_DOFS}"
        )));
    }

    let mut dirichlet_values: Vec<Option<DVector<f64>>> = vec![None; mesh.faces.len()];
    for (f, face) in mesh.faces.iter().enumerate() {
        if face.kind == FaceKind::Dirichlet {
            dirichlet_values[f] =
                Some(disc.face_bases[f].project(&|p| (problem.dirichlet)(p), 2 * k + 8)?);
        }
    }

    // Global dof ids per local dof of each cell; Dirichlet dofs get None.
    let mut cell_start = Vec::with_capacity(mesh.cells.len());
    let mut next = 0;
    for ops in &disc.local {
        cell_start.push(next);
        next += ops.cell_dim();
    }
    let global_of = |c: usize, local: usize| -> Option<usize> {
        let ops = &disc.local[c];
        let n = ops.cell_dim();
        if local < n {
            return Some(cell_start[c] + local);
        }
        let le = (local - n) / nf;
        let m = (local - n) % nf;
        dof_map.face_offset[ops.faces[le]].map(|o| n_cell_dofs + o + m)
    };

    let mut a = DMatrix::zeros(total, total);
    let mut b = DVector::zeros(total);
    for (c, ops) in disc.local.iter().enumerate() {
        let load = ops.basis.project(&|p| (problem.load)(p), 2 * (k + 1) + 6)?;
        let n = ops.cell_dim();
        for i in 0..ops.ndofs {
            let Some(gi) = global_of(c, i) else { continue };
            if i < n {
                b[gi] += load[i];
            } else {
                let le = (i - n) / nf;
                let fid = ops.faces[le];
                if mesh.faces[fid].kind == FaceKind::Neumann {
                    let gn =
                        disc.face_bases[fid].project(&|p| (problem.neumann)(p), 2 * k + 8)?;
                    b[gi] += gn[(i - n) % nf];
                }
            }
            for j in 0..ops.ndofs {
                match global_of(c, j) {
                    Some(gj) => a[(gi, gj)] += ops.a[(i, j)],
                    None => {
                        let le = (j - n) / nf;
                        let g = dirichlet_values[ops.faces[le]].as_ref().unwrap();
                        b[gi] -= ops.a[(i, j)] * g[(j - n) % nf];
                    }
                }
            }
        }
    }
    a = (&a + a.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(a)
        .ok_or_else(|| Error::Oracle("uncondensed matrix not positive definite".into()))?;
    let x = chol.solve(&b);

    let mut face_coeffs = Vec::with_capacity(mesh.faces.len());
    for f in 0..mesh.faces.len() {
        match dof_map.face_offset[f] {
            Some(o) => face_coeffs.push(x.rows(n_cell_dofs + o, nf).into_owned()),
            None => face_coeffs.push(dirichlet_values[f].clone().unwrap()),
        }
    }
    let cell_coeffs = disc
        .local
        .iter()
        .enumerate()
        .map(|(c, ops)| x.rows(cell_start[c], ops.cell_dim()).into_owned())
        .collect();
    Ok(HhoSolution {
        k,
        cell_coeffs,
        face_coeffs,
    })
}

/// Maximum absolute Galerkin residual a_h(u,w) - l_h(w) over all free test
/// dofs (cell dofs and non-Dirichlet face dofs).
pub fn galerkin_residual(
    disc: &Discretization,
    problem: &ProblemSpec,
    solution: &HhoSolution,
) -> Result<f64> {
    let mesh = disc.mesh;
    let k = disc.k;
    let nf = k + 1;
    let mut face_res: Vec<DVector<f64>> = mesh
        .faces
        .iter()
        .map(|_| DVector::zeros(nf))
        .collect();
    let mut max_cell = 0.0f64;
    for (c, ops) in disc.local.iter().enumerate() {
        let local = solution.local_dofs(disc, c);
        let mut r = &ops.a * local;
        let load = ops.basis.project(&|p| (problem.load)(p), 2 * (k + 1) + 6)?;
        let n = ops.cell_dim();
        for i in 0..n {
            r[i] -= load[i];
        }
        for le in 0..3 {
            let f = ops.faces[le];
            if mesh.faces[f].kind == FaceKind::Neumann {
                let gn = disc.face_bases[f].project(&|p| (problem.neumann)(p), 2 * k + 8)?;
                for m in 0..nf {
                    r[n + le * nf + m] -= gn[m];
                }
            }
        }
        max_cell = max_cell.max(r.rows(0, n).amax());
        for le in 0..3 {
            let acc = &mut face_res[ops.faces[le]];
            *acc += r.rows(n + le * nf, nf);
        }
    }
    let mut max_face = 0.0f64;
    for (f, face) in mesh.faces.iter().enumerate() {
        if face.kind != FaceKind::Dirichlet {
            max_face = max_face.max(face_res[f].amax());
        }
    }
    Ok(max_cell.max(max_face))
}
