//! Numerical fluxes, local conservation, the four error indicators,
//! oscillation terms, total estimator arithmetic, and the energy error.

use hho::cases::{builtin_case, CaseId};
use hho::estimator::{
    conservation_residual, energy_error, estimate, numerical_flux, total_estimator, CellEstimate,
    EstimatorReport,
};
use hho::mesh::{generate_structured_mesh, Domain, FaceKind};
use hho::quadrature::face_quadrature;
use hho::solver::{solve_problem, Discretization, ExactSolution, ProblemSpec};
use nalgebra::DVector;

fn harmonic_quadratic_problem() -> ProblemSpec {
    let u = |p: [f64; 2]| p[0] * p[0] - p[1] * p[1];
    let grad = |p: [f64; 2]| [2.0 * p[0], -2.0 * p[1]];
    let mut problem = ProblemSpec::poisson_unit(Box::new(|_| 0.0));
    problem.dirichlet = Box::new(u);
    problem.dirichlet_gradient = Some(Box::new(grad));
    problem.exact = Some(ExactSolution {
        value: Box::new(u),
        gradient: Box::new(grad),
    });
    problem
}

#[test]
fn zero_solution_has_zero_flux() {
    let mesh = generate_structured_mesh(Domain::Square, 2).unwrap();
    let problem = ProblemSpec::poisson_unit(Box::new(|_| 0.0));
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let sol = solve_problem(&disc, &problem).unwrap();
    for (f, face) in mesh.faces.iter().enumerate() {
        let phi = numerical_flux(&disc, &sol, face.cells[0], f).unwrap();
        assert!(phi.norm() < 1e-13);
    }
}

#[test]
fn flux_of_polynomial_solution_is_projected_normal_flux() {
    // For an exactly reproduced solution the penalty part vanishes, so
    // the flux equals the face projection of -A grad u . n.
    let mesh = generate_structured_mesh(Domain::Square, 2).unwrap();
    let problem = harmonic_quadratic_problem();
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let sol = solve_problem(&disc, &problem).unwrap();
    for (f, face) in mesh.faces.iter().enumerate() {
        let c = face.cells[0];
        let le = mesh.local_edge(c, f).unwrap();
        let nrm = mesh.outward_normal(c, le);
        let fb = &disc.face_bases[f];
        let expected = fb
            .project(
                &|p| -(2.0 * p[0] * nrm[0] - 2.0 * p[1] * nrm[1]),
                2 * disc.k + 8,
            )
            .unwrap();
        let phi = numerical_flux(&disc, &sol, c, f).unwrap();
        assert!((phi - expected).amax() < 1e-9, "face {f}");
    }
}

#[test]
fn flux_matches_direct_quadrature_oracle() {
    // Recompute the flux definition by quadrature against the face basis
    // and compare coefficientwise on a non-polynomial solution.
    let (problem, mesh) = builtin_case(&CaseId::Ex1Sine, 2).unwrap();
    let disc = Discretization::new(&mesh, &problem, 2).unwrap();
    let sol = solve_problem(&disc, &problem).unwrap();
    let k = disc.k;
    let rule = face_quadrature(2 * (k + 2) + 4).unwrap();
    for (f, face) in mesh.faces.iter().enumerate() {
        let c = face.cells[0];
        let le = mesh.local_edge(c, f).unwrap();
        let ops = &disc.local[c];
        let nrm = mesh.outward_normal(c, le);
        let fb = &disc.face_bases[f];
        let rec = ops.reconstruct(&sol.local_dofs(&disc, c));
        let penalty = ((k + 1) * (k + 1)) as f64 / ops.diameter;
        let trace = &ops.trace_proj[le] * &sol.cell_coeffs[c];
        let diff = trace - &sol.face_coeffs[f];
        let mut oracle = DVector::zeros(k + 1);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let p = fb.point(t);
            let (gx, gy) = ops.basis.eval_grad(p);
            let gn = gx.dot(&rec) * nrm[0] + gy.dot(&rec) * nrm[1];
            let jump = fb.eval_t(t).dot(&diff);
            let val = ops.diffusion * (-gn + penalty * jump);
            oracle += fb.eval_t(t) * (w * fb.length * val);
        }
        let phi = numerical_flux(&disc, &sol, c, f).unwrap();
        assert!((phi - oracle).amax() < 1e-10, "face {f}");
    }
}

#[test]
fn conservation_holds_and_detects_perturbation() {
    let (problem, mesh) = builtin_case(&CaseId::Ex1Sine, 4).unwrap();
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let mut sol = solve_problem(&disc, &problem).unwrap();
    let res = conservation_residual(&disc, &sol, &problem).unwrap();
    assert!(res < 1e-10, "conservation residual {res}");

    // Breaking one interior face coefficient must be flagged.
    let f = mesh
        .faces
        .iter()
        .position(|f| f.kind == FaceKind::Interior)
        .unwrap();
    sol.face_coeffs[f][0] += 1e-3;
    let broken = conservation_residual(&disc, &sol, &problem).unwrap();
    assert!(broken > 1e-5, "perturbed residual {broken}");
}

#[test]
fn estimator_vanishes_on_exact_polynomial_solution() {
    let mesh = generate_structured_mesh(Domain::Square, 2).unwrap();
    let problem = harmonic_quadratic_problem();
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let sol = solve_problem(&disc, &problem).unwrap();
    let report = estimate(&disc, &sol, &problem).unwrap();
    assert!(report.eta_total < 1e-9, "eta_total {}", report.eta_total);
    let err = energy_error(&disc, &sol, &problem).unwrap();
    assert!(err < 1e-9, "energy error {err}");
}

#[test]
fn lowest_order_lshape_estimator_is_pure_tangential_jump() {
    // f = 0 and k = 0: the volume residual is identically zero and the
    // stabilization and normal jumps vanish to rounding.
    let (problem, mesh) = builtin_case(&CaseId::Ex2LShape, 2).unwrap();
    let disc = Discretization::new(&mesh, &problem, 0).unwrap();
    let sol = solve_problem(&disc, &problem).unwrap();
    let report = estimate(&disc, &sol, &problem).unwrap();
    assert_eq!(report.eta_res, 0.0);
    assert!(report.eta_tan > 0.0);
    assert!(report.eta_sta <= 1e-9 * report.eta_tan);
    assert!(report.eta_nor <= 1e-9 * report.eta_tan);
}

fn synthetic_report(stas: &[f64], nors: &[f64]) -> EstimatorReport {
    let cells: Vec<CellEstimate> = stas
        .iter()
        .zip(nors)
        .map(|(&s, &n)| CellEstimate {
            eta_sta: s,
            eta_nor: n,
            ..CellEstimate::default()
        })
        .collect();
    EstimatorReport {
        k: 0,
        cells,
        eta_res: 0.0,
        eta_sta: 0.0,
        eta_nor: 0.0,
        eta_tan: 0.0,
        osc: 0.0,
        eta_total: 0.0,
        eta_total_with_nor: 0.0,
        contributions: [0.0; 4],
    }
}

#[test]
fn total_estimator_min_term_arithmetic() {
    // sum eta_sta^2 = 4, sum eta_nor^2 = 3.
    let report = synthetic_report(&[2.0f64.sqrt(), 2.0f64.sqrt()], &[1.0, 2.0f64.sqrt()]);
    // k = 1: min(1 * 4, 3) = 3, plus the base sta sum 4.
    let t1 = total_estimator(&report, 1);
    assert!((t1 - (4.0f64 + 3.0).sqrt()).abs() < 1e-14);
    // k = 0: min term is zero.
    let t0 = total_estimator(&report, 0);
    assert!((t0 - 2.0).abs() < 1e-14);
    // k = 2: min(2 * 4, 3) = 3 still.
    let t2 = total_estimator(&report, 2);
    assert!((t2 - (4.0f64 + 3.0).sqrt()).abs() < 1e-14);
}

#[test]
fn report_totals_match_per_cell_formula() {
    let (problem, mesh) = builtin_case(&CaseId::Ex1Sine, 4).unwrap();
    for k in [0usize, 1, 2] {
        let disc = Discretization::new(&mesh, &problem, k).unwrap();
        let sol = solve_problem(&disc, &problem).unwrap();
        let report = estimate(&disc, &sol, &problem).unwrap();
        let recomputed = total_estimator(&report, k);
        assert!(
            (report.eta_total - recomputed).abs() <= 1e-12 * recomputed,
            "k={k}"
        );
        let pct_sum: f64 = report.contributions.iter().sum();
        assert!((pct_sum - 100.0).abs() < 1e-9, "k={k}: {pct_sum}");
    }
}

#[test]
fn energy_error_of_perturbed_solution_matches_local_forms() {
    // Start from an exactly reproduced polynomial, inject a known cell-mode
    // perturbation, and check against A_K (c^2 stiff_ii + S(v, v)).
    let mesh = generate_structured_mesh(Domain::Square, 2).unwrap();
    let problem = harmonic_quadratic_problem();
    let disc = Discretization::new(&mesh, &problem, 1).unwrap();
    let mut sol = solve_problem(&disc, &problem).unwrap();
    let c = 3usize;
    let i = 2usize;
    let amp = 0.37;
    sol.cell_coeffs[c][i] += amp;
    let ops = &disc.local[c];
    let local = sol.local_dofs(&disc, c);
    let expected_sq =
        ops.diffusion * (amp * amp * ops.stiff[(i, i)] + ops.stabilization(&local));
    let err = energy_error(&disc, &sol, &problem).unwrap();
    assert!(
        (err * err - expected_sq).abs() <= 1e-9 * expected_sq.max(1.0),
        "err^2={} expected={}",
        err * err,
        expected_sq
    );
}

#[test]
fn stabilization_matches_assembled_quadratic_form() {
    // The factored evaluation and the assembled matrix agree on a real
    // solution at moderate magnitudes.
    let (problem, mesh) = builtin_case(&CaseId::Ex1Sine, 4).unwrap();
    let disc = Discretization::new(&mesh, &problem, 2).unwrap();
    let sol = solve_problem(&disc, &problem).unwrap();
    for (c, ops) in disc.local.iter().enumerate() {
        let v = sol.local_dofs(&disc, c);
        let factored = ops.stabilization(&v);
        let matrix_form = (v.transpose() * &ops.stab * &v)[(0, 0)];
        assert!(
            (factored - matrix_form).abs() <= 1e-11 * (1.0 + factored.abs()),
            "cell {c}: {factored} vs {matrix_form}"
        );
    }
}

#[test]
fn effectivity_is_moderate_on_smooth_benchmark() {
    let (problem, mesh) = builtin_case(&CaseId::Ex1Sine, 8).unwrap();
    for k in [1usize, 2] {
        let disc = Discretization::new(&mesh, &problem, k).unwrap();
        let sol = solve_problem(&disc, &problem).unwrap();
        let report = estimate(&disc, &sol, &problem).unwrap();
        let err = energy_error(&disc, &sol, &problem).unwrap();
        let eff = report.eta_total / err;
        assert!((1.0..10.0).contains(&eff), "k={k}: effectivity {eff}");
    }
}
