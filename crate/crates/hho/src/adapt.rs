//! Doerfler marking and the adaptive solve-estimate-mark-refine loop.

use crate::estimator::{energy_error, estimate, EstimatorReport};
use crate::mesh::{refine_nvb, Mesh};
use crate::solver::{reported_dofs, solve_problem, Discretization, ProblemSpec};
use crate::{Error, Result};

/// Greedy Doerfler marking: smallest cell set (by the greedy descending
/// scan) whose squared indicators sum to at least theta times the total.
/// Ties in the indicator are broken by cell id, ascending.
pub fn dorfler_mark(indicators_sq: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Marking(format!("theta {theta} outside (0, 1]")));
    }
    for (i, &v) in indicators_sq.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Marking(format!("indicator {i} is {v}")));
        }
    }
    let total: f64 = indicators_sq.iter().sum();
    if total == 0.0 {
        return Err(Error::Marking(
            "all indicators are zero; nothing to mark".into(),
        ));
    }
    let mut order: Vec<usize> = (0..indicators_sq.len()).collect();
    order.sort_by(|&a, &b| {
        indicators_sq[b]
            .partial_cmp(&indicators_sq[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let target = theta * total;
    let mut marked = Vec::new();
    let mut acc = 0.0;
    for &c in &order {
        // Zero-indicator cells never help the criterion; with the
        // descending order, the first zero ends the scan.
        if acc >= target || indicators_sq[c] == 0.0 {
            break;
        }
        marked.push(c);
        acc += indicators_sq[c];
    }
    marked.sort_unstable();
    Ok(marked)
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptConfig {
    pub k: usize,
    pub theta: f64,
    pub max_dofs: usize,
    pub max_iters: usize,
}

/// One completed iteration of the adaptive loop.
#[derive(Debug, Clone)]
pub struct AdaptRecord {
    pub iter: usize,
    pub cells: usize,
    pub dofs: usize,
    pub energy_error: Option<f64>,
    pub report: EstimatorReport,
}

/// Runs solve -> estimate -> mark -> refine until the reported dof count
/// exceeds `max_dofs` or `max_iters` refinements complete; the final mesh
/// is solved and estimated but not refined, so `max_iters = 0` yields a
/// single record. The mesh of the final iteration is returned alongside
/// the history.
pub fn adaptive_loop(
    initial: Mesh,
    problem: &ProblemSpec,
    config: &AdaptConfig,
) -> Result<(Vec<AdaptRecord>, Mesh)> {
    let mut mesh = initial;
    let mut history = Vec::new();
    for iter in 0..=config.max_iters {
        let disc = Discretization::new(&mesh, problem, config.k)?;
        let solution = solve_problem(&disc, problem)?;
        let report = estimate(&disc, &solution, problem)?;
        let err = if problem.exact.is_some() {
            Some(energy_error(&disc, &solution, problem)?)
        } else {
            None
        };
        let dofs = reported_dofs(&mesh, config.k);
        let markers: Vec<f64> = report.cells.iter().map(|e| e.marker_squared()).collect();
        history.push(AdaptRecord {
            iter,
            cells: mesh.cells.len(),
            dofs,
            energy_error: err,
            report,
        });
        if iter == config.max_iters || dofs > config.max_dofs {
            break;
        }
        if markers.iter().all(|&m| m == 0.0) {
            break;
        }
        let marked = dorfler_mark(&markers, config.theta)?;
        mesh = refine_nvb(&mesh, &marked)?;
    }
    Ok((history, mesh))
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_rate(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Parameter("rate fit needs two or more points".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        return Err(Error::Parameter("rate fit abscissae are constant".into()));
    }
    Ok(num / den)
}
