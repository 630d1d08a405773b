//! Study orchestration: uniform-refinement convergence runs, adaptive
//! runs, p-sweeps on a fixed mesh, and CSV emission.

use crate::adapt::{adaptive_loop, AdaptConfig};
use crate::cases::{builtin_case, CaseId};
use crate::estimator::{energy_error, estimate};
use crate::mesh::{refine_uniform, Mesh};
use crate::solver::{reported_dofs, solve_problem, Discretization, ProblemSpec};
use crate::vtu::write_vtu;
use crate::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Uniform,
    Adaptive,
    PSweep,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: CaseId,
    pub mode: Mode,
    pub k: usize,
    pub theta: f64,
    /// Uniform mode: number of refinement steps after the initial mesh.
    pub refinements: usize,
    /// Adaptive mode: stop once the reported dof count exceeds this.
    pub max_dofs: usize,
    pub max_iters: usize,
    /// P-sweep: highest face degree.
    pub kmax: usize,
    /// Initial structured-mesh subdivision parameter; `None` picks the
    /// case default.
    pub subdivisions: Option<usize>,
    pub out: Option<PathBuf>,
    pub vtu_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(case: CaseId, mode: Mode) -> Self {
        RunConfig {
            case,
            mode,
            k: 1,
            theta: 0.4,
            refinements: 4,
            max_dofs: 10_000,
            max_iters: 200,
            kmax: 9,
            subdivisions: None,
            out: None,
            vtu_dir: None,
        }
    }
}

/// One CSV row. Column order matches `CSV_HEADER`.
#[derive(Debug, Clone, Copy)]
pub struct CsvRecord {
    pub iter: usize,
    pub cells: usize,
    pub dofs: usize,
    pub energy_error: f64,
    pub eta_total: f64,
    pub eta_res: f64,
    pub eta_sta: f64,
    pub eta_nor: f64,
    pub eta_tan: f64,
    pub osc: f64,
    pub effectivity: f64,
    pub pct_res: f64,
    pub pct_sta: f64,
    pub pct_nor: f64,
    pub pct_tan: f64,
}

pub const CSV_HEADER: &str = "iter,cells,dofs,energy_error,eta_total,eta_res,eta_sta,eta_nor,\
eta_tan,osc,effectivity,pct_res,pct_sta,pct_nor,pct_tan";

impl CsvRecord {
    pub fn to_line(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            self.cells,
            self.dofs,
            f(self.energy_error),
            f(self.eta_total),
            f(self.eta_res),
            f(self.eta_sta),
            f(self.eta_nor),
            f(self.eta_tan),
            f(self.osc),
            f(self.effectivity),
            f(self.pct_res),
            f(self.pct_sta),
            f(self.pct_nor),
            f(self.pct_tan),
        )
    }
}

pub fn write_csv(path: &Path, records: &[CsvRecord], failure: Option<&str>) -> Result<()> {
    let mut out = String::with_capacity(64 * (records.len() + 2));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    if let Some(msg) = failure {
        out.push_str(&format!("# FAILED: {msg}\n"));
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Default initial subdivision per case.
fn default_subdivisions(case: &CaseId) -> usize {
    match case {
        CaseId::Ex1Sine => 4,
        CaseId::Ex2LShape | CaseId::Ex3Kellogg | CaseId::Custom { .. } => 2,
    }
}

/// Subdivision parameter giving the requested structured cell count.
pub fn subdivisions_for_cells(case: &CaseId, cells: usize) -> Result<usize> {
    for n in 1..=512 {
        let count = match case {
            CaseId::Ex1Sine => 2 * n * n,
            CaseId::Ex2LShape => 2 * 3 * n * n,
            CaseId::Ex3Kellogg | CaseId::Custom { .. } => 2 * 4 * n * n,
        };
        if count == cells {
            return Ok(n);
        }
        if count > cells {
            break;
        }
    }
    Err(Error::Parameter(format!(
        "no structured mesh of this case has exactly {cells} cells"
    )))
}

fn record_for(
    iter: usize,
    mesh: &Mesh,
    problem: &ProblemSpec,
    k: usize,
    vtu_dir: Option<&Path>,
) -> Result<CsvRecord> {
    let disc = Discretization::new(mesh, problem, k)?;
    let solution = solve_problem(&disc, problem)?;
    let report = estimate(&disc, &solution, problem)?;
    let err = if problem.exact.is_some() {
        energy_error(&disc, &solution, problem)?
    } else {
        f64::NAN
    };
    if let Some(dir) = vtu_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("iter_{iter:04}.vtu"));
        write_vtu(&path, mesh, &disc, &solution, &report)?;
    }
    Ok(CsvRecord {
        iter,
        cells: mesh.cells.len(),
        dofs: reported_dofs(mesh, k),
        energy_error: err,
        eta_total: report.eta_total,
        eta_res: report.eta_res,
        eta_sta: report.eta_sta,
        eta_nor: report.eta_nor,
        eta_tan: report.eta_tan,
        osc: report.osc,
        effectivity: report.eta_total / err,
        pct_res: report.contributions[0],
        pct_sta: report.contributions[1],
        pct_nor: report.contributions[2],
        pct_tan: report.contributions[3],
    })
}

/// Runs a study and returns its records. Output files (CSV, VTU) are
/// written when paths are set; on failure a partial CSV is flushed with a
/// trailing failure marker.
pub fn run_study(config: &RunConfig) -> Result<Vec<CsvRecord>> {
    let result = run_study_inner(config);
    if let (Err(e), Some(path)) = (&result, &config.out) {
        let _ = write_csv(path, &[], Some(&e.to_string()));
    }
    result
}

fn run_study_inner(config: &RunConfig) -> Result<Vec<CsvRecord>> {
    let n = config
        .subdivisions
        .unwrap_or_else(|| default_subdivisions(&config.case));
    let (problem, initial) = builtin_case(&config.case, n)?;
    let vtu_dir = config.vtu_dir.as_deref();
    let mut records = Vec::new();
    match config.mode {
        Mode::Uniform => {
            let mut mesh = initial;
            for iter in 0..=config.refinements {
                records.push(record_for(iter, &mesh, &problem, config.k, vtu_dir)?);
                if iter < config.refinements {
                    mesh = refine_uniform(&mesh)?;
                }
            }
        }
        Mode::Adaptive => {
            let cfg = AdaptConfig {
                k: config.k,
                theta: config.theta,
                max_dofs: config.max_dofs,
                max_iters: config.max_iters,
            };
            let (history, final_mesh) = adaptive_loop(initial, &problem, &cfg)?;
            // Re-derive rows from the stored reports; the final mesh is
            // only re-solved for VTU output.
            for rec in &history {
                let err = rec.energy_error.unwrap_or(f64::NAN);
                records.push(CsvRecord {
                    iter: rec.iter,
                    cells: rec.cells,
                    dofs: rec.dofs,
                    energy_error: err,
                    eta_total: rec.report.eta_total,
                    eta_res: rec.report.eta_res,
                    eta_sta: rec.report.eta_sta,
                    eta_nor: rec.report.eta_nor,
                    eta_tan: rec.report.eta_tan,
                    osc: rec.report.osc,
                    effectivity: rec.report.eta_total / err,
                    pct_res: rec.report.contributions[0],
                    pct_sta: rec.report.contributions[1],
                    pct_nor: rec.report.contributions[2],
                    pct_tan: rec.report.contributions[3],
                });
            }
            if let Some(dir) = vtu_dir {
                let iter = history.len();
                record_for(iter, &final_mesh, &problem, config.k, Some(dir))?;
            }
        }
        Mode::PSweep => {
            for k in 0..=config.kmax {
                records.push(record_for(k, &initial, &problem, k, vtu_dir)?);
            }
        }
    }
    if let Some(path) = &config.out {
        write_csv(path, &records, None)?;
    }
    Ok(records)
}
