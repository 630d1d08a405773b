//! Built-in test problems and the custom mesh/config loader.

use crate::mesh::{generate_structured_mesh, read_mesh, Domain, Mesh};
use crate::solver::{ExactSolution, ProblemSpec};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

/// Interface-value constant of the checkerboard diffusion problem.
pub const KELLOGG_B: f64 = 161.4476387975881;
/// Singularity exponent of the checkerboard problem.
pub const KELLOGG_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaseId {
    Ex1Sine,
    Ex2LShape,
    Ex3Kellogg,
    Custom { mesh: String, config: String },
}

impl CaseId {
    pub fn parse(name: &str) -> Result<CaseId> {
        match name {
            "ex1" | "ex1_sine" => Ok(CaseId::Ex1Sine),
            "ex2" | "ex2_lshape" => Ok(CaseId::Ex2LShape),
            "ex3" | "ex3_kellogg" => Ok(CaseId::Ex3Kellogg),
            other => Err(Error::Parameter(format!("unknown case '{other}'"))),
        }
    }
}

fn ex1_problem() -> ProblemSpec {
    let value = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin();
    let gradient = |p: [f64; 2]| {
        [
            PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
            PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
        ]
    };
    ProblemSpec {
        diffusion: BTreeMap::from([(0, 1.0)]),
        load: Box::new(move |p| 2.0 * PI * PI * value(p)),
        dirichlet: Box::new(value),
        dirichlet_gradient: Some(Box::new(gradient)),
        neumann: Box::new(|_| 0.0),
        exact: Some(ExactSolution {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }),
        singular_point: None,
    }
}

/// Polar angle in [0, 2pi).
fn angle(p: [f64; 2]) -> f64 {
    let t = p[1].atan2(p[0]);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

fn ex2_problem() -> ProblemSpec {
    let value = |p: [f64; 2]| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        r.powf(2.0 / 3.0) * ((2.0 / 3.0) * angle(p)).sin()
    };
    let gradient = |p: [f64; 2]| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        if r2 == 0.0 {
            return [0.0, 0.0];
        }
        let r = r2.sqrt();
        let t = angle(p);
        let ur = (2.0 / 3.0) * r.powf(-1.0 / 3.0) * ((2.0 / 3.0) * t).sin();
        let ut_over_r = (2.0 / 3.0) * r.powf(-1.0 / 3.0) * ((2.0 / 3.0) * t).cos();
        [
            ur * t.cos() - ut_over_r * t.sin(),
            ur * t.sin() + ut_over_r * t.cos(),
        ]
    };
    ProblemSpec {
        diffusion: BTreeMap::from([(0, 1.0)]),
        load: Box::new(|_| 0.0),
        dirichlet: Box::new(value),
        dirichlet_gradient: Some(Box::new(gradient)),
        neumann: Box::new(|_| 0.0),
        exact: Some(ExactSolution {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }),
        singular_point: Some([0.0, 0.0]),
    }
}

/// Quadrant-wise angular profile of the checkerboard solution:
/// phi_i(theta) = c_i cos(alpha theta) + d_i sin(alpha theta).
#[derive(Debug, Clone, Copy)]
pub struct KelloggProfile {
    pub alpha: f64,
    /// Diffusion coefficient per quadrant, counterclockwise from (+,+).
    pub coeffs: [f64; 4],
    /// (c_i, d_i) per quadrant.
    pub modes: [[f64; 2]; 4],
    /// Periodicity residuals in (phi, A phi') after the Newton solve.
    pub residual: [f64; 2],
}

impl KelloggProfile {
    /// Solves the transmission conditions (continuity of phi and A phi'
    /// at the quadrant interfaces, 2pi-periodicity) by Newton iteration
    /// on the phase of the first quadrant.
    pub fn solve(alpha: f64, b: f64) -> Result<KelloggProfile> {
        let coeffs = [b, 1.0, b, 1.0];
        // State (phi, psi = A phi') and its phase derivative, propagated
        // through quadrant i from the interface at theta = i pi/2.
        let propagate = |delta: f64| -> ([[f64; 2]; 4], [f64; 2], [f64; 2]) {
            let mut phi = (alpha * delta).cos();
            let mut psi = coeffs[0] * alpha * (alpha * delta).sin();
            let mut dphi = -alpha * (alpha * delta).sin();
            let mut dpsi = coeffs[0] * alpha * alpha * (alpha * delta).cos();
            let mut modes = [[0.0; 2]; 4];
            for i in 0..4 {
                let a = coeffs[i];
                let t0 = alpha * (i as f64) * PI / 2.0;
                let t1 = alpha * ((i + 1) as f64) * PI / 2.0;
                let (s0, c0) = t0.sin_cos();
                let (s1, c1) = t1.sin_cos();
                let c = phi * c0 - psi / (a * alpha) * s0;
                let d = phi * s0 + psi / (a * alpha) * c0;
                let dc = dphi * c0 - dpsi / (a * alpha) * s0;
                let dd = dphi * s0 + dpsi / (a * alpha) * c0;
                modes[i] = [c, d];
                phi = c * c1 + d * s1;
                psi = a * alpha * (-c * s1 + d * c1);
                dphi = dc * c1 + dd * s1;
                dpsi = a * alpha * (-dc * s1 + dd * c1);
            }
            (modes, [phi, psi], [dphi, dpsi])
        };
        let mut delta = PI / 4.0;
        for _ in 0..50 {
            let (_, end, dend) = propagate(delta);
            let r = end[0] - (alpha * delta).cos();
            let dr = dend[0] + alpha * (alpha * delta).sin();
            if dr == 0.0 {
                break;
            }
            let step = r / dr;
            delta -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (modes, end, _) = propagate(delta);
        let residual = [
            end[0] - (alpha * delta).cos(),
            end[1] - coeffs[0] * alpha * (alpha * delta).sin(),
        ];
        let worst = residual[0].abs().max(residual[1].abs());
        if worst > 1e-12 {
            return Err(Error::Oracle(format!(
                "transmission conditions unresolved: residual {worst:.3e}"
            )));
        }
        Ok(KelloggProfile {
            alpha,
            coeffs,
            modes,
            residual,
        })
    }

    fn quadrant(theta: f64) -> usize {
        ((theta / (PI / 2.0)).floor() as usize).min(3)
    }

    pub fn phi(&self, theta: f64) -> f64 {
        let [c, d] = self.modes[Self::quadrant(theta)];
        c * (self.alpha * theta).cos() + d * (self.alpha * theta).sin()
    }

    pub fn phi_prime(&self, theta: f64) -> f64 {
        let [c, d] = self.modes[Self::quadrant(theta)];
        self.alpha * (-c * (self.alpha * theta).sin() + d * (self.alpha * theta).cos())
    }

    /// Maximum mismatch of (phi, A phi') across the four interfaces,
    /// evaluated from both sides.
    pub fn transmission_residual(&self) -> f64 {
        let mut worst: f64 = self.residual[0].abs().max(self.residual[1].abs());
        for i in 1..4 {
            let theta = i as f64 * PI / 2.0;
            let eval = |q: usize| {
                let [c, d] = self.modes[q];
                let phi = c * (self.alpha * theta).cos() + d * (self.alpha * theta).sin();
                let dphi = self.alpha
                    * (-c * (self.alpha * theta).sin() + d * (self.alpha * theta).cos());
                (phi, self.coeffs[q] * dphi)
            };
            let (p0, f0) = eval(i - 1);
            let (p1, f1) = eval(i);
            worst = worst.max((p0 - p1).abs()).max((f0 - f1).abs());
        }
        worst
    }
}

fn ex3_problem() -> Result<ProblemSpec> {
    let profile = KelloggProfile::solve(KELLOGG_ALPHA, KELLOGG_B)?;
    let alpha = KELLOGG_ALPHA;
    let value = move |p: [f64; 2]| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        r2.powf(alpha / 2.0) * profile.phi(angle(p))
    };
    let gradient = move |p: [f64; 2]| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        if r2 == 0.0 {
            return [0.0, 0.0];
        }
        let r = r2.sqrt();
        let t = angle(p);
        let f = profile.phi(t);
        let fp = profile.phi_prime(t);
        let s = r.powf(alpha - 1.0);
        [
            s * (alpha * t.cos() * f - t.sin() * fp),
            s * (alpha * t.sin() * f + t.cos() * fp),
        ]
    };
    Ok(ProblemSpec {
        diffusion: BTreeMap::from([(0, 1.0), (1, KELLOGG_B)]),
        load: Box::new(|_| 0.0),
        dirichlet: Box::new(value),
        dirichlet_gradient: Some(Box::new(gradient)),
        neumann: Box::new(|_| 0.0),
        exact: Some(ExactSolution {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }),
        singular_point: Some([0.0, 0.0]),
    })
}

/// Builds a built-in problem with its initial mesh. The subdivision count
/// `n` picks the structured starting mesh (see `generate_structured_mesh`).
pub fn builtin_case(id: &CaseId, n: usize) -> Result<(ProblemSpec, Mesh)> {
    match id {
        CaseId::Ex1Sine => Ok((ex1_problem(), generate_structured_mesh(Domain::Square, n)?)),
        CaseId::Ex2LShape => Ok((ex2_problem(), generate_structured_mesh(Domain::LShape, n)?)),
        CaseId::Ex3Kellogg => Ok((
            ex3_problem()?,
            generate_structured_mesh(Domain::KelloggSquare, n)?,
        )),
        CaseId::Custom { mesh, config } => custom_case(Path::new(mesh), Path::new(config)),
    }
}

/// Key-value config for custom runs. Problem data are constants:
/// `diffusion.<region>`, `load`, `dirichlet`, `neumann`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", ln + 1)))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn parse_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    map.get(key)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::Parse(format!("config key '{key}': bad number '{v}'")))
        })
        .transpose()
}

/// Loads a custom case: an ASCII mesh and a config file with constant
/// problem data.
pub fn custom_case(mesh_path: &Path, config_path: &Path) -> Result<(ProblemSpec, Mesh)> {
    let mesh = read_mesh(mesh_path)?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::Io(format!("{}: {e}", config_path.display())))?;
    let map = parse_config(&text)?;
    let mut diffusion = BTreeMap::new();
    for (key, value) in &map {
        if let Some(region) = key.strip_prefix("diffusion.") {
            let region: usize = region
                .parse()
                .map_err(|_| Error::Parse(format!("bad region id in key '{key}'")))?;
            let a: f64 = value
                .parse()
                .map_err(|_| Error::Parse(format!("config key '{key}': bad number '{value}'")))?;
            diffusion.insert(region, a);
        }
    }
    if let Some(a) = parse_f64(&map, "diffusion")? {
        diffusion.entry(0).or_insert(a);
    }
    if diffusion.is_empty() {
        diffusion.insert(0, 1.0);
    }
    // Every region appearing in the mesh needs a coefficient.
    for cell in &mesh.cells {
        if !diffusion.contains_key(&cell.region) {
            return Err(Error::Spec(format!(
                "mesh region {} has no diffusion coefficient in the config",
                cell.region
            )));
        }
    }
    let load = parse_f64(&map, "load")?.unwrap_or(0.0);
    let dirichlet = parse_f64(&map, "dirichlet")?.unwrap_or(0.0);
    let neumann = parse_f64(&map, "neumann")?.unwrap_or(0.0);
    let problem = ProblemSpec {
        diffusion,
        load: Box::new(move |_| load),
        dirichlet: Box::new(move |_| dirichlet),
        dirichlet_gradient: Some(Box::new(|_| [0.0, 0.0])),
        neumann: Box::new(move |_| neumann),
        exact: None,
        singular_point: None,
    };
    Ok((problem, mesh))
}
