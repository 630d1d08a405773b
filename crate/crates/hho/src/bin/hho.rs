use clap::{Args, Parser, Subcommand};
use hho::cases::CaseId;
use hho::study::{run_study, subdivisions_for_cells, Mode, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Mixed-order hybrid high-order solver for elliptic diffusion with
/// adaptive mesh refinement driven by equilibrated-flux error estimators.
#[derive(Parser)]
#[command(name = "hho", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CaseArgs {
    /// Test case: ex1 | ex2 | ex3 | custom
    #[arg(long)]
    case: String,
    /// Mesh file for --case custom
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Problem config file for --case custom
    #[arg(long)]
    config: Option<PathBuf>,
}

impl CaseArgs {
    fn resolve(&self) -> Result<CaseId, String> {
        if self.case == "custom" {
            let mesh = self
                .mesh
                .as_ref()
                .ok_or("--case custom requires --mesh")?
                .display()
                .to_string();
            let config = self
                .config
                .as_ref()
                .ok_or("--case custom requires --config")?
                .display()
                .to_string();
            Ok(CaseId::Custom { mesh, config })
        } else {
            CaseId::parse(&self.case).map_err(|e| e.to_string())
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve on a sequence of uniformly refined meshes
    Solve {
        #[command(flatten)]
        case: CaseArgs,
        /// Face polynomial degree
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Number of uniform refinement steps
        #[arg(long, default_value_t = 4)]
        refinements: usize,
        /// Output CSV path
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-mesh VTU files
        #[arg(long)]
        vtu: Option<PathBuf>,
    },
    /// Adaptive solve-estimate-mark-refine loop
    Adapt {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Bulk-marking fraction in [0, 1]
        #[arg(long, default_value_t = 0.4)]
        theta: f64,
        /// Stop once the face dof count exceeds this
        #[arg(long, default_value_t = 10_000)]
        max_dofs: usize,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        vtu: Option<PathBuf>,
    },
    /// Sweep the polynomial degree on a fixed mesh
    Psweep {
        #[command(flatten)]
        case: CaseArgs,
        /// Cell count of the fixed structured mesh
        #[arg(long, default_value_t = 128)]
        cells: usize,
        /// Highest face degree
        #[arg(long, default_value_t = 9)]
        kmax: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build_config(cli: Cli) -> Result<RunConfig, String> {
    match cli.command {
        Command::Solve {
            case,
            k,
            refinements,
            out,
            vtu,
        } => {
            let mut cfg = RunConfig::new(case.resolve()?, Mode::Uniform);
            cfg.k = k;
            cfg.refinements = refinements;
            cfg.out = out;
            cfg.vtu_dir = vtu;
            Ok(cfg)
        }
        Command::Adapt {
            case,
            k,
            theta,
            max_dofs,
            max_iters,
            out,
            vtu,
        } => {
            if !(0.0..=1.0).contains(&theta) {
                return Err(format!("--theta {theta} outside [0, 1]"));
            }
            let mut cfg = RunConfig::new(case.resolve()?, Mode::Adaptive);
            cfg.k = k;
            cfg.theta = theta;
            cfg.max_dofs = max_dofs;
            cfg.max_iters = max_iters;
            cfg.out = out;
            cfg.vtu_dir = vtu;
            Ok(cfg)
        }
        Command::Psweep {
            case,
            cells,
            kmax,
            out,
        } => {
            let id = case.resolve()?;
            let n = subdivisions_for_cells(&id, cells).map_err(|e| e.to_string())?;
            let mut cfg = RunConfig::new(id, Mode::PSweep);
            cfg.kmax = kmax;
            cfg.subdivisions = Some(n);
            cfg.out = out;
            Ok(cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run_study(&config) {
        Ok(records) => {
            if config.out.is_none() {
                println!("{}", hho::study::CSV_HEADER);
                for r in &records {
                    println!("{}", r.to_line());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
