use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icrfem::experiments::write_sliver_csv;
use icrfem::{Example2Shape, ExampleId, InterfaceFaceRule, Matrix3, RunConfig, SliverConfig};

#[derive(Parser, Debug)]
#[command(name = "icrfem", version, about = "Immersed Crouzeix-Raviart FEM experiments")]
struct Cli {
    /// Worker threads for assembly and the solver.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convergence table for a built-in problem.
    Run(RunArgs),
    /// Condition numbers for the plane interface x = x0 over positions and contrasts.
    Sliver(SliverArgs),
    /// Interpolation errors of the IFE interpolant (no solve).
    Interp(RunArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Shape {
    Ellipsoid,
    XOnly,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FaceRule {
    SignOrCut,
    Sign,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// 1, 2, 3, patch or tensor.
    #[arg(long, default_value = "1")]
    example: String,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Mesh sizes (cells per axis).
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    m: Vec<usize>,
    /// β⁺,β⁻
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// B⁺ then B⁻, each 3x3 row-major (18 numbers).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    tensor: Option<Vec<f64>>,
    /// Interface position for example 3.
    #[arg(long, default_value_t = 0.1)]
    x0: f64,
    #[arg(long, value_enum, default_value_t = Shape::Ellipsoid)]
    shape: Shape,
    /// Estimate condition numbers.
    #[arg(long)]
    cond: bool,
    #[arg(long, default_value_t = 1e-10)]
    cg_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    eig_tol: f64,
    #[arg(long, value_enum, default_value_t = FaceRule::SignOrCut)]
    face_rule: FaceRule,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// VTK path prefix; one file per mesh.
    #[arg(long)]
    vtk: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SliverArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.05,0.1,0.15,0.19,0.199")]
    x0: Vec<f64>,
    /// β⁺/β⁻ values, with β⁻ = 1.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    contrast: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    eig_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn matrix(v: &[f64]) -> Matrix3 {
    Matrix3::from_row_slice(v)
}

impl RunArgs {
    fn config(&self) -> icrfem::Result<RunConfig> {
        let count = |name: &str, v: &Option<Vec<f64>>, n: usize| match v {
            Some(v) if v.len() != n => Err(icrfem::Error::InvalidArgument(format!("--{name} takes {n} comma-separated numbers, got {}", v.len()))),
            _ => Ok(()),
        };
        count("beta", &self.beta, 2)?;
        count("tensor", &self.tensor, 18)?;
        let mut cfg = RunConfig {
            example: self.example.parse::<ExampleId>()?,
            dim: self.dim,
            ms: self.m.clone(),
            beta: self.beta.as_ref().map(|b| (b[0], b[1])),
            tensor: self.tensor.as_ref().map(|t| (matrix(&t[..9]), matrix(&t[9..]))),
            x0: self.x0,
            shape: match self.shape {
                Shape::Ellipsoid => Example2Shape::Ellipsoid,
                Shape::XOnly => Example2Shape::XOnly,
            },
            cond: self.cond,
            cg_tol: self.cg_tol,
            eig_tol: self.eig_tol,
            out: self.out.clone(),
            vtk: self.vtk.clone(),
            seed: self.seed,
            ..Default::default()
        };
        cfg.assembly.face_rule = match self.face_rule {
            FaceRule::SignOrCut => InterfaceFaceRule::SignChangeOrCutNeighbor,
            FaceRule::Sign => InterfaceFaceRule::SignChange,
        };
        Ok(cfg)
    }
}

fn run(cli: Cli) -> icrfem::Result<()> {
    match cli.command {
        Command::Run(args) => print!("{}", icrfem::run_example(&args.config()?)?),
        Command::Interp(args) => print!("{}", icrfem::run_interpolation_study(&args.config()?)?),
        Command::Sliver(args) => {
            let cfg = SliverConfig {
                dim: args.dim,
                m: args.m,
                x0s: args.x0,
                contrasts: args.contrast,
                eig_tol: args.eig_tol,
                seed: args.seed,
                ..Default::default()
            };
            let points = icrfem::run_sliver(&cfg)?;
            println!("{:>10} {:>10} {:>12}", "x0", "contrast", "cond");
            for p in &points {
                println!("{:>10} {:>10} {:>12}", p.x0, p.contrast, icrfem::postproc::sci(p.cond, 4));
            }
            if let Some(out) = &args.out {
                write_sliver_csv(&points, out)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build_global() {
        log::warn!("thread pool already initialized: {e}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
