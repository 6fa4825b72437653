//! Convergence, condition-number and interpolation studies over the built-in problems.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::SMatrix;

use crate::assembly::{assemble_with, discretize, interpolate_exact, AssemblyOptions};
use crate::cutgeom::{interface_distance_check, interpolate_levelset};
use crate::error::{Error, Result};
use crate::linalg::{cg_solve, condition_number, Preconditioner};
use crate::mesh::build_uniform_mesh;
use crate::postproc::{compute_errors, export_vtk, ErrorReport, ErrorRow};
use crate::problems::{self, Example2Shape, ProblemSpec};

/// Built-in problems selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleId {
    /// Sphere interface with a cubic radial solution.
    One,
    /// Ellipsoid interface with variable coefficients (3D only).
    Two,
    /// Plane `x = x0` with a piecewise-linear solution.
    Three,
    Patch,
    /// Plane `x = 0` with tensor coefficients (3D only).
    Tensor,
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Self::One),
            "2" => Ok(Self::Two),
            "3" => Ok(Self::Three),
            "patch" => Ok(Self::Patch),
            "tensor" => Ok(Self::Tensor),
            _ => Err(Error::InvalidArgument(format!("unknown example '{s}' (expected 1, 2, 3, patch or tensor)"))),
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::One => "1",
            Self::Two => "2",
            Self::Three => "3",
            Self::Patch => "patch",
            Self::Tensor => "tensor",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub example: ExampleId,
    pub dim: usize,
    pub ms: Vec<usize>,
    /// `(β⁺, β⁻)` for the constant-coefficient examples.
    pub beta: Option<(f64, f64)>,
    pub tensor: Option<(SMatrix<f64, 3, 3>, SMatrix<f64, 3, 3>)>,
    pub x0: f64,
    pub shape: Example2Shape,
    pub cond: bool,
    pub cg_tol: f64,
    pub eig_tol: f64,
    pub out: Option<PathBuf>,
    pub vtk: Option<PathBuf>,
    pub seed: u64,
    pub assembly: AssemblyOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            example: ExampleId::One,
            dim: 3,
            ms: vec![5, 10, 20],
            beta: None,
            tensor: None,
            x0: 0.1,
            shape: Example2Shape::default(),
            cond: false,
            cg_tol: 1e-10,
            eig_tol: 1e-6,
            out: None,
            vtk: None,
            seed: 0,
            assembly: AssemblyOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ms.is_empty() || self.ms.contains(&0) {
            return Err(Error::InvalidArgument("mesh sizes must be positive".into()));
        }
        for (name, t) in [("cg_tol", self.cg_tol), ("eig_tol", self.eig_tol)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        if matches!(self.example, ExampleId::Two | ExampleId::Tensor) && self.dim != 3 {
            return Err(Error::InvalidArgument(format!("example {} is three-dimensional", self.example)));
        }
        Ok(())
    }
}

/// The problem a configuration refers to.
pub fn build_problem<const D: usize>(config: &RunConfig) -> Result<ProblemSpec<D>> {
    let beta = |default: (f64, f64)| config.beta.unwrap_or(default);
    let problem: ProblemSpec<D> = match config.example {
        ExampleId::One => {
            let (p, m) = beta((2.0, 1.0));
            problems::example1(p, m)?
        }
        ExampleId::Three => {
            let (p, m) = beta((1000.0, 1.0));
            problems::example3(config.x0, p, m)?
        }
        ExampleId::Patch => problems::patch(),
        ExampleId::Two | ExampleId::Tensor => {
            let problem3 = if config.example == ExampleId::Two {
                problems::example2(config.shape)
            } else {
                let (bp, bm) = config.tensor.unwrap_or_else(problems::default_tensors);
                problems::tensor_plane(bp, bm)?
            };
            let any: Box<dyn std::any::Any> = Box::new(problem3);
            *any.downcast::<ProblemSpec<D>>()
                .map_err(|_| Error::InvalidArgument(format!("example {} is three-dimensional", config.example)))?
        }
    };
    problem.validate()?;
    Ok(problem)
}

/// Assemble, solve and measure one problem on one mesh.
pub fn run_mesh<const D: usize>(problem: &ProblemSpec<D>, m: usize, config: &RunConfig) -> Result<ErrorRow> {
    let start = Instant::now();
    let mesh = build_uniform_mesh(problem.domain, m)?;
    let dls = interpolate_levelset(&problem.levelset, &mesh)?;
    let (disc, sys) = assemble_with(&mesh, &dls, problem, &config.assembly)?;
    let n = sys.matrix.dim();
    let sol = cg_solve(&sys.matrix, &sys.rhs, config.cg_tol, 20 * n + 100, Preconditioner::Jacobi)
        .map_err(|e| Error::NumericalFailure(format!("M={m}: {e}")))?;
    if !sol.converged {
        return Err(Error::NumericalFailure(format!("M={m}: CG stopped after {} iterations at residual {:e}", sol.iterations, sol.residual)));
    }
    let dofs = sys.expand(&sol.x);
    let err = match &problem.exact {
        Some(exact) => compute_errors(&mesh, &disc, &dofs, exact, config.assembly.rhs_degree),
        None => Default::default(),
    };
    let cond = if config.cond {
        Some(condition_number(&sys.matrix, config.eig_tol, config.seed).map_err(|e| Error::NumericalFailure(format!("M={m}: {e}")))?)
    } else {
        None
    };
    if let Some(prefix) = &config.vtk {
        export_vtk(&mesh, &disc, Some(&dofs), &vtk_path(prefix, m))?;
    }
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    log::info!("M={m}: {n} unknowns, {} CG iterations, {wall_ms:.0} ms", sol.iterations);
    Ok(ErrorRow { m, n_dofs: n, l2: err.l2, l2_order: None, h1: err.h1, h1_order: None, cond, cond_order: None, wall_ms })
}

fn vtk_path(prefix: &Path, m: usize) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("_M{m}.vtk"));
    PathBuf::from(name)
}

fn run_dim<const D: usize>(config: &RunConfig) -> Result<ErrorReport> {
    let problem = build_problem::<D>(config)?;
    let mut report = ErrorReport::new(problem.name.clone(), D);
    for &m in &config.ms {
        report.push(run_mesh(&problem, m, config)?);
    }
    Ok(report)
}

/// Convergence table over `config.ms`, written to `config.out` when set.
pub fn run_example(config: &RunConfig) -> Result<ErrorReport> {
    config.validate()?;
    let report = if config.dim == 2 { run_dim::<2>(config)? } else { run_dim::<3>(config)? };
    if let Some(out) = &config.out {
        report.write_csv(out)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliverConfig {
    pub dim: usize,
    pub m: usize,
    pub x0s: Vec<f64>,
    /// Values of `β⁺/β⁻` with `β⁻ = 1`.
    pub contrasts: Vec<f64>,
    pub eig_tol: f64,
    pub seed: u64,
    pub assembly: AssemblyOptions,
}

impl Default for SliverConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            m: 10,
            x0s: vec![0.001, 0.01, 0.05, 0.1, 0.15, 0.19, 0.199],
            contrasts: vec![1.0, 10.0, 100.0, 1000.0],
            eig_tol: 1e-6,
            seed: 0,
            assembly: AssemblyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliverPoint {
    pub x0: f64,
    pub contrast: f64,
    pub cond: f64,
}

/// Condition numbers of the plane-interface problem over a grid of positions and contrasts.
pub fn run_sliver(config: &SliverConfig) -> Result<Vec<SliverPoint>> {
    fn one<const D: usize>(config: &SliverConfig, x0: f64, contrast: f64) -> Result<f64> {
        let problem = problems::example3::<D>(x0, contrast, 1.0)?;
        let mesh = build_uniform_mesh(problem.domain, config.m)?;
        let dls = interpolate_levelset(&problem.levelset, &mesh)?;
        let (_, sys) = assemble_with(&mesh, &dls, &problem, &config.assembly)?;
        condition_number(&sys.matrix, config.eig_tol, config.seed)
    }
    if !(config.dim == 2 || config.dim == 3) {
        return Err(Error::InvalidArgument(format!("dimension must be 2 or 3, got {}", config.dim)));
    }
    let mut out = Vec::new();
    for &contrast in &config.contrasts {
        for &x0 in &config.x0s {
            let cond = if config.dim == 2 { one::<2>(config, x0, contrast)? } else { one::<3>(config, x0, contrast)? };
            log::info!("x0={x0}, contrast={contrast}: cond={cond:.4e}");
            out.push(SliverPoint { x0, contrast, cond });
        }
    }
    Ok(out)
}

pub fn write_sliver_csv(points: &[SliverPoint], path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["x0", "contrast", "cond"]).map_err(io)?;
    for p in points {
        w.write_record([p.x0.to_string(), p.contrast.to_string(), format!("{:.6e}", p.cond)]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Errors of the global IFE interpolant (no solve) over `config.ms`.
pub fn run_interpolation_study(config: &RunConfig) -> Result<ErrorReport> {
    fn go<const D: usize>(config: &RunConfig) -> Result<ErrorReport> {
        let problem = build_problem::<D>(config)?;
        let exact = problem
            .exact
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("problem {} has no exact solution", problem.name)))?;
        let mut report = ErrorReport::new(format!("{}-interp", problem.name), D);
        for &m in &config.ms {
            let start = Instant::now();
            let mesh = build_uniform_mesh(problem.domain, m)?;
            let dls = interpolate_levelset(&problem.levelset, &mesh)?;
            let disc = discretize(&mesh, &dls, &problem, &config.assembly)?;
            let dofs = interpolate_exact(&mesh, &dls, &problem)?;
            let err = compute_errors(&mesh, &disc, &dofs, exact, config.assembly.rhs_degree);
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            report.push(ErrorRow {
                m,
                n_dofs: disc.dof_map.n_free,
                l2: err.l2,
                l2_order: None,
                h1: err.h1,
                h1_order: None,
                cond: None,
                cond_order: None,
                wall_ms,
            });
        }
        Ok(report)
    }
    config.validate()?;
    let report = if config.dim == 2 { go::<2>(config)? } else { go::<3>(config)? };
    if let Some(out) = &config.out {
        report.write_csv(out)?;
    }
    Ok(report)
}

/// Interface distance and normal deviation for a sequence of meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryRow {
    pub m: usize,
    pub distance: f64,
    pub normal_angle: f64,
}

pub fn run_geometry_study<const D: usize>(problem: &ProblemSpec<D>, ms: &[usize], samples_per_element: usize) -> Result<Vec<GeometryRow>> {
    ms.iter()
        .map(|&m| {
            let mesh = build_uniform_mesh(problem.domain, m)?;
            let dls = interpolate_levelset(&problem.levelset, &mesh)?;
            let r = interface_distance_check(&mesh, &dls, &problem.levelset, samples_per_element)?;
            Ok(GeometryRow { m, distance: r.max_dist_gamma_h_to_gamma, normal_angle: r.max_normal_angle.unwrap_or(f64::NAN) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_examples() {
        assert_eq!("patch".parse::<ExampleId>().unwrap(), ExampleId::Patch);
        assert_eq!(ExampleId::Two.to_string().parse::<ExampleId>().unwrap(), ExampleId::Two);
        assert!("4".parse::<ExampleId>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig { ms: vec![0], ..Default::default() }.validate().is_err());
        assert!(RunConfig { cg_tol: 1.0, ..Default::default() }.validate().is_err());
        assert!(RunConfig { example: ExampleId::Two, dim: 2, ..Default::default() }.validate().is_err());
        assert!(build_problem::<2>(&RunConfig { example: ExampleId::Tensor, ..Default::default() }).is_err());
    }

    #[test]
    fn patch_run_is_exact_in_2d() {
        let cfg = RunConfig { example: ExampleId::Patch, dim: 2, ms: vec![4], ..Default::default() };
        let r = run_example(&cfg).unwrap();
        assert!(r.rows[0].l2 < 1e-10 && r.rows[0].h1 < 1e-10);
    }

    #[test]
    fn equal_coefficients_match_plain_cr() {
        let base = SliverConfig { m: 4, x0s: vec![0.13], contrasts: vec![1.0], eig_tol: 1e-8, ..Default::default() };
        let cut = run_sliver(&base).unwrap()[0].cond;
        let plain = run_sliver(&SliverConfig { x0s: vec![5.0], ..base }).unwrap()[0].cond;
        assert!((cut / plain - 1.0).abs() < 0.01, "{cut} {plain}");
    }

    #[test]
    fn tensor_interpolant_is_exact() {
        let cfg = RunConfig { example: ExampleId::Tensor, ms: vec![3], ..Default::default() };
        let r = run_interpolation_study(&cfg).unwrap();
        assert!(r.rows[0].l2 < 1e-11 && r.rows[0].h1 < 1e-11, "{r}");
    }
}
