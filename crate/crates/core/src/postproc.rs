//! Evaluation of discrete solutions, error norms, convergence tables and export.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::assembly::{interface_face_points, interface_face_terms, AssemblyOptions, Discretization};
use crate::cutgeom::{DiscreteLevelSet, Side};
use crate::error::{Error, Result};
use crate::ife_local::PiecewiseAffine;
use crate::mesh::SimplicialMesh;
use crate::problems::{Coefficient, ExactSolution};
use crate::quadrature;
use crate::simplex::{self, Point};

/// Local function of element `e` for a face-indexed coefficient vector.
pub fn local_function<const D: usize>(mesh: &SimplicialMesh<D>, disc: &Discretization<D>, dofs: &[f64], e: usize) -> PiecewiseAffine<D> {
    let coeffs: Vec<f64> = mesh.element_faces(e).iter().map(|&f| dofs[f]).collect();
    disc.elements[e].basis.combine(&coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValue<const D: usize> {
    pub value: f64,
    pub gradient: Point<D>,
    pub side: Side,
    pub element: usize,
}

/// `u_h(x)` and `∇u_h(x)`, with the branch chosen by the discrete level set at `x`.
pub fn evaluate_solution<const D: usize>(
    mesh: &SimplicialMesh<D>,
    disc: &Discretization<D>,
    dofs: &[f64],
    x: &Point<D>,
) -> Result<PointValue<D>> {
    let e = mesh.locate(x).ok_or_else(|| Error::OutOfDomain(format!("{:?}", x.as_slice())))?;
    let side = disc.elements[e].geometry.side_of(x);
    let u = local_function(mesh, disc, dofs, e);
    Ok(PointValue { value: u.eval_side(side, x), gradient: u.gradient(side), side, element: e })
}

/// L2 and broken H1-seminorm errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
}

/// Errors integrated per sub-region of `Ω_h^±`, using the exact `u^s` on `Ω_h^s`.
pub fn compute_errors<const D: usize>(
    mesh: &SimplicialMesh<D>,
    disc: &Discretization<D>,
    dofs: &[f64],
    exact: &ExactSolution<D>,
    degree: usize,
) -> ErrorNorms {
    let parts: Vec<(f64, f64)> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let u = local_function(mesh, disc, dofs, e);
            let (mut l2, mut h1) = (0.0, 0.0);
            disc.elements[e].geometry.for_each_region(|side, pts| {
                quadrature::visit_simplex(pts, degree, |x, w| {
                    l2 += w * (exact.value(side, &x) - u.eval_side(side, &x)).powi(2);
                    h1 += w * (exact.gradient(side, &x) - u.gradient(side)).norm_squared();
                });
            });
            (l2, h1)
        })
        .collect();
    let (l2, h1) = parts.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    ErrorNorms { l2: l2.sqrt(), h1: h1.sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeshNorms {
    /// `‖v‖_h`
    pub energy: f64,
    /// `|||v|||_h`
    pub triple: f64,
}

/// The mesh-dependent norms of a face-indexed function.
pub fn norms<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    disc: &Discretization<D>,
    coefficient: &Coefficient<D>,
    v: &[f64],
    options: &AssemblyOptions,
) -> Result<MeshNorms> {
    let energy2: f64 = (0..mesh.n_elements())
        .map(|e| {
            let u = local_function(mesh, disc, v, e);
            let m = &disc.elements[e].moments;
            [Side::Plus, Side::Minus].iter().map(|&s| u.gradient(s).dot(&(m.get(s) * u.gradient(s)))).sum::<f64>()
        })
        .sum();
    let mut extra = 0.0;
    for &f in &disc.interface_faces {
        let (e1, Some(e2)) = mesh.face_elements(f) else { continue };
        let hf = simplex::diameter(&mesh.face_points(f));
        let u = [local_function(mesh, disc, v, e1), local_function(mesh, disc, v, e2)];
        let els = [&disc.elements[e1], &disc.elements[e2]];
        for p in interface_face_points(mesh, dls, f, options.face_degree) {
            let b = coefficient.matrix(p.side, &p.x);
            let s = [els[0].side_for(p.side), els[1].side_for(p.side)];
            let avg = (b * u[0].gradient(s[0]) + b * u[1].gradient(s[1])) * 0.5;
            let jump = u[0].eval_side(s[0], &p.x) - u[1].eval_side(s[1], &p.x);
            extra += p.weight * (hf * avg.norm_squared() + jump * jump / hf);
        }
        let t = interface_face_terms(mesh, dls, disc, coefficient, f, options)?;
        let local = DVector::from_iterator(t.faces.len(), t.faces.iter().map(|&i| v[i]));
        extra += local.dot(&(&t.s * &local));
    }
    Ok(MeshNorms { energy: energy2.sqrt(), triple: (energy2 + extra).sqrt() })
}

/// A fitted convergence order between consecutive meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Order {
    Rate(f64),
    /// The finer error is exactly zero.
    Exact,
}

impl Order {
    pub fn rate(self) -> Option<f64> {
        match self {
            Order::Rate(r) => Some(r),
            Order::Exact => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Rate(r) => write!(f, "{r:.2}"),
            Order::Exact => write!(f, "exact"),
        }
    }
}

/// `log(e_prev/e_curr) / log(m_curr/m_prev)`; equals `log₂` of the ratio for doublings.
pub fn convergence_order(m_prev: usize, prev: f64, m_curr: usize, curr: f64) -> Order {
    if curr == 0.0 {
        return Order::Exact;
    }
    if prev == curr {
        return Order::Rate(0.0);
    }
    Order::Rate((prev / curr).ln() / (m_curr as f64 / m_prev as f64).ln())
}

/// Consecutive-pair orders; the first entry is always `None`.
pub fn convergence_orders(ms: &[usize], errors: &[f64]) -> Vec<Option<Order>> {
    let mut out = vec![None; errors.len()];
    for i in 1..errors.len() {
        out[i] = Some(convergence_order(ms[i - 1], errors[i - 1], ms[i], errors[i]));
    }
    out
}

/// One mesh of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub m: usize,
    pub n_dofs: usize,
    pub l2: f64,
    pub l2_order: Option<Order>,
    pub h1: f64,
    pub h1_order: Option<Order>,
    pub cond: Option<f64>,
    pub cond_order: Option<Order>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub example: String,
    pub dim: usize,
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn new(example: impl Into<String>, dim: usize) -> Self {
        Self { example: example.into(), dim, rows: Vec::new() }
    }

    /// Appends a row and fills in its order columns against the previous one.
    pub fn push(&mut self, mut row: ErrorRow) {
        if let Some(prev) = self.rows.last() {
            row.l2_order = Some(convergence_order(prev.m, prev.l2, row.m, row.l2));
            row.h1_order = Some(convergence_order(prev.m, prev.h1, row.m, row.h1));
            row.cond_order = match (prev.cond, row.cond) {
                (Some(a), Some(b)) => Some(convergence_order(prev.m, a, row.m, b)),
                _ => None,
            };
        }
        self.rows.push(row);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::Io { path: path.to_path_buf(), source: e.into() };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            let fmt_order = |o: Option<Order>| o.map(|o| o.to_string()).unwrap_or_default();
            w.write_record([
                self.example.clone(),
                self.dim.to_string(),
                r.m.to_string(),
                r.n_dofs.to_string(),
                format!("{:.6e}", r.l2),
                fmt_order(r.l2_order),
                format!("{:.6e}", r.h1),
                fmt_order(r.h1_order),
                r.cond.map(|c| format!("{c:.6e}")).unwrap_or_default(),
                fmt_order(r.cond_order),
                format!("{:.1}", r.wall_ms),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
    }
}

pub const CSV_HEADER: [&str; 11] = ["example", "dim", "M", "n_dofs", "l2", "l2_order", "h1", "h1_order", "cond", "cond_order", "wall_ms"];

/// Scientific notation with a signed two-digit exponent, as in `3.605E-02`.
pub fn sci(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$E}");
    match s.split_once('E') {
        Some((m, e)) => {
            let e: i32 = e.parse().unwrap_or(0);
            format!("{m}E{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        }
        None => s,
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({}D)", self.example, self.dim)?;
        writeln!(f, "{:>5} {:>9} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6}", "M", "dofs", "L2", "order", "H1", "order", "cond", "order")?;
        let o = |o: Option<Order>| o.map(|o| o.to_string()).unwrap_or_default();
        for r in &self.rows {
            let cond = r.cond.map(|c| sci(c, 3)).unwrap_or_default();
            writeln!(
                f,
                "{:>5} {:>9} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6}",
                r.m,
                r.n_dofs,
                sci(r.l2, 3),
                o(r.l2_order),
                sci(r.h1, 3),
                o(r.h1_order),
                cond,
                o(r.cond_order)
            )?;
        }
        Ok(())
    }
}

/// Writes a legacy ASCII VTK unstructured grid of the sub-tessellated mesh.
///
/// Every region gets its own corner points so the solution kink across the
/// interface stays visible.
pub fn export_vtk<const D: usize>(mesh: &SimplicialMesh<D>, disc: &Discretization<D>, dofs: Option<&[f64]>, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io { path: path.to_path_buf(), source: e };
    let mut points: Vec<Point<D>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut cells: Vec<(usize, Side)> = Vec::new();
    for e in 0..mesh.n_elements() {
        let u = dofs.map(|d| local_function(mesh, disc, d, e));
        disc.elements[e].geometry.for_each_region(|side, pts| {
            cells.push((points.len(), side));
            for p in pts {
                points.push(*p);
                values.push(u.as_ref().map_or(0.0, |u| u.eval_side(side, p)));
            }
        });
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let k = D + 1;
    let cell_type = if D == 2 { 5 } else { 10 };
    writeln!(w, "# vtk DataFile Version 3.0").map_err(io)?;
    writeln!(w, "immersed CR solution").map_err(io)?;
    writeln!(w, "ASCII\nDATASET UNSTRUCTURED_GRID").map_err(io)?;
    writeln!(w, "POINTS {} double", points.len()).map_err(io)?;
    for p in &points {
        let z = if D == 3 { p[2] } else { 0.0 };
        writeln!(w, "{} {} {}", p[0], p[1], z).map_err(io)?;
    }
    writeln!(w, "CELLS {} {}", cells.len(), cells.len() * (k + 1)).map_err(io)?;
    for (start, _) in &cells {
        let ids: Vec<String> = (*start..start + k).map(|i| i.to_string()).collect();
        writeln!(w, "{k} {}", ids.join(" ")).map_err(io)?;
    }
    writeln!(w, "CELL_TYPES {}", cells.len()).map_err(io)?;
    for _ in &cells {
        writeln!(w, "{cell_type}").map_err(io)?;
    }
    writeln!(w, "CELL_DATA {}\nSCALARS side int 1\nLOOKUP_TABLE default", cells.len()).map_err(io)?;
    for (_, s) in &cells {
        writeln!(w, "{}", if *s == Side::Plus { 1 } else { -1 }).map_err(io)?;
    }
    if dofs.is_some() {
        writeln!(w, "POINT_DATA {}\nSCALARS u_h double 1\nLOOKUP_TABLE default", points.len()).map_err(io)?;
        for v in &values {
            writeln!(w, "{v}").map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Point and cell counts read back from a legacy VTK file.
pub fn read_vtk_counts(path: &Path) -> Result<(usize, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let count = |key: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.split_whitespace().next()).and_then(|n| n.parse().ok()))
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no {key} section", path.display())))
    };
    Ok((count("POINTS ")?, count("CELLS ")?))
}
