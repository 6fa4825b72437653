//! Global assembly of the symmetric, parameter-free stabilized IFE system.
//!
//! `A_h = a_h + b_h + s_h`, where `a_h` is the broken energy form, `b_h` the
//! symmetric consistency terms on interface faces and `s_h` the lifting-based
//! penalty. Boundary face averages are prescribed from the exact solution when
//! one is available (zero otherwise) and eliminated from the system.

use arrayvec::ArrayVec;
use nalgebra::{DMatrix, SMatrix};
use rayon::prelude::*;

use crate::cutgeom::{self, verify_resolution, DiscreteLevelSet, ElementGeometry, Side};
use crate::error::{Error, Result};
use crate::ife_local::{self, ife_basis, ElementCoefficient, FacePartition, IfeBasisSet};
use crate::lifting::{self, face_points, grad_space_basis, FacePoint, GradSpaceBasis, LiftingSide};
use crate::linalg::CsrMatrix;
use crate::mesh::SimplicialMesh;
use crate::problems::{Coefficient, ProblemSpec, Sided};
use crate::quadrature;
use crate::simplex::Point;

/// Which interior faces carry the consistency and penalty terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterfaceFaceRule {
    /// Nodal level-set values change sign on the face, or an adjacent element is cut.
    #[default]
    SignChangeOrCutNeighbor,
    /// Nodal level-set values change sign on the face.
    SignChange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub face_rule: InterfaceFaceRule,
    /// Degree for the side integrals of `β^BK` in `a_h` and the lifting mass.
    pub volume_degree: usize,
    /// Degree for face integrals shared by `b_h` and the lifting right-hand side.
    pub face_degree: usize,
    pub rhs_degree: usize,
    /// Zero `f^±` where the exact level set disagrees with the discrete side.
    pub trivial_extension: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { face_rule: InterfaceFaceRule::default(), volume_degree: 2, face_degree: 2, rhs_degree: 4, trivial_extension: true }
    }
}

/// Face-to-unknown numbering: interior faces are free, boundary faces constrained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    pub face_to_dof: Vec<Option<usize>>,
    pub n_free: usize,
}

impl DofMap {
    pub fn dof(&self, face: usize) -> Option<usize> {
        self.face_to_dof[face]
    }

    pub fn n_faces(&self) -> usize {
        self.face_to_dof.len()
    }
}

pub fn build_dof_map<const D: usize>(mesh: &SimplicialMesh<D>) -> DofMap {
    let mut n_free = 0;
    let face_to_dof = (0..mesh.n_faces())
        .map(|f| {
            if mesh.is_boundary_face(f) {
                None
            } else {
                n_free += 1;
                Some(n_free - 1)
            }
        })
        .collect();
    DofMap { face_to_dof, n_free }
}

/// Everything the discretization needs about one element.
#[derive(Debug, Clone)]
pub struct ElementData<const D: usize> {
    pub geometry: ElementGeometry<D>,
    pub basis: IfeBasisSet<D>,
    pub grad_space: GradSpaceBasis<D>,
    /// `∫_{T_h^s} β^BK` as a `D × D` matrix per side.
    pub moments: Sided<SMatrix<f64, D, D>>,
}

impl<const D: usize> ElementData<D> {
    pub fn is_cut(&self) -> bool {
        matches!(self.geometry, ElementGeometry::Cut(_))
    }

    /// Branch of local function `i` used at a point of a face piece on side `piece`.
    pub fn side_for(&self, piece: Side) -> Side {
        lifting::effective_side(&self.geometry, piece)
    }
}

/// Element-level data for a whole mesh plus the interface face set.
#[derive(Debug, Clone)]
pub struct Discretization<const D: usize> {
    pub elements: Vec<ElementData<D>>,
    pub interface_faces: Vec<usize>,
    pub dof_map: DofMap,
}

/// `β_T^±` frozen at the element vertex with the lowest global index.
pub fn element_coefficient<const D: usize>(mesh: &SimplicialMesh<D>, e: usize, coefficient: &Coefficient<D>) -> Result<ElementCoefficient<D>> {
    let v = *mesh.element(e).iter().min().expect("element has vertices");
    coefficient.freeze(mesh.vertex(v))
}

fn side_moments<const D: usize>(geom: &ElementGeometry<D>, coefficient: &Coefficient<D>, degree: usize) -> Sided<SMatrix<f64, D, D>> {
    let mut m = Sided::new(SMatrix::<f64, D, D>::zeros(), SMatrix::<f64, D, D>::zeros());
    geom.for_each_region(|side, pts| {
        let target = match side {
            Side::Plus => &mut m.plus,
            Side::Minus => &mut m.minus,
        };
        quadrature::visit_simplex(pts, degree, |x, w| *target += coefficient.matrix(side, &x) * w);
    });
    m
}

pub fn element_data<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    problem: &ProblemSpec<D>,
    e: usize,
    options: &AssemblyOptions,
) -> Result<ElementData<D>> {
    let geometry = ElementGeometry::new(mesh, e, dls)?;
    let coefficient = match geometry {
        ElementGeometry::Cut(_) => Some(element_coefficient(mesh, e, &problem.coefficient)?),
        ElementGeometry::Uncut { .. } => None,
    };
    let basis = ife_basis(&geometry, coefficient)?;
    let grad_space = grad_space_basis(&geometry, coefficient.as_ref())?;
    let moments = side_moments(&geometry, &problem.coefficient, options.volume_degree);
    Ok(ElementData { geometry, basis, grad_space, moments })
}

fn is_interface_face<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    elements: &[ElementData<D>],
    f: usize,
    rule: InterfaceFaceRule,
) -> bool {
    let (e1, Some(e2)) = mesh.face_elements(f) else { return false };
    let face = mesh.face(f);
    let first = Side::of(dls.value(face[0]));
    let sign_change = face.iter().any(|&v| Side::of(dls.value(v)) != first);
    match rule {
        InterfaceFaceRule::SignChange => sign_change,
        InterfaceFaceRule::SignChangeOrCutNeighbor => sign_change || elements[e1].is_cut() || elements[e2].is_cut(),
    }
}

/// Builds per-element data (in parallel, order preserved) and the interface face set.
pub fn discretize<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    problem: &ProblemSpec<D>,
    options: &AssemblyOptions,
) -> Result<Discretization<D>> {
    let elements = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| element_data(mesh, dls, problem, e, options))
        .collect::<Result<Vec<_>>>()?;
    let interface_faces = (0..mesh.n_faces()).filter(|&f| is_interface_face(mesh, dls, &elements, f, options.face_rule)).collect();
    Ok(Discretization { elements, interface_faces, dof_map: build_dof_map(mesh) })
}

/// `K_ij = ∫_T β^BK ∇φ_i · ∇φ_j`, using the per-side moments.
pub fn element_stiffness<const D: usize>(data: &ElementData<D>) -> DMatrix<f64> {
    let n = data.basis.len();
    DMatrix::from_fn(n, n, |i, j| {
        [Side::Plus, Side::Minus]
            .iter()
            .map(|&s| data.basis.basis[i].gradient(s).dot(&(data.moments.get(s) * data.basis.basis[j].gradient(s))))
            .sum()
    })
}

/// Local `b_h` and `s_h` blocks on one interface face.
#[derive(Debug, Clone)]
pub struct FaceTerms {
    /// Global face indices of the local functions: first element's faces, then the second's.
    pub faces: ArrayVec<usize, 8>,
    pub b: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// Quadrature points on face `f`, split by side.
pub fn interface_face_points<const D: usize>(mesh: &SimplicialMesh<D>, dls: &DiscreteLevelSet, f: usize, degree: usize) -> Vec<FacePoint<D>> {
    face_points(&cutgeom::cut_face(mesh, f, dls), degree)
}

/// Values and averaged normal fluxes of the `2(N+1)` local functions at a face point.
fn face_traces<const D: usize>(
    elements: [&ElementData<D>; 2],
    coefficient: &Coefficient<D>,
    normal: &Point<D>,
    p: &FacePoint<D>,
) -> (ArrayVec<f64, 8>, ArrayVec<f64, 8>) {
    let mut jump = ArrayVec::new();
    let mut flux = ArrayVec::new();
    let b = coefficient.matrix(p.side, &p.x);
    for (t, data) in elements.iter().enumerate() {
        let s = data.side_for(p.side);
        let sign = if t == 0 { 1.0 } else { -1.0 };
        for phi in &data.basis.basis {
            jump.push(sign * phi.eval_side(s, &p.x));
            flux.push(0.5 * (b * phi.gradient(s)).dot(normal));
        }
    }
    (jump, flux)
}

pub fn interface_face_terms<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    disc: &Discretization<D>,
    coefficient: &Coefficient<D>,
    f: usize,
    options: &AssemblyOptions,
) -> Result<FaceTerms> {
    let (e1, Some(e2)) = mesh.face_elements(f) else {
        return Err(Error::InvalidArgument(format!("face {f} is on the boundary")));
    };
    let normal = mesh.face_geometry(f).unit_normal;
    let pair = [&disc.elements[e1], &disc.elements[e2]];
    let faces: ArrayVec<usize, 8> = [e1, e2].iter().flat_map(|&e| mesh.element_faces(e).iter().copied()).collect();
    let n = faces.len();
    let points = interface_face_points(mesh, dls, f, options.face_degree);

    let mut b = DMatrix::<f64>::zeros(n, n);
    for p in &points {
        let (jump, flux) = face_traces(pair, coefficient, &normal, p);
        for k in 0..n {
            for l in 0..n {
                b[(k, l)] -= p.weight * (flux[k] * jump[l] + flux[l] * jump[k]);
            }
        }
    }

    let mut s = DMatrix::<f64>::zeros(n, n);
    for (t, data) in pair.iter().enumerate() {
        let side = LiftingSide { geometry: &data.geometry, grad_space: &data.grad_space, moments: &data.moments };
        let rhs = lifting::lifting_rhs(&side, &points, &normal, coefficient, |p| face_traces(pair, coefficient, &normal, p).0.to_vec());
        let mass = lifting::local_mass(&data.grad_space, &data.moments);
        let chol = mass
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure(format!("singular lifting mass on element {}", [e1, e2][t])))?;
        let coeffs = chol.solve(&rhs);
        s += rhs.transpose() * coeffs * 8.0;
    }
    s = (&s + s.transpose()) * 0.5;
    if b.iter().chain(s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Assembly { element: e1 });
    }
    Ok(FaceTerms { faces, b, s })
}

/// Face average of `E^BK u`, using `u^s` on each side's face piece.
pub fn boundary_value<const D: usize>(mesh: &SimplicialMesh<D>, dls: &DiscreteLevelSet, problem: &ProblemSpec<D>, f: usize) -> f64 {
    let Some(exact) = &problem.exact else { return 0.0 };
    let mut total = 0.0;
    let mut measure = 0.0;
    for p in face_points(&cutgeom::cut_face(mesh, f, dls), ife_local::DOF_DEGREE) {
        total += p.weight * exact.value(p.side, &p.x);
        measure += p.weight;
    }
    total / measure
}

/// `∫_T f^BK φ_i` for the local functions of one element.
pub fn element_load<const D: usize>(data: &ElementData<D>, problem: &ProblemSpec<D>, options: &AssemblyOptions) -> ArrayVec<f64, 4> {
    let mut load: ArrayVec<f64, 4> = (0..data.basis.len()).map(|_| 0.0).collect();
    data.geometry.for_each_region(|side, pts| {
        quadrature::visit_simplex(pts, options.rhs_degree, |x, w| {
            if options.trivial_extension && Side::of(problem.levelset.value(&x)) != side {
                return;
            }
            let fx = (problem.rhs.get(side))(&x) * w;
            for (li, phi) in load.iter_mut().zip(&data.basis.basis) {
                *li += fx * phi.eval_side(side, &x);
            }
        });
    });
    load
}

/// The three bilinear forms as separate matrices over all faces (before elimination).
#[derive(Debug, Clone)]
pub struct FormTriplets {
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<(usize, usize, f64)>,
    pub s: Vec<(usize, usize, f64)>,
}

pub fn form_triplets<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    disc: &Discretization<D>,
    coefficient: &Coefficient<D>,
    options: &AssemblyOptions,
) -> Result<FormTriplets> {
    let a: Vec<Vec<(usize, usize, f64)>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let k = element_stiffness(&disc.elements[e]);
            if k.iter().any(|v| !v.is_finite()) {
                return Err(Error::Assembly { element: e });
            }
            let faces = mesh.element_faces(e);
            Ok(scatter(faces, &k))
        })
        .collect::<Result<_>>()?;
    let faces: Vec<FaceTerms> = disc
        .interface_faces
        .par_iter()
        .map(|&f| interface_face_terms(mesh, dls, disc, coefficient, f, options))
        .collect::<Result<_>>()?;
    Ok(FormTriplets {
        a: a.into_iter().flatten().collect(),
        b: faces.iter().flat_map(|t| scatter(&t.faces, &t.b)).collect(),
        s: faces.iter().flat_map(|t| scatter(&t.faces, &t.s)).collect(),
    })
}

fn scatter(faces: &[usize], m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(faces.len() * faces.len());
    for (i, &fi) in faces.iter().enumerate() {
        for (j, &fj) in faces.iter().enumerate() {
            out.push((fi, fj, m[(i, j)]));
        }
    }
    out
}

/// Restricts face-indexed triplets to the free unknowns, moving known boundary values to the right-hand side.
pub fn eliminate(dof_map: &DofMap, triplets: &[(usize, usize, f64)], boundary: &[f64], rhs: &mut [f64]) -> Result<CsrMatrix> {
    let mut free = Vec::with_capacity(triplets.len());
    for &(r, c, v) in triplets {
        let Some(dr) = dof_map.dof(r) else { continue };
        match dof_map.dof(c) {
            Some(dc) => free.push((dr, dc, v)),
            None => rhs[dr] -= v * boundary[c],
        }
    }
    CsrMatrix::from_triplets(dof_map.n_free, free)
}

/// Stiffness matrix, load vector and boundary data over the free unknowns.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dof_map: DofMap,
    /// Prescribed face averages per face (zero on interior faces).
    pub boundary_values: Vec<f64>,
}

impl SparseSystem {
    /// Full face vector from the free-unknown solution and the boundary data.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.dof_map
            .face_to_dof
            .iter()
            .enumerate()
            .map(|(f, d)| d.map_or(self.boundary_values[f], |d| x[d]))
            .collect()
    }
}

pub fn assemble_with<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    problem: &ProblemSpec<D>,
    options: &AssemblyOptions,
) -> Result<(Discretization<D>, SparseSystem)> {
    let report = verify_resolution(mesh, dls, None);
    if let Some(first) = report.violations.first() {
        log::warn!("interface resolution check failed ({} violations): {first}", report.violations.len());
    }
    let disc = discretize(mesh, dls, problem, options)?;
    let forms = form_triplets(mesh, dls, &disc, &problem.coefficient, options)?;

    let boundary_values: Vec<f64> = (0..mesh.n_faces())
        .into_par_iter()
        .map(|f| if mesh.is_boundary_face(f) { boundary_value(mesh, dls, problem, f) } else { 0.0 })
        .collect();

    let loads: Vec<ArrayVec<f64, 4>> = disc.elements.par_iter().map(|d| element_load(d, problem, options)).collect();
    let mut rhs = vec![0.0; disc.dof_map.n_free];
    for (e, load) in loads.iter().enumerate() {
        for (&f, v) in mesh.element_faces(e).iter().zip(load) {
            if !v.is_finite() {
                return Err(Error::Assembly { element: e });
            }
            if let Some(d) = disc.dof_map.dof(f) {
                rhs[d] += v;
            }
        }
    }

    let mut all = forms.a;
    all.extend(forms.b);
    all.extend(forms.s);
    let matrix = eliminate(&disc.dof_map, &all, &boundary_values, &mut rhs)?;
    let dof_map = disc.dof_map.clone();
    Ok((disc, SparseSystem { matrix, rhs, dof_map, boundary_values }))
}

/// Assembles with default options.
pub fn assemble_system<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    problem: &ProblemSpec<D>,
) -> Result<(Discretization<D>, SparseSystem)> {
    assemble_with(mesh, dls, problem, &AssemblyOptions::default())
}

/// `a_h`, `b_h` and `s_h` restricted to the free unknowns (homogeneous boundary values).
#[derive(Debug, Clone)]
pub struct FormMatrices {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub s: CsrMatrix,
}

pub fn form_matrices<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    disc: &Discretization<D>,
    coefficient: &Coefficient<D>,
    options: &AssemblyOptions,
) -> Result<FormMatrices> {
    let forms = form_triplets(mesh, dls, disc, coefficient, options)?;
    let zeros = vec![0.0; mesh.n_faces()];
    let mut scratch = vec![0.0; disc.dof_map.n_free];
    Ok(FormMatrices {
        a: eliminate(&disc.dof_map, &forms.a, &zeros, &mut scratch)?,
        b: eliminate(&disc.dof_map, &forms.b, &zeros, &mut scratch)?,
        s: eliminate(&disc.dof_map, &forms.s, &zeros, &mut scratch)?,
    })
}

/// Global IFE interpolant: face averages of `E^BK u` as a face vector.
pub fn interpolate_exact<const D: usize>(mesh: &SimplicialMesh<D>, dls: &DiscreteLevelSet, problem: &ProblemSpec<D>) -> Result<Vec<f64>> {
    if problem.exact.is_none() {
        return Err(Error::InvalidArgument(format!("problem {} has no exact solution", problem.name)));
    }
    Ok((0..mesh.n_faces()).into_par_iter().map(|f| boundary_value(mesh, dls, problem, f)).collect())
}

/// Face averages seen from one element, through its own face partition.
pub fn local_dofs<const D: usize>(geom: &ElementGeometry<D>, v: impl Fn(Side, &Point<D>) -> f64) -> ArrayVec<f64, 4> {
    (0..=D).map(|i| ife_local::dof_functional(geom, i, &v)).collect()
}

#[allow(dead_code)]
fn _assert_partition<const D: usize, G: FacePartition<D>>(_: &G) {}
