//! Discrete interface geometry.
//!
//! The interface is the zero set of the piecewise-linear nodal interpolant of
//! a level-set function, so inside each element it is a straight segment (2D)
//! or a planar triangle/quadrilateral (3D). This module classifies elements,
//! sub-tessellates interface elements into simplices lying on one side, and
//! partitions faces by sign.

use std::fmt;
use std::sync::Arc;

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::mesh::SimplicialMesh;
use crate::simplex::{self, Point, Vertices};

/// Side of the discrete interface. Zero is treated as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn of(value: f64) -> Side {
        if value >= 0.0 {
            Side::Plus
        } else {
            Side::Minus
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "+",
            Side::Minus => "-",
        })
    }
}

type ScalarFn<const D: usize> = Arc<dyn Fn(&Point<D>) -> f64 + Send + Sync>;
type VectorFn<const D: usize> = Arc<dyn Fn(&Point<D>) -> Point<D> + Send + Sync>;

/// A continuous level-set function: negative in the minus region, positive in the plus region.
#[derive(Clone)]
pub struct LevelSet<const D: usize> {
    value: ScalarFn<D>,
    gradient: Option<VectorFn<D>>,
}

impl<const D: usize> fmt::Debug for LevelSet<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSet").field("has_gradient", &self.gradient.is_some()).finish()
    }
}

impl<const D: usize> LevelSet<D> {
    pub fn new(value: impl Fn(&Point<D>) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), gradient: None }
    }

    pub fn with_gradient(
        value: impl Fn(&Point<D>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Point<D>) -> Point<D> + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), gradient: Some(Arc::new(gradient)) }
    }

    /// The plane `normal · (x - point) = 0`, positive on the side `normal` points to.
    pub fn plane(point: Point<D>, normal: Point<D>) -> Self {
        Self::with_gradient(move |x| normal.dot(&(x - point)), move |_| normal)
    }

    pub fn value(&self, x: &Point<D>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Point<D>) -> Option<Point<D>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    /// Analytic gradient if available, otherwise central differences with step `h`.
    fn gradient_or_fd(&self, x: &Point<D>, h: f64) -> Point<D> {
        self.gradient(x).unwrap_or_else(|| {
            Point::<D>::from_fn(|i, _| {
                let mut e = Point::<D>::zeros();
                e[i] = h;
                (self.value(&(x + e)) - self.value(&(x - e))) / (2.0 * h)
            })
        })
    }
}

/// Nodal values of a level set on a mesh; its linear interpolant defines the discrete interface.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLevelSet {
    nodal_values: Vec<f64>,
    snap: f64,
}

impl DiscreteLevelSet {
    /// Wraps nodal values, snapping near-zeros to `+snap` with `snap = 1e-12 h`.
    pub fn from_values<const D: usize>(mesh: &SimplicialMesh<D>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidArgument("one nodal value per vertex required".into()));
        }
        let snap = 1e-12 * mesh.mesh_size();
        let mut nodal_values = values;
        for (v, x) in nodal_values.iter_mut().zip(mesh.vertices()) {
            if !v.is_finite() {
                return Err(Error::Evaluation { location: format!("{:?}", x.as_slice()), value: *v });
            }
            if v.abs() < snap {
                *v = snap;
            }
        }
        Ok(Self { nodal_values, snap })
    }

    pub fn nodal_values(&self) -> &[f64] {
        &self.nodal_values
    }

    pub fn value(&self, v: usize) -> f64 {
        self.nodal_values[v]
    }

    pub fn snap_threshold(&self) -> f64 {
        self.snap
    }

    pub fn element_values<const D: usize>(&self, mesh: &SimplicialMesh<D>, e: usize) -> ArrayVec<f64, 4> {
        mesh.element(e).iter().map(|&v| self.nodal_values[v]).collect()
    }

    /// Value of the piecewise-linear interpolant at `x` (`None` outside the mesh).
    pub fn interpolate_at<const D: usize>(&self, mesh: &SimplicialMesh<D>, x: &Point<D>) -> Option<f64> {
        let e = mesh.locate(x)?;
        let b = simplex::barycentric(&mesh.element_points(e), x)?;
        Some(b.iter().zip(self.element_values(mesh, e)).map(|(l, v)| l * v).sum())
    }
}

/// Samples `ls` at the mesh vertices.
pub fn interpolate_levelset<const D: usize>(ls: &LevelSet<D>, mesh: &SimplicialMesh<D>) -> Result<DiscreteLevelSet> {
    let values = mesh.vertices().iter().map(|x| ls.value(x)).collect();
    DiscreteLevelSet::from_values(mesh, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    NonInterfacePlus,
    NonInterfaceMinus,
    /// One vertex separated from the others (the only cut type in 2D).
    TypeI,
    /// Two-two split of a tetrahedron.
    TypeII,
}

impl Classification {
    pub fn is_interface(self) -> bool {
        matches!(self, Classification::TypeI | Classification::TypeII)
    }
}

/// Classifies an element by the signs of its (snapped, nonzero) nodal values.
pub fn classify_element(values: &[f64]) -> Classification {
    let plus = values.iter().filter(|&&v| v >= 0.0).count();
    let minus = values.len() - plus;
    match (plus, minus) {
        (_, 0) => Classification::NonInterfacePlus,
        (0, _) => Classification::NonInterfaceMinus,
        (p, m) if p == 1 || m == 1 => Classification::TypeI,
        _ => Classification::TypeII,
    }
}

/// A simplex lying entirely on one side of the discrete interface.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSimplex<const D: usize> {
    pub vertices: Vertices<D>,
    pub side: Side,
}

/// Full cut geometry of one interface element.
#[derive(Debug, Clone)]
pub struct CutElement<const D: usize> {
    pub element: usize,
    pub classification: Classification,
    pub vertices: Vertices<D>,
    pub vertex_ids: ArrayVec<usize, 4>,
    pub values: ArrayVec<f64, 4>,
    pub volume: f64,
    /// Zeros of the interpolant on sign-changing edges.
    pub cut_points: Vec<Point<D>>,
    /// Ordered vertices of the interface piece (segment, triangle or planar quad).
    pub interface_polygon: Vec<Point<D>>,
    /// Unit normal to the interface, pointing into the plus side.
    pub normal: Point<D>,
    /// `D - 1` orthonormal vectors spanning the interface plane.
    pub tangents: Vec<Point<D>>,
    pub sub_simplices: Vec<SubSimplex<D>>,
    pub vol_plus: f64,
    pub vol_minus: f64,
    /// A point on the interface plane; origin of affine expansions.
    pub ref_point: Point<D>,
}

fn edge_zero<const D: usize>(a: &Point<D>, b: &Point<D>, va: f64, vb: f64) -> Point<D> {
    let t = va / (va - vb);
    a + (b - a) * t
}

fn push_oriented<const D: usize>(out: &mut Vec<SubSimplex<D>>, pts: &[Point<D>], side: Side) {
    let mut vertices: Vertices<D> = pts.iter().copied().collect();
    if simplex::signed_volume(&vertices) < 0.0 {
        vertices.swap(D - 1, D);
    }
    out.push(SubSimplex { vertices, side });
}

/// Staircase split of a prism with corresponding triangles `x` and `y`.
fn push_prism<const D: usize>(out: &mut Vec<SubSimplex<D>>, x: [Point<D>; 3], y: [Point<D>; 3], side: Side) {
    push_oriented(out, &[x[0], x[1], x[2], y[0]], side);
    push_oriented(out, &[x[1], x[2], y[0], y[1]], side);
    push_oriented(out, &[x[2], y[0], y[1], y[2]], side);
}

impl<const D: usize> CutElement<D> {
    /// Cuts a single simplex by the zero set of the linear interpolant of `values`.
    ///
    /// `ids` are global vertex numbers; they fix the sub-tessellation deterministically.
    pub fn from_simplex(element: usize, vertices: &[Point<D>], ids: &[usize], values: &[f64]) -> Result<Self> {
        let classification = classify_element(values);
        if !classification.is_interface() {
            return Err(Error::InvalidArgument(format!("element {element} is not cut by the interface")));
        }
        let vertices: Vertices<D> = vertices.iter().copied().collect();
        let volume = simplex::signed_volume(&vertices).abs();
        let grads = simplex::barycentric_gradients(&vertices)?;
        let grad: Point<D> = grads.iter().zip(values).map(|(g, v)| g * *v).sum();
        let normal = grad
            .try_normalize(0.0)
            .ok_or_else(|| Error::DegenerateGeometry(format!("flat level set on element {element}")))?;

        let n = D + 1;
        let plus: ArrayVec<usize, 4> = (0..n).filter(|&i| values[i] >= 0.0).collect();
        let minus: ArrayVec<usize, 4> = (0..n).filter(|&i| values[i] < 0.0).collect();
        let zero = |i: usize, j: usize| edge_zero(&vertices[i], &vertices[j], values[i], values[j]);
        let by_id = |mut v: ArrayVec<usize, 4>| {
            v.sort_by_key(|&i| ids[i]);
            v
        };

        let mut cut_points = Vec::new();
        let mut polygon = Vec::new();
        let mut subs = Vec::new();
        if D == 2 {
            let (lone, rest) = if plus.len() == 1 { (plus[0], minus) } else { (minus[0], plus) };
            let lone_side = Side::of(values[lone]);
            let (j, k) = (rest[0], rest[1]);
            let (pj, pk) = (zero(lone, j), zero(lone, k));
            cut_points.extend([pj, pk]);
            polygon.extend([pj, pk]);
            push_oriented(&mut subs, &[vertices[lone], pj, pk], lone_side);
            // quad pj, vj, vk, pk split along the diagonal from the lower-id vertex
            if ids[j] < ids[k] {
                push_oriented(&mut subs, &[pj, vertices[j], pk], lone_side.opposite());
                push_oriented(&mut subs, &[vertices[j], vertices[k], pk], lone_side.opposite());
            } else {
                push_oriented(&mut subs, &[pj, vertices[j], vertices[k]], lone_side.opposite());
                push_oriented(&mut subs, &[pj, vertices[k], pk], lone_side.opposite());
            }
        } else if classification == Classification::TypeI {
            let (lone, rest) = if plus.len() == 1 { (plus[0], minus) } else { (minus[0], plus) };
            let lone_side = Side::of(values[lone]);
            let rest = by_id(rest);
            let p: [Point<D>; 3] = [zero(lone, rest[0]), zero(lone, rest[1]), zero(lone, rest[2])];
            cut_points.extend(p);
            polygon.extend(p);
            push_oriented(&mut subs, &[vertices[lone], p[0], p[1], p[2]], lone_side);
            let x = [vertices[rest[0]], vertices[rest[1]], vertices[rest[2]]];
            push_prism(&mut subs, x, p, lone_side.opposite());
        } else {
            let a = by_id(minus);
            let b = by_id(plus);
            let p11 = zero(a[0], b[0]);
            let p12 = zero(a[0], b[1]);
            let p21 = zero(a[1], b[0]);
            let p22 = zero(a[1], b[1]);
            cut_points.extend([p11, p12, p21, p22]);
            polygon.extend([p11, p12, p22, p21]);
            push_prism(&mut subs, [vertices[a[0]], p11, p12], [vertices[a[1]], p21, p22], Side::Minus);
            push_prism(&mut subs, [vertices[b[0]], p11, p21], [vertices[b[1]], p12, p22], Side::Plus);
        }

        if D == 3 {
            // orient counterclockwise about the normal (Newell normal of the polygon)
            let mut newell = Point::<D>::zeros();
            for i in 0..polygon.len() {
                let (a, b) = (polygon[i], polygon[(i + 1) % polygon.len()]);
                newell[0] += (a[1] - b[1]) * (a[2] + b[2]);
                newell[1] += (a[2] - b[2]) * (a[0] + b[0]);
                newell[2] += (a[0] - b[0]) * (a[1] + b[1]);
            }
            if newell.dot(&normal) < 0.0 {
                polygon.reverse();
            }
        } else {
            let t = polygon[1] - polygon[0];
            // (t, n) positively oriented
            if t[0] * normal[1] - t[1] * normal[0] < 0.0 {
                polygon.reverse();
            }
        }

        let edges: Vec<Point<D>> = (0..polygon.len()).map(|i| polygon[(i + 1) % polygon.len()] - polygon[i]).collect();
        let tangents = simplex::orthonormal_complement(&normal, &edges);
        let ref_point = simplex::centroid(&polygon);

        let mut vol_plus = 0.0;
        let mut vol_minus = 0.0;
        for s in &subs {
            let v = simplex::signed_volume(&s.vertices).abs();
            match s.side {
                Side::Plus => vol_plus += v,
                Side::Minus => vol_minus += v,
            }
        }

        Ok(Self {
            element,
            classification,
            vertices,
            vertex_ids: ids.iter().copied().collect(),
            values: values.iter().copied().collect(),
            volume,
            cut_points,
            interface_polygon: polygon,
            normal,
            tangents,
            sub_simplices: subs,
            vol_plus,
            vol_minus,
            ref_point,
        })
    }

    /// `|T_h^+| / |T|`.
    pub fn kappa(&self) -> f64 {
        self.vol_plus / self.volume
    }

    /// Side of the (extended) interface plane containing `x`.
    pub fn side_of(&self, x: &Point<D>) -> Side {
        Side::of(self.normal.dot(&(x - self.ref_point)))
    }

    /// Sign partition of the face opposite local vertex `i`.
    pub fn face_partition(&self, i: usize) -> Vec<SignedPolygon<D>> {
        let (pts, vals) = local_face(&self.vertices, &self.values, i);
        partition_simplex_face(&pts, &vals)
    }

    /// Value of the linear interpolant of the nodal values at `x`.
    pub fn levelset_at(&self, x: &Point<D>) -> f64 {
        let b = simplex::barycentric(&self.vertices, x).unwrap_or_default();
        b.iter().zip(&self.values).map(|(l, v)| l * v).sum()
    }
}

pub(crate) fn local_face<const D: usize>(vertices: &[Point<D>], values: &[f64], i: usize) -> (Vertices<D>, ArrayVec<f64, 4>) {
    let idx = (0..=D).filter(|&j| j != i);
    (idx.clone().map(|j| vertices[j]).collect(), idx.map(|j| values[j]).collect())
}

/// Cuts element `e` of the mesh.
pub fn cut_element<const D: usize>(mesh: &SimplicialMesh<D>, e: usize, dls: &DiscreteLevelSet) -> Result<CutElement<D>> {
    CutElement::from_simplex(e, &mesh.element_points(e), mesh.element(e), &dls.element_values(mesh, e))
}

/// A face piece on one side of the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPolygon<const D: usize> {
    pub side: Side,
    pub vertices: Vec<Point<D>>,
}

/// Splits a face simplex (segment in 2D, triangle in 3D) by the sign of the linear interpolant.
pub fn partition_simplex_face<const D: usize>(pts: &[Point<D>], vals: &[f64]) -> Vec<SignedPolygon<D>> {
    let n = pts.len();
    let signs: ArrayVec<Side, 3> = vals.iter().map(|&v| Side::of(v)).collect();
    if signs.iter().all(|&s| s == signs[0]) {
        return vec![SignedPolygon { side: signs[0], vertices: pts.to_vec() }];
    }
    if n == 2 {
        let p = edge_zero(&pts[0], &pts[1], vals[0], vals[1]);
        return vec![
            SignedPolygon { side: signs[0], vertices: vec![pts[0], p] },
            SignedPolygon { side: signs[1], vertices: vec![p, pts[1]] },
        ];
    }
    let k = (0..3).find(|&k| signs[(k + 1) % 3] == signs[(k + 2) % 3]).expect("triangle has a lone sign");
    let (j, l) = ((k + 1) % 3, (k + 2) % 3);
    let pj = edge_zero(&pts[k], &pts[j], vals[k], vals[j]);
    let pl = edge_zero(&pts[k], &pts[l], vals[k], vals[l]);
    vec![
        SignedPolygon { side: signs[k], vertices: vec![pts[k], pj, pl] },
        SignedPolygon { side: signs[j], vertices: vec![pj, pts[j], pts[l], pl] },
    ]
}

/// Sign partition of mesh face `f`.
pub fn cut_face<const D: usize>(mesh: &SimplicialMesh<D>, f: usize, dls: &DiscreteLevelSet) -> Vec<SignedPolygon<D>> {
    let vals: ArrayVec<f64, 4> = mesh.face(f).iter().map(|&v| dls.value(v)).collect();
    partition_simplex_face(&mesh.face_points(f), &vals)
}

/// Elements whose smaller side occupies less than this fraction are treated as uncut.
pub const SLIVER_RATIO: f64 = 1e-14;

/// Per-element geometry used by the discretization: either a whole simplex on one side or a cut.
#[derive(Debug, Clone)]
pub enum ElementGeometry<const D: usize> {
    Uncut { element: usize, vertices: Vertices<D>, values: ArrayVec<f64, 4>, side: Side },
    Cut(Box<CutElement<D>>),
}

impl<const D: usize> ElementGeometry<D> {
    /// Builds the geometry of element `e`, reclassifying sliver cuts as uncut on the majority side.
    pub fn new(mesh: &SimplicialMesh<D>, e: usize, dls: &DiscreteLevelSet) -> Result<Self> {
        let values = dls.element_values(mesh, e);
        let vertices = mesh.element_points(e);
        match classify_element(&values) {
            Classification::NonInterfacePlus => Ok(Self::Uncut { element: e, vertices, values, side: Side::Plus }),
            Classification::NonInterfaceMinus => Ok(Self::Uncut { element: e, vertices, values, side: Side::Minus }),
            _ => {
                let cut = CutElement::from_simplex(e, &vertices, mesh.element(e), &values)?;
                Ok(Self::from_cut(cut))
            }
        }
    }

    pub fn from_cut(cut: CutElement<D>) -> Self {
        if cut.vol_plus.min(cut.vol_minus) < SLIVER_RATIO * cut.volume {
            let side = if cut.vol_plus >= cut.vol_minus { Side::Plus } else { Side::Minus };
            Self::Uncut { element: cut.element, vertices: cut.vertices, values: cut.values, side }
        } else {
            Self::Cut(Box::new(cut))
        }
    }

    pub fn element(&self) -> usize {
        match self {
            Self::Uncut { element, .. } => *element,
            Self::Cut(c) => c.element,
        }
    }

    pub fn vertices(&self) -> &[Point<D>] {
        match self {
            Self::Uncut { vertices, .. } => vertices,
            Self::Cut(c) => &c.vertices,
        }
    }

    pub fn cut(&self) -> Option<&CutElement<D>> {
        match self {
            Self::Uncut { .. } => None,
            Self::Cut(c) => Some(c),
        }
    }

    pub fn volume(&self) -> f64 {
        simplex::signed_volume(self.vertices()).abs()
    }

    /// Side used for evaluating local functions at `x`.
    pub fn side_of(&self, x: &Point<D>) -> Side {
        match self {
            Self::Uncut { side, .. } => *side,
            Self::Cut(c) => c.side_of(x),
        }
    }

    /// Sub-simplices with their sides; an uncut element is its own single piece.
    pub fn for_each_region(&self, mut f: impl FnMut(Side, &[Point<D>])) {
        match self {
            Self::Uncut { vertices, side, .. } => f(*side, vertices),
            Self::Cut(c) => c.sub_simplices.iter().for_each(|s| f(s.side, &s.vertices)),
        }
    }

    /// Sign partition of the face opposite local vertex `i`.
    pub fn face_partition(&self, i: usize) -> Vec<SignedPolygon<D>> {
        match self {
            Self::Uncut { vertices, side, .. } => {
                let (pts, _) = local_face(vertices, &[0.0; 4][..=D], i);
                vec![SignedPolygon { side: *side, vertices: pts.to_vec() }]
            }
            Self::Cut(c) => c.face_partition(i),
        }
    }
}

/// One failed resolution check.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolutionViolation {
    /// No element is cut by the discrete interface.
    NoInterface,
    /// All nodal magnitudes of an interface element are at the snap threshold.
    BelowSnapThreshold { element: usize },
    /// A cut face does not have exactly two sign-changing edges.
    FaceSignPattern { face: usize },
    /// The exact level set changes sign inside an element the discrete one leaves uncut.
    UnresolvedElement { element: usize },
}

impl fmt::Display for ResolutionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoInterface => write!(f, "no element is cut by the interface"),
            Self::BelowSnapThreshold { element } => write!(f, "interface element {element} lies within the snap threshold"),
            Self::FaceSignPattern { face } => write!(f, "face {face} has an irregular sign pattern"),
            Self::UnresolvedElement { element } => write!(f, "element {element} hides an unresolved interface crossing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionReport {
    pub ok: bool,
    pub violations: Vec<ResolutionViolation>,
}

/// Sanity checks on how well the mesh resolves the interface.
///
/// With `exact`, uncut elements are additionally probed on a barycentric
/// lattice for sign changes the nodal values miss.
pub fn verify_resolution<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    exact: Option<&LevelSet<D>>,
) -> ResolutionReport {
    let mut violations = Vec::new();
    let mut any_cut = false;
    for e in 0..mesh.n_elements() {
        let values = dls.element_values(mesh, e);
        let class = classify_element(&values);
        if class.is_interface() {
            any_cut = true;
            if values.iter().all(|v| v.abs() <= dls.snap_threshold() * (1.0 + 1e-9)) {
                violations.push(ResolutionViolation::BelowSnapThreshold { element: e });
            }
        } else if let Some(ls) = exact {
            let pts = mesh.element_points(e);
            let want = Side::of(values[0]);
            if lattice(&pts, 4).iter().any(|x| Side::of(ls.value(x)) != want) {
                violations.push(ResolutionViolation::UnresolvedElement { element: e });
            }
        }
    }
    for f in 0..mesh.n_faces() {
        let face = mesh.face(f);
        let changes = (0..D)
            .flat_map(|i| (i + 1..D).map(move |j| (i, j)))
            .filter(|&(i, j)| Side::of(dls.value(face[i])) != Side::of(dls.value(face[j])))
            .count();
        if D == 3 && changes != 0 && changes != 2 {
            violations.push(ResolutionViolation::FaceSignPattern { face: f });
        }
    }
    if !any_cut {
        violations.insert(0, ResolutionViolation::NoInterface);
    }
    ResolutionReport { ok: violations.is_empty(), violations }
}

/// Points `sum_i (k_i / n) v_i` with nonnegative integers `k_i` summing to `n`.
fn lattice<const D: usize>(pts: &[Point<D>], n: usize) -> Vec<Point<D>> {
    let mut out = Vec::new();
    let m = pts.len();
    let mut k = vec![0usize; m];
    fn rec<const D: usize>(i: usize, left: usize, n: usize, k: &mut Vec<usize>, pts: &[Point<D>], out: &mut Vec<Point<D>>) {
        if i + 1 == k.len() {
            k[i] = left;
            let mut x = Point::<D>::zeros();
            for (kk, p) in k.iter().zip(pts) {
                x += p * (*kk as f64 / n as f64);
            }
            out.push(x);
            return;
        }
        for c in 0..=left {
            k[i] = c;
            rec(i + 1, left - c, n, k, pts, out);
        }
    }
    rec(0, n, n, &mut k, pts, &mut out);
    out
}

/// Empirical interface approximation quality.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceDistanceReport {
    /// Max of `|phi| / |grad phi|` sampled on the discrete interface.
    pub max_dist_gamma_h_to_gamma: f64,
    /// Max angle (radians) between the discrete normal and the analytic one; `None` without a gradient.
    pub max_normal_angle: Option<f64>,
    /// Set when `|grad phi|` strays from 1 by more than a factor of ten at some sample.
    pub gradient_scale_warning: bool,
}

/// Samples every discrete interface piece on a lattice of resolution `samples_per_element`.
pub fn interface_distance_check<const D: usize>(
    mesh: &SimplicialMesh<D>,
    dls: &DiscreteLevelSet,
    ls: &LevelSet<D>,
    samples_per_element: usize,
) -> Result<InterfaceDistanceReport> {
    let n = samples_per_element.max(1);
    let fd_step = 1e-6 * mesh.mesh_size();
    let mut max_dist: f64 = 0.0;
    let mut max_angle: f64 = 0.0;
    let mut warn = false;
    for e in 0..mesh.n_elements() {
        let values = dls.element_values(mesh, e);
        if !classify_element(&values).is_interface() {
            continue;
        }
        let cut = cut_element(mesh, e, dls)?;
        let poly = &cut.interface_polygon;
        let mut samples = Vec::new();
        if poly.len() == 2 {
            samples = lattice(&poly[..], n);
        } else {
            for k in 1..poly.len() - 1 {
                samples.extend(lattice(&[poly[0], poly[k], poly[k + 1]], n));
            }
        }
        for x in samples {
            let g = ls.gradient_or_fd(&x, fd_step);
            let gn = g.norm();
            if !(0.1..=10.0).contains(&gn) {
                warn = true;
            }
            if gn > 0.0 {
                max_dist = max_dist.max(ls.value(&x).abs() / gn);
                if ls.has_gradient() {
                    let c = (cut.normal.dot(&g) / gn).clamp(-1.0, 1.0);
                    max_angle = max_angle.max(c.acos());
                }
            }
        }
    }
    if warn {
        log::warn!("level-set gradient magnitude deviates from 1 by more than 10x; distance proxy is scaled");
    }
    Ok(InterfaceDistanceReport {
        max_dist_gamma_h_to_gamma: max_dist,
        max_normal_angle: ls.has_gradient().then_some(max_angle),
        gradient_scale_warning: warn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_mesh, BoxDomain};
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ref_tet() -> [Vector3<f64>; 4] {
        [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()]
    }

    fn cut_with(pts: &[Vector3<f64>], phi: impl Fn(&Vector3<f64>) -> f64) -> CutElement<3> {
        let vals: Vec<f64> = pts.iter().map(&phi).collect();
        CutElement::from_simplex(0, pts, &[0, 1, 2, 3], &vals).unwrap()
    }

    #[test]
    fn classification_by_sign_count() {
        assert_eq!(classify_element(&[-1.0, 1.0, 1.0, 1.0]), Classification::TypeI);
        assert_eq!(classify_element(&[-1.0, -1.0, 1.0, 1.0]), Classification::TypeII);
        assert_eq!(classify_element(&[1.0, 1.0, 1.0, 1.0]), Classification::NonInterfacePlus);
        assert_eq!(classify_element(&[-1.0, -2.0, -3.0, -1.0]), Classification::NonInterfaceMinus);
        assert_eq!(classify_element(&[-1.0, 1.0, 1.0]), Classification::TypeI);
        assert_eq!(classify_element(&[-1.0, -1.0, 1.0]), Classification::TypeI);
    }

    #[test]
    fn type_one_reference_cut() {
        let t = ref_tet();
        let c = cut_with(&t, |x| x.x - 0.25);
        assert_eq!(c.classification, Classification::TypeI);
        assert!((c.vol_plus - 0.421875 / 6.0).abs() < 1e-15);
        assert!((c.vol_minus - 0.578125 / 6.0).abs() < 1e-15);
        assert!((c.normal - Vector3::x()).norm() < 1e-15);
        assert!((c.kappa() - 0.421875).abs() < 1e-14);
    }

    #[test]
    fn type_one_volume_matches_monte_carlo() {
        let t = ref_tet();
        let c = cut_with(&t, |x| x.x - 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut inside, mut plus) = (0usize, 0usize);
        while inside < 200_000 {
            let x = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            if x.sum() < 1.0 {
                inside += 1;
                if x.x > 0.25 {
                    plus += 1;
                }
            }
        }
        let mc = plus as f64 / inside as f64;
        assert!((mc - c.kappa()).abs() < 5e-3);
    }

    #[test]
    fn type_two_reference_cut() {
        let t = ref_tet();
        let c = cut_with(&t, |x| x.x + x.y - 0.5);
        assert_eq!(c.classification, Classification::TypeII);
        assert!((c.vol_plus + c.vol_minus - 1.0 / 6.0).abs() < 1e-14);
        assert_eq!(c.interface_polygon.len(), 4);
        assert_eq!(c.sub_simplices.len(), 6);
    }

    #[test]
    fn triangle_cut_points() {
        let tri = [Vector2::zeros(), Vector2::x(), Vector2::y()];
        let vals: Vec<f64> = tri.iter().map(|x| x.y - 0.5).collect();
        let c = CutElement::from_simplex(0, &tri, &[0, 1, 2], &vals).unwrap();
        let mut cp: Vec<_> = c.cut_points.iter().map(|p| (p.x, p.y)).collect();
        cp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((cp[0].0 - 0.0).abs() < 1e-15 && (cp[0].1 - 0.5).abs() < 1e-15);
        assert!((cp[1].0 - 0.5).abs() < 1e-15 && (cp[1].1 - 0.5).abs() < 1e-15);
        assert!((c.normal - Vector2::y()).norm() < 1e-15);
        assert!((c.vol_plus - 0.125).abs() < 1e-15);
    }

    #[test]
    fn uncut_element_is_rejected() {
        let t = ref_tet();
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(CutElement::from_simplex(0, &t, &[0, 1, 2, 3], &vals), Err(Error::InvalidArgument(_))));
    }

    fn random_tet(rng: &mut ChaCha8Rng) -> [Vector3<f64>; 4] {
        loop {
            let t: [Vector3<f64>; 4] =
                std::array::from_fn(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            if simplex::signed_volume(&t).abs() > 0.02 {
                return t;
            }
        }
    }

    #[test]
    fn random_cuts_partition_volume_and_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut done = 0;
        while done < 10_000 {
            let t = random_tet(&mut rng);
            let n = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let c0 = simplex::centroid(&t) + Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
            let vals: Vec<f64> = t.iter().map(|x| n.dot(&(x - c0))).collect();
            if !classify_element(&vals).is_interface() {
                continue;
            }
            done += 1;
            let c = CutElement::from_simplex(0, &t, &[3, 1, 0, 2], &vals).unwrap();
            assert!((c.vol_plus + c.vol_minus - c.volume).abs() < 1e-12 * c.volume);
            let hmax = simplex::diameter(&t);
            let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for q in &c.interface_polygon {
                assert!(c.normal.dot(&(q - c.ref_point)).abs() < 1e-12 * hmax);
                assert!(c.levelset_at(q).abs() < 1e-12 * scale);
            }
            for i in 0..c.interface_polygon.len() {
                let e = c.interface_polygon[(i + 1) % c.interface_polygon.len()] - c.interface_polygon[i];
                assert!(c.normal.dot(&e).abs() < 1e-12 * hmax);
            }
            assert!((c.normal.norm() - 1.0).abs() < 1e-14);
            assert!(c.normal.dot(&n) > 0.0);
            for s in &c.sub_simplices {
                let vol = simplex::signed_volume(&s.vertices);
                assert!(vol >= 0.0);
                if vol > 1e-10 * c.volume {
                    let mid = simplex::centroid(&s.vertices);
                    assert_eq!(Side::of(c.levelset_at(&mid)), s.side);
                }
            }
            for tng in &c.tangents {
                assert!(tng.dot(&c.normal).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn classification_is_permutation_invariant() {
        let vals = [-0.3, 0.2, -0.1, 0.7];
        let base = classify_element(&vals);
        for p in [[1, 0, 2, 3], [3, 2, 1, 0], [2, 3, 0, 1]] {
            let perm: Vec<f64> = p.iter().map(|&i| vals[i]).collect();
            assert_eq!(classify_element(&perm), base);
        }
    }

    #[test]
    fn cut_is_deterministic() {
        let t = ref_tet();
        let a = cut_with(&t, |x| x.x + 0.3 * x.y - 0.4);
        let b = cut_with(&t, |x| x.x + 0.3 * x.y - 0.4);
        assert_eq!(a.sub_simplices, b.sub_simplices);
        assert_eq!(a.interface_polygon, b.interface_polygon);
    }

    #[test]
    fn face_partition_examples() {
        let tri = [Vector3::zeros(), Vector3::x(), Vector3::y()];
        let uncut = partition_simplex_face(&tri, &[1.0, 2.0, 3.0]);
        assert_eq!(uncut.len(), 1);
        assert_eq!(uncut[0].side, Side::Plus);
        let parts = partition_simplex_face(&tri, &[-1.0, 1.0, 1.0]);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].side, Side::Minus);
        assert_eq!(parts[0].vertices.len(), 3);
        assert_eq!(parts[1].vertices.len(), 4);
        let area: f64 = simplex::simplex_measure(&parts[0].vertices)
            + simplex::simplex_measure(&parts[1].vertices[..3])
            + simplex::simplex_measure(&[parts[1].vertices[0], parts[1].vertices[2], parts[1].vertices[3]]);
        assert!((area - 0.5).abs() < 1e-14);
        let seg = [Vector2::zeros(), Vector2::new(4.0, 0.0)];
        let parts = partition_simplex_face(&seg, &[-1.0, 3.0]);
        assert!((parts[0].vertices[1].x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn snap_rule_and_interpolation() {
        let mesh = build_uniform_mesh(BoxDomain::<3>::cube(-1.0, 1.0), 4).unwrap();
        let ls = LevelSet::new(|x: &Vector3<f64>| x.x - 0.25);
        let dls = interpolate_levelset(&ls, &mesh).unwrap();
        for (v, x) in dls.nodal_values().iter().zip(mesh.vertices()) {
            assert!((v - (x.x - 0.25)).abs() < 1e-15 || (x.x - 0.25).abs() < dls.snap_threshold());
        }
        let on = LevelSet::new(|x: &Vector3<f64>| x.x);
        let dls = interpolate_levelset(&on, &mesh).unwrap();
        let h = mesh.mesh_size();
        assert!(dls.nodal_values().iter().all(|&v| v != 0.0));
        assert!(dls.nodal_values().iter().any(|&v| v == 1e-12 * h));
        let bad = LevelSet::new(|_: &Vector3<f64>| f64::NAN);
        assert!(matches!(interpolate_levelset(&bad, &mesh), Err(Error::Evaluation { .. })));
    }

    fn sphere(r0: f64) -> LevelSet<3> {
        LevelSet::with_gradient(move |x: &Vector3<f64>| x.norm() - r0, |x: &Vector3<f64>| x / x.norm())
    }

    #[test]
    fn resolution_checks() {
        let r0 = std::f64::consts::PI / 6.28;
        let mesh = build_uniform_mesh(BoxDomain::<3>::cube(-1.0, 1.0), 10).unwrap();
        let dls = interpolate_levelset(&sphere(r0), &mesh).unwrap();
        assert!(dls.nodal_values().iter().any(|&v| v < 0.0) && dls.nodal_values().iter().any(|&v| v > 0.0));
        assert!(verify_resolution(&mesh, &dls, None).ok);

        let coarse = build_uniform_mesh(BoxDomain::<3>::cube(-1.0, 1.0), 1).unwrap();
        let small = LevelSet::new(|x: &Vector3<f64>| (x - Vector3::new(-0.6, -0.6, -0.6)).norm() - 0.1);
        let dls = interpolate_levelset(&small, &coarse).unwrap();
        let report = verify_resolution(&coarse, &dls, Some(&small));
        assert!(!report.ok);
        assert_eq!(report.violations[0], ResolutionViolation::NoInterface);

        for m in [3, 7] {
            let mesh = build_uniform_mesh(BoxDomain::<3>::cube(-1.0, 1.0), m).unwrap();
            let plane = LevelSet::plane(Vector3::new(0.05, 0.0, 0.0), Vector3::x());
            let dls = interpolate_levelset(&plane, &mesh).unwrap();
            assert!(verify_resolution(&mesh, &dls, Some(&plane)).ok);
        }
    }

    #[test]
    fn plane_interface_is_exact() {
        let mesh = build_uniform_mesh(BoxDomain::<3>::cube(-1.0, 1.0), 5).unwrap();
        let plane = LevelSet::plane(Vector3::new(0.3, 0.0, 0.0), Vector3::x());
        let dls = interpolate_levelset(&plane, &mesh).unwrap();
        let r = interface_distance_check(&mesh, &dls, &plane, 3).unwrap();
        assert!(r.max_dist_gamma_h_to_gamma < 1e-14);
        assert!(r.max_normal_angle.unwrap() < 1e-7);
        let no_grad = LevelSet::new(|x: &Vector3<f64>| x.x - 0.3);
        let r = interface_distance_check(&mesh, &dls, &no_grad, 3).unwrap();
        assert!(r.max_normal_angle.is_none());
    }

    #[test]
    fn sliver_is_reclassified() {
        let t = ref_tet();
        let vals = [1.0, 1.0, 1.0, -1e-15];
        let cut = CutElement::from_simplex(0, &t, &[0, 1, 2, 3], &vals).unwrap();
        match ElementGeometry::from_cut(cut) {
            ElementGeometry::Uncut { side, .. } => assert_eq!(side, Side::Plus),
            ElementGeometry::Cut(_) => panic!("sliver must be uncut"),
        }
    }
}
