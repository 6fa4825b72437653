//! Uniform simplicial meshes of axis-aligned boxes with full face connectivity.
//!
//! Every cube (square in 2D) of the background grid is split into `D!`
//! simplices along its main diagonal (Kuhn/Freudenthal split). All cubes use
//! the same pattern, so the mesh is conforming without parity logic.

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::simplex::{self, Point, Vertices};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain<const D: usize> {
    pub lo: Point<D>,
    pub hi: Point<D>,
}

impl<const D: usize> BoxDomain<D> {
    pub fn new(lo: Point<D>, hi: Point<D>) -> Self {
        Self { lo, hi }
    }

    /// The cube `[lo, hi]^D`.
    pub fn cube(lo: f64, hi: f64) -> Self {
        Self { lo: Point::<D>::from_element(lo), hi: Point::<D>::from_element(hi) }
    }

    pub fn volume(&self) -> f64 {
        (self.hi - self.lo).iter().product()
    }

    pub fn contains(&self, x: &Point<D>, tol: f64) -> bool {
        (0..D).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }
}

#[derive(Debug, Clone)]
struct UniformGrid<const D: usize> {
    domain: BoxDomain<D>,
    m: usize,
}

/// Geometric data of one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry<const D: usize> {
    pub centroid: Point<D>,
    pub measure: f64,
    /// Points from the lower-indexed adjacent element to the higher-indexed one,
    /// or outward on boundary faces.
    pub unit_normal: Point<D>,
}

/// A simplicial mesh with element/face adjacency.
///
/// Elements are stored with positive orientation; faces are keyed by their
/// sorted vertex tuple and ordered lexicographically on it.
#[derive(Debug, Clone)]
pub struct SimplicialMesh<const D: usize> {
    vertices: Vec<Point<D>>,
    elements: Vec<usize>,
    faces: Vec<usize>,
    face_elements: Vec<(usize, Option<usize>)>,
    element_faces: Vec<usize>,
    grid: Option<UniformGrid<D>>,
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..left.len() {
            let v = left.remove(k);
            prefix.push(v);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(k, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..d).collect(), &mut out);
    out
}

/// Builds a uniform Kuhn-split mesh of `domain` with `m` subdivisions per axis.
pub fn build_uniform_mesh<const D: usize>(domain: BoxDomain<D>, m: usize) -> Result<SimplicialMesh<D>> {
    if !(2..=3).contains(&D) {
        return Err(Error::InvalidArgument(format!("dimension {D} is not supported")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("subdivision count must be positive".into()));
    }
    if (0..D).any(|i| !(domain.lo[i] < domain.hi[i])) {
        return Err(Error::InvalidArgument("degenerate box".into()));
    }
    let n1 = m + 1;
    let strides: Vec<usize> = (0..D).map(|i| n1.pow(i as u32)).collect();
    let n_vertices = n1.pow(D as u32);
    let step = (domain.hi - domain.lo) / m as f64;
    let mut vertices = Vec::with_capacity(n_vertices);
    for idx in 0..n_vertices {
        let p = Point::<D>::from_fn(|i, _| {
            let k = (idx / strides[i]) % n1;
            if k == m {
                domain.hi[i]
            } else {
                domain.lo[i] + k as f64 * step[i]
            }
        });
        vertices.push(p);
    }

    let perms = permutations(D);
    let n_cubes = m.pow(D as u32);
    let mut elements = Vec::with_capacity(n_cubes * perms.len() * (D + 1));
    for cube in 0..n_cubes {
        let corner: usize = (0..D).map(|i| ((cube / m.pow(i as u32)) % m) * strides[i]).sum();
        for perm in &perms {
            let mut tet: ArrayVec<usize, 4> = ArrayVec::new();
            let mut v = corner;
            tet.push(v);
            for &axis in perm {
                v += strides[axis];
                tet.push(v);
            }
            let pts: Vertices<D> = tet.iter().map(|&i| vertices[i]).collect();
            if simplex::signed_volume(&pts) < 0.0 {
                tet.swap(D - 1, D);
            }
            elements.extend_from_slice(&tet);
        }
    }
    let mut mesh = SimplicialMesh::from_parts(vertices, elements)?;
    mesh.grid = Some(UniformGrid { domain, m });
    Ok(mesh)
}

impl<const D: usize> SimplicialMesh<D> {
    /// Builds connectivity for arbitrary vertex/element arrays (`elements` has stride `D + 1`).
    ///
    /// Negatively oriented elements are reoriented.
    pub fn from_parts(vertices: Vec<Point<D>>, mut elements: Vec<usize>) -> Result<Self> {
        let nv = D + 1;
        if !elements.len().is_multiple_of(nv) {
            return Err(Error::InvalidArgument("element array length is not a multiple of D+1".into()));
        }
        if elements.iter().any(|&v| v >= vertices.len()) {
            return Err(Error::InvalidArgument("element references a missing vertex".into()));
        }
        for tet in elements.chunks_mut(nv) {
            let pts: Vertices<D> = tet.iter().map(|&i| vertices[i]).collect();
            let vol = simplex::signed_volume(&pts);
            if vol == 0.0 || !vol.is_finite() {
                return Err(Error::DegenerateGeometry("zero-volume element".into()));
            }
            if vol < 0.0 {
                tet.swap(D - 1, D);
            }
        }
        let n_elements = elements.len() / nv;
        let mut keyed: Vec<(ArrayVec<usize, 3>, usize, usize)> = Vec::with_capacity(n_elements * nv);
        for e in 0..n_elements {
            let tet = &elements[e * nv..(e + 1) * nv];
            for i in 0..nv {
                let mut key: ArrayVec<usize, 3> = (0..nv).filter(|&j| j != i).map(|j| tet[j]).collect();
                key.sort_unstable();
                keyed.push((key, e, i));
            }
        }
        keyed.sort_unstable();
        let mut faces = Vec::new();
        let mut face_elements = Vec::new();
        let mut element_faces = vec![usize::MAX; n_elements * nv];
        let mut k = 0;
        while k < keyed.len() {
            let mut j = k + 1;
            while j < keyed.len() && keyed[j].0 == keyed[k].0 {
                j += 1;
            }
            if j - k > 2 {
                return Err(Error::InvalidArgument("non-manifold face shared by more than two elements".into()));
            }
            let f = face_elements.len();
            faces.extend_from_slice(&keyed[k].0);
            let first = keyed[k].1;
            let second = (j - k == 2).then(|| keyed[k + 1].1);
            face_elements.push((first, second));
            for entry in &keyed[k..j] {
                element_faces[entry.1 * nv + entry.2] = f;
            }
            k = j;
        }
        Ok(Self { vertices, elements, faces, face_elements, element_faces, grid: None })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (D + 1)
    }

    pub fn n_faces(&self) -> usize {
        self.face_elements.len()
    }

    pub fn vertices(&self) -> &[Point<D>] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Point<D> {
        &self.vertices[v]
    }

    /// Vertex indices of element `e`.
    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e * (D + 1)..(e + 1) * (D + 1)]
    }

    /// Vertex coordinates of element `e`.
    pub fn element_points(&self, e: usize) -> Vertices<D> {
        self.element(e).iter().map(|&v| self.vertices[v]).collect()
    }

    /// Sorted vertex indices of face `f`.
    pub fn face(&self, f: usize) -> &[usize] {
        &self.faces[f * D..(f + 1) * D]
    }

    pub fn face_points(&self, f: usize) -> Vertices<D> {
        self.face(f).iter().map(|&v| self.vertices[v]).collect()
    }

    /// Adjacent elements of face `f`: the lower index first.
    pub fn face_elements(&self, f: usize) -> (usize, Option<usize>) {
        self.face_elements[f]
    }

    /// Face indices of element `e`; entry `i` is the face opposite local vertex `i`.
    pub fn element_faces(&self, e: usize) -> &[usize] {
        &self.element_faces[e * (D + 1)..(e + 1) * (D + 1)]
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_elements[f].1.is_none()
    }

    pub fn boundary_flags(&self) -> Vec<bool> {
        (0..self.n_faces()).map(|f| self.is_boundary_face(f)).collect()
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        simplex::signed_volume(&self.element_points(e))
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        simplex::diameter(&self.element_points(e))
    }

    /// Maximum element diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_diameter(e)).fold(0.0, f64::max)
    }

    /// Centroid, measure and oriented unit normal of face `f`.
    pub fn face_geometry(&self, f: usize) -> FaceGeometry<D> {
        let pts = self.face_points(f);
        let centroid = simplex::centroid(&pts);
        let measure = simplex::simplex_measure(&pts);
        let dirs: ArrayVec<Point<D>, 3> = pts[1..].iter().map(|p| p - pts[0]).collect();
        let mut n = simplex::hyperplane_normal(&dirs).unwrap_or_else(Point::<D>::zeros);
        let (e1, _) = self.face_elements[f];
        let inside = simplex::centroid(&self.element_points(e1));
        if n.dot(&(centroid - inside)) < 0.0 {
            n = -n;
        }
        FaceGeometry { centroid, measure, unit_normal: n }
    }

    /// `max_T h_T / r_T` with `r_T` the inradius.
    pub fn shape_regularity(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for e in 0..self.n_elements() {
            worst = worst.max(element_shape_ratio(&self.element_points(e))?);
        }
        Ok(worst)
    }

    /// Index of an element containing `x`, if any.
    pub fn locate(&self, x: &Point<D>) -> Option<usize> {
        const TOL: f64 = 1e-12;
        let inside = |e: usize| {
            simplex::barycentric(&self.element_points(e), x).is_some_and(|b| b.iter().all(|&l| l >= -TOL))
        };
        match &self.grid {
            Some(grid) => {
                let scale = (grid.domain.hi - grid.domain.lo).amax();
                if !grid.domain.contains(x, TOL * scale) {
                    return None;
                }
                let mut cube = 0;
                for i in (0..D).rev() {
                    let t = (x[i] - grid.domain.lo[i]) / (grid.domain.hi[i] - grid.domain.lo[i]) * grid.m as f64;
                    let k = (t.floor().max(0.0) as usize).min(grid.m - 1);
                    cube = cube * grid.m + k;
                }
                let per_cube: usize = (1..=D).product();
                (cube * per_cube..(cube + 1) * per_cube).find(|&e| inside(e)).or_else(|| (0..self.n_elements()).find(|&e| inside(e)))
            }
            None => (0..self.n_elements()).find(|&e| inside(e)),
        }
    }
}

/// `h_T / r_T` of a single simplex.
pub fn element_shape_ratio<const D: usize>(pts: &[Point<D>]) -> Result<f64> {
    let h = simplex::diameter(pts);
    let vol = simplex::signed_volume(pts).abs();
    if !(vol > 1e-14 * h.powi(D as i32)) {
        return Err(Error::DegenerateGeometry(format!("simplex volume {vol:e} with diameter {h:e}")));
    }
    let boundary: f64 = (0..=D)
        .map(|i| {
            let face: Vertices<D> = (0..=D).filter(|&j| j != i).map(|j| pts[j]).collect();
            simplex::simplex_measure(&face)
        })
        .sum();
    let inradius = D as f64 * vol / boundary;
    Ok(h / inradius)
}
