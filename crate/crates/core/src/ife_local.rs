//! The local immersed Crouzeix–Raviart element.
//!
//! On an interface element the shape functions are piecewise affine: one
//! affine function per side of the discrete interface plane, glued by value
//! continuity and flux continuity. Everything here is built from the standard
//! CR basis and the weight function `w`, which vanishes on the minus side and
//! equals the signed distance to the interface plane on the plus side.

use std::ops::{Add, Mul, Sub};

use arrayvec::ArrayVec;
use nalgebra::{DMatrix, SMatrix};

use crate::cutgeom::{CutElement, ElementGeometry, SignedPolygon, Side};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::simplex::{self, Point};

/// Quadrature degree for face averages of smooth functions.
pub const DOF_DEGREE: usize = 4;

/// `x ↦ value_at_ref + gradient · (x − ref_point)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFn<const D: usize> {
    pub gradient: Point<D>,
    pub value_at_ref: f64,
    pub ref_point: Point<D>,
}

impl<const D: usize> AffineFn<D> {
    pub fn new(gradient: Point<D>, value_at_ref: f64, ref_point: Point<D>) -> Self {
        Self { gradient, value_at_ref, ref_point }
    }

    pub fn constant(value: f64, ref_point: Point<D>) -> Self {
        Self::new(Point::<D>::zeros(), value, ref_point)
    }

    pub fn zero(ref_point: Point<D>) -> Self {
        Self::constant(0.0, ref_point)
    }

    pub fn eval(&self, x: &Point<D>) -> f64 {
        self.value_at_ref + self.gradient.dot(&(x - self.ref_point))
    }

    /// Same function expanded about a different origin.
    pub fn rebased(&self, ref_point: Point<D>) -> Self {
        Self::new(self.gradient, self.eval(&ref_point), ref_point)
    }
}

impl<const D: usize> Add for AffineFn<D> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let rhs = rhs.rebased(self.ref_point);
        Self::new(self.gradient + rhs.gradient, self.value_at_ref + rhs.value_at_ref, self.ref_point)
    }
}

impl<const D: usize> Sub for AffineFn<D> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + rhs * -1.0
    }
}

impl<const D: usize> Mul<f64> for AffineFn<D> {
    type Output = Self;
    fn mul(self, a: f64) -> Self {
        Self::new(self.gradient * a, self.value_at_ref * a, self.ref_point)
    }
}

/// Interface plane of a cut element, used to pick a side when evaluating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfacePlane<const D: usize> {
    pub ref_point: Point<D>,
    pub normal: Point<D>,
}

impl<const D: usize> InterfacePlane<D> {
    pub fn side_of(&self, x: &Point<D>) -> Side {
        Side::of(self.normal.dot(&(x - self.ref_point)))
    }
}

/// One affine function per side. Uncut elements carry no interface and `plus == minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseAffine<const D: usize> {
    pub plus: AffineFn<D>,
    pub minus: AffineFn<D>,
    pub interface: Option<InterfacePlane<D>>,
}

impl<const D: usize> PiecewiseAffine<D> {
    pub fn uniform(f: AffineFn<D>) -> Self {
        Self { plus: f, minus: f, interface: None }
    }

    pub fn sided(plus: AffineFn<D>, minus: AffineFn<D>, interface: InterfacePlane<D>) -> Self {
        Self { plus, minus, interface: Some(interface) }
    }

    pub fn side(&self, side: Side) -> &AffineFn<D> {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    pub fn gradient(&self, side: Side) -> Point<D> {
        self.side(side).gradient
    }

    pub fn eval_side(&self, side: Side, x: &Point<D>) -> f64 {
        self.side(side).eval(x)
    }

    /// Evaluates the branch on whose side of the interface plane `x` lies.
    pub fn eval(&self, x: &Point<D>) -> f64 {
        let side = self.interface.map_or(Side::Plus, |p| p.side_of(x));
        self.eval_side(side, x)
    }

    /// `plus(x) − minus(x)`.
    pub fn value_jump(&self, x: &Point<D>) -> f64 {
        self.plus.eval(x) - self.minus.eval(x)
    }

    pub fn gradient_jump(&self) -> Point<D> {
        self.plus.gradient - self.minus.gradient
    }

    /// `[[B ∇v · n]]`.
    pub fn flux_jump(&self, coefficient: &ElementCoefficient<D>, n: &Point<D>) -> f64 {
        coefficient.apply(Side::Plus, &self.plus.gradient).dot(n) - coefficient.apply(Side::Minus, &self.minus.gradient).dot(n)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { plus: self.plus * a, minus: self.minus * a, interface: self.interface }
    }

    pub fn plus_fn(&self, other: &Self) -> Self {
        Self { plus: self.plus + other.plus, minus: self.minus + other.minus, interface: self.interface.or(other.interface) }
    }

    /// `Σ c_i f_i`; `ref_point` is the expansion origin of the result.
    pub fn linear_combination(coeffs: &[f64], fns: &[Self], ref_point: Point<D>) -> Self {
        let mut acc = Self::uniform(AffineFn::zero(ref_point));
        for (c, f) in coeffs.iter().zip(fns) {
            acc = acc.plus_fn(&f.scaled(*c));
        }
        acc
    }
}

/// Element-constant coefficient `β_T^±` (scalar) or `B_T^±` (tensor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementCoefficient<const D: usize> {
    Scalar { plus: f64, minus: f64 },
    Tensor { plus: SMatrix<f64, D, D>, minus: SMatrix<f64, D, D> },
}

impl<const D: usize> ElementCoefficient<D> {
    pub fn scalar(plus: f64, minus: f64) -> Result<Self> {
        let c = Self::Scalar { plus, minus };
        c.validate()?;
        Ok(c)
    }

    pub fn tensor(plus: SMatrix<f64, D, D>, minus: SMatrix<f64, D, D>) -> Result<Self> {
        let c = Self::Tensor { plus, minus };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Scalar { plus, minus } => {
                if !(*plus > 0.0 && *minus > 0.0 && plus.is_finite() && minus.is_finite()) {
                    return Err(Error::InvalidArgument(format!("coefficients must be positive, got {plus} and {minus}")));
                }
            }
            Self::Tensor { plus, minus } => {
                check_spd(plus)?;
                check_spd(minus)?;
            }
        }
        Ok(())
    }

    /// `B^s g`.
    pub fn apply(&self, side: Side, g: &Point<D>) -> Point<D> {
        match (self, side) {
            (Self::Scalar { plus, .. }, Side::Plus) => g * *plus,
            (Self::Scalar { minus, .. }, Side::Minus) => g * *minus,
            (Self::Tensor { plus, .. }, Side::Plus) => plus * g,
            (Self::Tensor { minus, .. }, Side::Minus) => minus * g,
        }
    }

    /// `nᵀ B^s n`.
    pub fn normal_weight(&self, side: Side, n: &Point<D>) -> f64 {
        self.apply(side, n).dot(n)
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Self::Scalar { .. })
    }
}

/// Symmetric positive definiteness via a Cholesky factorization.
pub fn check_spd<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<()> {
    let scale = m.amax();
    if !(scale.is_finite()) || (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument("tensor coefficient is not symmetric".into()));
    }
    let mut l = SMatrix::<f64, D, D>::zeros();
    for j in 0..D {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 1e-14 * scale) {
            return Err(Error::InvalidArgument("tensor coefficient is not positive definite".into()));
        }
        l[(j, j)] = d.sqrt();
        for i in j + 1..D {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    Ok(())
}

/// The `N + 1` local shape functions of one element with the data they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct IfeBasisSet<const D: usize> {
    pub basis: ArrayVec<PiecewiseAffine<D>, 4>,
    pub coefficient: Option<ElementCoefficient<D>>,
    /// `|T_h^+| / |T|`; 1 or 0 for uncut elements.
    pub kappa: f64,
}

impl<const D: usize> IfeBasisSet<D> {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `Σ c_i φ_i`.
    pub fn combine(&self, coeffs: &[f64]) -> PiecewiseAffine<D> {
        let origin = self.basis[0].plus.ref_point;
        let mut f = PiecewiseAffine::linear_combination(coeffs, &self.basis, origin);
        f.interface = self.basis[0].interface;
        f
    }
}

/// Anything that can split the faces of an element by side.
pub trait FacePartition<const D: usize> {
    fn element_vertices(&self) -> &[Point<D>];
    /// Pieces of the face opposite local vertex `i`.
    fn face_pieces(&self, i: usize) -> Vec<SignedPolygon<D>>;
}

impl<const D: usize> FacePartition<D> for CutElement<D> {
    fn element_vertices(&self) -> &[Point<D>] {
        &self.vertices
    }
    fn face_pieces(&self, i: usize) -> Vec<SignedPolygon<D>> {
        self.face_partition(i)
    }
}

impl<const D: usize> FacePartition<D> for ElementGeometry<D> {
    fn element_vertices(&self) -> &[Point<D>] {
        self.vertices()
    }
    fn face_pieces(&self, i: usize) -> Vec<SignedPolygon<D>> {
        self.face_partition(i)
    }
}

/// Standard CR basis `λ_i = 1 − N b_i`, expanded about the element centroid.
pub fn cr_basis<const D: usize>(vertices: &[Point<D>]) -> Result<ArrayVec<AffineFn<D>, 4>> {
    let h = simplex::diameter(vertices);
    if !(simplex::signed_volume(vertices).abs() > 1e-14 * h.powi(D as i32)) {
        return Err(Error::DegenerateGeometry("degenerate simplex in CR basis".into()));
    }
    let grads = simplex::barycentric_gradients(vertices)?;
    let c = simplex::centroid(vertices);
    let v0 = 1.0 / (D as f64 + 1.0);
    Ok(grads.iter().map(|g| AffineFn::new(g * -(D as f64), v0, c)).collect())
}

/// `N_i(v) = |F_i|⁻¹ ∫_{F_i} v`, with `v(side, x)` evaluated per face piece.
pub fn dof_functional<const D: usize, G: FacePartition<D>>(geom: &G, i: usize, v: impl Fn(Side, &Point<D>) -> f64) -> f64 {
    let mut total = 0.0;
    let mut measure = 0.0;
    for piece in geom.face_pieces(i) {
        quadrature::visit_polygon(&piece.vertices, DOF_DEGREE, |x, w| {
            total += w * v(piece.side, &x);
            measure += w;
        });
    }
    total / measure
}

/// `Π_T v = Σ_i N_i(v) λ_i`.
pub fn cr_interpolate<const D: usize, G: FacePartition<D>>(geom: &G, v: impl Fn(Side, &Point<D>) -> f64) -> Result<AffineFn<D>> {
    let lambdas = cr_basis(geom.element_vertices())?;
    let mut out = AffineFn::zero(lambdas[0].ref_point);
    for (i, l) in lambdas.iter().enumerate() {
        out = out + *l * dof_functional(geom, i, &v);
    }
    Ok(out)
}

fn interface_of<const D: usize>(cut: &CutElement<D>) -> InterfacePlane<D> {
    InterfacePlane { ref_point: cut.ref_point, normal: cut.normal }
}

/// `w⁺ = n_h · (x − ref)`, `w⁻ = 0`.
pub fn weight_w<const D: usize>(cut: &CutElement<D>) -> PiecewiseAffine<D> {
    let r = cut.ref_point;
    PiecewiseAffine::sided(AffineFn::new(cut.normal, 0.0, r), AffineFn::zero(r), interface_of(cut))
}

fn pi_w<const D: usize>(cut: &CutElement<D>) -> Result<AffineFn<D>> {
    let w = weight_w(cut);
    Ok(cr_interpolate(cut, |s, x| w.eval_side(s, x))?.rebased(cut.ref_point))
}

/// `∇(Π_T w) · n_h`, which equals `|T_h^+| / |T|`.
pub fn gauss_kappa<const D: usize>(cut: &CutElement<D>) -> Result<f64> {
    Ok(pi_w(cut)?.gradient.dot(&cut.normal))
}

/// IFE basis for piecewise-constant scalar coefficients on a cut element.
pub fn ife_basis_scalar<const D: usize>(cut: &CutElement<D>, beta_plus: f64, beta_minus: f64) -> Result<IfeBasisSet<D>> {
    ife_basis_cut(cut, ElementCoefficient::scalar(beta_plus, beta_minus)?)
}

/// IFE basis for SPD tensor coefficients on a cut element.
pub fn ife_basis_tensor<const D: usize>(
    cut: &CutElement<D>,
    b_plus: SMatrix<f64, D, D>,
    b_minus: SMatrix<f64, D, D>,
) -> Result<IfeBasisSet<D>> {
    ife_basis_cut(cut, ElementCoefficient::tensor(b_plus, b_minus)?)
}

/// Local basis of any element: plain CR off the interface, IFE on cut elements.
pub fn ife_basis<const D: usize>(geom: &ElementGeometry<D>, coefficient: Option<ElementCoefficient<D>>) -> Result<IfeBasisSet<D>> {
    match geom {
        ElementGeometry::Uncut { vertices, side, .. } => {
            let basis = cr_basis(vertices)?.into_iter().map(PiecewiseAffine::uniform).collect();
            let kappa = if *side == Side::Plus { 1.0 } else { 0.0 };
            Ok(IfeBasisSet { basis, coefficient, kappa })
        }
        ElementGeometry::Cut(cut) => {
            let c = coefficient.ok_or_else(|| Error::InvalidArgument("interface element needs a coefficient".into()))?;
            ife_basis_cut(cut, c)
        }
    }
}

fn ife_basis_cut<const D: usize>(cut: &CutElement<D>, coefficient: ElementCoefficient<D>) -> Result<IfeBasisSet<D>> {
    coefficient.validate()?;
    let r = cut.ref_point;
    let n = cut.normal;
    let lambdas = cr_basis(&cut.vertices)?;
    let pw = pi_w(cut)?;
    let kappa = pw.gradient.dot(&n);
    // w − Π_T w
    let bubble_plus = AffineFn::new(n, 0.0, r) - pw;
    let bubble_minus = pw * -1.0;

    let scale: ArrayVec<f64, 4> = match coefficient {
        ElementCoefficient::Scalar { plus, minus } => {
            let ratio = minus / plus;
            let denom = 1.0 + (ratio - 1.0) * kappa;
            debug_assert!(denom >= ratio.min(1.0) * (1.0 - 1e-12));
            lambdas.iter().map(|l| (ratio - 1.0) * l.gradient.dot(&n) / denom).collect()
        }
        ElementCoefficient::Tensor { plus, minus } => {
            let tangential = cut.tangents.iter().map(|t| pw.gradient.dot(t).abs()).fold(0.0, f64::max);
            if tangential > 1e-9 * pw.gradient.norm().max(1.0) {
                return Err(Error::NumericalFailure(format!(
                    "tangential part of grad(Pi w) is {tangential:e} on element {}",
                    cut.element
                )));
            }
            let npn = (plus * n).dot(&n);
            let nmn = (minus * n).dot(&n);
            let rho = nmn / npn;
            let denom = 1.0 + (rho - 1.0) * kappa;
            lambdas.iter().map(|l| -((plus - minus) * l.gradient).dot(&n) / (npn * denom)).collect()
        }
    };

    let plane = interface_of(cut);
    let basis = lambdas
        .iter()
        .zip(&scale)
        .map(|(l, a)| {
            let l = l.rebased(r);
            PiecewiseAffine::sided(l + bubble_plus * *a, l + bubble_minus * *a, plane)
        })
        .collect();
    Ok(refine_duality(cut, IfeBasisSet { basis, coefficient: Some(coefficient), kappa }))
}

/// One step of refinement towards `N_j(φ_i) = δ_ij`.
///
/// On needle-shaped elements the correction coefficients can be large enough
/// to amplify round-off in `Π_T w`; recombining with the inverse dof matrix
/// stays inside the IFE space and restores duality to round-off.
fn refine_duality<const D: usize>(cut: &CutElement<D>, set: IfeBasisSet<D>) -> IfeBasisSet<D> {
    let n = set.len();
    let dofs = DMatrix::from_fn(n, n, |j, k| dof_functional(cut, j, |s, x| set.basis[k].eval_side(s, x)));
    let Some(inv) = dofs.try_inverse() else { return set };
    let basis = (0..n).map(|i| set.combine(inv.column(i).as_slice())).collect();
    IfeBasisSet { basis, ..set }
}

/// `Π̃_T^IFE v = Σ_i N_i(v) φ_i` for a side-aware `v`.
pub fn ife_interpolate<const D: usize, G: FacePartition<D>>(
    geom: &G,
    basis: &IfeBasisSet<D>,
    v: impl Fn(Side, &Point<D>) -> f64,
) -> PiecewiseAffine<D> {
    let coeffs: ArrayVec<f64, 4> = (0..basis.len()).map(|i| dof_functional(geom, i, &v)).collect();
    basis.combine(&coeffs)
}

/// The auxiliary functions `Ψ`, `Υ` and `Θ_i` of an interface element.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxFunctions<const D: usize> {
    pub psi: PiecewiseAffine<D>,
    pub upsilon: PiecewiseAffine<D>,
    pub theta: Vec<PiecewiseAffine<D>>,
}

/// `z − Π̃^IFE z` for `z` supported on the plus side.
fn remove_interpolant<const D: usize>(cut: &CutElement<D>, basis: &IfeBasisSet<D>, z_plus: AffineFn<D>) -> PiecewiseAffine<D> {
    let r = cut.ref_point;
    let z = PiecewiseAffine::sided(z_plus, AffineFn::zero(r), interface_of(cut));
    let interp = ife_interpolate(cut, basis, |s, x| z.eval_side(s, x));
    z.plus_fn(&interp.scaled(-1.0))
}

/// Builds `Ψ` (unit value jump), `Υ` (unit flux jump) and `Θ_i` (unit jump of the `i`-th tangential derivative).
pub fn aux_functions<const D: usize>(cut: &CutElement<D>, basis: &IfeBasisSet<D>) -> Result<AuxFunctions<D>> {
    let coefficient = basis
        .coefficient
        .ok_or_else(|| Error::InvalidArgument("auxiliary functions need the element coefficient".into()))?;
    let r = cut.ref_point;
    let n = cut.normal;
    let npn = coefficient.normal_weight(Side::Plus, &n);
    let psi = remove_interpolant(cut, basis, AffineFn::constant(1.0, r));
    let upsilon = remove_interpolant(cut, basis, AffineFn::new(n / npn, 0.0, r));
    let theta = cut
        .tangents
        .iter()
        .map(|t| {
            let g = t - n * (coefficient.apply(Side::Plus, t).dot(&n) / npn);
            remove_interpolant(cut, basis, AffineFn::new(g, 0.0, r))
        })
        .collect();
    Ok(AuxFunctions { psi, upsilon, theta })
}

/// Coefficients of `Π_T^BK v − Π_T^IFE v = aΨ + bΥ + Σ c_i Θ_i + Σ g_i φ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Defect {
    pub a: f64,
    pub b: f64,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
}

/// The two one-sided CR interpolants `Π_T v^±` as a piecewise function.
pub fn bk_interpolant<const D: usize>(
    cut: &CutElement<D>,
    v_plus: impl Fn(&Point<D>) -> f64,
    v_minus: impl Fn(&Point<D>) -> f64,
) -> Result<PiecewiseAffine<D>> {
    let r = cut.ref_point;
    let p = cr_interpolate(cut, |_, x| v_plus(x))?.rebased(r);
    let m = cr_interpolate(cut, |_, x| v_minus(x))?.rebased(r);
    Ok(PiecewiseAffine::sided(p, m, interface_of(cut)))
}

pub fn decompose_defect<const D: usize>(
    cut: &CutElement<D>,
    basis: &IfeBasisSet<D>,
    v_plus: impl Fn(&Point<D>) -> f64,
    v_minus: impl Fn(&Point<D>) -> f64,
) -> Result<Defect> {
    let coefficient = basis
        .coefficient
        .ok_or_else(|| Error::InvalidArgument("defect decomposition needs the element coefficient".into()))?;
    let bk = bk_interpolant(cut, &v_plus, &v_minus)?;
    let jump = bk.gradient_jump();
    let ev = |s: Side, x: &Point<D>| match s {
        Side::Plus => v_plus(x),
        Side::Minus => v_minus(x),
    };
    Ok(Defect {
        a: bk.value_jump(&cut.ref_point),
        b: bk.flux_jump(&coefficient, &cut.normal),
        c: cut.tangents.iter().map(|t| jump.dot(t)).collect(),
        g: (0..basis.len())
            .map(|i| dof_functional(cut, i, |s, x| bk.eval_side(s, x)) - dof_functional(cut, i, ev))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ref_tet() -> [Vector3<f64>; 4] {
        [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()]
    }

    fn cut_of<const D: usize>(pts: &[Point<D>], phi: impl Fn(&Point<D>) -> f64) -> CutElement<D> {
        let vals: Vec<f64> = pts.iter().map(phi).collect();
        let ids: Vec<usize> = (0..pts.len()).collect();
        CutElement::from_simplex(0, pts, &ids, &vals).unwrap()
    }

    /// A random nondegenerate simplex and a plane through it, as a cut element.
    pub(crate) fn random_cut<const D: usize>(rng: &mut ChaCha8Rng) -> CutElement<D> {
        loop {
            let pts: Vec<Point<D>> = (0..=D).map(|_| Point::<D>::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
            let h = simplex::diameter(&pts);
            if simplex::signed_volume(&pts).abs() < 1e-3 * h.powi(D as i32) {
                continue;
            }
            let n = Point::<D>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let bc: Vec<f64> = (0..=D).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = bc.iter().sum();
            let x0: Point<D> = pts.iter().zip(&bc).map(|(p, b)| p * (b / s)).sum();
            let vals: Vec<f64> = pts.iter().map(|p| n.dot(&(p - x0))).collect();
            let ids: Vec<usize> = (0..=D).collect();
            if let Ok(c) = CutElement::from_simplex(0, &pts, &ids, &vals) {
                if c.vol_plus.min(c.vol_minus) > 1e-10 * c.volume {
                    return c;
                }
            }
        }
    }

    #[test]
    fn cr_basis_face_averages() {
        let tri = [Vector2::zeros(), Vector2::x(), Vector2::y()];
        let l = cr_basis(&tri).unwrap();
        let g = ElementGeometry::Uncut { element: 0, vertices: tri.iter().copied().collect(), values: Default::default(), side: Side::Plus };
        for i in 0..3 {
            for j in 0..3 {
                let v = dof_functional(&g, j, |_, x| l[i].eval(x));
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = Vector2::new(rng.gen(), rng.gen());
            assert!((l.iter().map(|f| f.eval(&x)).sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn cr_gradient_is_n_over_height() {
        let t = ref_tet();
        let l = cr_basis(&t).unwrap();
        // face z = 0 is opposite vertex 3 at distance 1; outward normal is -z
        assert!((l[3].gradient - Vector3::new(0.0, 0.0, -3.0)).norm() < 1e-14);
        // independent check: solve for the affine function with the required face centroid values
        let faces: Vec<Vector3<f64>> = (0..4)
            .map(|i| simplex::centroid(&t.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect::<Vec<_>>()))
            .collect();
        let a = nalgebra::Matrix4::from_fn(|r, c| if c < 3 { faces[r][c] } else { 1.0 });
        let rhs = nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0);
        let sol = a.lu().solve(&rhs).unwrap();
        assert!((Vector3::new(sol[0], sol[1], sol[2]) - l[3].gradient).norm() < 1e-13);
    }

    #[test]
    fn cr_interpolation_of_x_squared() {
        let tri = [Vector2::zeros(), Vector2::x(), Vector2::y()];
        let g = ElementGeometry::Uncut { element: 0, vertices: tri.iter().copied().collect(), values: Default::default(), side: Side::Plus };
        let p = cr_interpolate(&g, |_, x| x.x * x.x).unwrap();
        // edge averages of x²: edge x+y=1 → 1/3, edge x=0 → 0, edge y=0 → 1/3
        let mids = [Vector2::new(0.5, 0.5), Vector2::new(0.0, 0.5), Vector2::new(0.5, 0.0)];
        let want = [1.0 / 3.0, 0.0, 1.0 / 3.0];
        for (m, w) in mids.iter().zip(want) {
            assert!((p.eval(m) - w).abs() < 1e-14);
        }
        let pp = cr_interpolate(&g, |_, x| p.eval(x)).unwrap();
        for v in &tri {
            assert!((pp.eval(v) - p.eval(v)).abs() < 1e-13);
        }
        let aff = cr_interpolate(&g, |_, x| 2.0 - x.x + 3.0 * x.y).unwrap();
        for v in &tri {
            assert!((aff.eval(v) - (2.0 - v.x + 3.0 * v.y)).abs() < 1e-13);
        }
    }

    #[test]
    fn weight_function_examples() {
        let c = cut_of(&ref_tet(), |x| x.x - 0.25);
        let w = weight_w(&c);
        assert!((w.eval(&Vector3::x()) - 0.75).abs() < 1e-15);
        for q in &c.interface_polygon {
            assert!(w.plus.eval(q).abs() < 1e-15 && w.minus.eval(q).abs() < 1e-15);
        }
        assert!((w.gradient_jump().dot(&c.normal) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_kappa_on_reference_cut() {
        let c = cut_of(&ref_tet(), |x| x.x - 0.25);
        assert!((gauss_kappa(&c).unwrap() - 0.421875).abs() < 1e-14);
        // whole element on the plus side in the limit
        let c = cut_of(&ref_tet(), |x| x.x + x.y + x.z - 1e-9);
        assert!((gauss_kappa(&c).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gauss_kappa_matches_volumes_randomly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let c = random_cut::<3>(&mut rng);
            assert!((gauss_kappa(&c).unwrap() - c.kappa()).abs() < 1e-12);
            let c = random_cut::<2>(&mut rng);
            assert!((gauss_kappa(&c).unwrap() - c.kappa()).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_coefficients_give_cr() {
        let c = cut_of(&ref_tet(), |x| x.x + 0.5 * x.y - 0.3);
        let b = ife_basis_scalar(&c, 2.5, 2.5).unwrap();
        let l = cr_basis(&c.vertices).unwrap();
        for (phi, lam) in b.basis.iter().zip(&l) {
            assert!((phi.plus.gradient - lam.gradient).norm() < 1e-14);
            assert!((phi.minus.gradient - lam.gradient).norm() < 1e-14);
        }
        let t = ife_basis_tensor(&c, Matrix3::identity(), Matrix3::identity()).unwrap();
        for (phi, lam) in t.basis.iter().zip(&l) {
            assert!((phi.plus.gradient - lam.gradient).norm() < 1e-14);
        }
    }

    #[test]
    fn scalar_formula_by_substitution() {
        // ratio 2, half the volume on the plus side
        let tri = [Vector2::new(0.0, 0.0), Vector2::new(2.0, 0.0), Vector2::new(0.0, 2.0)];
        let c = cut_of(&tri, |x| x.y - 2.0 + 2f64.sqrt());
        assert!((c.kappa() - 0.5).abs() < 1e-14);
        let b = ife_basis_scalar(&c, 1.0, 2.0).unwrap();
        let l = cr_basis(&c.vertices).unwrap();
        let pw = pi_w(&c).unwrap();
        for (phi, lam) in b.basis.iter().zip(&l) {
            let coef = lam.gradient.dot(&c.normal) / 1.5;
            let want = lam.gradient + (c.normal - pw.gradient) * coef;
            assert!((phi.plus.gradient - want).norm() < 1e-13);
        }
    }

    #[test]
    fn nonpositive_coefficient_rejected() {
        let c = cut_of(&ref_tet(), |x| x.x - 0.25);
        assert!(matches!(ife_basis_scalar(&c, 0.0, 1.0), Err(Error::InvalidArgument(_))));
        let bad = Matrix3::new(1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(ife_basis_tensor(&c, bad, Matrix3::identity()), Err(Error::InvalidArgument(_))));
    }

    fn check_unisolvence<const D: usize>(c: &CutElement<D>, b: &IfeBasisSet<D>) {
        let coef = b.coefficient.unwrap();
        for (i, phi) in b.basis.iter().enumerate() {
            for j in 0..=D {
                let v = dof_functional(c, j, |s, x| phi.eval_side(s, x));
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10, "N_{j}(phi_{i}) = {v}");
            }
            for q in &c.interface_polygon {
                assert!(phi.value_jump(q).abs() < 1e-10);
            }
            let scale = coef.apply(Side::Plus, &phi.plus.gradient).norm().max(1.0);
            assert!(phi.flux_jump(&coef, &c.normal).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn random_scalar_unisolvence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let contrast = 10f64.powf(rng.gen_range(-3.0..3.0));
            let c = random_cut::<3>(&mut rng);
            check_unisolvence(&c, &ife_basis_scalar(&c, 1.0, contrast).unwrap());
            let c = random_cut::<2>(&mut rng);
            check_unisolvence(&c, &ife_basis_scalar(&c, contrast, 1.0).unwrap());
        }
    }

    #[test]
    fn diagonal_tensor_matches_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let c = random_cut::<3>(&mut rng);
            let (bp, bm) = (rng.gen_range(0.01..10.0), rng.gen_range(0.01..10.0));
            let s = ife_basis_scalar(&c, bp, bm).unwrap();
            let t = ife_basis_tensor(&c, Matrix3::identity() * bp, Matrix3::identity() * bm).unwrap();
            for (a, b) in s.basis.iter().zip(&t.basis) {
                assert!((a.plus.gradient - b.plus.gradient).norm() < 1e-13 * a.plus.gradient.norm().max(1.0));
                assert!((a.minus.gradient - b.minus.gradient).norm() < 1e-13 * a.minus.gradient.norm().max(1.0));
            }
        }
    }

    #[test]
    fn aux_function_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let c = random_cut::<3>(&mut rng);
            let b = ife_basis_scalar(&c, rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0)).unwrap();
            let coef = b.coefficient.unwrap();
            let aux = aux_functions(&c, &b).unwrap();
            let jumps = |f: &PiecewiseAffine<3>| {
                let g = f.gradient_jump();
                (f.value_jump(&c.ref_point), f.flux_jump(&coef, &c.normal), [g.dot(&c.tangents[0]), g.dot(&c.tangents[1])])
            };
            let all = [(&aux.psi, (1.0, 0.0, [0.0, 0.0])), (&aux.upsilon, (0.0, 1.0, [0.0, 0.0])), (&aux.theta[0], (0.0, 0.0, [1.0, 0.0])), (&aux.theta[1], (0.0, 0.0, [0.0, 1.0]))];
            for (f, want) in all {
                let got = jumps(f);
                assert!((got.0 - want.0).abs() < 1e-11);
                assert!((got.1 - want.1).abs() < 1e-11);
                assert!((got.2[0] - want.2[0]).abs() < 1e-11 && (got.2[1] - want.2[1]).abs() < 1e-11);
                for j in 0..4 {
                    assert!(dof_functional(&c, j, |s, x| f.eval_side(s, x)).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn defect_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (bp, bm) = (2.0, 1.0);
        let r0 = std::f64::consts::PI / 6.28;
        let up = move |x: &Vector3<f64>| x.norm().powi(3) / bp + (1.0 / bm - 1.0 / bp) * r0.powi(3);
        let um = move |x: &Vector3<f64>| x.norm().powi(3) / bm;
        for _ in 0..20 {
            let c = random_cut::<3>(&mut rng);
            let b = ife_basis_scalar(&c, bp, bm).unwrap();
            let aux = aux_functions(&c, &b).unwrap();
            let d = decompose_defect(&c, &b, up, um).unwrap();
            let bk = bk_interpolant(&c, up, um).unwrap();
            let ife = ife_interpolate(&c, &b, |s, x| if s == Side::Plus { up(x) } else { um(x) });
            let mut rhs = aux.psi.scaled(d.a).plus_fn(&aux.upsilon.scaled(d.b));
            for (ci, th) in d.c.iter().zip(&aux.theta) {
                rhs = rhs.plus_fn(&th.scaled(*ci));
            }
            rhs = rhs.plus_fn(&b.combine(&d.g));
            let lhs = bk.plus_fn(&ife.scaled(-1.0));
            for _ in 0..20 {
                let bc: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>());
                let s: f64 = bc.iter().sum();
                let x: Vector3<f64> = c.vertices.iter().zip(bc).map(|(p, b)| p * (b / s)).sum();
                for side in [Side::Plus, Side::Minus] {
                    let l = lhs.eval_side(side, &x);
                    let r = rhs.eval_side(side, &x);
                    assert!((l - r).abs() < 1e-10 * l.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn defect_vanishes_on_ife_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let c = random_cut::<3>(&mut rng);
        let b = ife_basis_scalar(&c, 3.0, 0.5).unwrap();
        let v = b.combine(&[0.3, -1.0, 2.0, 0.7]);
        let d = decompose_defect(&c, &b, |x| v.plus.eval(x), |x| v.minus.eval(x)).unwrap();
        assert!(d.a.abs() < 1e-10 && d.b.abs() < 1e-10);
        assert!(d.c.iter().chain(&d.g).all(|x| x.abs() < 1e-10));
    }
}
