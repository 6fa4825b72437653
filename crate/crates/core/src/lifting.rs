//! Local lifting of face jumps into the piecewise-constant gradient spaces of
//! the two elements sharing an interface face.

use arrayvec::ArrayVec;
use nalgebra::{DMatrix, DVector, SMatrix};

use crate::cutgeom::{ElementGeometry, SignedPolygon, Side};
use crate::error::{Error, Result};
use crate::ife_local::ElementCoefficient;
use crate::problems::{Coefficient, Sided};
use crate::quadrature;
use crate::simplex::Point;

/// Spanning vectors of `∇S_h(T)`; each vector is given per side.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSpaceBasis<const D: usize> {
    pub element: usize,
    pub vectors: ArrayVec<Sided<Point<D>>, 3>,
}

fn axis<const D: usize>(i: usize) -> Point<D> {
    Point::<D>::from_fn(|r, _| if r == i { 1.0 } else { 0.0 })
}

/// Basis of the gradients of local shape functions.
///
/// Interface elements use `η` (`β_T^∓ n_h` on the `±` side) and the tangents;
/// for tensors the tangent fields pick up the normal correction that keeps the
/// flux continuous. Uncut elements use the coordinate axes.
pub fn grad_space_basis<const D: usize>(geom: &ElementGeometry<D>, coefficient: Option<&ElementCoefficient<D>>) -> Result<GradSpaceBasis<D>> {
    let element = geom.element();
    let cut = match (geom, coefficient) {
        (ElementGeometry::Uncut { .. }, _) => {
            let vectors = (0..D).map(|i| Sided::new(axis(i), axis(i))).collect();
            return Ok(GradSpaceBasis { element, vectors });
        }
        (ElementGeometry::Cut(c), Some(_)) => c,
        (ElementGeometry::Cut(_), None) => {
            return Err(Error::InvalidArgument("interface element needs a coefficient".into()));
        }
    };
    let coefficient = coefficient.expect("checked above");
    let n = cut.normal;
    let mut vectors = ArrayVec::new();
    match coefficient {
        ElementCoefficient::Scalar { plus, minus } => {
            vectors.push(Sided::new(n * *minus, n * *plus));
            for t in &cut.tangents {
                vectors.push(Sided::new(*t, *t));
            }
        }
        ElementCoefficient::Tensor { plus, minus } => {
            let npn = (plus * n).dot(&n);
            let nmn = (minus * n).dot(&n);
            vectors.push(Sided::new(n * nmn, n * npn));
            for t in &cut.tangents {
                let b = ((plus - minus) * t).dot(&n) / nmn;
                vectors.push(Sided::new(*t, t + n * b));
            }
        }
    }
    Ok(GradSpaceBasis { element, vectors })
}

/// A face quadrature point with the side of the face piece it lies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePoint<const D: usize> {
    pub x: Point<D>,
    pub weight: f64,
    pub side: Side,
}

pub fn face_points<const D: usize>(pieces: &[SignedPolygon<D>], degree: usize) -> Vec<FacePoint<D>> {
    let mut out = Vec::new();
    for piece in pieces {
        quadrature::visit_polygon(&piece.vertices, degree, |x, weight| out.push(FacePoint { x, weight, side: piece.side }));
    }
    out
}

/// Side whose branch of a local function is used at a point of the given face piece.
pub fn effective_side<const D: usize>(geom: &ElementGeometry<D>, piece: Side) -> Side {
    match geom {
        ElementGeometry::Uncut { side, .. } => *side,
        ElementGeometry::Cut(_) => piece,
    }
}

/// `M_kl = Σ_s q_k^sᵀ (∫_{T^s} β^BK) q_l^s`, with the side integrals given as matrices.
pub fn local_mass<const D: usize>(basis: &GradSpaceBasis<D>, moments: &Sided<SMatrix<f64, D, D>>) -> DMatrix<f64> {
    let k = basis.vectors.len();
    DMatrix::from_fn(k, k, |a, b| {
        [Side::Plus, Side::Minus]
            .iter()
            .map(|&s| basis.vectors[a].get(s).dot(&(moments.get(s) * basis.vectors[b].get(s))))
            .sum()
    })
}

/// One element's half of a face lifting: the mass matrix factor and the right-hand-side rows.
#[derive(Debug, Clone)]
pub struct LiftingSide<'a, const D: usize> {
    pub geometry: &'a ElementGeometry<D>,
    pub grad_space: &'a GradSpaceBasis<D>,
    pub moments: &'a Sided<SMatrix<f64, D, D>>,
}

/// `r_F(v)` as coefficient vectors in the two elements' gradient bases.
///
/// Solves `∫ β^BK r·q = ∫_F {β^BK q·n_F} v` for all `q` in the two gradient
/// spaces; the system splits into one small SPD solve per element.
pub fn lift<const D: usize>(
    sides: [&LiftingSide<'_, D>; 2],
    points: &[FacePoint<D>],
    normal: &Point<D>,
    coefficient: &Coefficient<D>,
    jump: impl Fn(&FacePoint<D>) -> f64,
) -> Result<[DVector<f64>; 2]> {
    let mut out: [DVector<f64>; 2] = [DVector::zeros(0), DVector::zeros(0)];
    for (t, side) in sides.iter().enumerate() {
        let rhs = lifting_rhs(side, points, normal, coefficient, |p| vec![jump(p)]);
        let mass = local_mass(side.grad_space, side.moments);
        let chol = mass
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure(format!("singular lifting mass on element {}", side.geometry.element())))?;
        out[t] = chol.solve(&rhs.column(0).into_owned());
    }
    Ok(out)
}

/// `R_{m,k} = ½ ∫_F (β^BK q_m)·n_F v_k` for several jump functions `v_k` at once.
pub fn lifting_rhs<const D: usize>(
    side: &LiftingSide<'_, D>,
    points: &[FacePoint<D>],
    normal: &Point<D>,
    coefficient: &Coefficient<D>,
    jumps: impl Fn(&FacePoint<D>) -> Vec<f64>,
) -> DMatrix<f64> {
    let nq = side.grad_space.vectors.len();
    let mut rhs: Option<DMatrix<f64>> = None;
    for p in points {
        let v = jumps(p);
        let r = rhs.get_or_insert_with(|| DMatrix::zeros(nq, v.len()));
        let s = effective_side(side.geometry, p.side);
        let b = coefficient.matrix(p.side, &p.x);
        for m in 0..nq {
            let flux = 0.5 * p.weight * (b * side.grad_space.vectors[m].get(s)).dot(normal);
            for (k, vk) in v.iter().enumerate() {
                r[(m, k)] += flux * vk;
            }
        }
    }
    rhs.unwrap_or_else(|| DMatrix::zeros(nq, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutgeom::CutElement;
    use crate::ife_local::{ife_basis_scalar, ife_basis_tensor};
    use crate::quadrature::visit_simplex;
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cut(rng: &mut ChaCha8Rng) -> CutElement<3> {
        loop {
            let pts: Vec<Vector3<f64>> = (0..4).map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
            if crate::simplex::signed_volume(&pts).abs() < 1e-2 {
                continue;
            }
            let n = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let x0 = crate::simplex::centroid(&pts) + Vector3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
            let vals: Vec<f64> = pts.iter().map(|p| n.dot(&(p - x0))).collect();
            if let Ok(c) = CutElement::from_simplex(0, &pts, &[0, 1, 2, 3], &vals) {
                if c.vol_plus.min(c.vol_minus) > 1e-6 * c.volume {
                    return c;
                }
            }
        }
    }

    /// Least-squares residual of fitting `g` (per side) in the span of the basis vectors.
    fn span_residual(basis: &GradSpaceBasis<3>, g: Sided<Vector3<f64>>) -> f64 {
        let k = basis.vectors.len();
        let a = DMatrix::from_fn(6, k, |r, c| {
            let v = if r < 3 { basis.vectors[c].plus } else { basis.vectors[c].minus };
            v[r % 3]
        });
        let b = DVector::from_fn(6, |r, _| if r < 3 { g.plus[r] } else { g.minus[r - 3] });
        let x = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        (a * x - &b).norm() / b.norm().max(1.0)
    }

    #[test]
    fn uncut_basis_is_axes() {
        let geom = ElementGeometry::<3>::Uncut {
            element: 0,
            vertices: [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()].into_iter().collect(),
            values: Default::default(),
            side: Side::Plus,
        };
        let b = grad_space_basis(&geom, None).unwrap();
        assert_eq!(b.vectors.len(), 3);
        assert_eq!(b.vectors[1].plus, Vector3::y());
    }

    #[test]
    fn ife_gradients_lie_in_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..200 {
            let cut = random_cut(&mut rng);
            let basis = if trial % 2 == 0 {
                ife_basis_scalar(&cut, rng.gen_range(0.001..1000.0), rng.gen_range(0.001..1000.0)).unwrap()
            } else {
                let m = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                ife_basis_tensor(&cut, m * m.transpose() + Matrix3::identity(), Matrix3::identity() * 2.0).unwrap()
            };
            let geom = ElementGeometry::Cut(Box::new(cut));
            let gs = grad_space_basis(&geom, basis.coefficient.as_ref()).unwrap();
            for phi in &basis.basis {
                let r = span_residual(&gs, Sided::new(phi.plus.gradient, phi.minus.gradient));
                assert!(r < 1e-11, "residual {r}");
            }
        }
    }

    fn uncut(vertices: [Vector3<f64>; 4], element: usize) -> ElementGeometry<3> {
        ElementGeometry::Uncut { element, vertices: vertices.into_iter().collect(), values: Default::default(), side: Side::Plus }
    }

    #[test]
    fn lifting_matches_dense_brute_force() {
        // two unit-coefficient tets sharing the face z = 0
        let f = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let t1 = uncut([f[0], f[1], f[2], Vector3::new(0.2, 0.2, -1.0)], 0);
        let t2 = uncut([f[0], f[1], f[2], Vector3::new(0.3, 0.1, 0.8)], 1);
        let coef = Coefficient::<3>::constant(1.0, 1.0);
        let moments = |g: &ElementGeometry<3>| {
            let v = crate::simplex::signed_volume(g.vertices()).abs();
            Sided::new(Matrix3::identity() * v, Matrix3::zeros())
        };
        let (m1, m2) = (moments(&t1), moments(&t2));
        let (g1, g2) = (grad_space_basis(&t1, None).unwrap(), grad_space_basis(&t2, None).unwrap());
        let s1 = LiftingSide { geometry: &t1, grad_space: &g1, moments: &m1 };
        let s2 = LiftingSide { geometry: &t2, grad_space: &g2, moments: &m2 };
        let pts = face_points(&[SignedPolygon { side: Side::Plus, vertices: f.to_vec() }], 2);
        let n = Vector3::z();
        let r = lift([&s1, &s2], &pts, &n, &coef, |_| 1.0).unwrap();

        // dense 6x6 system over the monomial basis {e_i on T1} ∪ {e_i on T2}
        let mut a = DMatrix::<f64>::zeros(6, 6);
        let mut b = DVector::<f64>::zeros(6);
        for (t, geom) in [&t1, &t2].iter().enumerate() {
            let mut vol = 0.0;
            visit_simplex(geom.vertices(), 2, |_, w| vol += w);
            for i in 0..3 {
                a[(3 * t + i, 3 * t + i)] = vol;
                b[3 * t + i] = 0.5 * n[i] * 0.5;
            }
        }
        let x = a.lu().solve(&b).unwrap();
        for i in 0..3 {
            assert!((r[0][i] - x[i]).abs() < 1e-13);
            assert!((r[1][i] - x[3 + i]).abs() < 1e-13);
        }
        let zero = lift([&s1, &s2], &pts, &n, &coef, |_| 0.0).unwrap();
        assert!(zero[0].norm() == 0.0 && zero[1].norm() == 0.0);
    }
}
