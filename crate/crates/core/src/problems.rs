//! Problem data: interface, coefficients, right-hand side and (optionally) the exact solution.
//!
//! The built-in registry holds the benchmark problems driven by the CLI and
//! the acceptance suite. Custom problems are assembled through the same types.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{SMatrix, Vector3};

use crate::cutgeom::{LevelSet, Side};
use crate::error::{Error, Result};
use crate::ife_local::{check_spd, ElementCoefficient};
use crate::mesh::BoxDomain;
use crate::simplex::Point;

pub type ScalarField<const D: usize> = Arc<dyn Fn(&Point<D>) -> f64 + Send + Sync>;
pub type VectorField<const D: usize> = Arc<dyn Fn(&Point<D>) -> Point<D> + Send + Sync>;

pub fn scalar_field<const D: usize>(f: impl Fn(&Point<D>) -> f64 + Send + Sync + 'static) -> ScalarField<D> {
    Arc::new(f)
}

pub fn vector_field<const D: usize>(f: impl Fn(&Point<D>) -> Point<D> + Send + Sync + 'static) -> VectorField<D> {
    Arc::new(f)
}

/// A pair of values indexed by [`Side`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sided<T> {
    pub plus: T,
    pub minus: T,
}

impl<T> Sided<T> {
    pub fn new(plus: T, minus: T) -> Self {
        Self { plus, minus }
    }

    pub fn get(&self, side: Side) -> &T {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

/// Diffusion coefficient: a positive scalar function per side or a constant SPD tensor per side.
#[derive(Clone)]
pub enum Coefficient<const D: usize> {
    Scalar(Sided<ScalarField<D>>),
    Tensor(Sided<SMatrix<f64, D, D>>),
}

impl<const D: usize> fmt::Debug for Coefficient<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Scalar(_) => f.write_str("Coefficient::Scalar"),
            Self::Tensor(t) => f.debug_tuple("Coefficient::Tensor").field(t).finish(),
        }
    }
}

impl<const D: usize> Coefficient<D> {
    pub fn constant(beta_plus: f64, beta_minus: f64) -> Self {
        Self::Scalar(Sided::new(scalar_field(move |_| beta_plus), scalar_field(move |_| beta_minus)))
    }

    pub fn tensor(plus: SMatrix<f64, D, D>, minus: SMatrix<f64, D, D>) -> Result<Self> {
        check_spd(&plus)?;
        check_spd(&minus)?;
        Ok(Self::Tensor(Sided::new(plus, minus)))
    }

    /// `β^s(x) I` or `B^s`.
    pub fn matrix(&self, side: Side, x: &Point<D>) -> SMatrix<f64, D, D> {
        match self {
            Self::Scalar(b) => SMatrix::<f64, D, D>::identity() * (b.get(side))(x),
            Self::Tensor(b) => *b.get(side),
        }
    }

    /// Element-constant coefficients frozen at `x`.
    pub fn freeze(&self, x: &Point<D>) -> Result<ElementCoefficient<D>> {
        match self {
            Self::Scalar(b) => ElementCoefficient::scalar((b.plus)(x), (b.minus)(x)),
            Self::Tensor(b) => ElementCoefficient::tensor(b.plus, b.minus),
        }
    }
}

/// Exact solution `u^±` with gradients.
#[derive(Clone)]
pub struct ExactSolution<const D: usize> {
    pub u: Sided<ScalarField<D>>,
    pub grad: Sided<VectorField<D>>,
}

impl<const D: usize> ExactSolution<D> {
    pub fn value(&self, side: Side, x: &Point<D>) -> f64 {
        (self.u.get(side))(x)
    }

    pub fn gradient(&self, side: Side, x: &Point<D>) -> Point<D> {
        (self.grad.get(side))(x)
    }
}

/// Everything needed to assemble and check one interface problem.
#[derive(Clone)]
pub struct ProblemSpec<const D: usize> {
    pub name: String,
    pub domain: BoxDomain<D>,
    pub levelset: LevelSet<D>,
    pub coefficient: Coefficient<D>,
    pub rhs: Sided<ScalarField<D>>,
    pub exact: Option<ExactSolution<D>>,
}

impl<const D: usize> fmt::Debug for ProblemSpec<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("coefficient", &self.coefficient)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl<const D: usize> ProblemSpec<D> {
    /// Checks coefficient positivity at the domain corners and centre.
    pub fn validate(&self) -> Result<()> {
        let lo = self.domain.lo;
        let hi = self.domain.hi;
        let mut samples = vec![(lo + hi) / 2.0];
        for mask in 0..1usize << D {
            samples.push(Point::<D>::from_fn(|i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }));
        }
        for x in &samples {
            self.coefficient.freeze(x)?;
        }
        Ok(())
    }
}

fn radius<const D: usize>(x: &Point<D>) -> f64 {
    x.norm()
}

/// Sphere of radius `π/6.28` with `u^± = r³/β^±` plus the constant making `u` continuous.
pub fn example1<const D: usize>(beta_plus: f64, beta_minus: f64) -> Result<ProblemSpec<D>> {
    positive_pair(beta_plus, beta_minus)?;
    let r0 = PI / 6.28;
    let shift = (1.0 / beta_minus - 1.0 / beta_plus) * r0.powi(3);
    // -Δ r³ = -3 (D + 1) r in D dimensions; β cancels
    let lap = 3.0 * (D as f64 + 1.0);
    let f = scalar_field(move |x: &Point<D>| -lap * radius(x));
    Ok(ProblemSpec {
        name: "example1".into(),
        domain: BoxDomain::cube(-1.0, 1.0),
        levelset: LevelSet::with_gradient(move |x: &Point<D>| radius(x) - r0, |x: &Point<D>| x.try_normalize(0.0).unwrap_or_else(Point::<D>::zeros)),
        coefficient: Coefficient::constant(beta_plus, beta_minus),
        rhs: Sided::new(f.clone(), f),
        exact: Some(ExactSolution {
            u: Sided::new(
                scalar_field(move |x| radius(x).powi(3) / beta_plus + shift),
                scalar_field(move |x| radius(x).powi(3) / beta_minus),
            ),
            grad: Sided::new(
                vector_field(move |x| x * (3.0 * radius(x) / beta_plus)),
                vector_field(move |x| x * (3.0 * radius(x) / beta_minus)),
            ),
        }),
    })
}

/// Which ellipsoid level set Example 2 uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Example2Shape {
    /// `x²/a² + y²/b² + z²/c² − 1`.
    #[default]
    Ellipsoid,
    /// `x²/a² + y²/b² + x²/c² − 1`, a cylinder-like surface independent of `z`.
    XOnly,
}

/// Ellipsoidal interface with `β^+ = sin(x+y+z) + 2`, `β^- = cos(x+y+z) + 2` and `u^± = φ/β^±`.
pub fn example2(shape: Example2Shape) -> ProblemSpec<3> {
    let (a, b, c) = (0.3f64, 0.5f64, 0.6f64);
    let (ka, kb, kc) = (1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c));
    let (kx, ky, kz) = match shape {
        Example2Shape::Ellipsoid => (ka, kb, kc),
        Example2Shape::XOnly => (ka + kc, kb, 0.0),
    };
    let phi = move |x: &Vector3<f64>| kx * x.x * x.x + ky * x.y * x.y + kz * x.z * x.z - 1.0;
    let grad_phi = move |x: &Vector3<f64>| Vector3::new(2.0 * kx * x.x, 2.0 * ky * x.y, 2.0 * kz * x.z);
    let lap_phi = 2.0 * (kx + ky + kz);
    let ones = Vector3::new(1.0, 1.0, 1.0);
    // (β, ∇β, Δβ) per side
    let beta = move |side: Side, x: &Vector3<f64>| {
        let s = x.sum();
        match side {
            Side::Plus => (s.sin() + 2.0, ones * s.cos(), -3.0 * s.sin()),
            Side::Minus => (s.cos() + 2.0, ones * -s.sin(), -3.0 * s.cos()),
        }
    };
    let u = move |side: Side| scalar_field(move |x: &Vector3<f64>| phi(x) / beta(side, x).0);
    let grad = move |side: Side| {
        vector_field(move |x: &Vector3<f64>| {
            let (bv, bg, _) = beta(side, x);
            grad_phi(x) / bv - bg * (phi(x) / (bv * bv))
        })
    };
    // -∇·(β ∇(φ/β)) = -Δφ + ∇φ·∇β/β + φΔβ/β − φ|∇β|²/β²
    let f = move |side: Side| {
        scalar_field(move |x: &Vector3<f64>| {
            let (bv, bg, bl) = beta(side, x);
            let p = phi(x);
            -lap_phi + grad_phi(x).dot(&bg) / bv + p * bl / bv - p * bg.norm_squared() / (bv * bv)
        })
    };
    ProblemSpec {
        name: "example2".into(),
        domain: BoxDomain::cube(-1.0, 1.0),
        levelset: LevelSet::with_gradient(phi, grad_phi),
        coefficient: Coefficient::Scalar(Sided::new(
            scalar_field(|x: &Vector3<f64>| x.sum().sin() + 2.0),
            scalar_field(|x: &Vector3<f64>| x.sum().cos() + 2.0),
        )),
        rhs: Sided::new(f(Side::Plus), f(Side::Minus)),
        exact: Some(ExactSolution { u: Sided::new(u(Side::Plus), u(Side::Minus)), grad: Sided::new(grad(Side::Plus), grad(Side::Minus)) }),
    }
}

fn e0<const D: usize>() -> Point<D> {
    Point::<D>::from_fn(|i, _| if i == 0 { 1.0 } else { 0.0 })
}

/// Plane `x = x0` with the piecewise-linear solution `u^- = x − x0`, `u^+ = (β^-/β^+)(x − x0)`.
pub fn example3<const D: usize>(x0: f64, beta_plus: f64, beta_minus: f64) -> Result<ProblemSpec<D>> {
    positive_pair(beta_plus, beta_minus)?;
    let ratio = beta_minus / beta_plus;
    let zero = scalar_field(|_: &Point<D>| 0.0);
    Ok(ProblemSpec {
        name: "example3".into(),
        domain: BoxDomain::cube(-1.0, 1.0),
        levelset: LevelSet::plane(e0::<D>() * x0, e0()),
        coefficient: Coefficient::constant(beta_plus, beta_minus),
        rhs: Sided::new(zero.clone(), zero),
        exact: Some(ExactSolution {
            u: Sided::new(scalar_field(move |x| ratio * (x[0] - x0)), scalar_field(move |x| x[0] - x0)),
            grad: Sided::new(vector_field(move |_| e0::<D>() * ratio), vector_field(|_| e0::<D>())),
        }),
    })
}

/// Plane `x = 0.3`, equal coefficients `β = 3` and a global affine solution.
pub fn patch<const D: usize>() -> ProblemSpec<D> {
    let g = Point::<D>::from_fn(|i, _| [0.5, -0.3, 0.2][i % 3]);
    let affine = scalar_field(move |x: &Point<D>| 1.0 + g.dot(x));
    let grad = vector_field(move |_: &Point<D>| g);
    let zero = scalar_field(|_: &Point<D>| 0.0);
    ProblemSpec {
        name: "patch".into(),
        domain: BoxDomain::cube(-1.0, 1.0),
        levelset: LevelSet::plane(e0::<D>() * 0.3, e0()),
        coefficient: Coefficient::constant(3.0, 3.0),
        rhs: Sided::new(zero.clone(), zero),
        exact: Some(ExactSolution { u: Sided::new(affine.clone(), affine), grad: Sided::new(grad.clone(), grad) }),
    }
}

/// Plane `x = 0` with constant SPD tensors and linear `u^±` satisfying both jump conditions.
///
/// `u^- = a⁻ · x` with `a⁻ = (1, 0.5, −0.25)`; `u^+` keeps the tangential part and
/// picks its normal slope so that `(B⁺ a⁺)_x = (B⁻ a⁻)_x`.
pub fn tensor_plane(b_plus: SMatrix<f64, 3, 3>, b_minus: SMatrix<f64, 3, 3>) -> Result<ProblemSpec<3>> {
    let coefficient = Coefficient::tensor(b_plus, b_minus)?;
    let a_minus = Vector3::new(1.0, 0.5, -0.25);
    let flux = (b_minus * a_minus).x;
    let ax = (flux - b_plus[(0, 1)] * a_minus.y - b_plus[(0, 2)] * a_minus.z) / b_plus[(0, 0)];
    let a_plus = Vector3::new(ax, a_minus.y, a_minus.z);
    let zero = scalar_field(|_: &Vector3<f64>| 0.0);
    Ok(ProblemSpec {
        name: "tensor".into(),
        domain: BoxDomain::cube(-1.0, 1.0),
        levelset: LevelSet::plane(Vector3::zeros(), Vector3::x()),
        coefficient,
        rhs: Sided::new(zero.clone(), zero),
        exact: Some(ExactSolution {
            u: Sided::new(scalar_field(move |x| a_plus.dot(x)), scalar_field(move |x| a_minus.dot(x))),
            grad: Sided::new(vector_field(move |_| a_plus), vector_field(move |_| a_minus)),
        }),
    })
}

/// The tensor pair used by the exactness check: `diag(1,2,3) + 0.1·ones` and the identity.
pub fn default_tensors() -> (SMatrix<f64, 3, 3>, SMatrix<f64, 3, 3>) {
    let b_plus = SMatrix::<f64, 3, 3>::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)) + SMatrix::<f64, 3, 3>::from_element(0.1);
    (b_plus, SMatrix::identity())
}

fn positive_pair(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("coefficients must be positive, got {a} and {b}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central-difference approximation of `−∇·(β∇u)` with step `h`.
    fn fd_operator(beta: &ScalarField<3>, u: &ScalarField<3>, x: &Vector3<f64>, h: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let flux = |y: Vector3<f64>| beta(&y) * (u(&(y + e * 0.5)) - u(&(y - e * 0.5))) / h;
            total += (flux(x + e * 0.5) - flux(x - e * 0.5)) / h;
        }
        -total
    }

    #[test]
    fn example2_rhs_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for shape in [Example2Shape::Ellipsoid, Example2Shape::XOnly] {
            let p = example2(shape);
            let ex = p.exact.as_ref().unwrap();
            let Coefficient::Scalar(beta) = &p.coefficient else { unreachable!() };
            for _ in 0..1000 {
                let x = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                for side in [Side::Plus, Side::Minus] {
                    let fd = fd_operator(beta.get(side), ex.u.get(side), &x, 1e-3);
                    let f = (p.rhs.get(side))(&x);
                    assert!((f - fd).abs() < 1e-4 * f.abs().max(1.0), "f={f} fd={fd}");
                }
            }
        }
    }

    #[test]
    fn example2_jump_conditions_hold_on_interface() {
        let p = example2(Example2Shape::Ellipsoid);
        let ex = p.exact.unwrap();
        let Coefficient::Scalar(beta) = &p.coefficient else { unreachable!() };
        for t in 0..20 {
            let th = t as f64 * 0.3;
            let x = Vector3::new(0.3 * th.cos(), 0.5 * th.sin(), 0.0);
            assert!(p.levelset.value(&x).abs() < 1e-14);
            assert!((ex.value(Side::Plus, &x) - ex.value(Side::Minus, &x)).abs() < 1e-14);
            let n = p.levelset.gradient(&x).unwrap().normalize();
            let fp = (beta.plus)(&x) * ex.gradient(Side::Plus, &x).dot(&n);
            let fm = (beta.minus)(&x) * ex.gradient(Side::Minus, &x).dot(&n);
            assert!((fp - fm).abs() < 1e-12);
        }
    }

    #[test]
    fn example1_rhs_and_gradient_by_differences() {
        let p = example1::<3>(2.0, 1.0).unwrap();
        let ex = p.exact.unwrap();
        let x = Vector3::new(0.3, -0.4, 0.5);
        let h = 1e-4;
        for side in [Side::Plus, Side::Minus] {
            let u = ex.u.get(side);
            let g = ex.gradient(side, &x);
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = h;
                assert!(((u(&(x + e)) - u(&(x - e))) / (2.0 * h) - g[i]).abs() < 1e-7);
            }
            let beta = if side == Side::Plus { 2.0 } else { 1.0 };
            let b: ScalarField<3> = scalar_field(move |_| beta);
            assert!((fd_operator(&b, u, &x, 1e-3) - (p.rhs.get(side))(&x)).abs() < 1e-4);
        }
        let r0 = PI / 6.28;
        let on = Vector3::new(r0, 0.0, 0.0);
        assert!((ex.value(Side::Plus, &on) - ex.value(Side::Minus, &on)).abs() < 1e-15);
    }

    #[test]
    fn tensor_plane_satisfies_jumps() {
        let (bp, bm) = default_tensors();
        let p = tensor_plane(bp, bm).unwrap();
        let ex = p.exact.unwrap();
        let x = Vector3::new(0.0, 0.3, -0.7);
        assert!((ex.value(Side::Plus, &x) - ex.value(Side::Minus, &x)).abs() < 1e-15);
        let fp = (bp * ex.gradient(Side::Plus, &x)).x;
        let fm = (bm * ex.gradient(Side::Minus, &x)).x;
        assert!((fp - fm).abs() < 1e-15);
        assert!((ex.gradient(Side::Plus, &x).x - 0.975 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn invalid_coefficients_rejected() {
        assert!(example1::<3>(-1.0, 1.0).is_err());
        let bad = SMatrix::<f64, 3, 3>::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert!(tensor_plane(bad, SMatrix::identity()).is_err());
        assert!(example2(Example2Shape::Ellipsoid).validate().is_ok());
    }
}
