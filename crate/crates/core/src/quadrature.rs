//! Fixed-order quadrature on simplices, planar polygons and cut sub-regions.
//!
//! All shipped rules have positive weights. Reference rules are stored in
//! barycentric coordinates with weights normalized to sum to one, then mapped
//! affinely and scaled by the measure of the physical simplex.

use crate::cutgeom::{CutElement, Side};
use crate::error::{Error, Result};
use crate::simplex::{self, Point};

/// Quadrature points in physical coordinates with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<Point<D>>,
    pub weights: Vec<f64>,
}

impl<const D: usize> QuadratureRule<D> {
    pub fn integrate(&self, mut f: impl FnMut(&Point<D>) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn push_simplex(&mut self, vertices: &[Point<D>], degree: usize) {
        visit_simplex(vertices, degree, |x, w| {
            self.points.push(x);
            self.weights.push(w);
        });
    }
}

// (barycentric coordinates, normalized weight)
type RefRule = &'static [(&'static [f64], f64)];

const SEG_1: RefRule = &[(&[0.5, 0.5], 1.0)];
const G2: f64 = 0.211_324_865_405_187_1; // (1 - 1/sqrt 3) / 2
const SEG_3: RefRule = &[(&[1.0 - G2, G2], 0.5), (&[G2, 1.0 - G2], 0.5)];
const G3: f64 = 0.112_701_665_379_258_31; // (1 - sqrt(3/5)) / 2
const SEG_5: RefRule = &[
    (&[1.0 - G3, G3], 5.0 / 18.0),
    (&[0.5, 0.5], 8.0 / 18.0),
    (&[G3, 1.0 - G3], 5.0 / 18.0),
];

const THIRD: f64 = 1.0 / 3.0;
const TRI_1: RefRule = &[(&[THIRD, THIRD, THIRD], 1.0)];
const TRI_2: RefRule = &[
    (&[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], THIRD),
    (&[1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], THIRD),
    (&[1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], THIRD),
];
const TA: f64 = 0.445_948_490_915_964_886_32;
const TB: f64 = 0.091_576_213_509_770_743_46;
const TWA: f64 = 0.223_381_589_678_011_465_70;
const TWB: f64 = 0.109_951_743_655_321_867_64;
// degree 4, six points
const TRI_4: RefRule = &[
    (&[1.0 - 2.0 * TA, TA, TA], TWA),
    (&[TA, 1.0 - 2.0 * TA, TA], TWA),
    (&[TA, TA, 1.0 - 2.0 * TA], TWA),
    (&[1.0 - 2.0 * TB, TB, TB], TWB),
    (&[TB, 1.0 - 2.0 * TB, TB], TWB),
    (&[TB, TB, 1.0 - 2.0 * TB], TWB),
];

const TET_1: RefRule = &[(&[0.25, 0.25, 0.25, 0.25], 1.0)];
const QA: f64 = 0.138_196_601_125_010_5;
const QB: f64 = 0.585_410_196_624_968_5;
const TET_2: RefRule = &[
    (&[QB, QA, QA, QA], 0.25),
    (&[QA, QB, QA, QA], 0.25),
    (&[QA, QA, QB, QA], 0.25),
    (&[QA, QA, QA, QB], 0.25),
];
const K1: f64 = 0.310_885_919_263_300_609_80;
const K2: f64 = 0.092_735_250_310_891_226_40;
const K3: f64 = 0.045_503_704_125_649_649_49;
const KW1: f64 = 0.112_687_925_718_015_850_80;
const KW2: f64 = 0.073_493_043_116_361_949_55;
const KW3: f64 = 0.042_546_020_777_081_466_44;
const K1C: f64 = 1.0 - 3.0 * K1;
const K2C: f64 = 1.0 - 3.0 * K2;
const K3C: f64 = 0.5 - K3;
// degree 5, fourteen points
const TET_5: RefRule = &[
    (&[K1C, K1, K1, K1], KW1),
    (&[K1, K1C, K1, K1], KW1),
    (&[K1, K1, K1C, K1], KW1),
    (&[K1, K1, K1, K1C], KW1),
    (&[K2C, K2, K2, K2], KW2),
    (&[K2, K2C, K2, K2], KW2),
    (&[K2, K2, K2C, K2], KW2),
    (&[K2, K2, K2, K2C], KW2),
    (&[K3, K3, K3C, K3C], KW3),
    (&[K3, K3C, K3, K3C], KW3),
    (&[K3, K3C, K3C, K3], KW3),
    (&[K3C, K3, K3, K3C], KW3),
    (&[K3C, K3, K3C, K3], KW3),
    (&[K3C, K3C, K3, K3], KW3),
];

fn reference_rule(k: usize, degree: usize) -> RefRule {
    match (k, degree) {
        (1, 0 | 1) => SEG_1,
        (1, 2 | 3) => SEG_3,
        (1, _) => SEG_5,
        (2, 0 | 1) => TRI_1,
        (2, 2) => TRI_2,
        (2, _) => TRI_4,
        (3, 0 | 1) => TET_1,
        (3, 2) => TET_2,
        (3, _) => TET_5,
        _ => TET_5,
    }
}

/// Calls `f(x, w)` for every point of the degree-`degree` rule on the simplex.
///
/// Zero-measure simplices produce zero weights rather than an error.
pub fn visit_simplex<const D: usize>(vertices: &[Point<D>], degree: usize, mut f: impl FnMut(Point<D>, f64)) {
    let k = vertices.len() - 1;
    let measure = simplex::simplex_measure(vertices);
    if k == 0 {
        f(vertices[0], 1.0);
        return;
    }
    for (bary, w) in reference_rule(k, degree) {
        let mut x = Point::<D>::zeros();
        for (b, v) in bary.iter().zip(vertices) {
            x += v * *b;
        }
        f(x, w * measure);
    }
}

fn check_degree(degree: usize) -> Result<()> {
    if (1..=4).contains(&degree) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("quadrature degree {degree} outside 1..=4")))
    }
}

/// Rule on a (sub-)simplex given by 2, 3 or 4 points, exact up to `degree`.
pub fn simplex_rule<const D: usize>(vertices: &[Point<D>], degree: usize) -> Result<QuadratureRule<D>> {
    check_degree(degree)?;
    if !(2..=4).contains(&vertices.len()) || vertices.len() > D + 1 {
        return Err(Error::InvalidArgument(format!("{} points do not form a supported simplex", vertices.len())));
    }
    let measure = simplex::simplex_measure(vertices);
    let h = simplex::diameter(vertices);
    if !(measure > 1e-14 * h.powi(vertices.len() as i32 - 1)) {
        return Err(Error::DegenerateGeometry(format!("simplex measure {measure:e}")));
    }
    let mut rule = QuadratureRule { points: Vec::new(), weights: Vec::new() };
    rule.push_simplex(vertices, degree);
    Ok(rule)
}

/// Rule on an ordered planar polygon (or a segment), by fan triangulation from vertex 0.
pub fn polygon_rule<const D: usize>(vertices: &[Point<D>], degree: usize) -> Result<QuadratureRule<D>> {
    check_degree(degree)?;
    let mut rule = QuadratureRule { points: Vec::new(), weights: Vec::new() };
    match vertices.len() {
        0 | 1 => return Err(Error::InvalidArgument("polygon needs at least two vertices".into())),
        2 => rule.push_simplex(vertices, degree),
        _ => {
            check_coplanar(vertices)?;
            visit_polygon(vertices, degree, |x, w| {
                rule.points.push(x);
                rule.weights.push(w);
            });
        }
    }
    Ok(rule)
}

/// Fan-triangulated traversal of a polygon (a segment when given two points).
pub fn visit_polygon<const D: usize>(vertices: &[Point<D>], degree: usize, mut f: impl FnMut(Point<D>, f64)) {
    if vertices.len() == 2 {
        visit_simplex(vertices, degree, f);
        return;
    }
    for k in 1..vertices.len() - 1 {
        visit_simplex(&[vertices[0], vertices[k], vertices[k + 1]], degree, &mut f);
    }
}

fn check_coplanar<const D: usize>(vertices: &[Point<D>]) -> Result<()> {
    if D < 3 {
        return Ok(());
    }
    let diam = simplex::diameter(vertices);
    // Newell normal is robust for nearly degenerate fans
    let mut n = Point::<D>::zeros();
    for i in 0..vertices.len() {
        let (a, b) = (vertices[i], vertices[(i + 1) % vertices.len()]);
        n[0] += (a[1] - b[1]) * (a[2] + b[2]);
        n[1] += (a[2] - b[2]) * (a[0] + b[0]);
        n[2] += (a[0] - b[0]) * (a[1] + b[1]);
    }
    let len = n.norm();
    if len == 0.0 {
        return Ok(());
    }
    let n = n / len;
    let c = simplex::centroid(vertices);
    for v in vertices {
        if n.dot(&(v - c)).abs() > 1e-10 * diam {
            return Err(Error::InvalidArgument("polygon vertices are not coplanar".into()));
        }
    }
    Ok(())
}

/// Integral of `f` over one side of a cut element.
pub fn integrate_cut<const D: usize>(cut: &CutElement<D>, side: Side, mut f: impl FnMut(&Point<D>) -> f64, degree: usize) -> f64 {
    let mut total = 0.0;
    for sub in cut.sub_simplices.iter().filter(|s| s.side == side) {
        visit_simplex(&sub.vertices, degree, |x, w| total += w * f(&x));
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector2, Vector3};
    use proptest::prelude::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Integral of prod b_i^a_i over a simplex of unit measure.
    fn bary_monomial(alpha: &[u32]) -> f64 {
        let k = alpha.len() as u32 - 1;
        alpha.iter().map(|&a| factorial(a)).product::<f64>() * factorial(k) / factorial(k + alpha.iter().sum::<u32>())
    }

    #[test]
    fn reference_rules_are_exact_on_barycentric_monomials() {
        for k in 1..=3usize {
            for degree in 1..=4usize {
                let rule = reference_rule(k, degree);
                let wsum: f64 = rule.iter().map(|r| r.1).sum();
                assert!((wsum - 1.0).abs() < 1e-14);
                assert!(rule.iter().all(|r| r.1 > 0.0));
                let mut alpha = vec![0u32; k + 1];
                loop {
                    if alpha.iter().sum::<u32>() as usize <= degree {
                        let q: f64 = rule
                            .iter()
                            .map(|(b, w)| w * alpha.iter().zip(b.iter()).map(|(&a, &x)| x.powi(a as i32)).product::<f64>())
                            .sum();
                        let exact = bary_monomial(&alpha);
                        assert!((q - exact).abs() < 1e-13 * exact, "k={k} deg={degree} alpha={alpha:?}");
                    }
                    let mut i = 0;
                    while i <= k {
                        alpha[i] += 1;
                        if alpha[i] as usize <= degree {
                            break;
                        }
                        alpha[i] = 0;
                        i += 1;
                    }
                    if i > k {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn reference_tet_integrals() {
        let tet = [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()];
        let r = simplex_rule(&tet, 1).unwrap();
        assert!((r.integrate(|_| 1.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((r.integrate(|x| x.x) - 1.0 / 24.0).abs() < 1e-15);
        let tri = [Vector2::zeros(), Vector2::x(), Vector2::y()];
        let r = simplex_rule(&tri, 2).unwrap();
        assert!((r.integrate(|x| x.x * x.x) - 1.0 / 12.0).abs() < 1e-15);
        assert!(simplex_rule(&tri, 5).is_err());
        assert!(simplex_rule(&[Vector2::zeros(), Vector2::x(), Vector2::new(2.0, 0.0)], 2).is_err());
    }

    #[test]
    fn polygon_examples() {
        let sq = [Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(1.0, 1.0), Vector2::new(0.0, 1.0)];
        assert!((polygon_rule(&sq, 2).unwrap().measure() - 1.0).abs() < 1e-15);
        let seg = [Vector2::new(0.0, 0.0), Vector2::new(2.0, 0.0)];
        assert!((polygon_rule(&seg, 1).unwrap().integrate(|x| x.x) - 2.0).abs() < 1e-15);
        let quad = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.5),
            Vector3::new(1.0, 1.0, 0.5),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let area = simplex::simplex_measure(&quad[..3]) + simplex::simplex_measure(&[quad[0], quad[2], quad[3]]);
        assert!((polygon_rule(&quad, 2).unwrap().measure() - area).abs() < 1e-15);
        let bent = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 0.3), Vector3::new(0.0, 1.0, 0.0)];
        assert!(polygon_rule(&bent, 2).is_err());
    }

    fn arb_tet() -> impl Strategy<Value = [Vector3<f64>; 4]> {
        proptest::array::uniform4(proptest::array::uniform3(-1.0f64..1.0))
            .prop_map(|p| p.map(|c| Vector3::new(c[0], c[1], c[2])))
            .prop_filter("non-degenerate", |t| simplex::signed_volume(t).abs() > 1e-3)
    }

    proptest! {
        // exactness against the affine-invariant moment formula for powers of barycentric coordinates
        #[test]
        fn degree4_exact_on_random_tets(t in arb_tet(), a in 0u32..3, b in 0u32..3) {
            let rule = simplex_rule(&t, 4).unwrap();
            let q = rule.integrate(|x| {
                let bc = simplex::barycentric(&t, x).unwrap();
                bc[0].powi(a as i32) * bc[3].powi(b as i32)
            });
            let exact = bary_monomial(&[a, 0, 0, b]) * simplex::signed_volume(&t).abs();
            prop_assert!((q - exact).abs() < 1e-12 * exact.abs().max(1e-300), "q={q} exact={exact} a={a} b={b}");
        }
    }
}
