//! Small geometric kernels on simplices embedded in `D`-space.

use arrayvec::ArrayVec;
use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};

/// A point (or vector) in `D`-dimensional space.
pub type Point<const D: usize> = SVector<f64, D>;

/// Up to four points; enough for any simplex in 3D.
pub type Vertices<const D: usize> = ArrayVec<Point<D>, 4>;

fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

/// Measure of a `k`-simplex given by `k + 1` points in `D`-space (length, area or volume).
///
/// Triangles embedded in higher dimensions use the wedge-product minors, which
/// stay accurate for slivers; other embedded simplices use the Gram determinant.
pub fn simplex_measure<const D: usize>(points: &[Point<D>]) -> f64 {
    let k = points.len().saturating_sub(1);
    if k == D {
        return signed_volume(points).abs();
    }
    match k {
        0 => 1.0,
        1 => (points[1] - points[0]).norm(),
        2 => {
            let a = points[1] - points[0];
            let b = points[2] - points[0];
            let mut w = 0.0;
            for i in 0..D {
                for j in i + 1..D {
                    w += (a[i] * b[j] - a[j] * b[i]).powi(2);
                }
            }
            0.5 * w.sqrt()
        }
        _ => {
            let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    gram[(i, j)] = (points[i + 1] - points[0]).dot(&(points[j + 1] - points[0]));
                }
            }
            gram.determinant().max(0.0).sqrt() / factorial(k)
        }
    }
}

/// Signed volume of a full-dimensional simplex (`D + 1` points).
pub fn signed_volume<const D: usize>(points: &[Point<D>]) -> f64 {
    debug_assert_eq!(points.len(), D + 1);
    determinant(&edge_matrix(points)) / factorial(D)
}

/// Determinant of a small square matrix (`D <= 3` by cofactors, LU otherwise).
pub fn determinant<const D: usize>(m: &SMatrix<f64, D, D>) -> f64 {
    match D {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => nalgebra::DMatrix::from_column_slice(D, D, m.as_slice()).determinant(),
    }
}

/// Columns are `p_k - p_0`, `k = 1..=D`.
pub fn edge_matrix<const D: usize>(points: &[Point<D>]) -> SMatrix<f64, D, D> {
    SMatrix::<f64, D, D>::from_fn(|r, c| points[c + 1][r] - points[0][r])
}

/// Largest pairwise vertex distance.
pub fn diameter<const D: usize>(points: &[Point<D>]) -> f64 {
    let mut h: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            h = h.max((points[i] - points[j]).norm());
        }
    }
    h
}

pub fn centroid<const D: usize>(points: &[Point<D>]) -> Point<D> {
    let mut c = Point::<D>::zeros();
    for p in points {
        c += p;
    }
    c / points.len() as f64
}

/// Gradients of the barycentric coordinates of a full-dimensional simplex.
pub fn barycentric_gradients<const D: usize>(points: &[Point<D>]) -> Result<ArrayVec<Point<D>, 4>> {
    let jac = edge_matrix(points);
    let inv = jac
        .try_inverse()
        .ok_or_else(|| Error::DegenerateGeometry("singular simplex Jacobian".into()))?;
    let mut grads = ArrayVec::new();
    let mut first = Point::<D>::zeros();
    for k in 0..D {
        let g: Point<D> = inv.row(k).transpose();
        first -= g;
        grads.push(g);
    }
    grads.insert(0, first);
    Ok(grads)
}

/// Barycentric coordinates of `x` with respect to a full-dimensional simplex.
pub fn barycentric<const D: usize>(points: &[Point<D>], x: &Point<D>) -> Option<ArrayVec<f64, 4>> {
    let inv = edge_matrix(points).try_inverse()?;
    let rest = inv * (x - points[0]);
    let mut out = ArrayVec::new();
    out.push(1.0 - rest.sum());
    out.extend(rest.iter().copied());
    Some(out)
}

/// A unit vector orthogonal to the `D - 1` given in-plane directions.
///
/// Returns `None` if the directions are (numerically) dependent.
pub fn hyperplane_normal<const D: usize>(dirs: &[Point<D>]) -> Option<Point<D>> {
    let n = match D {
        1 => Point::<D>::from_element(1.0),
        2 => Point::<D>::from_fn(|i, _| if i == 0 { -dirs[0][1] } else { dirs[0][0] }),
        3 => {
            let (a, b) = (dirs[0], dirs[1]);
            Point::<D>::from_fn(|i, _| {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                a[j] * b[k] - a[k] * b[j]
            })
        }
        _ => return None,
    };
    let len = n.norm();
    let scale = dirs.iter().map(|d| d.norm()).product::<f64>().max(f64::MIN_POSITIVE);
    if len <= 1e-14 * scale {
        None
    } else {
        Some(n / len)
    }
}

/// Orthonormal basis of the complement of unit vector `n`, grown by Gram–Schmidt from
/// `candidates` first and the coordinate axes after.
pub fn orthonormal_complement<const D: usize>(n: &Point<D>, candidates: &[Point<D>]) -> Vec<Point<D>> {
    let mut basis: Vec<Point<D>> = Vec::with_capacity(D.saturating_sub(1));
    let axes = (0..D).map(|i| Point::<D>::from_fn(|r, _| if r == i { 1.0 } else { 0.0 }));
    for c in candidates.iter().copied().chain(axes) {
        if basis.len() + 1 == D {
            break;
        }
        let scale = c.norm();
        if scale == 0.0 {
            continue;
        }
        let mut v = c - n * n.dot(&c);
        for b in &basis {
            v -= b * b.dot(&v);
        }
        if v.norm() > 1e-8 * scale {
            basis.push(v.normalize());
        }
    }
    basis
}
