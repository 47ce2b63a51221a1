//! Similarity (Procrustes) alignment of landmark shapes.
//!
//! Shapes are points in the plane, so a similarity transform is multiplication by a
//! complex number `a + ib` (rotation and scale) plus a translation.

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::shape::Shape;

const MAX_ITERATIONS: usize = 100;
const CONVERGENCE: f64 = 1e-12;

/// `p ↦ R (p − from) + to` with `R = [[a, −b], [b, a]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity<T> {
    a: T,
    b: T,
    from: [T; 2],
    to: [T; 2],
}

impl<T: Scalar> Similarity<T> {
    pub fn apply(&self, shape: &Shape<T>) -> Shape<T> {
        let (a, b) = (self.a, self.b);
        Shape::new(
            shape
                .points
                .iter()
                .map(|p| {
                    let (x, y) = (p[0] - self.from[0], p[1] - self.from[1]);
                    [a * x - b * y + self.to[0], b * x + a * y + self.to[1]]
                })
                .collect(),
        )
    }

    pub fn inverse(&self) -> Self {
        let norm = self.a * self.a + self.b * self.b;
        Self {
            a: self.a / norm,
            b: -self.b / norm,
            from: self.to,
            to: self.from,
        }
    }

    /// Uniform scale factor of the transform.
    pub fn scale(&self) -> T {
        (self.a * self.a + self.b * self.b).sqrt()
    }
}

fn centroid<T: Scalar>(shape: &Shape<T>) -> [T; 2] {
    let n = T::from_count(shape.len());
    let (sx, sy) = shape
        .points
        .iter()
        .fold((T::zero(), T::zero()), |(x, y), p| (x + p[0], y + p[1]));
    [sx / n, sy / n]
}

/// Least-squares similarity transform taking `shape` onto `reference`.
pub fn fit_similarity<T: Scalar>(shape: &Shape<T>, reference: &Shape<T>) -> Result<Similarity<T>> {
    check_len("procrustes landmark count", reference.len(), shape.len())?;
    let (cs, cr) = (centroid(shape), centroid(reference));
    let (mut sxx, mut c, mut d) = (T::zero(), T::zero(), T::zero());
    for (p, q) in shape.points.iter().zip(&reference.points) {
        let (x, y) = (p[0] - cs[0], p[1] - cs[1]);
        let (u, v) = (q[0] - cr[0], q[1] - cr[1]);
        sxx += x * x + y * y;
        c += x * u + y * v;
        d += x * v - y * u;
    }
    if sxx <= T::zero() {
        return Err(Error::InvalidArgument(
            "cannot align a shape whose points all coincide".into(),
        ));
    }
    let s = Similarity {
        a: c / sxx,
        b: d / sxx,
        from: cs,
        to: cr,
    };
    if s.scale() <= T::zero() {
        return Err(Error::InvalidArgument(
            "procrustes alignment collapsed the shape to a point".into(),
        ));
    }
    Ok(s)
}

/// Centers `shape` at the origin and scales it to unit Frobenius norm.
fn normalize<T: Scalar>(shape: &Shape<T>) -> Result<Shape<T>> {
    let c = centroid(shape);
    let centered: Vec<[T; 2]> = shape.points.iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect();
    let norm = centered
        .iter()
        .map(|p| p[0] * p[0] + p[1] * p[1])
        .sum::<T>()
        .sqrt();
    if norm <= T::zero() {
        return Err(Error::InvalidArgument(
            "cannot align a shape whose points all coincide".into(),
        ));
    }
    Ok(Shape::new(centered.iter().map(|p| [p[0] / norm, p[1] / norm]).collect()))
}

/// Generalized Procrustes analysis: aligns every shape to an iteratively refined
/// unit-norm, origin-centred mean. Returns the aligned shapes.
pub fn generalized_procrustes<T: Scalar>(shapes: &[Shape<T>]) -> Result<Vec<Shape<T>>> {
    let first = shapes.first().ok_or(Error::Empty("procrustes shape set"))?;
    let mut reference = normalize(first)?;
    let mut aligned = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        aligned = shapes
            .iter()
            .map(|s| Ok(fit_similarity(s, &reference)?.apply(s)))
            .collect::<Result<Vec<_>>>()?;
        let next = normalize(&crate::shape::mean_shape(&aligned)?)?;
        // keep the reference's orientation fixed so the iteration cannot drift
        let next = fit_similarity(&next, &reference)?.apply(&next);
        let next = normalize(&next)?;
        let change = next
            .points
            .iter()
            .zip(&reference.points)
            .map(|(p, q)| (p[0] - q[0]).abs().max((p[1] - q[1]).abs()))
            .fold(T::zero(), T::max);
        reference = next;
        if change <= T::lit(CONVERGENCE) {
            break;
        }
    }
    Ok(aligned)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Shape<f64> {
        Shape::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    }

    fn close(a: &Shape<f64>, b: &Shape<f64>, tol: f64) -> bool {
        a.to_flat().iter().zip(b.to_flat()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn recovers_a_known_similarity() {
        let (angle, scale) = (0.7_f64, 2.5);
        let (s, c) = angle.sin_cos();
        let moved = Shape::new(
            square()
                .points
                .iter()
                .map(|p| [scale * (c * p[0] - s * p[1]) + 3.0, scale * (s * p[0] + c * p[1]) - 1.0])
                .collect(),
        );
        let t = fit_similarity(&moved, &square()).unwrap();
        assert!(close(&t.apply(&moved), &square(), 1e-12));
        assert!((t.scale() - 1.0 / scale).abs() < 1e-12);
        assert!(close(&t.inverse().apply(&square()), &moved, 1e-12));
    }

    #[test]
    fn coincident_points_are_rejected() {
        let dot = Shape::new(vec![[0.2, 0.2]; 3]);
        assert!(fit_similarity(&dot, &square()).is_err());
    }

    #[test]
    fn generalized_alignment_removes_pose() {
        let base = square();
        let shapes: Vec<Shape<f64>> = (0..5)
            .map(|i| {
                let t = Similarity {
                    a: 1.0 + 0.1 * i as f64,
                    b: 0.2 * i as f64,
                    from: [0.0, 0.0],
                    to: [i as f64, -(i as f64)],
                };
                t.apply(&base)
            })
            .collect();
        let aligned = generalized_procrustes(&shapes).unwrap();
        for s in &aligned[1..] {
            assert!(close(s, &aligned[0], 1e-9));
        }
    }
}
