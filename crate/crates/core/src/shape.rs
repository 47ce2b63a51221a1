//! Landmark shapes and the pixel-to-normalized coordinate mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower and upper bound of normalized landmark coordinates.
pub const COORD_MIN: f64 = -0.5;
pub const COORD_MAX: f64 = 0.5;

/// An ordered list of `k` 2D landmark points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shape<T> {
    pub points: Vec<[T; 2]>,
}

impl<T: Scalar> Shape<T> {
    pub fn new(points: Vec<[T; 2]>) -> Self {
        Self { points }
    }

    /// Builds a shape from an interleaved `x0, y0, x1, y1, ...` vector.
    pub fn from_flat(flat: &[T]) -> Result<Self> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "flat shape vector has odd length {}",
                flat.len()
            )));
        }
        Ok(Self {
            points: flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p[0].is_finite() && p[1].is_finite())
    }

    /// True when every coordinate lies in the normalized range `[-0.5, 0.5]`.
    pub fn in_normalized_range(&self) -> bool {
        let (lo, hi) = (T::lit(COORD_MIN), T::lit(COORD_MAX));
        self.points
            .iter()
            .all(|p| p.iter().all(|&c| c >= lo && c <= hi))
    }

    pub fn clamp_to_range(&mut self) {
        let (lo, hi) = (T::lit(COORD_MIN), T::lit(COORD_MAX));
        for p in &mut self.points {
            for c in p.iter_mut() {
                *c = c.max(lo).min(hi);
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> Shape<U> {
        Shape {
            points: self
                .points
                .iter()
                .map(|p| [U::lit(p[0].as_f64()), U::lit(p[1].as_f64())])
                .collect(),
        }
    }
}

/// Axis-aligned face box in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x_min: T,
    pub y_min: T,
    pub width: T,
    pub height: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x_min: T, y_min: T, width: T, height: T) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            width,
            height,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.x_min, self.y_min, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::NonFinite("bounding box".into()));
        }
        if self.width <= T::zero() || self.height <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "degenerate bounding box: width {} height {}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> [T; 2] {
        let half = T::lit(0.5);
        [
            self.x_min + half * self.width,
            self.y_min + half * self.height,
        ]
    }
}

/// Maps pixel coordinates into the zero-centered normalized frame of `bbox`.
///
/// Each axis is shifted by the box center and divided by the box extent, so the box
/// itself covers `[-0.5, 0.5]²`. Points outside the box are clamped to that range.
pub fn normalize_shape<T: Scalar>(raw: &Shape<T>, bbox: &BoundingBox<T>) -> Result<Shape<T>> {
    bbox.validate()?;
    if !raw.is_finite() {
        return Err(Error::NonFinite("raw landmark coordinates".into()));
    }
    let c = bbox.center();
    let extent = [bbox.width, bbox.height];
    let mut out = Shape {
        points: raw
            .points
            .iter()
            .map(|p| [(p[0] - c[0]) / extent[0], (p[1] - c[1]) / extent[1]])
            .collect(),
    };
    out.clamp_to_range();
    Ok(out)
}

/// Coordinate-wise arithmetic mean of a set of shapes.
pub fn mean_shape<T: Scalar>(shapes: &[Shape<T>]) -> Result<Shape<T>> {
    let first = shapes.first().ok_or(Error::Empty("shape list"))?;
    let k = first.len();
    let mut acc = vec![[T::zero(); 2]; k];
    for s in shapes {
        crate::error::check_len("mean_shape landmark count", k, s.len())?;
        for (a, p) in acc.iter_mut().zip(&s.points) {
            a[0] += p[0];
            a[1] += p[1];
        }
    }
    let n = T::from_count(shapes.len());
    for a in &mut acc {
        a[0] /= n;
        a[1] /= n;
    }
    Ok(Shape { points: acc })
}

pub(crate) fn check_uniform<T: Scalar>(shapes: &[Shape<T>], context: &'static str) -> Result<usize> {
    let k = shapes.first().ok_or(Error::Empty(context))?.len();
    for s in shapes {
        crate::error::check_len(context, k, s.len())?;
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> BoundingBox<f64> {
        BoundingBox::new(0.0, 0.0, 100.0, 100.0).unwrap()
    }

    #[test]
    fn box_center_maps_to_origin() {
        let s = Shape::new(vec![[50.0, 50.0]]);
        let n = normalize_shape(&s, &unit_box()).unwrap();
        assert_eq!(n.points[0], [0.0, 0.0]);
    }

    #[test]
    fn top_left_corner_maps_to_lower_bound() {
        let s = Shape::new(vec![[0.0, 0.0]]);
        let n = normalize_shape(&s, &unit_box()).unwrap();
        assert_eq!(n.points[0], [-0.5, -0.5]);
    }

    #[test]
    fn interior_point_affine_map() {
        let s = Shape::new(vec![[75.0, 25.0]]);
        let n = normalize_shape(&s, &unit_box()).unwrap();
        assert!((n.points[0][0] - 0.25).abs() < 1e-15);
        assert!((n.points[0][1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn outside_points_are_clamped() {
        let s = Shape::new(vec![[-40.0, 260.0]]);
        let n = normalize_shape(&s, &unit_box()).unwrap();
        assert_eq!(n.points[0], [-0.5, 0.5]);
    }

    #[test]
    fn rejects_degenerate_box_and_nan() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 10.0).is_err());
        let bad = BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            width: 10.0,
            height: -1.0,
        };
        let s = Shape::new(vec![[1.0, 1.0]]);
        assert!(normalize_shape(&s, &bad).is_err());
        let nan = Shape::new(vec![[f64::NAN, 1.0]]);
        assert!(matches!(
            normalize_shape(&nan, &unit_box()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn mean_of_identical_shapes() {
        let s = Shape::new(vec![[0.1, -0.2], [0.3, 0.4]]);
        assert_eq!(mean_shape(&[s.clone(), s.clone()]).unwrap(), s);
    }

    #[test]
    fn mean_is_symmetric_midpoint() {
        let a = Shape::new(vec![[0.1, 0.0]]);
        let b = Shape::new(vec![[-0.1, 0.0]]);
        assert_eq!(mean_shape(&[a, b]).unwrap().points[0], [0.0, 0.0]);
    }

    #[test]
    fn mean_hand_arithmetic() {
        let a: Shape<f64> = Shape::new(vec![[-0.1, 0.0], [0.1, 0.0]]);
        let b = Shape::new(vec![[-0.3, 0.0], [0.3, 0.0]]);
        let m = mean_shape(&[a, b]).unwrap();
        assert!((m.points[0][0] + 0.2).abs() < 1e-15);
        assert!((m.points[1][0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mean_errors() {
        assert!(matches!(mean_shape::<f64>(&[]), Err(Error::Empty(_))));
        let a = Shape::new(vec![[0.0, 0.0]]);
        let b = Shape::new(vec![[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(
            mean_shape(&[a, b]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn flat_round_trip() {
        let s = Shape::new(vec![[1.0f32, 2.0], [3.0, 4.0]]);
        assert_eq!(Shape::from_flat(&s.to_flat()).unwrap(), s);
        assert!(Shape::<f32>::from_flat(&[1.0, 2.0, 3.0]).is_err());
    }
}
