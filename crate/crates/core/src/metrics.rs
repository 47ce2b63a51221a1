//! Landmark evaluation: per-image normalized error, NME, failure rate, CED and AUC.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::shape::Shape;

pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.1;
pub const DEFAULT_CED_SAMPLES: usize = 1000;

/// Landmarks whose distance normalizes the per-image error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPair {
    /// Distance between two landmarks (e.g. outer eye corners).
    Points(usize, usize),
    /// Distance between the midpoints of two landmark pairs (e.g. pupil centers
    /// approximated from eye corners).
    Midpoints([usize; 2], [usize; 2]),
}

impl NormPair {
    /// Outer-eye-corner pair for known annotation schemes; for other landmark counts,
    /// the first landmark and the one halfway round.
    pub fn default_for(k: usize) -> Self {
        match k {
            68 => NormPair::Points(36, 45),
            98 => NormPair::Points(60, 72),
            29 => NormPair::Points(8, 9),
            _ => NormPair::Points(0, k / 2),
        }
    }

    fn indices(&self) -> Vec<usize> {
        match *self {
            NormPair::Points(a, b) => vec![a, b],
            NormPair::Midpoints(l, r) => vec![l[0], l[1], r[0], r[1]],
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        for i in self.indices() {
            if i >= k {
                return Err(Error::InvalidArgument(format!(
                    "normalization index {i} out of range for {k} landmarks"
                )));
            }
        }
        let distinct = match *self {
            NormPair::Points(a, b) => a != b,
            NormPair::Midpoints(l, r) => {
                let (mut l, mut r) = (l, r);
                l.sort_unstable();
                r.sort_unstable();
                l != r
            }
        };
        if !distinct {
            return Err(Error::InvalidArgument(
                "normalization pair must reference distinct landmarks".into(),
            ));
        }
        Ok(())
    }

    pub fn distance<T: Scalar>(&self, shape: &Shape<T>) -> Result<T> {
        self.validate(shape.len())?;
        let p = &shape.points;
        let half = T::lit(0.5);
        let (a, b) = match *self {
            NormPair::Points(i, j) => (p[i], p[j]),
            NormPair::Midpoints(l, r) => (
                [half * (p[l[0]][0] + p[l[1]][0]), half * (p[l[0]][1] + p[l[1]][1])],
                [half * (p[r[0]][0] + p[r[1]][0]), half * (p[r[0]][1] + p[r[1]][1])],
            ),
        };
        Ok(euclid(a, b))
    }
}

fn euclid<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean point-to-point distance divided by the ground-truth normalizing distance.
pub fn per_image_error<T: Scalar>(pred: &Shape<T>, gt: &Shape<T>, norm: NormPair) -> Result<T> {
    check_len("per_image_error landmark count", gt.len(), pred.len())?;
    if gt.is_empty() {
        return Err(Error::Empty("landmark list"));
    }
    let d = norm.distance(gt)?;
    if !(d > T::zero()) {
        return Err(Error::InvalidArgument(
            "normalizing distance is zero for this ground truth".into(),
        ));
    }
    let total: T = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(&p, &g)| euclid(p, g))
        .sum();
    Ok(total / T::from_count(gt.len()) / d)
}

/// Per-image normalized errors: non-negative and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorList {
    values: Vec<f64>,
}

impl ErrorList {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "per-image errors must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn non_empty(&self) -> Result<&[f64]> {
        if self.values.is_empty() {
            return Err(Error::Empty("error list"));
        }
        Ok(&self.values)
    }
}

/// Mean error in percent.
pub fn nme(errors: &ErrorList) -> Result<f64> {
    let v = errors.non_empty()?;
    Ok(100.0 * v.iter().sum::<f64>() / v.len() as f64)
}

#[inline]
fn is_failure(error: f64, threshold: f64) -> bool {
    error > threshold
}

/// Percentage of images whose error is strictly above `threshold`.
pub fn failure_rate(errors: &ErrorList, threshold: f64) -> Result<f64> {
    let v = errors.non_empty()?;
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "failure threshold must be positive, got {threshold}"
        )));
    }
    let failed = v.iter().filter(|&&e| is_failure(e, threshold)).count();
    Ok(100.0 * failed as f64 / v.len() as f64)
}

/// Cumulative error distribution sampled at uniformly spaced thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CedCurve {
    /// `(threshold, fraction of errors ≤ threshold)`, thresholds ascending from 0.
    pub points: Vec<(f64, f64)>,
}

impl CedCurve {
    pub fn max_threshold(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidArgument("CED curve needs at least two points".into()));
        }
        if self.points[0].0 != 0.0 {
            return Err(Error::InvalidArgument("CED curve must start at threshold 0".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidArgument("CED thresholds must increase".into()));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::InvalidArgument("CED fractions must be non-decreasing".into()));
            }
        }
        if self.points.iter().any(|p| !(0.0..=1.0).contains(&p.1)) {
            return Err(Error::InvalidArgument("CED fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

pub fn ced_curve(errors: &ErrorList, max_threshold: f64, samples: usize) -> Result<CedCurve> {
    let v = errors.non_empty()?;
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("CED needs at least 2 samples, got {samples}")));
    }
    if !(max_threshold > 0.0) || !max_threshold.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "CED max threshold must be positive, got {max_threshold}"
        )));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let last = (samples - 1) as f64;
    let points = (0..samples)
        .map(|i| {
            let threshold = max_threshold * i as f64 / last;
            let count = sorted.partition_point(|&e| !is_failure(e, threshold));
            (threshold, count as f64 / n)
        })
        .collect();
    Ok(CedCurve { points })
}

/// Trapezoidal area under the CED, normalized by its threshold range.
pub fn auc(ced: &CedCurve) -> Result<f64> {
    ced.validate()?;
    let area: f64 = ced
        .points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(area / ced.max_threshold())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nme_percent: f64,
    pub fr_percent: f64,
    pub auc: f64,
    pub ced: Vec<(f64, f64)>,
    pub n_images: usize,
}

impl EvalReport {
    pub fn from_errors(errors: &ErrorList) -> Result<Self> {
        Self::with_settings(errors, DEFAULT_FAILURE_THRESHOLD, DEFAULT_CED_SAMPLES)
    }

    /// The CED spans `[0, failure_threshold]`.
    pub fn with_settings(errors: &ErrorList, failure_threshold: f64, samples: usize) -> Result<Self> {
        let ced = ced_curve(errors, failure_threshold, samples)?;
        Ok(Self {
            nme_percent: nme(errors)?,
            fr_percent: failure_rate(errors, failure_threshold)?,
            auc: auc(&ced)?,
            ced: ced.points,
            n_images: errors.len(),
        })
    }

    pub fn ced_curve(&self) -> CedCurve {
        CedCurve {
            points: self.ced.clone(),
        }
    }
}
