//! Assistive loss (ALoss), the main piecewise L1/L2 loss, their combination into the
//! distillation loss, reference regression losses, and analytic gradients.
//!
//! All functions apply coordinate-wise: every landmark contributes one independent scalar
//! term per axis, and batch losses average over all `N · k · 2` scalar terms.
//!
//! For a single coordinate with ground truth `gt`, student prediction `pr` and teacher
//! prediction `te`, let `d_pr = |pr − gt|` and `d_te = |te − gt|`. The teacher point is
//! mirrored onto the student's side of `gt`, and `β` sits at fraction `σ` of the teacher
//! distance on that side. The weight `ω` is `1` once the student is farther out than the
//! teacher, `−0.5` between `β` and the teacher, and falls linearly from `−0.5` at `β` to
//! `0` at `gt` inside the low-influence band. The loss is `ω · |te′ − pr|`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::{sign, Scalar};

pub const DEFAULT_SIGMA: f64 = 0.4;
pub const DEFAULT_PHI: f64 = 2.0;
pub const DEFAULT_MAIN_THRESHOLD: f64 = 0.5;
pub const DEFAULT_C: f64 = 0.25;

/// Weight of the assistive loss in the negative-assistant region.
const NEGATIVE_WEIGHT: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig<T> {
    /// Low-influence fraction for the Tough-Teacher term.
    pub sigma_tough: T,
    /// Low-influence fraction for the Tolerant-Teacher term.
    pub sigma_tolerant: T,
    /// Weight of the main loss.
    pub phi: T,
    /// Offset of the quadratic branch of the main loss.
    pub c: T,
    /// Error at which the main loss switches from linear to quadratic.
    pub main_threshold: T,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            sigma_tough: T::lit(DEFAULT_SIGMA),
            sigma_tolerant: T::lit(DEFAULT_SIGMA),
            phi: T::lit(DEFAULT_PHI),
            c: T::lit(DEFAULT_C),
            main_threshold: T::lit(DEFAULT_MAIN_THRESHOLD),
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    /// Same σ for both teachers.
    pub fn with_sigma(sigma: T) -> Self {
        Self {
            sigma_tough: sigma,
            sigma_tolerant: sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_tough", self.sigma_tough),
            ("sigma_tolerant", self.sigma_tolerant),
        ] {
            if !(s > T::zero() && s < T::one()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0, 1), got {s}"
                )));
            }
        }
        if !(self.phi > T::zero()) || !self.phi.is_finite() {
            return Err(Error::InvalidArgument(format!("phi must be positive, got {}", self.phi)));
        }
        if !(self.main_threshold > T::zero()) || !self.main_threshold.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "main_threshold must be positive, got {}",
                self.main_threshold
            )));
        }
        let t2 = self.main_threshold * self.main_threshold;
        if (self.c - t2).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(4.0)) {
            return Err(Error::InvalidArgument(format!(
                "c must equal main_threshold² ({t2}) for a continuous main loss, got {}",
                self.c
            )));
        }
        Ok(())
    }
}

/// One coordinate of ground truth, student prediction and raw teacher prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarTriple<T> {
    pub gt: T,
    pub pr: T,
    pub te: T,
}

impl<T: Scalar> ScalarTriple<T> {
    pub fn new(gt: T, pr: T, te: T) -> Self {
        Self { gt, pr, te }
    }

    pub fn is_finite(&self) -> bool {
        self.gt.is_finite() && self.pr.is_finite() && self.te.is_finite()
    }

    /// All three coordinates lie in `[-0.5, 0.5]`.
    pub fn in_nominal_domain(&self) -> bool {
        let h = T::lit(0.5);
        [self.gt, self.pr, self.te].iter().all(|v| v.abs() <= h)
    }

    fn student_distance(&self) -> T {
        (self.pr - self.gt).abs()
    }

    fn teacher_distance(&self) -> T {
        (self.te - self.gt).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionTag {
    Positive,
    Negative,
    LowInfluence,
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionTag::Positive => "positive",
            RegionTag::Negative => "negative",
            RegionTag::LowInfluence => "low_influence",
        })
    }
}

/// Mirrors the teacher point onto the student's side of the ground truth.
pub fn adapt_teacher<T: Scalar>(t: ScalarTriple<T>) -> T {
    t.gt + sign(t.pr - t.gt) * t.teacher_distance()
}

/// Low-influence threshold `β = gt + σ · sign(pr − gt) · |te − gt|`.
pub fn beta<T: Scalar>(t: ScalarTriple<T>, sigma: T) -> T {
    t.gt + sigma * sign(t.pr - t.gt) * t.teacher_distance()
}

/// Region of `pr`. Ties go to the outer region: `d_pr = d_te` is positive and
/// `d_pr = σ·d_te` is negative.
pub fn classify_region<T: Scalar>(t: ScalarTriple<T>, sigma: T) -> RegionTag {
    let d_pr = t.student_distance();
    let d_te = t.teacher_distance();
    if d_pr >= d_te {
        RegionTag::Positive
    } else if d_pr >= sigma * d_te {
        RegionTag::Negative
    } else {
        RegionTag::LowInfluence
    }
}

/// Assistant weight `ω`.
pub fn assist_weight<T: Scalar>(t: ScalarTriple<T>, sigma: T) -> T {
    let d_pr = t.student_distance();
    if d_pr == T::zero() {
        return T::zero();
    }
    match classify_region(t, sigma) {
        RegionTag::Positive => T::one(),
        RegionTag::Negative => T::lit(NEGATIVE_WEIGHT),
        RegionTag::LowInfluence => {
            let d_beta = sigma * t.teacher_distance();
            // d_pr < d_beta here, so the band is non-empty.
            assert!(d_beta > T::zero(), "low-influence band has zero width");
            T::lit(NEGATIVE_WEIGHT) * d_pr / d_beta
        }
    }
}

/// Assistive loss `ω · |te′ − pr|` for one coordinate.
pub fn aloss_scalar<T: Scalar>(t: ScalarTriple<T>, sigma: T) -> T {
    if t.pr == t.gt {
        return T::zero();
    }
    assist_weight(t, sigma) * (adapt_teacher(t) - t.pr).abs()
}

/// `d ALoss / d pr` for one coordinate with the teacher held fixed.
///
/// At region boundaries the derivative from the side of larger `|pr − gt|` is returned;
/// at `pr = gt` the result is `0`.
pub fn aloss_scalar_grad<T: Scalar>(t: ScalarTriple<T>, sigma: T) -> T {
    let s = sign(t.pr - t.gt);
    if s == T::zero() {
        return T::zero();
    }
    let d_pr = t.student_distance();
    let d_te = t.teacher_distance();
    let slope = match classify_region(t, sigma) {
        // d_pr − d_te
        RegionTag::Positive => T::one(),
        // −0.5·(d_te − d_pr)
        RegionTag::Negative => -T::lit(NEGATIVE_WEIGHT),
        // −0.5·d_pr·(d_te − d_pr) / (σ·d_te)
        RegionTag::LowInfluence => {
            T::lit(NEGATIVE_WEIGHT) * (d_te - T::lit(2.0) * d_pr) / (sigma * d_te)
        }
    };
    s * slope
}

/// Main loss for one coordinate error `Δ ≥ 0`: `Δ` up to the threshold, `Δ² + c` beyond.
pub fn main_scalar<T: Scalar>(delta: T, config: &LossConfig<T>) -> T {
    if delta <= config.main_threshold {
        delta
    } else {
        delta * delta + config.c
    }
}

/// `d main / d pr` for one coordinate; the quadratic side is used at the threshold.
pub fn main_scalar_grad<T: Scalar>(gt: T, pr: T, config: &LossConfig<T>) -> T {
    let s = sign(pr - gt);
    let delta = (pr - gt).abs();
    if delta < config.main_threshold {
        s
    } else {
        T::lit(2.0) * delta * s
    }
}

fn check_finite<T: Scalar>(name: &str, values: &[T]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

/// Mean assistive loss over every scalar coordinate of a batch.
pub fn aloss_batch<T: Scalar>(gt: &[T], pr: &[T], te: &[T], sigma: T) -> Result<T> {
    check_len("aloss_batch prediction", gt.len(), pr.len())?;
    check_len("aloss_batch teacher", gt.len(), te.len())?;
    if gt.is_empty() {
        return Err(Error::Empty("aloss_batch"));
    }
    let total: T = gt
        .iter()
        .zip(pr)
        .zip(te)
        .map(|((&g, &p), &e)| aloss_scalar(ScalarTriple::new(g, p, e), sigma))
        .sum();
    Ok(total / T::from_count(gt.len()))
}

/// Mean main loss over every scalar coordinate of a batch.
pub fn loss_main<T: Scalar>(gt: &[T], pr: &[T], config: &LossConfig<T>) -> Result<T> {
    check_len("loss_main prediction", gt.len(), pr.len())?;
    if gt.is_empty() {
        return Err(Error::Empty("loss_main"));
    }
    let total: T = gt
        .iter()
        .zip(pr)
        .map(|(&g, &p)| main_scalar((p - g).abs(), config))
        .sum();
    Ok(total / T::from_count(gt.len()))
}

/// Which assistive terms enter the distillation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistTerms {
    #[default]
    Both,
    ToughOnly,
    TolerantOnly,
}

impl AssistTerms {
    fn weights<T: Scalar>(self) -> (T, T) {
        match self {
            AssistTerms::Both => (T::one(), T::one()),
            AssistTerms::ToughOnly => (T::one(), T::zero()),
            AssistTerms::TolerantOnly => (T::zero(), T::one()),
        }
    }
}

/// Ground truth, student predictions and both teachers' predictions for `n` samples of
/// `k` landmarks, each stored as `n · k · 2` interleaved coordinates.
#[derive(Debug, Clone, Copy)]
pub struct BatchTriples<'a, T> {
    pub n: usize,
    pub k: usize,
    pub gt: &'a [T],
    pub pr: &'a [T],
    pub te_tough: &'a [T],
    pub te_tolerant: &'a [T],
}

impl<'a, T: Scalar> BatchTriples<'a, T> {
    pub fn new(
        n: usize,
        k: usize,
        gt: &'a [T],
        pr: &'a [T],
        te_tough: &'a [T],
        te_tolerant: &'a [T],
    ) -> Result<Self> {
        let len = n * k * 2;
        if len == 0 {
            return Err(Error::Empty("batch"));
        }
        check_len("batch ground truth", len, gt.len())?;
        check_len("batch prediction", len, pr.len())?;
        check_len("batch tough teacher", len, te_tough.len())?;
        check_len("batch tolerant teacher", len, te_tolerant.len())?;
        Ok(Self {
            n,
            k,
            gt,
            pr,
            te_tough,
            te_tolerant,
        })
    }

    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    fn check_finite(&self) -> Result<()> {
        check_finite("ground truth", self.gt)?;
        check_finite("prediction", self.pr)?;
        check_finite("tough teacher prediction", self.te_tough)?;
        check_finite("tolerant teacher prediction", self.te_tolerant)
    }
}

/// `φ · main + ALoss_tough + ALoss_tolerant`.
pub fn kd_loss<T: Scalar>(batch: &BatchTriples<'_, T>, config: &LossConfig<T>) -> Result<T> {
    kd_loss_with_terms(batch, config, AssistTerms::Both)
}

pub fn kd_loss_with_terms<T: Scalar>(
    batch: &BatchTriples<'_, T>,
    config: &LossConfig<T>,
    terms: AssistTerms,
) -> Result<T> {
    Ok(kd_loss_and_grad(batch, config, terms)?.0)
}

/// Gradient of [`kd_loss`] with respect to every student coordinate.
pub fn kd_loss_grad<T: Scalar>(batch: &BatchTriples<'_, T>, config: &LossConfig<T>) -> Result<Vec<T>> {
    Ok(kd_loss_and_grad(batch, config, AssistTerms::Both)?.1)
}

/// Loss value and gradient in a single pass.
pub fn kd_loss_and_grad<T: Scalar>(
    batch: &BatchTriples<'_, T>,
    config: &LossConfig<T>,
    terms: AssistTerms,
) -> Result<(T, Vec<T>)> {
    config.validate()?;
    batch.check_finite()?;
    let (w_tough, w_tol) = terms.weights::<T>();
    let inv_n = T::one() / T::from_count(batch.len());
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (g, p) = (batch.gt[i], batch.pr[i]);
        let tough = ScalarTriple::new(g, p, batch.te_tough[i]);
        let tol = ScalarTriple::new(g, p, batch.te_tolerant[i]);
        total += config.phi * main_scalar((p - g).abs(), config)
            + w_tough * aloss_scalar(tough, config.sigma_tough)
            + w_tol * aloss_scalar(tol, config.sigma_tolerant);
        let d = config.phi * main_scalar_grad(g, p, config)
            + w_tough * aloss_scalar_grad(tough, config.sigma_tough)
            + w_tol * aloss_scalar_grad(tol, config.sigma_tolerant);
        grad.push(d * inv_n);
    }
    Ok((total * inv_n, grad))
}

/// Conventional regression losses used as baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceLoss {
    L2,
    L1,
    SmoothL1,
}

impl ReferenceLoss {
    pub const ALL: [ReferenceLoss; 3] = [ReferenceLoss::L2, ReferenceLoss::L1, ReferenceLoss::SmoothL1];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceLoss::L2 => "l2",
            ReferenceLoss::L1 => "l1",
            ReferenceLoss::SmoothL1 => "smooth_l1",
        }
    }

    fn scalar<T: Scalar>(self, gt: T, pr: T) -> (T, T) {
        let diff = pr - gt;
        let delta = diff.abs();
        match self {
            ReferenceLoss::L2 => (delta * delta, T::lit(2.0) * diff),
            ReferenceLoss::L1 => (delta, sign(diff)),
            ReferenceLoss::SmoothL1 => {
                if delta < T::one() {
                    (T::lit(0.5) * delta * delta, diff)
                } else {
                    (delta - T::lit(0.5), sign(diff))
                }
            }
        }
    }
}

impl fmt::Display for ReferenceLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReferenceLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "l2" => Ok(ReferenceLoss::L2),
            "l1" => Ok(ReferenceLoss::L1),
            "smooth_l1" | "smoothl1" => Ok(ReferenceLoss::SmoothL1),
            other => Err(Error::InvalidArgument(format!("unknown reference loss '{other}'"))),
        }
    }
}

/// Mean reference loss and its gradient with respect to `pr`.
pub fn reference_loss<T: Scalar>(kind: ReferenceLoss, gt: &[T], pr: &[T]) -> Result<(T, Vec<T>)> {
    check_len("reference_loss prediction", gt.len(), pr.len())?;
    if gt.is_empty() {
        return Err(Error::Empty("reference_loss"));
    }
    check_finite("ground truth", gt)?;
    check_finite("prediction", pr)?;
    let inv_n = T::one() / T::from_count(gt.len());
    let mut total = T::zero();
    let grad = gt
        .iter()
        .zip(pr)
        .map(|(&g, &p)| {
            let (v, d) = kind.scalar(g, p);
            total += v;
            d * inv_n
        })
        .collect();
    Ok((total * inv_n, grad))
}

/// One grid point of a one-coordinate loss sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow<T> {
    pub pr: T,
    /// Region of `pr` relative to the Tough teacher.
    pub region: RegionTag,
    /// Assistant weight relative to the Tough teacher.
    pub omega: T,
    /// Tough-teacher assistive loss.
    pub aloss: T,
    /// `φ·main + ALoss_tough + ALoss_tolerant` for this coordinate.
    pub kd_loss: T,
}

/// Evaluates the loss terms for `grid + 1` evenly spaced predictions in `[lo, hi]`.
///
/// Grid points are computed as `(lo·(grid − i) + hi·i) / grid`, so decimal grid values
/// such as `0.16` on `[−0.5, 0.5]` with `grid = 1000` are hit exactly.
pub fn loss_sweep<T: Scalar>(
    gt: T,
    te_tough: T,
    te_tolerant: T,
    config: &LossConfig<T>,
    lo: T,
    hi: T,
    grid: usize,
) -> Result<Vec<SweepRow<T>>> {
    config.validate()?;
    check_finite("loss sweep inputs", &[gt, te_tough, te_tolerant, lo, hi])?;
    if grid == 0 || !(lo < hi) {
        return Err(Error::InvalidArgument("loss sweep needs grid ≥ 1 and lo < hi".into()));
    }
    let n = T::from_count(grid);
    Ok((0..=grid)
        .map(|i| {
            let pr = (lo * T::from_count(grid - i) + hi * T::from_count(i)) / n;
            let tough = ScalarTriple::new(gt, pr, te_tough);
            let tolerant = ScalarTriple::new(gt, pr, te_tolerant);
            let aloss = aloss_scalar(tough, config.sigma_tough);
            SweepRow {
                pr,
                region: classify_region(tough, config.sigma_tough),
                omega: assist_weight(tough, config.sigma_tough),
                aloss,
                kd_loss: config.phi * main_scalar((pr - gt).abs(), config)
                    + aloss
                    + aloss_scalar(tolerant, config.sigma_tolerant),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: f64 = 0.4;

    fn t(gt: f64, pr: f64, te: f64) -> ScalarTriple<f64> {
        ScalarTriple::new(gt, pr, te)
    }

    /// Independent transcription of the piecewise definition, evaluated with explicit
    /// mirrored points rather than distances.
    fn oracle_aloss(gt: f64, pr: f64, te: f64, sigma: f64) -> f64 {
        if pr == gt {
            return 0.0;
        }
        let side = if pr > gt { 1.0 } else { -1.0 };
        let te_adapted = gt + side * (te - gt).abs();
        let b = gt + sigma * side * (te - gt).abs();
        let w = if (pr - gt).abs() >= (te - gt).abs() {
            1.0
        } else if (pr - gt).abs() >= (b - gt).abs() {
            -0.5
        } else {
            -0.5 * (pr - gt) / (b - gt)
        };
        w * (te_adapted - pr).abs()
    }

    #[test]
    fn adapt_teacher_examples() {
        assert!((adapt_teacher(t(0.0, 0.3, -0.4)) - 0.4).abs() < 1e-15);
        assert!((adapt_teacher(t(0.0, -0.3, 0.4)) + 0.4).abs() < 1e-15);
        assert_eq!(adapt_teacher(t(0.2, 0.2, 0.4)), 0.2);
    }

    #[test]
    fn beta_examples() {
        assert!((beta(t(0.0, 0.3, 0.4), S) - 0.16).abs() < 1e-15);
        assert_eq!(beta(t(0.1, 0.3, 0.1), S), 0.1);
        assert!((beta(t(0.1, -0.2, 0.5), S) + 0.06).abs() < 1e-15);
    }

    #[test]
    fn region_examples_and_ties() {
        assert_eq!(classify_region(t(0.0, 0.6, 0.4), S), RegionTag::Positive);
        assert_eq!(classify_region(t(0.0, 0.2, 0.4), S), RegionTag::Negative);
        assert_eq!(classify_region(t(0.0, 0.05, 0.4), S), RegionTag::LowInfluence);
        assert_eq!(classify_region(t(0.0, 0.4, 0.4), S), RegionTag::Positive);
        assert_eq!(classify_region(t(0.0, -0.4, 0.4), S), RegionTag::Positive);
        // 0.5 · 0.5 is exact, so the β boundary is hit exactly
        assert_eq!(classify_region(t(0.0, 0.25, 0.5), 0.5), RegionTag::Negative);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(assist_weight(t(0.0, 0.6, 0.4), S), 1.0);
        assert_eq!(assist_weight(t(0.0, 0.2, 0.4), S), -0.5);
        assert!((assist_weight(t(0.0, 0.08, 0.4), S) + 0.25).abs() < 1e-15);
        assert_eq!(assist_weight(t(0.0, 0.0, 0.4), S), 0.0);
        assert_eq!(assist_weight(t(0.1, 0.1, 0.1), S), 0.0);
    }

    #[test]
    fn aloss_examples() {
        let cases = [
            (0.6, 0.2),
            (0.2, -0.1),
            (0.16, -0.12),
            (0.0, 0.0),
            (-0.3, -0.05),
        ];
        for (pr, want) in cases {
            let got = aloss_scalar(t(0.0, pr, 0.4), S);
            assert!((got - want).abs() < 1e-12, "pr={pr}: {got} vs {want}");
            assert!((got - oracle_aloss(0.0, pr, 0.4, S)).abs() < 1e-15);
        }
    }

    #[test]
    fn aloss_batch_examples() {
        let gt = [0.0, 0.0];
        assert_eq!(aloss_batch(&gt, &gt, &[0.4, 0.4], S).unwrap(), 0.0);
        // single landmark, x at pr=0.6 and y at pr=0.2: mean(0.2, −0.1)
        let v = aloss_batch(&gt, &[0.6, 0.2], &[0.4, 0.4], S).unwrap();
        assert!((v - 0.05).abs() < 1e-12);
        // te = gt everywhere reduces to mean |gt − pr|
        let g = [0.1, -0.2, 0.3, 0.0];
        let p = [0.3, -0.1, -0.1, 0.0];
        let v = aloss_batch(&g, &p, &g, S).unwrap();
        assert!((v - (0.2 + 0.1 + 0.4 + 0.0) / 4.0).abs() < 1e-12);
        assert!(aloss_batch(&g, &p[..3], &g, S).is_err());
    }

    #[test]
    fn main_loss_examples() {
        let c = LossConfig::<f64>::default();
        assert_eq!(loss_main(&[0.0, 0.1], &[0.0, 0.1], &c).unwrap(), 0.0);
        assert_eq!(main_scalar(0.5, &c), 0.5);
        assert_eq!(0.5 * 0.5 + c.c, 0.5);
        assert!((main_scalar(0.8, &c) - 0.89).abs() < 1e-15);
        assert!(loss_main(&[0.0], &[0.0, 0.1], &c).is_err());
    }

    #[test]
    fn kd_loss_examples() {
        let c = LossConfig::<f64>::default();
        let gt = [0.0, 0.1];
        let b = BatchTriples::new(1, 1, &gt, &gt, &[0.4, -0.2], &[0.3, 0.3]).unwrap();
        assert_eq!(kd_loss(&b, &c).unwrap(), 0.0);

        let pr = [0.3, -0.05];
        let b = BatchTriples::new(1, 1, &gt, &pr, &gt, &gt).unwrap();
        let main = loss_main(&gt, &pr, &c).unwrap();
        let l1 = (0.3 + 0.15) / 2.0;
        assert!((kd_loss(&b, &c).unwrap() - (2.0 * main + 2.0 * l1)).abs() < 1e-12);
    }

    #[test]
    fn kd_loss_single_coordinate_composition() {
        // one landmark; y axis held at truth so it contributes 0, x carries the example
        let c = LossConfig::<f64>::default();
        let gt = [0.0, 0.0];
        let pr = [0.16, 0.0];
        let b = BatchTriples::new(1, 1, &gt, &pr, &[0.4, 0.0], &[0.2, 0.0]).unwrap();
        let per_coord = 2.0 * kd_loss(&b, &c).unwrap();
        assert!((per_coord - 0.18).abs() < 1e-12, "{per_coord}");
        assert!((aloss_scalar(t(0.0, 0.16, 0.2), S) + 0.02).abs() < 1e-12);
    }

    #[test]
    fn assist_terms_switch_off_teachers() {
        let c = LossConfig::<f64>::default();
        let gt = [0.0, 0.0];
        let pr = [0.2, 0.1];
        let tough = [0.4, 0.3];
        let tol = [0.1, -0.3];
        let b = BatchTriples::new(1, 1, &gt, &pr, &tough, &tol).unwrap();
        let main = c.phi * loss_main(&gt, &pr, &c).unwrap();
        let a_tough = aloss_batch(&gt, &pr, &tough, S).unwrap();
        let a_tol = aloss_batch(&gt, &pr, &tol, S).unwrap();
        let both = kd_loss_with_terms(&b, &c, AssistTerms::Both).unwrap();
        let tou = kd_loss_with_terms(&b, &c, AssistTerms::ToughOnly).unwrap();
        let tl = kd_loss_with_terms(&b, &c, AssistTerms::TolerantOnly).unwrap();
        assert!((both - (main + a_tough + a_tol)).abs() < 1e-14);
        assert!((tou - (main + a_tough)).abs() < 1e-14);
        assert!((tl - (main + a_tol)).abs() < 1e-14);
    }

    #[test]
    fn positive_region_gradient_example() {
        // gt=0, te=0.4, pr=0.6 with the main loss in its quadratic branch:
        // φ·2·0.6 = 2.4 from the main term, +1 from one assistive term
        let c = LossConfig::<f64>::default();
        let g = kd_loss_grad(
            &BatchTriples::new(1, 1, &[0.0, 0.0], &[0.6, 0.0], &[0.4, 0.0], &[0.0, 0.0]).unwrap(),
            &c,
        )
        .unwrap();
        // the tolerant teacher sits at gt, so its term is plain L1 with slope +1
        assert!((g[0] * 2.0 - (2.4 + 1.0 + 1.0)).abs() < 1e-12);
        assert!((aloss_scalar_grad(t(0.0, 0.6, 0.4), S) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_is_zero_at_truth() {
        let c = LossConfig::<f64>::default();
        let b = BatchTriples::new(1, 1, &[0.1, 0.2], &[0.1, 0.2], &[0.3, 0.0], &[-0.1, 0.4]).unwrap();
        assert_eq!(kd_loss_grad(&b, &c).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::<f64>::default().validate().is_ok());
        let c = LossConfig::<f64> {
            c: 0.3,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = LossConfig::<f64>::with_sigma(1.0);
        assert!(c.validate().is_err());
        let c = LossConfig::<f64> {
            phi: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(LossConfig::<f32>::default().validate().is_ok());
    }

    #[test]
    fn batch_rejects_non_finite_and_mismatch() {
        let c = LossConfig::<f64>::default();
        assert!(BatchTriples::new(1, 1, &[0.0, 0.0], &[0.0], &[0.0, 0.0], &[0.0, 0.0]).is_err());
        let b = BatchTriples::new(1, 1, &[0.0, 0.0], &[f64::NAN, 0.0], &[0.0, 0.0], &[0.0, 0.0])
            .unwrap();
        assert!(matches!(kd_loss(&b, &c), Err(Error::NonFinite(_))));
    }

    #[test]
    fn reference_loss_examples() {
        for kind in ReferenceLoss::ALL {
            let (v, g) = reference_loss(kind, &[0.1, 0.2], &[0.1, 0.2]).unwrap();
            assert_eq!(v, 0.0);
            assert_eq!(g, vec![0.0, 0.0]);
        }
        assert_eq!(reference_loss(ReferenceLoss::L2, &[0.0], &[1.0]).unwrap().0, 1.0);
        assert_eq!(reference_loss(ReferenceLoss::L1, &[0.0], &[1.0]).unwrap().0, 1.0);
        assert_eq!(reference_loss(ReferenceLoss::SmoothL1, &[0.0], &[1.0]).unwrap().0, 0.5);
        assert_eq!(reference_loss(ReferenceLoss::SmoothL1, &[0.0], &[-2.0]).unwrap().0, 1.5);
        let (_, g) = reference_loss(ReferenceLoss::SmoothL1, &[0.0, 0.0], &[0.5, -3.0]).unwrap();
        assert_eq!(g, vec![0.25, -0.5]);
        assert!("huber".parse::<ReferenceLoss>().is_err());
        assert_eq!("Smooth-L1".parse::<ReferenceLoss>().unwrap(), ReferenceLoss::SmoothL1);
    }

    #[test]
    fn single_precision_matches_double() {
        let a = aloss_scalar(ScalarTriple::new(0.0f32, 0.16, 0.4), 0.4);
        assert!((a + 0.12).abs() < 1e-6);
    }

    #[test]
    fn sweep_hits_decimal_grid_points() {
        let rows = loss_sweep::<f64>(0.0, 0.4, 0.4, &LossConfig::with_sigma(0.4), -0.5, 0.5, 1000).unwrap();
        assert_eq!(rows.len(), 1001);
        let r = rows.iter().find(|r| r.pr == 0.16).unwrap();
        assert!((r.aloss + 0.12).abs() < 1e-12);
        // σ·d_te rounds to 0.16000000000000003, so this boundary point is low-influence;
        // both sides give the same value
        assert_eq!(r.region, RegionTag::LowInfluence);
        assert!((r.kd_loss - (2.0 * 0.16 - 0.24)).abs() < 1e-12);
        assert_eq!(rows[500].pr, 0.0);
        assert_eq!(rows[500].aloss, 0.0);
        assert!(loss_sweep(0.0, 0.4, 0.4, &LossConfig::default(), 0.5, -0.5, 10).is_err());
    }
}
