//! Statistical point-distribution model over landmark shapes, and Soft-landmark synthesis.
//!
//! A shape `f` (flattened to `2k` coordinates) is approximated as `f ≈ f̄ + V b`, where `f̄`
//! is the mean shape and the columns of `V` are eigenvectors of the training covariance.
//! Softening projects a shape onto the leading eigenvectors, clamps each coefficient to
//! `±3√λᵢ`, and reconstructs. With fewer eigenvectors the result moves toward the mean.
//!
//! By default PCA runs on the normalized shapes directly. A model fitted with
//! Procrustes alignment instead softens each shape in the aligned frame and maps the
//! result back.

pub mod jacobi;
pub mod procrustes;

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::shape::{check_uniform, Shape};

pub use jacobi::{symmetric_eigen, SymmetricEigen};
pub use procrustes::{fit_similarity, generalized_procrustes, Similarity};

/// Default relative threshold below which eigenvalues are treated as numerically zero.
pub const DEFAULT_RANK_EPSILON: f64 = 1e-10;
/// Default fraction of retained eigenvectors used for Soft-landmarks.
pub const DEFAULT_M_TILDE: f64 = 0.9;
/// Coefficients are clamped to this many standard deviations.
pub const CLAMP_STDDEVS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeModel<T> {
    mean: Vec<T>,
    /// Column-major `2k × m`.
    basis: Vec<T>,
    eigenvalues: Vec<T>,
    num_points: usize,
    procrustes: bool,
}

impl<T: Scalar> ShapeModel<T> {
    /// Assembles a model from stored parts, checking dimensions and eigenvalue order.
    pub fn from_parts(
        num_points: usize,
        mean: Vec<T>,
        eigenvalues: Vec<T>,
        basis: Vec<T>,
    ) -> Result<Self> {
        let dim = 2 * num_points;
        check_len("shape model mean", dim, mean.len())?;
        check_len("shape model basis", dim * eigenvalues.len(), basis.len())?;
        if mean.iter().chain(&eigenvalues).chain(&basis).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("shape model".into()));
        }
        if eigenvalues.iter().any(|&l| l < T::zero()) {
            return Err(Error::InvalidArgument("negative eigenvalue in shape model".into()));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "shape model eigenvalues must be sorted descending".into(),
            ));
        }
        Ok(Self {
            mean,
            basis,
            eigenvalues,
            num_points,
            procrustes: false,
        })
    }

    /// Marks the model as fitted on Procrustes-aligned shapes.
    pub fn with_procrustes(mut self, procrustes: bool) -> Self {
        self.procrustes = procrustes;
        self
    }

    pub fn is_procrustes(&self) -> bool {
        self.procrustes
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn dim(&self) -> usize {
        2 * self.num_points
    }

    pub fn retained_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn mean_shape(&self) -> Shape<T> {
        Shape::from_flat(&self.mean).expect("even-length mean")
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// Column-major basis storage.
    pub fn basis(&self) -> &[T] {
        &self.basis
    }

    pub fn basis_column(&self, j: usize) -> &[T] {
        let d = self.dim();
        &self.basis[j * d..(j + 1) * d]
    }

    /// Largest element-wise deviation of `VᵀV` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let m = self.retained_count();
        let mut worst = T::zero();
        for i in 0..m {
            for j in 0..m {
                let dot = dot(self.basis_column(i), self.basis_column(j));
                let want = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }

    /// Coefficient vector `b = Vᵀ(f − f̄)`, in the aligned frame for Procrustes models.
    pub fn project(&self, shape: &Shape<T>) -> Result<Vec<T>> {
        check_len("project landmark count", self.num_points, shape.len())?;
        match self.alignment(shape)? {
            Some(t) => self.project_leading(&t.apply(shape), self.retained_count()),
            None => self.project_leading(shape, self.retained_count()),
        }
    }

    /// Transform into the model frame, for Procrustes models.
    fn alignment(&self, shape: &Shape<T>) -> Result<Option<Similarity<T>>> {
        if !self.procrustes {
            return Ok(None);
        }
        Ok(Some(fit_similarity(shape, &self.mean_shape())?))
    }

    fn project_leading(&self, shape: &Shape<T>, count: usize) -> Result<Vec<T>> {
        check_len("project landmark count", self.num_points, shape.len())?;
        let centered: Vec<T> = shape
            .to_flat()
            .iter()
            .zip(&self.mean)
            .map(|(&f, &m)| f - m)
            .collect();
        Ok((0..count)
            .map(|j| dot(self.basis_column(j), &centered))
            .collect())
    }

    /// `f̄ + V_sub b`, using the first `b.len()` basis columns.
    pub fn reconstruct(&self, coefficients: &[T]) -> Result<Shape<T>> {
        if coefficients.len() > self.retained_count() {
            return Err(Error::DimensionMismatch {
                context: "reconstruct coefficient count",
                expected: self.retained_count(),
                actual: coefficients.len(),
            });
        }
        let mut flat = self.mean.clone();
        for (j, &b) in coefficients.iter().enumerate() {
            for (f, &v) in flat.iter_mut().zip(self.basis_column(j)) {
                *f += v * b;
            }
        }
        Shape::from_flat(&flat)
    }

    /// Number of leading eigenvectors used for a given `m_tilde`.
    pub fn leading_count(&self, m_tilde: f64) -> usize {
        leading_count(m_tilde, self.retained_count())
    }

    /// Soft-landmark synthesis: truncated, clamped reconstruction of `shape`.
    pub fn soften(&self, shape: &Shape<T>, m_tilde: f64) -> Result<Shape<T>> {
        if !(0.0..=1.0).contains(&m_tilde) {
            return Err(Error::InvalidArgument(format!(
                "m_tilde must lie in [0, 1], got {m_tilde}"
            )));
        }
        check_len("soften landmark count", self.num_points, shape.len())?;
        let count = self.leading_count(m_tilde);
        let alignment = self.alignment(shape)?;
        let frame = match &alignment {
            Some(t) => t.apply(shape),
            None => shape.clone(),
        };
        let b = self.project_leading(&frame, count)?;
        let clamped = clamp_coefficients(&b, &self.eigenvalues[..count])?;
        let soft = self.reconstruct(&clamped)?;
        Ok(match alignment {
            Some(t) => t.inverse().apply(&soft),
            None => soft,
        })
    }
}

/// `ceil(m_tilde · retained)`, tolerant of representation error in the product
/// (e.g. `0.7 · 10` evaluates slightly above 7).
pub fn leading_count(m_tilde: f64, retained: usize) -> usize {
    let raw = m_tilde * retained as f64;
    let count = (raw - 1e-9).ceil().max(0.0) as usize;
    count.min(retained)
}

/// Clamps each `bᵢ` into `[−3√λᵢ, +3√λᵢ]`.
pub fn clamp_coefficients<T: Scalar>(b: &[T], eigenvalues: &[T]) -> Result<Vec<T>> {
    check_len("clamp_coefficients eigenvalues", b.len(), eigenvalues.len())?;
    b.iter()
        .zip(eigenvalues)
        .map(|(&bi, &l)| {
            if l < T::zero() || !l.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalue must be finite and non-negative, got {l}"
                )));
            }
            let limit = T::lit(CLAMP_STDDEVS) * l.sqrt();
            Ok(bi.max(-limit).min(limit))
        })
        .collect()
}

/// Options for [`fit_shape_model_with`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub rank_epsilon: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Similarity-align the shapes (generalized Procrustes) before PCA.
    pub procrustes: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            rank_epsilon: DEFAULT_RANK_EPSILON,
            tolerance: jacobi::DEFAULT_TOLERANCE,
            max_sweeps: jacobi::DEFAULT_MAX_SWEEPS,
            procrustes: false,
        }
    }
}

/// Fits the shape model with default solver settings.
pub fn fit_shape_model<T: Scalar>(shapes: &[Shape<T>], rank_epsilon: f64) -> Result<ShapeModel<T>> {
    fit_shape_model_with(
        shapes,
        FitOptions {
            rank_epsilon,
            ..FitOptions::default()
        },
    )
}

/// Covariance uses the biased `1/N` estimator. Only eigenvalues above
/// `rank_epsilon · λ_max` are kept.
pub fn fit_shape_model_with<T: Scalar>(
    shapes: &[Shape<T>],
    options: FitOptions,
) -> Result<ShapeModel<T>> {
    if shapes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "shape model needs at least 2 shapes, got {}",
            shapes.len()
        )));
    }
    let k = check_uniform(shapes, "fit_shape_model landmark count")?;
    if shapes.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("training shapes".into()));
    }
    let d = 2 * k;
    let n = T::from_count(shapes.len());

    let flats: Vec<Vec<T>> = if options.procrustes {
        generalized_procrustes(shapes)?.iter().map(Shape::to_flat).collect()
    } else {
        shapes.iter().map(Shape::to_flat).collect()
    };
    let mut mean = vec![T::zero(); d];
    for f in &flats {
        for (m, &x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    let mut cov = vec![T::zero(); d * d];
    let mut centered = vec![T::zero(); d];
    for f in &flats {
        for ((c, &x), &m) in centered.iter_mut().zip(f).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == T::zero() {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            for j in i..d {
                row[j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / n;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }

    let eig = symmetric_eigen(&cov, d, options.tolerance, options.max_sweeps)?;
    let lambda_max = eig.values.first().copied().unwrap_or_else(T::zero);
    let threshold = T::lit(options.rank_epsilon) * lambda_max;
    let retained = if lambda_max > T::zero() {
        eig.values.iter().take_while(|&&l| l > threshold).count()
    } else {
        0
    };

    let eigenvalues = eig.values[..retained].to_vec();
    let basis = eig.vectors[..retained * d].to_vec();
    Ok(ShapeModel {
        mean,
        basis,
        eigenvalues,
        num_points: k,
        procrustes: options.procrustes,
    })
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Three two-point shapes that differ only in horizontal spread.
    fn collinear() -> Vec<Shape<f64>> {
        vec![
            Shape::new(vec![[-0.3, 0.0], [0.3, 0.0]]),
            Shape::new(vec![[-0.1, 0.0], [0.1, 0.0]]),
            Shape::new(vec![[-0.2, 0.0], [0.2, 0.0]]),
        ]
    }

    #[test]
    fn collinear_hand_eigendecomposition() {
        let model = fit_shape_model(&collinear(), DEFAULT_RANK_EPSILON).unwrap();
        assert_eq!(model.retained_count(), 1);
        // deviations ±0.1·(−1, 0, 1, 0) and 0 -> λ = (2/3)·0.01·‖(−1,0,1,0)‖² = 0.04/3
        assert!((model.eigenvalues()[0] - 0.04 / 3.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let col = model.basis_column(0);
        for (got, want) in col.iter().zip([r, 0.0, -r, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{col:?}");
        }
        for (got, want) in model.mean().iter().zip([-0.2, 0.0, 0.2, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn collinear_projection_coefficient() {
        let shapes = collinear();
        let model = fit_shape_model(&shapes, DEFAULT_RANK_EPSILON).unwrap();
        let b = model.project(&shapes[0]).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0] + 0.2 / 2f64.sqrt()).abs() < 1e-12);
        assert!((b[0] + 0.1414).abs() < 1e-4);
    }

    #[test]
    fn collinear_full_soften_round_trips() {
        let shapes = collinear();
        let model = fit_shape_model(&shapes, DEFAULT_RANK_EPSILON).unwrap();
        let soft = model.soften(&shapes[0], 1.0).unwrap();
        for (a, b) in soft.to_flat().iter().zip(shapes[0].to_flat()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_shapes_have_no_modes() {
        let s = Shape::new(vec![[0.1, 0.2], [-0.3, 0.4]]);
        let model = fit_shape_model(&vec![s.clone(); 4], DEFAULT_RANK_EPSILON).unwrap();
        assert_eq!(model.retained_count(), 0);
        assert_eq!(model.mean_shape(), s);
        assert_eq!(model.soften(&s, 0.9).unwrap(), s);
    }

    #[test]
    fn zero_m_tilde_gives_mean() {
        let shapes = collinear();
        let model = fit_shape_model(&shapes, DEFAULT_RANK_EPSILON).unwrap();
        assert_eq!(model.soften(&shapes[0], 0.0).unwrap(), model.mean_shape());
    }

    #[test]
    fn project_mean_is_zero() {
        let shapes = collinear();
        let model = fit_shape_model(&shapes, DEFAULT_RANK_EPSILON).unwrap();
        let b = model.project(&model.mean_shape()).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn clamp_arithmetic() {
        let l = [4.0, 9.0, 1.0];
        // limits 6, 9, 3
        let b = [1.0, 4.0 * 3.0, -5.0 * 1.0];
        let c = clamp_coefficients(&b, &l).unwrap();
        assert_eq!(c, vec![1.0, 9.0, -3.0]);
        assert!(clamp_coefficients(&[1.0], &[1.0, 2.0]).is_err());
        assert!(clamp_coefficients(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn leading_count_rounding() {
        assert_eq!(leading_count(0.7, 10), 7);
        assert_eq!(leading_count(0.9, 10), 9);
        assert_eq!(leading_count(0.91, 10), 10);
        assert_eq!(leading_count(0.0, 10), 0);
        assert_eq!(leading_count(1.0, 10), 10);
        assert_eq!(leading_count(0.05, 3), 1);
    }

    #[test]
    fn fit_errors() {
        let one = vec![Shape::new(vec![[0.0, 0.0]])];
        assert!(fit_shape_model(&one, DEFAULT_RANK_EPSILON).is_err());
        let mixed = vec![
            Shape::new(vec![[0.0, 0.0]]),
            Shape::new(vec![[0.0, 0.0], [1.0, 0.0]]),
        ];
        assert!(matches!(
            fit_shape_model(&mixed, DEFAULT_RANK_EPSILON),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn soften_rejects_bad_inputs() {
        let shapes = collinear();
        let model = fit_shape_model(&shapes, DEFAULT_RANK_EPSILON).unwrap();
        assert!(model.soften(&shapes[0], 1.5).is_err());
        let wrong = Shape::new(vec![[0.0, 0.0]]);
        assert!(model.soften(&wrong, 0.5).is_err());
        assert!(model.project(&wrong).is_err());
    }

    #[test]
    fn from_parts_validates() {
        assert!(ShapeModel::<f64>::from_parts(1, vec![0.0, 0.0], vec![1.0], vec![1.0, 0.0]).is_ok());
        assert!(ShapeModel::<f64>::from_parts(1, vec![0.0], vec![], vec![]).is_err());
        assert!(
            ShapeModel::<f64>::from_parts(1, vec![0.0, 0.0], vec![1.0, 2.0], vec![1.0, 0.0, 0.0, 1.0])
                .is_err()
        );
    }

    /// Triangles that differ in one vertex, each shown at a different pose.
    fn posed_triangles() -> Vec<Shape<f64>> {
        (0..12)
            .map(|i| {
                let t = i as f64;
                let (s, c) = (0.3 * t).sin_cos();
                let scale = 0.2 + 0.01 * t;
                let apex = 0.8 + 0.05 * (t * 1.7).sin();
                let base = [[-0.5, 0.0], [0.5, 0.0], [0.1 * (t * 0.9).cos(), apex]];
                Shape::new(
                    base.iter()
                        .map(|p| [scale * (c * p[0] - s * p[1]) + 0.01 * t, scale * (s * p[0] + c * p[1])])
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn procrustes_model_factors_out_pose() {
        let shapes = posed_triangles();
        let options = FitOptions {
            procrustes: true,
            ..FitOptions::default()
        };
        let aligned = fit_shape_model_with(&shapes, options).unwrap();
        let raw = fit_shape_model(&shapes, DEFAULT_RANK_EPSILON).unwrap();
        assert!(aligned.is_procrustes());
        // pose variation no longer occupies modes: a triangle has 2 shape degrees of
        // freedom, plus a small residual from aligning by projection
        let l = aligned.eigenvalues();
        assert!(l.len() <= 3 && l[2..].iter().all(|&x| x < 0.05 * l[0]), "{l:?}");
        assert!(raw.retained_count() > 3, "{:?}", raw.eigenvalues());
        for s in &shapes {
            // m̃ = 0 keeps the pose but replaces the shape by the mean
            let soft = aligned.soften(s, 0.0).unwrap();
            let back = fit_similarity(&aligned.mean_shape(), &soft).unwrap().apply(&aligned.mean_shape());
            for (a, b) in back.to_flat().iter().zip(soft.to_flat()) {
                assert!((a - b).abs() < 1e-12);
            }
            // softened labels stay in the shape's own frame
            let full = aligned.soften(s, 1.0).unwrap();
            let b = aligned.project(s).unwrap();
            let in_clamp = b
                .iter()
                .zip(aligned.eigenvalues())
                .all(|(bi, l)| bi.abs() <= CLAMP_STDDEVS * l.sqrt());
            if in_clamp {
                for (a, b) in full.to_flat().iter().zip(s.to_flat()) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }
}
