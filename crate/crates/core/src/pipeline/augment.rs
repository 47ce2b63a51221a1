//! Geometric augmentation in landmark space: rotation about the origin and horizontal flip.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub rotation_max_degrees: f64,
    pub flip_probability: f64,
    /// Overrides the dataset's flip permutation.
    pub flip_permutation: Option<Vec<usize>>,
    /// Run the teachers on each augmented input instead of transforming their cached
    /// predictions.
    pub teacher_forward_on_augmented: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            rotation_max_degrees: 45.0,
            flip_probability: 0.5,
            flip_permutation: None,
            teacher_forward_on_augmented: false,
        }
    }
}

/// One draw of the augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub angle_radians: f64,
    pub flip: bool,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        angle_radians: 0.0,
        flip: false,
    };

    pub fn sample<R: Rng + ?Sized>(config: &AugmentConfig, rng: &mut R) -> Self {
        let max = config.rotation_max_degrees.to_radians();
        let angle_radians = if max > 0.0 { rng.random_range(-max..=max) } else { 0.0 };
        let flip = config.flip_probability > 0.0 && rng.random::<f64>() < config.flip_probability;
        Self { angle_radians, flip }
    }

    /// Rotates then flips interleaved `x, y` coordinates of `k = flat.len() / 2` points,
    /// optionally clipping to `[-0.5, 0.5]`.
    pub fn apply<T: Scalar>(
        &self,
        flat: &[T],
        flip_permutation: Option<&[usize]>,
        clip: bool,
    ) -> Result<Vec<T>> {
        if !flat.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument("landmark vector must have even length".into()));
        }
        let k = flat.len() / 2;
        let (s, c) = self.angle_radians.sin_cos();
        let (s, c) = (T::lit(s), T::lit(c));
        let mut rotated = Vec::with_capacity(flat.len());
        for p in flat.chunks_exact(2) {
            rotated.push(c * p[0] - s * p[1]);
            rotated.push(s * p[0] + c * p[1]);
        }
        let mut out = if self.flip {
            let perm = flip_permutation.ok_or_else(|| {
                Error::InvalidArgument("horizontal flip requires a flip permutation".into())
            })?;
            check_len("flip permutation", k, perm.len())?;
            let mut flipped = Vec::with_capacity(flat.len());
            for &src in perm {
                if src >= k {
                    return Err(Error::InvalidArgument("flip permutation index out of range".into()));
                }
                flipped.push(-rotated[2 * src]);
                flipped.push(rotated[2 * src + 1]);
            }
            flipped
        } else {
            rotated
        };
        if clip {
            let h = T::lit(0.5);
            for v in &mut out {
                *v = v.max(-h).min(h);
            }
        }
        Ok(out)
    }
}

/// Applies one random transform consistently to an input feature vector (interpreted as
/// landmark coordinates), its target and any number of teacher predictions.
pub fn augment_sample<T: Scalar, R: Rng + ?Sized>(
    input: &[T],
    shapes: &[&[T]],
    config: &AugmentConfig,
    flip_permutation: Option<&[usize]>,
    rng: &mut R,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    if !config.enabled {
        return Err(Error::InvalidArgument("augmentation is disabled".into()));
    }
    let perm = config.flip_permutation.as_deref().or(flip_permutation);
    if config.flip_probability > 0.0 && perm.is_none() {
        return Err(Error::InvalidArgument(
            "flip augmentation enabled but no flip permutation is available".into(),
        ));
    }
    let t = Transform::sample(config, rng);
    let input = t.apply(input, perm, true)?;
    let shapes = shapes
        .iter()
        .map(|s| t.apply(s, perm, true))
        .collect::<Result<Vec<_>>>()?;
    Ok((input, shapes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const FLAT: [f64; 6] = [0.1, -0.2, -0.15, 0.05, 0.2, 0.3];
    const PERM: [usize; 3] = [2, 1, 0];

    #[test]
    fn identity_transform() {
        let out = Transform::IDENTITY.apply(&FLAT, None, true).unwrap();
        assert_eq!(out, FLAT.to_vec());
    }

    #[test]
    fn rotation_inverse() {
        let theta = 0.6;
        let fwd = Transform { angle_radians: theta, flip: false };
        let back = Transform { angle_radians: -theta, flip: false };
        let out = back.apply(&fwd.apply(&FLAT, None, false).unwrap(), None, false).unwrap();
        for (a, b) in out.iter().zip(FLAT) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_is_involution() {
        let f = Transform { angle_radians: 0.0, flip: true };
        let once = f.apply(&FLAT, Some(&PERM), true).unwrap();
        assert_eq!(once, vec![-0.2, 0.3, 0.15, 0.05, -0.1, -0.2]);
        assert_eq!(f.apply(&once, Some(&PERM), true).unwrap(), FLAT.to_vec());
    }

    #[test]
    fn quarter_turn() {
        let t = Transform { angle_radians: std::f64::consts::FRAC_PI_2, flip: false };
        let out = t.apply::<f64>(&[0.25, 0.0], None, true).unwrap();
        assert!(out[0].abs() < 1e-16 && (out[1] - 0.25).abs() < 1e-16);
    }

    #[test]
    fn flip_without_permutation_is_an_error() {
        let config = AugmentConfig { enabled: true, ..AugmentConfig::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!(augment_sample(&FLAT, &[], &config, None, &mut rng).is_err());
        let config = AugmentConfig { flip_probability: 0.0, ..config };
        assert!(augment_sample(&FLAT, &[], &config, None, &mut rng).is_ok());
    }

    #[test]
    fn consistent_transform_across_targets() {
        let config = AugmentConfig { enabled: true, ..AugmentConfig::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (inp, shapes) =
            augment_sample(&FLAT, &[&FLAT, &FLAT], &config, Some(&PERM), &mut rng).unwrap();
        assert_eq!(inp, shapes[0]);
        assert_eq!(shapes[0], shapes[1]);
        assert!(inp.iter().all(|v| v.abs() <= 0.5));
    }
}
