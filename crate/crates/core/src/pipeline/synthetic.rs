//! Seeded synthetic landmark regression task.
//!
//! Ground-truth shapes are a mirror-symmetric template plus a random orthonormal mode
//! basis with geometrically decaying coefficient scales. Inputs are the flattened shapes
//! with additive Gaussian noise and a random fraction of coordinates zeroed out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::NormPair;
use crate::scalar::Scalar;
use crate::shape::Shape;

use super::dataset::{Dataset, Sample, Split};

/// Target per-coordinate standard deviation of the shape variation.
const SHAPE_STD: f64 = 0.04;
/// Ratio between consecutive mode scales.
const MODE_DECAY: f64 = 0.95;
const TEMPLATE_RX: f64 = 0.3;
const TEMPLATE_RY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub latent_modes: usize,
    pub noise_sigma: f64,
    pub occlusion_fraction: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("k must be at least 2, got {}", self.k)));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidArgument("n_train and n_test must be at least 1".into()));
        }
        if self.latent_modes == 0 || self.latent_modes > 2 * self.k {
            return Err(Error::InvalidArgument(format!(
                "latent_modes must lie in 1..={}, got {}",
                2 * self.k,
                self.latent_modes
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::InvalidArgument("noise_sigma must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return Err(Error::InvalidArgument("occlusion_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Symmetric template and its mirror permutation.
///
/// Points come in left/right pairs; with odd `k` one point sits on the vertical axis. The
/// pair returned by [`NormPair::default_for`] is placed at the widest horizontal
/// positions so that it plays the role of the outer eye corners.
pub fn template(k: usize) -> (Shape<f64>, Vec<usize>) {
    let (a, b) = match NormPair::default_for(k) {
        NormPair::Points(a, b) => (a, b),
        NormPair::Midpoints(l, r) => (l[0], r[0]),
    };
    let mut rest: Vec<usize> = (0..k).filter(|&i| i != a && i != b).collect();
    let mut pairs = vec![(a, b)];
    while rest.len() >= 2 {
        let l = rest.remove(0);
        let r = rest.remove(0);
        pairs.push((l, r));
    }
    let middle = rest.pop();

    let n_pairs = pairs.len();
    // angles on the right half-ellipse, ordered so that the first pair is nearest 0
    let mut angles: Vec<f64> = (0..n_pairs)
        .map(|p| -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (p as f64 + 0.5) / n_pairs as f64)
        .collect();
    angles.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    let mut points = vec![[0.0, 0.0]; k];
    let mut perm: Vec<usize> = (0..k).collect();
    for ((l, r), theta) in pairs.into_iter().zip(angles) {
        let x = TEMPLATE_RX * theta.cos();
        let y = TEMPLATE_RY * theta.sin();
        points[l] = [-x, y];
        points[r] = [x, y];
        perm[l] = r;
        perm[r] = l;
    }
    if let Some(m) = middle {
        points[m] = [0.0, 0.0];
    }
    (Shape::new(points), perm)
}

fn orthonormal_modes(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(count);
    while modes.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for m in &modes {
            let d: f64 = v.iter().zip(m).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(m) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            modes.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    modes
}

pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = 2 * spec.k;
    let (template, perm) = template(spec.k);
    let base = template.to_flat();
    let modes = orthonormal_modes(&mut rng, dim, spec.latent_modes);

    // total variance spread evenly so that each coordinate has std ≈ SHAPE_STD
    let r2 = MODE_DECAY * MODE_DECAY;
    let geometric: f64 = (0..spec.latent_modes).map(|j| r2.powi(j as i32)).sum();
    let scale0 = SHAPE_STD * (dim as f64 / geometric).sqrt();
    let scales: Vec<f64> = (0..spec.latent_modes)
        .map(|j| scale0 * MODE_DECAY.powi(j as i32))
        .collect();

    let total = spec.n_train + spec.n_test;
    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        let mut flat = base.clone();
        for (mode, &s) in modes.iter().zip(&scales) {
            let z: f64 = StandardNormal.sample(&mut rng);
            for (f, &v) in flat.iter_mut().zip(mode) {
                *f += s * z * v;
            }
        }
        for f in &mut flat {
            *f = f.clamp(-0.5, 0.5);
        }
        let input: Vec<T> = flat
            .iter()
            .map(|&f| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let occluded = rng.random::<f64>() < spec.occlusion_fraction;
                T::lit(if occluded { 0.0 } else { f + spec.noise_sigma * noise })
            })
            .collect();
        let hard = Shape::from_flat(&flat.iter().map(|&f| T::lit(f)).collect::<Vec<_>>())?;
        samples.push(Sample {
            input,
            hard,
            soft: None,
            split: if i < spec.n_train { Split::Train } else { Split::Test },
            tags: Vec::new(),
        });
    }
    let mut ds = Dataset::new(spec.k, dim, samples)?;
    ds.flip_permutation = Some(perm);
    Ok(ds)
}
