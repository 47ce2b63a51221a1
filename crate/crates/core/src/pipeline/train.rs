//! Mini-batch training loop shared by the teachers and the student.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::kd_loss::{kd_loss_and_grad, reference_loss, AssistTerms, BatchTriples, LossConfig, ReferenceLoss};
use crate::regressor::{adam_step, backward, forward_cached, AdamConfig, AdamState, Regressor};
use crate::scalar::Scalar;

use super::augment::{AugmentConfig, Transform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds batch shuffling and augmentation draws.
    pub seed: u64,
}

/// Where the teacher coordinates for a distillation batch come from.
#[derive(Debug, Clone, Copy)]
pub enum TeacherSource<'a, T> {
    /// Precomputed predictions aligned with the training inputs (`N × 2k` each).
    Cached { tough: &'a [T], tolerant: &'a [T] },
    /// Frozen teacher networks evaluated on each (possibly augmented) batch.
    Live {
        tough: &'a Regressor<T>,
        tolerant: &'a Regressor<T>,
    },
}

#[derive(Debug, Clone, Copy)]
pub enum Objective<'a, T> {
    Reference(ReferenceLoss),
    Distill {
        config: LossConfig<T>,
        terms: AssistTerms,
        teachers: TeacherSource<'a, T>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean mini-batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn first(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Augmentation options plus the dataset's mirror permutation.
#[derive(Debug, Clone, Copy)]
pub struct Augmentation<'a> {
    pub config: &'a AugmentConfig,
    pub flip_permutation: Option<&'a [usize]>,
}

/// Loss value and `∂loss/∂output` for one batch of outputs.
pub fn objective_loss_and_grad<T: Scalar>(
    objective: &Objective<'_, T>,
    k: usize,
    targets: &[T],
    outputs: &[T],
    tough: &[T],
    tolerant: &[T],
) -> Result<(T, Vec<T>)> {
    match objective {
        Objective::Reference(kind) => reference_loss(*kind, targets, outputs),
        Objective::Distill { config, terms, .. } => {
            let n = targets.len() / (2 * k);
            let batch = BatchTriples::new(n, k, targets, outputs, tough, tolerant)?;
            kd_loss_and_grad(&batch, config, *terms)
        }
    }
}

/// Trains `model` in place and returns the optimizer state with the per-epoch log.
pub fn train<T: Scalar>(
    model: &mut Regressor<T>,
    inputs: &[T],
    targets: &[T],
    objective: &Objective<'_, T>,
    settings: &TrainSettings,
    augmentation: Option<Augmentation<'_>>,
) -> Result<(AdamState<T>, TrainLog)> {
    let spec = model.spec.clone();
    let out_dim = spec.output_dim;
    let k = out_dim / 2;
    if settings.epochs == 0 || settings.batch_size == 0 {
        return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
    }
    if !inputs.len().is_multiple_of(spec.input_dim) {
        return Err(Error::DimensionMismatch {
            context: "training inputs",
            expected: spec.input_dim,
            actual: inputs.len() % spec.input_dim,
        });
    }
    let n = inputs.len() / spec.input_dim;
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    check_len("training targets", n * out_dim, targets.len())?;
    if let Objective::Distill {
        teachers: TeacherSource::Cached { tough, tolerant },
        ..
    } = objective
    {
        check_len("cached tough predictions", n * out_dim, tough.len())?;
        check_len("cached tolerant predictions", n * out_dim, tolerant.len())?;
    }
    let augmentation = augmentation.filter(|a| a.config.enabled);
    if augmentation.is_some() && spec.input_dim != out_dim {
        return Err(Error::InvalidArgument(
            "augmentation needs landmark-shaped inputs (input_dim = 2k)".into(),
        ));
    }

    let mut state = AdamState::for_params(settings.adam, &model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut augment_rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5EED_A06E_0000_0001);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();

    let mut xb: Vec<T> = Vec::new();
    let mut yb: Vec<T> = Vec::new();
    let mut tb: Vec<T> = Vec::new();
    let mut sb: Vec<T> = Vec::new();

    for epoch in 0..settings.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        for chunk in order.chunks(settings.batch_size) {
            xb.clear();
            yb.clear();
            tb.clear();
            sb.clear();
            for &i in chunk {
                let x = &inputs[i * spec.input_dim..(i + 1) * spec.input_dim];
                let y = &targets[i * out_dim..(i + 1) * out_dim];
                let cached = match objective {
                    Objective::Distill {
                        teachers: TeacherSource::Cached { tough, tolerant },
                        ..
                    } => Some((
                        &tough[i * out_dim..(i + 1) * out_dim],
                        &tolerant[i * out_dim..(i + 1) * out_dim],
                    )),
                    _ => None,
                };
                match augmentation {
                    Some(aug) => {
                        let perm = aug.config.flip_permutation.as_deref().or(aug.flip_permutation);
                        if aug.config.flip_probability > 0.0 && perm.is_none() {
                            return Err(Error::InvalidArgument(
                                "flip augmentation enabled but no flip permutation is available"
                                    .into(),
                            ));
                        }
                        let t = Transform::sample(aug.config, &mut augment_rng);
                        xb.extend(t.apply(x, perm, true)?);
                        yb.extend(t.apply(y, perm, true)?);
                        if let Some((a, s)) = cached {
                            tb.extend(t.apply(a, perm, true)?);
                            sb.extend(t.apply(s, perm, true)?);
                        }
                    }
                    None => {
                        xb.extend_from_slice(x);
                        yb.extend_from_slice(y);
                        if let Some((a, s)) = cached {
                            tb.extend_from_slice(a);
                            sb.extend_from_slice(s);
                        }
                    }
                }
            }
            if let Objective::Distill {
                teachers: TeacherSource::Live { tough, tolerant },
                ..
            } = objective
            {
                tb = tough.predict(&xb)?;
                sb = tolerant.predict(&xb)?;
            }

            let cache = forward_cached(&spec, &model.params, &xb)?;
            let (loss, d_out) = objective_loss_and_grad(objective, k, &yb, cache.output(), &tb, &sb)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_total += loss * chunk.len() as f64;
            let grads = backward(&spec, &model.params, &xb, &cache, &d_out)?;
            adam_step(&mut model.params, &grads, &mut state)?;
        }
        let epoch_loss = epoch_total / n as f64;
        if !model.params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        log.epoch_losses.push(epoch_loss);
    }
    Ok((state, log))
}
