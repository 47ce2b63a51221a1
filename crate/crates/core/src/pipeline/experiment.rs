//! Experiment configuration, teacher/student training, evaluation and ablations.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::kd_loss::{AssistTerms, LossConfig, ReferenceLoss};
use crate::metrics::{per_image_error, ErrorList, EvalReport, NormPair};
use crate::regressor::{Activation, AdamConfig, MlpSpec, Regressor};
use crate::scalar::Scalar;
use crate::shape::Shape;
use crate::shape_model::{fit_shape_model, ShapeModel, DEFAULT_M_TILDE, DEFAULT_RANK_EPSILON};

use super::augment::AugmentConfig;
use super::dataset::{Dataset, LabelKind, Split};
use super::train::{train, Augmentation, Objective, TeacherSource, TrainLog, TrainSettings};

/// Hidden layout of a network; input and output widths come from the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
}

impl NetConfig {
    pub fn spec(&self, input_dim: usize, k: usize, seed: u64) -> MlpSpec {
        MlpSpec::new(input_dim, self.hidden_layers.clone(), 2 * k, self.activation, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub teacher_epochs: usize,
    pub student_epochs: usize,
    pub teacher_batch: usize,
    pub student_batch: usize,
    pub m_tilde: f64,
    pub loss_config: LossConfig<f64>,
    pub teacher_net: NetConfig,
    pub student_net: NetConfig,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    /// `None` selects [`NormPair::default_for`] the dataset's landmark count.
    pub norm_pair: Option<NormPair>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            teacher_epochs: 300,
            student_epochs: 300,
            teacher_batch: 40,
            student_batch: 70,
            m_tilde: DEFAULT_M_TILDE,
            loss_config: LossConfig::default(),
            teacher_net: NetConfig {
                hidden_layers: vec![128, 128],
                activation: Activation::Relu,
            },
            student_net: NetConfig {
                hidden_layers: vec![32],
                activation: Activation::Relu,
            },
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            norm_pair: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.teacher_epochs == 0 || self.student_epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.teacher_batch == 0 || self.student_batch == 0 {
            return Err(Error::InvalidArgument("batch sizes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.m_tilde) {
            return Err(Error::InvalidArgument(format!(
                "m_tilde must lie in [0, 1], got {}",
                self.m_tilde
            )));
        }
        self.loss_config.validate()?;
        let a = &self.augment;
        if !(0.0..=1.0).contains(&a.flip_probability) || !(a.rotation_max_degrees >= 0.0) {
            return Err(Error::InvalidArgument(
                "augment needs flip_probability in [0, 1] and rotation_max_degrees ≥ 0".into(),
            ));
        }
        let c = &self.adam;
        if !(c.learning_rate > 0.0)
            || !(0.0..1.0).contains(&c.beta1)
            || !(0.0..1.0).contains(&c.beta2)
            || !(c.decay >= 0.0)
            || !(c.epsilon > 0.0)
        {
            return Err(Error::InvalidArgument("invalid Adam hyper-parameters".into()));
        }
        Ok(())
    }

    pub fn norm_pair_for(&self, k: usize) -> Result<NormPair> {
        let pair = self.norm_pair.unwrap_or_else(|| NormPair::default_for(k));
        pair.validate(k)?;
        Ok(pair)
    }
}

/// SplitMix64 mixing of a master seed with a stream label, so every random consumer
/// gets an independent, reproducible seed.
pub fn derive_seed(master: u64, stream: &str) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15;
    for b in stream.bytes() {
        z = z.wrapping_add(u64::from(b)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Fits the shape model on the training split and attaches softened labels to every
/// sample (test samples use the train-fitted model).
pub fn prepare_soft_labels<T: Scalar>(
    dataset: &Dataset<T>,
    m_tilde: f64,
) -> Result<(Dataset<T>, ShapeModel<T>)> {
    let train_view = dataset.view(Split::Train);
    if train_view.is_empty() {
        return Err(Error::Empty("train split"));
    }
    let model = fit_shape_model(&train_view.hard_shapes(), DEFAULT_RANK_EPSILON)?;
    let out = with_soft_labels(dataset, &model, m_tilde)?;
    Ok((out, model))
}

/// Attaches soft labels computed with an existing shape model.
pub fn with_soft_labels<T: Scalar>(
    dataset: &Dataset<T>,
    model: &ShapeModel<T>,
    m_tilde: f64,
) -> Result<Dataset<T>> {
    check_len("shape model landmark count", dataset.k, model.num_points())?;
    let mut out = dataset.clone();
    for s in &mut out.samples {
        s.soft = Some(model.soften(&s.hard, m_tilde)?);
    }
    Ok(out)
}

/// Trains one teacher with L2 on the training split's `label_kind` labels.
///
/// Both teachers of a seed share their initialization and batch order, so they differ
/// only in the labels they see.
pub fn train_teacher<T: Scalar>(
    dataset: &Dataset<T>,
    label_kind: LabelKind,
    config: &ExperimentConfig,
) -> Result<(Regressor<T>, TrainLog)> {
    config.validate()?;
    let view = dataset.view(Split::Train);
    if view.is_empty() {
        return Err(Error::Empty("train split"));
    }
    let targets = view.labels(label_kind)?;
    let spec = config
        .teacher_net
        .spec(dataset.input_dim, dataset.k, derive_seed(config.seed, "teacher-init"));
    let mut model = Regressor::new(spec)?;
    let settings = TrainSettings {
        epochs: config.teacher_epochs,
        batch_size: config.teacher_batch,
        adam: config.adam,
        seed: derive_seed(config.seed, "teacher-batches"),
    };
    let augmentation = Augmentation {
        config: &config.augment,
        flip_permutation: view.flip_permutation(),
    };
    let (_, log) = train(
        &mut model,
        &view.inputs(),
        &targets,
        &Objective::Reference(ReferenceLoss::L2),
        &settings,
        Some(augmentation),
    )?;
    Ok((model, log))
}

/// Frozen predictions of both teachers over the whole dataset, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherPredictions<T> {
    /// Tough-Teacher outputs.
    pub accurate: Vec<Shape<T>>,
    /// Tolerant-Teacher outputs.
    pub smooth: Vec<Shape<T>>,
}

impl<T: Scalar> TeacherPredictions<T> {
    pub fn len(&self) -> usize {
        self.accurate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accurate.is_empty()
    }

    pub fn validate(&self, dataset: &Dataset<T>) -> Result<()> {
        check_len("tough predictions", dataset.len(), self.accurate.len())?;
        check_len("tolerant predictions", dataset.len(), self.smooth.len())?;
        for s in self.accurate.iter().chain(&self.smooth) {
            check_len("teacher prediction landmark count", dataset.k, s.len())?;
            if !s.is_finite() {
                return Err(Error::NonFinite("teacher prediction".into()));
            }
        }
        Ok(())
    }

    /// Flattened `(tough, tolerant)` predictions for the given dataset indices.
    pub fn gather(&self, indices: &[usize]) -> (Vec<T>, Vec<T>) {
        let flat = |shapes: &[Shape<T>]| -> Vec<T> {
            indices.iter().flat_map(|&i| shapes[i].to_flat()).collect()
        };
        (flat(&self.accurate), flat(&self.smooth))
    }
}

fn predict_shapes<T: Scalar>(model: &Regressor<T>, dataset: &Dataset<T>) -> Result<Vec<Shape<T>>> {
    check_len("teacher input_dim", dataset.input_dim, model.spec.input_dim)?;
    check_len("teacher landmark count", dataset.k, model.num_points())?;
    let out = model.predict(&dataset.all_inputs())?;
    out.chunks_exact(2 * dataset.k).map(Shape::from_flat).collect()
}

pub fn predict_teachers<T: Scalar>(
    tough: &Regressor<T>,
    tolerant: &Regressor<T>,
    dataset: &Dataset<T>,
) -> Result<TeacherPredictions<T>> {
    Ok(TeacherPredictions {
        accurate: predict_shapes(tough, dataset)?,
        smooth: predict_shapes(tolerant, dataset)?,
    })
}

/// Student training objectives compared in the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentVariant {
    L2,
    L1,
    SmoothL1,
    KdToughOnly,
    KdTolerantOnly,
    KdFull,
}

impl StudentVariant {
    pub const ALL: [StudentVariant; 6] = [
        StudentVariant::L2,
        StudentVariant::L1,
        StudentVariant::SmoothL1,
        StudentVariant::KdToughOnly,
        StudentVariant::KdTolerantOnly,
        StudentVariant::KdFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudentVariant::L2 => "l2",
            StudentVariant::L1 => "l1",
            StudentVariant::SmoothL1 => "smooth_l1",
            StudentVariant::KdToughOnly => "kd_tou",
            StudentVariant::KdTolerantOnly => "kd_tol",
            StudentVariant::KdFull => "kd_full",
        }
    }

    pub fn is_distillation(self) -> bool {
        self.assist_terms().is_some()
    }

    fn assist_terms(self) -> Option<AssistTerms> {
        match self {
            StudentVariant::KdToughOnly => Some(AssistTerms::ToughOnly),
            StudentVariant::KdTolerantOnly => Some(AssistTerms::TolerantOnly),
            StudentVariant::KdFull => Some(AssistTerms::Both),
            _ => None,
        }
    }

    fn reference(self) -> Option<ReferenceLoss> {
        match self {
            StudentVariant::L2 => Some(ReferenceLoss::L2),
            StudentVariant::L1 => Some(ReferenceLoss::L1),
            StudentVariant::SmoothL1 => Some(ReferenceLoss::SmoothL1),
            _ => None,
        }
    }
}

impl fmt::Display for StudentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudentVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown student variant '{s}'")))
    }
}

/// Trains a student on the hard labels of the training split.
///
/// Distillation variants need `teacher_preds`. When augmentation runs with
/// `teacher_forward_on_augmented`, `live_teachers` must hold the `(tough, tolerant)`
/// networks; otherwise the cached predictions are transformed with each sample.
pub fn train_student<T: Scalar>(
    dataset: &Dataset<T>,
    teacher_preds: Option<&TeacherPredictions<T>>,
    variant: StudentVariant,
    config: &ExperimentConfig,
    live_teachers: Option<(&Regressor<T>, &Regressor<T>)>,
) -> Result<(Regressor<T>, TrainLog)> {
    config.validate()?;
    let view = dataset.view(Split::Train);
    if view.is_empty() {
        return Err(Error::Empty("train split"));
    }
    let targets = view.labels(LabelKind::Hard)?;
    let inputs = view.inputs();
    let spec = config
        .student_net
        .spec(dataset.input_dim, dataset.k, derive_seed(config.seed, "student-init"));
    let mut model = Regressor::new(spec)?;
    let settings = TrainSettings {
        epochs: config.student_epochs,
        batch_size: config.student_batch,
        adam: config.adam,
        seed: derive_seed(config.seed, "student-batches"),
    };
    let augmentation = Augmentation {
        config: &config.augment,
        flip_permutation: view.flip_permutation(),
    };

    let cached;
    let objective = match (variant.reference(), variant.assist_terms()) {
        (Some(kind), _) => Objective::Reference(kind),
        (None, Some(terms)) => {
            let loss_config = LossConfig {
                sigma_tough: T::lit(config.loss_config.sigma_tough),
                sigma_tolerant: T::lit(config.loss_config.sigma_tolerant),
                phi: T::lit(config.loss_config.phi),
                c: T::lit(config.loss_config.c),
                main_threshold: T::lit(config.loss_config.main_threshold),
            };
            let live = config.augment.enabled && config.augment.teacher_forward_on_augmented;
            let teachers = if live {
                let (tough, tolerant) = live_teachers.ok_or_else(|| {
                    Error::InvalidArgument(
                        "teacher_forward_on_augmented needs the teacher networks".into(),
                    )
                })?;
                TeacherSource::Live { tough, tolerant }
            } else {
                let preds = teacher_preds.ok_or_else(|| {
                    Error::InvalidArgument(format!("variant {variant} needs teacher predictions"))
                })?;
                preds.validate(dataset)?;
                cached = preds.gather(view.indices());
                TeacherSource::Cached {
                    tough: &cached.0,
                    tolerant: &cached.1,
                }
            };
            Objective::Distill {
                config: loss_config,
                terms,
                teachers,
            }
        }
        (None, None) => unreachable!("every variant has a reference loss or assist terms"),
    };
    let (_, log) = train(&mut model, &inputs, &targets, &objective, &settings, Some(augmentation))?;
    Ok((model, log))
}

/// Evaluates `model` against the hard labels of `split`, optionally restricted to samples
/// carrying `tag`.
pub fn evaluate<T: Scalar>(
    model: &Regressor<T>,
    dataset: &Dataset<T>,
    split: Split,
    norm_pair: NormPair,
    tag: Option<&str>,
) -> Result<EvalReport> {
    let filtered;
    let dataset = match tag {
        Some(t) => {
            filtered = dataset.filter_tag(t);
            &filtered
        }
        None => dataset,
    };
    check_len("model input_dim", dataset.input_dim, model.spec.input_dim)?;
    check_len("model landmark count", dataset.k, model.num_points())?;
    norm_pair.validate(dataset.k)?;
    let view = dataset.view(split);
    if view.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let out = model.predict(&view.inputs())?;
    let errors = out
        .chunks_exact(2 * dataset.k)
        .zip(view.samples())
        .map(|(p, s)| {
            let pred = Shape::from_flat(p)?;
            Ok(per_image_error(&pred, &s.hard, norm_pair)?.as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    EvalReport::from_errors(&ErrorList::new(errors)?)
}

/// Median of a non-empty list (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: StudentVariant,
    pub seed: u64,
    pub nme: f64,
    pub fr: f64,
    pub auc: f64,
}

/// Everything one seed produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Final-epoch training L2 of the Tough teacher (hard labels).
    pub tough_final_loss: f64,
    /// Final-epoch training L2 of the Tolerant teacher (soft labels).
    pub tolerant_final_loss: f64,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: StudentVariant,
    pub median_nme: f64,
    pub median_fr: f64,
    pub median_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<SeedOutcome>,
    pub medians: Vec<VariantSummary>,
}

impl AblationReport {
    /// All rows, seed-major in variant order.
    pub fn rows(&self) -> impl Iterator<Item = &AblationRow> {
        self.seeds.iter().flat_map(|s| &s.rows)
    }

    pub fn median_nme(&self, variant: StudentVariant) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.variant == variant)
            .map(|m| m.median_nme)
    }
}

fn run_seed<T: Scalar>(
    dataset: &Dataset<T>,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<SeedOutcome> {
    let config = ExperimentConfig {
        seed,
        ..config.clone()
    };
    let norm_pair = config.norm_pair_for(dataset.k)?;
    let (tough, tough_log) = train_teacher(dataset, LabelKind::Hard, &config)?;
    let (tolerant, tolerant_log) = train_teacher(dataset, LabelKind::Soft, &config)?;
    let preds = predict_teachers(&tough, &tolerant, dataset)?;
    let mut rows = Vec::with_capacity(StudentVariant::ALL.len());
    for variant in StudentVariant::ALL {
        let (student, _) =
            train_student(dataset, Some(&preds), variant, &config, Some((&tough, &tolerant)))?;
        let report = evaluate(&student, dataset, Split::Test, norm_pair, None)?;
        rows.push(AblationRow {
            variant,
            seed,
            nme: report.nme_percent,
            fr: report.fr_percent,
            auc: report.auc,
        });
    }
    Ok(SeedOutcome {
        seed,
        tough_final_loss: tough_log.last().unwrap_or(f64::NAN),
        tolerant_final_loss: tolerant_log.last().unwrap_or(f64::NAN),
        rows,
    })
}

/// Trains both teachers and all six student variants for every seed and evaluates the
/// students on the test split. Soft labels are attached first when missing.
///
/// Seeds run on a pool of `jobs` threads; results do not depend on `jobs`.
pub fn run_ablation<T: Scalar>(
    dataset: &Dataset<T>,
    config: &ExperimentConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<AblationReport> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let owned;
    let dataset = if dataset.has_soft_labels() {
        dataset
    } else {
        owned = prepare_soft_labels(dataset, config.m_tilde)?.0;
        &owned
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_seed(dataset, config, seed))
            .collect::<Result<Vec<_>>>()
    })?;
    let medians = StudentVariant::ALL
        .into_iter()
        .map(|variant| {
            let pick = |f: fn(&AblationRow) -> f64| -> f64 {
                let v: Vec<f64> = outcomes
                    .iter()
                    .flat_map(|o| &o.rows)
                    .filter(|r| r.variant == variant)
                    .map(f)
                    .collect();
                median(&v)
            };
            VariantSummary {
                variant,
                median_nme: pick(|r| r.nme),
                median_fr: pick(|r| r.fr),
                median_auc: pick(|r| r.auc),
            }
        })
        .collect();
    Ok(AblationReport {
        seeds: outcomes,
        medians,
    })
}
