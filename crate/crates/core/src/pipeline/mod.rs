//! Two-phase teacher/student protocol on landmark regression datasets.
//!
//! Phase 1 fits a shape model on the training split, synthesizes Soft-landmarks and
//! trains the Tough (hard labels) and Tolerant (soft labels) teachers with L2. Phase 2
//! caches both teachers' predictions and trains the student with the distillation loss.

pub mod augment;
pub mod dataset;
pub mod experiment;
pub mod synthetic;
pub mod train;

pub use augment::{augment_sample, AugmentConfig, Transform};
pub use dataset::{Dataset, LabelKind, Sample, Split, SplitView};
pub use experiment::{
    derive_seed, evaluate, median, predict_teachers, prepare_soft_labels, run_ablation,
    train_student, train_teacher, AblationReport, AblationRow, ExperimentConfig, NetConfig,
    SeedOutcome, StudentVariant, TeacherPredictions, VariantSummary,
};
pub use synthetic::{generate_synthetic, template, SyntheticSpec};
pub use train::{train, Augmentation, Objective, TeacherSource, TrainLog, TrainSettings};
