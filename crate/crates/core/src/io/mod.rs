//! File formats: `.pts` annotations, JSON documents and CSV/SVG exports.

pub mod export;
pub mod json;
pub mod pts;

pub use export::{
    ablation_csv, ablation_summary_csv, ced_csv, ced_svg, errors_csv, loss_sweep_csv,
    parse_errors_csv, report_csv, write_text,
};
pub use json::{
    dataset_from_json, dataset_to_json, from_json_str, load_checkpoint, load_dataset,
    load_shape_model, load_teacher_predictions, read_json, save_checkpoint, save_dataset,
    save_shape_model, save_teacher_predictions, to_json_string, write_json, Checkpoint,
    CheckpointFile, DatasetFile, EvalFile, ShapeModelFile, TeacherPredictionsFile,
    FORMAT_VERSION,
};
pub use pts::{load_pts, parse_pts, save_pts, write_pts, PtsFile};
