//! Subcommand definitions and their implementations.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kdlandmark::io::{self, Checkpoint, EvalFile};
use kdlandmark::kd_loss::loss_sweep;
use kdlandmark::metrics::{ced_curve, per_image_error, ErrorList, DEFAULT_CED_SAMPLES, DEFAULT_FAILURE_THRESHOLD};
use kdlandmark::pipeline::{
    evaluate, predict_teachers, prepare_soft_labels, run_ablation, train_student, train_teacher,
    Dataset, ExperimentConfig, LabelKind, Split, StudentVariant, SyntheticSpec,
};
use kdlandmark::shape_model::{fit_shape_model_with, FitOptions, DEFAULT_RANK_EPSILON};
use kdlandmark::{Error, LossConfig, NormPair, Result, Shape};

/// Environment variable naming the default root for directory outputs.
pub const OUT_ROOT_ENV: &str = "KDLANDMARK_OUT";

#[derive(Debug, Parser)]
#[command(name = "kdlandmark", version, about = "Knowledge-distillation landmark regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from a spec file.
    GenData(GenDataArgs),
    /// Fit a shape model on the training split of a dataset.
    FitAsm(FitAsmArgs),
    /// Attach soft labels produced by a shape model.
    GenSoft(GenSoftArgs),
    /// Train a teacher with L2 on hard or soft labels.
    TrainTeacher(TrainTeacherArgs),
    /// Train a student from two teacher checkpoints.
    TrainStudent(TrainStudentArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Train and evaluate all student variants over several seeds.
    Ablate(AblateArgs),
    /// Run the full two-phase protocol into a run directory.
    Run(RunArgs),
    /// Cumulative error distribution as CSV (and optionally SVG).
    Ced(CedArgs),
    /// Tabulate the loss terms over a grid of predictions.
    LossSweep(LossSweepArgs),
}

/// Experiment settings shared by training subcommands. Precedence: built-in defaults,
/// then `--config`, then these flags.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// ExperimentConfig JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub teacher_epochs: Option<usize>,
    #[arg(long)]
    pub student_epochs: Option<usize>,
    #[arg(long)]
    pub teacher_batch: Option<usize>,
    #[arg(long)]
    pub student_batch: Option<usize>,
    #[arg(long)]
    pub m_tilde: Option<f64>,
    /// Low-influence fraction for both teachers.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Enable rotation/flip augmentation.
    #[arg(long)]
    pub augment: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => io::read_json::<ExperimentConfig>(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.teacher_epochs {
            c.teacher_epochs = v;
        }
        if let Some(v) = self.student_epochs {
            c.student_epochs = v;
        }
        if let Some(v) = self.teacher_batch {
            c.teacher_batch = v;
        }
        if let Some(v) = self.student_batch {
            c.student_batch = v;
        }
        if let Some(v) = self.m_tilde {
            c.m_tilde = v;
        }
        if let Some(v) = self.sigma {
            c.loss_config.sigma_tough = v;
            c.loss_config.sigma_tolerant = v;
        }
        if self.augment {
            c.augment.enabled = true;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// SyntheticSpec JSON file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (receives dataset.json and spec.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitAsmArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RANK_EPSILON)]
    pub rank_epsilon: f64,
    /// Similarity-align the training shapes before PCA.
    #[arg(long)]
    pub procrustes: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSoftArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub m_tilde: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainTeacherArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `hard` trains the Tough teacher, `soft` the Tolerant teacher.
    #[arg(long)]
    pub labels: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainStudentArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub tough: PathBuf,
    #[arg(long)]
    pub tolerant: PathBuf,
    /// One of l2, l1, smooth_l1, kd_tou, kd_tol, kd_full.
    #[arg(long, default_value = "kd_full")]
    pub variant: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// `i,j` for two landmarks, or `a,b,c,d` for the midpoints of (a,b) and (c,d).
    #[arg(long)]
    pub norm_pair: Option<String>,
    /// Restrict to samples carrying this tag.
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Number of seeds; seed i uses `config.seed + i`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CedArgs {
    /// CSV with an `error` column.
    #[arg(long, conflicts_with = "from_eval", required_unless_present = "from_eval")]
    pub errors: Option<PathBuf>,
    /// Evaluation JSON written by `eval`.
    #[arg(long)]
    pub from_eval: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FAILURE_THRESHOLD)]
    pub max: f64,
    #[arg(long, default_value_t = DEFAULT_CED_SAMPLES)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossSweepArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub gt: f64,
    /// Tough-teacher coordinate.
    #[arg(long, default_value_t = 0.4, allow_hyphen_values = true)]
    pub te: f64,
    /// Tolerant-teacher coordinate; defaults to `--te`.
    #[arg(long, allow_hyphen_values = true)]
    pub te_tolerant: Option<f64>,
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::FitAsm(a) => fit_asm(a),
        Command::GenSoft(a) => gen_soft(a),
        Command::TrainTeacher(a) => train_teacher_cmd(a),
        Command::TrainStudent(a) => train_student_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Run(a) => run_all(a),
        Command::Ced(a) => ced(a),
        Command::LossSweep(a) => sweep(a),
    }
}

#[derive(Serialize)]
struct Echo<'a, C: Serialize> {
    command: &'a str,
    resolved_config: &'a C,
}

/// Prints the resolved settings as the first line of standard output, as compact JSON.
fn echo<C: Serialize>(command: &str, config: &C) -> Result<()> {
    let line = serde_json::to_string(&Echo {
        command,
        resolved_config: config,
    })?;
    println!("{line}");
    Ok(())
}

fn out_dir(out: Option<PathBuf>, command: &str) -> Result<PathBuf> {
    let dir = match out {
        Some(d) => d,
        None => match std::env::var_os(OUT_ROOT_ENV) {
            Some(root) => Path::new(&root).join(command),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "--out is required when {OUT_ROOT_ENV} is not set"
                )))
            }
        },
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn load(path: &Path) -> Result<Dataset<f64>> {
    io::load_dataset(path)
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut spec: SyntheticSpec = io::read_json(&a.spec)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate()?;
    echo("gen-data", &spec)?;
    let ds: Dataset<f64> = kdlandmark::pipeline::generate_synthetic(&spec)?;
    let dir = out_dir(a.out, "gen-data")?;
    io::write_json(&spec, &dir.join("spec.json"))?;
    io::save_dataset(&ds, &dir.join("dataset.json"))
}

fn fit_asm(a: FitAsmArgs) -> Result<()> {
    echo(
        "fit-asm",
        &serde_json::json!({ "rank_epsilon": a.rank_epsilon, "procrustes": a.procrustes }),
    )?;
    let ds = load(&a.data)?;
    let shapes: Vec<Shape<f64>> = ds.view(Split::Train).hard_shapes();
    let options = FitOptions {
        rank_epsilon: a.rank_epsilon,
        procrustes: a.procrustes,
        ..FitOptions::default()
    };
    let model = fit_shape_model_with(&shapes, options)?;
    io::save_shape_model(&model, &a.out)
}

fn gen_soft(a: GenSoftArgs) -> Result<()> {
    echo("gen-soft", &serde_json::json!({ "m_tilde": a.m_tilde }))?;
    let ds = load(&a.data)?;
    let model = io::load_shape_model(&a.model)?;
    let out = kdlandmark::pipeline::experiment::with_soft_labels(&ds, &model, a.m_tilde)?;
    io::save_dataset(&out, &a.out)
}

fn train_teacher_cmd(a: TrainTeacherArgs) -> Result<()> {
    let labels: LabelKind = a.labels.parse()?;
    let config = a.config.resolve()?;
    echo("train-teacher", &config)?;
    let ds = load(&a.data)?;
    let (model, log) = train_teacher(&ds, labels, &config)?;
    print_log(&log.epoch_losses);
    io::save_checkpoint(
        &Checkpoint {
            model,
            adam_state: None,
        },
        &a.out,
    )
}

fn print_log(losses: &[f64]) {
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        println!("epochs {} first_loss {first} final_loss {last}", losses.len());
    }
}

fn train_student_cmd(a: TrainStudentArgs) -> Result<()> {
    let variant: StudentVariant = a.variant.parse()?;
    let config = a.config.resolve()?;
    echo("train-student", &config)?;
    let ds = load(&a.data)?;
    let tough = io::load_checkpoint::<f64>(&a.tough)?.model;
    let tolerant = io::load_checkpoint::<f64>(&a.tolerant)?.model;
    let preds = predict_teachers(&tough, &tolerant, &ds)?;
    let (model, log) = train_student(&ds, Some(&preds), variant, &config, Some((&tough, &tolerant)))?;
    print_log(&log.epoch_losses);
    io::save_checkpoint(
        &Checkpoint {
            model,
            adam_state: None,
        },
        &a.out,
    )
}

fn parse_norm_pair(text: &str) -> Result<NormPair> {
    let idx = text
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::InvalidArgument(format!("malformed --norm-pair '{text}'")))?;
    match idx[..] {
        [i, j] => Ok(NormPair::Points(i, j)),
        [a, b, c, d] => Ok(NormPair::Midpoints([a, b], [c, d])),
        _ => Err(Error::InvalidArgument(format!(
            "--norm-pair takes 2 or 4 indices, got '{text}'"
        ))),
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let split: Split = a.split.parse()?;
    let ds = load(&a.data)?;
    let pair = match &a.norm_pair {
        Some(t) => parse_norm_pair(t)?,
        None => NormPair::default_for(ds.k),
    };
    echo(
        "eval",
        &serde_json::json!({ "split": split, "norm_pair": pair, "tag": a.tag }),
    )?;
    let model = io::load_checkpoint::<f64>(&a.model)?.model;
    let report = evaluate(&model, &ds, split, pair, a.tag.as_deref())?;
    let subset = match &a.tag {
        Some(t) => ds.filter_tag(t),
        None => ds.clone(),
    };
    let view = subset.view(split);
    let preds = model.predict(&view.inputs())?;
    let errors = preds
        .chunks_exact(2 * ds.k)
        .zip(view.samples())
        .map(|(p, s)| per_image_error(&Shape::from_flat(p)?, &s.hard, pair))
        .collect::<Result<Vec<f64>>>()?;
    println!(
        "nme {} fr {} auc {} n_images {}",
        report.nme_percent, report.fr_percent, report.auc, report.n_images
    );
    io::write_json(
        &EvalFile {
            version: io::FORMAT_VERSION,
            split,
            norm_pair: pair,
            tag: a.tag,
            report,
            errors,
        },
        &a.out,
    )
}

fn ablate(a: AblateArgs) -> Result<()> {
    let config = a.config.resolve()?;
    if a.seeds == 0 {
        return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
    }
    echo("ablate", &config)?;
    let ds = load(&a.data)?;
    let seeds: Vec<u64> = (0..a.seeds).map(|i| config.seed.wrapping_add(i)).collect();
    let report = run_ablation(&ds, &config, &seeds, a.jobs)?;
    let dir = out_dir(a.out, "ablate")?;
    io::write_json(&config, &dir.join("config.json"))?;
    io::write_text(&io::ablation_csv(&report)?, &dir.join("ablation.csv"))?;
    io::write_text(&io::ablation_summary_csv(&report)?, &dir.join("ablation_summary.csv"))?;
    io::write_json(&report, &dir.join("report.json"))?;
    for m in &report.medians {
        println!("median {} nme {} fr {} auc {}", m.variant, m.median_nme, m.median_fr, m.median_auc);
    }
    Ok(())
}

fn run_all(a: RunArgs) -> Result<()> {
    let config = a.config.resolve()?;
    echo("run", &config)?;
    let ds = load(&a.data)?;
    let dir = out_dir(a.out, "run")?;
    io::write_json(&config, &dir.join("config.json"))?;
    let (ds, shape_model) = prepare_soft_labels(&ds, config.m_tilde)?;
    io::save_shape_model(&shape_model, &dir.join("shape_model.json"))?;
    let (tough, _) = train_teacher(&ds, LabelKind::Hard, &config)?;
    let (tolerant, _) = train_teacher(&ds, LabelKind::Soft, &config)?;
    let preds = predict_teachers(&tough, &tolerant, &ds)?;
    io::save_teacher_predictions(&preds, &dir.join("teacher_preds.json"))?;
    let (student, log) =
        train_student(&ds, Some(&preds), StudentVariant::KdFull, &config, Some((&tough, &tolerant)))?;
    print_log(&log.epoch_losses);
    let pair = config.norm_pair_for(ds.k)?;
    let report = evaluate(&student, &ds, Split::Test, pair, None)?;
    for (name, model) in [
        ("teacher_tough.json", tough),
        ("teacher_tolerant.json", tolerant),
        ("student.json", student),
    ] {
        io::save_checkpoint(
            &Checkpoint {
                model,
                adam_state: None,
            },
            &dir.join(name),
        )?;
    }
    io::write_text(&io::ced_csv(&report.ced_curve())?, &dir.join("ced_student.csv"))?;
    println!(
        "nme {} fr {} auc {} n_images {}",
        report.nme_percent, report.fr_percent, report.auc, report.n_images
    );
    io::write_json(&report, &dir.join("report.json"))
}

fn ced(a: CedArgs) -> Result<()> {
    echo("ced", &serde_json::json!({ "max": a.max, "samples": a.samples }))?;
    let errors = match (&a.errors, &a.from_eval) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            io::parse_errors_csv(&text)?
        }
        (None, Some(p)) => ErrorList::new(io::read_json::<EvalFile>(p)?.errors)?,
        (None, None) => return Err(Error::InvalidArgument("pass --errors or --from-eval".into())),
    };
    let curve = ced_curve(&errors, a.max, a.samples)?;
    io::write_text(&io::ced_csv(&curve)?, &a.out)?;
    if let Some(svg) = &a.svg {
        io::write_text(&io::ced_svg(&[("CED", &curve)])?, svg)?;
    }
    Ok(())
}

fn sweep(a: LossSweepArgs) -> Result<()> {
    let config = LossConfig::<f64>::with_sigma(a.sigma);
    let te_tolerant = a.te_tolerant.unwrap_or(a.te);
    echo(
        "loss-sweep",
        &serde_json::json!({
            "gt": a.gt, "te": a.te, "te_tolerant": te_tolerant, "loss_config": config,
            "grid": a.grid, "lo": a.lo, "hi": a.hi,
        }),
    )?;
    let rows = loss_sweep(a.gt, a.te, te_tolerant, &config, a.lo, a.hi, a.grid)?;
    io::write_text(&io::loss_sweep_csv(&rows)?, &a.out)
}
