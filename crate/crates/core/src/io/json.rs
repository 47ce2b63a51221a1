//! JSON documents: datasets, shape models, checkpoints, teacher predictions, evaluation
//! results and experiment configs.
//!
//! Readers reject unknown fields and report schema violations with the JSON pointer of
//! the offending value. Writers are deterministic and emit shortest round-trip decimals,
//! so a save/load cycle reproduces every value exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EvalReport, NormPair};
use crate::pipeline::dataset::{validate_permutation, Dataset, Sample, Split};
use crate::pipeline::experiment::TeacherPredictions;
use crate::regressor::{AdamConfig, AdamState, Layer, MlpParams, MlpSpec, Regressor};
use crate::scalar::Scalar;
use crate::shape::Shape;
use crate::shape_model::ShapeModel;

/// Version written into, and required from, every document.
pub const FORMAT_VERSION: u32 = 1;

fn escape_token(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&escape_token(key)),
            Segment::Enum { variant } => out.push_str(&escape_token(variant)),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Deserializes `text`, turning type and field errors into [`Error::Schema`].
pub fn from_json_str<D: DeserializeOwned>(text: &str) -> Result<D> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() || inner.is_io() {
            Error::Json(inner)
        } else {
            Error::schema(pointer, strip_position(&inner.to_string()))
        }
    })
}

/// serde_json appends " at line L column C"; the pointer is more useful.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let mut text = String::new();
    std::io::Read::read_to_string(
        &mut BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?),
        &mut text,
    )
    .map_err(|e| Error::io(path, e))?;
    from_json_str(&text)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::schema(
            "/version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

fn require_finite(values: &[f64], pointer: impl FnOnce() -> String) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pointer()));
    }
    Ok(())
}

fn points_to_shape<T: Scalar>(points: &[[f64; 2]]) -> Shape<T> {
    Shape::new(points.iter().map(|p| [T::lit(p[0]), T::lit(p[1])]).collect())
}

fn shape_to_points<T: Scalar>(shape: &Shape<T>) -> Vec<[f64; 2]> {
    shape.points.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect()
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

// ---------------------------------------------------------------------------------------
// datasets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub input: Vec<f64>,
    pub hard: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft: Option<Vec<[f64; 2]>>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub version: u32,
    pub k: usize,
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_permutation: Option<Vec<usize>>,
    pub samples: Vec<SampleFile>,
}

impl DatasetFile {
    pub fn from_dataset<T: Scalar>(ds: &Dataset<T>) -> Result<Self> {
        ds.validate()?;
        let samples = ds
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let file = SampleFile {
                    input: to_f64(&s.input),
                    hard: shape_to_points(&s.hard),
                    soft: s.soft.as_ref().map(shape_to_points),
                    split: s.split,
                    tags: s.tags.clone(),
                };
                let coords = file.hard.iter().chain(file.soft.iter().flatten()).flatten();
                if coords.copied().any(|v: f64| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("/samples/{i} landmarks")));
                }
                Ok(file)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            version: FORMAT_VERSION,
            k: ds.k,
            input_dim: ds.input_dim,
            flip_permutation: ds.flip_permutation.clone(),
            samples,
        })
    }

    /// Checks every cross-field invariant and builds the in-memory dataset.
    pub fn into_dataset<T: Scalar>(self) -> Result<Dataset<T>> {
        check_version(self.version)?;
        if self.k == 0 {
            return Err(Error::schema("/k", "must be at least 1"));
        }
        if self.input_dim == 0 {
            return Err(Error::schema("/input_dim", "must be at least 1"));
        }
        let mut samples = Vec::with_capacity(self.samples.len());
        for (i, s) in self.samples.into_iter().enumerate() {
            if s.input.len() != self.input_dim {
                return Err(Error::schema(
                    format!("/samples/{i}/input"),
                    format!("expected {} values, found {}", self.input_dim, s.input.len()),
                ));
            }
            if s.hard.len() != self.k {
                return Err(Error::schema(
                    format!("/samples/{i}/hard"),
                    format!("expected {} landmarks, found {}", self.k, s.hard.len()),
                ));
            }
            if let Some(soft) = &s.soft {
                if soft.len() != self.k {
                    return Err(Error::schema(
                        format!("/samples/{i}/soft"),
                        format!("expected {} landmarks, found {}", self.k, soft.len()),
                    ));
                }
            }
            samples.push(Sample {
                input: from_f64(&s.input),
                hard: points_to_shape(&s.hard),
                soft: s.soft.as_deref().map(points_to_shape),
                split: s.split,
                tags: s.tags,
            });
        }
        if let Some(p) = &self.flip_permutation {
            validate_permutation(p, self.k)
                .map_err(|e| Error::schema("/flip_permutation", e.to_string()))?;
        }
        let mut ds = Dataset::new(self.k, self.input_dim, samples)?;
        ds.flip_permutation = self.flip_permutation;
        Ok(ds)
    }
}

pub fn dataset_from_json<T: Scalar>(text: &str) -> Result<Dataset<T>> {
    from_json_str::<DatasetFile>(text)?.into_dataset()
}

pub fn dataset_to_json<T: Scalar>(ds: &Dataset<T>) -> Result<String> {
    to_json_string(&DatasetFile::from_dataset(ds)?)
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    read_json::<DatasetFile>(path)?.into_dataset()
}

pub fn save_dataset<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    write_json(&DatasetFile::from_dataset(ds)?, path)
}

// ---------------------------------------------------------------------------------------
// shape models

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeModelFile {
    pub version: u32,
    pub k: usize,
    /// Flattened mean shape, `2k` values.
    pub mean: Vec<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// One `2k`-vector per retained eigenvalue.
    pub basis: Vec<Vec<f64>>,
    /// Fitted on Procrustes-aligned shapes.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub procrustes: bool,
}

impl ShapeModelFile {
    pub fn from_model<T: Scalar>(m: &ShapeModel<T>) -> Self {
        Self {
            version: FORMAT_VERSION,
            k: m.num_points(),
            mean: to_f64(m.mean()),
            eigenvalues: to_f64(m.eigenvalues()),
            basis: (0..m.retained_count()).map(|j| to_f64(m.basis_column(j))).collect(),
            procrustes: m.is_procrustes(),
        }
    }

    pub fn into_model<T: Scalar>(self) -> Result<ShapeModel<T>> {
        check_version(self.version)?;
        let dim = 2 * self.k;
        if self.mean.len() != dim {
            return Err(Error::schema(
                "/mean",
                format!("expected {dim} values, found {}", self.mean.len()),
            ));
        }
        if self.basis.len() != self.eigenvalues.len() {
            return Err(Error::schema(
                "/basis",
                format!(
                    "expected one column per eigenvalue ({}), found {}",
                    self.eigenvalues.len(),
                    self.basis.len()
                ),
            ));
        }
        for (j, col) in self.basis.iter().enumerate() {
            if col.len() != dim {
                return Err(Error::schema(
                    format!("/basis/{j}"),
                    format!("expected {dim} values, found {}", col.len()),
                ));
            }
        }
        let basis: Vec<f64> = self.basis.into_iter().flatten().collect();
        Ok(ShapeModel::from_parts(
            self.k,
            from_f64(&self.mean),
            from_f64(&self.eigenvalues),
            from_f64(&basis),
        )?
        .with_procrustes(self.procrustes))
    }
}

pub fn load_shape_model<T: Scalar>(path: &Path) -> Result<ShapeModel<T>> {
    read_json::<ShapeModelFile>(path)?.into_model()
}

pub fn save_shape_model<T: Scalar>(m: &ShapeModel<T>, path: &Path) -> Result<()> {
    write_json(&ShapeModelFile::from_model(m), path)
}

// ---------------------------------------------------------------------------------------
// checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    /// Row-major `out_dim × in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamStateFile {
    pub config: AdamConfig,
    pub t: u64,
    /// First moments, one vector per parameter tensor (`w0, b0, w1, b1, ...`).
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub version: u32,
    pub spec: MlpSpec,
    pub layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_state: Option<AdamStateFile>,
}

/// A network with optional optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Regressor<T>,
    pub adam_state: Option<AdamState<T>>,
}

impl CheckpointFile {
    pub fn from_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Result<Self> {
        if !ckpt.model.params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(Self {
            version: FORMAT_VERSION,
            spec: ckpt.model.spec.clone(),
            layers: ckpt
                .model
                .params
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: to_f64(&l.weights),
                    bias: to_f64(&l.bias),
                })
                .collect(),
            adam_state: ckpt.adam_state.as_ref().map(|s| AdamStateFile {
                config: s.config,
                t: s.t,
                m: s.m.iter().map(|v| to_f64(v)).collect(),
                v: s.v.iter().map(|v| to_f64(v)).collect(),
            }),
        })
    }

    pub fn into_checkpoint<T: Scalar>(self) -> Result<Checkpoint<T>> {
        check_version(self.version)?;
        self.spec
            .validate()
            .map_err(|e| Error::schema("/spec", e.to_string()))?;
        let dims = self.spec.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::schema(
                "/layers",
                format!("spec has {} layers, file has {}", dims.len(), self.layers.len()),
            ));
        }
        let mut layers = Vec::with_capacity(dims.len());
        for (i, ((in_dim, out_dim), l)) in dims.into_iter().zip(&self.layers).enumerate() {
            if l.weights.len() != in_dim * out_dim {
                return Err(Error::schema(
                    format!("/layers/{i}/weights"),
                    format!("expected {} values, found {}", in_dim * out_dim, l.weights.len()),
                ));
            }
            if l.bias.len() != out_dim {
                return Err(Error::schema(
                    format!("/layers/{i}/bias"),
                    format!("expected {out_dim} values, found {}", l.bias.len()),
                ));
            }
            layers.push(Layer {
                in_dim,
                out_dim,
                weights: from_f64(&l.weights),
                bias: from_f64(&l.bias),
            });
        }
        let model = Regressor::from_parts(self.spec, MlpParams { layers })?;
        let adam_state = match self.adam_state {
            None => None,
            Some(s) => {
                let shapes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
                for (name, moments) in [("m", &s.m), ("v", &s.v)] {
                    let lens: Vec<usize> = moments.iter().map(Vec::len).collect();
                    if lens != shapes {
                        return Err(Error::schema(
                            format!("/adam_state/{name}"),
                            "moment shapes do not match the parameter tensors",
                        ));
                    }
                }
                Some(AdamState {
                    config: s.config,
                    t: s.t,
                    m: s.m.iter().map(|v| from_f64(v)).collect(),
                    v: s.v.iter().map(|v| from_f64(v)).collect(),
                })
            }
        };
        Ok(Checkpoint { model, adam_state })
    }
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    read_json::<CheckpointFile>(path)?.into_checkpoint()
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: &Path) -> Result<()> {
    write_json(&CheckpointFile::from_checkpoint(ckpt)?, path)
}

// ---------------------------------------------------------------------------------------
// teacher predictions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherPredictionsFile {
    pub version: u32,
    pub k: usize,
    pub accurate: Vec<Vec<[f64; 2]>>,
    pub smooth: Vec<Vec<[f64; 2]>>,
}

impl TeacherPredictionsFile {
    pub fn from_predictions<T: Scalar>(p: &TeacherPredictions<T>) -> Result<Self> {
        let k = p.accurate.first().map_or(0, Shape::len);
        let file = Self {
            version: FORMAT_VERSION,
            k,
            accurate: p.accurate.iter().map(shape_to_points).collect(),
            smooth: p.smooth.iter().map(shape_to_points).collect(),
        };
        let flat: Vec<f64> = file.accurate.iter().chain(&file.smooth).flatten().flatten().copied().collect();
        require_finite(&flat, || "teacher predictions".into())?;
        Ok(file)
    }

    pub fn into_predictions<T: Scalar>(self) -> Result<TeacherPredictions<T>> {
        check_version(self.version)?;
        if self.accurate.len() != self.smooth.len() {
            return Err(Error::schema(
                "/smooth",
                format!(
                    "expected {} shapes to match /accurate, found {}",
                    self.accurate.len(),
                    self.smooth.len()
                ),
            ));
        }
        for (name, list) in [("accurate", &self.accurate), ("smooth", &self.smooth)] {
            for (i, s) in list.iter().enumerate() {
                if s.len() != self.k {
                    return Err(Error::schema(
                        format!("/{name}/{i}"),
                        format!("expected {} landmarks, found {}", self.k, s.len()),
                    ));
                }
            }
        }
        Ok(TeacherPredictions {
            accurate: self.accurate.iter().map(|s| points_to_shape(s)).collect(),
            smooth: self.smooth.iter().map(|s| points_to_shape(s)).collect(),
        })
    }
}

pub fn load_teacher_predictions<T: Scalar>(path: &Path) -> Result<TeacherPredictions<T>> {
    read_json::<TeacherPredictionsFile>(path)?.into_predictions()
}

pub fn save_teacher_predictions<T: Scalar>(p: &TeacherPredictions<T>, path: &Path) -> Result<()> {
    write_json(&TeacherPredictionsFile::from_predictions(p)?, path)
}

// ---------------------------------------------------------------------------------------
// evaluation results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFile {
    pub version: u32,
    pub split: Split,
    pub norm_pair: NormPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub report: EvalReport,
    /// Per-image normalized errors in split order.
    pub errors: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synthetic::{generate_synthetic, SyntheticSpec};
    use crate::regressor::Activation;

    fn dataset() -> Dataset<f64> {
        let mut ds: Dataset<f64> = generate_synthetic(&SyntheticSpec {
            k: 4,
            n_train: 5,
            n_test: 2,
            latent_modes: 3,
            noise_sigma: 0.01,
            occlusion_fraction: 0.2,
            seed: 1,
        })
        .unwrap();
        ds.samples[1].tags.push("challenging".into());
        ds.samples[2].soft = Some(ds.samples[2].hard.clone());
        ds
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let ds = dataset();
        let text = dataset_to_json(&ds).unwrap();
        let back: Dataset<f64> = dataset_from_json(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_json(&back).unwrap(), text);
    }

    fn schema_pointer(e: Error) -> (String, String) {
        match e {
            Error::Schema { pointer, message } => (pointer, message),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_k_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(&dataset_to_json(&dataset()).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("k");
        let (_, msg) = schema_pointer(dataset_from_json::<f64>(&v.to_string()).unwrap_err());
        assert!(msg.contains("`k`"), "{msg}");
    }

    #[test]
    fn unknown_field_is_rejected_with_pointer() {
        let mut v: serde_json::Value = serde_json::from_str(&dataset_to_json(&dataset()).unwrap()).unwrap();
        v["samples"][3]["colour"] = serde_json::json!("red");
        let (ptr, msg) = schema_pointer(dataset_from_json::<f64>(&v.to_string()).unwrap_err());
        assert_eq!(ptr, "/samples/3/colour");
        assert!(msg.contains("colour"), "{msg}");
    }

    #[test]
    fn mixed_k_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&dataset_to_json(&dataset()).unwrap()).unwrap();
        v["samples"][4]["hard"].as_array_mut().unwrap().pop();
        let (ptr, _) = schema_pointer(dataset_from_json::<f64>(&v.to_string()).unwrap_err());
        assert_eq!(ptr, "/samples/4/hard");
    }

    #[test]
    fn bad_split_and_type_errors_have_pointers() {
        let mut v: serde_json::Value = serde_json::from_str(&dataset_to_json(&dataset()).unwrap()).unwrap();
        v["samples"][0]["split"] = serde_json::json!("validation");
        let (ptr, _) = schema_pointer(dataset_from_json::<f64>(&v.to_string()).unwrap_err());
        assert_eq!(ptr, "/samples/0/split");
        v["samples"][0]["split"] = serde_json::json!("train");
        v["samples"][0]["input"][2] = serde_json::json!("x");
        let (ptr, _) = schema_pointer(dataset_from_json::<f64>(&v.to_string()).unwrap_err());
        assert_eq!(ptr, "/samples/0/input/2");
        v["version"] = serde_json::json!(2);
        v["samples"][0]["input"][2] = serde_json::json!(0.0);
        let (ptr, _) = schema_pointer(dataset_from_json::<f64>(&v.to_string()).unwrap_err());
        assert_eq!(ptr, "/version");
    }

    #[test]
    fn syntax_errors_stay_json_errors() {
        assert!(matches!(dataset_from_json::<f64>("{\"version\": 1,"), Err(Error::Json(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = MlpSpec::new(3, vec![4], 2, Activation::Tanh, 5);
        let model = Regressor::<f64>::new(spec).unwrap();
        let mut state = AdamState::for_params(AdamConfig::default(), &model.params);
        state.t = 7;
        state.m[0][1] = 0.125;
        let ckpt = Checkpoint {
            model,
            adam_state: Some(state),
        };
        let text = to_json_string(&CheckpointFile::from_checkpoint(&ckpt).unwrap()).unwrap();
        let back: Checkpoint<f64> = from_json_str::<CheckpointFile>(&text)
            .unwrap()
            .into_checkpoint()
            .unwrap();
        assert_eq!(back, ckpt);

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["layers"][1]["bias"].as_array_mut().unwrap().push(serde_json::json!(0.0));
        let err = from_json_str::<CheckpointFile>(&v.to_string())
            .unwrap()
            .into_checkpoint::<f64>()
            .unwrap_err();
        assert_eq!(schema_pointer(err).0, "/layers/1/bias");
    }

    #[test]
    fn shape_model_round_trip() {
        let shapes: Vec<Shape<f64>> = dataset().samples.iter().map(|s| s.hard.clone()).collect();
        let m = crate::shape_model::fit_shape_model(&shapes, 1e-10).unwrap();
        let text = to_json_string(&ShapeModelFile::from_model(&m)).unwrap();
        let back: ShapeModel<f64> = from_json_str::<ShapeModelFile>(&text).unwrap().into_model().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn teacher_predictions_round_trip() {
        let ds = dataset();
        let p = TeacherPredictions {
            accurate: ds.samples.iter().map(|s| s.hard.clone()).collect(),
            smooth: ds.samples.iter().map(|s| s.hard.clone()).collect(),
        };
        let file = TeacherPredictionsFile::from_predictions(&p).unwrap();
        let text = to_json_string(&file).unwrap();
        let back: TeacherPredictions<f64> =
            from_json_str::<TeacherPredictionsFile>(&text).unwrap().into_predictions().unwrap();
        assert_eq!(back, p);
    }
}
