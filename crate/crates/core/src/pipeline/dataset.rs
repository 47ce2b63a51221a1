use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;
use crate::shape::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "split must be 'train' or 'test', got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Hard,
    Soft,
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(LabelKind::Hard),
            "soft" => Ok(LabelKind::Soft),
            other => Err(Error::InvalidArgument(format!(
                "labels must be 'hard' or 'soft', got '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub input: Vec<T>,
    pub hard: Shape<T>,
    pub soft: Option<Shape<T>>,
    pub split: Split,
    pub tags: Vec<String>,
}

/// Feature vectors with ground-truth landmarks, split into train and test.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub k: usize,
    pub input_dim: usize,
    pub samples: Vec<Sample<T>>,
    /// Index remapping for horizontal flips (`flipped[i] = original[perm[i]]`).
    pub flip_permutation: Option<Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(k: usize, input_dim: usize, samples: Vec<Sample<T>>) -> Result<Self> {
        let ds = Self {
            k,
            input_dim,
            samples,
            flip_permutation: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.input_dim == 0 {
            return Err(Error::InvalidArgument("k and input_dim must be positive".into()));
        }
        for s in &self.samples {
            check_len("sample input_dim", self.input_dim, s.input.len())?;
            check_len("sample hard landmark count", self.k, s.hard.len())?;
            if let Some(soft) = &s.soft {
                check_len("sample soft landmark count", self.k, soft.len())?;
            }
            if s.input.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("sample input".into()));
            }
        }
        if let Some(p) = &self.flip_permutation {
            validate_permutation(p, self.k)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_soft_labels(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.soft.is_some())
    }

    /// Indices of the samples in `split`, in dataset order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Read access restricted to one split.
    pub fn view(&self, split: Split) -> SplitView<'_, T> {
        SplitView {
            dataset: self,
            split,
            indices: self.split_indices(split),
        }
    }

    /// Same dataset keeping only samples that carry `tag`.
    pub fn filter_tag(&self, tag: &str) -> Self {
        Self {
            k: self.k,
            input_dim: self.input_dim,
            samples: self
                .samples
                .iter()
                .filter(|s| s.tags.iter().any(|t| t == tag))
                .cloned()
                .collect(),
            flip_permutation: self.flip_permutation.clone(),
        }
    }

    /// Row-major `N × input_dim` buffer of all inputs in dataset order.
    pub fn all_inputs(&self) -> Vec<T> {
        self.samples.iter().flat_map(|s| s.input.iter().copied()).collect()
    }
}

pub(crate) fn validate_permutation(p: &[usize], k: usize) -> Result<()> {
    check_len("flip permutation", k, p.len())?;
    let mut seen = vec![false; k];
    for &i in p {
        if i >= k || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(
                "flip permutation must be a permutation of 0..k".into(),
            ));
        }
    }
    Ok(())
}

/// The samples of one split. Training code receives only train views, so test labels are
/// unreachable during fitting.
#[derive(Debug, Clone)]
pub struct SplitView<'a, T> {
    dataset: &'a Dataset<T>,
    split: Split,
    indices: Vec<usize>,
}

impl<'a, T: Scalar> SplitView<'a, T> {
    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn k(&self) -> usize {
        self.dataset.k
    }

    pub fn input_dim(&self) -> usize {
        self.dataset.input_dim
    }

    /// Dataset-wide indices of this split's samples.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn flip_permutation(&self) -> Option<&[usize]> {
        self.dataset.flip_permutation.as_deref()
    }

    pub fn samples(&self) -> impl Iterator<Item = &'a Sample<T>> + '_ {
        self.indices.iter().map(|&i| &self.dataset.samples[i])
    }

    pub fn inputs(&self) -> Vec<T> {
        self.samples().flat_map(|s| s.input.iter().copied()).collect()
    }

    pub fn hard_shapes(&self) -> Vec<Shape<T>> {
        self.samples().map(|s| s.hard.clone()).collect()
    }

    /// Flattened `N × 2k` labels of the requested kind.
    pub fn labels(&self, kind: LabelKind) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.len() * 2 * self.k());
        for s in self.samples() {
            let shape = match kind {
                LabelKind::Hard => &s.hard,
                LabelKind::Soft => s.soft.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("soft labels requested but not present".into())
                })?,
            };
            out.extend(shape.to_flat());
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{kind:?} labels of the {} split", self.split)));
        }
        Ok(out)
    }
}
