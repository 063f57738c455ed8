use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use super::{read_tensor, write_tensor, Tensor, TensorData};
use crate::error::{Error, Result};

/// Marker for penultimate-layer activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Features {}

/// Marker for class logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Logits {}

/// Dense row-major `f32` matrix with at least one row and one column and
/// only finite entries. The type parameter tags what the rows hold.
#[derive(Clone, PartialEq)]
pub struct Matrix<K> {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    _kind: PhantomData<K>,
}

/// `N × m` activations, one row per sample.
pub type FeatureMatrix = Matrix<Features>;
/// `N × C` logits, one row per sample.
pub type LogitMatrix = Matrix<Logits>;

impl<K> fmt::Debug for Matrix<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish_non_exhaustive()
    }
}

impl<K> Matrix<K> {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("matrix needs at least one row and one column"));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or(Error::SizeOverflow)?;
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                shape: vec![rows as u64, cols as u64],
                expected: expected as u64,
                found: values.len(),
            });
        }
        super::check_finite(&values)?;
        Ok(Self::from_parts_unchecked(rows, cols, values))
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} has {} columns, row 0 has {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Matrix {
            rows,
            cols,
            values,
            _kind: PhantomData,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.cols)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::f32(
            vec![self.rows as u64, self.cols as u64],
            self.values.clone(),
        )
        .expect("a valid matrix is a valid tensor")
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        let (shape, data) = tensor.into_parts();
        let values = match data {
            TensorData::F32(v) => v,
            TensorData::U32(_) => {
                return Err(Error::WrongKind {
                    expected: "f32 matrix",
                    found: "u32 tensor".into(),
                })
            }
        };
        if shape.len() != 2 {
            return Err(Error::WrongKind {
                expected: "2-D tensor",
                found: format!("shape {shape:?}"),
            });
        }
        let rows = usize::try_from(shape[0]).map_err(|_| Error::SizeOverflow)?;
        let cols = usize::try_from(shape[1]).map_err(|_| Error::SizeOverflow)?;
        Self::new(rows, cols, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor(read_tensor(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensor(path, &self.to_tensor())
    }
}

/// Final linear layer: `weights` is `m × C` row-major, `bias` has `C` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    weights: Matrix<()>,
    bias: Vec<f32>,
}

impl ClassifierHead {
    pub fn new(feature_dim: usize, classes: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!(
                "classifier head needs at least 2 classes, got {classes}"
            )));
        }
        let weights = Matrix::new(feature_dim, classes, weights)?;
        Self::from_parts(weights, bias)
    }

    fn from_parts(weights: Matrix<()>, bias: Vec<f32>) -> Result<Self> {
        if weights.cols() < 2 {
            return Err(Error::invalid(format!(
                "classifier head needs at least 2 classes, got {}",
                weights.cols()
            )));
        }
        if bias.len() != weights.cols() {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix has {} columns but bias has {} entries",
                weights.cols(),
                bias.len()
            )));
        }
        super::check_finite(&bias)?;
        Ok(ClassifierHead { weights, bias })
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }

    /// Row-major `m × C` weights.
    pub fn weights(&self) -> &[f32] {
        self.weights.values()
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn from_tensors(weights: Tensor, bias: Tensor) -> Result<Self> {
        let weights = Matrix::<()>::from_tensor(weights)?;
        let (shape, data) = bias.into_parts();
        let bias = match (shape.len(), data) {
            (1, TensorData::F32(v)) => v,
            (_, data) => {
                return Err(Error::WrongKind {
                    expected: "1-D f32 bias vector",
                    found: format!("{} tensor of shape {shape:?}", data.dtype().name()),
                })
            }
        };
        Self::from_parts(weights, bias)
    }

    pub fn load(weights: impl AsRef<Path>, bias: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(read_tensor(weights)?, read_tensor(bias)?)
    }

    pub fn save(&self, weights: impl AsRef<Path>, bias: impl AsRef<Path>) -> Result<()> {
        self.weights.save(weights)?;
        let bias_tensor = Tensor::f32(vec![self.bias.len() as u64], self.bias.clone())?;
        write_tensor(bias, &bias_tensor)
    }
}

/// Per-sample class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(Vec<u32>);

impl LabelVector {
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label vector"));
        }
        Ok(LabelVector(labels))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks every label against a head with `classes` outputs.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.0.iter().position(|&l| l as usize >= classes) {
            Some(row) => Err(Error::LabelOutOfRange {
                row,
                label: self.0[row],
                classes,
            }),
            None => Ok(()),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::u32(vec![self.0.len() as u64], self.0.clone()).expect("non-empty labels")
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        match tensor.into_parts() {
            (shape, TensorData::U32(v)) if shape.len() == 1 => Self::new(v),
            (shape, data) => Err(Error::WrongKind {
                expected: "1-D u32 label vector",
                found: format!("{} tensor of shape {shape:?}", data.dtype().name()),
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor(read_tensor(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensor(path, &self.to_tensor())
    }
}

/// Per-sample OOD scores, higher means more in-distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f32>);

impl ScoreVector {
    pub fn new(scores: Vec<f32>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("score vector"));
        }
        super::check_finite(&scores)?;
        Ok(ScoreVector(scores))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::f32(vec![self.0.len() as u64], self.0.clone()).expect("validated scores")
    }

    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        match tensor.into_parts() {
            (shape, TensorData::F32(v)) if shape.len() == 1 => Self::new(v),
            (shape, data) => Err(Error::WrongKind {
                expected: "1-D f32 score vector",
                found: format!("{} tensor of shape {shape:?}", data.dtype().name()),
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor(read_tensor(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensor(path, &self.to_tensor())
    }
}
