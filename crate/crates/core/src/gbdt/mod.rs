//! Binary-classification gradient boosted trees.
//!
//! Every tree is a complete binary tree of the configured depth stored in heap
//! order: node `i` has children `2i + 1` (taken when `x[f] < t`) and `2i + 2`.
//! Leaves hold log-odds contributions with the learning rate already applied,
//! so a prediction is `sigmoid(base_score + sum of reached leaves)`.

mod io;
mod train;

pub use io::{load, save, FORMAT_TAG, FORMAT_VERSION};
pub use train::{root_split, train, train_with_history, SplitCandidate};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold used by nodes that could not be split: every finite value goes
/// left and the right subtree is zero padding.
pub const PASS_THROUGH_THRESHOLD: f32 = f32::MAX;

/// Log-odds clamp for the base score.
pub const MAX_BASE_SCORE: f64 = 10.0;

/// Random access to a (possibly virtual) row-major feature matrix.
///
/// Stage inputs and temporal cubes implement this lazily so inference never
/// materializes the full `rows x features` matrix.
pub trait RowSource: Sync {
    fn n_rows(&self) -> usize;
    fn n_features(&self) -> usize;
    fn value(&self, row: usize, feature: usize) -> f32;

    fn fill_row(&self, row: usize, out: &mut [f32]) {
        for (f, v) in out.iter_mut().enumerate() {
            *v = self.value(row, f);
        }
    }
}

/// Row-major `n_rows x n_features` matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_features: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(n_rows: usize, n_features: usize, data: Vec<f32>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidTrainingData("zero features".into()));
        }
        if data.len() != n_rows * n_features {
            return Err(Error::InvalidTrainingData(format!(
                "matrix data length {} != {n_rows} x {n_features}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrainingData(format!(
                "non-finite feature at row {}, column {}",
                i / n_features,
                i % n_features
            )));
        }
        Ok(Self {
            n_rows,
            n_features,
            data,
        })
    }

    /// Materializes every row of a [`RowSource`].
    pub fn from_source<R: RowSource + ?Sized>(src: &R) -> Result<Self> {
        let rows: Vec<usize> = (0..src.n_rows()).collect();
        Self::from_source_rows(src, &rows)
    }

    /// Materializes the selected rows of a [`RowSource`], in the given order.
    pub fn from_source_rows<R: RowSource + ?Sized>(src: &R, rows: &[usize]) -> Result<Self> {
        let d = src.n_features();
        let mut data = vec![0.0f32; rows.len() * d];
        data.par_chunks_mut(d.max(1))
            .zip(rows.par_iter())
            .for_each(|(out, &r)| src.fill_row(r, out));
        Self::new(rows.len(), d, data)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Appends the rows of `other`; feature counts must agree.
    pub fn append(&mut self, other: &DenseMatrix) -> Result<()> {
        if other.n_features != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: other.n_features,
            });
        }
        self.data.extend_from_slice(&other.data);
        self.n_rows += other.n_rows;
        Ok(())
    }
}

impl RowSource for DenseMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    fn value(&self, row: usize, feature: usize) -> f32 {
        self.data[row * self.n_features + feature]
    }

    fn fill_row(&self, row: usize, out: &mut [f32]) {
        out.copy_from_slice(self.row(row));
    }
}

/// Pixel sampling limits applied when building training matrices from maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingCaps {
    /// Upper bound on training pixels drawn from one frame.
    pub max_pixels_per_frame: usize,
    /// Negatives kept per positive; `0` disables the cap.
    pub max_negative_ratio: f64,
}

impl Default for SamplingCaps {
    fn default() -> Self {
        Self {
            max_pixels_per_frame: 256,
            max_negative_ratio: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub n_bins: usize,
    pub min_child_weight: f64,
    pub sampling: SamplingCaps,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            depth: 3,
            learning_rate: 0.1,
            l2_lambda: 1.0,
            n_bins: 256,
            min_child_weight: 1.0,
            sampling: SamplingCaps::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if !(2..=256).contains(&self.n_bins) {
            return Err(Error::InvalidConfig(format!(
                "n_bins must be in [2, 256], got {}",
                self.n_bins
            )));
        }
        if self.depth > 16 {
            return Err(Error::InvalidConfig(format!(
                "depth {} too large",
                self.depth
            )));
        }
        if !(self.learning_rate > 0.0)
            || !(self.l2_lambda >= 0.0)
            || !(self.min_child_weight >= 0.0)
        {
            return Err(Error::InvalidConfig(
                "learning_rate must be > 0; l2_lambda and min_child_weight >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One node of a tree, as exposed for inspection and serialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f32,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Trees are stored flattened: `internal_per_tree` split records followed by
/// `2^depth` leaves per tree.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    n_features: usize,
    depth: usize,
    base_score: f64,
    learning_rate: f64,
    features: Vec<u32>,
    thresholds: Vec<f32>,
    leaves: Vec<f64>,
}

#[inline]
pub(crate) fn sigmoid(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

impl GbdtModel {
    /// A model with no trees; predicts `sigmoid(base_score)` everywhere.
    pub fn constant(n_features: usize, depth: usize, base_score: f64) -> Self {
        Self {
            n_features,
            depth,
            base_score,
            learning_rate: 1.0,
            features: Vec::new(),
            thresholds: Vec::new(),
            leaves: Vec::new(),
        }
    }

    pub(crate) fn from_parts(
        n_features: usize,
        depth: usize,
        base_score: f64,
        learning_rate: f64,
        features: Vec<u32>,
        thresholds: Vec<f32>,
        leaves: Vec<f64>,
    ) -> Result<Self> {
        let internal = (1usize << depth) - 1;
        let n_leaves = 1usize << depth;
        if !leaves.len().is_multiple_of(n_leaves)
            || features.len() != leaves.len() / n_leaves * internal
            || thresholds.len() != features.len()
        {
            return Err(Error::MalformedModel("inconsistent tree storage".into()));
        }
        if let Some(f) = features.iter().find(|&&f| f as usize >= n_features) {
            return Err(Error::MalformedModel(format!(
                "feature index {f} >= n_features {n_features}"
            )));
        }
        if !base_score.is_finite()
            || thresholds.iter().any(|t| t.is_nan())
            || leaves.iter().any(|v| !v.is_finite())
        {
            return Err(Error::MalformedModel("non-finite model value".into()));
        }
        Ok(Self {
            n_features,
            depth,
            base_score,
            learning_rate,
            features,
            thresholds,
            leaves,
        })
    }

    /// Builds a model from explicit trees given in heap order (`2^depth - 1`
    /// `(feature, threshold)` splits and `2^depth` leaf values each).
    pub fn from_trees(
        n_features: usize,
        depth: usize,
        base_score: f64,
        trees: &[(Vec<(usize, f32)>, Vec<f64>)],
    ) -> Result<Self> {
        let mut features = Vec::new();
        let mut thresholds = Vec::new();
        let mut leaves = Vec::new();
        for (splits, values) in trees {
            if splits.len() != (1 << depth) - 1 || values.len() != 1 << depth {
                return Err(Error::MalformedModel(format!(
                    "tree is not complete at depth {depth}"
                )));
            }
            for &(f, t) in splits {
                features.push(f as u32);
                thresholds.push(t);
            }
            leaves.extend_from_slice(values);
        }
        Self::from_parts(
            n_features, depth, base_score, 1.0, features, thresholds, leaves,
        )
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn n_trees(&self) -> usize {
        self.leaves.len() >> self.depth
    }

    fn internal_per_tree(&self) -> usize {
        (1 << self.depth) - 1
    }

    /// Nodes of tree `t` in heap order.
    pub fn tree_nodes(&self, t: usize) -> Vec<TreeNode> {
        let internal = self.internal_per_tree();
        let n_leaves = 1usize << self.depth;
        let mut nodes = Vec::with_capacity(internal + n_leaves);
        for i in 0..internal {
            nodes.push(TreeNode::Internal {
                feature_index: self.features[t * internal + i] as usize,
                threshold: self.thresholds[t * internal + i],
                left: 2 * i + 1,
                right: 2 * i + 2,
            });
        }
        for j in 0..n_leaves {
            nodes.push(TreeNode::Leaf {
                value: self.leaves[t * n_leaves + j],
            });
        }
        nodes
    }

    /// Sum of leaf values plus base score for one row.
    #[inline]
    pub fn margin<R: RowSource + ?Sized>(&self, rows: &R, row: usize) -> f64 {
        let internal = self.internal_per_tree();
        let n_leaves = internal + 1;
        let mut sum = self.base_score;
        for t in 0..self.n_trees() {
            let feats = &self.features[t * internal..(t + 1) * internal];
            let thr = &self.thresholds[t * internal..(t + 1) * internal];
            let mut i = 0usize;
            for _ in 0..self.depth {
                let right = rows.value(row, feats[i] as usize) >= thr[i];
                i = 2 * i + 1 + right as usize;
            }
            sum += self.leaves[t * n_leaves + (i - internal)];
        }
        sum
    }

    /// Probability for a single feature vector.
    pub fn predict_one(&self, x: &[f32]) -> Result<f64> {
        let m = DenseMatrix::new(1, x.len(), x.to_vec())?;
        Ok(self.predict_rows(&m)?[0])
    }

    /// Probabilities for every row of `rows`, in row order.
    pub fn predict_rows<R: RowSource + ?Sized>(&self, rows: &R) -> Result<Vec<f64>> {
        if rows.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: rows.n_features(),
            });
        }
        Ok((0..rows.n_rows())
            .into_par_iter()
            .with_min_len(256)
            .map(|r| sigmoid(self.margin(rows, r)))
            .collect())
    }

    pub fn predict_batch(&self, features: &DenseMatrix) -> Result<Vec<f64>> {
        self.predict_rows(features)
    }
}
