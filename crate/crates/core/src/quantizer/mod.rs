//! Hierarchical semantic IDs from item embeddings.
//!
//! Residual k-means builds one codebook per level on the residual stream.
//! [`rqkp`] refines those codebooks through an affine encoder with a residual
//! connection and an affine decoder. [`metrics`] scores a code assignment.

pub mod io;
pub mod kmeans;
pub mod metrics;
pub mod rq;
pub mod rqkp;

use std::collections::HashMap;
use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{GprError, Result};
use crate::rng;
use rand::seq::SliceRandom;

pub use kmeans::{kmeans_fit, kmeans_fit_with, KMeansConfig, KMeansFit};
pub use metrics::{metric_collision, metric_cur_l1, metric_pas, Assignments};
pub use rq::{rq_encode, Codebook};
pub use rqkp::{
    rqkp_fit, rqkp_gradients, rqkp_init, rqkp_init_with, rqkp_train_step, CodebookInit, RqkpFitConfig, RqkpGradients,
    RqkpLoss, RqkpModel,
};

/// An L-level semantic ID, coarse to fine.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct CodePath(pub Vec<u32>);

impl CodePath {
    pub fn new(codes: Vec<u32>) -> Self {
        CodePath(codes)
    }

    pub fn codes(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn level1(&self) -> Option<u32> {
        self.0.first().copied()
    }

    /// Checks the path length and per-level ranges against codebook sizes.
    pub fn validate(&self, level_sizes: &[usize]) -> Result<()> {
        if self.0.len() != level_sizes.len() {
            return Err(GprError::invalid(format!(
                "code path {self} has {} levels, expected {}",
                self.0.len(),
                level_sizes.len()
            )));
        }
        for (level, (&code, &size)) in self.0.iter().zip(level_sizes).enumerate() {
            if code as usize >= size {
                return Err(GprError::invalid(format!(
                    "code {code} at level {level} of {self} exceeds codebook size {size}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for CodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl From<Vec<u32>> for CodePath {
    fn from(codes: Vec<u32>) -> Self {
        CodePath(codes)
    }
}

/// Item embeddings keyed by opaque item id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingCorpus {
    ids: Vec<String>,
    vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingCorpus {
    pub fn new(ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(GprError::invalid(format!(
                "{} ids for {} vectors",
                ids.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(GprError::invalid("embedding dimension must be positive"));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(GprError::invalid(format!(
                "non-finite component in item {}",
                ids[pos / vectors.ncols()]
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(GprError::invalid(format!("duplicate item id {id}")));
            }
        }
        Ok(EmbeddingCorpus { ids, vectors, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn vector(&self, id: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(id).map(|&i| self.vectors.row(i))
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    /// Selects rows by position, preserving the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let ids = rows.iter().map(|&r| self.ids[r].clone()).collect();
        EmbeddingCorpus::new(ids, self.vectors.select(Axis(0), rows))
    }

    /// Seeded shuffle split into (train, test); `train_fraction` of the items go to train.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(GprError::invalid("train fraction must lie in [0, 1]"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::seeded(seed));
        let n_train = (self.len() as f64 * train_fraction).round() as usize;
        let (train, test) = order.split_at(n_train);
        Ok((self.subset(train)?, self.subset(test)?))
    }
}

/// Squared Euclidean distance.
pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest row of `centroids` to `v`; ties go to the lowest index.
pub(crate) fn nearest(centroids: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.outer_iter().enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}
