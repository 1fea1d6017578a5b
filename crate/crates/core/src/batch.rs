use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Result, ScoreError};
use crate::setfuncs::ClassPartition;

/// The ground set: `n` embedding vectors of dimension `d`, each carrying a
/// class label and an opaque identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    vectors: Array2<f64>,
    labels: Vec<usize>,
    ids: Vec<String>,
}

impl EmbeddingBatch {
    pub fn new(vectors: Array2<f64>, labels: Vec<usize>, ids: Vec<String>) -> Result<Self> {
        let (n, d) = vectors.dim();
        if n == 0 {
            return Err(ScoreError::EmptyGroundSet);
        }
        if d == 0 {
            return Err(ScoreError::InvalidBatch("embedding dimension is zero".into()));
        }
        if labels.len() != n || ids.len() != n {
            return Err(ScoreError::InvalidBatch(format!(
                "{n} vectors but {} labels and {} ids",
                labels.len(),
                ids.len()
            )));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(ScoreError::InvalidBatch(format!(
                "non-finite coordinate in row {}",
                pos / d
            )));
        }
        Ok(Self { vectors, labels, ids })
    }

    /// Batch with ids `"0".."n-1"`.
    pub fn with_default_ids(vectors: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let ids = (0..labels.len()).map(|i| i.to_string()).collect();
        Self::new(vectors, labels, ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn num_classes(&self) -> usize {
        self.classes().len()
    }

    /// Member indices per label, ascending within each class.
    pub fn class_members(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            out.entry(l).or_default().push(i);
        }
        out
    }

    pub fn partition(&self) -> ClassPartition {
        ClassPartition::from_labels(&self.labels)
    }

    /// Same labels and ids with replacement vectors of any dimension.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        Self::new(vectors, self.labels.clone(), self.ids.clone())
    }

    /// Rows reordered so that row `k` of the result is row `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(ScoreError::InvalidParameter("permutation length mismatch".into()));
        }
        let vectors = self.vectors.select(Axis(0), order);
        let labels = order.iter().map(|&i| self.labels[i]).collect();
        let ids = order.iter().map(|&i| self.ids[i].clone()).collect();
        Self::new(vectors, labels, ids)
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let vectors = self.vectors.select(Axis(0), rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        let ids = rows.iter().map(|&i| self.ids[i].clone()).collect();
        Self::new(vectors, labels, ids)
    }

    pub fn relabeled(&self, map: impl Fn(usize) -> usize) -> Result<Self> {
        let labels = self.labels.iter().map(|&l| map(l)).collect();
        Self::new(self.vectors.clone(), labels, self.ids.clone())
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        self.class_members().into_iter().map(|(k, v)| (k, v.len())).collect()
    }
}
