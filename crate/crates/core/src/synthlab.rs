//! Synthetic datasets: the four-cluster K-sweep, longtail / step imbalanced
//! Gaussians, and the loss-versus-K sweep over them.
//!
//! The K schedule places four 2-D clusters at `(±1, ±1) * scale(K)` with
//! `scale(K) = 1 - K/5` for `K <= 4` and `scale(K) = -(K - 4)/3` for `K >= 5`.
//! Separation shrinks from K = 0 to K = 4 (scale 1 down to 0.2) and grows
//! again from K = 5 to K = 7 (|scale| 1/3 up to 1), with the clusters
//! reflected through the origin.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Result, ScoreError};
use crate::kernels::KernelSpec;
use crate::losses::{self, LossConfig, Objective};
use crate::rng::{derive_seed, GaussianSampler};

pub const MAX_K: usize = 7;
pub const DEFAULT_KS: [usize; 5] = [0, 2, 4, 5, 7];
pub const DEFAULT_SPREAD: f64 = 0.3;
pub const DEFAULT_POINTS_PER_CLUSTER: usize = 100;
/// Pairwise centroid distance of imbalanced datasets, in units of spread.
pub const DEFAULT_SEPARATION_FACTOR: f64 = 4.0;

/// Isotropic Gaussian clusters, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub centroids: Array2<f64>,
    pub spread: f64,
    pub counts: Vec<usize>,
    pub seed: u64,
}

impl ClusterSpec {
    pub fn classes(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() != self.classes() {
            return Err(ScoreError::InvalidParameter(format!(
                "{} centroids but {} class counts",
                self.classes(),
                self.counts.len()
            )));
        }
        if let Some(class) = self.counts.iter().position(|&c| c == 0) {
            return Err(ScoreError::EmptyClass { class });
        }
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(ScoreError::InvalidParameter(format!("spread must be positive, got {}", self.spread)));
        }
        Ok(())
    }

    /// Samples class by class; rows of class `k` are contiguous.
    pub fn sample(&self) -> Result<EmbeddingBatch> {
        self.validate()?;
        let n: usize = self.counts.iter().sum();
        let d = self.dim();
        let mut g = GaussianSampler::new(self.seed);
        let mut z = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        let mut row = 0;
        for (k, &count) in self.counts.iter().enumerate() {
            for i in 0..count {
                for c in 0..d {
                    z[[row, c]] = g.next_normal(self.centroids[[k, c]], self.spread);
                }
                labels.push(k);
                ids.push(format!("c{k}-{i}"));
                row += 1;
            }
        }
        EmbeddingBatch::new(z, labels, ids)
    }
}

pub fn k_scale(k: usize) -> Result<f64> {
    match k {
        0..=4 => Ok(1.0 - k as f64 / 5.0),
        5..=MAX_K => Ok(-((k - 4) as f64) / 3.0),
        _ => Err(ScoreError::BadK(k)),
    }
}

/// The four centroids for schedule value `k`.
pub fn k_centroids(k: usize) -> Result<Array2<f64>> {
    let s = k_scale(k)?;
    Ok(ndarray::array![[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]] * s)
}

pub fn make_k_dataset(k: usize, points_per_cluster: usize, spread: f64, seed: u64) -> Result<EmbeddingBatch> {
    ClusterSpec { centroids: k_centroids(k)?, spread, counts: vec![points_per_cluster; 4], seed }.sample()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImbalanceKind {
    /// Exponential decay: class `k` gets `round(base * decay^(k/(C-1)))`.
    Longtail,
    /// First half of the classes get `base`, the rest `round(base / ratio)`.
    Step,
}

impl std::str::FromStr for ImbalanceKind {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "longtail" => Ok(ImbalanceKind::Longtail),
            "step" => Ok(ImbalanceKind::Step),
            _ => Err(ScoreError::InvalidParameter(format!("unknown imbalance kind {s:?}"))),
        }
    }
}

pub fn imbalance_counts(kind: ImbalanceKind, classes: usize, base_count: usize, param: f64) -> Result<Vec<usize>> {
    if classes == 0 {
        return Err(ScoreError::InvalidParameter("at least one class is required".into()));
    }
    if base_count < classes {
        return Err(ScoreError::InvalidParameter(format!(
            "base count {base_count} is smaller than the class count {classes}"
        )));
    }
    let counts: Vec<usize> = match kind {
        ImbalanceKind::Longtail => {
            if !(param > 0.0 && param <= 1.0) {
                return Err(ScoreError::InvalidParameter(format!("decay must be in (0, 1], got {param}")));
            }
            (0..classes)
                .map(|k| {
                    let frac = if classes == 1 { 0.0 } else { k as f64 / (classes - 1) as f64 };
                    (base_count as f64 * param.powf(frac)).round() as usize
                })
                .collect()
        }
        ImbalanceKind::Step => {
            if !(param >= 1.0) {
                return Err(ScoreError::InvalidParameter(format!("step ratio must be >= 1, got {param}")));
            }
            let majority = classes - classes / 2;
            let minority = (base_count as f64 / param).round() as usize;
            (0..classes).map(|k| if k < majority { base_count } else { minority }).collect()
        }
    };
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(ScoreError::EmptyClass { class });
    }
    Ok(counts)
}

/// Parameters of an imbalanced Gaussian dataset. Centroids sit on scaled
/// coordinate axes so every pair is `separation` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalancedSpec {
    pub kind: ImbalanceKind,
    pub classes: usize,
    pub dim: usize,
    pub base_count: usize,
    /// Longtail decay in (0, 1] or step ratio >= 1.
    pub decay_or_ratio: f64,
    pub spread: f64,
    pub separation: f64,
    pub seed: u64,
}

impl ImbalancedSpec {
    pub fn cluster_spec(&self) -> Result<ClusterSpec> {
        if self.classes > self.dim {
            return Err(ScoreError::InvalidParameter(format!(
                "{} classes need at least {} dimensions for axis-aligned centroids",
                self.classes, self.classes
            )));
        }
        let counts = imbalance_counts(self.kind, self.classes, self.base_count, self.decay_or_ratio)?;
        let axis = self.separation / std::f64::consts::SQRT_2;
        let mut centroids = Array2::zeros((self.classes, self.dim));
        for k in 0..self.classes {
            centroids[[k, k]] = axis;
        }
        Ok(ClusterSpec { centroids, spread: self.spread, counts, seed: self.seed })
    }
}

pub fn make_imbalanced_dataset(spec: &ImbalancedSpec) -> Result<EmbeddingBatch> {
    spec.cluster_spec()?.sample()
}

/// Gaussian batch with labels `i % classes`, used by gradient checks.
pub fn random_batch(n: usize, d: usize, classes: usize, seed: u64) -> Result<EmbeddingBatch> {
    if classes == 0 || classes > n {
        return Err(ScoreError::InvalidParameter(format!("need 1 <= classes <= n, got {classes}")));
    }
    let z = GaussianSampler::new(seed).matrix(n, d);
    EmbeddingBatch::with_default_ids(z, (0..n).map(|i| i % classes).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub objective: Objective,
    pub kernel: KernelSpec,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub objectives: Vec<Objective>,
    pub kernels: Vec<KernelSpec>,
    pub ks: Vec<usize>,
    pub points_per_cluster: usize,
    pub spread: f64,
    /// Lambda and margin for the swept objectives.
    pub base: LossConfig,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            objectives: vec![Objective::Fl, Objective::GcCf],
            kernels: vec![KernelSpec::Cosine, KernelSpec::Rbf { bandwidth: 1.0 }],
            ks: DEFAULT_KS.to_vec(),
            points_per_cluster: DEFAULT_POINTS_PER_CLUSTER,
            spread: DEFAULT_SPREAD,
            base: LossConfig::new(Objective::Fl),
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() || self.kernels.is_empty() || self.ks.is_empty() {
            return Err(ScoreError::InvalidParameter("sweep grid has an empty axis".into()));
        }
        for &k in &self.ks {
            k_scale(k)?;
        }
        Ok(())
    }
}

/// Dataset seed for schedule value `k`; shared by every objective and kernel.
pub fn sweep_dataset_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, 101 * k as u64)
}

/// Rows ordered by (K, objective, kernel) in grid order.
pub fn k_sweep(grid: &SweepGrid, seed: u64) -> Result<SweepResult> {
    grid.validate()?;
    let datasets: Vec<EmbeddingBatch> = grid
        .ks
        .iter()
        .map(|&k| make_k_dataset(k, grid.points_per_cluster, grid.spread, sweep_dataset_seed(seed, k)))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for (ki, &k) in grid.ks.iter().enumerate() {
        for &objective in &grid.objectives {
            for &kernel in &grid.kernels {
                cells.push((ki, k, objective, kernel));
            }
        }
    }
    let rows = cells
        .into_par_iter()
        .map(|(ki, k, objective, kernel)| {
            let cfg = LossConfig { objective, kernel, ..grid.base };
            let loss = losses::total_loss(&datasets[ki], &cfg)?.total;
            Ok(SweepRow { k, objective, kernel, loss })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

/// Expected direction between two adjacent schedule values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub objective: Objective,
    pub kernel: KernelSpec,
    pub from_k: usize,
    pub to_k: usize,
    pub expect_increase: bool,
    pub votes_for: usize,
    pub votes_total: usize,
}

impl OrderingCheck {
    pub fn holds(&self) -> bool {
        2 * self.votes_for > self.votes_total
    }
}

/// Adjacent pairs with their expected direction: loss rises along 0→2→4
/// and falls along 4→5→7.
pub const ORDERING_PAIRS: [(usize, usize, bool); 4] = [(0, 2, true), (2, 4, true), (4, 5, false), (5, 7, false)];

/// Majority vote per adjacent pair over one sweep per seed.
pub fn ordering_checks(sweeps: &[SweepResult]) -> Vec<OrderingCheck> {
    let mut cells: BTreeMap<(Objective, String), Vec<BTreeMap<usize, f64>>> = BTreeMap::new();
    let mut kernels: BTreeMap<String, KernelSpec> = BTreeMap::new();
    for sweep in sweeps {
        let mut per_seed: BTreeMap<(Objective, String), BTreeMap<usize, f64>> = BTreeMap::new();
        for row in &sweep.rows {
            let key = row.kernel.to_string();
            kernels.insert(key.clone(), row.kernel);
            per_seed.entry((row.objective, key)).or_default().insert(row.k, row.loss);
        }
        for (key, losses) in per_seed {
            cells.entry(key).or_default().push(losses);
        }
    }
    let mut out = Vec::new();
    for ((objective, kernel_key), seeds) in cells {
        for (from_k, to_k, expect_increase) in ORDERING_PAIRS {
            let mut votes_for = 0;
            let mut votes_total = 0;
            for losses in &seeds {
                if let (Some(&a), Some(&b)) = (losses.get(&from_k), losses.get(&to_k)) {
                    votes_total += 1;
                    if (expect_increase && b > a) || (!expect_increase && b < a) {
                        votes_for += 1;
                    }
                }
            }
            if votes_total > 0 {
                out.push(OrderingCheck {
                    objective,
                    kernel: kernels[&kernel_key],
                    from_k,
                    to_k,
                    expect_increase,
                    votes_for,
                    votes_total,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_centroid_distance(c: &Array2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..c.nrows() {
            for j in (i + 1)..c.nrows() {
                let d = &c.row(i) - &c.row(j);
                best = best.min(d.dot(&d).sqrt());
            }
        }
        best
    }

    #[test]
    fn schedule_shrinks_then_grows() {
        let seps: Vec<f64> = DEFAULT_KS.iter().map(|&k| min_centroid_distance(&k_centroids(k).unwrap())).collect();
        assert!(seps[0] > seps[1] && seps[1] > seps[2]);
        assert!(seps[2] < seps[3] && seps[3] < seps[4]);
        // K = 0 is the widest point of the decreasing half; K = 4 the narrowest overall.
        let all: Vec<f64> = (0..=MAX_K).map(|k| min_centroid_distance(&k_centroids(k).unwrap())).collect();
        assert_eq!(all.iter().cloned().fold(f64::INFINITY, f64::min), all[4]);
        assert!((0..=4).all(|k| all[k] <= all[0]));
        assert_eq!(k_centroids(8), Err(ScoreError::BadK(8)));
    }

    #[test]
    fn k_dataset_is_deterministic() {
        let a = make_k_dataset(3, 20, 0.3, 42).unwrap();
        let b = make_k_dataset(3, 20, 0.3, 42).unwrap();
        assert_eq!(a, b);
        let c = make_k_dataset(3, 20, 0.3, 43).unwrap();
        assert_ne!(a.vectors(), c.vectors());
        assert_eq!(a.len(), 80);
        assert_eq!(a.class_counts().values().copied().collect::<Vec<_>>(), vec![20; 4]);
    }

    #[test]
    fn longtail_counts() {
        let c = imbalance_counts(ImbalanceKind::Longtail, 4, 600, 0.1).unwrap();
        assert_eq!(c, vec![600, 278, 129, 60]);
        let flat = imbalance_counts(ImbalanceKind::Longtail, 5, 100, 1.0).unwrap();
        assert_eq!(flat, vec![100; 5]);
    }

    #[test]
    fn step_counts() {
        let c = imbalance_counts(ImbalanceKind::Step, 4, 500, 10.0).unwrap();
        assert_eq!(c, vec![500, 500, 50, 50]);
    }

    #[test]
    fn imbalance_validation() {
        assert!(imbalance_counts(ImbalanceKind::Longtail, 4, 3, 0.1).is_err());
        assert!(imbalance_counts(ImbalanceKind::Longtail, 4, 600, 0.0).is_err());
        assert!(imbalance_counts(ImbalanceKind::Longtail, 4, 600, 1.5).is_err());
        assert!(imbalance_counts(ImbalanceKind::Step, 4, 500, 0.5).is_err());
        assert_eq!(
            imbalance_counts(ImbalanceKind::Longtail, 3, 4, 0.01),
            Err(ScoreError::EmptyClass { class: 1 })
        );
    }

    #[test]
    fn imbalanced_dataset_matches_schedule() {
        let spec = ImbalancedSpec {
            kind: ImbalanceKind::Longtail,
            classes: 4,
            dim: 10,
            base_count: 600,
            decay_or_ratio: 0.1,
            spread: 1.0,
            separation: 4.0,
            seed: 5,
        };
        let b = make_imbalanced_dataset(&spec).unwrap();
        assert_eq!(b.class_counts().values().copied().collect::<Vec<_>>(), vec![600, 278, 129, 60]);
        let c = spec.cluster_spec().unwrap().centroids;
        let d = &c.row(0) - &c.row(3);
        assert!((d.dot(&d).sqrt() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_sweep_has_one_row() {
        let grid = SweepGrid {
            objectives: vec![Objective::Fl],
            kernels: vec![KernelSpec::Cosine],
            ks: vec![2],
            points_per_cluster: 10,
            ..SweepGrid::default()
        };
        let r = k_sweep(&grid, 1).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].k, 2);
    }

    #[test]
    fn empty_grid_axis_is_rejected() {
        let grid = SweepGrid { objectives: vec![], ..SweepGrid::default() };
        assert!(k_sweep(&grid, 0).is_err());
        let grid = SweepGrid { ks: vec![9], ..SweepGrid::default() };
        assert_eq!(k_sweep(&grid, 0), Err(ScoreError::BadK(9)));
    }
}
