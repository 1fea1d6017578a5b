//! Two-stage toy training. Stage 1 fits a linear extractor `z = W x`
//! (optionally projected to the unit sphere) by plain gradient descent on a
//! combinatorial objective. Stage 2 freezes it and scores a nearest-centroid
//! classifier on held-out points.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Result, ScoreError};
use crate::grads;
use crate::kernels::{KernelSpec, ZERO_NORM};
use crate::losses::{self, LossConfig, Objective};
use crate::rng::{derive_seed, offsets, GaussianSampler};

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_STEPS: usize = 500;
pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_EVAL_FRACTION: f64 = 0.3;
pub const DEFAULT_OUTPUT_DIM: usize = 8;
/// Training kernel. RBF keeps every similarity positive on the unit sphere.
pub const DEFAULT_TRAIN_KERNEL: KernelSpec = KernelSpec::Rbf { bandwidth: 1.0 };

pub const STAGE2_NOTE: &str = "stage 2 classifier: nearest class centroid (Euclidean) in the frozen embedding space";

/// Linear extractor `W` of shape `D_p x D_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorParams {
    pub weights: Array2<f64>,
    pub normalize: bool,
}

impl ExtractorParams {
    pub fn new(weights: Array2<f64>, normalize: bool) -> Result<Self> {
        if weights.nrows() < 2 || weights.ncols() == 0 {
            return Err(ScoreError::InvalidParameter(format!(
                "extractor must be at least 2 x 1, got {} x {}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::InvalidParameter("extractor weights must be finite".into()));
        }
        Ok(Self { weights, normalize })
    }

    pub fn identity(dim: usize, normalize: bool) -> Result<Self> {
        Self::new(Array2::eye(dim), normalize)
    }

    /// Gaussian entries with variance `1 / D_in`.
    pub fn random(output_dim: usize, input_dim: usize, normalize: bool, seed: u64) -> Result<Self> {
        let scale = 1.0 / (input_dim.max(1) as f64).sqrt();
        Self::new(GaussianSampler::new(seed).matrix(output_dim, input_dim) * scale, normalize)
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn project(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        if x.ncols() != self.input_dim() {
            return Err(ScoreError::InvalidBatch(format!(
                "inputs have {} features, extractor expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut y = x.dot(&self.weights.t());
        let mut norms = Array1::ones(y.nrows());
        if self.normalize {
            for (i, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
                let norm = row.dot(&row).sqrt();
                if norm < ZERO_NORM {
                    return Err(ScoreError::ZeroVector { index: i });
                }
                row /= norm;
                norms[i] = norm;
            }
        }
        Ok((y, norms))
    }

    pub fn embed(&self, data: &EmbeddingBatch) -> Result<EmbeddingBatch> {
        let (z, _) = self.project(data.vectors())?;
        data.with_vectors(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub steps: usize,
    /// Stratified mini-batch size; the full training set when it is at least `n`.
    pub batch_size: usize,
    pub seed: u64,
    pub eval_fraction: f64,
    pub output_dim: usize,
    pub normalize: bool,
}

impl TrainConfig {
    pub fn new(objective: Objective, seed: u64) -> Self {
        Self {
            loss: LossConfig::new(objective).with_kernel(DEFAULT_TRAIN_KERNEL),
            learning_rate: DEFAULT_LEARNING_RATE,
            steps: DEFAULT_STEPS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            eval_fraction: DEFAULT_EVAL_FRACTION,
            output_dim: DEFAULT_OUTPUT_DIM,
            normalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(ScoreError::InvalidParameter(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(ScoreError::InvalidParameter("steps must be at least 1".into()));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(ScoreError::InvalidParameter(format!(
                "eval fraction must be in (0, 1), got {}",
                self.eval_fraction
            )));
        }
        if self.output_dim < 2 {
            return Err(ScoreError::InvalidParameter(format!(
                "output dimension must be at least 2, got {}",
                self.output_dim
            )));
        }
        Ok(())
    }

    pub fn initial_params(&self, input_dim: usize) -> Result<ExtractorParams> {
        ExtractorParams::random(self.output_dim, input_dim, self.normalize, derive_seed(self.seed, offsets::INIT))
    }
}

/// Stage-1 output: learned parameters and the mini-batch loss before each update.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub params: ExtractorParams,
    pub loss_curve: Vec<f64>,
}

/// Nearest-centroid metrics on held-out points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: Vec<usize>,
    pub accuracy: f64,
    pub per_class_recall: BTreeMap<usize, f64>,
    /// `confusion[i][j]`: eval points of `classes[i]` assigned to `classes[j]`.
    pub confusion: Vec<Vec<usize>>,
    /// Mean squared distance of training embeddings to their class centroid.
    pub intra_var: f64,
    /// Smallest pairwise distance between class centroids.
    pub inter_sep: f64,
    /// Recall of the class with the fewest training points.
    pub rare_class: usize,
    pub rare_class_recall: f64,
}

impl EvalReport {
    pub fn off_diagonal_mass(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let diag: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        (total - diag) as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub note: String,
    pub config: TrainConfig,
    pub loss_curve: Vec<f64>,
    /// Full training-set loss with the initial and the learned extractor.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Metrics of the untrained extractor, for reference.
    pub baseline: EvalReport,
    #[serde(flatten)]
    pub eval: EvalReport,
}

/// Per-class shuffled split; every class keeps at least one point on each side.
pub fn stratified_split(data: &EmbeddingBatch, eval_fraction: f64, seed: u64) -> Result<(EmbeddingBatch, EmbeddingBatch)> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(ScoreError::InvalidParameter(format!("eval fraction must be in (0, 1), got {eval_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_eval = vec![false; data.len()];
    for (class, members) in data.class_members() {
        if members.len() < 2 {
            return Err(ScoreError::InvalidPartition(format!(
                "class {class} has {} point(s); splitting needs at least 2",
                members.len()
            )));
        }
        let take = ((eval_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        for k in index::sample(&mut rng, members.len(), take) {
            is_eval[members[k]] = true;
        }
    }
    let train: Vec<usize> = (0..data.len()).filter(|&i| !is_eval[i]).collect();
    let eval: Vec<usize> = (0..data.len()).filter(|&i| is_eval[i]).collect();
    Ok((data.select(&train)?, data.select(&eval)?))
}

/// Rows for one step: each class contributes in proportion to its size,
/// with at least two rows where available.
fn sample_minibatch(members: &BTreeMap<usize, Vec<usize>>, n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut rows = Vec::with_capacity(size);
    for idx in members.values() {
        let quota = ((size as f64 * idx.len() as f64 / n as f64).round() as usize).max(2).min(idx.len());
        rows.extend(index::sample(rng, idx.len(), quota).into_iter().map(|k| idx[k]));
    }
    rows.sort_unstable();
    rows
}

/// `dL/dW` from `dL/dz` through `z = y / |y|`, `y = W x`.
fn weight_gradient(params: &ExtractorParams, x: &Array2<f64>, z: &Array2<f64>, norms: &Array1<f64>, dz: &Array2<f64>) -> Array2<f64> {
    let mut dy = dz.clone();
    if params.normalize {
        for ((mut g, zi), &norm) in dy.axis_iter_mut(Axis(0)).zip(z.axis_iter(Axis(0))).zip(norms) {
            let radial = g.dot(&zi);
            g.scaled_add(-radial, &zi);
            g /= norm;
        }
    }
    dy.t().dot(x)
}

pub fn train_stage1(data: &EmbeddingBatch, config: &TrainConfig) -> Result<Stage1Output> {
    config.validate()?;
    if data.num_classes() < 2 {
        return Err(ScoreError::SingleClassBatch);
    }
    train_from(data, config, config.initial_params(data.dim())?)
}

/// Gradient descent from explicit starting parameters.
pub fn train_from(data: &EmbeddingBatch, config: &TrainConfig, init: ExtractorParams) -> Result<Stage1Output> {
    config.validate()?;
    let members = data.class_members();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, offsets::MINIBATCH));
    let mut params = init;
    let mut loss_curve = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let rows = sample_minibatch(&members, data.len(), config.batch_size, &mut rng);
        let batch = data.select(&rows)?;
        let x = batch.vectors();
        let (z, norms) = params.project(x)?;
        let zb = batch.with_vectors(z)?;
        let (loss, grad) = grads::loss_and_gradient(&zb, &config.loss)?;
        if !loss.total.is_finite() {
            return Err(ScoreError::DivergedLoss { step });
        }
        loss_curve.push(loss.total);
        let dw = weight_gradient(&params, x, zb.vectors(), &norms, &grad.entries);
        params.weights.scaled_add(-config.learning_rate, &dw);
        if params.weights.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::DivergedLoss { step });
        }
    }
    Ok(Stage1Output { params, loss_curve })
}

fn centroids(z: &EmbeddingBatch) -> BTreeMap<usize, Array1<f64>> {
    z.class_members()
        .into_iter()
        .map(|(c, rows)| {
            let mut sum = Array1::<f64>::zeros(z.dim());
            for &r in &rows {
                sum += &z.vector(r);
            }
            (c, sum / rows.len() as f64)
        })
        .collect()
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest-centroid evaluation with centroids from `train`. Ties go to the
/// smaller label.
pub fn evaluate_stage2(params: &ExtractorParams, train: &EmbeddingBatch, eval: &EmbeddingBatch) -> Result<EvalReport> {
    let zt = params.embed(train)?;
    let ze = params.embed(eval)?;
    evaluate_embeddings(&zt, &ze)
}

/// Stage-2 metrics on already-embedded points.
pub fn evaluate_embeddings(train: &EmbeddingBatch, eval: &EmbeddingBatch) -> Result<EvalReport> {
    let cents = centroids(train);
    let classes: Vec<usize> = cents.keys().copied().collect();
    if let Some(&class) = eval.classes().iter().find(|c| !cents.contains_key(c)) {
        return Err(ScoreError::MissingClass { class });
    }
    let pos: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let c = classes.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for i in 0..eval.len() {
        let zi = eval.vector(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, cent) in cents.values().enumerate() {
            let d = sq_dist(zi, cent.view());
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        confusion[pos[&eval.labels()[i]]][best] += 1;
    }
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let accuracy = correct as f64 / eval.len() as f64;
    let mut per_class_recall = BTreeMap::new();
    for (k, &class) in classes.iter().enumerate() {
        let row: usize = confusion[k].iter().sum();
        if row > 0 {
            per_class_recall.insert(class, confusion[k][k] as f64 / row as f64);
        }
    }
    let mut intra = 0.0;
    for i in 0..train.len() {
        intra += sq_dist(train.vector(i), cents[&train.labels()[i]].view());
    }
    let intra_var = intra / train.len() as f64;
    let mut inter_sep = f64::INFINITY;
    for (a, ca) in &cents {
        for (b, cb) in &cents {
            if a < b {
                inter_sep = inter_sep.min(sq_dist(ca.view(), cb.view()).sqrt());
            }
        }
    }
    let counts = train.class_counts();
    let rare_class = counts.iter().min_by_key(|(_, &n)| n).map(|(&c, _)| c).expect("train data is nonempty");
    let rare_class_recall = per_class_recall.get(&rare_class).copied().unwrap_or(0.0);
    Ok(EvalReport { classes, accuracy, per_class_recall, confusion, intra_var, inter_sep, rare_class, rare_class_recall })
}

fn full_loss(params: &ExtractorParams, data: &EmbeddingBatch, loss: &LossConfig) -> Result<f64> {
    Ok(losses::total_loss(&params.embed(data)?, loss)?.total)
}

/// Split, train, and evaluate one configuration.
pub fn train_and_evaluate(data: &EmbeddingBatch, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let (train, eval) = stratified_split(data, config.eval_fraction, derive_seed(config.seed, offsets::SPLIT))?;
    if train.num_classes() < 2 {
        return Err(ScoreError::SingleClassBatch);
    }
    let init = config.initial_params(data.dim())?;
    let initial_loss = full_loss(&init, &train, &config.loss)?;
    let baseline = evaluate_stage2(&init, &train, &eval)?;
    let out = train_from(&train, config, init)?;
    let final_loss = full_loss(&out.params, &train, &config.loss)?;
    let eval_report = evaluate_stage2(&out.params, &train, &eval)?;
    Ok(TrainReport {
        note: STAGE2_NOTE.to_string(),
        config: *config,
        loss_curve: out.loss_curve,
        initial_loss,
        final_loss,
        baseline,
        eval: eval_report,
    })
}

/// One row of an objective comparison; `report` carries the failure if the
/// run could not complete.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonOutcome {
    pub label: String,
    pub config: TrainConfig,
    pub report: std::result::Result<TrainReport, ScoreError>,
}

/// Flat CSV row; metric cells are empty for failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub objective: String,
    pub accuracy: Option<f64>,
    pub rare_class_recall: Option<f64>,
    pub intra_var: Option<f64>,
    pub inter_sep: Option<f64>,
    pub final_loss: Option<f64>,
}

impl ComparisonOutcome {
    pub fn row(&self) -> ComparisonRow {
        let r = self.report.as_ref().ok();
        ComparisonRow {
            objective: self.label.clone(),
            accuracy: r.map(|r| r.eval.accuracy),
            rare_class_recall: r.map(|r| r.eval.rare_class_recall),
            intra_var: r.map(|r| r.eval.intra_var),
            inter_sep: r.map(|r| r.eval.inter_sep),
            final_loss: r.map(|r| r.final_loss),
        }
    }
}

/// Row labels: the objective name, suffixed with `@lambda` when the same
/// objective appears more than once.
pub fn comparison_labels(losses: &[LossConfig]) -> Vec<String> {
    let mut seen: BTreeMap<Objective, usize> = BTreeMap::new();
    for l in losses {
        *seen.entry(l.objective).or_default() += 1;
    }
    losses
        .iter()
        .map(|l| if seen[&l.objective] > 1 { format!("{}@{}", l.objective, l.lambda) } else { l.objective.to_string() })
        .collect()
}

/// Runs every loss configuration on the same data, split and seed. Runs are
/// independent and may execute in parallel; output order follows `losses`.
pub fn compare_objectives(losses: &[LossConfig], data: &EmbeddingBatch, base: &TrainConfig) -> Vec<ComparisonOutcome> {
    let labels = comparison_labels(losses);
    losses
        .par_iter()
        .zip(labels)
        .map(|(loss, label)| {
            let config = TrainConfig { loss: *loss, ..*base };
            ComparisonOutcome { label, config, report: train_and_evaluate(data, &config) }
        })
        .collect()
}
