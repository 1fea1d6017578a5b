//! Objective evaluation: per-class terms `L(A_k)` and the total
//! `L = sum_k L(A_k)` for every supported objective.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Result, ScoreError};
use crate::kernels::{DistanceMatrix, KernelSpec, SimilarityMatrix};
use crate::objectives::Prepared;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "triplet")]
    Triplet,
    #[serde(rename = "n-pairs")]
    NPairs,
    #[serde(rename = "opl")]
    Opl,
    #[serde(rename = "snn")]
    Snn,
    #[serde(rename = "supcon")]
    SupCon,
    #[serde(rename = "submod-triplet")]
    SubmodTriplet,
    #[serde(rename = "submod-snn")]
    SubmodSnn,
    #[serde(rename = "submod-supcon")]
    SubmodSupCon,
    #[serde(rename = "gc-sf")]
    GcSf,
    #[serde(rename = "gc-cf")]
    GcCf,
    #[serde(rename = "logdet-sf")]
    LogDetSf,
    #[serde(rename = "logdet-cf")]
    LogDetCf,
    #[serde(rename = "fl")]
    Fl,
}

impl Objective {
    pub const ALL: [Objective; 13] = [
        Objective::Triplet,
        Objective::NPairs,
        Objective::Opl,
        Objective::Snn,
        Objective::SupCon,
        Objective::SubmodTriplet,
        Objective::SubmodSnn,
        Objective::SubmodSupCon,
        Objective::GcSf,
        Objective::GcCf,
        Objective::LogDetSf,
        Objective::LogDetCf,
        Objective::Fl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Triplet => "triplet",
            Objective::NPairs => "n-pairs",
            Objective::Opl => "opl",
            Objective::Snn => "snn",
            Objective::SupCon => "supcon",
            Objective::SubmodTriplet => "submod-triplet",
            Objective::SubmodSnn => "submod-snn",
            Objective::SubmodSupCon => "submod-supcon",
            Objective::GcSf => "gc-sf",
            Objective::GcCf => "gc-cf",
            Objective::LogDetSf => "logdet-sf",
            Objective::LogDetCf => "logdet-cf",
            Objective::Fl => "fl",
        }
    }

    /// Objectives whose terms read Euclidean distances `D_ij`.
    pub fn uses_distance(self) -> bool {
        matches!(self, Objective::Triplet | Objective::SubmodSnn)
    }

    /// Whether the objective is expected to be submodular.
    pub fn claimed_submodular(self) -> bool {
        !matches!(self, Objective::Triplet | Objective::Snn | Objective::SupCon)
    }

    fn is_graph_cut(self) -> bool {
        matches!(self, Objective::GcSf | Objective::GcCf)
    }

    fn is_log_det(self) -> bool {
        matches!(self, Objective::LogDetSf | Objective::LogDetCf)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = match key.as_str() {
            "npairs" => "n-pairs",
            "sup-con" => "supcon",
            k => k,
        };
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == key)
            .ok_or_else(|| ScoreError::InvalidParameter(format!("unknown objective {s:?}")))
    }
}

/// Total information (`S_f`) or total correlation (`C_f`) form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Sf,
    #[default]
    Cf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub objective: Objective,
    /// Graph-cut and log-determinant weight.
    pub lambda: f64,
    /// Triplet margin.
    pub margin: f64,
    pub kernel: KernelSpec,
    /// Facility location reports the `C_f` value by default; `S_f` adds `|V|`.
    #[serde(default)]
    pub fl_form: Variant,
    /// Return all-zero facility-location terms on single-class batches
    /// instead of failing.
    #[serde(default)]
    pub allow_single_class: bool,
}

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_MARGIN: f64 = 0.2;

impl LossConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            lambda: DEFAULT_LAMBDA,
            margin: DEFAULT_MARGIN,
            kernel: KernelSpec::Cosine,
            fl_form: Variant::Cf,
            allow_single_class: false,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.is_graph_cut() && !(self.lambda >= 1.0) {
            return Err(ScoreError::LambdaBelowOne(self.lambda));
        }
        if self.objective.is_log_det() && !(self.lambda > 0.0) {
            return Err(ScoreError::NonPositiveLambda(self.lambda));
        }
        if !(self.margin >= 0.0) {
            return Err(ScoreError::NegativeMargin(self.margin));
        }
        if let KernelSpec::Rbf { bandwidth } = self.kernel {
            KernelSpec::rbf(bandwidth)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossResult {
    pub total: f64,
    pub per_class: BTreeMap<usize, f64>,
    pub objective: LossConfig,
}

impl LossResult {
    pub(crate) fn from_terms(per_class: BTreeMap<usize, f64>, objective: LossConfig) -> Self {
        // Sequential reduction in label order.
        let total = per_class.values().fold(0.0, |acc, v| acc + v);
        Self { total, per_class, objective }
    }
}

fn degenerate(objective: Objective, reason: impl Into<String>) -> ScoreError {
    ScoreError::DegenerateBatch { objective, reason: reason.into() }
}

/// Checks the batch-shape preconditions of `config.objective`. Returns
/// `Ok(true)` when the facility-location single-class opt-in applies.
pub(crate) fn check_preconditions(labels: &[usize], config: &LossConfig) -> Result<bool> {
    config.validate()?;
    if labels.is_empty() {
        return Err(ScoreError::EmptyGroundSet);
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let classes = counts.len();
    let obj = config.objective;
    match obj {
        Objective::Fl => {
            if classes < 2 {
                if config.allow_single_class {
                    return Ok(true);
                }
                return Err(ScoreError::SingleClassBatch);
            }
        }
        Objective::GcSf | Objective::GcCf | Objective::LogDetSf | Objective::LogDetCf => {}
        Objective::Triplet | Objective::Snn => {
            if classes < 2 {
                return Err(degenerate(obj, "needs at least two classes"));
            }
            if let Some((c, _)) = counts.iter().find(|(_, &m)| m < 2) {
                return Err(degenerate(obj, format!("class {c} has no positive pair for its anchor")));
            }
        }
        _ => {
            if classes < 2 {
                return Err(degenerate(obj, "needs at least two classes"));
            }
        }
    }
    Ok(false)
}

pub(crate) fn per_class_terms(
    labels: &[usize],
    config: &LossConfig,
    prepared: &Prepared,
    mut up: Option<&mut crate::objectives::Upstream>,
) -> Result<BTreeMap<usize, f64>> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut out = BTreeMap::new();
    for label in classes {
        let mask: Vec<bool> = labels.iter().map(|&l| l == label).collect();
        let v = prepared.term(config, &mask, up.as_deref_mut())?;
        if !v.is_finite() {
            return Err(degenerate(
                config.objective,
                format!("term for class {label} is not finite ({v})"),
            ));
        }
        out.insert(label, v);
    }
    Ok(out)
}

fn zero_terms(labels: &[usize], config: &LossConfig) -> LossResult {
    let per_class = labels.iter().map(|&c| (c, 0.0)).collect();
    LossResult::from_terms(per_class, *config)
}

fn evaluate(batch: &EmbeddingBatch, config: &LossConfig) -> Result<LossResult> {
    if check_preconditions(batch.labels(), config)? {
        return Ok(zero_terms(batch.labels(), config));
    }
    let prepared = Prepared::new(batch, config)?;
    let per_class = per_class_terms(batch.labels(), config, &prepared, None)?;
    Ok(LossResult::from_terms(per_class, *config))
}

/// Evaluates `config.objective` on precomputed kernel matrices. `dist` is
/// required for the distance-based objectives (triplet, submod-snn); the
/// kernel recorded in `sim` overrides `config.kernel`.
pub fn total_loss_from_matrices(
    sim: &SimilarityMatrix,
    dist: Option<&DistanceMatrix>,
    labels: &[usize],
    config: &LossConfig,
) -> Result<LossResult> {
    let config = LossConfig { kernel: sim.kind, ..*config };
    let n = sim.entries.nrows();
    if sim.entries.ncols() != n || labels.len() != n {
        return Err(ScoreError::InvalidParameter(format!(
            "similarity matrix is {:?} but {} labels were given",
            sim.entries.dim(),
            labels.len()
        )));
    }
    if config.objective.uses_distance() && dist.map(|d| d.entries.dim()) != Some((n, n)) {
        return Err(ScoreError::InvalidParameter(format!(
            "{} needs an {n}x{n} distance matrix",
            config.objective
        )));
    }
    if check_preconditions(labels, &config)? {
        return Ok(zero_terms(labels, &config));
    }
    let prepared = Prepared::from_matrices(sim.clone(), dist.cloned(), &config)?;
    let per_class = per_class_terms(labels, &config, &prepared, None)?;
    Ok(LossResult::from_terms(per_class, config))
}

fn with_objective(config: &LossConfig, objective: Objective) -> LossConfig {
    LossConfig { objective, ..*config }
}

/// Facility location; `config.fl_form` selects the reported form.
pub fn loss_fl(batch: &EmbeddingBatch, config: &LossConfig) -> Result<LossResult> {
    evaluate(batch, &with_objective(config, Objective::Fl))
}

pub fn loss_gc(batch: &EmbeddingBatch, config: &LossConfig, variant: Variant) -> Result<LossResult> {
    let obj = match variant {
        Variant::Sf => Objective::GcSf,
        Variant::Cf => Objective::GcCf,
    };
    evaluate(batch, &with_objective(config, obj))
}

pub fn loss_logdet(batch: &EmbeddingBatch, config: &LossConfig, variant: Variant) -> Result<LossResult> {
    let obj = match variant {
        Variant::Sf => Objective::LogDetSf,
        Variant::Cf => Objective::LogDetCf,
    };
    evaluate(batch, &with_objective(config, obj))
}

/// Triplet, n-pairs, OPL, SNN or SupCon, selected by `config.objective`.
pub fn loss_baseline(batch: &EmbeddingBatch, config: &LossConfig) -> Result<LossResult> {
    match config.objective {
        Objective::Triplet | Objective::NPairs | Objective::Opl | Objective::Snn | Objective::SupCon => {
            evaluate(batch, config)
        }
        other => Err(ScoreError::InvalidParameter(format!("{other} is not a baseline objective"))),
    }
}

/// Submod-Triplet, Submod-SNN or Submod-SupCon, selected by `config.objective`.
pub fn loss_submod_variant(batch: &EmbeddingBatch, config: &LossConfig) -> Result<LossResult> {
    match config.objective {
        Objective::SubmodTriplet | Objective::SubmodSnn | Objective::SubmodSupCon => {
            evaluate(batch, config)
        }
        other => Err(ScoreError::InvalidParameter(format!("{other} is not a submodular variant"))),
    }
}

pub fn total_loss(batch: &EmbeddingBatch, config: &LossConfig) -> Result<LossResult> {
    evaluate(batch, config)
}
