//! Run configuration document. Every section is optional except the seed;
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use score_core::submodcheck::{self, DrawDomain};
use score_core::synthlab::{self, ImbalanceKind};
use score_core::trainer;
use score_core::{KernelSpec, Objective};

use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub check: CheckSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// The four-cluster K schedule in 2-D.
    KSchedule,
    Longtail,
    Step,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "k" | "k-schedule" => Ok(DatasetKind::KSchedule),
            "longtail" => Ok(DatasetKind::Longtail),
            "step" => Ok(DatasetKind::Step),
            _ => Err(format!("unknown dataset kind {s:?} (expected k-schedule, longtail or step)")),
        }
    }
}

impl DatasetKind {
    pub fn imbalance(self) -> Option<ImbalanceKind> {
        match self {
            DatasetKind::KSchedule => None,
            DatasetKind::Longtail => Some(ImbalanceKind::Longtail),
            DatasetKind::Step => Some(ImbalanceKind::Step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub classes: usize,
    pub dim: usize,
    pub base_count: usize,
    /// Longtail decay in (0, 1] or step ratio >= 1.
    pub decay_or_ratio: f64,
    pub spread: f64,
    /// Pairwise centroid distance for longtail / step data.
    pub separation: f64,
    /// Schedule value for k-schedule data.
    pub k: usize,
    pub points_per_cluster: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Longtail,
            classes: 4,
            dim: 10,
            base_count: 600,
            decay_or_ratio: 0.1,
            spread: 1.0,
            separation: 4.0,
            k: 0,
            points_per_cluster: synthlab::DEFAULT_POINTS_PER_CLUSTER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub objectives: Vec<Objective>,
    /// Every objective is run once per lambda.
    pub lambdas: Vec<f64>,
    pub margin: f64,
    pub kernel: KernelSpec,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            objectives: vec![Objective::Fl, Objective::GcCf, Objective::SupCon],
            lambdas: vec![1.0],
            margin: 0.2,
            kernel: trainer::DEFAULT_TRAIN_KERNEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_fraction: f64,
    pub output_dim: usize,
    pub normalize: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: trainer::DEFAULT_LEARNING_RATE,
            steps: trainer::DEFAULT_STEPS,
            batch_size: trainer::DEFAULT_BATCH_SIZE,
            eval_fraction: trainer::DEFAULT_EVAL_FRACTION,
            output_dim: trainer::DEFAULT_OUTPUT_DIM,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub objectives: Vec<Objective>,
    pub kernels: Vec<KernelSpec>,
    pub ks: Vec<usize>,
    /// One sweep per seed; empty means the run seed only.
    pub seeds: Vec<u64>,
    pub points_per_cluster: usize,
    pub spread: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let grid = synthlab::SweepGrid::default();
        Self {
            objectives: grid.objectives,
            kernels: grid.kernels,
            ks: grid.ks,
            seeds: Vec::new(),
            points_per_cluster: grid.points_per_cluster,
            spread: grid.spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub n: usize,
    /// Consistency draws for objectives expected to be submodular.
    pub trials: usize,
    /// Counterexample budget for objectives expected to violate.
    pub budget: usize,
    pub tolerance: f64,
    pub domain: DrawDomain,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self { n: 6, trials: 200, budget: 1000, tolerance: submodcheck::DEFAULT_TOLERANCE, domain: DrawDomain::NonNegative }
    }
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            dataset: DatasetSection::default(),
            loss: LossSection::default(),
            train: TrainSection::default(),
            sweep: SweepSection::default(),
            check: CheckSection::default(),
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&io::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::parse("{}").is_err());
        let c = RunConfig::parse(r#"{"seed": 3}"#).unwrap();
        assert_eq!(c, RunConfig::with_seed(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse(r#"{"seed": 1, "extra": 2}"#).is_err());
        assert!(RunConfig::parse(r#"{"seed": 1, "train": {"lr": 0.1}}"#).is_err());
    }

    #[test]
    fn sections_fill_missing_fields() {
        let c = RunConfig::parse(r#"{"seed": 1, "loss": {"objectives": ["gc-cf"], "lambdas": [0.5, 1.0]}}"#).unwrap();
        assert_eq!(c.loss.objectives, vec![Objective::GcCf]);
        assert_eq!(c.loss.lambdas, vec![0.5, 1.0]);
        assert_eq!(c.loss.margin, 0.2);
        assert_eq!(c.train, TrainSection::default());
    }

    #[test]
    fn kernels_parse_in_both_forms() {
        let c = RunConfig::parse(r#"{"seed": 1, "loss": {"kernel": {"kind": "rbf", "bandwidth": 0.5}}}"#).unwrap();
        assert_eq!(c.loss.kernel, KernelSpec::Rbf { bandwidth: 0.5 });
    }
}
