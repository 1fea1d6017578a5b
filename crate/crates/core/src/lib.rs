//! Submodular combinatorial loss functions over labeled embedding batches.
//!
//! The crate evaluates the facility-location, graph-cut and log-determinant
//! family of set-function losses (and the classic metric-learning objectives
//! they generalize), their analytic gradients, numerical submodularity
//! checks, synthetic cluster datasets, and a toy two-stage trainer.
//!
//! A batch of `n` embeddings is the ground set `V`; the indices sharing a
//! label form the class sets `A_k`. Every objective is a per-class term
//! `L(A_k)` and the total loss is `sum_k L(A_k)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod error;
pub mod formats;
pub mod grads;
pub mod kernels;
mod linalg;
pub mod losses;
mod objectives;
pub mod rng;
pub mod setfuncs;
pub mod submodcheck;
pub mod synthlab;
pub mod trainer;

pub use batch::EmbeddingBatch;
pub use error::{Result, ScoreError};
pub use grads::{finite_difference_gradient, grad_check, loss_gradient, GradCheckReport, GradientMatrix};
pub use kernels::{DistanceMatrix, KernelSpec, SimilarityMatrix};
pub use losses::{total_loss, LossConfig, LossResult, Objective, Variant};
pub use setfuncs::{ClassPartition, SetFunctionKind};
pub use submodcheck::{LatticeCheckResult, Verdict};
pub use synthlab::{ClusterSpec, ImbalanceKind, SweepResult, SweepRow};
pub use trainer::{ExtractorParams, TrainConfig, TrainReport};
