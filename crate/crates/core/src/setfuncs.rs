//! Submodular set functions over subsets of the ground set, and the total
//! information / total correlation combinators built from them.
//!
//! `S_f(A_1..A_C) = sum_k f(A_k)` and `C_f = S_f - f(A_1 u .. u A_C)`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScoreError};
use crate::kernels::SimilarityMatrix;
use crate::linalg;

/// Disjoint nonempty index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    sets: Vec<Vec<usize>>,
}

impl ClassPartition {
    pub fn new(sets: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for (k, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(ScoreError::InvalidPartition(format!("set {k} is empty")));
            }
            for &i in set {
                if i >= n {
                    return Err(ScoreError::InvalidPartition(format!(
                        "index {i} outside ground set of size {n}"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(ScoreError::InvalidPartition(format!("index {i} appears twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ScoreError::InvalidPartition(format!("index {i} is not covered")));
        }
        Ok(Self { sets })
    }

    /// One set per distinct label, in ascending label order.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let sets = classes
            .iter()
            .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect();
        Self { sets }
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn ground_set_size(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

/// How the graph-cut set function splits cross- and within-set similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphCutForm {
    /// `lambda * sum_{i in A, j in V\A} S_ij`
    Cut,
    /// `sum_{i in A, j in V\A} S_ij - lambda * sum_{i,j in A} S_ij`
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetFunctionKind {
    /// `f(A) = sum_{i in V} max_{j in A} S_ij`, with `f(empty) = 0`.
    FacilityLocation,
    GraphCut { lambda: f64, form: GraphCutForm },
    /// `f(A) = log det(S_A + lambda I)`.
    LogDet { lambda: f64 },
}

impl SetFunctionKind {
    pub fn graph_cut(lambda: f64, form: GraphCutForm) -> Result<Self> {
        if !(lambda >= 1.0) {
            return Err(ScoreError::LambdaBelowOne(lambda));
        }
        Ok(SetFunctionKind::GraphCut { lambda, form })
    }

    pub fn log_det(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(ScoreError::NonPositiveLambda(lambda));
        }
        Ok(SetFunctionKind::LogDet { lambda })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SetFunctionKind::FacilityLocation => Ok(()),
            SetFunctionKind::GraphCut { lambda, form } => Self::graph_cut(lambda, form).map(drop),
            SetFunctionKind::LogDet { lambda } => Self::log_det(lambda).map(drop),
        }
    }
}

fn membership(n: usize, subset: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &i in subset {
        if i >= n {
            return Err(ScoreError::InvalidParameter(format!(
                "index {i} outside ground set of size {n}"
            )));
        }
        mask[i] = true;
    }
    Ok(mask)
}

/// Evaluates `f(A)` for an arbitrary index set `A` (duplicates ignored).
pub fn eval_set_function(kind: SetFunctionKind, sim: &SimilarityMatrix, subset: &[usize]) -> Result<f64> {
    kind.validate()?;
    let s = &sim.entries;
    let n = s.nrows();
    if n == 0 {
        return Err(ScoreError::EmptyGroundSet);
    }
    let mask = membership(n, subset)?;
    let members: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    match kind {
        SetFunctionKind::FacilityLocation => {
            if members.is_empty() {
                return Ok(0.0);
            }
            Ok((0..n)
                .map(|i| members.iter().map(|&j| s[[i, j]]).fold(f64::NEG_INFINITY, f64::max))
                .sum())
        }
        SetFunctionKind::GraphCut { lambda, form } => {
            let mut cross = 0.0;
            let mut within = 0.0;
            for &i in &members {
                for j in 0..n {
                    if mask[j] {
                        within += s[[i, j]];
                    } else {
                        cross += s[[i, j]];
                    }
                }
            }
            Ok(match form {
                GraphCutForm::Cut => lambda * cross,
                GraphCutForm::Split => cross - lambda * within,
            })
        }
        SetFunctionKind::LogDet { lambda } => {
            let k = members.len();
            if k == 0 {
                return Ok(0.0);
            }
            let mut sub = Array2::<f64>::zeros((k, k));
            for (a, &i) in members.iter().enumerate() {
                for (b, &j) in members.iter().enumerate() {
                    sub[[a, b]] = s[[i, j]];
                }
                sub[[a, a]] += lambda;
            }
            let l = linalg::cholesky(&sub)?;
            Ok(linalg::logdet_from_cholesky(&l))
        }
    }
}

/// `S_f = sum_k f(A_k)`.
pub fn total_information(
    kind: SetFunctionKind,
    sim: &SimilarityMatrix,
    partition: &ClassPartition,
) -> Result<f64> {
    check_partition(sim, partition)?;
    let mut total = 0.0;
    for set in partition.sets() {
        total += eval_set_function(kind, sim, set)?;
    }
    Ok(total)
}

/// `C_f = sum_k f(A_k) - f(V)`.
pub fn total_correlation(
    kind: SetFunctionKind,
    sim: &SimilarityMatrix,
    partition: &ClassPartition,
) -> Result<f64> {
    let info = total_information(kind, sim, partition)?;
    let all: Vec<usize> = (0..sim.entries.nrows()).collect();
    Ok(info - eval_set_function(kind, sim, &all)?)
}

fn check_partition(sim: &SimilarityMatrix, partition: &ClassPartition) -> Result<()> {
    let n = sim.entries.nrows();
    if n == 0 {
        return Err(ScoreError::EmptyGroundSet);
    }
    // Re-validate: a partition built for a different ground set is a caller bug.
    ClassPartition::new(partition.sets().to_vec(), n).map(drop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sim(entries: Array2<f64>) -> SimilarityMatrix {
        SimilarityMatrix { entries, kind: KernelSpec::Cosine }
    }

    /// a, b, c, d with the cross entries used throughout the hand examples.
    fn four_point() -> SimilarityMatrix {
        sim(array![
            [1.0, 0.9, 0.2, 0.3],
            [0.9, 1.0, 0.1, 0.4],
            [0.2, 0.1, 1.0, 0.5],
            [0.3, 0.4, 0.5, 1.0],
        ])
    }

    #[test]
    fn logdet_of_identity_block() {
        let s = sim(Array2::eye(3));
        let v = eval_set_function(SetFunctionKind::LogDet { lambda: 1.0 }, &s, &[0, 2]).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn facility_location_of_full_set_is_n() {
        let s = four_point();
        let v = eval_set_function(SetFunctionKind::FacilityLocation, &s, &[0, 1, 2, 3]).unwrap();
        assert_abs_diff_eq!(v, 4.0, epsilon = 1e-15);
        assert_eq!(eval_set_function(SetFunctionKind::FacilityLocation, &s, &[]).unwrap(), 0.0);
    }

    #[test]
    fn graph_cut_cross_term() {
        let s = four_point();
        let kind = SetFunctionKind::graph_cut(1.0, GraphCutForm::Cut).unwrap();
        assert_abs_diff_eq!(eval_set_function(kind, &s, &[0, 1]).unwrap(), 1.0, epsilon = 1e-12);
        let split = SetFunctionKind::graph_cut(1.0, GraphCutForm::Split).unwrap();
        assert_abs_diff_eq!(eval_set_function(split, &s, &[0, 1]).unwrap(), -2.8, epsilon = 1e-12);
    }

    #[test]
    fn lambda_bounds_are_enforced() {
        assert_eq!(
            SetFunctionKind::graph_cut(0.5, GraphCutForm::Cut),
            Err(ScoreError::LambdaBelowOne(0.5))
        );
        assert!(SetFunctionKind::log_det(0.0).is_err());
        let s = four_point();
        let bad = SetFunctionKind::GraphCut { lambda: 0.9, form: GraphCutForm::Cut };
        assert!(eval_set_function(bad, &s, &[0]).is_err());
    }

    #[test]
    fn logdet_reports_non_pd() {
        // Indefinite "similarity" with a tiny regularizer.
        let s = sim(array![[1.0, 2.0], [2.0, 1.0]]);
        let r = eval_set_function(SetFunctionKind::LogDet { lambda: 1e-3 }, &s, &[0, 1]);
        assert!(matches!(r, Err(ScoreError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn total_information_of_singletons() {
        let s = sim(Array2::eye(2));
        let p = ClassPartition::new(vec![vec![0], vec![1]], 2).unwrap();
        let v = total_information(SetFunctionKind::LogDet { lambda: 1.0 }, &s, &p).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_set_has_zero_correlation() {
        let s = four_point();
        let p = ClassPartition::new(vec![vec![0, 1, 2, 3]], 4).unwrap();
        for kind in [
            SetFunctionKind::FacilityLocation,
            SetFunctionKind::LogDet { lambda: 1.0 },
            SetFunctionKind::GraphCut { lambda: 1.0, form: GraphCutForm::Split },
        ] {
            assert_eq!(total_correlation(kind, &s, &p).unwrap(), 0.0);
            let all = eval_set_function(kind, &s, &[0, 1, 2, 3]).unwrap();
            assert_eq!(total_information(kind, &s, &p).unwrap(), all);
        }
    }

    #[test]
    fn partition_validation() {
        assert!(ClassPartition::new(vec![vec![0], vec![0, 1]], 2).is_err());
        assert!(ClassPartition::new(vec![vec![0]], 2).is_err());
        assert!(ClassPartition::new(vec![vec![], vec![0, 1]], 2).is_err());
        assert!(ClassPartition::new(vec![vec![2]], 2).is_err());
        let p = ClassPartition::from_labels(&[2, 0, 2]);
        assert_eq!(p.sets(), &[vec![1], vec![0, 2]]);
    }
}
