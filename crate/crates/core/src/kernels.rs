//! Pairwise similarity and distance matrices over an embedding batch, and
//! their derivatives with respect to the embeddings.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Result, ScoreError};

/// Norm below which an embedding counts as the zero vector.
pub const ZERO_NORM: f64 = 1e-12;

pub const DEFAULT_BANDWIDTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    #[default]
    Cosine,
    Rbf { bandwidth: f64 },
    NegEuclidean,
}

impl KernelSpec {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(ScoreError::NonPositiveBandwidth(bandwidth));
        }
        Ok(KernelSpec::Rbf { bandwidth })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Cosine => "cosine",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::NegEuclidean => "neg-euclidean",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { bandwidth } if *bandwidth != DEFAULT_BANDWIDTH => {
                write!(f, "rbf:{bandwidth}")
            }
            k => f.write_str(k.name()),
        }
    }
}

/// Accepts `cosine`, `rbf`, `rbf:<bandwidth>` and `neg-euclidean`.
impl FromStr for KernelSpec {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "cosine" | "cos" => Ok(KernelSpec::Cosine),
            "rbf" => Ok(KernelSpec::Rbf { bandwidth: DEFAULT_BANDWIDTH }),
            "neg-euclidean" => Ok(KernelSpec::NegEuclidean),
            _ => match s.strip_prefix("rbf:") {
                Some(bw) => {
                    let bw: f64 = bw.parse().map_err(|_| {
                        ScoreError::InvalidParameter(format!("bad RBF bandwidth in {s:?}"))
                    })?;
                    KernelSpec::rbf(bw)
                }
                None => Err(ScoreError::InvalidParameter(format!("unknown kernel {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub entries: Array2<f64>,
    pub kind: KernelSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub entries: Array2<f64>,
}

fn row_norms(batch: &EmbeddingBatch) -> Array1<f64> {
    batch.vectors().map_axis(Axis(1), |r| r.dot(&r).sqrt())
}

fn checked_norms(batch: &EmbeddingBatch) -> Result<Array1<f64>> {
    let norms = row_norms(batch);
    if let Some(index) = norms.iter().position(|&v| v < ZERO_NORM) {
        return Err(ScoreError::ZeroVector { index });
    }
    Ok(norms)
}

fn squared_distances(batch: &EmbeddingBatch) -> Array2<f64> {
    let z = batch.vectors();
    let n = z.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            out[[i, j]] = d2;
            out[[j, i]] = d2;
        }
    }
    out
}

pub fn cosine_similarity(batch: &EmbeddingBatch) -> Result<SimilarityMatrix> {
    let norms = checked_norms(batch)?;
    let unit = batch.vectors() / &norms.view().insert_axis(Axis(1));
    let mut s = unit.dot(&unit.t());
    let n = s.nrows();
    // The product above is symmetric only up to rounding; mirror the upper
    // triangle so downstream code can rely on exact symmetry.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = s[[i, j]].clamp(-1.0, 1.0);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
        s[[i, i]] = 1.0;
    }
    Ok(SimilarityMatrix { entries: s, kind: KernelSpec::Cosine })
}

pub fn rbf_similarity(batch: &EmbeddingBatch, bandwidth: f64) -> Result<SimilarityMatrix> {
    let kind = KernelSpec::rbf(bandwidth)?;
    let scale = 2.0 * bandwidth * bandwidth;
    let entries = squared_distances(batch).mapv(|d2| (-d2 / scale).exp());
    Ok(SimilarityMatrix { entries, kind })
}

pub fn euclidean_distance(batch: &EmbeddingBatch) -> DistanceMatrix {
    DistanceMatrix { entries: squared_distances(batch).mapv(f64::sqrt) }
}

pub fn similarity(batch: &EmbeddingBatch, kind: KernelSpec) -> Result<SimilarityMatrix> {
    match kind {
        KernelSpec::Cosine => cosine_similarity(batch),
        KernelSpec::Rbf { bandwidth } => rbf_similarity(batch, bandwidth),
        KernelSpec::NegEuclidean => Ok(SimilarityMatrix {
            entries: -euclidean_distance(batch).entries,
            kind,
        }),
    }
}

/// `(dS_ij/dz_i, dS_ij/dz_j)` for one kernel entry.
///
/// For `i == j` both the cosine and RBF diagonals are constant, so the pair
/// is zero. Euclidean-type entries at coincident points use the zero
/// subgradient.
pub fn kernel_gradient(
    batch: &EmbeddingBatch,
    kind: KernelSpec,
    i: usize,
    j: usize,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = batch.len();
    if i >= n || j >= n {
        return Err(ScoreError::InvalidParameter(format!("index out of range for n = {n}")));
    }
    let d = batch.dim();
    let zi = batch.vector(i);
    let zj = batch.vector(j);
    if i == j {
        if kind == KernelSpec::Cosine {
            checked_norms(batch)?;
        }
        return Ok((Array1::zeros(d), Array1::zeros(d)));
    }
    match kind {
        KernelSpec::Cosine => {
            let ni = zi.dot(&zi).sqrt();
            let nj = zj.dot(&zj).sqrt();
            if ni < ZERO_NORM {
                return Err(ScoreError::ZeroVector { index: i });
            }
            if nj < ZERO_NORM {
                return Err(ScoreError::ZeroVector { index: j });
            }
            let s = zi.dot(&zj) / (ni * nj);
            let gi = &zj / (ni * nj) - &zi * (s / (ni * ni));
            let gj = &zi / (ni * nj) - &zj * (s / (nj * nj));
            Ok((gi, gj))
        }
        KernelSpec::Rbf { bandwidth } => {
            KernelSpec::rbf(bandwidth)?;
            let diff = &zi - &zj;
            let s = (-diff.dot(&diff) / (2.0 * bandwidth * bandwidth)).exp();
            let gi = &diff * (-s / (bandwidth * bandwidth));
            let gj = -&gi;
            Ok((gi, gj))
        }
        KernelSpec::NegEuclidean => {
            let (gi, gj) = distance_gradient(batch, i, j);
            Ok((-gi, -gj))
        }
    }
}

/// `(dD_ij/dz_i, dD_ij/dz_j)` for the Euclidean distance.
pub fn distance_gradient(batch: &EmbeddingBatch, i: usize, j: usize) -> (Array1<f64>, Array1<f64>) {
    let diff = &batch.vector(i) - &batch.vector(j);
    let dist = diff.dot(&diff).sqrt();
    if dist == 0.0 {
        let z = Array1::zeros(batch.dim());
        return (z.clone(), z);
    }
    let gi = diff / dist;
    let gj = -&gi;
    (gi, gj)
}

/// Chains `upstream[i][j] = dL/dS_ij` (entries treated as independent) back
/// to `dL/dz`, returning an `n x d` matrix.
pub fn similarity_backward(
    batch: &EmbeddingBatch,
    sim: &SimilarityMatrix,
    upstream: &Array2<f64>,
) -> Result<Array2<f64>> {
    let z = batch.vectors();
    let sym = upstream + &upstream.t();
    match sim.kind {
        KernelSpec::Cosine => {
            let norms = checked_norms(batch)?;
            let unit = z / &norms.view().insert_axis(Axis(1));
            let weights = (&sym * &sim.entries).sum_axis(Axis(1));
            let mut g = sym.dot(&unit);
            for ((mut row, u), (&w, &nrm)) in g
                .axis_iter_mut(Axis(0))
                .zip(unit.axis_iter(Axis(0)))
                .zip(weights.iter().zip(norms.iter()))
            {
                row.scaled_add(-w, &u);
                row /= nrm;
            }
            Ok(g)
        }
        KernelSpec::Rbf { bandwidth } => {
            let w = &sym * &sim.entries;
            Ok(pairwise_pull(z, &w) * (-1.0 / (bandwidth * bandwidth)))
        }
        KernelSpec::NegEuclidean => {
            let dist = -&sim.entries;
            Ok(-distance_backward_with(z, &dist, &sym))
        }
    }
}

/// Chains `upstream[i][j] = dL/dD_ij` back to `dL/dz`.
pub fn distance_backward(
    batch: &EmbeddingBatch,
    dist: &DistanceMatrix,
    upstream: &Array2<f64>,
) -> Array2<f64> {
    let sym = upstream + &upstream.t();
    distance_backward_with(batch.vectors(), &dist.entries, &sym)
}

fn distance_backward_with(z: &Array2<f64>, dist: &Array2<f64>, sym: &Array2<f64>) -> Array2<f64> {
    let w = ndarray::Zip::from(sym)
        .and(dist)
        .map_collect(|&g, &d| if d > 0.0 { g / d } else { 0.0 });
    pairwise_pull(z, &w)
}

/// Row `i` of the result is `sum_j w_ij (z_i - z_j)`.
fn pairwise_pull(z: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let rowsum = w.sum_axis(Axis(1));
    let mut out = z * &rowsum.view().insert_axis(Axis(1));
    out -= &w.dot(z);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn batch(v: Array2<f64>) -> EmbeddingBatch {
        let n = v.nrows();
        EmbeddingBatch::with_default_ids(v, vec![0; n]).unwrap()
    }

    #[test]
    fn cosine_hand_values() {
        let b = batch(array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let s = cosine_similarity(&b).unwrap().entries;
        assert_eq!(s[[0, 1]], 1.0);
        assert_abs_diff_eq!(s[[0, 2]], 0.0);
        assert_abs_diff_eq!(s[[0, 3]], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        for i in 0..4 {
            assert_abs_diff_eq!(s[[i, i]], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let b = batch(array![[1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(cosine_similarity(&b), Err(ScoreError::ZeroVector { index: 1 }));
        assert!(matches!(
            kernel_gradient(&b, KernelSpec::Cosine, 0, 1),
            Err(ScoreError::ZeroVector { index: 1 })
        ));
    }

    #[test]
    fn rbf_hand_values() {
        let bw = 0.7;
        // squared distance 2 * bw^2 gives exp(-1)
        let b = batch(array![[0.0, 0.0], [bw * 2f64.sqrt(), 0.0], [0.0, 0.0]]);
        let s = rbf_similarity(&b, bw).unwrap().entries;
        assert_abs_diff_eq!(s[[0, 1]], (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(s[[0, 2]], 1.0);
        assert_eq!(s[[1, 1]], 1.0);
    }

    #[test]
    fn rbf_rejects_bad_bandwidth() {
        let b = batch(array![[0.0, 1.0]]);
        assert_eq!(rbf_similarity(&b, 0.0), Err(ScoreError::NonPositiveBandwidth(0.0)));
        assert!(rbf_similarity(&b, -1.0).is_err());
    }

    #[test]
    fn rbf_grows_toward_one_with_bandwidth() {
        let b = batch(array![[0.0, 0.0], [1.0, 2.0]]);
        let mut prev = 0.0;
        for bw in [0.5, 1.0, 2.0, 8.0, 64.0, 1024.0] {
            let v = rbf_similarity(&b, bw).unwrap().entries[[0, 1]];
            assert!(v > prev && v <= 1.0);
            prev = v;
        }
        assert!(1.0 - prev < 1e-5);
    }

    #[test]
    fn euclidean_hand_values() {
        let b = batch(array![[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]]);
        let d = euclidean_distance(&b).entries;
        assert_eq!(d[[0, 1]], 5.0);
        assert_eq!(d[[1, 0]], 5.0);
        assert_eq!(d[[0, 2]], 0.0);
    }

    #[test]
    fn cosine_gradient_of_orthogonal_units() {
        let b = batch(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let (gi, gj) = kernel_gradient(&b, KernelSpec::Cosine, 0, 1).unwrap();
        assert_eq!(gi, array![0.0, 1.0, 0.0]);
        assert_eq!(gj, array![1.0, 0.0, 0.0]);
    }

    #[test]
    fn diagonal_gradient_is_zero() {
        let b = batch(array![[1.0, 2.0], [0.5, -1.0]]);
        for kind in [KernelSpec::Cosine, KernelSpec::Rbf { bandwidth: 1.0 }, KernelSpec::NegEuclidean] {
            let (gi, gj) = kernel_gradient(&b, kind, 1, 1).unwrap();
            assert!(gi.iter().chain(gj.iter()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parse_kernel_specs() {
        assert_eq!("cosine".parse::<KernelSpec>().unwrap(), KernelSpec::Cosine);
        assert_eq!("rbf".parse::<KernelSpec>().unwrap(), KernelSpec::Rbf { bandwidth: 1.0 });
        assert_eq!("rbf:0.5".parse::<KernelSpec>().unwrap(), KernelSpec::Rbf { bandwidth: 0.5 });
        assert!("rbf:-1".parse::<KernelSpec>().is_err());
        assert!("linear".parse::<KernelSpec>().is_err());
        assert_eq!(KernelSpec::Rbf { bandwidth: 0.5 }.to_string(), "rbf:0.5");
    }
}
