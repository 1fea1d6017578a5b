//! Per-set terms `L(A)` of every objective, evaluated on precomputed kernel
//! matrices. The same code serves the loss (one call per class), the set
//! function view used by the submodularity checker (arbitrary `A`), and the
//! analytic gradient (by accumulating `dL/dS` and `dL/dD`).
//!
//! Empty sums are 0, an empty max is 0 and an empty log-sum-exp is `-inf`;
//! the set-function view relies on these readings at the lattice boundary.

use ndarray::Array2;

use crate::batch::EmbeddingBatch;
use crate::error::Result;
use crate::kernels::{self, DistanceMatrix, SimilarityMatrix};
use crate::linalg;
use crate::losses::{LossConfig, Objective, Variant};

/// Kernel matrices plus the ground-set quantities some objectives share
/// across classes.
pub(crate) struct Prepared {
    pub sim: SimilarityMatrix,
    pub dist: Option<DistanceMatrix>,
    /// `log(sum_{j in V} exp(S_ij) - 1)` per row (n-pairs, supcon).
    row_offset_lse: Option<Vec<f64>>,
    /// `log det(S_V + lambda I)` and its inverse matrix (logdet-cf).
    ground_logdet: Option<(f64, Array2<f64>)>,
}

/// `dL/dS_ij` and `dL/dD_ij`, entries treated as independent.
pub(crate) struct Upstream {
    pub sim: Array2<f64>,
    pub dist: Array2<f64>,
}

impl Upstream {
    pub fn zeros(n: usize) -> Self {
        Self { sim: Array2::zeros((n, n)), dist: Array2::zeros((n, n)) }
    }
}

impl Prepared {
    pub fn new(batch: &EmbeddingBatch, config: &LossConfig) -> Result<Self> {
        let sim = kernels::similarity(batch, config.kernel)?;
        let dist = config.objective.uses_distance().then(|| kernels::euclidean_distance(batch));
        Self::from_matrices(sim, dist, config)
    }

    pub fn from_matrices(
        sim: SimilarityMatrix,
        dist: Option<DistanceMatrix>,
        config: &LossConfig,
    ) -> Result<Self> {
        let s = &sim.entries;
        let n = s.nrows();
        let row_offset_lse = matches!(config.objective, Objective::NPairs | Objective::SupCon)
            .then(|| (0..n).map(|i| offset_lse((0..n).map(|j| s[[i, j]]))).collect());
        let ground_logdet = if config.objective == Objective::LogDetCf {
            let mut m = s.clone();
            for i in 0..n {
                m[[i, i]] += config.lambda;
            }
            let l = linalg::cholesky(&m)?;
            Some((linalg::logdet_from_cholesky(&l), linalg::inverse_from_cholesky(&l)))
        } else {
            None
        };
        Ok(Self { sim, dist, row_offset_lse, ground_logdet })
    }

    pub fn n(&self) -> usize {
        self.sim.entries.nrows()
    }

    /// `L(A)` for the set whose membership mask is `in_set`. When `up` is
    /// given, the partial derivatives of this term are added to it.
    pub fn term(
        &self,
        config: &LossConfig,
        in_set: &[bool],
        mut up: Option<&mut Upstream>,
    ) -> Result<f64> {
        let s = &self.sim.entries;
        let n = self.n();
        let inside: Vec<usize> = (0..n).filter(|&i| in_set[i]).collect();
        let outside: Vec<usize> = (0..n).filter(|&i| !in_set[i]).collect();
        let lambda = config.lambda;

        let value = match config.objective {
            Objective::GcSf | Objective::GcCf | Objective::Opl => {
                let cross: f64 = inside.iter().flat_map(|&i| outside.iter().map(move |&j| s[[i, j]])).sum();
                let within: f64 = inside.iter().flat_map(|&i| inside.iter().map(move |&j| s[[i, j]])).sum();
                let (w_cross, w_within, offset) = match config.objective {
                    Objective::GcSf => (1.0, -lambda, 0.0),
                    Objective::GcCf => (lambda, 0.0, 0.0),
                    _ => (1.0, -1.0, 1.0),
                };
                if let Some(up) = up.as_deref_mut() {
                    add_block(&mut up.sim, &inside, &outside, |_, _| w_cross);
                    add_block(&mut up.sim, &inside, &inside, |_, _| w_within);
                }
                offset + w_cross * cross + w_within * within
            }
            Objective::SubmodTriplet => {
                let cross: f64 = inside.iter().flat_map(|&i| outside.iter().map(move |&j| s[[i, j]].powi(2))).sum();
                let within: f64 = inside.iter().flat_map(|&i| inside.iter().map(move |&j| s[[i, j]].powi(2))).sum();
                if let Some(up) = up.as_deref_mut() {
                    add_block(&mut up.sim, &inside, &outside, |i, j| 2.0 * s[[i, j]]);
                    add_block(&mut up.sim, &inside, &inside, |i, j| -2.0 * s[[i, j]]);
                }
                cross - within
            }
            Objective::Fl => {
                let mut total = match config.fl_form {
                    Variant::Sf => n as f64,
                    Variant::Cf => 0.0,
                };
                if !inside.is_empty() {
                    for &i in &outside {
                        // Lowest-index argmax: strict comparison keeps the first maximum.
                        let mut best = inside[0];
                        for &j in &inside[1..] {
                            if s[[i, j]] > s[[i, best]] {
                                best = j;
                            }
                        }
                        total += s[[i, best]];
                        if let Some(up) = up.as_deref_mut() {
                            up.sim[[i, best]] += 1.0;
                        }
                    }
                }
                total
            }
            Objective::LogDetSf | Objective::LogDetCf => {
                let k = inside.len();
                let mut value = 0.0;
                if k > 0 {
                    let mut sub = Array2::<f64>::zeros((k, k));
                    for (a, &i) in inside.iter().enumerate() {
                        for (b, &j) in inside.iter().enumerate() {
                            sub[[a, b]] = s[[i, j]];
                        }
                        sub[[a, a]] += lambda;
                    }
                    let l = linalg::cholesky(&sub)?;
                    value = linalg::logdet_from_cholesky(&l);
                    if let Some(up) = up.as_deref_mut() {
                        let inv = linalg::inverse_from_cholesky(&l);
                        for (a, &i) in inside.iter().enumerate() {
                            for (b, &j) in inside.iter().enumerate() {
                                up.sim[[i, j]] += inv[[b, a]];
                            }
                        }
                    }
                }
                if let Some((ground, inv)) = &self.ground_logdet {
                    value -= ground;
                    if let Some(up) = up.as_deref_mut() {
                        up.sim.scaled_add(-1.0, &inv.t());
                    }
                }
                value
            }
            Objective::NPairs | Objective::SupCon => {
                let offsets = self.row_offset_lse.as_ref().expect("row offsets prepared");
                let within: f64 = inside.iter().flat_map(|&i| inside.iter().map(move |&j| s[[i, j]])).sum();
                let rows: f64 = inside.iter().map(|&i| offsets[i]).sum();
                let (w_within, w_rows) = if config.objective == Objective::NPairs {
                    (-1.0, -1.0)
                } else if inside.is_empty() {
                    (0.0, 1.0)
                } else {
                    (-1.0 / inside.len() as f64, 1.0)
                };
                if let Some(up) = up.as_deref_mut() {
                    add_block(&mut up.sim, &inside, &inside, |_, _| w_within);
                    for &i in &inside {
                        // d/dS_ij log(sum_j e^S_ij - 1) = e^S_ij / (sum_j e^S_ij - 1)
                        let denom_log = offsets[i];
                        for j in 0..n {
                            up.sim[[i, j]] += w_rows * (s[[i, j]] - denom_log).exp();
                        }
                    }
                }
                w_within * within + w_rows * rows
            }
            Objective::Snn => {
                let mut total = 0.0;
                for &i in &inside {
                    let pos: Vec<usize> = inside.iter().copied().filter(|&j| j != i).collect();
                    let p = lse_term(s, i, &pos, -1.0, up.as_deref_mut().map(|u| &mut u.sim));
                    let q = lse_term(s, i, &outside, 1.0, up.as_deref_mut().map(|u| &mut u.sim));
                    total += p + q;
                }
                total
            }
            Objective::SubmodSnn => {
                let d = &self.dist.as_ref().expect("distances prepared").entries;
                let mut total = 0.0;
                for &i in &inside {
                    let p = lse_term(d, i, &inside, 1.0, up.as_deref_mut().map(|u| &mut u.dist));
                    let q = lse_term(s, i, &outside, 1.0, up.as_deref_mut().map(|u| &mut u.sim));
                    total += p + q;
                }
                total
            }
            Objective::SubmodSupCon => {
                let within: f64 = inside.iter().flat_map(|&i| inside.iter().map(move |&j| s[[i, j]])).sum();
                if let Some(up) = up.as_deref_mut() {
                    add_block(&mut up.sim, &inside, &inside, |_, _| -1.0);
                }
                let mut total = -within;
                for &i in &inside {
                    total += lse_term(s, i, &outside, 1.0, up.as_deref_mut().map(|u| &mut u.sim));
                }
                total
            }
            Objective::Triplet => {
                let d = &self.dist.as_ref().expect("distances prepared").entries;
                let eps = config.margin;
                let mut total = 0.0;
                for &i in &inside {
                    for &p in &inside {
                        if p == i {
                            continue;
                        }
                        let dp2 = d[[i, p]] * d[[i, p]];
                        for &q in &outside {
                            let arg = dp2 - d[[i, q]] * d[[i, q]] + eps;
                            // Hinge boundary (arg == 0) takes the zero subgradient.
                            if arg > 0.0 {
                                total += arg;
                                if let Some(up) = up.as_deref_mut() {
                                    up.dist[[i, p]] += 2.0 * d[[i, p]];
                                    up.dist[[i, q]] -= 2.0 * d[[i, q]];
                                }
                            }
                        }
                    }
                }
                total
            }
        };
        Ok(value)
    }

    /// Chains accumulated upstream gradients back to the embeddings.
    pub fn backward(&self, batch: &EmbeddingBatch, up: &Upstream) -> Result<Array2<f64>> {
        let mut g = kernels::similarity_backward(batch, &self.sim, &up.sim)?;
        if let Some(dist) = &self.dist {
            g += &kernels::distance_backward(batch, dist, &up.dist);
        }
        Ok(g)
    }
}

fn add_block(m: &mut Array2<f64>, rows: &[usize], cols: &[usize], w: impl Fn(usize, usize) -> f64) {
    for &i in rows {
        for &j in cols {
            m[[i, j]] += w(i, j);
        }
    }
}

/// `sign * log sum_{j in cols} exp(m_ij)`, with softmax weights added to `up`.
fn lse_term(m: &Array2<f64>, i: usize, cols: &[usize], sign: f64, up: Option<&mut Array2<f64>>) -> f64 {
    let v = log_sum_exp(cols.iter().map(|&j| m[[i, j]]));
    if let Some(up) = up {
        if v.is_finite() {
            for &j in cols {
                up[[i, j]] += sign * (m[[i, j]] - v).exp();
            }
        }
    }
    sign * v
}

/// Max-shifted `log sum exp`; `-inf` for an empty sequence.
pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Max-shifted `log(sum exp(v) - 1)`; NaN when the argument is not positive.
pub(crate) fn offset_lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NAN;
    }
    let shifted = values.map(|v| (v - m).exp()).sum::<f64>() - (-m).exp();
    if shifted > 0.0 {
        m + shifted.ln()
    } else {
        f64::NAN
    }
}
