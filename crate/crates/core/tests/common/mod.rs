#![allow(dead_code)]

use ndarray::Array2;
use score_core::rng::GaussianSampler;
use score_core::{EmbeddingBatch, Objective};

pub fn random_batch(n: usize, d: usize, classes: usize, seed: u64) -> EmbeddingBatch {
    let z = GaussianSampler::new(seed).matrix(n, d);
    EmbeddingBatch::with_default_ids(z, (0..n).map(|i| i % classes).collect()).unwrap()
}

pub fn cosine(z: &Array2<f64>) -> Array2<f64> {
    let n = z.nrows();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a = z.row(i);
            let b = z.row(j);
            s[[i, j]] = a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
        }
    }
    s
}

pub fn euclid(z: &Array2<f64>) -> Array2<f64> {
    let n = z.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            d[[i, j]] = (&z.row(i) - &z.row(j)).mapv(|v| v * v).sum().sqrt();
        }
    }
    d
}

/// Laplace expansion along the first row.
pub fn cofactor_det(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    match n {
        0 => 1.0,
        1 => m[[0, 0]],
        _ => {
            let mut det = 0.0;
            for c in 0..n {
                let minor = Array2::from_shape_fn((n - 1, n - 1), |(r, k)| m[[r + 1, if k < c { k } else { k + 1 }]]);
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                det += sign * m[[0, c]] * cofactor_det(&minor);
            }
            det
        }
    }
}

/// Gaussian elimination with partial pivoting.
pub fn lu_det(m: &Array2<f64>) -> f64 {
    let mut a = m.clone();
    let n = a.nrows();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[[x, c]].abs().total_cmp(&a[[y, c]].abs())).unwrap();
        if a[[p, c]] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..n {
                a.swap([p, k], [c, k]);
            }
            det = -det;
        }
        det *= a[[c, c]];
        for r in (c + 1)..n {
            let f = a[[r, c]] / a[[c, c]];
            for k in c..n {
                a[[r, k]] -= f * a[[c, k]];
            }
        }
    }
    det
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let mut a = m.clone();
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

fn naive_log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    values.map(f64::exp).sum::<f64>().ln()
}

/// Per-class term written directly from the table of objectives, with
/// diagonal-inclusive double sums, `p != i` for triplet positives and `j != i`
/// for SNN positives. No shifting or caching.
pub fn oracle_term(obj: Objective, s: &Array2<f64>, d: &Array2<f64>, a: &[usize], lambda: f64, eps: f64) -> f64 {
    let n = s.nrows();
    let out: Vec<usize> = (0..n).filter(|i| !a.contains(i)).collect();
    let within = |f: &dyn Fn(f64) -> f64| -> f64 {
        let mut t = 0.0;
        for &i in a {
            for &j in a {
                t += f(s[[i, j]]);
            }
        }
        t
    };
    let cross = |f: &dyn Fn(f64) -> f64| -> f64 {
        let mut t = 0.0;
        for &i in a {
            for &j in &out {
                t += f(s[[i, j]]);
            }
        }
        t
    };
    let id = |x: f64| x;
    match obj {
        Objective::Triplet => {
            let mut t = 0.0;
            for &i in a {
                for &p in a {
                    if p == i {
                        continue;
                    }
                    for &q in &out {
                        t += (d[[i, p]].powi(2) - d[[i, q]].powi(2) + eps).max(0.0);
                    }
                }
            }
            t
        }
        Objective::NPairs => {
            let logs: f64 = a.iter().map(|&i| ((0..n).map(|j| s[[i, j]].exp()).sum::<f64>() - 1.0).ln()).sum();
            -(within(&id) + logs)
        }
        Objective::Opl => (1.0 - within(&id)) + cross(&id),
        Objective::Snn => a
            .iter()
            .map(|&i| {
                let pos = naive_log_sum_exp(a.iter().filter(|&&j| j != i).map(|&j| s[[i, j]]));
                let neg = naive_log_sum_exp(out.iter().map(|&j| s[[i, j]]));
                -(pos - neg)
            })
            .sum(),
        Objective::SupCon => {
            let logs: f64 = a.iter().map(|&i| ((0..n).map(|j| s[[i, j]].exp()).sum::<f64>() - 1.0).ln()).sum();
            -within(&id) / a.len() as f64 + logs
        }
        Objective::SubmodTriplet => cross(&|x| x * x) - within(&|x| x * x),
        Objective::SubmodSnn => a
            .iter()
            .map(|&i| naive_log_sum_exp(a.iter().map(|&j| d[[i, j]])) + naive_log_sum_exp(out.iter().map(|&j| s[[i, j]])))
            .sum(),
        Objective::SubmodSupCon => -within(&id) + a.iter().map(|&i| naive_log_sum_exp(out.iter().map(|&j| s[[i, j]]))).sum::<f64>(),
        Objective::GcSf => cross(&id) - lambda * within(&id),
        Objective::GcCf => lambda * cross(&id),
        Objective::LogDetSf | Objective::LogDetCf => {
            let sub = Array2::from_shape_fn((a.len(), a.len()), |(x, y)| s[[a[x], a[y]]] + if x == y { lambda } else { 0.0 });
            let mut v = lu_det(&sub).ln();
            if obj == Objective::LogDetCf {
                let full = Array2::from_shape_fn((n, n), |(x, y)| s[[x, y]] + if x == y { lambda } else { 0.0 });
                v -= lu_det(&full).ln();
            }
            v
        }
        Objective::Fl => out.iter().map(|&i| a.iter().map(|&j| s[[i, j]]).fold(f64::NEG_INFINITY, f64::max)).sum(),
    }
}
