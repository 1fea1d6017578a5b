//! Analytic gradients of every objective with respect to the embeddings,
//! plus a central finite-difference oracle and a comparison report.

use ndarray::Array2;
use serde::Serialize;

use crate::batch::EmbeddingBatch;
use crate::error::{Result, ScoreError};
use crate::kernels;
use crate::losses::{self, LossConfig, LossResult, Objective};
use crate::objectives::{Prepared, Upstream};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the per-coordinate relative error.
pub const ABS_FLOOR: f64 = 1e-7;
/// Coordinates closer than this to a facility-location argmax tie or a
/// triplet hinge boundary are excluded from comparison.
pub const NONSMOOTH_GAP: f64 = 1e-3;

/// `dL/dz_i` in row `i`; same shape as the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    pub entries: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub objective: Objective,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// `(sample, coordinate)` with the largest relative error.
    pub worst_coordinate: (usize, usize),
    pub passed: bool,
    pub tolerance: f64,
    pub step: f64,
    pub checked_coordinates: usize,
    /// Coordinates skipped because they sit at a nonsmooth point.
    pub excluded_coordinates: usize,
    pub excluded_rows: Vec<usize>,
}

pub fn loss_gradient(batch: &EmbeddingBatch, config: &LossConfig) -> Result<GradientMatrix> {
    Ok(loss_and_gradient(batch, config)?.1)
}

/// Loss value and gradient from a single pass over the kernel matrices.
pub fn loss_and_gradient(batch: &EmbeddingBatch, config: &LossConfig) -> Result<(LossResult, GradientMatrix)> {
    let (n, d) = batch.vectors().dim();
    if losses::check_preconditions(batch.labels(), config)? {
        let zeros = batch.classes().into_iter().map(|c| (c, 0.0)).collect();
        let entries = Array2::zeros((n, d));
        return Ok((LossResult::from_terms(zeros, *config), GradientMatrix { entries }));
    }
    let prepared = Prepared::new(batch, config)?;
    let mut up = Upstream::zeros(n);
    let terms = losses::per_class_terms(batch.labels(), config, &prepared, Some(&mut up))?;
    let entries = prepared.backward(batch, &up)?;
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(ScoreError::DegenerateBatch {
            objective: config.objective,
            reason: "gradient is not finite".into(),
        });
    }
    Ok((LossResult::from_terms(terms, *config), GradientMatrix { entries }))
}

/// Central differences `(L(z + h e) - L(z - h e)) / 2h` per coordinate.
pub fn finite_difference_gradient(
    batch: &EmbeddingBatch,
    config: &LossConfig,
    h: f64,
) -> Result<GradientMatrix> {
    finite_difference_of(batch, h, |b| Ok(losses::total_loss(b, config)?.total))
}

/// Central differences of an arbitrary scalar function of the batch.
pub fn finite_difference_of(
    batch: &EmbeddingBatch,
    h: f64,
    f: impl Fn(&EmbeddingBatch) -> Result<f64>,
) -> Result<GradientMatrix> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(ScoreError::InvalidParameter(format!("step h must be positive, got {h}")));
    }
    let (n, d) = batch.vectors().dim();
    let mut entries = Array2::zeros((n, d));
    let mut z = batch.vectors().clone();
    for i in 0..n {
        for k in 0..d {
            let orig = z[[i, k]];
            z[[i, k]] = orig + h;
            let plus = f(&batch.with_vectors(z.clone())?)?;
            z[[i, k]] = orig - h;
            let minus = f(&batch.with_vectors(z.clone())?)?;
            z[[i, k]] = orig;
            entries[[i, k]] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(GradientMatrix { entries })
}

/// Rows touching a nonsmooth point of the objective: facility-location
/// argmax ties and triplet hinge boundaries within [`NONSMOOTH_GAP`].
pub fn nonsmooth_rows(batch: &EmbeddingBatch, config: &LossConfig) -> Result<Vec<bool>> {
    let n = batch.len();
    let mut rows = vec![false; n];
    let members = batch.class_members();
    match config.objective {
        Objective::Fl => {
            let s = kernels::similarity(batch, config.kernel)?.entries;
            for inside in members.values() {
                if inside.len() < 2 {
                    continue;
                }
                for i in (0..n).filter(|i| !inside.contains(i)) {
                    let mut ranked: Vec<usize> = inside.clone();
                    ranked.sort_by(|&a, &b| s[[i, b]].total_cmp(&s[[i, a]]));
                    if s[[i, ranked[0]]] - s[[i, ranked[1]]] < NONSMOOTH_GAP {
                        rows[i] = true;
                        rows[ranked[0]] = true;
                        rows[ranked[1]] = true;
                    }
                }
            }
        }
        Objective::Triplet => {
            let dist = kernels::euclidean_distance(batch).entries;
            for inside in members.values() {
                for &i in inside {
                    for &p in inside.iter().filter(|&&p| p != i) {
                        for q in (0..n).filter(|q| !inside.contains(q)) {
                            let arg = dist[[i, p]].powi(2) - dist[[i, q]].powi(2) + config.margin;
                            if arg.abs() < NONSMOOTH_GAP {
                                rows[i] = true;
                                rows[p] = true;
                                rows[q] = true;
                            }
                        }
                    }
                }
            }
        }
        _ => {}
    }
    Ok(rows)
}

/// Compares two gradients coordinate by coordinate, skipping excluded rows.
///
/// The relative error of a coordinate is `|a - f| / max(|a|, |f|, ABS_FLOOR)`.
pub fn compare_gradients(
    objective: Objective,
    analytic: &GradientMatrix,
    numeric: &GradientMatrix,
    excluded: &[bool],
    tolerance: f64,
    step: f64,
) -> GradCheckReport {
    let (n, d) = analytic.entries.dim();
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut worst = (0, 0);
    let mut checked = 0;
    let mut skipped = 0;
    for i in 0..n {
        if excluded.get(i).copied().unwrap_or(false) {
            skipped += d;
            continue;
        }
        for k in 0..d {
            let a = analytic.entries[[i, k]];
            let f = numeric.entries[[i, k]];
            let abs = (a - f).abs();
            let rel = abs / a.abs().max(f.abs()).max(ABS_FLOOR);
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            checked += 1;
            max_abs = max_abs.max(abs);
            if rel > max_rel || checked == 1 {
                max_rel = rel;
                worst = (i, k);
            }
        }
    }
    GradCheckReport {
        objective,
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        worst_coordinate: worst,
        passed: max_rel <= tolerance,
        tolerance,
        step,
        checked_coordinates: checked,
        excluded_coordinates: skipped,
        excluded_rows: (0..n).filter(|&i| excluded.get(i).copied().unwrap_or(false)).collect(),
    }
}

pub fn grad_check(
    batch: &EmbeddingBatch,
    config: &LossConfig,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if !(tolerance >= 0.0) {
        return Err(ScoreError::InvalidParameter(format!("tolerance must be >= 0, got {tolerance}")));
    }
    let analytic = loss_gradient(batch, config)?;
    let numeric = finite_difference_gradient(batch, config, h)?;
    let excluded = nonsmooth_rows(batch, config)?;
    Ok(compare_gradients(config.objective, &analytic, &numeric, &excluded, tolerance, h))
}
