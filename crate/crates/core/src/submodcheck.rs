//! Numerical submodularity checks over the subset lattice of small ground
//! sets.
//!
//! Every objective's per-set term `L(A)` is read as a set function of `A`
//! with `V` fixed. The checker enumerates all `A ⊆ B ⊆ V \ {x}` and tests the
//! diminishing-returns inequality `f(x|A) >= f(x|B) - tol`; an independent
//! pass tests the lattice form `f(X) + f(Y) >= f(X ∪ Y) + f(X ∩ Y)`.
//!
//! Values are extended reals: an empty log-sum-exp is `-inf`, so some
//! objectives take infinite values at the lattice boundary (SNN on
//! singletons, Submod-SupCon on `V`). Equal infinite gains compare as equal;
//! any other infinite gap is an ordinary comparison.

use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::EmbeddingBatch;
use crate::error::{Result, ScoreError};
use crate::losses::{LossConfig, Objective};
use crate::objectives::Prepared;
use crate::rng::{derive_seed, GaussianSampler};

/// Largest ground set the enumeration accepts.
pub const MAX_GROUND_SET: usize = 12;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Embedding dimension of random check batches.
pub const DRAW_DIM: usize = 4;
/// Violations kept verbatim per result; the count is always exact.
pub const MAX_RECORDED: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SubmodularConsistent,
    Violated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::SubmodularConsistent => "submodular-consistent",
            Verdict::Violated => "violated",
        }
    }

    pub fn expected_for(objective: Objective) -> Self {
        if objective.claimed_submodular() {
            Verdict::SubmodularConsistent
        } else {
            Verdict::Violated
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "submodular-consistent" => Ok(Verdict::SubmodularConsistent),
            "violated" => Ok(Verdict::Violated),
            _ => Err(ScoreError::InvalidParameter(format!("unknown verdict {s:?}"))),
        }
    }
}

/// Distribution of random check batches: unit-normalized Gaussian rows,
/// optionally folded into the nonnegative orthant so that every cosine
/// similarity is nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DrawDomain {
    #[default]
    NonNegative,
    Signed,
}

impl std::str::FromStr for DrawDomain {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonnegative" | "non-negative" => Ok(DrawDomain::NonNegative),
            "signed" => Ok(DrawDomain::Signed),
            _ => Err(ScoreError::InvalidParameter(format!("unknown draw domain {s:?}"))),
        }
    }
}

/// One failed comparison. For diminishing returns `a ⊆ b` and the gains are
/// `f(x|a)` and `f(x|b)`; for the lattice form `x` is `None` and the gains
/// are `f(a) + f(b)` and `f(a ∪ b) + f(a ∩ b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub trial: usize,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub x: Option<usize>,
    pub gain_a: f64,
    pub gain_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeCheckResult {
    pub objective: Objective,
    pub n: usize,
    pub trials: usize,
    /// Total number of violating comparisons over all trials.
    pub violation_count: u64,
    /// The first [`MAX_RECORDED`] violations, in enumeration order.
    pub violations: Vec<Violation>,
    /// Most negative `gain_a - gain_b` seen.
    pub min_margin: f64,
    pub verdict: Verdict,
}

impl LatticeCheckResult {
    fn empty(objective: Objective, n: usize) -> Self {
        Self {
            objective,
            n,
            trials: 0,
            violation_count: 0,
            violations: Vec::new(),
            min_margin: 0.0,
            verdict: Verdict::SubmodularConsistent,
        }
    }

    fn absorb(&mut self, other: LatticeCheckResult) {
        self.trials += other.trials;
        self.violation_count += other.violation_count;
        let room = MAX_RECORDED.saturating_sub(self.violations.len());
        self.violations.extend(other.violations.into_iter().take(room));
        self.min_margin = self.min_margin.min(other.min_margin);
        if self.violation_count > 0 {
            self.verdict = Verdict::Violated;
        }
    }

    pub fn first_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// `A ↦ L(A)` for one objective on a fixed ground set; class labels are
/// ignored. The empty set takes the formula's literal empty reading (empty
/// sums 0), which is 0 except for constant offsets (OPL's `1`, the
/// facility-location `S_f` form's `|V|`, LogDet-`C_f`'s `-log det(S_V + λI)`).
pub struct SetEvaluator {
    prepared: Prepared,
    config: LossConfig,
}

impl SetEvaluator {
    pub fn n(&self) -> usize {
        self.prepared.n()
    }

    pub fn eval(&self, subset: &[usize]) -> Result<f64> {
        let n = self.n();
        let mut mask = vec![false; n];
        for &i in subset {
            if i >= n {
                return Err(ScoreError::InvalidParameter(format!("index {i} outside ground set")));
            }
            mask[i] = true;
        }
        self.prepared.term(&self.config, &mask, None)
    }

    pub fn eval_mask(&self, bits: u32) -> Result<f64> {
        let mask: Vec<bool> = (0..self.n()).map(|i| bits >> i & 1 == 1).collect();
        self.prepared.term(&self.config, &mask, None)
    }

    /// Values of every subset, indexed by bitmask.
    pub fn table(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > MAX_GROUND_SET {
            return Err(ScoreError::GroundSetTooLarge { n, max: MAX_GROUND_SET });
        }
        (0..1u32 << n).map(|m| self.eval_mask(m)).collect()
    }
}

pub fn as_set_function(objective: Objective, batch: &EmbeddingBatch, config: &LossConfig) -> Result<SetEvaluator> {
    let config = LossConfig { objective, ..*config };
    config.validate()?;
    let prepared = Prepared::new(batch, &config)?;
    Ok(SetEvaluator { prepared, config })
}

fn bits_to_vec(bits: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| bits >> i & 1 == 1).collect()
}

/// `gain_a - gain_b` in extended reals; identical values (including equal
/// infinities) give 0.
fn margin(gain_a: f64, gain_b: f64) -> f64 {
    if gain_a == gain_b {
        0.0
    } else {
        let m = gain_a - gain_b;
        if m.is_nan() { f64::NEG_INFINITY } else { m }
    }
}

fn gain(table: &[f64], set: u32, x: u32) -> f64 {
    let with = table[(set | 1 << x) as usize];
    let without = table[set as usize];
    if with == without { 0.0 } else { with - without }
}

fn dr_on_table(objective: Objective, table: &[f64], n: usize, tolerance: f64, trial: usize) -> LatticeCheckResult {
    let mut out = LatticeCheckResult::empty(objective, n);
    out.trials = 1;
    let full = (1u32 << n) - 1;
    for x in 0..n as u32 {
        let rest = full & !(1 << x);
        // Enumerate B ⊆ rest, then A ⊆ B via the submask walk.
        let mut b = rest;
        loop {
            let gain_b = gain(table, b, x);
            let mut a = b;
            loop {
                let gain_a = gain(table, a, x);
                let m = margin(gain_a, gain_b);
                if m < out.min_margin {
                    out.min_margin = m;
                }
                if m < -tolerance {
                    out.violation_count += 1;
                    if out.violations.len() < MAX_RECORDED {
                        out.violations.push(Violation {
                            trial,
                            a: bits_to_vec(a, n),
                            b: bits_to_vec(b, n),
                            x: Some(x as usize),
                            gain_a,
                            gain_b,
                        });
                    }
                }
                if a == 0 {
                    break;
                }
                a = (a - 1) & b;
            }
            if b == 0 {
                break;
            }
            b = (b - 1) & rest;
        }
    }
    if out.violation_count > 0 {
        out.verdict = Verdict::Violated;
    }
    out
}

fn lattice_on_table(objective: Objective, table: &[f64], n: usize, tolerance: f64, trial: usize) -> LatticeCheckResult {
    let mut out = LatticeCheckResult::empty(objective, n);
    out.trials = 1;
    let size = 1u32 << n;
    for x in 0..size {
        for y in x..size {
            let lhs = table[x as usize] + table[y as usize];
            let rhs = table[(x | y) as usize] + table[(x & y) as usize];
            let m = margin(lhs, rhs);
            if m < out.min_margin {
                out.min_margin = m;
            }
            if m < -tolerance {
                out.violation_count += 1;
                if out.violations.len() < MAX_RECORDED {
                    out.violations.push(Violation {
                        trial,
                        a: bits_to_vec(x, n),
                        b: bits_to_vec(y, n),
                        x: None,
                        gain_a: lhs,
                        gain_b: rhs,
                    });
                }
            }
        }
    }
    if out.violation_count > 0 {
        out.verdict = Verdict::Violated;
    }
    out
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if !(tolerance >= 0.0) {
        return Err(ScoreError::InvalidParameter(format!("tolerance must be >= 0, got {tolerance}")));
    }
    Ok(())
}

/// Diminishing-returns check over the whole lattice of `batch`'s ground set.
pub fn exhaustive_dr_check(
    objective: Objective,
    batch: &EmbeddingBatch,
    config: &LossConfig,
    tolerance: f64,
) -> Result<LatticeCheckResult> {
    check_tolerance(tolerance)?;
    let n = batch.len();
    if n > MAX_GROUND_SET {
        return Err(ScoreError::GroundSetTooLarge { n, max: MAX_GROUND_SET });
    }
    let table = as_set_function(objective, batch, config)?.table()?;
    Ok(dr_on_table(objective, &table, n, tolerance, 0))
}

/// Lattice-form check `f(X) + f(Y) >= f(X ∪ Y) + f(X ∩ Y)` over all pairs.
pub fn exhaustive_lattice_check(
    objective: Objective,
    batch: &EmbeddingBatch,
    config: &LossConfig,
    tolerance: f64,
) -> Result<LatticeCheckResult> {
    check_tolerance(tolerance)?;
    let n = batch.len();
    if n > MAX_GROUND_SET {
        return Err(ScoreError::GroundSetTooLarge { n, max: MAX_GROUND_SET });
    }
    let table = as_set_function(objective, batch, config)?.table()?;
    Ok(lattice_on_table(objective, &table, n, tolerance, 0))
}

/// Unit-normalized Gaussian batch of `n` rows in `d` dimensions, one class.
pub fn draw_batch(n: usize, d: usize, domain: DrawDomain, seed: u64) -> EmbeddingBatch {
    let mut g = GaussianSampler::new(seed);
    let mut z: Array2<f64> = g.matrix(n, d);
    for mut row in z.rows_mut() {
        if domain == DrawDomain::NonNegative {
            row.mapv_inplace(f64::abs);
        }
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    EmbeddingBatch::with_default_ids(z, vec![0; n]).expect("well-formed draw")
}

/// Seed of draw `t` in a search seeded with `seed`.
pub fn draw_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub n: usize,
    pub draws: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub domain: DrawDomain,
}

impl SearchParams {
    pub fn new(n: usize, draws: usize, seed: u64) -> Self {
        Self { n, draws, seed, tolerance: DEFAULT_TOLERANCE, domain: DrawDomain::NonNegative }
    }
}

const CHUNK: usize = 64;

fn run_draws(
    objective: Objective,
    config: &LossConfig,
    params: &SearchParams,
    stop_at_first: bool,
) -> Result<LatticeCheckResult> {
    let SearchParams { n, draws, seed, tolerance, domain } = *params;
    check_tolerance(tolerance)?;
    if n > MAX_GROUND_SET {
        return Err(ScoreError::GroundSetTooLarge { n, max: MAX_GROUND_SET });
    }
    if n == 0 {
        return Err(ScoreError::EmptyGroundSet);
    }
    if draws == 0 {
        return Err(ScoreError::InvalidParameter("at least one draw is required".into()));
    }
    let mut total = LatticeCheckResult::empty(objective, n);
    let mut start = 0;
    while start < draws {
        let end = (start + CHUNK).min(draws);
        // Draws are independent; results are merged in draw order.
        let chunk: Vec<Result<LatticeCheckResult>> = (start..end)
            .into_par_iter()
            .map(|t| {
                let batch = draw_batch(n, DRAW_DIM, domain, draw_seed(seed, t));
                let table = as_set_function(objective, &batch, config)?.table()?;
                Ok(dr_on_table(objective, &table, n, tolerance, t))
            })
            .collect();
        for r in chunk {
            let r = r?;
            let hit = r.violation_count > 0;
            total.absorb(r);
            if hit && stop_at_first {
                return Ok(total);
            }
        }
        start = end;
    }
    Ok(total)
}

/// Draws random batches until one violates diminishing returns or the
/// budget runs out.
pub fn counterexample_search(
    objective: Objective,
    config: &LossConfig,
    n: usize,
    max_draws: usize,
    seed: u64,
) -> Result<LatticeCheckResult> {
    run_draws(objective, config, &SearchParams::new(n, max_draws, seed), true)
}

pub fn counterexample_search_with(
    objective: Objective,
    config: &LossConfig,
    params: &SearchParams,
) -> Result<LatticeCheckResult> {
    run_draws(objective, config, params, true)
}

/// Checks every one of `params.draws` random batches without stopping.
pub fn consistency_run(
    objective: Objective,
    config: &LossConfig,
    params: &SearchParams,
) -> Result<LatticeCheckResult> {
    run_draws(objective, config, params, false)
}

/// One row of the verdict table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictRow {
    pub result: LatticeCheckResult,
    pub expected: Verdict,
}

impl VerdictRow {
    pub fn matches(&self) -> bool {
        self.result.verdict == self.expected
    }
}

/// Claimed-submodular objectives get a full consistency run over
/// `consistency_draws` batches; the others a counterexample search with
/// `search_budget` draws.
pub fn verdict_table(
    objectives: &[Objective],
    config: &LossConfig,
    n: usize,
    consistency_draws: usize,
    search_budget: usize,
    seed: u64,
    domain: DrawDomain,
) -> Result<Vec<VerdictRow>> {
    objectives
        .iter()
        .map(|&obj| {
            let expected = Verdict::expected_for(obj);
            let mut params = SearchParams::new(n, consistency_draws, seed);
            params.domain = domain;
            let result = match expected {
                Verdict::SubmodularConsistent => consistency_run(obj, config, &params)?,
                Verdict::Violated => {
                    params.draws = search_budget;
                    counterexample_search_with(obj, config, &params)?
                }
            };
            Ok(VerdictRow { result, expected })
        })
        .collect()
}
