use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use score_core::formats::{self, VerdictRecord};
use score_core::rng::{derive_seed, offsets};
use score_core::submodcheck::{self, DrawDomain, VerdictRow};
use score_core::synthlab::{self, ImbalancedSpec, OrderingCheck, SweepGrid};
use score_core::trainer::{self, ComparisonOutcome};
use score_core::{
    grads, losses, EmbeddingBatch, KernelSpec, LossConfig, Objective, ScoreError, SweepResult, TrainConfig,
};

use crate::config::{DatasetKind, RunConfig};
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::io;

fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::with_seed(0),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_list<T>(slot: &mut Vec<T>, value: Vec<T>) {
    if !value.is_empty() {
        *slot = value;
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn format_set(set: &[usize]) -> String {
    let items: Vec<String> = set.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(","))
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// k-schedule, longtail or step.
    #[arg(long)]
    kind: Option<DatasetKind>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    base_count: Option<usize>,
    #[arg(long)]
    decay_or_ratio: Option<f64>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    points_per_cluster: Option<usize>,
}

impl DatasetArgs {
    fn apply(self, config: &mut RunConfig) {
        let d = &mut config.dataset;
        set(&mut d.kind, self.kind);
        set(&mut d.classes, self.classes);
        set(&mut d.dim, self.dim);
        set(&mut d.base_count, self.base_count);
        set(&mut d.decay_or_ratio, self.decay_or_ratio);
        set(&mut d.spread, self.spread);
        set(&mut d.separation, self.separation);
        set(&mut d.k, self.k);
        set(&mut d.points_per_cluster, self.points_per_cluster);
    }
}

/// The dataset described by the config; its seed is the run seed offset for data.
pub fn build_dataset(config: &RunConfig) -> CliResult<EmbeddingBatch> {
    let d = &config.dataset;
    let batch = match d.kind.imbalance() {
        None => synthlab::make_k_dataset(
            d.k,
            d.points_per_cluster,
            d.spread,
            synthlab::sweep_dataset_seed(config.seed, d.k),
        )?,
        Some(kind) => synthlab::make_imbalanced_dataset(&ImbalancedSpec {
            kind,
            classes: d.classes,
            dim: d.dim,
            base_count: d.base_count,
            decay_or_ratio: d.decay_or_ratio,
            spread: d.spread,
            separation: d.separation,
            seed: derive_seed(config.seed, offsets::DATASET),
        })?,
    };
    Ok(batch)
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn gen(args: GenArgs) -> CliResult<i32> {
    let mut config = load_config(args.config.as_deref(), args.seed)?;
    args.dataset.apply(&mut config);
    let batch = build_dataset(&config)?;
    let text = formats::embeddings_to_string(&batch)?;
    io::emit(args.out.as_deref(), text.as_bytes())?;
    eprintln!("wrote {} samples in {} classes, dimension {}", batch.len(), batch.num_classes(), batch.dim());
    Ok(EXIT_OK)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Embedding CSV with header id,label,f0,...
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    objective: Objective,
    #[arg(long, default_value_t = losses::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = losses::DEFAULT_MARGIN)]
    margin: f64,
    /// cosine, rbf, rbf:<bandwidth> or neg-euclidean.
    #[arg(long, default_value = "cosine")]
    kernel: KernelSpec,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    total: f64,
    per_class: BTreeMap<usize, f64>,
    objective: Objective,
    config: LossConfig,
}

pub fn eval(args: EvalArgs) -> CliResult<i32> {
    let batch = formats::read_embeddings_file(&args.input)?;
    let mut config = LossConfig::new(args.objective)
        .with_lambda(args.lambda)
        .with_margin(args.margin)
        .with_kernel(args.kernel);
    if args.objective == Objective::Fl && batch.num_classes() == 1 {
        eprintln!("warning: single-class batch; facility-location terms are reported as 0");
        config.allow_single_class = true;
    }
    let result = losses::total_loss(&batch, &config)?;
    let out = EvalOutput { total: result.total, per_class: result.per_class, objective: args.objective, config };
    io::emit(args.out.as_deref(), &to_json(&out)?)?;
    Ok(EXIT_OK)
}

pub const GRADCHECK_N: usize = 12;
pub const GRADCHECK_D: usize = 8;
pub const GRADCHECK_CLASSES: usize = 3;

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    objective: Objective,
    #[arg(long, default_value_t = GRADCHECK_N)]
    n: usize,
    #[arg(long, default_value_t = GRADCHECK_D)]
    d: usize,
    #[arg(long, default_value_t = GRADCHECK_CLASSES)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = grads::DEFAULT_STEP)]
    h: f64,
    #[arg(long, default_value_t = grads::DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long, default_value_t = losses::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = losses::DEFAULT_MARGIN)]
    margin: f64,
    #[arg(long, default_value = "cosine")]
    kernel: KernelSpec,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn gradcheck(args: GradcheckArgs) -> CliResult<i32> {
    if !(args.h > 0.0) || !args.h.is_finite() {
        return Err(CliError::Usage(format!("--h must be positive, got {}", args.h)));
    }
    if args.classes == 0 {
        return Err(CliError::Usage("--classes must be at least 1".into()));
    }
    let config = LossConfig::new(args.objective)
        .with_lambda(args.lambda)
        .with_margin(args.margin)
        .with_kernel(args.kernel);
    let batch = synthlab::random_batch(args.n, args.d, args.classes, derive_seed(args.seed, offsets::GRADCHECK))?;
    let report = grads::grad_check(&batch, &config, args.h, args.tol)?;
    io::emit(args.out.as_deref(), &to_json(&report)?)?;
    eprintln!(
        "{}: max relative error {:e} over {} coordinates ({} excluded), tolerance {:e}",
        args.objective, report.max_rel_error, report.checked_coordinates, report.excluded_coordinates, args.tol
    );
    if report.passed {
        Ok(EXIT_OK)
    } else {
        Err(CliError::GradCheckFailed(format!(
            "{} (worst coordinate {:?}, relative error {:e})",
            args.objective, report.worst_coordinate, report.max_rel_error
        )))
    }
}

#[derive(Debug, Args)]
pub struct SubmodcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Objectives to check (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "all", required_unless_present = "all")]
    objective: Vec<Objective>,
    /// Check all thirteen objectives.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    n: Option<usize>,
    /// Draws for objectives expected to be submodular.
    #[arg(long)]
    trials: Option<usize>,
    /// Draw budget for the counterexample search.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// nonnegative or signed.
    #[arg(long)]
    domain: Option<DrawDomain>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kernel: Option<KernelSpec>,
    /// Verdict CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn submodcheck(args: SubmodcheckArgs) -> CliResult<i32> {
    let mut config = load_config(args.config.as_deref(), args.seed)?;
    let c = &mut config.check;
    set(&mut c.n, args.n);
    set(&mut c.trials, args.trials);
    set(&mut c.budget, args.budget);
    set(&mut c.tolerance, args.tolerance);
    set(&mut c.domain, args.domain);
    if c.n > submodcheck::MAX_GROUND_SET {
        return Err(ScoreError::GroundSetTooLarge { n: c.n, max: submodcheck::MAX_GROUND_SET }.into());
    }
    let objectives = if args.all { Objective::ALL.to_vec() } else { args.objective };
    let loss = LossConfig::new(objectives[0])
        .with_lambda(args.lambda.unwrap_or(losses::DEFAULT_LAMBDA))
        .with_margin(config.loss.margin)
        .with_kernel(args.kernel.unwrap_or(KernelSpec::Cosine));
    loss.validate()?;
    let rows = verdicts(&objectives, &loss, &config)?;
    let records: Vec<VerdictRecord> = rows.iter().map(|r| VerdictRecord::from(&r.result)).collect();
    let mut csv = Vec::new();
    formats::write_verdicts(&mut csv, &records)?;
    io::emit(args.out.as_deref(), &csv)?;
    for row in &rows {
        log_verdict(row);
    }
    let mismatched: Vec<String> =
        rows.iter().filter(|r| !r.matches()).map(|r| r.result.objective.to_string()).collect();
    if mismatched.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Mismatch(format!("verdict mismatch for {}", mismatched.join(", "))))
    }
}

fn verdicts(objectives: &[Objective], loss: &LossConfig, config: &RunConfig) -> CliResult<Vec<VerdictRow>> {
    let c = &config.check;
    Ok(submodcheck::verdict_table(
        objectives,
        loss,
        c.n,
        c.trials,
        c.budget,
        derive_seed(config.seed, offsets::CHECK),
        c.domain,
    )?)
}

fn log_verdict(row: &VerdictRow) {
    let r = &row.result;
    let status = if row.matches() { "ok" } else { "MISMATCH" };
    eprintln!(
        "{}: {} after {} draws, {} violations, min margin {:e} (expected {}) {status}",
        r.objective, r.verdict, r.trials, r.violation_count, r.min_margin, row.expected
    );
    if let Some(v) = r.first_violation() {
        match v.x {
            Some(x) => eprintln!(
                "  counterexample (draw {}): A={} B={} x={x}: f(x|A)={} < f(x|B)={}",
                v.trial,
                format_set(&v.a),
                format_set(&v.b),
                v.gain_a,
                v.gain_b
            ),
            None => eprintln!(
                "  counterexample (draw {}): A={} B={}: f(A)+f(B)={} < f(AuB)+f(AnB)={}",
                v.trial,
                format_set(&v.a),
                format_set(&v.b),
                v.gain_a,
                v.gain_b
            ),
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    objectives: Vec<Objective>,
    #[arg(long, value_delimiter = ',')]
    kernels: Vec<KernelSpec>,
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    /// One sweep per seed; rows of every seed share one CSV.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    points_per_cluster: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Exit 5 unless every expected K ordering holds by majority over seeds.
    #[arg(long)]
    assert_ordering: bool,
    /// Sweep CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn sweep(args: SweepArgs) -> CliResult<i32> {
    let mut config = load_config(args.config.as_deref(), None)?;
    let s = &mut config.sweep;
    set_list(&mut s.objectives, args.objectives);
    set_list(&mut s.kernels, args.kernels);
    set_list(&mut s.ks, args.ks);
    set_list(&mut s.seeds, args.seeds);
    set(&mut s.points_per_cluster, args.points_per_cluster);
    set(&mut s.spread, args.spread);
    let seeds = if s.seeds.is_empty() { vec![config.seed] } else { s.seeds.clone() };
    let base = LossConfig::new(Objective::Fl)
        .with_lambda(args.lambda.unwrap_or(losses::DEFAULT_LAMBDA))
        .with_margin(config.loss.margin);
    let grid = SweepGrid {
        objectives: s.objectives.clone(),
        kernels: s.kernels.clone(),
        ks: s.ks.clone(),
        points_per_cluster: s.points_per_cluster,
        spread: s.spread,
        base,
    };
    grid.validate()?;
    let sweeps: Vec<SweepResult> = seeds.iter().map(|&seed| synthlab::k_sweep(&grid, seed)).collect::<Result<_, _>>()?;
    let rows: Vec<_> = sweeps.iter().flat_map(|s| s.rows.iter().cloned()).collect();
    let mut csv = Vec::new();
    formats::write_sweep(&mut csv, &rows)?;
    io::emit(args.out.as_deref(), &csv)?;
    eprintln!("{} rows over {} seed(s)", rows.len(), seeds.len());
    if !args.assert_ordering {
        return Ok(EXIT_OK);
    }
    let checks = synthlab::ordering_checks(&sweeps);
    if checks.is_empty() {
        return Err(CliError::Usage("--assert-ordering needs at least one adjacent K pair of 0,2,4,5,7".into()));
    }
    let failed: Vec<&OrderingCheck> = checks.iter().filter(|c| !c.holds()).collect();
    for c in &checks {
        eprintln!(
            "{} {}: K {}->{} {}: {}/{} seeds{}",
            c.objective,
            c.kernel,
            c.from_k,
            c.to_k,
            if c.expect_increase { "increase" } else { "decrease" },
            c.votes_for,
            c.votes_total,
            if c.holds() { "" } else { " FAILED" }
        );
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Mismatch(format!("{} of {} K orderings do not hold", failed.len(), checks.len())))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, value_delimiter = ',')]
    objectives: Vec<Objective>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long)]
    kernel: Option<KernelSpec>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Directory for per-objective reports and comparison.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct FailedRun<'a> {
    label: &'a str,
    config: &'a TrainConfig,
    error: String,
    exit_code: i32,
}

/// One loss configuration per (objective, lambda) pair, objectives outermost.
pub fn loss_grid(config: &RunConfig) -> Vec<LossConfig> {
    let l = &config.loss;
    l.objectives
        .iter()
        .flat_map(|&o| {
            l.lambdas
                .iter()
                .map(move |&lambda| LossConfig::new(o).with_lambda(lambda).with_margin(l.margin).with_kernel(l.kernel))
        })
        .collect()
}

pub fn train_config(config: &RunConfig) -> TrainConfig {
    let t = &config.train;
    let mut base = TrainConfig::new(Objective::Fl, config.seed);
    base.learning_rate = t.learning_rate;
    base.steps = t.steps;
    base.batch_size = t.batch_size;
    base.eval_fraction = t.eval_fraction;
    base.output_dim = t.output_dim;
    base.normalize = t.normalize;
    base
}

pub fn train(args: TrainArgs) -> CliResult<i32> {
    let mut config = load_config(args.config.as_deref(), args.seed)?;
    args.dataset.apply(&mut config);
    set_list(&mut config.loss.objectives, args.objectives);
    set_list(&mut config.loss.lambdas, args.lambdas);
    set(&mut config.loss.kernel, args.kernel);
    set(&mut config.train.steps, args.steps);
    set(&mut config.train.learning_rate, args.learning_rate);
    set(&mut config.train.batch_size, args.batch_size);
    let losses = loss_grid(&config);
    if losses.is_empty() {
        return Err(CliError::Usage("no objective/lambda combinations to train".into()));
    }
    let base = train_config(&config);
    TrainConfig { loss: LossConfig::new(Objective::Fl).with_kernel(config.loss.kernel), ..base }.validate()?;
    let data = build_dataset(&config)?;
    io::ensure_dir(&args.out)?;
    io::write_json(&args.out.join("config.json"), &config)?;
    let outcomes = trainer::compare_objectives(&losses, &data, &base);
    for o in &outcomes {
        let path = args.out.join(format!("{}.json", o.label));
        match &o.report {
            Ok(report) => io::write_json(&path, report)?,
            Err(e) => {
                let failed =
                    FailedRun { label: &o.label, config: &o.config, error: e.to_string(), exit_code: crate::error::score_exit_code(e) };
                io::write_json(&path, &failed)?;
            }
        }
    }
    let rows: Vec<_> = outcomes.iter().map(ComparisonOutcome::row).collect();
    let mut csv = Vec::new();
    formats::write_comparison(&mut csv, &rows)?;
    io::write_atomic(&args.out.join("comparison.csv"), &csv)?;
    print!("{}", summary_table(&data, &outcomes));
    match outcomes.iter().find_map(|o| o.report.as_ref().err()) {
        Some(e) if outcomes.iter().all(|o| o.report.is_err()) => Err(e.clone().into()),
        _ => Ok(EXIT_OK),
    }
}

fn summary_table(data: &EmbeddingBatch, outcomes: &[ComparisonOutcome]) -> String {
    let counts: Vec<String> = data.class_counts().values().map(usize::to_string).collect();
    let mut out = String::new();
    let _ = writeln!(out, "class counts: {}", counts.join(" "));
    let _ = writeln!(out, "{}", trainer::STAGE2_NOTE);
    let _ = writeln!(
        out,
        "{:<16} {:>9} {:>11} {:>10} {:>10} {:>11}",
        "objective", "accuracy", "rare_recall", "intra_var", "inter_sep", "final_loss"
    );
    for o in outcomes {
        match &o.report {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "{:<16} {:>9.4} {:>11.4} {:>10.4} {:>10.4} {:>11.4}",
                    o.label, r.eval.accuracy, r.eval.rare_class_recall, r.eval.intra_var, r.eval.inter_sep, r.final_loss
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{:<16} failed: {e}", o.label);
            }
        }
    }
    out
}
