//! Actual-vs-predicted sweeps over removal strategies, subset sizes, and
//! accuracy metrics, plus the regression summaries read off the results.
//!
//! Three scalar metrics measure a removal's effect: the total predicted
//! class-1 probability over a test subset, the total loss over that subset,
//! and the full training objective including the removed samples
//! ("self-loss"). The default reported effect is the re-evaluation
//! `f(θ̂ + Δθ) − f(θ̂)`; a flag switches to the linearized `⟨∇f, Δθ⟩`.

use std::io::Write;
use std::path::Path;

use faer::{Col, ColRef};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{self, Method};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{self, FittedModel, ModelSpec};
use crate::linalg;
use crate::oracle::{self, RetrainCache};
use crate::rng::{derive_seed, CounterRng};
use crate::selection::{self, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    TestPredSum,
    TestLossSum,
    SelfLoss,
    SingleLogit(usize),
}

impl MetricKind {
    pub const STANDARD: [MetricKind; 3] = [
        MetricKind::TestPredSum,
        MetricKind::TestLossSum,
        MetricKind::SelfLoss,
    ];
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::TestPredSum => write!(f, "test-pred-sum"),
            MetricKind::TestLossSum => write!(f, "test-loss-sum"),
            MetricKind::SelfLoss => write!(f, "self-loss"),
            MetricKind::SingleLogit(t) => write!(f, "single-logit-{t}"),
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test-pred-sum" => Ok(MetricKind::TestPredSum),
            "test-loss-sum" => Ok(MetricKind::TestLossSum),
            "self-loss" => Ok(MetricKind::SelfLoss),
            other => match other.strip_prefix("single-logit-") {
                Some(t) => Ok(MetricKind::SingleLogit(t.parse().map_err(|_| {
                    Error::Config(format!("bad single-logit index in '{other}'"))
                })?)),
                None => Err(Error::Config(format!("unknown metric '{other}'"))),
            },
        }
    }
}

/// A scalar evaluation function of the parameters.
#[derive(Clone, Debug)]
pub struct EvaluationFn {
    pub kind: MetricKind,
    pub test_subset: Vec<usize>,
}

impl EvaluationFn {
    pub fn test_pred_sum(test_subset: Vec<usize>) -> Self {
        Self {
            kind: MetricKind::TestPredSum,
            test_subset,
        }
    }

    pub fn test_loss_sum(test_subset: Vec<usize>) -> Self {
        Self {
            kind: MetricKind::TestLossSum,
            test_subset,
        }
    }

    pub fn self_loss() -> Self {
        Self {
            kind: MetricKind::SelfLoss,
            test_subset: Vec::new(),
        }
    }

    pub fn single_logit(test_index: usize) -> Self {
        Self {
            kind: MetricKind::SingleLogit(test_index),
            test_subset: Vec::new(),
        }
    }

    pub fn for_kind(kind: MetricKind, test_subset: &[usize]) -> Self {
        match kind {
            MetricKind::SelfLoss => Self::self_loss(),
            MetricKind::SingleLogit(t) => Self::single_logit(t),
            MetricKind::TestPredSum => Self::test_pred_sum(test_subset.to_vec()),
            MetricKind::TestLossSum => Self::test_loss_sum(test_subset.to_vec()),
        }
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        let m = data.test_n();
        match self.kind {
            MetricKind::SelfLoss => Ok(()),
            MetricKind::SingleLogit(t) => {
                if t >= m {
                    Err(Error::IndexOutOfRange { index: t, len: m })
                } else {
                    Ok(())
                }
            }
            MetricKind::TestPredSum | MetricKind::TestLossSum => {
                if m == 0 {
                    return Err(Error::InvalidData(
                        "test-dependent metric on a dataset with no test split".into(),
                    ));
                }
                for &t in &self.test_subset {
                    if t >= m {
                        return Err(Error::IndexOutOfRange { index: t, len: m });
                    }
                }
                Ok(())
            }
        }
    }

    /// Evaluate at an arbitrary parameter vector.
    pub fn evaluate_at(
        &self,
        theta: ColRef<'_, f64>,
        data: &Dataset,
        spec: &ModelSpec,
    ) -> Result<f64> {
        self.check(data)?;
        let family = spec.family;
        Ok(match self.kind {
            MetricKind::TestPredSum => linalg::compensated_sum(self.test_subset.iter().map(|&t| {
                let z = linalg::dot(theta, data.test_feature(t));
                match family {
                    glm::Family::Logistic => glm::sigmoid(z),
                    glm::Family::LeastSquares => z,
                }
            })),
            MetricKind::TestLossSum => linalg::compensated_sum(self.test_subset.iter().map(|&t| {
                let z = linalg::dot(theta, data.test_feature(t));
                glm::sample_loss(family, z, data.test_label(t))
            })),
            MetricKind::SelfLoss => {
                glm::total_loss(theta, data, spec, &vec![1.0; data.n()])?
            }
            MetricKind::SingleLogit(t) => linalg::dot(theta, data.test_feature(t)),
        })
    }

    pub fn evaluate(&self, model: &FittedModel, data: &Dataset) -> Result<f64> {
        self.evaluate_at(model.theta(), data, model.spec())
    }

    /// ∇f at an arbitrary parameter vector.
    pub fn gradient_at(
        &self,
        theta: ColRef<'_, f64>,
        data: &Dataset,
        spec: &ModelSpec,
    ) -> Result<Col<f64>> {
        self.check(data)?;
        let d = data.dim();
        let family = spec.family;
        Ok(match self.kind {
            MetricKind::TestPredSum => {
                let mut g = Col::<f64>::zeros(d);
                for &t in &self.test_subset {
                    let x = data.test_feature(t);
                    let z = linalg::dot(theta, x);
                    let coef = match family {
                        glm::Family::Logistic => {
                            let p = glm::sigmoid(z);
                            p * (1.0 - p)
                        }
                        glm::Family::LeastSquares => 1.0,
                    };
                    for j in 0..d {
                        g[j] += coef * x[j];
                    }
                }
                g
            }
            MetricKind::TestLossSum => {
                let mut g = Col::<f64>::zeros(d);
                for &t in &self.test_subset {
                    let x = data.test_feature(t);
                    let z = linalg::dot(theta, x);
                    let r = glm::sample_residual(family, z, data.test_label(t));
                    for j in 0..d {
                        g[j] += r * x[j];
                    }
                }
                g
            }
            MetricKind::SelfLoss => glm::total_gradient(theta, data, spec, &vec![1.0; data.n()]),
            MetricKind::SingleLogit(t) => data.test_feature(t).to_owned(),
        })
    }

    pub fn gradient(&self, model: &FittedModel, data: &Dataset) -> Result<Col<f64>> {
        self.gradient_at(model.theta(), data, model.spec())
    }

    /// Both effect conventions for a parameter change `delta`:
    /// (⟨∇f(θ̂), Δ⟩, f(θ̂+Δ) − f(θ̂)).
    pub fn effects(
        &self,
        model: &FittedModel,
        data: &Dataset,
        delta: ColRef<'_, f64>,
    ) -> Result<(f64, f64)> {
        let grad = self.gradient(model, data)?;
        let linear = linalg::dot(grad.as_ref(), delta);
        let base = self.evaluate(model, data)?;
        let moved = Col::from_fn(delta.nrows(), |j| model.theta()[j] + delta[j]);
        let reeval = self.evaluate_at(moved.as_ref(), data, model.spec())? - base;
        Ok((linear, reeval))
    }
}

/// Test subset used by the test metrics: the ⌈size/2⌉ highest-loss test
/// points plus a uniform draw from the rest.
pub fn build_test_subset(
    data: &Dataset,
    model: &FittedModel,
    size: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let m = data.test_n();
    if m == 0 {
        return Err(Error::InvalidData("cannot build a test subset: no test split".into()));
    }
    if size > m {
        return Err(Error::Config(format!("test subset size {size} exceeds m = {m}")));
    }
    let family = model.spec().family;
    let losses: Vec<f64> = (0..m)
        .map(|t| {
            let z = linalg::dot(model.theta(), data.test_feature(t));
            glm::sample_loss(family, z, data.test_label(t))
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| losses[b].partial_cmp(&losses[a]).unwrap().then(a.cmp(&b)));
    let n_high = size.div_ceil(2).min(size);
    let mut subset: Vec<usize> = order[..n_high].to_vec();
    let rest: Vec<usize> = order[n_high..].to_vec();
    let mut rng = CounterRng::new(seed).substream(0x7e57);
    let picks = rng.sample_indices(rest.len(), size - n_high);
    subset.extend(picks.iter().map(|&p| rest[p]));
    subset.sort_unstable();
    Ok(subset)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RecordStatus {
    Ok,
    Skipped(String),
}

impl std::fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordStatus::Ok => write!(f, "ok"),
            RecordStatus::Skipped(reason) => {
                write!(f, "skipped:{}", reason.replace([',', '\n'], ";"))
            }
        }
    }
}

/// One (strategy, k, metric) cell of a sweep.
#[derive(Clone, Debug)]
pub struct EvaluationRecord {
    pub dataset: String,
    pub strategy: Strategy,
    pub k: usize,
    pub metric: MetricKind,
    pub actual: f64,
    pub pred_if: f64,
    pub pred_rif: f64,
    pub pred_ns: f64,
    pub seed: u64,
    pub status: RecordStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectMode {
    /// f(θ̂+Δ) − f(θ̂) (default)
    Reeval,
    /// ⟨∇f(θ̂), Δ⟩
    Linear,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub strategies: Vec<Strategy>,
    /// None = the 0.1%–5% schedule for this n.
    pub schedule: Option<Vec<usize>>,
    pub metrics: Vec<MetricKind>,
    pub seed: u64,
    pub test_subset_size: usize,
    pub effect_mode: EffectMode,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            schedule: None,
            metrics: MetricKind::STANDARD.to_vec(),
            seed: 0,
            test_subset_size: 50,
            effect_mode: EffectMode::Reeval,
        }
    }
}

pub struct SweepOutput {
    pub records: Vec<EvaluationRecord>,
    pub test_subset: Vec<usize>,
    pub max_leverage: f64,
    pub test_accuracy: Option<f64>,
}

fn is_numerical(e: &Error) -> bool {
    e.exit_code() == 3
}

/// Seed of one (strategy, k) sweep cell, derived from the master seed.
pub fn cell_seed(master: u64, strategy: Strategy, k: usize) -> u64 {
    derive_seed(derive_seed(master, 0xCE11 + strategy.id()), k as u64)
}

/// Run the full actual-vs-predicted sweep. Records are produced in a stable
/// order (strategy, then k, then metric); `on_record` sees them in that
/// order as parallel batches complete, so output can be streamed.
pub fn run_sweep(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &SweepOptions,
    cache: Option<&RetrainCache>,
    mut on_record: impl FnMut(&EvaluationRecord),
) -> Result<SweepOutput> {
    let model = glm::fit_full(data, spec)?;
    let batch = attribution::attribute_all(&model, data)?;

    let needs_test = opts.metrics.iter().any(|m| {
        matches!(m, MetricKind::TestPredSum | MetricKind::TestLossSum)
    }) || opts
        .strategies
        .iter()
        .any(|s| selection::TopMetric::from_strategy(*s).is_some());
    let test_subset = if needs_test {
        build_test_subset(data, &model, opts.test_subset_size.min(data.test_n()), opts.seed)?
    } else {
        Vec::new()
    };

    let schedule = match &opts.schedule {
        Some(s) => s.clone(),
        None => selection::size_schedule(data.n()),
    };

    let cells: Vec<(Strategy, usize)> = opts
        .strategies
        .iter()
        .flat_map(|&s| schedule.iter().map(move |&k| (s, k)))
        .collect();

    let workers = rayon::current_num_threads().max(1);
    let mut records = Vec::with_capacity(cells.len() * opts.metrics.len());
    for chunk in cells.chunks((workers * 4).max(1)) {
        let chunk_results: Vec<Result<Vec<EvaluationRecord>>> = chunk
            .par_iter()
            .map(|&(strategy, k)| {
                run_cell(data, &model, &batch, opts, cache, &test_subset, strategy, k)
            })
            .collect();
        for res in chunk_results {
            for rec in res? {
                on_record(&rec);
                records.push(rec);
            }
        }
    }

    Ok(SweepOutput {
        records,
        test_subset,
        max_leverage: batch.max_leverage(),
        test_accuracy: model.test_accuracy(data),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    data: &Dataset,
    model: &FittedModel,
    batch: &attribution::BatchAttribution,
    opts: &SweepOptions,
    cache: Option<&RetrainCache>,
    test_subset: &[usize],
    strategy: Strategy,
    k: usize,
) -> Result<Vec<EvaluationRecord>> {
    let seed = cell_seed(opts.seed, strategy, k);
    let mut rows = Vec::with_capacity(opts.metrics.len());
    let skip_all = |reason: String, rows: &mut Vec<EvaluationRecord>| {
        for &metric in &opts.metrics {
            rows.push(EvaluationRecord {
                dataset: data.name.clone(),
                strategy,
                k,
                metric,
                actual: 0.0,
                pred_if: 0.0,
                pred_rif: 0.0,
                pred_ns: 0.0,
                seed,
                status: RecordStatus::Skipped(reason.clone()),
            });
        }
    };

    let set = match selection::build_set(model, data, strategy, k, seed, test_subset) {
        Ok(s) => s,
        Err(e) if is_numerical(&e) => {
            skip_all(format!("selection: {e}"), &mut rows);
            return Ok(rows);
        }
        Err(e) => return Err(e),
    };

    let ns_delta = match attribution::newton_step_delta(model, data, &set.indices) {
        Ok(d) => d,
        Err(e) if is_numerical(&e) => {
            skip_all(format!("newton-step: {e}"), &mut rows);
            return Ok(rows);
        }
        Err(e) => return Err(e),
    };
    let if_delta = batch.delta_sum(&set.indices, Method::If);
    let rif_delta = batch.delta_sum(&set.indices, Method::Rif);

    let retrain = match oracle::retrain_without(model, data, &set, cache) {
        Ok(r) => r,
        Err(e) if is_numerical(&e) => {
            skip_all(format!("retrain: {e}"), &mut rows);
            return Ok(rows);
        }
        Err(e) => return Err(e),
    };
    let theta_removed = retrain.theta();

    for &metric in &opts.metrics {
        let f = EvaluationFn::for_kind(metric, test_subset);
        let base = f.evaluate(model, data)?;
        let actual = f.evaluate_at(theta_removed.as_ref(), data, model.spec())? - base;
        let pred = |delta: ColRef<'_, f64>| -> Result<f64> {
            match opts.effect_mode {
                EffectMode::Reeval => {
                    let moved = Col::from_fn(delta.nrows(), |j| model.theta()[j] + delta[j]);
                    Ok(f.evaluate_at(moved.as_ref(), data, model.spec())? - base)
                }
                EffectMode::Linear => {
                    let grad = f.gradient(model, data)?;
                    Ok(linalg::dot(grad.as_ref(), delta))
                }
            }
        };
        rows.push(EvaluationRecord {
            dataset: data.name.clone(),
            strategy,
            k,
            metric,
            actual,
            pred_if: pred(if_delta.as_ref())?,
            pred_rif: pred(rif_delta.as_ref())?,
            pred_ns: pred(ns_delta.as_ref())?,
            seed,
            status: RecordStatus::Ok,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SummaryRow {
    /// None = pooled across strategies.
    pub strategy: Option<Strategy>,
    pub metric: MetricKind,
    pub method: Method,
    pub count: usize,
    pub slope: f64,
    pub r2: f64,
    pub mean_signed_error: f64,
    pub sufficient: bool,
}

/// Least-squares regression of pred on actual: slope and R².
pub fn regression(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let mean_a = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_p = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_p = 0.0;
    for &(a, p) in points {
        cov += (a - mean_a) * (p - mean_p);
        var_a += (a - mean_a) * (a - mean_a);
        var_p += (p - mean_p) * (p - mean_p);
    }
    if var_a == 0.0 {
        return (0.0, 0.0);
    }
    let slope = cov / var_a;
    let r2 = if var_p == 0.0 {
        0.0
    } else {
        (cov * cov) / (var_a * var_p)
    };
    (slope, r2)
}

fn pred_of(rec: &EvaluationRecord, method: Method) -> f64 {
    match method {
        Method::If => rec.pred_if,
        Method::Rif => rec.pred_rif,
        Method::Ns => rec.pred_ns,
    }
}

/// Per-(strategy, metric) and pooled per-metric regression summaries for
/// each method. Rows with fewer than 3 points are marked insufficient.
pub fn summarize(records: &[EvaluationRecord]) -> Vec<SummaryRow> {
    let ok: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.status == RecordStatus::Ok)
        .collect();
    let mut strategies: Vec<Strategy> = Vec::new();
    let mut metrics: Vec<MetricKind> = Vec::new();
    for r in &ok {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric);
        }
    }

    let mut rows = Vec::new();
    let groups: Vec<Option<Strategy>> = std::iter::once(None)
        .chain(strategies.iter().copied().map(Some))
        .collect();
    for group in groups {
        for &metric in &metrics {
            for method in [Method::If, Method::Rif, Method::Ns] {
                let pts: Vec<(f64, f64)> = ok
                    .iter()
                    .filter(|r| r.metric == metric && group.is_none_or(|s| r.strategy == s))
                    .map(|r| (r.actual, pred_of(r, method)))
                    .collect();
                let (slope, r2) = regression(&pts);
                let mean_signed_error = if pts.is_empty() {
                    0.0
                } else {
                    pts.iter().map(|(a, p)| p - a).sum::<f64>() / pts.len() as f64
                };
                rows.push(SummaryRow {
                    strategy: group,
                    metric,
                    method,
                    count: pts.len(),
                    slope,
                    r2,
                    mean_signed_error,
                    sufficient: pts.len() >= 3,
                });
            }
        }
    }
    rows
}

/// Mean |pred − actual| over ok records for one method.
pub fn mean_abs_error(records: &[EvaluationRecord], method: Method) -> f64 {
    let ok: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.status == RecordStatus::Ok)
        .collect();
    if ok.is_empty() {
        return 0.0;
    }
    ok.iter()
        .map(|r| (pred_of(r, method) - r.actual).abs())
        .sum::<f64>()
        / ok.len() as f64
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

pub const RECORDS_CSV_HEADER: &str =
    "dataset,strategy,k,metric,actual,pred_if,pred_rif,pred_ns,seed,status";

pub fn record_csv_line(r: &EvaluationRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.dataset.replace(',', ";"),
        r.strategy,
        r.k,
        r.metric,
        r.actual,
        r.pred_if,
        r.pred_rif,
        r.pred_ns,
        r.seed,
        r.status
    )
}

pub fn records_to_csv(records: &[EvaluationRecord]) -> String {
    let mut s = String::from(RECORDS_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&record_csv_line(r));
        s.push('\n');
    }
    s
}

pub fn write_records_csv(path: &Path, records: &[EvaluationRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(records_to_csv(records).as_bytes())?;
    Ok(())
}

pub const SUMMARY_CSV_HEADER: &str =
    "strategy,metric,method,count,slope,r2,mean_signed_error,status";

pub fn summary_csv_line(r: &SummaryRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.strategy.map_or("all".to_string(), |g| g.to_string()),
        r.metric,
        r.method,
        r.count,
        r.slope,
        r.r2,
        r.mean_signed_error,
        if r.sufficient { "ok" } else { "insufficient" },
    )
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&summary_csv_line(r));
        s.push('\n');
    }
    s
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(summary_to_csv(rows).as_bytes())?;
    Ok(())
}
