//! Removal-set construction: clustered, top-percentile, and random
//! strategies over a size schedule running from 0.1% to 5% of the training
//! set.
//!
//! Every strategy is a pure function of `(data, model, k, seed)`. Ties are
//! always broken toward the lower sample index so results are reproducible.

use serde::{Deserialize, Serialize};

use crate::attribution;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::EvaluationFn;
use crate::glm::FittedModel;
use crate::rng::CounterRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FeatureCluster,
    L2Cluster,
    TopPosLoss,
    TopNegLoss,
    TopPosPred,
    TopNegPred,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::FeatureCluster,
        Strategy::L2Cluster,
        Strategy::TopPosLoss,
        Strategy::TopNegLoss,
        Strategy::TopPosPred,
        Strategy::TopNegPred,
        Strategy::Random,
    ];

    /// Stable id used for per-strategy seed derivation.
    pub fn id(self) -> u64 {
        Strategy::ALL.iter().position(|&s| s == self).unwrap() as u64
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::FeatureCluster => "feature-cluster",
            Strategy::L2Cluster => "l2-cluster",
            Strategy::TopPosLoss => "top-pos-loss",
            Strategy::TopNegLoss => "top-neg-loss",
            Strategy::TopPosPred => "top-pos-pred",
            Strategy::TopNegPred => "top-neg-pred",
            Strategy::Random => "random",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature-cluster" => Ok(Strategy::FeatureCluster),
            "l2-cluster" => Ok(Strategy::L2Cluster),
            "top-pos-loss" => Ok(Strategy::TopPosLoss),
            "top-neg-loss" => Ok(Strategy::TopNegLoss),
            "top-pos-pred" => Ok(Strategy::TopPosPred),
            "top-neg-pred" => Ok(Strategy::TopNegPred),
            "random" => Ok(Strategy::Random),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// A removal set `T` with its provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemovalSet {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: u64,
    pub indices: Vec<usize>,
}

impl RemovalSet {
    pub fn new(strategy: Strategy, k: usize, seed: u64, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != k {
            return Err(Error::Config(format!(
                "removal set claims k = {k} but has {} indices",
                indices.len()
            )));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "removal-set indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            strategy,
            k,
            seed,
            indices,
        })
    }

    pub fn validate_against(&self, n: usize) -> Result<()> {
        if let Some(&max) = self.indices.last() {
            if max >= n {
                return Err(Error::IndexOutOfRange { index: max, len: n });
            }
        }
        Ok(())
    }

    pub fn empty(strategy: Strategy, seed: u64) -> Self {
        Self {
            strategy,
            k: 0,
            seed,
            indices: Vec::new(),
        }
    }
}

/// 40 subset sizes: `round(n·p)` for `p` linearly spaced over
/// `[0.001, 0.05]`, clamped to ≥ 1 and deduplicated preserving order.
pub fn size_schedule(n: usize) -> Vec<usize> {
    const POINTS: usize = 40;
    const P_LO: f64 = 0.001;
    const P_HI: f64 = 0.05;
    let mut out = Vec::with_capacity(POINTS);
    for j in 0..POINTS {
        let p = P_LO + (P_HI - P_LO) * j as f64 / (POINTS - 1) as f64;
        let k = ((n as f64 * p).round() as usize).max(1);
        if out.last() != Some(&k) {
            out.push(k);
        }
    }
    out
}

/// Indices of the `k` smallest scores, ties broken by lower index.
fn k_smallest_by_score(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut out = order[..k].to_vec();
    out.sort_unstable();
    out
}

/// `k` samples whose value in a seed-chosen feature column is closest (in
/// absolute difference) to that of a seed-chosen center sample.
pub fn cluster_by_feature(data: &Dataset, k: usize, seed: u64) -> Result<RemovalSet> {
    let n = data.n();
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = CounterRng::new(seed).substream(Strategy::FeatureCluster.id());
    let center = rng.next_below(n as u64) as usize;
    let col = rng.next_below(data.dim() as u64) as usize;
    let pivot = data.features().get(center, col);
    let scores: Vec<f64> = (0..n)
        .map(|i| (data.features().get(i, col) - pivot).abs())
        .collect();
    RemovalSet::new(Strategy::FeatureCluster, k, seed, k_smallest_by_score(&scores, k))
}

/// `k` samples closest to a seed-chosen center sample in L2 distance.
pub fn cluster_by_l2(data: &Dataset, k: usize, seed: u64) -> Result<RemovalSet> {
    let n = data.n();
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = CounterRng::new(seed).substream(Strategy::L2Cluster.id());
    let center = rng.next_below(n as u64) as usize;
    let cx = data.feature(center);
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let xi = data.feature(i);
            let mut s = 0.0;
            for j in 0..xi.nrows() {
                let dlt = xi[j] - cx[j];
                s += dlt * dlt;
            }
            s
        })
        .collect();
    RemovalSet::new(Strategy::L2Cluster, k, seed, k_smallest_by_score(&scores, k))
}

/// `k` samples selected uniformly at random.
pub fn random_subset(n: usize, k: usize, seed: u64) -> Result<RemovalSet> {
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds n = {n}")));
    }
    let mut rng = CounterRng::new(seed).substream(Strategy::Random.id());
    RemovalSet::new(Strategy::Random, k, seed, rng.sample_indices(n, k))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopMetric {
    PosLoss,
    NegLoss,
    PosPred,
    NegPred,
}

impl TopMetric {
    pub fn strategy(self) -> Strategy {
        match self {
            TopMetric::PosLoss => Strategy::TopPosLoss,
            TopMetric::NegLoss => Strategy::TopNegLoss,
            TopMetric::PosPred => Strategy::TopPosPred,
            TopMetric::NegPred => Strategy::TopNegPred,
        }
    }

    pub fn from_strategy(s: Strategy) -> Option<TopMetric> {
        match s {
            Strategy::TopPosLoss => Some(TopMetric::PosLoss),
            Strategy::TopNegLoss => Some(TopMetric::NegLoss),
            Strategy::TopPosPred => Some(TopMetric::PosPred),
            Strategy::TopNegPred => Some(TopMetric::NegPred),
            _ => None,
        }
    }

    fn wants_positive(self) -> bool {
        matches!(self, TopMetric::PosLoss | TopMetric::PosPred)
    }
}

/// Rank by precomputed per-sample scores, pool the top `2k` (in the sign
/// direction of the variant), and return a uniform `k`-subset of the pool.
pub fn top_percentile_from_scores(
    scores: &[f64],
    metric: TopMetric,
    k: usize,
    seed: u64,
) -> Result<RemovalSet> {
    let n = scores.len();
    if 2 * k > n {
        return Err(Error::Config(format!(
            "top-percentile needs 2k ≤ n (k = {k}, n = {n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if metric.wants_positive() {
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    } else {
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    }
    let mut pool = order[..2 * k].to_vec();
    pool.sort_unstable();
    let mut rng = CounterRng::new(seed).substream(0x40 + metric.strategy().id());
    let chosen = rng.sample_indices(2 * k, k);
    let indices: Vec<usize> = chosen.iter().map(|&p| pool[p]).collect();
    // pool sorted + ascending positions => indices already sorted
    RemovalSet::new(metric.strategy(), k, seed, indices)
}

/// Rank samples by the influence-function prediction of their removal
/// effect on the requested test metric (ranking always uses IF, not RIF,
/// for comparability), then sample from the top-2k pool.
pub fn top_percentile(
    model: &FittedModel,
    data: &Dataset,
    metric: TopMetric,
    k: usize,
    seed: u64,
    test_subset: &[usize],
) -> Result<RemovalSet> {
    let f = match metric {
        TopMetric::PosLoss | TopMetric::NegLoss => {
            EvaluationFn::test_loss_sum(test_subset.to_vec())
        }
        TopMetric::PosPred | TopMetric::NegPred => {
            EvaluationFn::test_pred_sum(test_subset.to_vec())
        }
    };
    let scores = attribution::per_sample_linear_effects(model, data, &f)?;
    top_percentile_from_scores(&scores, metric, k, seed)
}

/// Build the removal set for one (strategy, k, seed) cell.
pub fn build_set(
    model: &FittedModel,
    data: &Dataset,
    strategy: Strategy,
    k: usize,
    seed: u64,
    test_subset: &[usize],
) -> Result<RemovalSet> {
    let set = match strategy {
        Strategy::FeatureCluster => cluster_by_feature(data, k, seed)?,
        Strategy::L2Cluster => cluster_by_l2(data, k, seed)?,
        Strategy::Random => random_subset(data.n(), k, seed)?,
        top => top_percentile(
            model,
            data,
            TopMetric::from_strategy(top).unwrap(),
            k,
            seed,
            test_subset,
        )?,
    };
    set.validate_against(data.n())?;
    Ok(set)
}
