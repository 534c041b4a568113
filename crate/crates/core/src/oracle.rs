//! Ground-truth leave-T-out effects via full warm-started retraining.
//!
//! Retrains are cached keyed by (dataset hash, model spec, fit weights,
//! sorted T). The on-disk cache is a directory of JSON files named by the
//! 64-bit key hash; writes go through a temp file + rename so concurrent
//! sweeps can share a cache directory.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use faer::Col;
use serde::{Deserialize, Serialize};

use crate::dataset::{fnv_init, fnv_u64, Dataset};
use crate::error::Result;
use crate::evaluation::EvaluationFn;
use crate::glm::{self, FittedModel};
use crate::linalg;
use crate::selection::RemovalSet;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetrainResult {
    pub set: RemovalSet,
    pub theta_removed: Vec<f64>,
    pub solver_iters: usize,
    pub grad_norm: f64,
}

impl RetrainResult {
    pub fn theta(&self) -> Col<f64> {
        linalg::col_from_slice(&self.theta_removed)
    }
}

/// Append-only retrain cache: an in-memory map plus an optional directory.
pub struct RetrainCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<u64, Arc<RetrainResult>>>,
}

impl RetrainCache {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir,
            mem: Mutex::new(HashMap::new()),
        })
    }

    pub fn in_memory() -> Self {
        Self {
            dir: None,
            mem: Mutex::new(HashMap::new()),
        }
    }

    fn key(model: &FittedModel, data: &Dataset, indices: &[usize]) -> u64 {
        let mut h = fnv_init();
        h = fnv_u64(h, data.content_hash());
        h = fnv_u64(h, match model.spec().family {
            glm::Family::Logistic => 1,
            glm::Family::LeastSquares => 2,
        });
        h = fnv_u64(h, model.spec().lambda.to_bits());
        for &w in model.weights() {
            h = fnv_u64(h, w.to_bits());
        }
        for &i in indices {
            h = fnv_u64(h, i as u64);
        }
        h
    }

    fn path_for(&self, key: u64) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key:016x}.json")))
    }

    fn get(&self, key: u64) -> Option<Arc<RetrainResult>> {
        if let Some(hit) = self.mem.lock().unwrap().get(&key) {
            return Some(hit.clone());
        }
        let path = self.path_for(key)?;
        let text = std::fs::read_to_string(path).ok()?;
        let parsed: RetrainResult = serde_json::from_str(&text).ok()?;
        let arc = Arc::new(parsed);
        self.mem.lock().unwrap().insert(key, arc.clone());
        Some(arc)
    }

    fn put(&self, key: u64, value: Arc<RetrainResult>) {
        if let Some(path) = self.path_for(key) {
            let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
            if std::fs::write(&tmp, serde_json::to_string(&*value).unwrap()).is_ok() {
                let _ = std::fs::rename(&tmp, &path);
            }
        }
        self.mem.lock().unwrap().insert(key, value);
    }
}

/// Refit with the samples of `set` zero-weighted, warm-started at the
/// current optimum, under the same strict tolerance as the original fit.
pub fn retrain_without(
    model: &FittedModel,
    data: &Dataset,
    set: &RemovalSet,
    cache: Option<&RetrainCache>,
) -> Result<Arc<RetrainResult>> {
    set.validate_against(data.n())?;
    let key = cache.map(|c| (c, RetrainCache::key(model, data, &set.indices)));
    if let Some((c, k)) = key {
        if let Some(hit) = c.get(k) {
            return Ok(hit);
        }
    }

    let mut weights = model.weights().to_vec();
    for &i in &set.indices {
        weights[i] = 0.0;
    }
    let refit = glm::fit_with(data, model.spec(), &weights, Some(model.theta()), false)?;
    let result = Arc::new(RetrainResult {
        set: set.clone(),
        theta_removed: linalg::col_to_vec(refit.theta()),
        solver_iters: refit.iters(),
        grad_norm: refit.grad_norm(),
    });
    if let Some((c, k)) = key {
        c.put(k, result.clone());
    }
    Ok(result)
}

/// Ground-truth change `f(θ̂₋T) − f(θ̂)`.
pub fn actual_effect(
    model: &FittedModel,
    data: &Dataset,
    set: &RemovalSet,
    f: &EvaluationFn,
    cache: Option<&RetrainCache>,
) -> Result<f64> {
    let retrain = retrain_without(model, data, set, cache)?;
    let at_removed = f.evaluate_at(retrain.theta().as_ref(), data, model.spec())?;
    let at_base = f.evaluate_at(model.theta(), data, model.spec())?;
    Ok(at_removed - at_base)
}
