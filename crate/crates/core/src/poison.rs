//! Flipped-label poisoning: append a mislabeled copy of a test sample to
//! the training set, then ask each estimator to predict the effect that
//! removing the poisoned sample would have on its own logit.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::attribution;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::EvaluationFn;
use crate::glm::{self, ModelSpec};
use crate::linalg;
use crate::oracle;
use crate::rng::{derive_seed, CounterRng};
use crate::selection::{RemovalSet, Strategy};

#[derive(Clone, Debug)]
pub struct PoisonTrial {
    pub test_index: usize,
    /// Row index of the injected sample (= original n).
    pub poisoned_train_index: usize,
    pub actual_logit_change: f64,
    pub pred_if: f64,
    pub pred_rif: f64,
    pub pred_ns: f64,
}

/// New dataset with train row `n` = (x_test, 1 − y_test); the test split is
/// unchanged and the input dataset is untouched.
pub fn inject(data: &Dataset, test_index: usize) -> Result<Dataset> {
    if test_index >= data.test_n() {
        return Err(Error::IndexOutOfRange {
            index: test_index,
            len: data.test_n(),
        });
    }
    let x = (0..data.dim())
        .map(|j| data.test_feature(test_index)[j])
        .collect::<Vec<f64>>();
    let y = 1.0 - data.test_label(test_index);
    data.with_appended_train_row(&x, y)
}

/// Train on the poisoned data (optionally warm-started from the clean-data
/// optimum) and compare the three estimates of the poisoned sample's removal
/// effect on its own logit against a full retrain.
pub fn run_trial(
    data: &Dataset,
    spec: &ModelSpec,
    test_index: usize,
    warm_start: Option<faer::ColRef<'_, f64>>,
) -> Result<PoisonTrial> {
    let poisoned = inject(data, test_index)?;
    let n_poisoned = poisoned.n();
    let idx = n_poisoned - 1;
    let model = glm::fit(&poisoned, spec, &vec![1.0; n_poisoned], warm_start)?;

    // f(θ) = ⟨θ, x_test⟩ is linear, so linear and re-evaluated effects agree.
    let f = EvaluationFn::single_logit(test_index);
    let x_test = poisoned.test_feature(test_index);

    let set = RemovalSet::new(Strategy::Random, 1, 0, vec![idx])?;
    let actual = oracle::actual_effect(&model, &poisoned, &set, &f, None)?;

    let ifv = attribution::influence(&model, &poisoned, idx)?;
    let rifv = attribution::rescaled_influence(&model, &poisoned, idx)?;
    let ns = attribution::newton_step_delta(&model, &poisoned, &[idx])?;

    Ok(PoisonTrial {
        test_index,
        poisoned_train_index: idx,
        actual_logit_change: actual,
        pred_if: linalg::dot(ifv.delta_theta.as_ref(), x_test),
        pred_rif: linalg::dot(rifv.delta_theta.as_ref(), x_test),
        pred_ns: linalg::dot(ns.as_ref(), x_test),
    })
}

/// Run `trials` independent poisoning trials with uniformly drawn test
/// indices. A clean-data fit provides the warm start shared by all trials.
pub fn run_experiment(
    data: &Dataset,
    spec: &ModelSpec,
    trials: usize,
    seed: u64,
) -> Result<Vec<PoisonTrial>> {
    if data.test_n() == 0 {
        return Err(Error::InvalidData("poisoning experiment needs a test split".into()));
    }
    let base = glm::fit_with(data, spec, &vec![1.0; data.n()], None, false)?;
    let mut rng = CounterRng::new(derive_seed(seed, 0x9012)).substream(7);
    let targets: Vec<usize> = (0..trials)
        .map(|_| rng.next_below(data.test_n() as u64) as usize)
        .collect();
    targets
        .par_iter()
        .map(|&t| run_trial(data, spec, t, Some(base.theta())))
        .collect()
}

pub const TRIALS_CSV_HEADER: &str = "test_index,actual,pred_if,pred_rif,pred_ns";

pub fn trials_to_csv(trials: &[PoisonTrial]) -> String {
    let mut s = String::from(TRIALS_CSV_HEADER);
    s.push('\n');
    for t in trials {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            t.test_index, t.actual_logit_change, t.pred_if, t.pred_rif, t.pred_ns
        ));
    }
    s
}

pub fn write_trials_csv(path: &Path, trials: &[PoisonTrial]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(trials_to_csv(trials).as_bytes())?;
    Ok(())
}
