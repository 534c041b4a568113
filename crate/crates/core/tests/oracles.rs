//! Cross-checks of every estimator against independent reference routes:
//! dense LU solves, conjugate gradients, finite differences, closed-form
//! ridge solutions, high-precision summation, and retrains at perturbed
//! weights.

mod common;

use common::*;
use faer::{Col, Mat};
use rif_core::attribution::{self, Method};
use rif_core::dataset::{self, DataFormat, Dataset, LoadOptions};
use rif_core::evaluation::{self, EvaluationFn, MetricKind, SweepOptions};
use rif_core::glm::{self, Family, ModelSpec};
use rif_core::linalg::SampleMatrix;
use rif_core::oracle::{self};
use rif_core::rng::CounterRng;
use rif_core::selection::{self, RemovalSet, Strategy};

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

#[test]
fn dataset_round_trip_100_random_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = CounterRng::new(0xD0);
    for trial in 0..100u64 {
        let n = 2 + rng.next_below(12) as usize;
        let d = 1 + rng.next_below(6) as usize;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    // Mix magnitudes to exercise float formatting.
                    .map(|_| rng.next_normal() * 10f64.powi(rng.next_below(7) as i32 - 3))
                    .collect()
            })
            .collect();
        let features = SampleMatrix::from_rows(&rows).unwrap();
        let labels: Vec<f64> = (0..n).map(|_| rng.next_below(2) as f64).collect();
        let ds = Dataset::new(
            format!("rt{trial}"),
            features,
            labels,
            SampleMatrix::zeros(d, 0),
            vec![],
        )
        .unwrap();
        for format in [DataFormat::Csv, DataFormat::Binary] {
            let path = dir.path().join(format!("t{trial}.dat"));
            dataset::save(&ds, format, &path, None).unwrap();
            let opts = LoadOptions {
                format,
                map_pm_one: false,
            };
            let back = dataset::load_split("rt", &path, None, &opts).unwrap();
            assert_eq!(
                back.content_hash(),
                ds.content_hash(),
                "{format:?} round trip drifted on trial {trial}"
            );
            // Canonical files are a fixed point of save ∘ load.
            let canon = dir.path().join(format!("t{trial}.canon"));
            dataset::save(&back, format, &canon, None).unwrap();
            assert_eq!(
                std::fs::read(&path).unwrap(),
                std::fs::read(&canon).unwrap(),
                "canonical {format:?} file not byte-stable"
            );
        }
    }
}

#[test]
fn synthesize_moments_match_law_of_large_numbers() {
    let data = common::logistic_instance(5000, 50, 1e-2, 0.0, 42).0;
    let n = data.n() as f64;
    for j in 0..data.dim() {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..data.n() {
            let v = data.features().get(i, j);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n;
        let var = sumsq / n - mean * mean;
        assert!(mean.abs() <= 5.0 / n.sqrt(), "col {j} mean {mean}");
        assert!((var - 1.0).abs() <= 0.2, "col {j} var {var}");
    }
}

#[test]
fn null_teacher_label_fraction_binomial_ci() {
    let data = common::logistic_instance(5000, 10, 1e-2, 0.0, 7).0;
    let positive = data.labels().iter().filter(|&&y| y == 1.0).count() as f64;
    let frac = positive / data.n() as f64;
    assert!((0.45..=0.55).contains(&frac), "positive fraction {frac}");
}

// ---------------------------------------------------------------------------
// glm
// ---------------------------------------------------------------------------

#[test]
fn total_loss_matches_double_double_summation() {
    let (data, model) = logistic_instance(400, 12, 1e-3, 2.0, 11);
    let mut rng = CounterRng::new(5);
    for _ in 0..10 {
        let theta = Col::from_fn(12, |_| rng.next_normal());
        let weights: Vec<f64> = (0..400).map(|_| rng.next_f64()).collect();
        let spec = model.spec();
        let fast = glm::total_loss(theta.as_ref(), &data, spec, &weights).unwrap();
        let slow = dd_sum((0..400).map(|i| {
            let z: f64 = (0..12).map(|j| theta[j] * data.feature(i)[j]).sum();
            weights[i] * glm::sample_loss(spec.family, z, data.label(i))
        })) + 0.5 * spec.lambda * (0..12).map(|j| theta[j] * theta[j]).sum::<f64>();
        assert!(rel_diff(fast, slow) < 1e-12, "{fast} vs {slow}");
    }
}

#[test]
fn per_sample_gradient_matches_central_differences() {
    let (data, _) = logistic_instance(60, 6, 1e-2, 2.0, 13);
    let mut rng = CounterRng::new(17);
    for family in [Family::Logistic, Family::LeastSquares] {
        for _ in 0..20 {
            let theta = Col::from_fn(6, |_| 0.7 * rng.next_normal());
            let i = rng.next_below(60) as usize;
            let g = glm::per_sample_gradient(theta.as_ref(), &data, i, family).unwrap();
            let eps = 1e-6;
            for j in 0..6 {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[j] += eps;
                minus[j] -= eps;
                let loss_at = |t: &Col<f64>| {
                    let z: f64 = (0..6).map(|c| t[c] * data.feature(i)[c]).sum();
                    glm::sample_loss(family, z, data.label(i))
                };
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
                assert!(
                    (g[j] - fd).abs() <= 1e-6 * g[j].abs().max(1.0),
                    "{family:?} sample {i} coord {j}: {} vs {fd}",
                    g[j]
                );
            }
        }
    }
}

#[test]
fn hessian_factor_matches_second_differences() {
    let (data, _) = logistic_instance(40, 5, 1e-2, 2.0, 19);
    let mut rng = CounterRng::new(23);
    for _ in 0..20 {
        let theta = Col::from_fn(5, |_| 0.5 * rng.next_normal());
        let i = rng.next_below(40) as usize;
        let (sigma, x) =
            glm::per_sample_hessian_factor(theta.as_ref(), &data, i, Family::Logistic).unwrap();
        let eps = 1e-4;
        for j in 0..5 {
            for c in 0..5 {
                // Central second difference of the per-sample loss.
                let loss_at = |tj: f64, tc: f64| {
                    let mut t = theta.clone();
                    t[j] += tj;
                    t[c] += tc;
                    let z: f64 = (0..5).map(|q| t[q] * data.feature(i)[q]).sum();
                    glm::sample_loss(Family::Logistic, z, data.label(i))
                };
                let fd = (loss_at(eps, eps) - loss_at(eps, -eps) - loss_at(-eps, eps)
                    + loss_at(-eps, -eps))
                    / (4.0 * eps * eps);
                let analytic = sigma * x[j] * x[c];
                assert!(
                    (analytic - fd).abs() <= 1e-5,
                    "sample {i} ({j},{c}): {analytic} vs {fd}"
                );
            }
        }
    }
}

#[test]
fn least_squares_fit_matches_closed_form_ridge() {
    let (data, model) = least_squares_instance(80, 7, 0.37, 0.4, 29);
    // Closed form via the independent LU route on (XᵀX + λI)θ = Xᵀy.
    let d = 7;
    let mut xtx = Mat::<f64>::zeros(d, d);
    let mut xty = Col::<f64>::zeros(d);
    for i in 0..data.n() {
        let x = data.feature(i);
        for r in 0..d {
            xty[r] += x[r] * data.label(i);
            for c in 0..d {
                xtx[(r, c)] += x[r] * x[c];
            }
        }
    }
    for j in 0..d {
        xtx[(j, j)] += 0.37;
    }
    let closed = lu_solve(xtx.as_ref(), xty.as_ref());
    assert!(
        col_rel_diff(model.theta(), closed.as_ref()) < 1e-8,
        "ridge mismatch"
    );
}

// ---------------------------------------------------------------------------
// attribution
// ---------------------------------------------------------------------------

#[test]
fn hessian_solve_matches_dense_lu() {
    let (data, model) = logistic_instance(90, 9, 1e-2, 2.0, 31);
    let h = dense_hessian(&model, &data);
    let mut rng = CounterRng::new(37);
    for _ in 0..10 {
        let v = Col::from_fn(9, |_| rng.next_normal());
        let fast = attribution::hessian_solve(&model, v.as_ref()).unwrap();
        let slow = lu_solve(h.as_ref(), v.as_ref());
        assert!(col_rel_diff(fast.as_ref(), slow.as_ref()) < 1e-8);
    }
}

#[test]
fn leverage_matches_conjugate_gradient_oracle() {
    let (data, model) = logistic_instance(70, 8, 1e-2, 2.0, 41);
    let h = dense_hessian(&model, &data);
    for i in 0..70 {
        let x = data.feature(i);
        let z = cg_solve(h.as_ref(), x, 1e-12);
        let zt: f64 = (0..8).map(|j| model.theta()[j] * x[j]).sum();
        let sigma = glm::sample_curvature(Family::Logistic, zt);
        let slow: f64 = sigma * (0..8).map(|j| x[j] * z[j]).sum::<f64>();
        let fast = attribution::leverage(&model, &data, i).unwrap();
        assert!(
            (fast - slow).abs() <= 1e-7 * slow.abs().max(1e-12),
            "sample {i}: {fast} vs {slow}"
        );
    }
}

#[test]
fn influence_matches_perturbed_weight_retrain() {
    let (data, model) = logistic_instance(120, 6, 1e-2, 2.0, 43);
    let eps = 1e-4;
    for i in [0usize, 25, 77] {
        let ifv = attribution::influence(&model, &data, i).unwrap();
        let mut weights = vec![1.0; 120];
        weights[i] = 1.0 - eps;
        let perturbed = glm::fit(&data, model.spec(), &weights, Some(model.theta())).unwrap();
        let fd = Col::from_fn(6, |j| (perturbed.theta()[j] - model.theta()[j]) / eps);
        assert!(
            col_rel_diff(fd.as_ref(), ifv.delta_theta.as_ref()) < 1e-3,
            "sample {i}"
        );
    }
}

#[test]
fn ridge_orthogonal_design_closed_form_influence() {
    // Orthogonal design columns: XᵀX = diag(s), so H = diag(s + λ) and
    // IFᵢ has per-component closed form gᵢ[j]/(s_j + λ).
    let n = 8;
    let d = 4;
    let mut rows = vec![vec![0.0; d]; n];
    // two samples per coordinate with distinct scales
    let scales = [1.5, 0.8, 2.0, 0.5];
    for j in 0..d {
        rows[2 * j][j] = scales[j];
        rows[2 * j + 1][j] = -scales[j];
    }
    let labels = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let data = Dataset::new(
        "orth",
        SampleMatrix::from_rows(&rows).unwrap(),
        labels,
        SampleMatrix::zeros(d, 0),
        vec![],
    )
    .unwrap();
    let lambda = 0.3;
    let model = glm::fit_full(&data, &ModelSpec::new(Family::LeastSquares, lambda)).unwrap();
    let s: Vec<f64> = (0..d).map(|j| 2.0 * scales[j] * scales[j]).collect();
    for i in 0..n {
        let g = glm::per_sample_gradient(model.theta(), &data, i, Family::LeastSquares).unwrap();
        let ifv = attribution::influence(&model, &data, i).unwrap();
        for j in 0..d {
            let closed = g[j] / (s[j] + lambda);
            assert!(
                (ifv.delta_theta[j] - closed).abs() <= 1e-10 * closed.abs().max(1e-12),
                "sample {i} coord {j}"
            );
        }
    }
}

#[test]
fn rescaled_influence_matches_dense_leave_one_out_inverse() {
    let (data, model) = logistic_instance(60, 7, 1e-2, 2.0, 47);
    let h = dense_hessian(&model, &data);
    for i in 0..60 {
        let x = data.feature(i);
        let zt: f64 = (0..7).map(|j| model.theta()[j] * x[j]).sum();
        let sigma = glm::sample_curvature(Family::Logistic, zt);
        let g = glm::per_sample_gradient(model.theta(), &data, i, Family::Logistic).unwrap();
        let mut h_loo = h.clone();
        for r in 0..7 {
            for c in 0..7 {
                h_loo[(r, c)] -= sigma * x[r] * x[c];
            }
        }
        let dense = lu_solve(h_loo.as_ref(), g.as_ref());
        let fast = attribution::rescaled_influence(&model, &data, i).unwrap();
        assert!(
            col_rel_diff(fast.delta_theta.as_ref(), dense.as_ref()) < 1e-8,
            "sample {i}"
        );
    }
}

#[test]
fn newton_step_matches_dense_leave_set_out_solve() {
    let (data, model) = logistic_instance(80, 10, 1e-2, 2.0, 53);
    let h = dense_hessian(&model, &data);
    let set: Vec<usize> = vec![3, 17, 18, 40, 66];
    let mut h_t = h.clone();
    let mut gsum = Col::<f64>::zeros(10);
    for &i in &set {
        let x = data.feature(i);
        let zt: f64 = (0..10).map(|j| model.theta()[j] * x[j]).sum();
        let sigma = glm::sample_curvature(Family::Logistic, zt);
        let g = glm::per_sample_gradient(model.theta(), &data, i, Family::Logistic).unwrap();
        for r in 0..10 {
            gsum[r] += g[r];
            for c in 0..10 {
                h_t[(r, c)] -= sigma * x[r] * x[c];
            }
        }
    }
    let dense = lu_solve(h_t.as_ref(), gsum.as_ref());
    let fast = attribution::newton_step_delta(&model, &data, &set).unwrap();
    assert!(col_rel_diff(fast.as_ref(), dense.as_ref()) < 1e-8);
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

#[test]
fn retrain_matches_closed_form_ridge_on_remaining_rows() {
    let (data, model) = least_squares_instance(50, 5, 0.9, 0.5, 59);
    let removed = RemovalSet::new(Strategy::Random, 3, 0, vec![4, 20, 33]).unwrap();
    let r = oracle::retrain_without(&model, &data, &removed, None).unwrap();
    let d = 5;
    let mut xtx = Mat::<f64>::zeros(d, d);
    let mut xty = Col::<f64>::zeros(d);
    for i in 0..data.n() {
        if removed.indices.contains(&i) {
            continue;
        }
        let x = data.feature(i);
        for rr in 0..d {
            xty[rr] += x[rr] * data.label(i);
            for c in 0..d {
                xtx[(rr, c)] += x[rr] * x[c];
            }
        }
    }
    for j in 0..d {
        xtx[(j, j)] += 0.9;
    }
    let closed = lu_solve(xtx.as_ref(), xty.as_ref());
    assert!(col_rel_diff(r.theta().as_ref(), closed.as_ref()) < 1e-8);
}

#[test]
fn actual_effect_matches_double_retrain_reevaluation() {
    let (data, model) = logistic_instance(70, 6, 1e-2, 2.0, 61);
    let set = RemovalSet::new(Strategy::Random, 2, 0, vec![12, 44]).unwrap();
    let f = EvaluationFn::test_loss_sum((0..10).collect());
    let eff = oracle::actual_effect(&model, &data, &set, &f, None).unwrap();
    // Independent route: fresh cold fit on the reduced weights, evaluate f.
    let mut weights = vec![1.0; 70];
    for &i in &set.indices {
        weights[i] = 0.0;
    }
    let refit = glm::fit(&data, model.spec(), &weights, None).unwrap();
    let slow = f.evaluate_at(refit.theta(), &data, model.spec()).unwrap()
        - f.evaluate(&model, &data).unwrap();
    assert!((eff - slow).abs() <= 1e-7 * slow.abs().max(1e-10));
}

// ---------------------------------------------------------------------------
// selection
// ---------------------------------------------------------------------------

#[test]
fn cluster_by_feature_matches_full_sort_oracle() {
    let (data, _) = logistic_instance(100, 5, 1e-2, 1.0, 67);
    for seed in 0..20u64 {
        let k = 7;
        let set = selection::cluster_by_feature(&data, k, seed).unwrap();
        // Oracle: recover (center, column) from the documented stream and
        // sort all samples by (|Δ|, index).
        let mut rng = CounterRng::new(seed).substream(Strategy::FeatureCluster.id());
        let center = rng.next_below(100) as usize;
        let col = rng.next_below(5) as usize;
        let pivot = data.features().get(center, col);
        let mut order: Vec<usize> = (0..100).collect();
        order.sort_by(|&a, &b| {
            let da = (data.features().get(a, col) - pivot).abs();
            let db = (data.features().get(b, col) - pivot).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        let mut expect = order[..k].to_vec();
        expect.sort_unstable();
        assert_eq!(set.indices, expect, "seed {seed}");
    }
}

#[test]
fn cluster_by_l2_matches_brute_force_distances() {
    let (data, _) = logistic_instance(80, 4, 1e-2, 1.0, 71);
    for seed in 0..10u64 {
        let k = 6;
        let set = selection::cluster_by_l2(&data, k, seed).unwrap();
        let mut rng = CounterRng::new(seed).substream(Strategy::L2Cluster.id());
        let center = rng.next_below(80) as usize;
        let dist = |i: usize| -> f64 {
            (0..4)
                .map(|j| {
                    let d = data.features().get(i, j) - data.features().get(center, j);
                    d * d
                })
                .sum()
        };
        let mut order: Vec<usize> = (0..80).collect();
        order.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap().then(a.cmp(&b)));
        let mut expect = order[..k].to_vec();
        expect.sort_unstable();
        assert_eq!(set.indices, expect, "seed {seed}");
    }
}

#[test]
fn top_percentile_subset_of_true_top2k() {
    let (data, model) = logistic_instance(100, 6, 1e-2, 2.0, 73);
    let subset: Vec<usize> = (0..data.test_n().min(20)).collect();
    let f = EvaluationFn::test_loss_sum(subset.clone());
    let scores = attribution::per_sample_linear_effects(&model, &data, &f).unwrap();
    let k = 8;
    let set =
        selection::top_percentile(&model, &data, selection::TopMetric::PosLoss, k, 3, &subset)
            .unwrap();
    let mut order: Vec<usize> = (0..100).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let pool: Vec<usize> = order[..2 * k].to_vec();
    for &i in &set.indices {
        assert!(pool.contains(&i), "{i} outside the true top-2k pool");
    }
    // Different seeds stay inside the same pool.
    let set2 =
        selection::top_percentile(&model, &data, selection::TopMetric::PosLoss, k, 4, &subset)
            .unwrap();
    for &i in &set2.indices {
        assert!(pool.contains(&i));
    }
}

// ---------------------------------------------------------------------------
// evaluation: the sweep experiment at reduced scale
// ---------------------------------------------------------------------------

#[test]
fn sweep_rif_beats_if_on_moderate_instance() {
    // n = 500, d = 50, λ = 1e-2: a mildly high-dimensional regime where the
    // rescale factors are materially above 1.
    let data = common::logistic_instance(500, 50, 1e-2, 2.5, 79).0;
    let opts = SweepOptions {
        schedule: Some(vec![2, 5, 10, 15, 25]),
        seed: 5,
        ..SweepOptions::default()
    };
    let out = evaluation::run_sweep(
        &data,
        &ModelSpec::new(Family::Logistic, 1e-2),
        &opts,
        None,
        |_| {},
    )
    .unwrap();
    assert!(out.records.iter().all(|r| matches!(
        r.status,
        evaluation::RecordStatus::Ok
    )));
    let if_err = evaluation::mean_abs_error(&out.records, Method::If);
    let rif_err = evaluation::mean_abs_error(&out.records, Method::Rif);
    assert!(
        rif_err < if_err,
        "RIF mean error {rif_err} not below IF {if_err}"
    );
}

#[test]
fn ns_fidelity_against_retrain_small() {
    // NS lands close to the true retrain on a strictly convex logistic
    // instance. The 0.05 headline ratio is an artifact choice that is
    // logged here, not asserted (the asserted version lives in the
    // acceptance suite at its stated per-set pass fraction); what this
    // property pins is that a single Newton step always recovers the bulk
    // of the move, across removal sizes up to 5%.
    let (data, model) = logistic_instance(500, 50, 1e-2, 2.5, 83);
    let mut ratios = Vec::new();
    for k in [5usize, 10, 25] {
        for seed in 0..10u64 {
            let set = selection::random_subset(500, k, seed).unwrap();
            let retrain = oracle::retrain_without(&model, &data, &set, None).unwrap();
            let ns = attribution::newton_step_delta(&model, &data, &set.indices).unwrap();
            let mut ns_err = 0.0;
            let mut ret_move = 0.0;
            for j in 0..50 {
                let actual_delta = retrain.theta()[j] - model.theta()[j];
                ns_err += (ns[j] - actual_delta) * (ns[j] - actual_delta);
                ret_move += actual_delta * actual_delta;
            }
            ratios.push((k, seed, ns_err.sqrt() / ret_move.sqrt()));
        }
    }
    let worst = ratios.iter().map(|r| r.2).fold(0.0f64, f64::max);
    let within_headline = ratios.iter().filter(|r| r.2 <= 0.05).count();
    println!(
        "NS-vs-retrain ratios: worst {worst:.4}, {within_headline}/{} within the 0.05 headline",
        ratios.len()
    );
    for (k, seed, r) in &ratios {
        assert!(
            *r <= 0.25,
            "k={k} seed={seed}: NS recovered less than 75% of the move (ratio {r:.4})"
        );
    }
}

// ---------------------------------------------------------------------------
// cross-module property tests
// ---------------------------------------------------------------------------

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Binary container round-trip is bit-exact for arbitrary finite floats.
    #[test]
    fn binary_round_trip_bits(
        rows in proptest::collection::vec(
            proptest::collection::vec(
                prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                3,
            ),
            2..12,
        ),
        labels in proptest::collection::vec(0u8..2, 12),
    ) {
        let n = rows.len();
        let features = SampleMatrix::from_rows(&rows).unwrap();
        let labels: Vec<f64> = labels[..n].iter().map(|&b| b as f64).collect();
        let ds = Dataset::new("p", features, labels, SampleMatrix::zeros(3, 0), vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        dataset::save(&ds, DataFormat::Binary, &path, None).unwrap();
        let back = dataset::load_split(
            "p",
            &path,
            None,
            &LoadOptions { format: DataFormat::Binary, map_pm_one: false },
        ).unwrap();
        prop_assert_eq!(back.content_hash(), ds.content_hash());
    }

    /// ‖RIFᵢ‖ = (1−hᵢ)⁻¹‖IFᵢ‖ ≥ ‖IFᵢ‖ with equality iff hᵢ = 0.
    #[test]
    fn rif_dominance(seed in 0u64..32) {
        let (data, model) = logistic_instance(60, 12, 1e-2, 2.0, 1000 + seed);
        let batch = attribution::attribute_all(&model, &data).unwrap();
        for i in 0..60 {
            let ifn = batch.vector_norm(i, Method::If);
            let rifn = batch.vector_norm(i, Method::Rif);
            let h = batch.leverages()[i];
            prop_assert!(h >= 0.0 && h < 1.0);
            prop_assert!(rifn + 1e-15 >= ifn);
            prop_assert!((rifn - ifn / (1.0 - h)).abs() <= 1e-10 * rifn.max(1e-30));
        }
    }

    /// Metric evaluations are finite and the λ-scaled regularizer shifts
    /// self-loss exactly.
    #[test]
    fn self_loss_regularizer_shift(scale in 0.1f64..3.0, lambda in 1e-4f64..1.0) {
        let data = common::logistic_instance(40, 4, 1e-2, scale, 77).0;
        let theta = Col::from_fn(4, |j| 0.1 * (j as f64 + 1.0));
        let spec_a = ModelSpec::new(Family::Logistic, lambda);
        let spec_b = ModelSpec::new(Family::Logistic, 2.0 * lambda);
        let f = EvaluationFn::self_loss();
        let a = f.evaluate_at(theta.as_ref(), &data, &spec_a).unwrap();
        let b = f.evaluate_at(theta.as_ref(), &data, &spec_b).unwrap();
        let norm_sq: f64 = (0..4).map(|j| theta[j] * theta[j]).sum();
        prop_assert!((b - a - 0.5 * lambda * norm_sq).abs() <= 1e-10 * b.abs().max(1.0));
    }
}

// ---------------------------------------------------------------------------
// metric sanity on records
// ---------------------------------------------------------------------------

#[test]
fn sweep_metrics_zero_for_empty_removals() {
    let (data, model) = logistic_instance(50, 4, 1e-2, 2.0, 89);
    let batch = attribution::attribute_all(&model, &data).unwrap();
    let empty = RemovalSet::empty(Strategy::Random, 0);
    for kind in MetricKind::STANDARD {
        let f = EvaluationFn::for_kind(kind, &[0, 1, 2]);
        let vectors: Vec<_> = (0..50).map(|i| batch.vector(i, Method::Rif)).collect();
        let pred = attribution::aggregate(&vectors, &empty, &f, &model, &data).unwrap();
        assert_eq!(pred.effect_linear, 0.0);
        assert_eq!(pred.effect_reeval, 0.0);
        let ns = attribution::newton_step(&model, &data, &empty, &f).unwrap();
        assert_eq!(ns.effect_reeval, 0.0);
        let actual = oracle::actual_effect(&model, &data, &empty, &f, None).unwrap();
        assert!(actual.abs() < 1e-9);
    }
}
