#![allow(dead_code)] // each integration test compiles this module separately

//! Independent reference implementations used only as test oracles. These
//! deliberately avoid every production code path they are checking: dense
//! LU with partial pivoting instead of the Cholesky solver, conjugate
//! gradients instead of triangular solves, double-double accumulation
//! instead of compensated summation.

use faer::{Col, ColRef, Mat, MatRef};
use rif_core::dataset::{synthesize, Dataset, Design, LabelModel, SyntheticSpec, ThetaStar};
use rif_core::glm::{fit_full, Family, FittedModel, ModelSpec};

/// Dense LU solve with partial pivoting.
pub fn lu_solve(a: MatRef<'_, f64>, b: ColRef<'_, f64>) -> Col<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.nrows());
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if m[(r, col)].abs() > m[(pivot, col)].abs() {
                pivot = r;
            }
        }
        assert!(m[(pivot, col)] != 0.0, "singular matrix in lu_solve");
        if pivot != col {
            perm.swap(pivot, col);
            for c in 0..n {
                let t = m[(col, c)];
                m[(col, c)] = m[(pivot, c)];
                m[(pivot, c)] = t;
            }
            let t = x[col];
            x[col] = x[pivot];
            x[pivot] = t;
        }
        for r in (col + 1)..n {
            let f = m[(r, col)] / m[(col, col)];
            m[(r, col)] = f;
            for c in (col + 1)..n {
                m[(r, c)] -= f * m[(col, c)];
            }
            x[r] -= f * x[col];
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for c in (r + 1)..n {
            s -= m[(r, c)] * x[c];
        }
        x[r] = s / m[(r, r)];
    }
    x
}

/// Conjugate gradients for SPD systems, run to tight tolerance.
pub fn cg_solve(a: MatRef<'_, f64>, b: ColRef<'_, f64>, tol: f64) -> Col<f64> {
    let n = b.nrows();
    let mut x = Col::<f64>::zeros(n);
    let mut r = b.to_owned();
    let mut p = r.clone();
    let dot = |u: ColRef<'_, f64>, v: ColRef<'_, f64>| -> f64 {
        (0..n).map(|i| u[i] * v[i]).sum()
    };
    let mut rs = dot(r.as_ref(), r.as_ref());
    let b_norm = rs.sqrt().max(1e-300);
    for _ in 0..(10 * n) {
        if rs.sqrt() <= tol * b_norm {
            break;
        }
        let ap = a * &p;
        let alpha = rs / dot(p.as_ref(), ap.as_ref());
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(r.as_ref(), r.as_ref());
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    x
}

/// Double-double (error-free two-sum) accumulation, ~106-bit effective
/// precision.
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    pub fn new() -> Self {
        Self { hi: 0.0, lo: 0.0 }
    }

    pub fn add(&mut self, v: f64) {
        let s = self.hi + v;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (v - bb);
        self.hi = s;
        self.lo += err;
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

pub fn dd_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = DoubleDouble::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn col_rel_diff(a: ColRef<'_, f64>, b: ColRef<'_, f64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.nrows() {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    (num / den.max(1e-300)).sqrt()
}

pub fn logistic_instance(
    n: usize,
    d: usize,
    lambda: f64,
    scale: f64,
    seed: u64,
) -> (Dataset, FittedModel) {
    let data = synthesize(&SyntheticSpec {
        n,
        d,
        design: Design::GaussianIsotropic,
        label_model: LabelModel::Logistic {
            theta_star: ThetaStar::RandomUnit { scale },
        },
        seed,
    })
    .unwrap();
    let model = fit_full(&data, &ModelSpec::new(Family::Logistic, lambda)).unwrap();
    (data, model)
}

pub fn least_squares_instance(
    n: usize,
    d: usize,
    lambda: f64,
    noise: f64,
    seed: u64,
) -> (Dataset, FittedModel) {
    let data = synthesize(&SyntheticSpec {
        n,
        d,
        design: Design::GaussianIsotropic,
        label_model: LabelModel::Linear {
            theta_star: ThetaStar::RandomUnit { scale: 1.0 },
            noise,
        },
        seed,
    })
    .unwrap();
    let model = fit_full(&data, &ModelSpec::new(Family::LeastSquares, lambda)).unwrap();
    (data, model)
}

/// Dense total Hessian Σ wᵢσᵢxᵢxᵢᵀ + λI built straightforwardly.
pub fn dense_hessian(model: &FittedModel, data: &Dataset) -> Mat<f64> {
    let d = data.dim();
    let n = data.n();
    let mut h = Mat::<f64>::zeros(d, d);
    for i in 0..n {
        let x = data.feature(i);
        let z: f64 = (0..d).map(|j| model.theta()[j] * x[j]).sum();
        let sigma = model.weights()[i] * rif_core::glm::sample_curvature(model.spec().family, z);
        for r in 0..d {
            for c in 0..d {
                h[(r, c)] += sigma * x[r] * x[c];
            }
        }
    }
    for j in 0..d {
        h[(j, j)] += model.spec().lambda;
    }
    h
}
