//! Regularized logistic / least-squares objectives and a strictly converged
//! second-order solver.
//!
//! The objective is `Σᵢ wᵢ ℓᵢ(θ) + (λ/2)‖θ‖²` with per-sample weights
//! `wᵢ ∈ [0, 1]`. The regularizer is a single data-independent term: it is
//! never reweighted or removed with samples, so the total Hessian is
//! `H = Σᵢ wᵢ σᵢ xᵢxᵢᵀ + λI` and every leave-T-out Hessian keeps the full
//! `λI`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use faer::{Col, ColRef, Mat};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, compensated_sum, HessianFactor};

/// Relative gradient-norm stopping tolerance (`‖∇‖ ≤ tol · max(1, ‖∇₀‖)`,
/// with `∇₀` the gradient at θ = 0).
pub const GRAD_TOL_REL: f64 = 1e-10;
pub const MAX_NEWTON_ITERS: usize = 200;
pub const ARMIJO_C: f64 = 1e-4;
pub const BACKTRACK_SHRINK: f64 = 0.5;
/// Default regularization for real embedded datasets; synthetic runs must
/// set λ explicitly.
pub const DEFAULT_LAMBDA: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Logistic,
    LeastSquares,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Logistic => write!(f, "logistic"),
            Family::LeastSquares => write!(f, "least-squares"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub lambda: f64,
}

impl ModelSpec {
    pub fn new(family: Family, lambda: f64) -> Self {
        Self { family, lambda }
    }

    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be finite and ≥ 0, got {}", self.lambda)));
        }
        if self.lambda == 0.0 && d >= n {
            return Err(Error::Config(format!(
                "lambda > 0 is required when d ≥ n (d = {d}, n = {n})"
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^z)`.
#[inline]
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Per-sample loss as a function of the margin `z = ⟨θ, x⟩`.
#[inline]
pub fn sample_loss(family: Family, z: f64, y: f64) -> f64 {
    match family {
        // −y ln ŷ − (1−y) ln(1−ŷ) = ln(1+e^z) − y z
        Family::Logistic => log1p_exp(z) - y * z,
        Family::LeastSquares => 0.5 * (z - y) * (z - y),
    }
}

/// dℓ/dz: the scalar multiplying xᵢ in the per-sample gradient.
#[inline]
pub fn sample_residual(family: Family, z: f64, y: f64) -> f64 {
    match family {
        Family::Logistic => sigmoid(z) - y,
        Family::LeastSquares => z - y,
    }
}

/// d²ℓ/dz²: the curvature σᵢ of the rank-1 Hessian contribution σᵢ xᵢxᵢᵀ.
#[inline]
pub fn sample_curvature(family: Family, z: f64) -> f64 {
    match family {
        Family::Logistic => {
            let p = sigmoid(z);
            p * (1.0 - p)
        }
        Family::LeastSquares => 1.0,
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Dimension(format!(
            "{} weights for {n} samples",
            weights.len()
        )));
    }
    if let Some((i, &w)) = weights
        .iter()
        .enumerate()
        .find(|(_, &w)| !(w.is_finite() && (0.0..=1.0).contains(&w)))
    {
        return Err(Error::Config(format!("weight {w} at sample {i} not in [0, 1]")));
    }
    Ok(())
}

/// Margins `zᵢ = ⟨θ, xᵢ⟩` for every training sample.
pub fn margins(theta: ColRef<'_, f64>, data: &Dataset) -> Col<f64> {
    data.features().as_mat().transpose() * theta
}

/// `Σᵢ wᵢ ℓᵢ(θ) + (λ/2)‖θ‖²`, accumulated with compensated summation.
pub fn total_loss(
    theta: ColRef<'_, f64>,
    data: &Dataset,
    spec: &ModelSpec,
    weights: &[f64],
) -> Result<f64> {
    if theta.nrows() != data.dim() {
        return Err(Error::Dimension(format!(
            "theta has {} entries, expected {}",
            theta.nrows(),
            data.dim()
        )));
    }
    check_weights(weights, data.n())?;
    let z = margins(theta, data);
    Ok(loss_from_margins(&z, data.labels(), spec, weights, linalg::dot(theta, theta)))
}

fn loss_from_margins(
    z: &Col<f64>,
    labels: &[f64],
    spec: &ModelSpec,
    weights: &[f64],
    theta_sq: f64,
) -> f64 {
    let data_term = compensated_sum(
        (0..labels.len()).map(|i| weights[i] * sample_loss(spec.family, z[i], labels[i])),
    );
    data_term + 0.5 * spec.lambda * theta_sq
}

/// Gradient of the data term of sample `i` at `theta`: `rᵢ xᵢ`. The
/// regularizer gradient `λθ` is not included (it belongs to the
/// data-independent term).
pub fn per_sample_gradient(
    theta: ColRef<'_, f64>,
    data: &Dataset,
    i: usize,
    family: Family,
) -> Result<Col<f64>> {
    if i >= data.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: data.n(),
        });
    }
    let x = data.feature(i);
    let r = sample_residual(family, linalg::dot(theta, x), data.label(i));
    Ok(Col::from_fn(x.nrows(), |j| r * x[j]))
}

/// Rank-1 Hessian representation of sample `i`: `(σᵢ, xᵢ)` with
/// `Hᵢ = σᵢ xᵢxᵢᵀ`.
pub fn per_sample_hessian_factor<'d>(
    theta: ColRef<'_, f64>,
    data: &'d Dataset,
    i: usize,
    family: Family,
) -> Result<(f64, ColRef<'d, f64>)> {
    if i >= data.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: data.n(),
        });
    }
    let x = data.feature(i);
    let sigma = sample_curvature(family, linalg::dot(theta, x));
    Ok((sigma, x))
}

/// Gradient of the full objective (data term + λθ).
pub fn total_gradient(
    theta: ColRef<'_, f64>,
    data: &Dataset,
    spec: &ModelSpec,
    weights: &[f64],
) -> Col<f64> {
    let z = margins(theta, data);
    let coeff = Col::<f64>::from_fn(data.n(), |i| {
        weights[i] * sample_residual(spec.family, z[i], data.labels()[i])
    });
    let mut g = data.features().as_mat() * coeff;
    for j in 0..g.nrows() {
        g[j] += spec.lambda * theta[j];
    }
    g
}

/// `H(θ) = Σᵢ wᵢ σᵢ(θ) xᵢxᵢᵀ + λI`, formed by one scaled Gram product.
pub fn form_hessian(
    theta: ColRef<'_, f64>,
    data: &Dataset,
    spec: &ModelSpec,
    weights: &[f64],
) -> Mat<f64> {
    let (n, d) = (data.n(), data.dim());
    let z = margins(theta, data);
    let xt = data.features().as_mat();
    let scaled = Mat::from_fn(d, n, |j, i| {
        xt[(j, i)] * (weights[i] * sample_curvature(spec.family, z[i]))
    });
    let mut h = &scaled * xt.transpose();
    for j in 0..d {
        h[(j, j)] += spec.lambda;
    }
    h
}

#[derive(Clone)]
pub struct FittedModel {
    theta: Col<f64>,
    spec: ModelSpec,
    weights: Vec<f64>,
    grad_norm: f64,
    iters: usize,
    factor: Option<HessianFactor>,
}

impl FittedModel {
    pub fn theta(&self) -> ColRef<'_, f64> {
        self.theta.as_ref()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    pub fn iters(&self) -> usize {
        self.iters
    }

    pub fn factor(&self) -> Result<&HessianFactor> {
        self.factor.as_ref().ok_or(Error::MissingFactorization)
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }

    /// Drop the cached factorization (for serialization round-trips).
    pub fn without_factor(mut self) -> Self {
        self.factor = None;
        self
    }

    /// Recompute and cache the Hessian factorization at the stored optimum.
    pub fn refactor(&mut self, data: &Dataset) -> Result<()> {
        let h = form_hessian(self.theta.as_ref(), data, &self.spec, &self.weights);
        self.factor = Some(HessianFactor::new(h)?);
        Ok(())
    }

    /// Fraction of test samples predicted on the correct side of ½.
    pub fn test_accuracy(&self, data: &Dataset) -> Option<f64> {
        if data.test_n() == 0 {
            return None;
        }
        let mut correct = 0usize;
        for t in 0..data.test_n() {
            let z = linalg::dot(self.theta.as_ref(), data.test_feature(t));
            let pred = match self.spec.family {
                Family::Logistic => sigmoid(z),
                Family::LeastSquares => z,
            };
            if (pred - 0.5) * (data.test_label(t) - 0.5) > 0.0 {
                correct += 1;
            }
        }
        Some(correct as f64 / data.test_n() as f64)
    }
}

/// Fit by damped Newton with backtracking line search (Armijo constant
/// `1e-4`, shrink `0.5`, full step tried first).
pub fn fit(
    data: &Dataset,
    spec: &ModelSpec,
    weights: &[f64],
    warm_start: Option<ColRef<'_, f64>>,
) -> Result<FittedModel> {
    fit_with(data, spec, weights, warm_start, true)
}

/// [`fit`] with control over whether the Hessian factorization at the
/// optimum is kept (retrains only need θ; a cached d×d factor per retrain
/// would dominate memory).
pub fn fit_with(
    data: &Dataset,
    spec: &ModelSpec,
    weights: &[f64],
    warm_start: Option<ColRef<'_, f64>>,
    cache_factor: bool,
) -> Result<FittedModel> {
    let (n, d) = (data.n(), data.dim());
    spec.validate(n, d)?;
    check_weights(weights, n)?;

    let mut theta = match warm_start {
        Some(t) => {
            if t.nrows() != d {
                return Err(Error::Dimension(format!(
                    "warm start has {} entries, expected {d}",
                    t.nrows()
                )));
            }
            t.to_owned()
        }
        None => Col::zeros(d),
    };

    let g0 = total_gradient(Col::<f64>::zeros(d).as_ref(), data, spec, weights);
    let tol = GRAD_TOL_REL * linalg::norm2(g0.as_ref()).max(1.0);

    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iters = 0;
    for iter in 0..MAX_NEWTON_ITERS {
        iters = iter;
        let g = total_gradient(theta.as_ref(), data, spec, weights);
        grad_norm = linalg::norm2(g.as_ref());
        if grad_norm <= tol {
            converged = true;
            break;
        }

        let h = form_hessian(theta.as_ref(), data, spec, weights);
        let factor = HessianFactor::new(h)?;
        let step = -factor.solve(g.as_ref());
        let slope = linalg::dot(g.as_ref(), step.as_ref());
        if slope >= 0.0 {
            return Err(Error::Numerical(format!(
                "newton direction is not a descent direction (gᵀp = {slope:.3e})"
            )));
        }

        // Backtracking on the cached margins: z(θ + t·p) = z + t·zp, and the
        // regularizer term expands in t through precomputed inner products.
        let z0 = margins(theta.as_ref(), data);
        let zp = data.features().as_mat().transpose() * &step;
        let theta_sq = linalg::dot(theta.as_ref(), theta.as_ref());
        let theta_dot_p = linalg::dot(theta.as_ref(), step.as_ref());
        let p_sq = linalg::dot(step.as_ref(), step.as_ref());
        let f0 = loss_from_margins(&z0, data.labels(), spec, weights, theta_sq);

        let mut t = 1.0f64;
        loop {
            let zt = Col::from_fn(n, |i| z0[i] + t * zp[i]);
            let sq = theta_sq + 2.0 * t * theta_dot_p + t * t * p_sq;
            let ft = loss_from_margins(&zt, data.labels(), spec, weights, sq);
            if ft <= f0 + ARMIJO_C * t * slope {
                break;
            }
            t *= BACKTRACK_SHRINK;
            if t < 1e-20 {
                return Err(Error::NonConvergence {
                    iters: iter,
                    grad_norm,
                    tol,
                });
            }
        }
        for j in 0..d {
            theta[j] += t * step[j];
        }
    }

    if !converged {
        let g = total_gradient(theta.as_ref(), data, spec, weights);
        grad_norm = linalg::norm2(g.as_ref());
        if grad_norm > tol {
            return Err(Error::NonConvergence {
                iters: MAX_NEWTON_ITERS,
                grad_norm,
                tol,
            });
        }
    }

    let factor = if cache_factor {
        let h = form_hessian(theta.as_ref(), data, spec, weights);
        Some(HessianFactor::new(h)?)
    } else {
        None
    };
    Ok(FittedModel {
        theta,
        spec: *spec,
        weights: weights.to_vec(),
        grad_norm,
        iters,
        factor,
    })
}

/// Fit with unit weights.
pub fn fit_full(data: &Dataset, spec: &ModelSpec) -> Result<FittedModel> {
    fit(data, spec, &vec![1.0; data.n()], None)
}

// ---------------------------------------------------------------------------
// Serialization (factorization is recomputed on load, never stored)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    family: Family,
    lambda: f64,
    d: usize,
    n: usize,
    theta_b64: String,
    weights_b64: String,
    grad_norm: f64,
    iters: usize,
}

fn f64s_to_b64(values: impl Iterator<Item = f64>) -> String {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn b64_to_f64s(s: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Config(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Config("base64 payload is not a multiple of 8 bytes".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

impl FittedModel {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            family: self.spec.family,
            lambda: self.spec.lambda,
            d: self.theta.nrows(),
            n: self.weights.len(),
            theta_b64: f64s_to_b64((0..self.theta.nrows()).map(|j| self.theta[j])),
            weights_b64: f64s_to_b64(self.weights.iter().copied()),
            grad_norm: self.grad_norm,
            iters: self.iters,
        };
        fs::write(path, serde_json::to_string_pretty(&file).unwrap())?;
        Ok(())
    }

    /// Load a model and recompute its factorization against `data`.
    pub fn load_json(path: &Path, data: &Dataset) -> Result<FittedModel> {
        let file: ModelFile = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("bad model file: {e}")))?;
        let theta = b64_to_f64s(&file.theta_b64)?;
        let weights = b64_to_f64s(&file.weights_b64)?;
        if theta.len() != file.d || weights.len() != file.n {
            return Err(Error::Config("model file payload sizes disagree with header".into()));
        }
        if file.d != data.dim() || file.n != data.n() {
            return Err(Error::Dimension(format!(
                "model was fit on n={}, d={}, dataset has n={}, d={}",
                file.n,
                file.d,
                data.n(),
                data.dim()
            )));
        }
        let mut model = FittedModel {
            theta: linalg::col_from_slice(&theta),
            spec: ModelSpec::new(file.family, file.lambda),
            weights,
            grad_norm: file.grad_norm,
            iters: file.iters,
            factor: None,
        };
        model.refactor(data)?;
        Ok(model)
    }
}
