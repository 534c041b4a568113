//! IF, RIF, and NS estimates of leave-T-out parameter changes.
//!
//! With `H` the total Hessian at the optimum, `gᵢ` the per-sample gradient,
//! and `hᵢ = σᵢ xᵢᵀH⁻¹xᵢ` the generalized leverage score:
//!
//! * `IFᵢ  = H⁻¹ gᵢ`
//! * `RIFᵢ = H_{∖i}⁻¹ gᵢ = (1 − hᵢ)⁻¹ H⁻¹ gᵢ`; the two are equal because
//!   `gᵢ ∥ xᵢ` in both GLM families, so the Sherman–Morrison correction
//!   collapses to a scalar rescale.
//! * NS solves `(H − Σ_{i∈T} σᵢxᵢxᵢᵀ) Δ = Σ_{i∈T} gᵢ`, through a |T|×|T|
//!   Woodbury capacitance system for small `T` and a fresh factorization
//!   otherwise.
//!
//! Sign convention: `delta_theta` is the predicted parameter change
//! `θ̂₋T − θ̂` caused by *removing* `T`.

use faer::{Col, ColRef, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::EvaluationFn;
use crate::glm::{sample_curvature, sample_residual, FittedModel};
use crate::linalg::{self, HessianFactor};
use crate::selection::RemovalSet;

/// Leverages at or above `1 − DEGENERATE_LEVERAGE_GAP` are rejected: λ > 0
/// keeps `hᵢ < 1` mathematically, but finite precision needs a guard before
/// the `(1 − hᵢ)⁻¹` rescale.
pub const DEGENERATE_LEVERAGE_GAP: f64 = 1e-8;

/// Leave-T-out Hessians switch from the Woodbury capacitance system to a
/// fresh factorization once |T| exceeds d/4 (|T|³ capacitance work versus d³
/// refactorization work).
pub fn woodbury_crossover(d: usize) -> usize {
    (d / 4).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    If,
    Rif,
    Ns,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::If => write!(f, "IF"),
            Method::Rif => write!(f, "RIF"),
            Method::Ns => write!(f, "NS"),
        }
    }
}

/// Estimated parameter change from dropping one sample.
#[derive(Clone, Debug)]
pub struct AttributionVector {
    pub index: usize,
    pub delta_theta: Col<f64>,
    pub leverage: f64,
    pub rescale: f64,
    pub method: Method,
}

/// Estimated effect of removing a whole set.
#[derive(Clone, Debug)]
pub struct RemovalPrediction {
    pub set: RemovalSet,
    pub method: Method,
    pub delta_theta: Col<f64>,
    /// ⟨∇f(θ̂), Δθ⟩
    pub effect_linear: f64,
    /// f(θ̂ + Δθ) − f(θ̂)
    pub effect_reeval: f64,
}

/// `H⁻¹ v` through the model's cached factorization.
pub fn hessian_solve(model: &FittedModel, v: ColRef<'_, f64>) -> Result<Col<f64>> {
    let factor = model.factor()?;
    if v.nrows() != factor.dim() {
        return Err(Error::Dimension(format!(
            "vector has {} entries, hessian is {}×{}",
            v.nrows(),
            factor.dim(),
            factor.dim()
        )));
    }
    Ok(factor.solve(v))
}

fn check_index(data: &Dataset, i: usize) -> Result<()> {
    if i >= data.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: data.n(),
        });
    }
    Ok(())
}

/// Per-sample pieces at the optimum: residual rᵢ (so gᵢ = wᵢrᵢxᵢ) and
/// effective curvature σ̃ᵢ = wᵢσᵢ. Fit-time weights scale a sample's share
/// of both the gradient and the Hessian; for the usual full-weights model
/// they are the textbook quantities.
fn sample_parts(model: &FittedModel, data: &Dataset, i: usize) -> (f64, f64) {
    let family = model.spec().family;
    let z = linalg::dot(model.theta(), data.feature(i));
    let w = model.weights()[i];
    (
        w * sample_residual(family, z, data.label(i)),
        w * sample_curvature(family, z),
    )
}

fn guard_leverage(i: usize, h: f64) -> Result<f64> {
    if h >= 1.0 - DEGENERATE_LEVERAGE_GAP {
        Err(Error::DegenerateLeverage {
            index: i,
            leverage: h,
        })
    } else {
        Ok(h)
    }
}

/// Generalized leverage score `hᵢ = σᵢ xᵢᵀ H⁻¹ xᵢ`; one Hessian solve.
pub fn leverage(model: &FittedModel, data: &Dataset, i: usize) -> Result<f64> {
    check_index(data, i)?;
    let (_, sigma) = sample_parts(model, data, i);
    let x = data.feature(i);
    let z = hessian_solve(model, x)?;
    guard_leverage(i, sigma * linalg::dot(x, z.as_ref()))
}

/// Influence function: `delta_theta = H⁻¹gᵢ`.
pub fn influence(model: &FittedModel, data: &Dataset, i: usize) -> Result<AttributionVector> {
    check_index(data, i)?;
    let (r, sigma) = sample_parts(model, data, i);
    let x = data.feature(i);
    let z = hessian_solve(model, x)?;
    let h = guard_leverage(i, sigma * linalg::dot(x, z.as_ref()))?;
    Ok(AttributionVector {
        index: i,
        delta_theta: Col::from_fn(z.nrows(), |j| r * z[j]),
        leverage: h,
        rescale: 1.0 / (1.0 - h),
        method: Method::If,
    })
}

/// Rescaled influence function through the GLM fast path:
/// `delta_theta = (1 − hᵢ)⁻¹ H⁻¹gᵢ`.
pub fn rescaled_influence(
    model: &FittedModel,
    data: &Dataset,
    i: usize,
) -> Result<AttributionVector> {
    let mut v = influence(model, data, i)?;
    let s = v.rescale;
    for j in 0..v.delta_theta.nrows() {
        v.delta_theta[j] *= s;
    }
    v.method = Method::Rif;
    Ok(v)
}

/// Rescaled influence through the explicit Sherman–Morrison expansion:
/// `H_{∖i}⁻¹gᵢ = H⁻¹gᵢ + H⁻¹xᵢ · σᵢ(xᵢᵀH⁻¹gᵢ)/(1 − hᵢ)`, computed without
/// any new factorization. Must agree with [`rescaled_influence`] to 1e-10.
pub fn rescaled_influence_sm(
    model: &FittedModel,
    data: &Dataset,
    i: usize,
) -> Result<AttributionVector> {
    check_index(data, i)?;
    let (r, sigma) = sample_parts(model, data, i);
    let x = data.feature(i);
    let g = Col::from_fn(x.nrows(), |j| r * x[j]);
    let zg = hessian_solve(model, g.as_ref())?;
    let zx = hessian_solve(model, x)?;
    let h = guard_leverage(i, sigma * linalg::dot(x, zx.as_ref()))?;
    let coef = sigma * linalg::dot(x, zg.as_ref()) / (1.0 - h);
    Ok(AttributionVector {
        index: i,
        delta_theta: Col::from_fn(x.nrows(), |j| zg[j] + coef * zx[j]),
        leverage: h,
        rescale: 1.0 / (1.0 - h),
        method: Method::Rif,
    })
}

/// All per-sample attribution quantities from one batched solve
/// `Z = H⁻¹X` (one factorization, n right-hand sides).
pub struct BatchAttribution {
    solves: Mat<f64>,
    residuals: Vec<f64>,
    curvatures: Vec<f64>,
    leverages: Vec<f64>,
    rescales: Vec<f64>,
}

impl BatchAttribution {
    pub fn n(&self) -> usize {
        self.solves.ncols()
    }

    pub fn dim(&self) -> usize {
        self.solves.nrows()
    }

    pub fn leverages(&self) -> &[f64] {
        &self.leverages
    }

    pub fn rescales(&self) -> &[f64] {
        &self.rescales
    }

    pub fn max_leverage(&self) -> f64 {
        self.leverages.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// `H⁻¹xᵢ` for sample i.
    pub fn solve_col(&self, i: usize) -> ColRef<'_, f64> {
        self.solves.col(i)
    }

    pub fn residual(&self, i: usize) -> f64 {
        self.residuals[i]
    }

    pub fn curvature(&self, i: usize) -> f64 {
        self.curvatures[i]
    }

    fn scale_for(&self, i: usize, method: Method) -> f64 {
        match method {
            Method::If => self.residuals[i],
            Method::Rif => self.residuals[i] * self.rescales[i],
            Method::Ns => unreachable!("NS has no per-sample vector"),
        }
    }

    pub fn vector(&self, i: usize, method: Method) -> AttributionVector {
        let s = self.scale_for(i, method);
        let z = self.solves.col(i);
        AttributionVector {
            index: i,
            delta_theta: Col::from_fn(z.nrows(), |j| s * z[j]),
            leverage: self.leverages[i],
            rescale: self.rescales[i],
            method,
        }
    }

    /// Additive aggregate `Σ_{i∈T}` of per-sample vectors.
    pub fn delta_sum(&self, indices: &[usize], method: Method) -> Col<f64> {
        let mut out = Col::zeros(self.dim());
        for &i in indices {
            let s = self.scale_for(i, method);
            let z = self.solves.col(i);
            for j in 0..out.nrows() {
                out[j] += s * z[j];
            }
        }
        out
    }

    pub fn vector_norm(&self, i: usize, method: Method) -> f64 {
        self.scale_for(i, method).abs() * linalg::norm2(self.solves.col(i))
    }

    /// ⟨v, IFᵢ⟩ (or RIFᵢ) for all samples at once, given `v`.
    pub fn linear_effects(&self, v: ColRef<'_, f64>, method: Method) -> Vec<f64> {
        let proj = self.solves.transpose() * v;
        (0..self.n())
            .map(|i| self.scale_for(i, method) * proj[i])
            .collect()
    }
}

/// One factorization, `n` solves: leverage, rescale, IF and RIF for every
/// training sample.
pub fn attribute_all(model: &FittedModel, data: &Dataset) -> Result<BatchAttribution> {
    let factor = model.factor()?;
    let n = data.n();
    let solves = factor.solve_mat(data.features().as_mat());
    let mut residuals = Vec::with_capacity(n);
    let mut curvatures = Vec::with_capacity(n);
    let mut leverages = Vec::with_capacity(n);
    let mut rescales = Vec::with_capacity(n);
    for i in 0..n {
        let (r, sigma) = sample_parts(model, data, i);
        let h = guard_leverage(i, sigma * linalg::dot(data.feature(i), solves.col(i)))?;
        residuals.push(r);
        curvatures.push(sigma);
        leverages.push(h);
        rescales.push(1.0 / (1.0 - h));
    }
    Ok(BatchAttribution {
        solves,
        residuals,
        curvatures,
        leverages,
        rescales,
    })
}

/// The parameter change of a single Newton step on the leave-T-out
/// objective, starting from the optimum.
pub fn newton_step_delta(model: &FittedModel, data: &Dataset, indices: &[usize]) -> Result<Col<f64>> {
    let factor = model.factor()?;
    let d = data.dim();
    for &i in indices {
        check_index(data, i)?;
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("newton_step indices must be strictly increasing".into()));
    }
    if indices.is_empty() {
        return Ok(Col::zeros(d));
    }

    // Σ_{i∈T} gᵢ
    let mut gsum = Col::<f64>::zeros(d);
    let mut active: Vec<(usize, f64)> = Vec::new();
    for &i in indices {
        let (r, sigma) = sample_parts(model, data, i);
        let x = data.feature(i);
        for j in 0..d {
            gsum[j] += r * x[j];
        }
        if sigma > 0.0 {
            active.push((i, sigma));
        }
    }

    if active.is_empty() {
        // No curvature leaves the Hessian untouched (saturated samples).
        return Ok(factor.solve(gsum.as_ref()));
    }

    if active.len() <= woodbury_crossover(d) {
        newton_step_woodbury(factor, data, &active, gsum)
    } else {
        newton_step_refactor(model, data, indices, gsum)
    }
}

fn newton_step_woodbury(
    factor: &HessianFactor,
    data: &Dataset,
    active: &[(usize, f64)],
    gsum: Col<f64>,
) -> Result<Col<f64>> {
    let d = data.dim();
    let ka = active.len();
    let u = Mat::from_fn(d, ka, |j, a| data.feature(active[a].0)[j]);
    let v = factor.solve_mat(u.as_ref());
    let b = u.transpose() * &v;
    // C = I − S½ (Uᵀ H⁻¹ U) S½, scaled symmetric capacitance: positive
    // definite exactly when the leave-T-out Hessian is.
    let c = Mat::from_fn(ka, ka, |a, bb| {
        let s = (active[a].1 * active[bb].1).sqrt();
        let sym = 0.5 * (b[(a, bb)] + b[(bb, a)]);
        let base = if a == bb { 1.0 } else { 0.0 };
        base - s * sym
    });
    let cap = HessianFactor::new(c).map_err(|_| Error::IndefiniteLeaveOut)?;
    let rhs = Col::from_fn(ka, |a| active[a].1.sqrt() * linalg::dot(v.col(a), gsum.as_ref()));
    let y = cap.solve(rhs.as_ref());
    let mut delta = factor.solve(gsum.as_ref());
    for a in 0..ka {
        let coef = active[a].1.sqrt() * y[a];
        let va = v.col(a);
        for j in 0..d {
            delta[j] += coef * va[j];
        }
    }
    Ok(delta)
}

fn newton_step_refactor(
    model: &FittedModel,
    data: &Dataset,
    indices: &[usize],
    gsum: Col<f64>,
) -> Result<Col<f64>> {
    let mut weights = model.weights().to_vec();
    for &i in indices {
        weights[i] = 0.0;
    }
    let h = crate::glm::form_hessian(model.theta(), data, model.spec(), &weights);
    let factor = HessianFactor::new(h).map_err(|_| Error::IndefiniteLeaveOut)?;
    Ok(factor.solve(gsum.as_ref()))
}

/// NS prediction for a removal set, with both effect conventions populated.
pub fn newton_step(
    model: &FittedModel,
    data: &Dataset,
    set: &RemovalSet,
    f: &EvaluationFn,
) -> Result<RemovalPrediction> {
    let delta = newton_step_delta(model, data, &set.indices)?;
    let (effect_linear, effect_reeval) = f.effects(model, data, delta.as_ref())?;
    Ok(RemovalPrediction {
        set: set.clone(),
        method: Method::Ns,
        delta_theta: delta,
        effect_linear,
        effect_reeval,
    })
}

/// Additive aggregate of per-sample attribution vectors over `T`.
///
/// `vectors` must cover every index of `T` (extras are ignored) and share a
/// single method.
pub fn aggregate(
    vectors: &[AttributionVector],
    set: &RemovalSet,
    f: &EvaluationFn,
    model: &FittedModel,
    data: &Dataset,
) -> Result<RemovalPrediction> {
    let d = data.dim();
    let method = match vectors.first() {
        Some(v) => v.method,
        None if set.indices.is_empty() => Method::If,
        None => return Err(Error::Config("no attribution vectors supplied".into())),
    };
    if vectors.iter().any(|v| v.method != method) {
        return Err(Error::MixedMethods);
    }
    let mut by_index: std::collections::HashMap<usize, &AttributionVector> =
        std::collections::HashMap::with_capacity(vectors.len());
    for v in vectors {
        by_index.insert(v.index, v);
    }
    let mut delta = Col::<f64>::zeros(d);
    for &i in &set.indices {
        let v = by_index
            .get(&i)
            .ok_or_else(|| Error::Config(format!("no attribution vector for sample {i}")))?;
        for j in 0..d {
            delta[j] += v.delta_theta[j];
        }
    }
    let (effect_linear, effect_reeval) = f.effects(model, data, delta.as_ref())?;
    Ok(RemovalPrediction {
        set: set.clone(),
        method,
        delta_theta: delta,
        effect_linear,
        effect_reeval,
    })
}

/// ⟨∇f(θ̂), IFᵢ⟩ for every sample, via a single solve of ∇f.
pub fn per_sample_linear_effects(
    model: &FittedModel,
    data: &Dataset,
    f: &EvaluationFn,
) -> Result<Vec<f64>> {
    let grad = f.gradient(model, data)?;
    let w = hessian_solve(model, grad.as_ref())?;
    let proj = data.features().as_mat().transpose() * &w;
    Ok((0..data.n())
        .map(|i| {
            let (r, _) = sample_parts(model, data, i);
            r * proj[i]
        })
        .collect())
}

/// Attribution dump rows (index, leverage, rescale, ‖IF‖₂, ‖RIF‖₂),
/// computed in parallel.
pub fn attribution_rows(batch: &BatchAttribution) -> Vec<(usize, f64, f64, f64, f64)> {
    (0..batch.n())
        .into_par_iter()
        .map(|i| {
            (
                i,
                batch.leverages[i],
                batch.rescales[i],
                batch.vector_norm(i, Method::If),
                batch.vector_norm(i, Method::Rif),
            )
        })
        .collect()
}
