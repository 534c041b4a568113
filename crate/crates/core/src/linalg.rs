//! Dense linear-algebra backbone: sample storage, SPD factorization, and the
//! small symmetric eigensolver used by the theory checks.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Col, ColRef, Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Feature vectors stored one per column (`dim × len`), so each sample is a
/// contiguous column and Gram-type products map directly onto matmul.
#[derive(Clone, Debug)]
pub struct SampleMatrix {
    data: Mat<f64>,
}

impl SampleMatrix {
    pub fn zeros(dim: usize, len: usize) -> Self {
        Self {
            data: Mat::zeros(dim, len),
        }
    }

    /// Build from row-major per-sample slices; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.len();
        let dim = rows.first().map_or(0, |r| r.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Dimension(format!(
                    "sample {i} has {} features, expected {dim}",
                    r.len()
                )));
            }
        }
        Ok(Self {
            data: Mat::from_fn(dim, len, |j, i| rows[i][j]),
        })
    }

    pub fn from_fn(dim: usize, len: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        // f(coord, sample)
        Self {
            data: Mat::from_fn(dim, len, f),
        }
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn sample(&self, i: usize) -> ColRef<'_, f64> {
        self.data.col(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(j, i)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[(j, i)] = v;
    }

    /// `dim × len` view, one sample per column.
    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn sample_to_vec(&self, i: usize) -> Vec<f64> {
        (0..self.dim()).map(|j| self.data[(j, i)]).collect()
    }

    /// Columns restricted to `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> SampleMatrix {
        SampleMatrix {
            data: Mat::from_fn(self.dim(), indices.len(), |j, c| self.data[(j, indices[c])]),
        }
    }

    pub fn iter_sample(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(move |j| self.data[(j, i)])
    }
}

#[inline]
pub fn dot(a: ColRef<'_, f64>, b: ColRef<'_, f64>) -> f64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut s = 0.0;
    for i in 0..a.nrows() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm2(a: ColRef<'_, f64>) -> f64 {
    dot(a, a).sqrt()
}

pub fn col_from_slice(v: &[f64]) -> Col<f64> {
    Col::from_fn(v.len(), |i| v[i])
}

pub fn col_to_vec(v: ColRef<'_, f64>) -> Vec<f64> {
    (0..v.nrows()).map(|i| v[i]).collect()
}

/// Neumaier-compensated summation; error is O(ε) independent of length.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Cholesky factorization of a symmetric positive definite matrix, kept
/// together with the matrix itself so solves can run one step of iterative
/// refinement against the true residual.
#[derive(Clone)]
pub struct HessianFactor {
    matrix: Mat<f64>,
    llt: Llt<f64>,
}

impl HessianFactor {
    pub fn new(matrix: Mat<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "expected square matrix, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let llt = Llt::new(matrix.as_ref(), Side::Lower).map_err(|_| Error::SingularHessian)?;
        Ok(Self { matrix, llt })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The factored matrix `H`.
    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = H`.
    pub fn lower(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    /// `H v`.
    pub fn apply(&self, v: ColRef<'_, f64>) -> Col<f64> {
        &self.matrix * v
    }

    /// `H⁻¹ v` with one refinement pass; relative residual lands well below
    /// 1e-8 for the conditioning this crate produces (λ > 0).
    pub fn solve(&self, v: ColRef<'_, f64>) -> Col<f64> {
        let mut x = self.llt.solve(v);
        let r = v - &self.matrix * &x;
        x += self.llt.solve(&r);
        x
    }

    /// Columnwise `H⁻¹ B`, refined.
    pub fn solve_mat(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = self.llt.solve(b);
        let r = b - &self.matrix * &x;
        x += self.llt.solve(&r);
        x
    }

    /// Max relative solve residual over the columns of `b`, for diagnostics.
    pub fn residual(&self, b: MatRef<'_, f64>, x: MatRef<'_, f64>) -> f64 {
        let r = b - &self.matrix * x;
        let mut worst: f64 = 0.0;
        for j in 0..b.ncols() {
            let rn = norm2(r.col(j));
            let bn = norm2(b.col(j));
            if bn > 0.0 {
                worst = worst.max(rn / bn);
            }
        }
        worst
    }
}

/// Eigendecomposition of a small symmetric matrix by the cyclic Jacobi
/// method. Returns eigenvalues (ascending) and the orthogonal eigenvector
/// matrix `q` with `a = q diag(λ) qᵀ`. Intended for the theory-side checks
/// (dimensions ≤ a few hundred); the cost is O(d³) per sweep.
pub fn jacobi_eigh(a: MatRef<'_, f64>) -> (Vec<f64>, Mat<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigh requires a square matrix");
    let mut m = a.to_owned();
    let mut q: Mat<f64> = Mat::identity(n, n);
    let scale: f64 = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[(i, j)].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = m[(p, r)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(r, r)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, r)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(r, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkq = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkq;
                    q[(k, r)] = s * qkp + c * qkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| eigs[i].partial_cmp(&eigs[j]).unwrap());
    let sorted_eigs: Vec<f64> = order.iter().map(|&i| eigs[i]).collect();
    let sorted_q = Mat::from_fn(n, n, |i, j| q[(i, order[j])]);
    (sorted_eigs, sorted_q)
}

/// Operator (spectral) norm of a symmetric matrix.
pub fn op_norm_sym(a: MatRef<'_, f64>) -> f64 {
    let (eigs, _) = jacobi_eigh(a);
    eigs.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()))
}
