//! Regularized kernel CCA between an embedded feed and its pool.
//!
//! The first canonical pair solves
//!
//! ```text
//! [ 0      KxKy ] [α]     [ Lx  0  ] [α]
//! [ KyKx   0    ] [β] = λ [ 0   Ly ] [β],    L = K² + κI
//! ```
//!
//! [`solve_kcca`] works on n × n Gram matrices. For linear kernels whose
//! feature dimension is below the sample count, [`ScatterProblem`] solves the
//! same eigenproblem in feature space; both routes give the same eigenvalue
//! and, through `α = X̃ᵀg`, the same dual coefficients. [`GramProblem`] is
//! the dual counterpart that reuses one kernel eigendecomposition across κ.

mod dual;
mod primal;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::stats::pearson;

pub use dual::GramProblem;
pub use primal::{CanonicalDirections, ScatterProblem};

/// Smallest admissible regularizer; the right-hand side is singular at 0.
pub const KAPPA_FLOOR: f64 = 1e-8;

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Kernel functions between sample columns.
pub trait Kernel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether the kernel is the plain inner product, which makes primal
    /// weight recovery possible.
    fn is_linear(&self) -> bool {
        false
    }

    /// `K[i, j] = k(a[:, i], b[:, j])`.
    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64>;

    fn gram(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.ncols() < 2 {
            return Err(Error::TooFewSamples(a.ncols()));
        }
        let k = self.cross(a, a);
        Ok((&k + k.transpose()) * 0.5)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearKernel;

impl Kernel for LinearKernel {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.tr_mul(b)
    }
}

/// `AᵀA` for a `d × n` data matrix, exactly symmetric.
pub fn linear_kernel(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    LinearKernel.gram(a)
}

/// Training statistics needed to center kernel blocks consistently.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCentering {
    /// Mean of each training Gram row.
    pub row_means: DVector<f64>,
    pub grand_mean: f64,
}

/// Double-centers a training Gram matrix, `HKH` with `H = I − 11ᵀ/n`.
pub fn center_kernel(k: &DMatrix<f64>) -> (DMatrix<f64>, KernelCentering) {
    let n = k.nrows();
    let row_means = DVector::from_iterator(n, k.row_iter().map(|r| r.sum() / n as f64));
    let grand_mean = row_means.sum() / n as f64;
    let centering = KernelCentering { row_means, grand_mean };
    let mut c = center_cross(k, &centering);
    // symmetric input gives symmetric output up to rounding; make it exact
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    (c, centering)
}

/// Centers a `train × other` kernel block using training means only.
pub fn center_cross(k: &DMatrix<f64>, centering: &KernelCentering) -> DMatrix<f64> {
    let n = k.nrows();
    assert_eq!(
        n,
        centering.row_means.len(),
        "cross block rows must be training samples"
    );
    let col_means: Vec<f64> = k.column_iter().map(|c| c.sum() / n as f64).collect();
    DMatrix::from_fn(n, k.ncols(), |i, t| {
        k[(i, t)] - centering.row_means[i] - col_means[t] + centering.grand_mean
    })
}

/// First canonical pair in dual form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KccaModel {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    /// Canonical correlation of the training projections `Kxα`, `Kyβ`.
    pub lambda: f64,
    /// Top eigenvalue of the regularized problem; equals `lambda` as κ → 0
    /// and never exceeds it.
    pub eigenvalue: f64,
    pub kappa: f64,
    pub n_lags: usize,
    pub train_indices: Vec<usize>,
    /// Euclidean norms of the training projections.
    pub u_norm: f64,
    pub v_norm: f64,
    pub kernel: String,
}

impl KccaModel {
    pub fn with_context(mut self, n_lags: usize, train_indices: Vec<usize>) -> Self {
        self.n_lags = n_lags;
        self.train_indices = train_indices;
        self
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Index of the entry with the largest magnitude (first one on ties).
pub(crate) fn argmax_abs(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// Solves the regularized kernel CCA eigenproblem for centered kernels.
///
/// The block-diagonal right-hand side is Cholesky-factored,
/// `L = CCᵀ`, which turns the problem into the symmetric
/// `[0 M; Mᵀ 0]` with `M = Cx⁻¹ KxKy Cy⁻ᵀ`; its top eigenpair is the top
/// singular triple of `M`, taken from the eigendecomposition of `MᵀM`.
pub fn solve_kcca(kx: &DMatrix<f64>, ky: &DMatrix<f64>, kappa: f64) -> Result<KccaModel> {
    let n = kx.nrows();
    if kx.ncols() != n || ky.nrows() != n || ky.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "kernels are {}x{} and {}x{}",
            kx.nrows(),
            kx.ncols(),
            ky.nrows(),
            ky.ncols()
        )));
    }
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if !(kappa >= KAPPA_FLOOR) {
        return Err(Error::SingularRhs {
            kappa,
            floor: KAPPA_FLOOR,
        });
    }

    let regularized = |k: &DMatrix<f64>| {
        let mut l = k * k;
        symmetrize(&mut l);
        for i in 0..n {
            l[(i, i)] += kappa;
        }
        l.cholesky().ok_or(Error::SingularRhs {
            kappa,
            floor: KAPPA_FLOOR,
        })
    };
    let cx = regularized(kx)?.l();
    let cy = regularized(ky)?.l();

    let kxky = kx * ky;
    let left = cx
        .solve_lower_triangular(&kxky)
        .ok_or_else(|| Error::NumericalFailure("triangular solve (x side)".into()))?;
    // M = left · Cy⁻ᵀ  ⇔  Mᵀ = Cy⁻¹ leftᵀ
    let m = cy
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::NumericalFailure("triangular solve (y side)".into()))?
        .transpose();

    let mut mtm = m.tr_mul(&m);
    symmetrize(&mut mtm);
    let eig = nalgebra::SymmetricEigen::try_new(mtm, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolve did not converge".into()))?;
    let top = eig.eigenvalues.imax();
    let sigma = eig.eigenvalues[top].max(0.0).sqrt();
    let b_white: DVector<f64> = eig.eigenvectors.column(top).into_owned();
    let a_raw = &m * &b_white;
    let a_norm = a_raw.norm();
    if !(a_norm > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    let a_white = a_raw / a_norm;

    let mut alpha = cx
        .tr_solve_lower_triangular(&a_white)
        .ok_or_else(|| Error::NumericalFailure("back substitution (x side)".into()))?;
    let mut beta = cy
        .tr_solve_lower_triangular(&b_white)
        .ok_or_else(|| Error::NumericalFailure("back substitution (y side)".into()))?;
    if beta[argmax_abs(&beta)] < 0.0 {
        alpha.neg_mut();
        beta.neg_mut();
    }

    let u = kx * &alpha;
    let v = ky * &beta;
    let lambda = pearson(u.as_slice(), v.as_slice()).ok_or(Error::DegenerateProjection)?;
    Ok(KccaModel {
        alpha,
        beta,
        lambda,
        eigenvalue: sigma,
        kappa,
        n_lags: 0,
        train_indices: Vec::new(),
        u_norm: u.norm(),
        v_norm: v.norm(),
        kernel: LinearKernel.name().to_string(),
    })
}

/// Projects samples through the model: `u = K̃x(train, ·)ᵀα`, `v = K̃y(train, ·)ᵀβ`.
///
/// Both blocks must be centered with the training statistics.
pub fn project(
    model: &KccaModel,
    kx_cross: &DMatrix<f64>,
    ky_cross: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = model.alpha.len();
    if kx_cross.nrows() != n || ky_cross.nrows() != n || kx_cross.ncols() != ky_cross.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cross blocks {}x{} and {}x{} for {n} training samples",
            kx_cross.nrows(),
            kx_cross.ncols(),
            ky_cross.nrows(),
            ky_cross.ncols()
        )));
    }
    let u = kx_cross.tr_mul(&model.alpha);
    let v = ky_cross.tr_mul(&model.beta);
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite projection".into()));
    }
    Ok((u, v))
}

/// Per-lag feature weights of the embedded side and the pool weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalWeights {
    /// `n_terms × n_lags`; column `τ − 1` holds the weights for lag `τ`.
    pub w_x: DMatrix<f64>,
    pub w_y: DVector<f64>,
}

impl PrimalWeights {
    pub fn n_lags(&self) -> usize {
        self.w_x.ncols()
    }

    pub fn lag(&self, lag: usize) -> DVector<f64> {
        self.w_x.column(lag - 1).into_owned()
    }

    /// Weights in embedding row order (largest lag block first).
    pub fn stacked_x(&self) -> DVector<f64> {
        let (w, n) = self.w_x.shape();
        DVector::from_fn(w * n, |r, _| self.w_x[(r % w, n - 1 - r / w)])
    }

    pub fn from_stacked(stacked_x: &DVector<f64>, w_y: DVector<f64>, n_lags: usize) -> Self {
        let w = w_y.len();
        let w_x = DMatrix::from_fn(w, n_lags, |term, col| stacked_x[(n_lags - 1 - col) * w + term]);
        Self { w_x, w_y }
    }
}

fn centered_combination(m: &FeatureMatrix, coef: &DVector<f64>) -> DVector<f64> {
    let (d, n) = (m.n_rows(), m.n_cols());
    let mut acc = DVector::zeros(d);
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        for &(r, v) in m.column(i) {
            acc[r] += coef[i] * v;
            mean[r] += v;
        }
    }
    mean /= n as f64;
    // α sums to ~0 for centered kernels; subtracting the mean term makes the
    // expansion use exactly the centered data the kernels were built from
    acc - mean * coef.sum()
}

/// Recovers primal weights `w_x(τ) = X̃_τ α`, `w_y = Yβ` from training data.
pub fn recover_primal(
    model: &KccaModel,
    embedded_train: &FeatureMatrix,
    pool_train: &FeatureMatrix,
) -> Result<PrimalWeights> {
    if model.kernel != LinearKernel.name() {
        return Err(Error::NonLinearKernel(model.kernel.clone()));
    }
    let n = model.alpha.len();
    if embedded_train.n_cols() != n || pool_train.n_cols() != n {
        return Err(Error::ShapeMismatch(format!(
            "training data has {} and {} columns, model has {n}",
            embedded_train.n_cols(),
            pool_train.n_cols()
        )));
    }
    let w = pool_train.n_rows();
    if model.n_lags == 0 || embedded_train.n_rows() != w * model.n_lags {
        return Err(Error::ShapeMismatch(format!(
            "embedded rows {} != {w} terms x {} lags",
            embedded_train.n_rows(),
            model.n_lags
        )));
    }
    let stacked = centered_combination(embedded_train, &model.alpha);
    let w_y = centered_combination(pool_train, &model.beta);
    Ok(PrimalWeights::from_stacked(&stacked, w_y, model.n_lags))
}

#[cfg(test)]
mod tests;
