//! Dual route with the kernel eigendecompositions shared across κ.
//!
//! With `K = UΛUᵀ` the right-hand side `K² + κI` is diagonal in the same
//! basis, so the top eigenpair of the dual problem is the top singular
//! triple of `diag(fx) · UxᵀUy · diag(fy)`, `f = Λ / √(Λ² + κ)`.

use nalgebra::{DMatrix, DVector};

use super::primal::Spectrum;
use super::{argmax_abs, KccaModel, Kernel, LinearKernel, EIGEN_EPS, EIGEN_MAX_ITER, KAPPA_FLOOR};
use crate::error::{Error, Result};
use crate::stats::pearson;

/// Regularized kernel CCA prepared from centered training kernels.
#[derive(Debug, Clone)]
pub struct GramProblem {
    x: Spectrum,
    y: Spectrum,
    /// `UxᵀUy` over the retained eigenvectors.
    cross: DMatrix<f64>,
}

impl GramProblem {
    pub fn new(kx: &DMatrix<f64>, ky: &DMatrix<f64>) -> Result<Self> {
        let n = kx.nrows();
        if kx.ncols() != n || ky.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "kernels are {:?} and {:?}",
                kx.shape(),
                ky.shape()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        let x = Spectrum::of(kx)?;
        let y = Spectrum::of(ky)?;
        let cross = x.vectors.tr_mul(&y.vectors);
        Ok(Self { x, y, cross })
    }

    pub fn n_samples(&self) -> usize {
        self.x.vectors.nrows()
    }

    /// Same solution as [`super::solve_kcca`] on the kernels given to [`GramProblem::new`].
    pub fn solve(&self, kappa: f64) -> Result<KccaModel> {
        if !(kappa >= KAPPA_FLOOR) {
            return Err(Error::SingularRhs {
                kappa,
                floor: KAPPA_FLOOR,
            });
        }
        let gain = |l: &DVector<f64>| l.map(|v| v / (v * v + kappa).sqrt());
        let (fx, fy) = (gain(&self.x.values), gain(&self.y.values));
        let m = DMatrix::from_fn(self.cross.nrows(), self.cross.ncols(), |i, j| {
            fx[i] * self.cross[(i, j)] * fy[j]
        });
        let svd = m
            .try_svd(true, true, EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
        let top = svd.singular_values.imax();
        let eigenvalue = svd.singular_values[top];
        let a: DVector<f64> = svd.u.as_ref().expect("u requested").column(top).into_owned();
        let b: DVector<f64> = svd.v_t.as_ref().expect("v_t requested").row(top).transpose();

        let unwhiten = |s: &Spectrum, c: &DVector<f64>| {
            let scaled = DVector::from_fn(c.len(), |i, _| c[i] / (s.values[i] * s.values[i] + kappa).sqrt());
            &s.vectors * scaled
        };
        let mut alpha = unwhiten(&self.x, &a);
        let mut beta = unwhiten(&self.y, &b);
        let mut u = &self.x.vectors * a.component_mul(&fx);
        let mut v = &self.y.vectors * b.component_mul(&fy);
        if beta[argmax_abs(&beta)] < 0.0 {
            for w in [&mut alpha, &mut beta, &mut u, &mut v] {
                w.neg_mut();
            }
        }
        let lambda = pearson(u.as_slice(), v.as_slice()).ok_or(Error::DegenerateProjection)?;
        Ok(KccaModel {
            alpha,
            beta,
            lambda,
            eigenvalue,
            kappa,
            n_lags: 0,
            train_indices: Vec::new(),
            u_norm: u.norm(),
            v_norm: v.norm(),
            kernel: LinearKernel.name().to_string(),
        })
    }
}
