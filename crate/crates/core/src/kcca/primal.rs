//! Feature-space route for linear kernels.
//!
//! With `α = X̃ᵀg` and `β = Yᵀh` the dual problem becomes a problem over
//! `g`, `h` whose matrices are built from the centered scatter matrices
//! `Sxx = X̃X̃ᵀ`, `Syy`, `Sxy`. In the eigenbasis `Sxx = UΛUᵀ` the right-hand
//! side is diagonal (`Λ³ + κΛ`), so the top eigenpair is the top singular
//! triple of `diag(sx) · UxᵀSxyUy · diag(sy)` with `s = √(Λ / (Λ² + κ))`.
//! The eigendecompositions do not depend on κ and are computed once.

use nalgebra::{DMatrix, DVector};

use super::{argmax_abs, EIGEN_EPS, EIGEN_MAX_ITER, KAPPA_FLOOR};
use crate::error::{Error, Result};
use crate::stats::correlation_from_moments;

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(super) struct Spectrum {
    pub(super) vectors: DMatrix<f64>,
    pub(super) values: DVector<f64>,
}

impl Spectrum {
    pub(super) fn of(s: &DMatrix<f64>) -> Result<Self> {
        let eig = nalgebra::SymmetricEigen::try_new(s.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::NumericalFailure("scatter eigensolve did not converge".into()))?;
        let top = eig.eigenvalues.max();
        if !(top > 0.0) {
            return Err(Error::DegenerateProjection);
        }
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > top * RANK_TOL)
            .collect();
        Ok(Self {
            vectors: eig.eigenvectors.select_columns(&keep),
            values: eig.eigenvalues.select_rows(&keep),
        })
    }
}

/// Regularized CCA problem prepared from centered training scatter matrices.
#[derive(Debug, Clone)]
pub struct ScatterProblem {
    sxx: DMatrix<f64>,
    syy: DMatrix<f64>,
    sxy: DMatrix<f64>,
    x: Spectrum,
    y: Spectrum,
    /// `UxᵀSxyUy` restricted to the retained eigenvectors.
    cross: DMatrix<f64>,
}

/// Solution of a [`ScatterProblem`] for one κ.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDirections {
    /// Stacked embedded-side weights `w_x = Sxx·g`.
    pub w_x: DVector<f64>,
    pub w_y: DVector<f64>,
    /// Feature-space coefficients with `α = X̃ᵀg`, `β = Yᵀh`.
    pub g: DVector<f64>,
    pub h: DVector<f64>,
    pub lambda: f64,
    pub eigenvalue: f64,
    pub kappa: f64,
}

impl ScatterProblem {
    pub fn new(sxx: DMatrix<f64>, syy: DMatrix<f64>, sxy: DMatrix<f64>) -> Result<Self> {
        let (dx, dy) = (sxx.nrows(), syy.nrows());
        if sxx.ncols() != dx || syy.ncols() != dy || sxy.shape() != (dx, dy) {
            return Err(Error::ShapeMismatch(format!(
                "scatter blocks {:?}, {:?}, {:?}",
                sxx.shape(),
                syy.shape(),
                sxy.shape()
            )));
        }
        let x = Spectrum::of(&sxx)?;
        let y = Spectrum::of(&syy)?;
        let cross = x.vectors.tr_mul(&sxy) * &y.vectors;
        Ok(Self {
            sxx,
            syy,
            sxy,
            x,
            y,
            cross,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.sxx.nrows(), self.syy.nrows())
    }

    pub fn solve(&self, kappa: f64) -> Result<CanonicalDirections> {
        if !(kappa >= KAPPA_FLOOR) {
            return Err(Error::SingularRhs {
                kappa,
                floor: KAPPA_FLOOR,
            });
        }
        let shrink = |l: &DVector<f64>| l.map(|v| (v / (v * v + kappa)).sqrt());
        let (sx, sy) = (shrink(&self.x.values), shrink(&self.y.values));
        let m = DMatrix::from_fn(self.cross.nrows(), self.cross.ncols(), |i, j| {
            sx[i] * self.cross[(i, j)] * sy[j]
        });
        let svd = m
            .try_svd(true, true, EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
        let top = svd.singular_values.imax();
        let eigenvalue = svd.singular_values[top];
        let a: DVector<f64> = svd.u.as_ref().expect("u requested").column(top).into_owned();
        let b: DVector<f64> = svd.v_t.as_ref().expect("v_t requested").row(top).transpose();

        let inv_rhs = |l: &DVector<f64>| l.map(|v| 1.0 / (v * v * v + kappa * v).sqrt());
        let mut g = &self.x.vectors * a.component_mul(&inv_rhs(&self.x.values));
        let mut h = &self.y.vectors * b.component_mul(&inv_rhs(&self.y.values));
        let mut w_x = &self.x.vectors * a.component_mul(&sx);
        let mut w_y = &self.y.vectors * b.component_mul(&sy);
        if w_y[argmax_abs(&w_y)] < 0.0 {
            for v in [&mut g, &mut h, &mut w_x, &mut w_y] {
                v.neg_mut();
            }
        }
        let lambda = correlation_from_moments(
            w_x.dot(&(&self.sxy * &w_y)),
            w_x.dot(&(&self.sxx * &w_x)),
            w_y.dot(&(&self.syy * &w_y)),
        )
        .ok_or(Error::DegenerateProjection)?;
        Ok(CanonicalDirections {
            w_x,
            w_y,
            g,
            h,
            lambda,
            eigenvalue,
            kappa,
        })
    }
}
