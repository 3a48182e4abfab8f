//! Largest-variance baseline: each side projected on its own top direction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::backend::LaggedPair;
use super::folds::{FoldPlan, IndexSet};
use crate::matrix::sparse_dot;
use crate::stats::pearson;

/// Unit-norm top eigenvector of `AAᵀ` over the given sparse columns.
///
/// Uses the `W × W` second-moment matrix when `W ≤ n` and the `n × n` Gram
/// matrix otherwise. The largest-magnitude entry is made positive. `None`
/// when all columns are zero.
pub fn top_direction(n_rows: usize, columns: &[&[(usize, f64)]]) -> Option<DVector<f64>> {
    let n = columns.len();
    let mut v = if n_rows <= n {
        let mut c = DMatrix::zeros(n_rows, n_rows);
        for col in columns {
            for &(i, a) in col.iter() {
                for &(j, b) in col.iter() {
                    c[(i, j)] += a * b;
                }
            }
        }
        top_eigenvector(c)?
    } else {
        let g = DMatrix::from_fn(n, n, |a, b| sparse_dot(columns[a], columns[b]));
        let u = top_eigenvector(g)?;
        let mut v = DVector::zeros(n_rows);
        for (k, col) in columns.iter().enumerate() {
            for &(r, x) in col.iter() {
                v[r] += u[k] * x;
            }
        }
        v
    };
    let norm = v.norm();
    if !(norm > 0.0) {
        return None;
    }
    v /= norm;
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
    Some(v)
}

fn top_eigenvector(m: DMatrix<f64>) -> Option<DVector<f64>> {
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.imax();
    (eig.eigenvalues[top] > 0.0).then(|| eig.eigenvectors.column(top).into_owned())
}

/// LSA score of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaFold {
    /// Maximum over the lag grid of the per-lag test correlations; 0 when
    /// no lag gives a defined correlation.
    pub score: f64,
    pub degenerate: bool,
    /// `(τ, ρ)` for every lag in the grid.
    pub per_lag: Vec<(usize, Option<f64>)>,
}

/// Scores the baseline on the same folds as the canonical pipeline.
///
/// Directions come from the unembedded training columns `X(:, t)` and
/// `Y(:, t)`; the score is `max_τ corr(v_xᵀX(:, t−τ), v_yᵀY(:, t))` on the
/// test block.
pub fn lsa_baseline(pair: &LaggedPair, plan: &FoldPlan, lags: &[usize]) -> Vec<LsaFold> {
    plan.folds
        .iter()
        .map(|fold| {
            let train = fold.with_buffer(&plan.universe, pair.max_lag).train;
            lsa_fold(pair, &train, &fold.test, lags)
        })
        .collect()
}

pub(crate) fn lsa_fold(pair: &LaggedPair, train: &IndexSet, test: &IndexSet, lags: &[usize]) -> LsaFold {
    let w = pair.n_terms();
    let xc: Vec<&[(usize, f64)]> = train.iter().map(|j| pair.x.column(pair.time(j))).collect();
    let yc: Vec<&[(usize, f64)]> = train.iter().map(|j| pair.y.column(pair.time(j))).collect();
    let degenerate = |lags: &[usize]| LsaFold {
        score: 0.0,
        degenerate: true,
        per_lag: lags.iter().map(|&l| (l, None)).collect(),
    };
    let (Some(vx), Some(vy)) = (top_direction(w, &xc), top_direction(w, &yc)) else {
        return degenerate(lags);
    };
    let dot = |v: &DVector<f64>, col: &[(usize, f64)]| col.iter().map(|&(r, x)| v[r] * x).sum::<f64>();
    let canonical: Vec<f64> = test.iter().map(|j| dot(&vy, pair.y.column(pair.time(j)))).collect();
    let per_lag: Vec<(usize, Option<f64>)> = lags
        .iter()
        .map(|&tau| {
            let pred: Vec<f64> = test
                .iter()
                .map(|j| dot(&vx, pair.x.column(pair.time(j) - tau)))
                .collect();
            (tau, pearson(&pred, &canonical))
        })
        .collect();
    let best = per_lag.iter().filter_map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
    if best.is_finite() {
        LsaFold {
            score: best,
            degenerate: false,
            per_lag,
        }
    } else {
        LsaFold {
            score: 0.0,
            degenerate: true,
            per_lag,
        }
    }
}
