//! Fitting the first canonical pair on arbitrary training index sets.
//!
//! Samples live on the axis trimmed by the largest candidate lag `L`:
//! axis index `j` is absolute time `t = j + L`. Two interchangeable routes
//! produce identical solutions. The scatter route keeps chunked
//! statistics of the max-lag joint vector `[x(t−L); …; x(t−1); y(t)]`, so
//! the scatter of any training set and any lag count `N ≤ L` is a merge of
//! chunks plus a sub-selection. The Gram route builds embedded kernels
//! from the raw Gram matrices, `Kx(a, b) = Σₖ G(tₐ−k, t_b−k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::folds::IndexSet;
use crate::corpus::Corpus;
use crate::embedding::pool_excluding;
use crate::error::{Error, Result};
use crate::kcca::{center_kernel, GramProblem, PrimalWeights, ScatterProblem};
use crate::matrix::FeatureMatrix;
use crate::stats::{pearson, Scatter};

/// Largest joint dimension `W·(L+1)` handled by the scatter route in auto mode.
pub const SCATTER_MAX_DIM: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Auto,
    Scatter,
    Gram,
}

/// A feed and its pool, aligned on the trimmed axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedPair {
    pub feed_id: String,
    pub x: FeatureMatrix,
    pub y: FeatureMatrix,
    pub max_lag: usize,
}

impl LaggedPair {
    pub fn new(feed_id: impl Into<String>, x: FeatureMatrix, y: FeatureMatrix, max_lag: usize) -> Result<Self> {
        if x.n_rows() != y.n_rows() || x.n_cols() != y.n_cols() {
            return Err(Error::ShapeMismatch(format!(
                "feed is {}x{}, pool is {}x{}",
                x.n_rows(),
                x.n_cols(),
                y.n_rows(),
                y.n_cols()
            )));
        }
        if max_lag == 0 {
            return Err(Error::ZeroLags);
        }
        if x.n_cols() <= max_lag {
            return Err(Error::SeriesTooShort {
                len: x.n_cols(),
                n_lags: max_lag,
            });
        }
        Ok(Self {
            feed_id: feed_id.into(),
            x,
            y,
            max_lag,
        })
    }

    /// Pairs a corpus feed with the mean of all other feeds.
    pub fn from_corpus(corpus: &Corpus, feed_id: &str, max_lag: usize) -> Result<Self> {
        let x = corpus.feed(feed_id)?.matrix.clone();
        let y = pool_excluding(corpus, feed_id)?.matrix;
        Self::new(feed_id, x, y, max_lag)
    }

    /// Number of samples on the trimmed axis.
    pub fn len(&self) -> usize {
        self.x.n_cols() - self.max_lag
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_terms(&self) -> usize {
        self.x.n_rows()
    }

    pub fn time(&self, j: usize) -> usize {
        j + self.max_lag
    }

    /// Dense max-lag joint vector of sample `j`.
    fn fill_joint(&self, j: usize, out: &mut [f64]) {
        let w = self.n_terms();
        out.fill(0.0);
        for b in 0..self.max_lag {
            for &(r, v) in self.x.column(j + b) {
                out[b * w + r] = v;
            }
        }
        for &(r, v) in self.y.column(self.time(j)) {
            out[self.max_lag * w + r] = v;
        }
    }

    /// Per-lag and pooled projections of the samples in `set`.
    pub fn project(&self, weights: &PrimalWeights, set: &IndexSet) -> Projections {
        let n_lags = weights.n_lags();
        let mut per_lag = vec![Vec::with_capacity(set.len()); n_lags];
        let mut canonical = Vec::with_capacity(set.len());
        for j in set.iter() {
            let t = self.time(j);
            for (l, out) in per_lag.iter_mut().enumerate() {
                let col = weights.w_x.column(l);
                out.push(self.x.column(t - l - 1).iter().map(|&(r, v)| col[r] * v).sum());
            }
            canonical.push(self.y.column(t).iter().map(|&(r, v)| weights.w_y[r] * v).sum());
        }
        let predicted = (0..canonical.len())
            .map(|k| per_lag.iter().map(|p| p[k]).sum())
            .collect();
        Projections {
            per_lag,
            predicted,
            canonical,
        }
    }
}

/// Projections of a sample set through a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    /// `per_lag[τ−1][k] = w_x(τ)ᵀ X(:, t_k − τ)`.
    pub per_lag: Vec<Vec<f64>>,
    /// Convolved feed projection `ŷ(t) = Σ_τ w_x(τ)ᵀ X(:, t − τ)`.
    pub predicted: Vec<f64>,
    /// Pool projection `y(t) = w_yᵀ Y(:, t)`.
    pub canonical: Vec<f64>,
}

impl Projections {
    pub fn correlation(&self) -> Option<f64> {
        pearson(&self.predicted, &self.canonical)
    }

    /// `(τ, ρ(τ))` for every lag of the model.
    pub fn correlogram(&self) -> Vec<(usize, Option<f64>)> {
        self.per_lag
            .iter()
            .enumerate()
            .map(|(l, p)| (l + 1, pearson(p, &self.canonical)))
            .collect()
    }
}

/// A fitted first canonical pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub n_lags: usize,
    pub kappa: f64,
    /// Correlation of the training projections.
    pub lambda: f64,
    pub eigenvalue: f64,
    pub weights: PrimalWeights,
    /// Dual coefficients `(α, β)` when fitted on the Gram route.
    pub dual: Option<(DVector<f64>, DVector<f64>)>,
}

#[derive(Debug, Clone)]
enum Route {
    Scatter { chunk: usize, chunks: Vec<Scatter> },
    Gram { gx: DMatrix<f64>, gy: DMatrix<f64> },
}

/// Precomputed statistics of one [`LaggedPair`].
#[derive(Debug, Clone)]
pub struct Backend {
    route: Route,
}

/// A training problem for one lag count, ready to be solved for any κ.
#[derive(Debug, Clone)]
pub enum Prepared {
    Scatter {
        n_lags: usize,
        problem: ScatterProblem,
    },
    Gram {
        n_lags: usize,
        problem: GramProblem,
        times: Vec<usize>,
    },
}

impl Backend {
    pub fn new(pair: &LaggedPair, kind: BackendKind) -> Self {
        let dim = pair.n_terms() * (pair.max_lag + 1);
        let scatter = match kind {
            BackendKind::Auto => dim <= SCATTER_MAX_DIM,
            BackendKind::Scatter => true,
            BackendKind::Gram => false,
        };
        let route = if scatter {
            let chunk = (dim / 8).max(16);
            let chunks = (0..pair.len() / chunk)
                .map(|c| joint_scatter(pair, c * chunk..(c + 1) * chunk))
                .collect();
            Route::Scatter { chunk, chunks }
        } else {
            Route::Gram {
                gx: pair.x.gram(),
                gy: pair.y.gram(),
            }
        };
        Self { route }
    }

    pub fn kind(&self) -> BackendKind {
        match self.route {
            Route::Scatter { .. } => BackendKind::Scatter,
            Route::Gram { .. } => BackendKind::Gram,
        }
    }

    /// Scatter of the max-lag joint vectors over `set`.
    ///
    /// Uses only chunks lying entirely inside `set`, so the result depends
    /// on the samples in `set` alone.
    fn scatter(&self, pair: &LaggedPair, chunk: usize, chunks: &[Scatter], set: &IndexSet) -> Scatter {
        let dim = pair.n_terms() * (pair.max_lag + 1);
        let mut acc = Scatter::empty(dim);
        for r in set.ranges() {
            let first = r.start.div_ceil(chunk);
            let last = (r.end / chunk).min(chunks.len());
            if first >= last {
                acc = acc.merge(&joint_scatter(pair, r.clone()));
                continue;
            }
            acc = acc.merge(&joint_scatter(pair, r.start..first * chunk));
            for c in &chunks[first..last] {
                acc = acc.merge(c);
            }
            acc = acc.merge(&joint_scatter(pair, last * chunk..r.end));
        }
        acc
    }

    /// Prepares one problem per entry of `lags` (ascending, each ≤ `max_lag`).
    pub fn prepare(&self, pair: &LaggedPair, train: &IndexSet, lags: &[usize]) -> Result<Vec<Prepared>> {
        if train.len() < 2 {
            return Err(Error::TooFewSamples(train.len()));
        }
        let (w, big_l) = (pair.n_terms(), pair.max_lag);
        if let Some(&bad) = lags.iter().find(|&&n| n == 0 || n > big_l) {
            return Err(Error::BadConfig(format!("lag count {bad} outside 1..={big_l}")));
        }
        match &self.route {
            Route::Scatter { chunk, chunks } => {
                let s = self.scatter(pair, *chunk, chunks, train);
                let y_rows: Vec<usize> = (big_l * w..(big_l + 1) * w).collect();
                let syy = s.block(&y_rows, &y_rows);
                lags.iter()
                    .map(|&n| {
                        let x_rows: Vec<usize> = ((big_l - n) * w..big_l * w).collect();
                        let problem =
                            ScatterProblem::new(s.block(&x_rows, &x_rows), syy.clone(), s.block(&x_rows, &y_rows))?;
                        Ok(Prepared::Scatter { n_lags: n, problem })
                    })
                    .collect()
            }
            Route::Gram { gx, gy } => {
                let times: Vec<usize> = train.iter().map(|j| pair.time(j)).collect();
                let n = times.len();
                let (ky, _) = center_kernel(&DMatrix::from_fn(n, n, |a, b| gy[(times[a], times[b])]));
                let mut kx = DMatrix::zeros(n, n);
                let mut built = 0;
                let mut out = Vec::with_capacity(lags.len());
                let mut sorted = lags.to_vec();
                sorted.sort_unstable();
                for &target in &sorted {
                    while built < target {
                        built += 1;
                        for b in 0..n {
                            for a in 0..n {
                                kx[(a, b)] += gx[(times[a] - built, times[b] - built)];
                            }
                        }
                    }
                    let (kxc, _) = center_kernel(&kx);
                    out.push(Prepared::Gram {
                        n_lags: target,
                        problem: GramProblem::new(&kxc, &ky)?,
                        times: times.clone(),
                    });
                }
                Ok(lags
                    .iter()
                    .map(|n| out[sorted.binary_search(n).expect("present")].clone())
                    .collect())
            }
        }
    }
}

fn joint_scatter(pair: &LaggedPair, range: std::ops::Range<usize>) -> Scatter {
    let dim = pair.n_terms() * (pair.max_lag + 1);
    let samples: Vec<Vec<f64>> = range
        .map(|j| {
            let mut z = vec![0.0; dim];
            pair.fill_joint(j, &mut z);
            z
        })
        .collect();
    Scatter::from_samples(dim, samples.iter().map(Vec::as_slice))
}

impl Prepared {
    pub fn n_lags(&self) -> usize {
        match self {
            Prepared::Scatter { n_lags, .. } | Prepared::Gram { n_lags, .. } => *n_lags,
        }
    }

    pub fn solve(&self, pair: &LaggedPair, kappa: f64) -> Result<Fit> {
        match self {
            Prepared::Scatter { n_lags, problem } => {
                let d = problem.solve(kappa)?;
                Ok(Fit {
                    n_lags: *n_lags,
                    kappa,
                    lambda: d.lambda,
                    eigenvalue: d.eigenvalue,
                    weights: PrimalWeights::from_stacked(&d.w_x, d.w_y, *n_lags),
                    dual: None,
                })
            }
            Prepared::Gram { n_lags, problem, times } => {
                let m = problem.solve(kappa)?;
                let w = pair.n_terms();
                let mut w_x = DMatrix::zeros(w, *n_lags);
                let mut mean_x = DMatrix::zeros(w, *n_lags);
                let mut w_y = DVector::zeros(w);
                let mut mean_y = DVector::zeros(w);
                for (i, &t) in times.iter().enumerate() {
                    for l in 0..*n_lags {
                        for &(r, v) in pair.x.column(t - l - 1) {
                            w_x[(r, l)] += m.alpha[i] * v;
                            mean_x[(r, l)] += v;
                        }
                    }
                    for &(r, v) in pair.y.column(t) {
                        w_y[r] += m.beta[i] * v;
                        mean_y[r] += v;
                    }
                }
                let n = times.len() as f64;
                w_x -= mean_x * (m.alpha.sum() / n);
                w_y -= mean_y * (m.beta.sum() / n);
                Ok(Fit {
                    n_lags: *n_lags,
                    kappa,
                    lambda: m.lambda,
                    eigenvalue: m.eigenvalue,
                    weights: PrimalWeights { w_x, w_y },
                    dual: Some((m.alpha, m.beta)),
                })
            }
        }
    }
}
