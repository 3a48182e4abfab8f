//! Small statistics helpers shared across the pipeline.

use nalgebra::{DMatrix, DVector};

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson inputs differ in length");
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    correlation_from_moments(sab, saa, sbb)
}

pub(crate) fn correlation_from_moments(sab: f64, saa: f64, sbb: f64) -> Option<f64> {
    // relative floor: variances this small are rounding noise
    let tiny = f64::MIN_POSITIVE.sqrt();
    if !(saa > tiny && sbb > tiny) {
        return None;
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    r.is_finite().then(|| r.clamp(-1.0, 1.0))
}

/// Percentile of `values` with linear interpolation between order statistics
/// (the "linear" method: rank `p/100 · (n−1)`).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Count, mean and centered scatter `Σ (z − z̄)(z − z̄)ᵀ` of a set of vectors.
///
/// Partial results merge exactly in the pairwise (Chan et al.) form, so a
/// scatter over any union of index ranges depends only on the data inside
/// those ranges and on the merge order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub count: usize,
    pub mean: DVector<f64>,
    pub m2: DMatrix<f64>,
}

impl Scatter {
    pub fn empty(dim: usize) -> Self {
        Self {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Two-pass scatter of the given sample vectors.
    pub fn from_samples<'a>(dim: usize, samples: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let mut count = 0usize;
        let mut mean = DVector::zeros(dim);
        for z in samples.clone() {
            count += 1;
            for (m, &v) in mean.iter_mut().zip(z) {
                *m += v;
            }
        }
        if count == 0 {
            return Self::empty(dim);
        }
        mean /= count as f64;
        let mut m2 = DMatrix::zeros(dim, dim);
        let mut d = vec![0.0; dim];
        for z in samples {
            for i in 0..dim {
                d[i] = z[i] - mean[i];
            }
            for j in 0..dim {
                let dj = d[j];
                if dj == 0.0 {
                    continue;
                }
                for i in j..dim {
                    m2[(i, j)] += d[i] * dj;
                }
            }
        }
        for j in 0..dim {
            for i in (j + 1)..dim {
                m2[(j, i)] = m2[(i, j)];
            }
        }
        Self { count, mean, m2 }
    }

    pub fn merge(&self, other: &Scatter) -> Scatter {
        if other.count == 0 {
            return self.clone();
        }
        if self.count == 0 {
            return other.clone();
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = &other.mean - &self.mean;
        let mean = &self.mean + &delta * (nb / n);
        let mut m2 = &self.m2 + &other.m2;
        m2.ger(na * nb / n, &delta, &delta, 1.0);
        Scatter {
            count: self.count + other.count,
            mean,
            m2,
        }
    }

    /// Sub-scatter over the coordinates in `idx` (in that order).
    pub fn select(&self, idx: &[usize]) -> Scatter {
        Scatter {
            count: self.count,
            mean: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i])),
            m2: DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.m2[(idx[r], idx[c])]),
        }
    }

    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.m2[(rows[r], cols[c])])
    }
}
