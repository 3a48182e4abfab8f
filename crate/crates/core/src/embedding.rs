//! Leave-one-feed-out pooling and temporal (lag-stacked) embedding.
//!
//! Time convention: an embedding with `N` lags drops the first `N` bins, so
//! column `j` of both the embedded matrix and the trimmed pool refers to the
//! absolute bin `t = j + N`. Embedded column `j` holds `x(t−N), …, x(t−1)`
//! stacked top to bottom and never touches bins `≥ t`.

use std::ops::Range;

use crate::corpus::{Corpus, FeedSeries};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Mean of all feeds except `excluded_feed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSeries {
    pub excluded_feed: String,
    pub matrix: FeatureMatrix,
}

pub fn pool_excluding(corpus: &Corpus, feed: &str) -> Result<PooledSeries> {
    let n_feeds = corpus.feeds().len();
    if n_feeds < 2 {
        return Err(Error::NotEnoughFeeds(n_feeds));
    }
    corpus.feed_index(feed)?;
    let others: Vec<&FeatureMatrix> = corpus
        .feeds()
        .iter()
        .filter(|f| f.feed_id != feed)
        .map(|f| &f.matrix)
        .collect();
    let sum = FeatureMatrix::sum(&others)?;
    let matrix = if n_feeds == 2 {
        sum
    } else {
        sum.scale(1.0 / (n_feeds - 1) as f64)
    };
    Ok(PooledSeries {
        excluded_feed: feed.to_string(),
        matrix,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedMatrix {
    pub feed_id: String,
    pub n_lags: usize,
    pub n_terms: usize,
    /// `(n_terms · n_lags) × (T − n_lags)`
    pub matrix: FeatureMatrix,
}

impl EmbeddedMatrix {
    /// First original time index represented by column 0.
    pub fn valid_offset(&self) -> usize {
        self.n_lags
    }

    pub fn absolute_time(&self, column: usize) -> usize {
        column + self.n_lags
    }

    /// Rows holding `x(t − lag)`; the top block is the largest lag.
    pub fn lag_rows(&self, lag: usize) -> Range<usize> {
        lag_rows(self.n_terms, self.n_lags, lag)
    }

    /// Splits column `j` back into its `n_lags` raw columns, oldest first.
    pub fn unstack(&self, column: usize) -> Vec<Vec<(usize, f64)>> {
        let mut blocks = vec![Vec::new(); self.n_lags];
        for &(r, v) in self.matrix.column(column) {
            blocks[r / self.n_terms].push((r % self.n_terms, v));
        }
        blocks
    }
}

pub(crate) fn lag_rows(n_terms: usize, n_lags: usize, lag: usize) -> Range<usize> {
    assert!((1..=n_lags).contains(&lag), "lag {lag} outside 1..={n_lags}");
    let block = n_lags - lag;
    block * n_terms..(block + 1) * n_terms
}

pub fn temporal_embed(x: &FeedSeries, n_lags: usize) -> Result<EmbeddedMatrix> {
    if n_lags == 0 {
        return Err(Error::ZeroLags);
    }
    let (n_terms, len) = (x.matrix.n_rows(), x.matrix.n_cols());
    if len <= n_lags {
        return Err(Error::SeriesTooShort { len, n_lags });
    }
    let triplets = (0..len - n_lags).flat_map(|j| {
        (0..n_lags).flat_map(move |b| {
            x.matrix
                .column(j + b)
                .iter()
                .map(move |&(r, v)| (b * n_terms + r, j, v))
        })
    });
    let matrix = FeatureMatrix::from_triplets(n_terms * n_lags, len - n_lags, triplets)?;
    Ok(EmbeddedMatrix {
        feed_id: x.feed_id.clone(),
        n_lags,
        n_terms,
        matrix,
    })
}

/// Drops the first `n_lags` pooled columns to align with [`temporal_embed`].
pub fn trim_pool(y: &PooledSeries, n_lags: usize) -> Result<FeatureMatrix> {
    if n_lags == 0 {
        return Err(Error::ZeroLags);
    }
    let len = y.matrix.n_cols();
    if len <= n_lags {
        return Err(Error::SeriesTooShort { len, n_lags });
    }
    Ok(y.matrix.drop_leading_columns(n_lags))
}
