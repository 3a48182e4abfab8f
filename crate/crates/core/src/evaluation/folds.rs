//! Blocked cross-validation splits on the trimmed time axis.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted set of axis indices stored as disjoint, non-adjacent ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    ranges: Vec<Range<usize>>,
}

impl IndexSet {
    pub fn range(r: Range<usize>) -> Self {
        let mut s = Self::default();
        s.push(r);
        s
    }

    /// Builds a set from ascending indices.
    pub fn from_sorted(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::default();
        for i in indices {
            s.push(i..i + 1);
        }
        s
    }

    fn push(&mut self, r: Range<usize>) {
        if r.is_empty() {
            return;
        }
        match self.ranges.last_mut() {
            Some(last) if last.end == r.start => last.end = r.end,
            Some(last) => {
                assert!(last.end < r.start, "ranges must be pushed in ascending order");
                self.ranges.push(r);
            }
            None => self.ranges.push(r),
        }
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.ranges.iter().flat_map(|r| r.clone())
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.ranges.iter().any(|r| r.contains(&i))
    }

    pub fn last(&self) -> Option<usize> {
        self.ranges.last().map(|r| r.end - 1)
    }

    /// Elements of `self` that are not in `other`.
    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        let mut out = IndexSet::default();
        for r in &self.ranges {
            let mut start = r.start;
            for o in &other.ranges {
                if o.end <= start || o.start >= r.end {
                    continue;
                }
                if o.start > start {
                    out.push(start..o.start);
                }
                start = start.max(o.end);
            }
            if start < r.end {
                out.push(start..r.end);
            }
        }
        out
    }

    /// Elements of `self` inside `window`.
    pub fn intersect_range(&self, window: Range<usize>) -> IndexSet {
        let mut out = IndexSet::default();
        for r in &self.ranges {
            out.push(r.start.max(window.start)..r.end.min(window.end));
        }
        out
    }

    /// The `count` elements starting at position `start` (in set order).
    fn slice(&self, start: usize, count: usize) -> IndexSet {
        IndexSet::from_sorted(self.iter().skip(start).take(count))
    }
}

/// One cross-validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub test: IndexSet,
    /// Samples right after the test block whose lag window reaches into it.
    pub discarded: IndexSet,
    pub train: IndexSet,
}

impl Fold {
    /// Recomputes the discard buffer for a different lag count.
    pub fn with_buffer(&self, universe: &IndexSet, n_lags: usize) -> Fold {
        split_fold(universe, self.test.clone(), n_lags)
    }
}

fn split_fold(universe: &IndexSet, test: IndexSet, n_lags: usize) -> Fold {
    let discarded = match test.last() {
        Some(last) => universe.difference(&test).intersect_range(last + 1..last + 1 + n_lags),
        None => IndexSet::default(),
    };
    let train = universe.difference(&test).difference(&discarded);
    Fold { test, discarded, train }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub n_lags: usize,
    pub universe: IndexSet,
    pub blocks: Vec<IndexSet>,
    pub folds: Vec<Fold>,
}

/// Splits `0..len` into `n_folds` contiguous blocks.
pub fn plan_folds(len: usize, n_folds: usize, n_lags: usize) -> Result<FoldPlan> {
    plan_folds_within(&IndexSet::range(0..len), n_folds, n_lags)
}

/// Splits the elements of `universe`, in order, into `n_folds` blocks whose
/// sizes differ by at most one. Each fold tests on one block and trains on
/// the rest minus the `n_lags` axis indices following the block.
pub fn plan_folds_within(universe: &IndexSet, n_folds: usize, n_lags: usize) -> Result<FoldPlan> {
    let len = universe.len();
    if n_folds < 2 {
        return Err(Error::BadConfig(format!("need at least 2 folds, got {n_folds}")));
    }
    if len < n_folds * (n_lags + 2) {
        return Err(Error::TooShortForFolds { len, n_folds, n_lags });
    }
    let (base, extra) = (len / n_folds, len % n_folds);
    let mut blocks = Vec::with_capacity(n_folds);
    let mut start = 0;
    for k in 0..n_folds {
        let size = base + usize::from(k < extra);
        blocks.push(universe.slice(start, size));
        start += size;
    }
    let folds = blocks.iter().map(|b| split_fold(universe, b.clone(), n_lags)).collect();
    Ok(FoldPlan {
        n_folds,
        n_lags,
        universe: universe.clone(),
        blocks,
        folds,
    })
}
