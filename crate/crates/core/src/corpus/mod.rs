//! Raw documents to sparse bag-of-words time series.
//!
//! A [`Corpus`] holds one term × time-bin matrix per feed, all on a shared
//! [`Vocabulary`] and a regular time axis starting at `t0`.

pub(crate) mod store;
mod text;

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, FixedOffset, TimeZone};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub use store::{load_corpus, store_corpus, CORPUS_FORMAT_VERSION};
pub use text::{parse_stopwords, tokenize, TokenizerConfig, ENGLISH_STOPWORDS};

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub feed_id: String,
    pub timestamp: DateTime<FixedOffset>,
    pub text: String,
}

#[derive(Deserialize)]
struct RawDocument {
    feed: String,
    timestamp: String,
    text: String,
}

impl Document {
    pub fn new(feed_id: impl Into<String>, timestamp: DateTime<FixedOffset>, text: impl Into<String>) -> Result<Self> {
        let feed_id = feed_id.into();
        if feed_id.is_empty() {
            return Err(Error::InvalidDocument("empty feed id".into()));
        }
        Ok(Self {
            feed_id,
            timestamp,
            text: text.into(),
        })
    }

    /// Parses one JSON-lines record `{"feed", "timestamp", "text"}`.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let raw: RawDocument = serde_json::from_str(line).map_err(|e| Error::InvalidDocument(e.to_string()))?;
        let timestamp = DateTime::parse_from_rfc3339(&raw.timestamp)
            .map_err(|e| Error::InvalidDocument(format!("timestamp `{}`: {e}", raw.timestamp)))?;
        Self::new(raw.feed, timestamp, raw.text)
    }
}

/// Lexicographically ordered set of terms with a dense index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from terms that must already be strictly sorted.
    pub fn from_sorted(terms: Vec<String>) -> Result<Self> {
        if let Some(w) = terms.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::BadConfig(format!(
                "vocabulary not strictly sorted at `{}`, `{}`",
                w[0], w[1]
            )));
        }
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { terms, index })
    }

    pub fn from_terms(terms: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let mut terms: Vec<String> = terms.into_iter().map(Into::into).collect();
        terms.sort();
        terms.dedup();
        Self::from_sorted(terms)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

#[derive(Debug, Clone, Default)]
pub struct VocabularyConfig {
    pub tokenizer: TokenizerConfig,
    /// Minimum number of documents a term must appear in.
    pub min_df: usize,
}

pub fn build_vocabulary<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    config: &VocabularyConfig,
) -> Result<Vocabulary> {
    let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let unique: HashSet<String> = tokenize(&doc.text, &config.tokenizer).into_iter().collect();
        for term in unique {
            *doc_freq.entry(term).or_insert(0) += 1;
        }
    }
    let terms: Vec<String> = doc_freq
        .into_iter()
        .filter(|&(_, df)| df >= config.min_df.max(1))
        .map(|(t, _)| t)
        .collect();
    if terms.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Vocabulary::from_sorted(terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedSeries {
    pub feed_id: String,
    pub matrix: FeatureMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Counts,
    Tfidf,
}

/// Feature time series of `F ≥ 2` feeds on a shared vocabulary and time axis.
///
/// Synthetic corpora may hold negative values; all other corpora are
/// non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    vocabulary: Vocabulary,
    t0: DateTime<FixedOffset>,
    bin_hours: f64,
    n_bins: usize,
    feeds: Vec<FeedSeries>,
    normalization: Normalization,
    synthetic: bool,
}

impl Corpus {
    pub fn new(
        vocabulary: Vocabulary,
        t0: DateTime<FixedOffset>,
        bin_hours: f64,
        n_bins: usize,
        feeds: Vec<FeedSeries>,
        normalization: Normalization,
        synthetic: bool,
    ) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::NoBins);
        }
        if !(bin_hours.is_finite() && bin_hours > 0.0) {
            return Err(Error::BadConfig(format!("bin width {bin_hours} h must be > 0")));
        }
        if feeds.len() < 2 {
            return Err(Error::NotEnoughFeeds(feeds.len()));
        }
        let mut seen = HashSet::new();
        for feed in &feeds {
            if feed.feed_id.is_empty() {
                return Err(Error::BadConfig("empty feed id".into()));
            }
            if !seen.insert(feed.feed_id.as_str()) {
                return Err(Error::DuplicateFeed(feed.feed_id.clone()));
            }
            let m = &feed.matrix;
            if m.n_rows() != vocabulary.len() || m.n_cols() != n_bins {
                return Err(Error::ShapeMismatch(format!(
                    "feed `{}` is {}x{}, expected {}x{}",
                    feed.feed_id,
                    m.n_rows(),
                    m.n_cols(),
                    vocabulary.len(),
                    n_bins
                )));
            }
            if let Some((r, c, v)) = m
                .triplets()
                .find(|&(_, _, v)| !v.is_finite() || (!synthetic && v < 0.0))
            {
                return Err(Error::BadConfig(format!(
                    "feed `{}` has invalid value {v} at ({r}, {c})",
                    feed.feed_id
                )));
            }
        }
        Ok(Self {
            vocabulary,
            t0,
            bin_hours,
            n_bins,
            feeds,
            normalization,
            synthetic,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn t0(&self) -> DateTime<FixedOffset> {
        self.t0
    }

    pub fn bin_hours(&self) -> f64 {
        self.bin_hours
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn feeds(&self) -> &[FeedSeries] {
        &self.feeds
    }

    pub fn feed_ids(&self) -> impl Iterator<Item = &str> {
        self.feeds.iter().map(|f| f.feed_id.as_str())
    }

    pub fn feed(&self, id: &str) -> Result<&FeedSeries> {
        self.feeds
            .iter()
            .find(|f| f.feed_id == id)
            .ok_or_else(|| Error::UnknownFeed(id.to_string()))
    }

    pub fn feed_index(&self, id: &str) -> Result<usize> {
        self.feeds
            .iter()
            .position(|f| f.feed_id == id)
            .ok_or_else(|| Error::UnknownFeed(id.to_string()))
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic
    }

    /// Returns a copy with one feed's matrix replaced (same shape required).
    pub fn with_feed_matrix(&self, id: &str, matrix: FeatureMatrix) -> Result<Self> {
        let idx = self.feed_index(id)?;
        let mut feeds = self.feeds.clone();
        feeds[idx].matrix = matrix;
        Self::new(
            self.vocabulary.clone(),
            self.t0,
            self.bin_hours,
            self.n_bins,
            feeds,
            self.normalization,
            self.synthetic,
        )
    }

    /// Multiplies every feed matrix by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let feeds = self
            .feeds
            .iter()
            .map(|f| FeedSeries {
                feed_id: f.feed_id.clone(),
                matrix: f.matrix.scale(factor),
            })
            .collect();
        Self::new(
            self.vocabulary.clone(),
            self.t0,
            self.bin_hours,
            self.n_bins,
            feeds,
            self.normalization,
            self.synthetic,
        )
    }

    /// SHA-256 of the canonical on-disk serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        store::content_hash(self)
    }
}

#[derive(Debug, Clone)]
pub struct FeaturizeOptions {
    pub t0: DateTime<FixedOffset>,
    pub bin_hours: f64,
    pub n_bins: usize,
    pub tokenizer: TokenizerConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeaturizeSummary {
    pub ingested: usize,
    /// Documents whose timestamp falls outside the time axis.
    pub dropped: usize,
}

fn bin_width_ms(bin_hours: f64) -> Result<i64> {
    let ms = (bin_hours * 3_600_000.0).round();
    if !(ms.is_finite() && ms >= 1.0) {
        return Err(Error::BadConfig(format!("bin width {bin_hours} h must be > 0")));
    }
    Ok(ms as i64)
}

/// Index of the time bin containing `ts`, if it lies inside the axis.
pub fn bin_index(
    ts: &DateTime<FixedOffset>,
    t0: &DateTime<FixedOffset>,
    bin_hours: f64,
    n_bins: usize,
) -> Result<Option<usize>> {
    let width = bin_width_ms(bin_hours)?;
    let delta = (*ts - *t0).num_milliseconds();
    if delta < 0 {
        return Ok(None);
    }
    let idx = (delta / width) as usize;
    Ok((idx < n_bins).then_some(idx))
}

type CellCounts = BTreeMap<(usize, usize, usize), u64>;

/// Counts vocabulary terms per feed and time bin.
///
/// `feeds` fixes the feed order; every document must belong to one of them.
/// Terms outside the vocabulary are ignored. Counts are integers, so sharded
/// accumulation is exact and independent of document order.
pub fn featurize(
    docs: &[Document],
    feeds: &[String],
    vocabulary: &Vocabulary,
    options: &FeaturizeOptions,
) -> Result<(Corpus, FeaturizeSummary)> {
    if options.n_bins == 0 {
        return Err(Error::NoBins);
    }
    bin_width_ms(options.bin_hours)?;
    let slot: HashMap<&str, usize> = feeds.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();

    let shard = |chunk: &[Document]| -> Result<(CellCounts, FeaturizeSummary)> {
        let mut counts = CellCounts::new();
        let mut summary = FeaturizeSummary::default();
        for doc in chunk {
            let f = *slot
                .get(doc.feed_id.as_str())
                .ok_or_else(|| Error::UnknownFeed(doc.feed_id.clone()))?;
            let Some(t) = bin_index(&doc.timestamp, &options.t0, options.bin_hours, options.n_bins)? else {
                summary.dropped += 1;
                continue;
            };
            summary.ingested += 1;
            for term in tokenize(&doc.text, &options.tokenizer) {
                if let Some(w) = vocabulary.index_of(&term) {
                    *counts.entry((f, w, t)).or_insert(0) += 1;
                }
            }
        }
        Ok((counts, summary))
    };

    let shards: Vec<(CellCounts, FeaturizeSummary)> = docs.par_chunks(4096).map(shard).collect::<Result<_>>()?;
    let mut counts = CellCounts::new();
    let mut summary = FeaturizeSummary::default();
    for (part, s) in shards {
        summary.ingested += s.ingested;
        summary.dropped += s.dropped;
        for (key, n) in part {
            *counts.entry(key).or_insert(0) += n;
        }
    }

    let mut per_feed: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); feeds.len()];
    for ((f, w, t), n) in counts {
        per_feed[f].push((w, t, n as f64));
    }
    let series = feeds
        .iter()
        .zip(per_feed)
        .map(|(id, trips)| {
            Ok(FeedSeries {
                feed_id: id.clone(),
                matrix: FeatureMatrix::from_triplets(vocabulary.len(), options.n_bins, trips)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let corpus = Corpus::new(
        vocabulary.clone(),
        options.t0,
        options.bin_hours,
        options.n_bins,
        series,
        Normalization::Counts,
        false,
    )?;
    Ok((corpus, summary))
}

/// Distinct feed ids in order of first appearance sorted lexicographically.
pub fn feed_ids_of(docs: &[Document]) -> Vec<String> {
    let set: std::collections::BTreeSet<&str> = docs.iter().map(|d| d.feed_id.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Start of the hour containing the earliest document, expressed in `tz`.
pub fn default_t0<Tz: TimeZone>(docs: &[Document], tz: &Tz) -> Option<DateTime<FixedOffset>> {
    use chrono::{Offset, Timelike};
    let first = docs.iter().map(|d| d.timestamp).min()?;
    let local = first.with_timezone(tz);
    let offset = local.offset().fix();
    let floored = local.with_timezone(&offset);
    floored
        .with_nanosecond(0)
        .and_then(|d| d.with_second(0))
        .and_then(|d| d.with_minute(0))
}

/// Reweights counts by pooled inverse cell frequency.
///
/// `idf(w) = ln(F·T / (1 + df(w)))` where `df(w)` counts the (feed, bin)
/// cells in which term `w` occurs; negative values clamp to zero.
pub fn tfidf_normalize(corpus: &Corpus) -> Result<Corpus> {
    if corpus.normalization == Normalization::Tfidf {
        return Err(Error::AlreadyNormalized);
    }
    let idf = inverse_cell_frequency(corpus);
    let feeds = corpus
        .feeds
        .iter()
        .map(|f| FeedSeries {
            feed_id: f.feed_id.clone(),
            matrix: f.matrix.map_values(|w, v| v * idf[w]),
        })
        .collect();
    Corpus::new(
        corpus.vocabulary.clone(),
        corpus.t0,
        corpus.bin_hours,
        corpus.n_bins,
        feeds,
        Normalization::Tfidf,
        corpus.synthetic,
    )
}

pub fn inverse_cell_frequency(corpus: &Corpus) -> Vec<f64> {
    let mut df = vec![0usize; corpus.n_terms()];
    for feed in &corpus.feeds {
        for (w, _, v) in feed.matrix.triplets() {
            if v > 0.0 {
                df[w] += 1;
            }
        }
    }
    let cells = (corpus.feeds.len() * corpus.n_bins) as f64;
    df.into_iter()
        .map(|d| (cells / (1.0 + d as f64)).ln().max(0.0))
        .collect()
}
