//! Corpus directory format: `meta.json` plus a sorted triplet `matrix.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Corpus, FeedSeries, Normalization, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub const CORPUS_FORMAT_VERSION: u32 = 1;
const MATRIX_HEADER: &str = "feed_index,term_index,time_index,value";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format_version: u32,
    vocabulary: Vec<String>,
    feeds: Vec<String>,
    t0: String,
    bin_hours: f64,
    #[serde(rename = "T")]
    n_bins: usize,
    normalization: Normalization,
    #[serde(default)]
    synthetic: bool,
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn meta_json(c: &Corpus) -> String {
    let meta = Meta {
        format_version: CORPUS_FORMAT_VERSION,
        vocabulary: c.vocabulary.terms().to_vec(),
        feeds: c.feeds.iter().map(|f| f.feed_id.clone()).collect(),
        t0: c.t0.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        bin_hours: c.bin_hours,
        n_bins: c.n_bins,
        normalization: c.normalization,
        synthetic: c.synthetic,
    };
    let mut s = serde_json::to_string_pretty(&meta).expect("meta serializes");
    s.push('\n');
    s
}

fn matrix_csv(c: &Corpus) -> String {
    let mut out = String::with_capacity(64 * c.feeds.iter().map(|f| f.matrix.nnz()).sum::<usize>());
    out.push_str(MATRIX_HEADER);
    out.push('\n');
    for (f, feed) in c.feeds.iter().enumerate() {
        let mut trips: Vec<(usize, usize, f64)> = feed.matrix.triplets().collect();
        trips.sort_by_key(|&(w, t, _)| (w, t));
        for (w, t, v) in trips {
            let _ = writeln!(out, "{f},{w},{t},{}", fmt_f64(v));
        }
    }
    out
}

pub(crate) fn content_hash(c: &Corpus) -> String {
    let mut h = Sha256::new();
    h.update(meta_json(c).as_bytes());
    h.update(matrix_csv(c).as_bytes());
    hex::encode(h.finalize())
}

pub fn store_corpus(c: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = dir.join("meta.json");
    fs::write(&meta, meta_json(c)).map_err(|e| Error::io(&meta, e))?;
    let matrix = dir.join("matrix.csv");
    fs::write(&matrix, matrix_csv(c)).map_err(|e| Error::io(&matrix, e))?;
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let meta_path = dir.join("meta.json");
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::format(&meta_path, "missing integer `format_version`"))?;
    if found != u64::from(CORPUS_FORMAT_VERSION) {
        return Err(Error::FormatVersion {
            path: meta_path,
            expected: CORPUS_FORMAT_VERSION,
            found: u32::try_from(found).unwrap_or(u32::MAX),
        });
    }
    let meta: Meta = serde_json::from_value(value).map_err(|e| Error::format(&meta_path, e.to_string()))?;
    let t0 = DateTime::parse_from_rfc3339(&meta.t0).map_err(|e| Error::format(&meta_path, format!("t0: {e}")))?;
    let vocabulary = Vocabulary::from_sorted(meta.vocabulary).map_err(|e| Error::format(&meta_path, e.to_string()))?;

    let matrix_path = dir.join("matrix.csv");
    let body = fs::read_to_string(&matrix_path).map_err(|e| Error::io(&matrix_path, e))?;
    let mut lines = body.lines();
    if lines.next() != Some(MATRIX_HEADER) {
        return Err(Error::format(
            &matrix_path,
            format!("expected header `{MATRIX_HEADER}`"),
        ));
    }
    let n_feeds = meta.feeds.len();
    let mut per_feed: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_feeds];
    let mut last: Option<(usize, usize, usize)> = None;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let bad = |msg: &str| Error::format(&matrix_path, format!("line {lineno}: {msg}"));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| bad("bad index"));
        let (f, w, t) = (idx(fields[0])?, idx(fields[1])?, idx(fields[2])?);
        let v: f64 = fields[3].parse().map_err(|_| bad("bad value"))?;
        if f >= n_feeds || w >= vocabulary.len() || t >= meta.n_bins {
            return Err(bad("index out of range"));
        }
        if last.is_some_and(|l| l >= (f, w, t)) {
            return Err(bad("triplets not strictly sorted by feed, term, time"));
        }
        last = Some((f, w, t));
        per_feed[f].push((w, t, v));
    }
    let feeds = meta
        .feeds
        .into_iter()
        .zip(per_feed)
        .map(|(feed_id, trips)| {
            Ok(FeedSeries {
                feed_id,
                matrix: FeatureMatrix::from_triplets(vocabulary.len(), meta.n_bins, trips)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(
        vocabulary,
        t0,
        meta.bin_hours,
        meta.n_bins,
        feeds,
        meta.normalization,
        meta.synthetic,
    )
    .map_err(|e| Error::format(dir, e.to_string()))
}
