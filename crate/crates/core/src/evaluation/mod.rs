//! Blocked cross-validation, hyperparameter selection and feed ranking.
//!
//! Every feed is scored on the same outer folds of the axis trimmed by the
//! largest candidate lag. Within each outer training set an inner blocked
//! cross-validation picks `(N_τ, κ)`; the outer test block then scores the
//! refitted model by the Pearson correlation of its projections.

mod backend;
mod folds;
mod lsa;
mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{Backend, BackendKind, Fit, LaggedPair, Prepared, Projections, SCATTER_MAX_DIM};
pub use folds::{plan_folds, plan_folds_within, Fold, FoldPlan, IndexSet};
pub use lsa::{lsa_baseline, top_direction, LsaFold};
pub use report::{
    correlogram_csv, provenance_line, to_json_string, topwords_csv, trend_csv, StoredModel, TOOL_VERSION,
};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::kcca::{PrimalWeights, KAPPA_FLOOR};
use crate::stats::{mean, percentile};

/// Candidate lag counts and regularizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    lags: Vec<usize>,
    kappas: Vec<f64>,
}

impl HyperGrid {
    /// Sorts and deduplicates both axes.
    pub fn new(mut lags: Vec<usize>, mut kappas: Vec<f64>) -> Result<Self> {
        if lags.is_empty() || kappas.is_empty() {
            return Err(Error::BadConfig("hyperparameter grid must be non-empty".into()));
        }
        if lags.contains(&0) {
            return Err(Error::ZeroLags);
        }
        if let Some(k) = kappas.iter().find(|&&k| !(k >= KAPPA_FLOOR && k.is_finite())) {
            return Err(Error::BadConfig(format!("kappa {k} below the floor {KAPPA_FLOOR}")));
        }
        lags.sort_unstable();
        lags.dedup();
        kappas.sort_by(f64::total_cmp);
        kappas.dedup();
        Ok(Self { lags, kappas })
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().expect("non-empty")
    }
}

impl Default for HyperGrid {
    /// `N_τ ∈ {1, …, 10}`, `κ ∈ {1e−5, …, 1e1}`.
    fn default() -> Self {
        Self::new((1..=10).collect(), (-5..=1).map(|e| 10f64.powi(e)).collect()).expect("valid grid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub n_lags: usize,
    pub kappa: f64,
}

impl Choice {
    /// Preference order: higher score, then smaller `N_τ`, then larger κ.
    fn prefer_over(&self, other: &Choice) -> bool {
        (self.n_lags, std::cmp::Reverse(self.kappa.to_bits()))
            < (other.n_lags, std::cmp::Reverse(other.kappa.to_bits()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_folds: usize,
    pub grid: HyperGrid,
    pub seed: u64,
    pub baseline_lsa: bool,
    pub shuffle_control: bool,
    pub backend: BackendKind,
    /// Terms listed per feed in the report.
    pub top_terms: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_folds: 10,
            grid: HyperGrid::default(),
            seed: 0,
            baseline_lsa: false,
            shuffle_control: false,
            backend: BackendKind::Auto,
            top_terms: 10,
        }
    }
}

/// A feed paired with its precomputed statistics.
#[derive(Debug, Clone)]
pub struct FeedContext {
    pub pair: LaggedPair,
    pub backend: Backend,
}

impl FeedContext {
    pub fn new(pair: LaggedPair, kind: BackendKind) -> Self {
        let backend = Backend::new(&pair, kind);
        Self { pair, backend }
    }

    pub fn from_corpus(corpus: &Corpus, feed_id: &str, cfg: &EvalConfig) -> Result<Self> {
        let pair = LaggedPair::from_corpus(corpus, feed_id, cfg.grid.max_lag())?;
        Ok(Self::new(pair, cfg.backend))
    }

    /// Outer plan; the discard buffer covers the largest lag.
    pub fn plan(&self, n_folds: usize) -> Result<FoldPlan> {
        plan_folds(self.pair.len(), n_folds, self.pair.max_lag)
    }

    pub fn fit(&self, train: &IndexSet, choice: Choice) -> Result<Fit> {
        let prepared = self.backend.prepare(&self.pair, train, &[choice.n_lags])?;
        prepared[0].solve(&self.pair, choice.kappa)
    }
}

/// Test correlation of a fitted model on `test`.
pub fn test_correlation(pair: &LaggedPair, fit: &Fit, test: &IndexSet) -> Result<f64> {
    pair.project(&fit.weights, test)
        .correlation()
        .ok_or(Error::DegenerateProjection)
}

/// `ρ(τ)` for `τ = 1..=N_τ` over the samples in `set`.
pub fn canonical_correlogram(pair: &LaggedPair, weights: &PrimalWeights, set: &IndexSet) -> Vec<(usize, Option<f64>)> {
    pair.project(weights, set).correlogram()
}

/// Mean inner-fold test correlation for every grid point, keyed `[lag][kappa]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub choice: Choice,
    pub scores: Vec<Vec<f64>>,
}

/// Picks `(N_τ, κ)` by blocked cross-validation inside `train`.
pub fn nested_select(ctx: &FeedContext, train: &IndexSet, grid: &HyperGrid, n_folds: usize) -> Result<Selection> {
    let inner = plan_folds_within(train, n_folds, ctx.pair.max_lag)?;
    let mut sums = vec![vec![0.0; grid.kappas().len()]; grid.lags().len()];
    for fold in &inner.folds {
        let prepared = ctx.backend.prepare(&ctx.pair, &fold.train, grid.lags())?;
        for (li, p) in prepared.iter().enumerate() {
            for (ki, &kappa) in grid.kappas().iter().enumerate() {
                sums[li][ki] += score_or_zero(p.solve(&ctx.pair, kappa), &ctx.pair, &fold.test)?.0;
            }
        }
    }
    let k = inner.folds.len() as f64;
    let scores: Vec<Vec<f64>> = sums.iter().map(|row| row.iter().map(|s| s / k).collect()).collect();
    let mut best: Option<(f64, Choice)> = None;
    for (li, &n_lags) in grid.lags().iter().enumerate() {
        for (ki, &kappa) in grid.kappas().iter().enumerate() {
            let candidate = Choice { n_lags, kappa };
            let s = scores[li][ki];
            let better = match best {
                None => true,
                Some((bs, bc)) => s > bs || (s == bs && candidate.prefer_over(&bc)),
            };
            if better {
                best = Some((s, candidate));
            }
        }
    }
    Ok(Selection {
        choice: best.expect("non-empty grid").1,
        scores,
    })
}

/// Degenerate fits and projections score 0 and are flagged.
fn score_or_zero(fit: Result<Fit>, pair: &LaggedPair, test: &IndexSet) -> Result<(f64, bool)> {
    match fit {
        Ok(fit) => Ok(match test_correlation(pair, &fit, test) {
            Ok(r) => (r, false),
            Err(_) => (0.0, true),
        }),
        Err(Error::DegenerateProjection) => Ok((0.0, true)),
        Err(e) => Err(e),
    }
}

/// Result of one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub choice: Choice,
    pub score: f64,
    pub degenerate: bool,
    pub fit: Option<Fit>,
}

/// Selects hyperparameters on the fold's training set, refits with the
/// buffer of the chosen lag count and scores the test block.
pub fn evaluate_fold(ctx: &FeedContext, plan: &FoldPlan, k: usize, cfg: &EvalConfig) -> Result<FoldResult> {
    let fold = &plan.folds[k];
    let selection = nested_select(ctx, &fold.train, &cfg.grid, cfg.n_folds)?;
    let choice = selection.choice;
    let refit = fold.with_buffer(&plan.universe, choice.n_lags);
    match ctx.fit(&refit.train, choice) {
        Ok(fit) => {
            let (score, degenerate) = match test_correlation(&ctx.pair, &fit, &fold.test) {
                Ok(r) => (r, false),
                Err(_) => (0.0, true),
            };
            Ok(FoldResult {
                choice,
                score,
                degenerate,
                fit: Some(fit),
            })
        }
        Err(Error::DegenerateProjection) => Ok(FoldResult {
            choice,
            score: 0.0,
            degenerate: true,
            fit: None,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Self {
        Self {
            p25: percentile(values, 25.0),
            p50: percentile(values, 50.0),
            p75: percentile(values, 75.0),
        }
    }
}

/// Fold scores of a baseline or control run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub fold_scores: Vec<f64>,
    pub degenerate_folds: Vec<usize>,
    pub mean: f64,
    pub percentiles: Percentiles,
}

impl ScoreSummary {
    fn new(fold_scores: Vec<f64>, degenerate: impl IntoIterator<Item = bool>) -> Self {
        let degenerate_folds = degenerate
            .into_iter()
            .enumerate()
            .filter_map(|(i, d)| d.then_some(i))
            .collect();
        Self {
            mean: mean(&fold_scores),
            percentiles: Percentiles::of(&fold_scores),
            fold_scores,
            degenerate_folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaReport {
    #[serde(flatten)]
    pub summary: ScoreSummary,
    /// Per fold, `(τ, ρ)` for every grid lag.
    pub per_lag: Vec<Vec<(usize, Option<f64>)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelation {
    pub tau: usize,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTerm {
    pub term: String,
    /// Lag of the term's largest weight.
    pub lag: usize,
    /// That weight divided by the largest `|w_x|` entry.
    pub weight: f64,
}

/// Per-feed results as written to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedReport {
    pub feed_id: String,
    pub fold_correlations: Vec<f64>,
    pub degenerate_folds: Vec<usize>,
    pub mean: f64,
    pub percentiles: Percentiles,
    pub chosen: Vec<Choice>,
    /// Most frequent per-fold choice, used for the correlogram and the final model.
    pub consensus: Choice,
    /// Mean over outer folds of the held-out `ρ(τ)` under the consensus choice.
    pub correlogram: Vec<LagCorrelation>,
    pub top_terms: Vec<TopTerm>,
    /// Training correlation of the final model.
    pub lambda: f64,
    pub lsa: Option<LsaReport>,
    pub shuffled: Option<ScoreSummary>,
}

/// Everything produced for one feed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedAnalysis {
    pub report: FeedReport,
    /// Consensus model fitted on the full axis.
    pub model: Fit,
    pub max_lag: usize,
}

/// Most frequent choice; ties go to smaller `N_τ`, then larger κ.
pub fn consensus(choices: &[Choice]) -> Choice {
    let mut counts: BTreeMap<(usize, u64), usize> = BTreeMap::new();
    for c in choices {
        *counts.entry((c.n_lags, c.kappa.to_bits())).or_default() += 1;
    }
    let mut best: Option<(usize, Choice)> = None;
    for (&(n_lags, bits), &count) in &counts {
        let c = Choice {
            n_lags,
            kappa: f64::from_bits(bits),
        };
        let better = match best {
            None => true,
            Some((bc, b)) => count > bc || (count == bc && c.prefer_over(&b)),
        };
        if better {
            best = Some((count, c));
        }
    }
    best.expect("at least one choice").1
}

/// Runs nested cross-validation on every outer fold of one feed.
pub fn cross_validate(ctx: &FeedContext, cfg: &EvalConfig) -> Result<(FoldPlan, Vec<FoldResult>)> {
    let plan = ctx.plan(cfg.n_folds)?;
    let results = (0..plan.folds.len())
        .into_par_iter()
        .map(|k| {
            evaluate_fold(ctx, &plan, k, cfg).map_err(|e| Error::InFold {
                feed: ctx.pair.feed_id.clone(),
                fold: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((plan, results))
}

/// Full analysis of one feed: cross-validated scores, consensus model,
/// correlogram, top terms and the optional baseline and control.
pub fn analyze_feed(corpus: &Corpus, feed_id: &str, cfg: &EvalConfig) -> Result<FeedAnalysis> {
    let ctx = FeedContext::from_corpus(corpus, feed_id, cfg)?;
    let (plan, results) = cross_validate(&ctx, cfg)?;
    let chosen: Vec<Choice> = results.iter().map(|r| r.choice).collect();
    let agreed = consensus(&chosen);

    let correlograms: Vec<Vec<(usize, Option<f64>)>> = plan
        .folds
        .par_iter()
        .zip(&results)
        .map(|(fold, result)| {
            let fit = match &result.fit {
                Some(fit) if result.choice == agreed => fit.clone(),
                _ => match ctx.fit(&fold.with_buffer(&plan.universe, agreed.n_lags).train, agreed) {
                    Ok(fit) => fit,
                    Err(Error::DegenerateProjection) => return Ok(Vec::new()),
                    Err(e) => return Err(e),
                },
            };
            Ok(canonical_correlogram(&ctx.pair, &fit.weights, &fold.test))
        })
        .collect::<Result<_>>()?;
    let correlogram = (1..=agreed.n_lags)
        .map(|tau| {
            let defined: Vec<f64> = correlograms
                .iter()
                .filter_map(|c| c.get(tau - 1).and_then(|&(_, r)| r))
                .collect();
            LagCorrelation {
                tau,
                rho: (!defined.is_empty()).then(|| mean(&defined)),
            }
        })
        .collect();

    let model = ctx.fit(&plan.universe, agreed)?;
    let top_terms = top_terms(&model.weights, corpus.vocabulary(), cfg.top_terms);

    let lsa = cfg.baseline_lsa.then(|| {
        let folds = lsa_baseline(&ctx.pair, &plan, cfg.grid.lags());
        LsaReport {
            summary: ScoreSummary::new(
                folds.iter().map(|f| f.score).collect(),
                folds.iter().map(|f| f.degenerate),
            ),
            per_lag: folds.into_iter().map(|f| f.per_lag).collect(),
        }
    });
    let shuffled = if cfg.shuffle_control {
        Some(shuffle_control(&ctx.pair, cfg)?)
    } else {
        None
    };

    let scores: Vec<f64> = results.iter().map(|r| r.score).collect();
    let report = FeedReport {
        feed_id: feed_id.to_string(),
        degenerate_folds: results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.degenerate.then_some(i))
            .collect(),
        mean: mean(&scores),
        percentiles: Percentiles::of(&scores),
        fold_correlations: scores,
        chosen,
        consensus: agreed,
        correlogram,
        top_terms,
        lambda: model.lambda,
        lsa,
        shuffled,
    };
    Ok(FeedAnalysis {
        report,
        model,
        max_lag: ctx.pair.max_lag,
    })
}

/// Deterministic per-task seed from the master seed and task identity.
pub fn task_seed(master: u64, feed_id: &str, fold: Option<usize>, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((feed_id.len() as u64).to_le_bytes());
    h.update(feed_id.as_bytes());
    h.update(fold.map_or(u64::MAX, |f| f as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Seeded permutation of `0..n`, never the identity when `n > 5`.
pub fn time_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if n <= 5 || perm.iter().enumerate().any(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Reruns the cross-validated pipeline with the feed's time columns permuted.
pub fn shuffle_control(pair: &LaggedPair, cfg: &EvalConfig) -> Result<ScoreSummary> {
    let seed = task_seed(cfg.seed, &pair.feed_id, None, "shuffle");
    let perm = time_permutation(pair.x.n_cols(), seed);
    let shuffled = LaggedPair::new(
        pair.feed_id.clone(),
        pair.x.select_columns(&perm),
        pair.y.clone(),
        pair.max_lag,
    )?;
    let ctx = FeedContext::new(shuffled, cfg.backend);
    let (_, results) = cross_validate(&ctx, cfg)?;
    Ok(ScoreSummary::new(
        results.iter().map(|r| r.score).collect(),
        results.iter().map(|r| r.degenerate),
    ))
}

/// Terms ranked by `Σ_τ |w_x(τ)|`, each with its peak lag.
pub fn top_terms(weights: &PrimalWeights, vocab: &Vocabulary, k: usize) -> Vec<TopTerm> {
    let scale = weights.w_x.amax();
    let mut order: Vec<(usize, f64)> = (0..weights.w_x.nrows())
        .map(|r| (r, weights.w_x.row(r).iter().map(|v| v.abs()).sum()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order
        .into_iter()
        .take(k)
        .map(|(r, _)| {
            let row = weights.w_x.row(r);
            let peak = (0..row.len()).fold(0, |b, l| if row[l].abs() > row[b].abs() { l } else { b });
            TopTerm {
                term: vocab.term(r).to_string(),
                lag: peak + 1,
                weight: if scale > 0.0 { row[peak] / scale } else { 0.0 },
            }
        })
        .collect()
}

/// Rows `(term, lag, weight)` for every lag of the top `k` terms, weights
/// divided by the largest `|weight|` among the rows.
pub fn topword_rows(weights: &PrimalWeights, vocab: &Vocabulary, k: usize) -> Vec<(String, usize, f64)> {
    let terms = top_terms(weights, vocab, k);
    let mut rows = Vec::new();
    for t in &terms {
        let r = vocab.index_of(&t.term).expect("term from vocabulary");
        for l in 0..weights.n_lags() {
            rows.push((t.term.clone(), l + 1, weights.w_x[(r, l)]));
        }
    }
    let scale = rows.iter().fold(0.0f64, |m, r| m.max(r.2.abs()));
    if scale > 0.0 {
        for r in &mut rows {
            r.2 /= scale;
        }
    }
    rows
}

/// Canonical trend and its prediction, each scaled to unit sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct Trend {
    /// Absolute time bins.
    pub t: Vec<usize>,
    pub canonical: Vec<f64>,
    pub predicted: Vec<f64>,
}

pub fn emit_trend(pair: &LaggedPair, weights: &PrimalWeights, set: &IndexSet) -> Result<Trend> {
    let p = pair.project(weights, set);
    let unit = |mut v: Vec<f64>| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::DegenerateProjection);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    };
    Ok(Trend {
        t: set.iter().map(|j| pair.time(j)).collect(),
        canonical: unit(p.canonical)?,
        predicted: unit(p.predicted)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub feed_id: String,
    pub score: f64,
    pub lsa: Option<f64>,
    pub ct_shuffled: Option<f64>,
}

/// Descending by mean fold correlation, ties by feed id.
pub fn rank_feeds(reports: &[FeedReport]) -> Vec<RankEntry> {
    let mut order: Vec<&FeedReport> = reports.iter().collect();
    order.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.feed_id.cmp(&b.feed_id)));
    order
        .into_iter()
        .enumerate()
        .map(|(i, r)| RankEntry {
            rank: i + 1,
            feed_id: r.feed_id.clone(),
            score: r.mean,
            lsa: r.lsa.as_ref().map(|l| l.summary.mean),
            ct_shuffled: r.shuffled.as_ref().map(|s| s.mean),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub tool_version: String,
    pub folds: usize,
    pub grid: HyperGrid,
    pub seed: u64,
    pub corpus_hash: String,
    pub baseline_lsa: bool,
    pub shuffle_control: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub feeds: Vec<FeedReport>,
    pub ranking: Vec<RankEntry>,
}

/// Analyzes the selected feeds (all when `feeds` is empty) and ranks them.
pub fn analyze_corpus(corpus: &Corpus, feeds: &[String], cfg: &EvalConfig) -> Result<(Report, Vec<FeedAnalysis>)> {
    if corpus.feeds().len() < 2 {
        return Err(Error::NotEnoughFeeds(corpus.feeds().len()));
    }
    let selected: Vec<String> = if feeds.is_empty() {
        corpus.feed_ids().map(str::to_string).collect()
    } else {
        for f in feeds {
            corpus.feed(f)?;
        }
        feeds.to_vec()
    };
    let analyses = selected
        .par_iter()
        .map(|f| analyze_feed(corpus, f, cfg))
        .collect::<Result<Vec<_>>>()?;
    let feeds: Vec<FeedReport> = analyses.iter().map(|a| a.report.clone()).collect();
    let report = Report {
        config: ReportConfig {
            tool_version: TOOL_VERSION.to_string(),
            folds: cfg.n_folds,
            grid: cfg.grid.clone(),
            seed: cfg.seed,
            corpus_hash: corpus.content_hash(),
            baseline_lsa: cfg.baseline_lsa,
            shuffle_control: cfg.shuffle_control,
        },
        ranking: rank_feeds(&feeds),
        feeds,
    };
    Ok((report, analyses))
}
