//! `ctrend`: synthesize, featurize and analyze feed corpora.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use canonical_trends::corpus::{
    build_vocabulary, default_t0, featurize, feed_ids_of, load_corpus, parse_stopwords, store_corpus, tfidf_normalize,
    Corpus, Document, FeaturizeOptions, TokenizerConfig, VocabularyConfig, ENGLISH_STOPWORDS,
};
use canonical_trends::evaluation::{
    analyze_corpus, canonical_correlogram, correlogram_csv, emit_trend, provenance_line, to_json_string, topword_rows,
    topwords_csv, trend_csv, BackendKind, EvalConfig, HyperGrid, IndexSet, LaggedPair, StoredModel,
};
use canonical_trends::synth::{generate_leader, generate_toy, store_synthetic, LeaderConfig, ToyConfig};
use chrono::{DateTime, FixedOffset};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ctrend", version, about = "Canonical trend detection for web feed corpora")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with a planted trend.
    Synth(SynthArgs),
    /// Turn a JSON-lines document dump into a corpus directory.
    Featurize(FeaturizeArgs),
    /// Cross-validate, rank feeds and write reports.
    Analyze(AnalyzeArgs),
    /// Correlogram of a stored model over the whole corpus.
    Correlogram(ModelArgs),
    /// Top weighted terms of a stored model.
    Topwords(TopwordsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthMode {
    Toy,
    Leader,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "toy")]
    mode: SynthMode,
    #[arg(long, env = "CT_SEED", default_value_t = 42)]
    seed: u64,
    /// Number of time bins.
    #[arg(long = "T", default_value_t = 2000)]
    n_bins: usize,
    /// Signal fraction, in (0, 1].
    #[arg(long, default_value_t = 0.9, value_parser = parse_gamma)]
    gamma: f64,
    /// Bins by which the leading feed is ahead.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    lag: u64,
    /// Feed count (leader mode).
    #[arg(long, default_value_t = 5)]
    feeds: usize,
    /// Vocabulary size (leader mode).
    #[arg(long, default_value_t = 10)]
    terms: usize,
    /// Fraction of trend-carrying terms per feed (leader mode).
    #[arg(long, default_value_t = 0.3)]
    sparsity: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizationArg {
    Tfidf,
    Counts,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    /// JSON-lines file with {"feed", "timestamp", "text"} records.
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// One stop word per line; `#` starts a comment. Defaults to a built-in English list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, overrides_with = "no_stem")]
    stem: bool,
    #[arg(long = "no-stem")]
    no_stem: bool,
    #[arg(long = "bin-hours", default_value_t = 1.0, value_parser = parse_positive)]
    bin_hours: f64,
    /// Start of the time axis; defaults to the hour of the earliest document.
    #[arg(long, value_parser = parse_instant)]
    t0: Option<DateTime<FixedOffset>>,
    /// Number of bins; defaults to covering the latest document.
    #[arg(long = "T")]
    n_bins: Option<usize>,
    /// Reference timezone for the default t0.
    #[arg(long, default_value = "UTC", value_parser = parse_timezone)]
    timezone: chrono_tz::Tz,
    /// Minimum number of documents a term must occur in.
    #[arg(long = "min-df", default_value_t = 1)]
    min_df: usize,
    #[arg(long, value_enum, default_value = "tfidf")]
    normalization: NormalizationArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Auto,
    Scatter,
    Gram,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
    /// Candidate lag counts: `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "1..10", value_parser = parse_lags)]
    lags: LagList,
    /// Candidate regularizers: decades `a..b` or a comma list.
    #[arg(long, default_value = "1e-5..1e1", value_parser = parse_kappas)]
    kappas: KappaList,
    #[arg(long, env = "CT_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long = "baseline-lsa")]
    baseline_lsa: bool,
    #[arg(long = "shuffle-control")]
    shuffle_control: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Comma-separated feed ids to analyze (default: all).
    #[arg(long, value_delimiter = ',')]
    feeds: Vec<String>,
    #[arg(long, value_enum, default_value = "auto")]
    backend: BackendArg,
    /// Terms listed per feed in the report.
    #[arg(long = "top-terms", default_value_t = 10)]
    top_terms: usize,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TopwordsArgs {
    #[command(flatten)]
    io: ModelArgs,
    #[arg(long, default_value_t = 10)]
    top: usize,
}

fn parse_gamma(s: &str) -> Result<f64, String> {
    let g: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if g > 0.0 && g <= 1.0 {
        Ok(g)
    } else {
        Err(format!("gamma must lie in (0, 1], got {g}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn parse_instant(s: &str) -> Result<DateTime<FixedOffset>, String> {
    DateTime::parse_from_rfc3339(s).map_err(|e| format!("not an RFC 3339 instant: {e}"))
}

fn parse_timezone(s: &str) -> Result<chrono_tz::Tz, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Debug, Clone)]
struct LagList(Vec<usize>);

#[derive(Debug, Clone)]
struct KappaList(Vec<f64>);

fn parse_lags(s: &str) -> Result<LagList, String> {
    let values: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (
            a.trim().parse().map_err(|e| format!("{e}"))?,
            b.trim().parse().map_err(|e| format!("{e}"))?,
        );
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|e| format!("`{v}`: {e}")))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(format!("lag grid `{s}` must be non-empty and start at 1 or above"));
    }
    Ok(LagList(values))
}

fn parse_kappas(s: &str) -> Result<KappaList, String> {
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let values: Vec<f64> = if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b)?);
        if !(lo > 0.0 && hi >= lo) {
            return Err(format!("decade range `{s}` needs 0 < a <= b"));
        }
        let (e0, e1) = (lo.log10().round() as i32, hi.log10().round() as i32);
        (e0..=e1).map(|e| 10f64.powi(e)).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if let Some(k) = values.iter().find(|&&k| !(k >= canonical_trends::kcca::KAPPA_FLOOR)) {
        return Err(format!(
            "kappa {k} is below the floor {:e}",
            canonical_trends::kcca::KAPPA_FLOOR
        ));
    }
    Ok(KappaList(values))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", render(&e));
            EXIT_RUNTIME
        }
    }
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn render(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Synth(a) => cmd_synth(a, verbose)?,
        Command::Featurize(a) => cmd_featurize(a, verbose)?,
        Command::Analyze(a) => {
            if a.out == a.corpus {
                return Err(Failure::Usage("--out must differ from --corpus".into()));
            }
            cmd_analyze(a, verbose)?
        }
        Command::Correlogram(a) => cmd_correlogram(a)?,
        Command::Topwords(a) => cmd_topwords(a)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct GenInfo<C: Serialize, T: Serialize> {
    tool_version: &'static str,
    mode: &'static str,
    seed: u64,
    config: C,
    truth: Option<T>,
}

fn cmd_synth(a: SynthArgs, verbose: bool) -> anyhow::Result<()> {
    match a.mode {
        SynthMode::Toy => {
            let cfg = ToyConfig {
                n_bins: a.n_bins,
                gamma: a.gamma,
                lag: a.lag as usize,
                seed: a.seed,
                ..Default::default()
            };
            let corpus = generate_toy(&cfg)?;
            let gen = GenInfo::<_, ()> {
                tool_version: canonical_trends::evaluation::TOOL_VERSION,
                mode: "toy",
                seed: a.seed,
                config: cfg,
                truth: None,
            };
            store_synthetic(&corpus, &gen, &a.out)?;
        }
        SynthMode::Leader => {
            let cfg = LeaderConfig {
                n_feeds: a.feeds,
                n_terms: a.terms,
                n_bins: a.n_bins,
                leader_lag: a.lag as usize,
                trend_sparsity: a.sparsity,
                gamma: a.gamma,
                seed: a.seed,
            };
            let (corpus, truth) = generate_leader(&cfg)?;
            let gen = GenInfo {
                tool_version: canonical_trends::evaluation::TOOL_VERSION,
                mode: "leader",
                seed: a.seed,
                config: cfg,
                truth: Some(truth),
            };
            store_synthetic(&corpus, &gen, &a.out)?;
        }
    }
    if verbose {
        eprintln!("wrote {}", a.out.display());
    }
    Ok(())
}

fn read_documents(path: &Path) -> anyhow::Result<Vec<Document>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = Document::from_json_line(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        docs.push(doc);
    }
    Ok(docs)
}

fn cmd_featurize(a: FeaturizeArgs, verbose: bool) -> anyhow::Result<()> {
    let docs = read_documents(&a.docs)?;
    let stopwords = match &a.stopwords {
        Some(p) => parse_stopwords(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect(),
    };
    let tokenizer = TokenizerConfig::new(stopwords, !a.no_stem);
    let vocabulary = build_vocabulary(
        &docs,
        &VocabularyConfig {
            tokenizer: tokenizer.clone(),
            min_df: a.min_df,
        },
    )?;
    let t0 = match a.t0 {
        Some(t0) => t0,
        None => default_t0(&docs, &a.timezone).ok_or_else(|| anyhow!("no documents to derive t0 from"))?,
    };
    let n_bins = match a.n_bins {
        Some(n) => n,
        None => {
            let last = docs.iter().map(|d| d.timestamp).max().expect("vocabulary is non-empty");
            let width_ms = (a.bin_hours * 3_600_000.0).round() as i64;
            let span = (last - t0).num_milliseconds();
            if span < 0 {
                bail!("every document precedes t0 {t0}");
            }
            (span / width_ms) as usize + 1
        }
    };
    let feeds = feed_ids_of(&docs);
    let (corpus, summary) = featurize(
        &docs,
        &feeds,
        &vocabulary,
        &FeaturizeOptions {
            t0,
            bin_hours: a.bin_hours,
            n_bins,
            tokenizer,
        },
    )?;
    let corpus = match a.normalization {
        NormalizationArg::Tfidf => tfidf_normalize(&corpus)?,
        NormalizationArg::Counts => corpus,
    };
    store_corpus(&corpus, &a.out)?;
    println!("ingested {} documents, dropped {}", summary.ingested, summary.dropped);
    if verbose {
        eprintln!(
            "{} feeds, {} terms, {} bins from {}",
            corpus.feeds().len(),
            corpus.n_terms(),
            corpus.n_bins(),
            corpus.t0().to_rfc3339()
        );
    }
    Ok(())
}

fn file_stem(feed_id: &str) -> String {
    feed_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_analyze(a: AnalyzeArgs, verbose: bool) -> Result<(), Failure> {
    let grid = HyperGrid::new(a.lags.0, a.kappas.0).map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = load_corpus(&a.corpus).map_err(anyhow::Error::from)?;
    let cfg = EvalConfig {
        n_folds: a.folds as usize,
        grid,
        seed: a.seed,
        baseline_lsa: a.baseline_lsa,
        shuffle_control: a.shuffle_control,
        backend: match a.backend {
            BackendArg::Auto => BackendKind::Auto,
            BackendArg::Scatter => BackendKind::Scatter,
            BackendArg::Gram => BackendKind::Gram,
        },
        top_terms: a.top_terms,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs as usize)
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    if verbose {
        eprintln!("analyzing {} feeds with {} worker(s)", corpus.feeds().len(), a.jobs);
    }
    let (report, analyses) = pool
        .install(|| analyze_corpus(&corpus, &a.feeds, &cfg))
        .map_err(anyhow::Error::from)?;

    let hash = report.config.corpus_hash.clone();
    let provenance = provenance_line(a.seed, &hash);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(
        &a.out.join("report.json"),
        &to_json_string(&report).map_err(anyhow::Error::from)?,
    )?;
    let mut used = std::collections::HashSet::new();
    for (i, analysis) in analyses.iter().enumerate() {
        let id = &analysis.report.feed_id;
        let mut stem = file_stem(id);
        if !used.insert(stem.clone()) {
            stem = format!("{stem}-{i}");
            used.insert(stem.clone());
        }
        let dir = a.out.join("feeds").join(stem);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let points: Vec<(usize, Option<f64>)> = analysis.report.correlogram.iter().map(|p| (p.tau, p.rho)).collect();
        write(
            &dir.join("correlogram.csv"),
            &correlogram_csv(&provenance, corpus.bin_hours(), &points),
        )?;
        let pair = LaggedPair::from_corpus(&corpus, id, analysis.max_lag).map_err(anyhow::Error::from)?;
        let axis = IndexSet::range(0..pair.len());
        let trend =
            emit_trend(&pair, &analysis.model.weights, &axis).with_context(|| format!("trend of feed `{id}`"))?;
        write(&dir.join("trend.csv"), &trend_csv(&provenance, &trend))?;
        let rows = topword_rows(&analysis.model.weights, corpus.vocabulary(), cfg.top_terms);
        write(&dir.join("topwords.csv"), &topwords_csv(&provenance, &rows))?;
        StoredModel::new(&analysis.model, id, analysis.max_lag, a.seed, &hash)
            .write(&dir.join("model.json"))
            .map_err(anyhow::Error::from)?;
    }
    for entry in &report.ranking {
        println!("{}\t{}\t{:.4}", entry.rank, entry.feed_id, entry.score);
    }
    Ok(())
}

fn load_bound(a: &ModelArgs) -> anyhow::Result<(Corpus, StoredModel)> {
    let corpus = load_corpus(&a.corpus)?;
    let model = StoredModel::read(&a.model)?;
    let hash = corpus.content_hash();
    if hash != model.corpus_hash {
        bail!(
            "model {} was fitted on corpus {}, but {} has hash {hash}",
            a.model.display(),
            model.corpus_hash,
            a.corpus.display()
        );
    }
    if model.w_y.len() != corpus.n_terms() {
        bail!("model has {} terms, corpus has {}", model.w_y.len(), corpus.n_terms());
    }
    Ok((corpus, model))
}

fn cmd_correlogram(a: ModelArgs) -> anyhow::Result<()> {
    let (corpus, model) = load_bound(&a)?;
    let pair = LaggedPair::from_corpus(&corpus, &model.feed_id, model.max_lag)?;
    let points = canonical_correlogram(&pair, &model.weights(), &IndexSet::range(0..pair.len()));
    let provenance = provenance_line(model.seed, &model.corpus_hash);
    write(&a.out, &correlogram_csv(&provenance, corpus.bin_hours(), &points))
}

fn cmd_topwords(a: TopwordsArgs) -> anyhow::Result<()> {
    let (corpus, model) = load_bound(&a.io)?;
    let rows = topword_rows(&model.weights(), corpus.vocabulary(), a.top);
    let provenance = provenance_line(model.seed, &model.corpus_hash);
    write(&a.io.out, &topwords_csv(&provenance, &rows))
}
