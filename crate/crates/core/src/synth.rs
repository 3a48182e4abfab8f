//! Synthetic corpora with a planted shared trend.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)` with
//! `rand_distr::StandardNormal`, in the stream order documented on each
//! function, so corpora are reproducible across platforms.

use std::fs;
use std::path::Path;

use chrono::{DateTime, FixedOffset};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{store_corpus, Corpus, FeedSeries, Normalization, Vocabulary};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub const TOY_X_TERMS: [&str; 3] = ["Phone", "Volcano", "Airplane"];
pub const TOY_Y_TERMS: [&str; 3] = ["Cloud", "iPad", "Ash"];
pub const TOY_LEADER: &str = "X";
pub const TOY_FOLLOWER: &str = "Y";

fn synthetic_t0() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2010-04-14T00:00:00Z").expect("valid constant")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    #[serde(rename = "T")]
    pub n_bins: usize,
    pub gamma: f64,
    pub lag: usize,
    pub w_x_star: [f64; 3],
    pub w_y_star: [f64; 3],
    pub seed: u64,
    /// Draw the ε terms; off gives the noiseless limit.
    pub noise: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_bins: 2000,
            gamma: 0.9,
            lag: 3,
            w_x_star: [0.05, 0.9, 0.4],
            w_y_star: [0.9, 0.05, 0.6],
            seed: 42,
            noise: true,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::BadConfig(format!("gamma {gamma} must lie in (0, 1]")));
    }
    Ok(())
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.lag == 0 || 4 * self.lag >= self.n_bins {
            return Err(Error::BadConfig(format!(
                "lag {} must satisfy 1 <= lag < T/4 (T = {})",
                self.lag, self.n_bins
            )));
        }
        for (name, w) in [("w_x_star", &self.w_x_star), ("w_y_star", &self.w_y_star)] {
            if w.iter().any(|v| !v.is_finite()) || w.iter().all(|&v| v == 0.0) {
                return Err(Error::BadConfig(format!("{name} must be finite and non-zero")));
            }
        }
        Ok(())
    }
}

/// Latent trend `s(t)` for `t ∈ [−lag, T)`; element `i` is `s(i − lag)`.
///
/// These are the first `T + lag` draws of the toy stream.
pub fn toy_latent(cfg: &ToyConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(draw_normals(&mut rng, cfg.n_bins + cfg.lag))
}

fn draw_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Two-feed toy corpus: feed `X` carries the trend `lag` bins before `Y`.
///
/// ```text
/// X(:, t) = γ w_x* s(t)       + √(1−γ) ε_x(t)
/// Y(:, t) = γ w_y* s(t − lag) + √(1−γ) ε_y(t)
/// ```
///
/// Stream order: `s(−lag), …, s(T−1)`, then `ε_x` bin by bin (3 draws per
/// bin), then `ε_y` likewise. `X` loads on Phone/Volcano/Airplane and `Y`
/// on Cloud/iPad/Ash of a shared 6-term vocabulary.
pub fn generate_toy(cfg: &ToyConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_len = cfg.n_bins;
    let latent = draw_normals(&mut rng, t_len + cfg.lag);
    let s = |t: isize| latent[(t + cfg.lag as isize) as usize];
    let noise_scale = (1.0 - cfg.gamma).sqrt();
    let noise = |rng: &mut ChaCha8Rng| {
        if cfg.noise {
            DMatrix::from_fn(3, t_len, |_, _| StandardNormal.sample(rng))
        } else {
            DMatrix::zeros(3, t_len)
        }
    };
    let eps_x = noise(&mut rng);
    let eps_y = noise(&mut rng);

    let vocabulary = Vocabulary::from_terms(TOY_X_TERMS.iter().chain(&TOY_Y_TERMS).copied())?;
    let place = |terms: &[&str; 3], weights: &[f64; 3], delay: isize, eps: &DMatrix<f64>| {
        let rows: Vec<usize> = terms
            .iter()
            .map(|t| vocabulary.index_of(t).expect("toy term in vocabulary"))
            .collect();
        let mut trips = Vec::with_capacity(3 * t_len);
        for t in 0..t_len {
            let st = s(t as isize - delay);
            for k in 0..3 {
                let value = cfg.gamma * weights[k] * st + noise_scale * eps[(k, t)];
                trips.push((rows[k], t, value));
            }
        }
        FeatureMatrix::from_triplets(6, t_len, trips)
    };
    let x = place(&TOY_X_TERMS, &cfg.w_x_star, 0, &eps_x)?;
    let y = place(&TOY_Y_TERMS, &cfg.w_y_star, cfg.lag as isize, &eps_y)?;
    Corpus::new(
        vocabulary,
        synthetic_t0(),
        1.0,
        t_len,
        vec![
            FeedSeries {
                feed_id: TOY_LEADER.into(),
                matrix: x,
            },
            FeedSeries {
                feed_id: TOY_FOLLOWER.into(),
                matrix: y,
            },
        ],
        Normalization::Counts,
        true,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderConfig {
    #[serde(rename = "F")]
    pub n_feeds: usize,
    #[serde(rename = "W")]
    pub n_terms: usize,
    #[serde(rename = "T")]
    pub n_bins: usize,
    pub leader_lag: usize,
    /// Fraction of terms carrying the trend in each feed.
    pub trend_sparsity: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for LeaderConfig {
    fn default() -> Self {
        Self {
            n_feeds: 5,
            n_terms: 10,
            n_bins: 2000,
            leader_lag: 4,
            trend_sparsity: 0.3,
            gamma: 0.9,
            seed: 42,
        }
    }
}

impl LeaderConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.n_feeds < 3 {
            return Err(Error::BadConfig(format!("F = {} must be at least 3", self.n_feeds)));
        }
        if self.n_terms == 0 {
            return Err(Error::BadConfig("W must be positive".into()));
        }
        if self.leader_lag == 0 || 4 * (self.leader_lag + 1) >= self.n_bins {
            return Err(Error::BadConfig(format!(
                "leader_lag {} must satisfy 1 <= leader_lag and leader_lag + 1 < T/4",
                self.leader_lag
            )));
        }
        if !(self.trend_sparsity > 0.0 && self.trend_sparsity <= 1.0) {
            return Err(Error::BadConfig(format!(
                "trend_sparsity {} must lie in (0, 1]",
                self.trend_sparsity
            )));
        }
        Ok(())
    }
}

/// Ground truth of a leader corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderTruth {
    pub leader: String,
    /// Per feed, how many bins the trend trails the leader.
    pub delays: Vec<usize>,
    /// Per feed, the term indices carrying the trend.
    pub support: Vec<Vec<usize>>,
}

/// `F`-feed corpus in which one feed publishes the shared trend first.
///
/// The leader mixes `s(t)`; every other feed mixes `s(t − L + δ_f)` with
/// jitter `δ_f ∈ {0, 1}` (0 when `L = 1`). Each feed loads the trend on a
/// random subset of `⌈sparsity · W⌉` terms with unit-norm positive weights.
///
/// Stream order: leader index; per feed `δ_f`, support, loadings; then
/// `s(−L−1), …, s(T−1)`; then noise feed by feed, bin by bin.
pub fn generate_leader(cfg: &LeaderConfig) -> Result<(Corpus, LeaderTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n_feeds, w, t_len) = (cfg.n_feeds, cfg.n_terms, cfg.n_bins);
    let leader = rng.gen_range(0..n_feeds);
    let support_size = ((cfg.trend_sparsity * w as f64).ceil() as usize).clamp(1, w);

    let mut delays = Vec::with_capacity(n_feeds);
    let mut support = Vec::with_capacity(n_feeds);
    let mut loadings = Vec::with_capacity(n_feeds);
    for f in 0..n_feeds {
        let jitter = if cfg.leader_lag >= 2 { rng.gen_range(0..=1) } else { 0 };
        delays.push(if f == leader { 0 } else { cfg.leader_lag - jitter });
        let mut terms = sample(&mut rng, w, support_size).into_vec();
        terms.sort_unstable();
        let raw: Vec<f64> = terms.iter().map(|_| rng.gen_range(0.5..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        loadings.push(raw.into_iter().map(|v| v / norm).collect::<Vec<_>>());
        support.push(terms);
    }

    let origin = cfg.leader_lag + 1;
    let latent = draw_normals(&mut rng, t_len + origin);
    let noise_scale = (1.0 - cfg.gamma).sqrt();
    let width = feed_id_width(n_feeds);
    let mut feeds = Vec::with_capacity(n_feeds);
    for f in 0..n_feeds {
        let mut dense = DMatrix::zeros(w, t_len);
        for t in 0..t_len {
            for r in 0..w {
                let e: f64 = StandardNormal.sample(&mut rng);
                dense[(r, t)] = noise_scale * e;
            }
            let s = latent[t + origin - delays[f]];
            for (&r, &l) in support[f].iter().zip(&loadings[f]) {
                dense[(r, t)] += cfg.gamma * l * s;
            }
        }
        feeds.push(FeedSeries {
            feed_id: format!("feed{f:0width$}"),
            matrix: FeatureMatrix::from_dense(&dense),
        });
    }
    let vocabulary = Vocabulary::from_terms((0..w).map(|i| format!("term{i:0width$}", width = feed_id_width(w))))?;
    let truth = LeaderTruth {
        leader: feeds[leader].feed_id.clone(),
        delays,
        support,
    };
    let corpus = Corpus::new(
        vocabulary,
        synthetic_t0(),
        1.0,
        t_len,
        feeds,
        Normalization::Counts,
        true,
    )?;
    Ok((corpus, truth))
}

fn feed_id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(2)
}

/// Writes the corpus directory plus `gen.json` describing how it was made.
pub fn store_synthetic(corpus: &Corpus, gen: &impl Serialize, dir: &Path) -> Result<()> {
    store_corpus(corpus, dir)?;
    let path = dir.join("gen.json");
    let mut body = serde_json::to_string_pretty(gen).map_err(|e| Error::format(&path, e.to_string()))?;
    body.push('\n');
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_noiseless_limit_is_exact() {
        let cfg = ToyConfig {
            gamma: 1.0,
            noise: false,
            n_bins: 50,
            ..Default::default()
        };
        let c = generate_toy(&cfg).unwrap();
        let s = toy_latent(&cfg).unwrap();
        let v = c.vocabulary();
        let x = &c.feed(TOY_LEADER).unwrap().matrix;
        let y = &c.feed(TOY_FOLLOWER).unwrap().matrix;
        for t in 0..50 {
            for k in 0..3 {
                let xr = v.index_of(TOY_X_TERMS[k]).unwrap();
                let yr = v.index_of(TOY_Y_TERMS[k]).unwrap();
                assert_eq!(x.get(xr, t), cfg.w_x_star[k] * s[t + cfg.lag]);
                assert_eq!(y.get(yr, t), cfg.w_y_star[k] * s[t]);
            }
        }
    }

    #[test]
    fn toy_is_deterministic_and_seeded() {
        let cfg = ToyConfig {
            n_bins: 200,
            ..Default::default()
        };
        assert_eq!(generate_toy(&cfg).unwrap(), generate_toy(&cfg).unwrap());
        let other = ToyConfig { seed: 43, ..cfg };
        assert_ne!(
            generate_toy(&other).unwrap(),
            generate_toy(&ToyConfig {
                n_bins: 200,
                ..Default::default()
            })
            .unwrap()
        );
    }

    #[test]
    fn toy_feeds_are_zero_outside_their_terms() {
        let c = generate_toy(&ToyConfig {
            n_bins: 100,
            ..Default::default()
        })
        .unwrap();
        let v = c.vocabulary();
        for (feed, terms) in [(TOY_LEADER, TOY_X_TERMS), (TOY_FOLLOWER, TOY_Y_TERMS)] {
            let allowed: Vec<usize> = terms.iter().map(|t| v.index_of(t).unwrap()).collect();
            let m = &c.feed(feed).unwrap().matrix;
            assert!(m.triplets().all(|(r, _, _)| allowed.contains(&r)));
        }
    }

    #[test]
    fn toy_residual_has_configured_noise_scale() {
        let cfg = ToyConfig::default();
        let c = generate_toy(&cfg).unwrap();
        let s = toy_latent(&cfg).unwrap();
        let v = c.vocabulary();
        let x = &c.feed(TOY_LEADER).unwrap().matrix;
        let scale = (1.0 - cfg.gamma).sqrt();
        for k in 0..3 {
            let r = v.index_of(TOY_X_TERMS[k]).unwrap();
            let resid: Vec<f64> = (0..cfg.n_bins)
                .map(|t| (x.get(r, t) - cfg.gamma * cfg.w_x_star[k] * s[t + cfg.lag]) / scale)
                .collect();
            let m = resid.iter().sum::<f64>() / resid.len() as f64;
            let var = resid.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
            assert!((var - 1.0).abs() < 0.1, "variance {var}");
        }
    }

    #[test]
    fn toy_config_bounds() {
        let bad = |cfg: ToyConfig| matches!(generate_toy(&cfg), Err(Error::BadConfig(_)));
        assert!(bad(ToyConfig {
            gamma: 1.5,
            ..Default::default()
        }));
        assert!(bad(ToyConfig {
            gamma: 0.0,
            ..Default::default()
        }));
        assert!(bad(ToyConfig {
            lag: 0,
            ..Default::default()
        }));
        assert!(bad(ToyConfig {
            lag: 500,
            ..Default::default()
        }));
        assert!(bad(ToyConfig {
            w_x_star: [0.0; 3],
            ..Default::default()
        }));
    }

    #[test]
    fn leader_truth_is_consistent() {
        let cfg = LeaderConfig {
            n_bins: 300,
            ..Default::default()
        };
        let (c, truth) = generate_leader(&cfg).unwrap();
        assert_eq!(c.feeds().len(), 5);
        let leader = c.feed_index(&truth.leader).unwrap();
        assert_eq!(truth.delays[leader], 0);
        for (f, &d) in truth.delays.iter().enumerate() {
            if f != leader {
                assert!(d == 3 || d == 4, "delay {d}");
            }
            assert_eq!(truth.support[f].len(), 3);
        }
        let (again, truth2) = generate_leader(&cfg).unwrap();
        assert_eq!((c, truth), (again, truth2));
        assert!(generate_leader(&LeaderConfig {
            n_feeds: 2,
            ..cfg.clone()
        })
        .is_err());
        assert!(generate_leader(&LeaderConfig { gamma: 2.0, ..cfg }).is_err());
    }
}
