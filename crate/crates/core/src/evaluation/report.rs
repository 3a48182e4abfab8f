//! Output formats: report JSON, plot CSVs and stored models.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::{Fit, Trend};
use crate::corpus::store::fmt_f64;
use crate::error::{Error, Result};
use crate::kcca::PrimalWeights;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const MODEL_FORMAT_VERSION: u32 = 1;

/// Pretty printer that writes every float with 17 significant digits.
struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with object keys sorted and floats at 17 significant digits.
pub fn to_json_string(value: &impl Serialize) -> Result<String> {
    // going through Value sorts the keys
    let value = serde_json::to_value(value).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::NumericalFailure(e.to_string()))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

/// Comment line binding a CSV to the tool version, seed and corpus.
pub fn provenance_line(seed: u64, corpus_hash: &str) -> String {
    format!("# ctrend {TOOL_VERSION} seed={seed} corpus_hash={corpus_hash}\n")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// `tau_hours,rho`; undefined correlations are left empty.
pub fn correlogram_csv(provenance: &str, bin_hours: f64, points: &[(usize, Option<f64>)]) -> String {
    let mut s = format!("{provenance}tau_hours,rho\n");
    for &(tau, rho) in points {
        s.push_str(&format!("{},{}\n", tau as f64 * bin_hours, fmt_opt(rho)));
    }
    s
}

/// `t,canonical_trend,predicted_trend` with `t` the absolute time bin.
pub fn trend_csv(provenance: &str, trend: &Trend) -> String {
    let mut s = format!("{provenance}t,canonical_trend,predicted_trend\n");
    for k in 0..trend.t.len() {
        s.push_str(&format!(
            "{},{},{}\n",
            trend.t[k],
            fmt_f64(trend.canonical[k]),
            fmt_f64(trend.predicted[k])
        ));
    }
    s
}

/// `term,lag,weight`.
pub fn topwords_csv(provenance: &str, rows: &[(String, usize, f64)]) -> String {
    let mut s = format!("{provenance}term,lag,weight\n");
    for (term, lag, weight) in rows {
        s.push_str(&format!("{term},{lag},{}\n", fmt_f64(*weight)));
    }
    s
}

/// Primal form of a fitted model, bound to the corpus it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredModel {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub corpus_hash: String,
    pub feed_id: String,
    /// Trim of the time axis the model was evaluated on.
    pub max_lag: usize,
    pub n_lags: usize,
    pub kappa: f64,
    pub lambda: f64,
    pub eigenvalue: f64,
    /// `w_x[τ − 1][term]`.
    pub w_x: Vec<Vec<f64>>,
    pub w_y: Vec<f64>,
}

impl StoredModel {
    pub fn new(fit: &Fit, feed_id: &str, max_lag: usize, seed: u64, corpus_hash: &str) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            seed,
            corpus_hash: corpus_hash.to_string(),
            feed_id: feed_id.to_string(),
            max_lag,
            n_lags: fit.n_lags,
            kappa: fit.kappa,
            lambda: fit.lambda,
            eigenvalue: fit.eigenvalue,
            w_x: fit
                .weights
                .w_x
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            w_y: fit.weights.w_y.iter().copied().collect(),
        }
    }

    pub fn weights(&self) -> PrimalWeights {
        let w = self.w_y.len();
        PrimalWeights {
            w_x: DMatrix::from_fn(w, self.w_x.len(), |r, l| self.w_x[l][r]),
            w_y: DVector::from_vec(self.w_y.clone()),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, to_json_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                path: path.to_path_buf(),
                expected: MODEL_FORMAT_VERSION,
                found,
            });
        }
        let model: StoredModel = serde_json::from_value(raw).map_err(|e| Error::format(path, e.to_string()))?;
        let w = model.w_y.len();
        if model.w_x.len() != model.n_lags || model.w_x.iter().any(|l| l.len() != w) || model.n_lags == 0 {
            return Err(Error::format(path, "weight shapes do not match n_lags and vocabulary"));
        }
        Ok(model)
    }
}
