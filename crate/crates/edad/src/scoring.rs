//! Anomaly scoring: per-window point-wise MI decomposition, overlap and
//! channel aggregation, thresholding, and the optional point-adjust
//! protocol. Inference never shuffles; the score depends only on the full
//! latent and its auxiliary half.

use rayon::prelude::*;

use crate::data::WindowBatch;
use crate::mi;
use crate::numerics::{Graph, Real};
use crate::trainer::{Model, POOL};
use crate::{decomposer, encoder, Error, Result};

/// Scores aligned to the original series plus per-timestamp coverage (the
/// number of contributing (window, channel) pairs).
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyScoreSeries {
    pub scores: Vec<Real>,
    pub coverage: Vec<usize>,
}

/// Per-timestamp anomaly scores for every window of one channel:
/// encode, split, score all (Y, Y_aux) pairs, negate the point-wise
/// estimator contributions.
pub fn score_windows(model: &Model, batch: &WindowBatch) -> Result<Vec<Vec<Real>>> {
    model
        .params
        .ensure_finite("model parameters")
        .map_err(|e| Error::Scoring(e.to_string()))?;
    if batch.window_len != model.cfg.window {
        return Err(Error::Scoring(format!(
            "window length {} does not match model window {}",
            batch.window_len, model.cfg.window
        )));
    }
    let form = model.cfg.estimator_form();
    let enc_cfg = model.cfg.encoder_config();
    POOL.install(|| {
        batch
            .windows
            .par_iter()
            .map(|window| {
                let mut g = Graph::new();
                let vars = model.params.register_constant(&mut g);
                let y = encoder::encode(&mut g, window, &vars, "enc", &enc_cfg)?;
                let (_, y_aux) = decomposer::split(&mut g, y)?;
                let f = mi::critic_scores(&mut g, y, y_aux, &vars, "critic", model.cfg.critic)?;
                let f_t = g.tensor(f);
                f_t.ensure_finite("critic scores")
                    .map_err(|e| Error::Scoring(e.to_string()))?;
                let contributions = mi::pointwise_scores(form, &f_t, model.cfg.clamp)?;
                Ok(contributions.iter().map(|c| -c).collect())
            })
            .collect()
    })
}

/// Overlap/channel aggregation rule. Mean is the default; max is a
/// sensitivity-study alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggMode {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for AggMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(AggMode::Mean),
            "max" => Ok(AggMode::Max),
            other => Err(Error::Config(format!("unknown aggregation '{other}'"))),
        }
    }
}

/// Merge per-window scores into one score per timestamp: aggregate over
/// the windows covering a timestamp within each channel, then across
/// channels. Every timestamp must be covered in every channel.
pub fn aggregate(
    per_channel: &[(Vec<usize>, Vec<Vec<Real>>)],
    window_len: usize,
    n: usize,
    mode: AggMode,
) -> Result<AnomalyScoreSeries> {
    if per_channel.is_empty() {
        return Err(Error::Contract("aggregate needs at least one channel".into()));
    }
    let mut totals = vec![0.0; n];
    let mut maxima = vec![Real::NEG_INFINITY; n];
    let mut coverage = vec![0usize; n];
    for (offsets, window_scores) in per_channel {
        if offsets.len() != window_scores.len() {
            return Err(Error::Contract("offsets and score vectors must align".into()));
        }
        let mut sums = vec![0.0; n];
        let mut chan_max = vec![Real::NEG_INFINITY; n];
        let mut counts = vec![0usize; n];
        for (&offset, scores) in offsets.iter().zip(window_scores) {
            if scores.len() != window_len || offset + window_len > n {
                return Err(Error::Contract(format!(
                    "window at offset {offset} with {} scores does not fit n={n}",
                    scores.len()
                )));
            }
            for (k, &s) in scores.iter().enumerate() {
                sums[offset + k] += s;
                chan_max[offset + k] = chan_max[offset + k].max(s);
                counts[offset + k] += 1;
            }
        }
        for t in 0..n {
            if counts[t] == 0 {
                return Err(Error::Contract(format!("timestamp {t} has no covering window")));
            }
            totals[t] += sums[t] / counts[t] as Real;
            maxima[t] = maxima[t].max(chan_max[t]);
            coverage[t] += counts[t];
        }
    }
    let channels = per_channel.len() as Real;
    let scores = match mode {
        AggMode::Mean => totals.iter().map(|s| s / channels).collect(),
        AggMode::Max => maxima,
    };
    Ok(AnomalyScoreSeries { scores, coverage })
}

/// Threshold with the cutoff computed from a pooled score set (e.g.
/// train + test) while predictions apply to `scores` only.
pub fn threshold_pooled(scores: &[Real], pool: &[Real], ratio: Real) -> Result<Vec<u8>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("anomaly ratio {ratio} not in (0,1)")));
    }
    if pool.is_empty() {
        return Err(Error::Contract("empty threshold pool".into()));
    }
    let k = ((ratio * pool.len() as Real).ceil() as usize).clamp(1, pool.len());
    let mut sorted: Vec<Real> = pool.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
    let cutoff = sorted[k - 1];
    Ok(scores.iter().map(|&s| u8::from(s >= cutoff)).collect())
}

/// Flag the `ceil(ratio * N)` highest scores as anomalies. Ties at the cut
/// go to the earlier timestamp.
pub fn threshold(scores: &[Real], ratio: Real) -> Result<Vec<u8>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("anomaly ratio {ratio} not in (0,1)")));
    }
    let n = scores.len();
    let k = ((ratio * n as Real).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut preds = vec![0u8; n];
    for &idx in order.iter().take(k) {
        preds[idx] = 1;
    }
    Ok(preds)
}

/// Point adjustment: any ground-truth anomaly segment containing at least
/// one predicted positive becomes fully positive. Off by default in every
/// pipeline; exposed for protocol comparisons.
pub fn point_adjust(preds: &[u8], labels: &[u8]) -> Result<Vec<u8>> {
    if preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "length mismatch: {} vs {}",
            preds.len(),
            labels.len()
        )));
    }
    let n = preds.len();
    let mut adjusted = preds.to_vec();
    let mut t = 0;
    while t < n {
        if labels[t] == 1 {
            let start = t;
            while t < n && labels[t] == 1 {
                t += 1;
            }
            if preds[start..t].iter().any(|&p| p == 1) {
                for a in adjusted[start..t].iter_mut() {
                    *a = 1;
                }
            }
        } else {
            t += 1;
        }
    }
    Ok(adjusted)
}
