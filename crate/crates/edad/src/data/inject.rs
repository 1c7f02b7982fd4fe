//! Synthetic anomaly injection.
//!
//! Point kinds corrupt `ceil(ratio * N)` individual timestamps:
//! - `global`: x_t := global mean +/- magnitude * global std, random sign;
//! - `contextual`: x_t := local(32) mean +/- magnitude * local std.
//!
//! Segment kinds corrupt the same point budget spread over non-overlapping
//! segments of up to [`SEGMENT_LEN`] points:
//! - `shapelet`: the segment is flattened to its own mean;
//! - `seasonal`: the segment is resampled at double speed (frequency
//!   doubling), wrapping within the segment;
//! - `trend`: an affine ramp from 0 to magnitude * std is added across the
//!   segment.
//!
//! Labels mark exactly the corrupted points. Any replacement that lands
//! bit-equal to the original is nudged by magnitude * std so labeled points
//! always differ from the source and unlabeled points stay bit-identical.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::rng::{domain, stream};
use crate::numerics::Real;
use crate::{Error, Result};

use super::{ChannelStats, TimeSeries};

/// Segment length for collective anomalies (half the default window).
pub const SEGMENT_LEN: usize = 50;

pub const DEFAULT_MAGNITUDE: Real = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    Global,
    Contextual,
    Shapelet,
    Seasonal,
    Trend,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 5] = [
        AnomalyKind::Global,
        AnomalyKind::Contextual,
        AnomalyKind::Shapelet,
        AnomalyKind::Seasonal,
        AnomalyKind::Trend,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AnomalyKind::Global => "global",
            AnomalyKind::Contextual => "contextual",
            AnomalyKind::Shapelet => "shapelet",
            AnomalyKind::Seasonal => "seasonal",
            AnomalyKind::Trend => "trend",
        }
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(AnomalyKind::Global),
            "contextual" => Ok(AnomalyKind::Contextual),
            "shapelet" => Ok(AnomalyKind::Shapelet),
            "seasonal" => Ok(AnomalyKind::Seasonal),
            "trend" => Ok(AnomalyKind::Trend),
            other => Err(Error::Config(format!("unknown anomaly kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InjectionSpec {
    pub kind: AnomalyKind,
    /// Fraction of points to corrupt, in (0, 0.5].
    pub ratio: Real,
    /// Deviation scale in units of the (local or global) std.
    pub magnitude: Real,
    pub seed: u64,
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 0.5) {
            return Err(Error::Config(format!(
                "injection ratio {} not in (0, 0.5]",
                self.ratio
            )));
        }
        if self.magnitude <= 0.0 {
            return Err(Error::Config(format!(
                "injection magnitude {} must be positive",
                self.magnitude
            )));
        }
        Ok(())
    }
}

/// Corrupt a univariate series per `spec`. Deterministic for a fixed seed.
/// Returned labels mark exactly the corrupted points.
pub fn inject_anomalies(series: &TimeSeries, spec: &InjectionSpec) -> Result<TimeSeries> {
    spec.validate()?;
    if series.dims() != 1 {
        return Err(Error::Config("inject_anomalies expects a univariate series".into()));
    }
    let mut rng = stream(spec.seed, domain::INJECT, spec.kind as u64, 0);
    let orig = series.values().to_vec();
    let n = orig.len();
    let budget = ((spec.ratio * n as Real).ceil() as usize).min(n);
    let stats = ChannelStats::of(&orig);
    let sigma = stats.effective_std();

    let mut values = orig.clone();
    let mut intended: Vec<usize> = Vec::new();

    match spec.kind {
        AnomalyKind::Global => {
            for &t in &pick_distinct(&mut rng, n, budget) {
                let sign: Real = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                values[t] = stats.mean + sign * spec.magnitude * sigma;
                intended.push(t);
            }
        }
        AnomalyKind::Contextual => {
            for &t in &pick_distinct(&mut rng, n, budget) {
                let local = local_stats(&orig, t, 32);
                let sign: Real = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                values[t] = local.mean + sign * spec.magnitude * local.effective_std();
                intended.push(t);
            }
        }
        AnomalyKind::Shapelet => {
            for (start, len) in place_segments(&mut rng, n, budget)? {
                let seg_mean =
                    orig[start..start + len].iter().sum::<Real>() / len as Real;
                for k in 0..len {
                    values[start + k] = seg_mean;
                    intended.push(start + k);
                }
            }
        }
        AnomalyKind::Seasonal => {
            for (start, len) in place_segments(&mut rng, n, budget)? {
                for k in 0..len {
                    values[start + k] = orig[start + (2 * k + 1) % len];
                    intended.push(start + k);
                }
            }
        }
        AnomalyKind::Trend => {
            for (start, len) in place_segments(&mut rng, n, budget)? {
                for k in 0..len {
                    let ramp = spec.magnitude * sigma * (k + 1) as Real / len as Real;
                    values[start + k] = orig[start + k] + ramp;
                    intended.push(start + k);
                }
            }
        }
    }

    // Every intended point must differ from the source.
    let mut labels = vec![0u8; n];
    for &t in &intended {
        if values[t] == orig[t] {
            values[t] = orig[t] + spec.magnitude * sigma;
        }
        labels[t] = 1;
    }

    TimeSeries::univariate(
        format!("{}+{}", series.name, spec.kind.name()),
        values,
        Some(labels),
    )
}

/// Contaminate a training split: a 50/50 mix of global and contextual point
/// corruptions totalling `ceil(ratio * N)` points. Labels are returned for
/// experiment bookkeeping only and must never reach training.
pub fn contaminate(train: &TimeSeries, ratio: Real, seed: u64) -> Result<TimeSeries> {
    if ratio == 0.0 {
        let mut out = train.clone();
        out.labels = Some(vec![0; train.len()]);
        return Ok(out);
    }
    if !(ratio > 0.0 && ratio <= 0.5) {
        return Err(Error::Config(format!("contamination ratio {ratio} not in (0, 0.5]")));
    }
    if train.dims() != 1 {
        return Err(Error::Config("contaminate expects a univariate series".into()));
    }
    let mut rng = stream(seed, domain::INJECT, 100, 0);
    let orig = train.values().to_vec();
    let n = orig.len();
    let budget = ((ratio * n as Real).ceil() as usize).min(n);
    let stats = ChannelStats::of(&orig);
    let sigma = stats.effective_std();

    let picks = pick_distinct(&mut rng, n, budget);
    let mut values = orig.clone();
    let mut labels = vec![0u8; n];
    for (i, &t) in picks.iter().enumerate() {
        let sign: Real = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        if i < budget / 2 {
            values[t] = stats.mean + sign * DEFAULT_MAGNITUDE * sigma;
        } else {
            let local = local_stats(&orig, t, 32);
            values[t] = local.mean + sign * DEFAULT_MAGNITUDE * local.effective_std();
        }
        if values[t] == orig[t] {
            values[t] = orig[t] + DEFAULT_MAGNITUDE * sigma;
        }
        labels[t] = 1;
    }
    TimeSeries::univariate(format!("{}+cr", train.name), values, Some(labels))
}

fn local_stats(values: &[Real], t: usize, width: usize) -> ChannelStats {
    let half = width / 2;
    let lo = t.saturating_sub(half);
    let hi = (t + half).min(values.len());
    ChannelStats::of(&values[lo..hi])
}

/// `count` distinct indices from `0..n`, in draw order.
fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count.min(n) {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(count.min(n));
    pool
}

/// Non-overlapping segments covering exactly `budget` points, each at most
/// [`SEGMENT_LEN`] long.
fn place_segments(rng: &mut ChaCha8Rng, n: usize, budget: usize) -> Result<Vec<(usize, usize)>> {
    let mut lengths = Vec::new();
    let mut rest = budget;
    while rest > 0 {
        let len = rest.min(SEGMENT_LEN);
        lengths.push(len);
        rest -= len;
    }
    let mut placed: Vec<(usize, usize)> = Vec::new();
    'next: for &len in &lengths {
        if len > n {
            return Err(Error::Config(format!("segment of {len} does not fit in series of {n}")));
        }
        for _ in 0..200 {
            let start = rng.random_range(0..=n - len);
            if !overlaps(&placed, start, len) {
                placed.push((start, len));
                continue 'next;
            }
        }
        // Deterministic fallback: first free slot scanning from a random start.
        let scan_from = rng.random_range(0..=n - len);
        for offset in 0..=n - len {
            let start = (scan_from + offset) % (n - len + 1);
            if !overlaps(&placed, start, len) {
                placed.push((start, len));
                continue 'next;
            }
        }
        return Err(Error::Config(
            "cannot place non-overlapping anomaly segments; lower the ratio".into(),
        ));
    }
    Ok(placed)
}

fn overlaps(placed: &[(usize, usize)], start: usize, len: usize) -> bool {
    placed
        .iter()
        .any(|&(s, l)| start < s + l && s < start + len)
}
