//! Time series ingestion, channel splitting, standardization, windowing,
//! and synthetic anomaly fixtures.

mod csvio;
mod inject;
mod synth;

pub use csvio::{load_csv, write_csv};
pub use inject::{contaminate, inject_anomalies, AnomalyKind, InjectionSpec};
pub use synth::{flat_series, sine_series};

use crate::numerics::Real;
use crate::{Error, Result};

/// An N x D observation matrix with optional binary point labels
/// (1 = anomaly) and a display name.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub name: String,
    values: Vec<Real>, // row-major N x D
    n: usize,
    d: usize,
    pub labels: Option<Vec<u8>>,
}

impl TimeSeries {
    pub fn new(
        name: impl Into<String>,
        values: Vec<Real>,
        n: usize,
        d: usize,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if n == 0 || d == 0 || values.len() != n * d {
            return Err(Error::Config(format!(
                "time series '{}' has {} values for {n}x{d}",
                name.into(),
                values.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Config(format!("labels length {} != N={n}", l.len())));
            }
        }
        Ok(TimeSeries { name: name.into(), values, n, d, labels })
    }

    pub fn univariate(name: impl Into<String>, values: Vec<Real>, labels: Option<Vec<u8>>) -> Result<Self> {
        let n = values.len();
        TimeSeries::new(name, values, n, 1, labels)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn value(&self, t: usize, j: usize) -> Real {
        self.values[t * self.d + j]
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Real] {
        &mut self.values
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<Real> {
        (0..self.n).map(|t| self.values[t * self.d + j]).collect()
    }

    /// Leading `fraction` of rows as train, the rest as test.
    pub fn split_train_test(&self, fraction: Real) -> Result<(TimeSeries, TimeSeries)> {
        if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
            return Err(Error::Config(format!("split fraction {fraction} not in (0,1)")));
        }
        let n_train = ((self.n as Real) * fraction).floor() as usize;
        if n_train == 0 || n_train == self.n {
            return Err(Error::Config(format!(
                "split fraction {fraction} leaves an empty side for N={}",
                self.n
            )));
        }
        let take = |from: usize, to: usize, tag: &str| {
            let values = self.values[from * self.d..to * self.d].to_vec();
            let labels = self.labels.as_ref().map(|l| l[from..to].to_vec());
            TimeSeries::new(format!("{}:{tag}", self.name), values, to - from, self.d, labels)
        };
        Ok((take(0, n_train, "train")?, take(n_train, self.n, "test")?))
    }
}

/// Overlapping windows of one channel.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub channel: usize,
    pub window_len: usize,
    pub stride: usize,
    pub offsets: Vec<usize>,
    pub windows: Vec<Vec<Real>>,
}

/// Treat a D-variate series as D univariate series. Each carries a copy of
/// the labels.
pub fn channel_split(ts: &TimeSeries) -> Vec<TimeSeries> {
    (0..ts.dims())
        .map(|j| {
            TimeSeries::univariate(
                format!("{}[{j}]", ts.name),
                ts.column(j),
                ts.labels.clone(),
            )
            .expect("column of a valid series is valid")
        })
        .collect()
}

/// Mean and population (1/N) standard deviation of a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: Real,
    pub std: Real,
}

impl ChannelStats {
    pub fn of(values: &[Real]) -> ChannelStats {
        let n = values.len() as Real;
        let mean = values.iter().sum::<Real>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n;
        ChannelStats { mean, std: var.sqrt() }
    }

    /// A near-zero deviation maps the channel to 0 instead of exploding.
    pub fn effective_std(&self) -> Real {
        if self.std < 1e-12 {
            1.0
        } else {
            self.std
        }
    }
}

/// Z-score a univariate series. With `stats` given (train statistics),
/// applies them; otherwise computes them from the input and returns them.
pub fn standardize(series: &TimeSeries, stats: Option<ChannelStats>) -> Result<(TimeSeries, ChannelStats)> {
    if series.dims() != 1 {
        return Err(Error::Config("standardize expects a univariate series".into()));
    }
    let stats = stats.unwrap_or_else(|| ChannelStats::of(series.values()));
    let sd = stats.effective_std();
    let values: Vec<Real> = series.values().iter().map(|v| (v - stats.mean) / sd).collect();
    let out = TimeSeries::univariate(series.name.clone(), values, series.labels.clone())?;
    Ok((out, stats))
}

/// Sliding windows at offsets `0, stride, 2*stride, ...` while the window
/// fits; if the last window does not end at N, one more window ending
/// exactly at N is appended so every timestamp is covered.
pub fn windowize(series: &TimeSeries, window_len: usize, stride: usize) -> Result<WindowBatch> {
    if series.dims() != 1 {
        return Err(Error::Config("windowize expects a univariate series".into()));
    }
    let n = series.len();
    if window_len == 0 || window_len > n {
        return Err(Error::Config(format!(
            "window length {window_len} invalid for series of length {n}"
        )));
    }
    if stride == 0 || stride > window_len {
        // stride beyond the window length would leave uncovered timestamps
        return Err(Error::Config(format!(
            "stride {stride} must be in 1..={window_len}"
        )));
    }
    let mut offsets = Vec::new();
    let mut off = 0;
    while off + window_len <= n {
        offsets.push(off);
        off += stride;
    }
    let last_end = offsets.last().map(|o| o + window_len).unwrap_or(0);
    if last_end < n {
        offsets.push(n - window_len);
    }
    let windows = offsets
        .iter()
        .map(|&o| series.values()[o..o + window_len].to_vec())
        .collect();
    Ok(WindowBatch { channel: 0, window_len, stride, offsets, windows })
}
