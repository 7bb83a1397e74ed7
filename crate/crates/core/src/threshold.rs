//! Per-ring adaptive thresholding of the reflectivity (or intensity) channel.
//!
//! Each ring gets its own histogram and its own Otsu threshold, searched
//! only from a start bin derived from the ring's mean and spread. Points
//! at or above the threshold become road-marking candidates.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{IndexMask, LidarPoint, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Reflectivity,
    Intensity,
}

impl Channel {
    #[inline]
    pub fn value(self, p: &LidarPoint) -> f64 {
        match self {
            Channel::Reflectivity => f64::from(p.reflectivity),
            Channel::Intensity => f64::from(p.intensity),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Reflectivity => "reflectivity",
            Channel::Intensity => "intensity",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflectivity" => Ok(Channel::Reflectivity),
            "intensity" => Ok(Channel::Intensity),
            other => Err(Error::Usage(format!("unknown channel `{other}`"))),
        }
    }
}

/// Rule for the first threshold examined in a ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T0Mode {
    /// `mean + variance`, in squared units as written in the method.
    MeanPlusVar,
    /// `mean + t0_sigmas · standard deviation`.
    MeanPlusStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdParams {
    pub n_bins: usize,
    pub channel: Channel,
    pub t0_mode: T0Mode,
    /// Standard deviations above the mean where the search starts in
    /// `mean_plus_std` mode.
    pub t0_sigmas: f64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            n_bins: 256,
            channel: Channel::Reflectivity,
            t0_mode: T0Mode::MeanPlusStd,
            t0_sigmas: 2.0,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::Config(format!(
                "threshold.n_bins {} must be at least 2",
                self.n_bins
            )));
        }
        if !(self.t0_sigmas >= 0.0) || !self.t0_sigmas.is_finite() {
            return Err(Error::Config("threshold.t0_sigmas must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Histogram bin of a channel sample: rounded, then clamped into range.
#[inline]
pub fn channel_bin(value: f64, n_bins: usize) -> usize {
    let top = (n_bins - 1) as f64;
    if !(value > 0.0) {
        0
    } else {
        value.round().min(top) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingHistogram {
    pub ring: u16,
    counts: Vec<u64>,
    total: u64,
}

impl RingHistogram {
    pub fn from_counts(ring: u16, counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        RingHistogram { ring, counts, total }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Sample count `N_Pi`.
    pub fn samples(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// True when the ring contributed no samples.
    pub fn is_degenerate(&self) -> bool {
        self.total == 0
    }

    /// Normalized frequency of bin `k`.
    pub fn freq(&self, k: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[k] as f64 / self.total as f64
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| self.freq(k)).collect()
    }

    /// Mean bin value.
    pub fn mean(&self) -> f64 {
        let s: u64 = self.counts.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
        s as f64 / self.total as f64
    }
}

/// Histogram of channel samples over `n_bins` bins.
pub fn ring_histogram(ring: u16, values: &[f64], n_bins: usize) -> RingHistogram {
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        counts[channel_bin(v, n_bins)] += 1;
    }
    RingHistogram::from_counts(ring, counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerStats {
    pub mean: f64,
    /// Population variance `Σx²/N − mean²`.
    pub variance: f64,
}

pub fn layer_stats(values: &[f64]) -> Result<LayerStats> {
    if values.is_empty() {
        return Err(Error::Degenerate("layer statistics of an empty ring".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / n;
    Ok(LayerStats {
        mean,
        variance: (mean_sq - mean * mean).max(0.0),
    })
}

impl LayerStats {
    /// First threshold examined, clamped into `[0, n_bins - 1]`.
    pub fn start_bin(&self, mode: T0Mode, sigmas: f64, n_bins: usize) -> usize {
        let t0 = match mode {
            T0Mode::MeanPlusVar => self.mean + self.variance,
            T0Mode::MeanPlusStd => self.mean + sigmas * self.variance.sqrt(),
        };
        channel_bin(t0, n_bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    pub ring: u16,
    /// Chosen threshold `t*`; meaningless when `degenerate`.
    pub threshold: usize,
    pub t0: usize,
    /// Inter-class variance at `t*`.
    pub between_variance: f64,
    pub degenerate: bool,
}

/// Inter-class variance `ω_R ω_M (μ_R − μ_M)²` from class counts and
/// bin-weighted sums, or `None` when a class is empty.
#[inline]
fn between_variance(total: u64, c_r: u64, s_r: u64, c_m: u64, s_m: u64) -> Option<f64> {
    if c_r == 0 || c_m == 0 {
        return None;
    }
    let n = total as f64;
    let (w_r, w_m) = (c_r as f64 / n, c_m as f64 / n);
    let (mu_r, mu_m) = (s_r as f64 / c_r as f64, s_m as f64 / c_m as f64);
    let diff = mu_r - mu_m;
    Some(w_r * w_m * diff * diff)
}

/// Otsu threshold searched over `t ∈ [max(t0, 1), n_bins − 1]`.
///
/// Class statistics for `t0` are seeded from prefix sums over the bins below
/// it and then updated one bin at a time. The first maximum wins, so ties
/// resolve to the smallest `t`.
pub fn otsu_restricted(hist: &RingHistogram, t0: usize) -> ThresholdResult {
    let nb = hist.n_bins();
    let start = t0.max(1);
    let degenerate = ThresholdResult {
        ring: hist.ring,
        threshold: 0,
        t0,
        between_variance: 0.0,
        degenerate: true,
    };
    if hist.is_degenerate() || start >= nb {
        return degenerate;
    }
    let counts = hist.counts();
    let total = hist.samples();
    let s_total: u64 = counts.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
    let (mut c_r, mut s_r) = (0u64, 0u64);
    for (k, &c) in counts[..start].iter().enumerate() {
        c_r += c;
        s_r += k as u64 * c;
    }
    let mut best: Option<(usize, f64)> = None;
    for t in start..nb {
        if let Some(v) = between_variance(total, c_r, s_r, total - c_r, s_total - s_r) {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((t, v));
            }
        }
        c_r += counts[t];
        s_r += t as u64 * counts[t];
    }
    match best {
        Some((threshold, between_variance)) => ThresholdResult {
            ring: hist.ring,
            threshold,
            t0,
            between_variance,
            degenerate: false,
        },
        None => degenerate,
    }
}

/// Marking candidates of a road subset plus the per-ring thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    /// Indices into the subset passed to [`extract_candidates`].
    pub mask: IndexMask,
    pub rings: Vec<ThresholdResult>,
}

/// Thresholds every ring of `subset` independently and keeps points whose
/// binned channel value is at least their ring's threshold.
pub fn extract_candidates(subset: &PointCloud, params: &ThresholdParams) -> Result<CandidateSet> {
    params.validate()?;
    let pts = subset.points();
    let nb = params.n_bins;
    let per_ring: Vec<(Vec<usize>, Option<ThresholdResult>)> = (0..subset.n_layers())
        .into_par_iter()
        .map(|ring| {
            let span = subset.ring_span(ring).expect("ring below n_layers");
            let idx: Vec<usize> = span.filter(|&i| pts[i].valid).collect();
            if idx.is_empty() {
                return (Vec::new(), None);
            }
            let bins: Vec<f64> = idx
                .iter()
                .map(|&i| channel_bin(params.channel.value(&pts[i]), nb) as f64)
                .collect();
            let stats = layer_stats(&bins).expect("non-empty ring");
            let hist = ring_histogram(ring, &bins, nb);
            let res = otsu_restricted(&hist, stats.start_bin(params.t0_mode, params.t0_sigmas, nb));
            let kept = if res.degenerate {
                Vec::new()
            } else {
                idx.iter()
                    .zip(&bins)
                    .filter(|(_, &b)| b as usize >= res.threshold)
                    .map(|(&i, _)| i)
                    .collect()
            };
            (kept, Some(res))
        })
        .collect();
    let mut kept = Vec::new();
    let mut rings = Vec::new();
    for (k, r) in per_ring {
        kept.extend(k);
        rings.extend(r);
    }
    Ok(CandidateSet {
        mask: IndexMask::new(kept, subset.len())?,
        rings,
    })
}
