//! Latency profiling and uplink bandwidth estimation.
//!
//! Per-layer inference latency is strongly linear in the token count on both
//! device and cloud hardware, so one ordinary-least-squares line per
//! (model, platform) pair is the whole prediction model. The fit keeps the
//! Pearson correlation so callers can notice when the linearity assumption is
//! off. Uplink bandwidth is estimated as the harmonic mean of recent observed
//! throughput, falling back to a configured offline mean before the first
//! observation.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Correlation gate below which a fitted model is flagged as a poor linear
/// fit.
pub const LOW_CORRELATION_GATE: f64 = 0.85;

/// One profiled layer execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub tokens: u64,
    pub latency_ms: f64,
}

/// Fitted linear per-layer latency predictor for one platform.
#[derive(Debug, Serialize, Deserialize)]
pub struct LatencyModel {
    /// Milliseconds added per input token.
    pub slope_ms_per_token: f64,
    /// Milliseconds at zero tokens.
    pub intercept_ms: f64,
    /// Pearson correlation of the fitted samples; zero when the latencies
    /// had no variance.
    pub r: f64,
    /// Number of samples behind the fit; zero for synthetic models.
    pub sample_count: usize,
    /// Times a raw prediction went negative and was clamped to zero.
    #[serde(skip)]
    clamp_count: AtomicU64,
}

impl Clone for LatencyModel {
    fn clone(&self) -> Self {
        Self {
            slope_ms_per_token: self.slope_ms_per_token,
            intercept_ms: self.intercept_ms,
            r: self.r,
            sample_count: self.sample_count,
            clamp_count: AtomicU64::new(self.clamp_count.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for LatencyModel {
    fn eq(&self, other: &Self) -> bool {
        self.slope_ms_per_token == other.slope_ms_per_token
            && self.intercept_ms == other.intercept_ms
            && self.r == other.r
            && self.sample_count == other.sample_count
    }
}

impl LatencyModel {
    /// Build a model directly from coefficients, bypassing fitting. Used for
    /// synthetic ground truth and toy configurations.
    pub fn from_coefficients(slope_ms_per_token: f64, intercept_ms: f64) -> Self {
        Self {
            slope_ms_per_token,
            intercept_ms,
            r: 1.0,
            sample_count: 0,
            clamp_count: AtomicU64::new(0),
        }
    }

    /// Predicted latency for `tokens` input tokens, clamped at zero.
    pub fn predict_ms(&self, tokens: u64) -> f64 {
        let raw = self.slope_ms_per_token * tokens as f64 + self.intercept_ms;
        if raw < 0.0 {
            self.clamp_count.fetch_add(1, Ordering::Relaxed);
            0.0
        } else {
            raw
        }
    }

    /// How many predictions have been clamped to zero so far.
    pub fn clamped_predictions(&self) -> u64 {
        self.clamp_count.load(Ordering::Relaxed)
    }

    /// True when the fit's correlation failed the linearity gate.
    pub fn low_correlation(&self) -> bool {
        self.r <= LOW_CORRELATION_GATE
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Ordinary least squares over `(tokens, latency_ms)` pairs.
///
/// Requires at least two distinct token counts. Sample order does not affect
/// the result. The Pearson correlation is zero when latency has no variance.
pub fn fit_latency_model(samples: &[LatencySample]) -> Result<LatencyModel> {
    let distinct = {
        let mut tokens: Vec<u64> = samples.iter().map(|s| s.tokens).collect();
        tokens.sort_unstable();
        tokens.dedup();
        tokens.len()
    };
    if distinct < 2 {
        return Err(Error::Fit(format!(
            "need >= 2 distinct token counts, got {distinct}"
        )));
    }
    for s in samples {
        if !s.latency_ms.is_finite() || s.latency_ms < 0.0 {
            return Err(Error::Fit(format!(
                "latency must be finite and non-negative, got {}",
                s.latency_ms
            )));
        }
    }
    let n = samples.len() as f64;
    let mean_x = samples.iter().map(|s| s.tokens as f64).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.latency_ms).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for s in samples {
        let dx = s.tokens as f64 - mean_x;
        let dy = s.latency_ms - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r = if syy == 0.0 { 0.0 } else { sxy / (sxx.sqrt() * syy.sqrt()) };
    Ok(LatencyModel {
        slope_ms_per_token: slope,
        intercept_ms: intercept,
        r,
        sample_count: samples.len(),
        clamp_count: AtomicU64::new(0),
    })
}

/// Read samples from CSV with a required `tokens,latency_ms` header.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<LatencySample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    {
        let headers = rdr.headers()?;
        if headers.len() < 2 || &headers[0] != "tokens" || &headers[1] != "latency_ms" {
            return Err(Error::Config(format!(
                "profile CSV must start with a `tokens,latency_ms` header, got {:?}",
                headers
            )));
        }
    }
    let mut samples = Vec::new();
    for record in rdr.deserialize() {
        samples.push(record?);
    }
    Ok(samples)
}

pub fn read_samples_csv_file(path: &Path) -> Result<Vec<LatencySample>> {
    read_samples_csv(std::fs::File::open(path)?)
}

/// Harmonic-mean uplink bandwidth estimator over a sliding window of observed
/// throughput, with an offline-mean cold start.
///
/// Single writer; clone for a consistent read-side snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthEstimator {
    window: usize,
    observations: VecDeque<f64>,
    cold_start_bps: f64,
}

impl BandwidthEstimator {
    pub fn new(window: usize, cold_start_bps: f64) -> Result<Self> {
        if window < 1 {
            return Err(Error::Validation("estimator window must be >= 1".into()));
        }
        if cold_start_bps <= 0.0 || !cold_start_bps.is_finite() {
            return Err(Error::Validation(
                "cold start bandwidth must be positive and finite".into(),
            ));
        }
        Ok(Self {
            window,
            observations: VecDeque::with_capacity(window),
            cold_start_bps,
        })
    }

    /// Record one observed throughput in bits per second, evicting the oldest
    /// observation beyond the window.
    pub fn observe(&mut self, throughput_bps: f64) -> Result<()> {
        if throughput_bps <= 0.0 || !throughput_bps.is_finite() {
            return Err(Error::Estimation(format!(
                "throughput must be positive and finite, got {throughput_bps}"
            )));
        }
        if self.observations.len() == self.window {
            self.observations.pop_front();
        }
        self.observations.push_back(throughput_bps);
        Ok(())
    }

    /// Current estimate in bits per second: the harmonic mean of the window,
    /// or the cold-start value before any observation.
    pub fn estimate_bps(&self) -> f64 {
        if self.observations.is_empty() {
            return self.cold_start_bps;
        }
        let n = self.observations.len() as f64;
        let reciprocal_sum: f64 = self.observations.iter().map(|b| 1.0 / b).sum();
        n / reciprocal_sum
    }

    pub fn observation_count(&self) -> usize {
        self.observations.len()
    }

    pub fn is_cold(&self) -> bool {
        self.observations.is_empty()
    }
}
