//! Joint selection of pruning rate and split point under a latency SLA.
//!
//! The scheduler walks the pruning-rate grid from no pruning upward (highest
//! accuracy first); for each rate it finds the split point in the
//! fine-to-coarse candidate set that minimizes predicted end-to-end latency,
//! and returns the first (rate, split) pair whose prediction meets the SLA.
//! If no grid point is feasible it falls back to the maximum rate with its
//! best split and marks the decision infeasible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::profiling::LatencyModel;
use crate::pruning::{self, PruningForm, PruningPolicy, PruningSchedule};
use crate::splitting::candidate_split_points;

/// Canonical pruning-rate grid step.
pub const DEFAULT_GRID_STEP: f64 = 0.01;
/// Canonical split-candidate density parameter.
pub const DEFAULT_SPLIT_K: u32 = 5;

/// Scheduling parameters: the SLA plus the knobs of the search space and the
/// communication model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Latency requirement in milliseconds.
    pub sla_ms: f64,
    /// Pruning-rate grid step.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Split-candidate density parameter.
    #[serde(default = "default_split_k")]
    pub split_k: u32,
    /// Multiplicative factor in (0, 1] applied to intermediate payloads to
    /// model compression.
    #[serde(default = "default_compression_ratio")]
    pub compression_ratio: f64,
    /// Override for the bytes uploaded when splitting before the first layer
    /// (a real deployment ships an encoded image, not embeddings).
    #[serde(default)]
    pub raw_input_payload_bytes: Option<u64>,
    /// Round-trip time added to any nonzero transfer.
    #[serde(default)]
    pub rtt_ms: f64,
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_split_k() -> u32 {
    DEFAULT_SPLIT_K
}

fn default_compression_ratio() -> f64 {
    1.0
}

impl SchedulerConfig {
    /// Config with the canonical grid step, split density, no compression,
    /// and no RTT.
    pub fn new(sla_ms: f64) -> Self {
        Self {
            sla_ms,
            grid_step: DEFAULT_GRID_STEP,
            split_k: DEFAULT_SPLIT_K,
            compression_ratio: 1.0,
            raw_input_payload_bytes: None,
            rtt_ms: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sla_ms <= 0.0 || !self.sla_ms.is_finite() {
            return Err(Error::Validation(format!(
                "sla_ms must be positive and finite, got {}",
                self.sla_ms
            )));
        }
        if self.grid_step <= 0.0 || !self.grid_step.is_finite() {
            return Err(Error::Validation(format!(
                "grid_step must be positive and finite, got {}",
                self.grid_step
            )));
        }
        if self.split_k < 1 {
            return Err(Error::Validation("split_k must be >= 1".into()));
        }
        if !(self.compression_ratio > 0.0 && self.compression_ratio <= 1.0) {
            return Err(Error::Validation(format!(
                "compression_ratio must be in (0, 1], got {}",
                self.compression_ratio
            )));
        }
        if self.rtt_ms < 0.0 || !self.rtt_ms.is_finite() {
            return Err(Error::Validation(format!(
                "rtt_ms must be non-negative and finite, got {}",
                self.rtt_ms
            )));
        }
        Ok(())
    }
}

/// The scheduler's output: the chosen configuration and its predicted cost
/// breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Chosen pruning rate (a grid multiple).
    pub alpha: f64,
    /// Chosen split point: 0 = cloud-only, layer count + 1 = device-only.
    pub split_point: u32,
    pub predicted_total_ms: f64,
    pub device_ms: f64,
    pub cloud_ms: f64,
    pub comm_ms: f64,
    /// Whether the prediction meets the SLA.
    pub feasible: bool,
    /// Number of (rate, split) pairs scored before returning.
    pub evaluations: u64,
}

/// Predicted latency breakdown for one (schedule, split) choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitLatency {
    pub device_ms: f64,
    pub cloud_ms: f64,
    pub comm_ms: f64,
    /// Modeled upload size in bytes (fractional under compression).
    pub payload_bytes: f64,
}

impl SplitLatency {
    pub fn total_ms(&self) -> f64 {
        self.device_ms + self.cloud_ms + self.comm_ms
    }
}

/// Modeled transfer size in bytes for splitting at `split`.
///
/// Splits at 0 upload the raw input (override, or the unpruned token payload
/// under compression); interior splits upload the surviving tokens under
/// compression; device-only transfers only the result bytes, uncompressed.
pub fn payload_bytes_for_split(
    spec: &ModelSpec,
    schedule: &PruningSchedule,
    split: u32,
    cfg: &SchedulerConfig,
) -> f64 {
    let n = spec.num_layers;
    if split == n + 1 {
        return spec.result_payload_bytes as f64;
    }
    if split == 0 {
        if let Some(raw) = cfg.raw_input_payload_bytes {
            return raw as f64;
        }
    }
    let tokens = schedule.tokens_at_split(split);
    tokens as f64 * spec.bytes_per_token() as f64 * cfg.compression_ratio
}

/// Predicted device, cloud, and communication latency for executing layers
/// `1..=split` on the device and the rest on the cloud.
///
/// Each layer is charged at its output token count. A constant device
/// overhead applies whenever the device runs at least one layer, and a
/// constant cloud overhead whenever the cloud runs the head. Zero-byte
/// transfers cost nothing; any other transfer pays serialization plus RTT.
pub fn predicted_split_latency(
    spec: &ModelSpec,
    schedule: &PruningSchedule,
    device: &LatencyModel,
    cloud: &LatencyModel,
    bandwidth_bps: f64,
    split: u32,
    cfg: &SchedulerConfig,
) -> Result<SplitLatency> {
    if bandwidth_bps <= 0.0 || !bandwidth_bps.is_finite() {
        return Err(Error::Estimation(format!(
            "bandwidth must be positive and finite, got {bandwidth_bps}"
        )));
    }
    let n = spec.num_layers;
    if split > n + 1 {
        return Err(Error::Validation(format!(
            "split point {split} exceeds layer count + 1 = {}",
            n + 1
        )));
    }

    let mut device_ms = 0.0;
    for l in 1..=split.min(n) {
        device_ms += device.predict_ms(schedule.tokens_at_split(l));
    }
    if split >= 1 {
        device_ms += spec.device_overhead_ms;
    }

    let mut cloud_ms = 0.0;
    for l in (split + 1)..=n {
        cloud_ms += cloud.predict_ms(schedule.tokens_at_split(l));
    }
    if split <= n {
        cloud_ms += spec.cloud_overhead_ms;
    }

    let payload_bytes = payload_bytes_for_split(spec, schedule, split, cfg);
    let comm_ms = if payload_bytes == 0.0 {
        0.0
    } else {
        payload_bytes * 8.0 / bandwidth_bps * 1000.0 + cfg.rtt_ms
    };

    Ok(SplitLatency {
        device_ms,
        cloud_ms,
        comm_ms,
        payload_bytes,
    })
}

/// Best split for one pruning schedule: minimum predicted total over the
/// candidate set, ties broken toward the smallest split point.
#[allow(clippy::too_many_arguments)]
fn argmin_split(
    spec: &ModelSpec,
    schedule: &PruningSchedule,
    device: &LatencyModel,
    cloud: &LatencyModel,
    bandwidth_bps: f64,
    candidates: &[u32],
    cfg: &SchedulerConfig,
    evaluations: &mut u64,
) -> Result<(u32, SplitLatency)> {
    let mut best: Option<(u32, SplitLatency)> = None;
    for &s in candidates {
        let lat = predicted_split_latency(spec, schedule, device, cloud, bandwidth_bps, s, cfg)?;
        *evaluations += 1;
        let better = match &best {
            None => true,
            Some((_, cur)) => lat.total_ms() < cur.total_ms(),
        };
        if better {
            best = Some((s, lat));
        }
    }
    best.ok_or_else(|| Error::Validation("empty split candidate set".into()))
}

/// Pick the most accurate (lowest-rate) feasible configuration.
///
/// Rates are scanned in increasing order; the first whose best split meets
/// the SLA wins. When even the maximum rate cannot meet it, that rate's best
/// split is returned with `feasible` unset.
pub fn schedule(
    spec: &ModelSpec,
    device: &LatencyModel,
    cloud: &LatencyModel,
    bandwidth_bps: f64,
    cfg: &SchedulerConfig,
) -> Result<Decision> {
    spec.validate()?;
    cfg.validate()?;
    if bandwidth_bps <= 0.0 || !bandwidth_bps.is_finite() {
        return Err(Error::Estimation(format!(
            "bandwidth must be positive and finite, got {bandwidth_bps}"
        )));
    }

    let candidates = candidate_split_points(spec.num_layers, cfg.split_k)?;
    let steps = pruning::max_declining_steps(spec, cfg.grid_step)?;
    let mut evaluations = 0u64;
    let mut fallback: Option<(f64, u32, SplitLatency)> = None;

    for m in 0..=steps {
        let alpha = m as f64 * cfg.grid_step;
        let policy = PruningPolicy::new(alpha, cfg.grid_step, PruningForm::Exponential)?;
        let sched = pruning::build_schedule(spec, &policy)?;
        let (s, lat) = argmin_split(
            spec,
            &sched,
            device,
            cloud,
            bandwidth_bps,
            candidates.points(),
            cfg,
            &mut evaluations,
        )?;
        if lat.total_ms() <= cfg.sla_ms {
            return Ok(Decision {
                alpha,
                split_point: s,
                predicted_total_ms: lat.total_ms(),
                device_ms: lat.device_ms,
                cloud_ms: lat.cloud_ms,
                comm_ms: lat.comm_ms,
                feasible: true,
                evaluations,
            });
        }
        fallback = Some((alpha, s, lat));
    }

    let (alpha, s, lat) =
        fallback.ok_or_else(|| Error::Validation("empty pruning-rate grid".into()))?;
    Ok(Decision {
        alpha,
        split_point: s,
        predicted_total_ms: lat.total_ms(),
        device_ms: lat.device_ms,
        cloud_ms: lat.cloud_ms,
        comm_ms: lat.comm_ms,
        feasible: false,
        evaluations,
    })
}
