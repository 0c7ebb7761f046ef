//! Trace-driven closed-loop replay of the scheduling stack.
//!
//! Each frame runs the full pipeline: estimate bandwidth from previously
//! observed transfers, pick a configuration per the active policy, then
//! "execute" against ground-truth latency models and the real trace —
//! integrating the transfer over the piecewise-constant bandwidth actually in
//! effect. The next frame starts when the previous one completes. Prediction
//! and measurement share the same cost structure, so with zero jitter,
//! constant bandwidth, and predictors equal to ground truth the replay
//! reproduces predictions exactly.

mod trace;

pub use trace::{NetworkTrace, TraceSample};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::profiling::{BandwidthEstimator, LatencyModel};
use crate::pruning::{self, PruningForm, PruningPolicy, PruningSchedule};
use crate::scheduler::{self, payload_bytes_for_split, SchedulerConfig, SplitLatency};

/// Default offline-mean bandwidth used before any observation, from measured
/// 4G uplink behavior.
pub const DEFAULT_COLD_START_BPS: f64 = 7.6e6;
/// Default estimator window length.
pub const DEFAULT_ESTIMATOR_WINDOW: usize = 5;
/// Default fixed-pruning baseline: tokens removed per layer by the reference
/// fixed-rate method, mapped onto the rate grid by mean reduction.
pub const DEFAULT_BASELINE_TOKENS_PER_LAYER: f64 = 23.0;

/// True per-layer cost models the replay executes against, plus the seeded
/// jitter applied to every layer's latency.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub device_true: LatencyModel,
    pub cloud_true: LatencyModel,
    /// Half-width of the multiplicative latency noise; 0 disables jitter.
    pub jitter_frac: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn new(
        device_true: LatencyModel,
        cloud_true: LatencyModel,
        jitter_frac: f64,
        seed: u64,
    ) -> Result<Self> {
        if jitter_frac < 0.0 || !jitter_frac.is_finite() {
            return Err(Error::Validation(format!(
                "jitter_frac must be non-negative and finite, got {jitter_frac}"
            )));
        }
        Ok(Self { device_true, cloud_true, jitter_frac, seed })
    }
}

/// Prediction models the scheduler sees; may differ from ground truth to
/// model profiling error.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictors {
    pub device: LatencyModel,
    pub cloud: LatencyModel,
}

/// Piecewise-linear map from pruning rate to task accuracy.
///
/// Knot alphas must be strictly increasing and accuracies non-increasing;
/// lookups clamp outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct AccuracyTable {
    knots: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for AccuracyTable {
    type Error = Error;

    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        AccuracyTable::new(knots)
    }
}

impl From<AccuracyTable> for Vec<(f64, f64)> {
    fn from(table: AccuracyTable) -> Self {
        table.knots
    }
}

impl AccuracyTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Validation("accuracy table needs at least one knot".into()));
        }
        for (i, &(alpha, acc)) in knots.iter().enumerate() {
            if !alpha.is_finite() || alpha < 0.0 {
                return Err(Error::Validation(format!(
                    "accuracy knot {i}: alpha must be finite and non-negative, got {alpha}"
                )));
            }
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::Validation(format!(
                    "accuracy knot {i}: accuracy must be in [0, 1], got {acc}"
                )));
            }
            if i > 0 {
                if alpha <= knots[i - 1].0 {
                    return Err(Error::Validation(format!(
                        "accuracy knot alphas must be strictly increasing at knot {i}"
                    )));
                }
                if acc > knots[i - 1].1 {
                    return Err(Error::Validation(format!(
                        "accuracy must be non-increasing in alpha at knot {i}"
                    )));
                }
            }
        }
        Ok(Self { knots })
    }

    /// Clearly synthetic placeholder curve: full accuracy with no pruning,
    /// dropping linearly to 0.95 at the maximum rate.
    pub fn synthetic_default(alpha_max: f64) -> Self {
        let knots = if alpha_max > 0.0 {
            vec![(0.0, 1.0), (alpha_max, 0.95)]
        } else {
            vec![(0.0, 1.0)]
        };
        Self { knots }
    }

    /// Interpolated accuracy at `alpha`, clamped to the knot range.
    pub fn accuracy_at(&self, alpha: f64) -> f64 {
        let first = self.knots[0];
        if alpha <= first.0 {
            return first.1;
        }
        let last = self.knots[self.knots.len() - 1];
        if alpha >= last.0 {
            return last.1;
        }
        let hi = self.knots.partition_point(|&(a, _)| a <= alpha);
        let (a0, acc0) = self.knots[hi - 1];
        let (a1, acc1) = self.knots[hi];
        let frac = (alpha - a0) / (a1 - a0);
        acc0 + (acc1 - acc0) * frac
    }
}

/// Decision policy driving each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Full joint rate/split scheduling per frame.
    Janus,
    /// Fixed pruning rate, always split before the first layer.
    CloudOnly,
    /// Fixed pruning rate, always run everything on the device.
    DeviceOnly,
    /// Whichever of cloud-only and device-only predicts lower latency.
    Mixed,
}

pub const ALL_POLICIES: [Policy; 4] =
    [Policy::Janus, Policy::CloudOnly, Policy::DeviceOnly, Policy::Mixed];

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Policy::Janus => "janus",
            Policy::CloudOnly => "cloud_only",
            Policy::DeviceOnly => "device_only",
            Policy::Mixed => "mixed",
        };
        f.write_str(name)
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "janus" => Ok(Policy::Janus),
            "cloud_only" => Ok(Policy::CloudOnly),
            "device_only" => Ok(Policy::DeviceOnly),
            "mixed" => Ok(Policy::Mixed),
            other => Err(Error::Config(format!(
                "unknown policy {other:?}; expected janus, cloud_only, device_only, or mixed"
            ))),
        }
    }
}

/// How the fixed-rate baselines prune.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePruning {
    /// Use this exact grid rate.
    GridAlpha(f64),
    /// Use the grid rate whose mean per-layer reduction is closest to this
    /// many tokens per layer.
    MeanReductionTarget(f64),
    /// Prune exactly this many tokens at every layer (reported under the
    /// closest-mean grid rate for accuracy lookup).
    ConstantPerLayer(u64),
}

impl Default for BaselinePruning {
    fn default() -> Self {
        BaselinePruning::MeanReductionTarget(DEFAULT_BASELINE_TOKENS_PER_LAYER)
    }
}

/// Replay parameters beyond the scheduling config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub frames: usize,
    #[serde(default = "default_window")]
    pub estimator_window: usize,
    #[serde(default = "default_cold_start")]
    pub cold_start_bps: f64,
    #[serde(default)]
    pub baseline: BaselinePruning,
}

fn default_window() -> usize {
    DEFAULT_ESTIMATOR_WINDOW
}

fn default_cold_start() -> f64 {
    DEFAULT_COLD_START_BPS
}

impl SimOptions {
    pub fn new(frames: usize) -> Self {
        Self {
            frames,
            estimator_window: DEFAULT_ESTIMATOR_WINDOW,
            cold_start_bps: DEFAULT_COLD_START_BPS,
            baseline: BaselinePruning::default(),
        }
    }
}

/// One frame's decision and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFrameRecord {
    pub frame: usize,
    pub alpha: f64,
    pub split: u32,
    pub predicted_ms: f64,
    pub measured_ms: f64,
    pub violated: bool,
    pub accuracy: f64,
}

/// Aggregate replay results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Completed frames per second of simulated wall time.
    pub throughput_fps: f64,
    /// Fraction of frames whose measured latency exceeded the SLA.
    pub violation_ratio: f64,
    /// Mean of per-frame max(0, (measured − SLA)/SLA).
    pub mean_deviation_rate: f64,
    /// Mean table accuracy at the chosen rates.
    pub mean_accuracy: f64,
    pub frames: usize,
    /// Whether any transfer ran past the end of the recorded trace.
    pub trace_truncated: bool,
    #[serde(skip)]
    pub per_frame: Vec<PerFrameRecord>,
}

/// Relative SLA overshoot of one measurement: max(0, (measured − SLA)/SLA).
pub fn deviation_rate(measured_ms: f64, sla_ms: f64) -> f64 {
    ((measured_ms - sla_ms) / sla_ms).max(0.0)
}

/// Fixed baseline configuration: the rate to report and the schedule to run.
struct ResolvedBaseline {
    alpha: f64,
    schedule: PruningSchedule,
}

fn resolve_baseline(
    spec: &ModelSpec,
    cfg: &SchedulerConfig,
    baseline: BaselinePruning,
) -> Result<ResolvedBaseline> {
    match baseline {
        BaselinePruning::GridAlpha(alpha) => {
            let policy = PruningPolicy::new(alpha, cfg.grid_step, PruningForm::Exponential)?;
            Ok(ResolvedBaseline { alpha, schedule: pruning::build_schedule(spec, &policy)? })
        }
        BaselinePruning::MeanReductionTarget(tokens_per_layer) => {
            let alpha = pruning::alpha_for_mean_reduction(spec, cfg.grid_step, tokens_per_layer)?;
            let policy = PruningPolicy::new(alpha, cfg.grid_step, PruningForm::Exponential)?;
            Ok(ResolvedBaseline { alpha, schedule: pruning::build_schedule(spec, &policy)? })
        }
        BaselinePruning::ConstantPerLayer(per_layer) => {
            let alpha =
                pruning::alpha_for_mean_reduction(spec, cfg.grid_step, per_layer as f64)?;
            Ok(ResolvedBaseline { alpha, schedule: pruning::constant_schedule(spec, per_layer)? })
        }
    }
}

/// Measured cost of one frame against ground truth and the trace.
struct FrameExecution {
    measured_ms: f64,
    end_s: f64,
    /// Observed wire throughput, present only when bytes actually moved.
    observed_bps: Option<f64>,
    truncated: bool,
}

fn jitter_factor(rng: &mut ChaCha8Rng, jitter_frac: f64) -> f64 {
    if jitter_frac > 0.0 {
        1.0 + jitter_frac * rng.gen_range(-1.0..=1.0)
    } else {
        1.0
    }
}

/// Execute one frame: ground-truth compute on both sides of the split plus a
/// transfer integrated over the trace, mirroring the predictor's cost
/// structure term for term.
#[allow(clippy::too_many_arguments)]
fn execute_frame(
    trace: &NetworkTrace,
    spec: &ModelSpec,
    schedule: &PruningSchedule,
    split: u32,
    cfg: &SchedulerConfig,
    truth: &GroundTruth,
    rng: &mut ChaCha8Rng,
    start_s: f64,
) -> Result<FrameExecution> {
    let n = spec.num_layers;
    let mut now_s = start_s;

    let mut device_ms = 0.0;
    for l in 1..=split.min(n) {
        let clean = truth.device_true.predict_ms(schedule.tokens_at_split(l));
        device_ms += clean * jitter_factor(rng, truth.jitter_frac);
    }
    if split >= 1 {
        device_ms += spec.device_overhead_ms;
    }
    now_s += device_ms / 1000.0;

    let payload_bytes = payload_bytes_for_split(spec, schedule, split, cfg);
    let mut observed_bps = None;
    let mut truncated = false;
    let comm_ms = if payload_bytes == 0.0 {
        0.0
    } else {
        let bits = payload_bytes * 8.0;
        let (duration_s, trunc) = trace.transfer_duration(now_s, bits)?;
        truncated = trunc;
        observed_bps = Some(bits / duration_s);
        duration_s * 1000.0 + cfg.rtt_ms
    };
    now_s += comm_ms / 1000.0;

    let mut cloud_ms = 0.0;
    for l in (split + 1)..=n {
        let clean = truth.cloud_true.predict_ms(schedule.tokens_at_split(l));
        cloud_ms += clean * jitter_factor(rng, truth.jitter_frac);
    }
    if split <= n {
        cloud_ms += spec.cloud_overhead_ms;
    }
    now_s += cloud_ms / 1000.0;

    Ok(FrameExecution {
        measured_ms: device_ms + cloud_ms + comm_ms,
        end_s: now_s,
        observed_bps,
        truncated,
    })
}

/// Closed-loop replay of `opts.frames` frames under one policy.
///
/// `predictors` are the models the scheduler consults; pass `None` to predict
/// with the ground-truth models themselves.
#[allow(clippy::too_many_arguments)]
pub fn run_simulation(
    trace: &NetworkTrace,
    spec: &ModelSpec,
    cfg: &SchedulerConfig,
    truth: &GroundTruth,
    predictors: Option<&Predictors>,
    table: &AccuracyTable,
    policy: Policy,
    opts: &SimOptions,
) -> Result<SimMetrics> {
    spec.validate()?;
    cfg.validate()?;
    if opts.frames == 0 {
        return Err(Error::Validation("simulation needs at least one frame".into()));
    }
    let (pred_device, pred_cloud) = match predictors {
        Some(p) => (&p.device, &p.cloud),
        None => (&truth.device_true, &truth.cloud_true),
    };
    let baseline = match policy {
        Policy::Janus => None,
        _ => Some(resolve_baseline(spec, cfg, opts.baseline)?),
    };

    let mut estimator = BandwidthEstimator::new(opts.estimator_window, opts.cold_start_bps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    let start_s = trace.first_timestamp();
    let mut now_s = start_s;
    let mut per_frame = Vec::with_capacity(opts.frames);
    let mut truncated_any = false;
    let mut violations = 0usize;
    let mut deviation_sum = 0.0;
    let mut accuracy_sum = 0.0;

    for frame in 0..opts.frames {
        let bandwidth = estimator.estimate_bps();

        // Decide.
        let (alpha, split, schedule, predicted): (f64, u32, PruningSchedule, SplitLatency) =
            match policy {
                Policy::Janus => {
                    let d = scheduler::schedule(spec, pred_device, pred_cloud, bandwidth, cfg)?;
                    let policy =
                        PruningPolicy::new(d.alpha, cfg.grid_step, PruningForm::Exponential)?;
                    let sched = pruning::build_schedule(spec, &policy)?;
                    let lat = scheduler::predicted_split_latency(
                        spec,
                        &sched,
                        pred_device,
                        pred_cloud,
                        bandwidth,
                        d.split_point,
                        cfg,
                    )?;
                    (d.alpha, d.split_point, sched, lat)
                }
                Policy::CloudOnly | Policy::DeviceOnly | Policy::Mixed => {
                    let base = baseline.as_ref().expect("baseline resolved for fixed policies");
                    let predict = |s: u32| {
                        scheduler::predicted_split_latency(
                            spec,
                            &base.schedule,
                            pred_device,
                            pred_cloud,
                            bandwidth,
                            s,
                            cfg,
                        )
                    };
                    let split = match policy {
                        Policy::CloudOnly => 0,
                        Policy::DeviceOnly => spec.num_layers + 1,
                        Policy::Mixed => {
                            let cloud = predict(0)?;
                            let device = predict(spec.num_layers + 1)?;
                            if device.total_ms() < cloud.total_ms() {
                                spec.num_layers + 1
                            } else {
                                0
                            }
                        }
                        Policy::Janus => unreachable!(),
                    };
                    let lat = predict(split)?;
                    (base.alpha, split, base.schedule.clone(), lat)
                }
            };

        // Execute.
        let exec =
            execute_frame(trace, spec, &schedule, split, cfg, truth, &mut rng, now_s)?;
        now_s = exec.end_s;
        truncated_any |= exec.truncated;
        if let Some(bps) = exec.observed_bps {
            estimator.observe(bps)?;
        }

        // Account.
        let violated = exec.measured_ms > cfg.sla_ms;
        if violated {
            violations += 1;
        }
        deviation_sum += deviation_rate(exec.measured_ms, cfg.sla_ms);
        let accuracy = table.accuracy_at(alpha);
        accuracy_sum += accuracy;
        per_frame.push(PerFrameRecord {
            frame,
            alpha,
            split,
            predicted_ms: predicted.total_ms(),
            measured_ms: exec.measured_ms,
            violated,
            accuracy,
        });
    }

    let frames = opts.frames;
    let elapsed_s = now_s - start_s;
    Ok(SimMetrics {
        throughput_fps: frames as f64 / elapsed_s,
        violation_ratio: violations as f64 / frames as f64,
        mean_deviation_rate: deviation_sum / frames as f64,
        mean_accuracy: accuracy_sum / frames as f64,
        frames,
        trace_truncated: truncated_any,
        per_frame,
    })
}

/// Metrics for one policy in a side-by-side comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyComparison {
    pub policy: Policy,
    pub metrics: SimMetrics,
}

/// Run every policy over the identical trace, seed, and configuration.
pub fn compare_policies(
    trace: &NetworkTrace,
    spec: &ModelSpec,
    cfg: &SchedulerConfig,
    truth: &GroundTruth,
    predictors: Option<&Predictors>,
    table: &AccuracyTable,
    opts: &SimOptions,
) -> Result<Vec<PolicyComparison>> {
    ALL_POLICIES
        .iter()
        .map(|&policy| {
            run_simulation(trace, spec, cfg, truth, predictors, table, policy, opts)
                .map(|metrics| PolicyComparison { policy, metrics })
        })
        .collect()
}

/// Write per-frame records as CSV with the canonical header.
pub fn write_per_frame_csv<W: Write>(records: &[PerFrameRecord], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "frame",
        "alpha",
        "split",
        "predicted_ms",
        "measured_ms",
        "violated",
        "accuracy",
    ])?;
    for r in records {
        wtr.write_record(&[
            r.frame.to_string(),
            r.alpha.to_string(),
            r.split.to_string(),
            r.predicted_ms.to_string(),
            r.measured_ms.to_string(),
            r.violated.to_string(),
            r.accuracy.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write one row of summary metrics per policy.
pub fn write_comparison_csv<W: Write>(rows: &[PolicyComparison], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "policy",
        "throughput_fps",
        "violation_ratio",
        "mean_deviation_rate",
        "mean_accuracy",
        "frames",
    ])?;
    for row in rows {
        wtr.write_record(&[
            row.policy.to_string(),
            row.metrics.throughput_fps.to_string(),
            row.metrics.violation_ratio.to_string(),
            row.metrics.mean_deviation_rate.to_string(),
            row.metrics.mean_accuracy.to_string(),
            row.metrics.frames.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
