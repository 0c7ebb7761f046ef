//! Synthetic per-layer executors.
//!
//! Real deployments run transformer layers on accelerators; this runtime
//! substitutes a calibrated sleep so the full protocol stack can be
//! exercised on any machine. A layer over `x` tokens costs
//! `slope * x + intercept` milliseconds, optionally scattered by a
//! multiplicative jitter factor drawn per layer from a seeded generator,
//! and the executor reports the *measured* wall time so downstream
//! consumers (profilers, frame reports) see exactly what a real clock
//! would have seen, scheduler overshoot included.

use std::time::{Duration, Instant};

use janus_core::PruningSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients and noise for one synthetic executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorParams {
    /// Per-token cost of one layer, in milliseconds.
    pub slope_ms_per_token: f64,
    /// Fixed cost of one layer, in milliseconds.
    pub intercept_ms: f64,
    /// Half-width of the multiplicative noise: each layer's cost is scaled
    /// by `1 + jitter_frac * U(-1, 1)`. Zero means fully deterministic
    /// target durations (no generator draw at all).
    #[serde(default)]
    pub jitter_frac: f64,
    /// Seed for the jitter generator.
    #[serde(default)]
    pub seed: u64,
}

impl ExecutorParams {
    pub fn new(slope_ms_per_token: f64, intercept_ms: f64) -> Self {
        ExecutorParams { slope_ms_per_token, intercept_ms, jitter_frac: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.slope_ms_per_token.is_finite() || self.slope_ms_per_token < 0.0 {
            return Err(Error::Config(format!(
                "executor slope {} must be finite and non-negative",
                self.slope_ms_per_token
            )));
        }
        if !self.intercept_ms.is_finite() || self.intercept_ms < 0.0 {
            return Err(Error::Config(format!(
                "executor intercept {} must be finite and non-negative",
                self.intercept_ms
            )));
        }
        if !self.jitter_frac.is_finite() || !(0.0..1.0).contains(&self.jitter_frac) {
            return Err(Error::Config(format!(
                "executor jitter {} must lie in [0, 1)",
                self.jitter_frac
            )));
        }
        Ok(())
    }
}

/// Measured cost of a run of consecutive layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRun {
    /// Total measured wall time across the executed layers.
    pub total_ms: f64,
    /// One `(tokens, measured ms)` sample per executed layer, in layer
    /// order — exactly the shape the profiler fits.
    pub samples: Vec<(u32, f64)>,
}

impl LayerRun {
    fn empty() -> Self {
        LayerRun { total_ms: 0.0, samples: Vec::new() }
    }
}

/// Sleep-based stand-in for a per-layer inference engine.
#[derive(Debug)]
pub struct SyntheticExecutor {
    params: ExecutorParams,
    rng: ChaCha8Rng,
}

impl SyntheticExecutor {
    /// Build an executor, reseeding the jitter stream with `seed_override`
    /// when given (per-session seeds on a shared parameter set).
    pub fn new(params: &ExecutorParams, seed_override: Option<u64>) -> Result<Self> {
        params.validate()?;
        let seed = seed_override.unwrap_or(params.seed);
        Ok(SyntheticExecutor { params: params.clone(), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Target duration of one layer over `tokens` tokens, jitter applied.
    fn target_ms(&mut self, tokens: u64) -> f64 {
        let base = self.params.slope_ms_per_token * tokens as f64 + self.params.intercept_ms;
        if self.params.jitter_frac > 0.0 {
            base * (1.0 + self.params.jitter_frac * self.rng.gen_range(-1.0..=1.0))
        } else {
            base
        }
    }

    /// Execute one layer over `tokens` tokens; returns measured wall ms.
    pub fn execute_layer(&mut self, tokens: u64) -> f64 {
        let target = self.target_ms(tokens);
        let start = Instant::now();
        if target > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(target / 1000.0));
        }
        start.elapsed().as_secs_f64() * 1000.0
    }

    /// Execute layers `first..=last` (1-based) of `schedule`, feeding each
    /// layer the token count surviving its own reduction. An empty range
    /// (`first > last`) costs nothing.
    pub fn run_layers(&mut self, schedule: &PruningSchedule, first: u32, last: u32) -> LayerRun {
        if first > last {
            return LayerRun::empty();
        }
        let mut run = LayerRun { total_ms: 0.0, samples: Vec::with_capacity((last - first + 1) as usize) };
        for layer in first..=last {
            let tokens = schedule.tokens_after[layer as usize - 1];
            let ms = self.execute_layer(tokens);
            run.total_ms += ms;
            // Token counts on the wire are u32; every supported model is
            // far below that, so saturation is unreachable in practice.
            run.samples.push((u32::try_from(tokens).unwrap_or(u32::MAX), ms));
        }
        run
    }
}
