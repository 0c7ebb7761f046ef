//! Token pruning schedules.
//!
//! The mixed policy prunes aggressively in the front layers and gently toward
//! the rear: layer `l` of `N` drops `floor(2^(alpha * (N - l)))` tokens, with
//! the declining rate `alpha` stepped on a fixed grid. The feasibility bound
//! on `alpha` caps the cumulative reduction so at least one token survives the
//! final layer. A linear-declining baseline (`floor(alpha * (N - l))` per
//! layer) exists only for comparison; the scheduler never selects it.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Functional form of the per-layer reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruningForm {
    /// `floor(2^(alpha * (N - l)))` tokens dropped at layer `l` (zero when
    /// `alpha` is zero).
    Exponential,
    /// `floor(alpha * (N - l))` tokens dropped at layer `l`.
    Linear,
    /// No pruning regardless of `alpha`.
    None,
}

/// A declining rate snapped to the scheduler grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruningPolicy {
    /// Declining rate.
    pub alpha: f64,
    /// Grid step `t`; `alpha` must be an integer multiple of it.
    pub grid_step: f64,
    pub form: PruningForm,
}

impl PruningPolicy {
    pub fn new(alpha: f64, grid_step: f64, form: PruningForm) -> Result<Self> {
        if grid_step <= 0.0 || !grid_step.is_finite() {
            return Err(Error::Validation("grid_step must be positive".into()));
        }
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::Validation("alpha must be non-negative".into()));
        }
        let steps = alpha / grid_step;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "alpha {alpha} is not a multiple of grid_step {grid_step}"
            )));
        }
        Ok(Self { alpha, grid_step, form })
    }

    /// Check the policy against a concrete spec. Exponential rates above the
    /// feasibility bound are rejected here rather than at schedule build time
    /// so the failure names the rate, not a layer.
    pub fn validate_for(&self, spec: &ModelSpec) -> Result<()> {
        if self.form == PruningForm::Exponential {
            let max = max_declining_rate(spec, self.grid_step);
            if self.alpha > max + 1e-12 {
                return Err(Error::Validation(format!(
                    "alpha {} exceeds maximum declining rate {max} for {}",
                    self.alpha, spec.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-layer reductions and surviving token counts for one declining rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningSchedule {
    /// Tokens dropped at layer `l` (index `l - 1`).
    pub deltas: Vec<u64>,
    /// Tokens entering the computation of layer `l` after its reduction;
    /// `tokens_after[l - 1]` is the count every latency model is fed for
    /// layer `l`.
    pub tokens_after: Vec<u64>,
    /// Token count before any pruning.
    pub initial_tokens: u64,
}

impl PruningSchedule {
    /// Token count at split point `s`: the size of the payload the device
    /// would ship after executing layers `1..=s`. `s = 0` is the unpruned
    /// input token count. `s` must not exceed the layer count.
    pub fn tokens_at_split(&self, s: u32) -> u64 {
        if s == 0 {
            self.initial_tokens
        } else {
            self.tokens_after[s as usize - 1]
        }
    }

    /// Total tokens pruned across all layers.
    pub fn total_pruned(&self) -> u64 {
        self.deltas.iter().sum()
    }

    /// Write `layer,delta,tokens_after` CSV rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "layer,delta,tokens_after")?;
        for (i, (d, t)) in self.deltas.iter().zip(&self.tokens_after).enumerate() {
            writeln!(w, "{},{},{}", i + 1, d, t)?;
        }
        Ok(())
    }
}

/// Tokens dropped at layer `l` of an `N`-layer model under declining rate
/// `alpha`: `floor(2^(alpha * (N - l)))`, or zero when `alpha` is zero.
pub fn layer_reduction(alpha: f64, num_layers: u32, layer: u32) -> Result<u64> {
    if layer < 1 || layer > num_layers {
        return Err(Error::Validation(format!(
            "layer {layer} out of range 1..={num_layers}"
        )));
    }
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Validation("alpha must be non-negative".into()));
    }
    if alpha == 0.0 {
        return Ok(0);
    }
    Ok(pow2_floor(alpha * f64::from(num_layers - layer)))
}

fn pow2_floor(exponent: f64) -> u64 {
    2f64.powf(exponent).floor() as u64
}

/// Cumulative-reduction bound evaluated at `alpha`: the sum
/// `sum_{l=1..N} floor(2^(alpha * (N - (l - 1))))`, the quantity that must not
/// exceed `x0 - 1`. Exponents here run `N..=1`, one step above the per-layer
/// reduction exponents, which is what guarantees any rate passing the bound
/// also leaves the final layer at least one token.
///
/// Stops summing early once `limit` is exceeded.
pub fn feasibility_sum(alpha: f64, num_layers: u32, limit: u64) -> u64 {
    let mut sum: u64 = 0;
    for l in 1..=num_layers {
        sum = sum.saturating_add(pow2_floor(alpha * f64::from(num_layers - (l - 1))));
        if sum > limit {
            return sum;
        }
    }
    sum
}

/// Largest grid index `m` such that `alpha = m * grid_step` satisfies the
/// cumulative-reduction bound for this spec. `m = 0` (no pruning) is always
/// feasible.
pub fn max_declining_steps(spec: &ModelSpec, grid_step: f64) -> Result<u32> {
    if grid_step <= 0.0 || !grid_step.is_finite() {
        return Err(Error::Validation("grid_step must be positive".into()));
    }
    let budget = spec.initial_token_count() - 1;
    let mut m = 0u32;
    loop {
        let alpha = f64::from(m + 1) * grid_step;
        if feasibility_sum(alpha, spec.num_layers, budget) > budget {
            return Ok(m);
        }
        m += 1;
    }
}

/// Largest feasible declining rate on the grid `{0, t, 2t, ...}` for this
/// spec, snapped down. Zero when even one grid step violates the bound.
pub fn max_declining_rate(spec: &ModelSpec, grid_step: f64) -> f64 {
    match max_declining_steps(spec, grid_step) {
        Ok(m) => f64::from(m) * grid_step,
        Err(_) => 0.0,
    }
}

/// Build the per-layer schedule for `policy` over `spec`.
///
/// Errors if the rate fails its feasibility precondition (exponential form)
/// or if the running token count would drop below one, naming the first
/// offending layer.
pub fn build_schedule(spec: &ModelSpec, policy: &PruningPolicy) -> Result<PruningSchedule> {
    policy.validate_for(spec)?;
    let n = spec.num_layers;
    let deltas: Vec<u64> = match policy.form {
        PruningForm::None => vec![0; n as usize],
        PruningForm::Exponential => (1..=n)
            .map(|l| layer_reduction(policy.alpha, n, l))
            .collect::<Result<_>>()?,
        PruningForm::Linear => (1..=n)
            .map(|l| (policy.alpha * f64::from(n - l)).floor() as u64)
            .collect(),
    };
    schedule_from_deltas(spec.initial_token_count(), deltas)
}

/// Baseline schedule that drops a constant number of tokens at every layer,
/// the way fixed-level pruners operate.
pub fn constant_schedule(spec: &ModelSpec, tokens_per_layer: u64) -> Result<PruningSchedule> {
    let deltas = vec![tokens_per_layer; spec.num_layers as usize];
    schedule_from_deltas(spec.initial_token_count(), deltas)
}

fn schedule_from_deltas(initial_tokens: u64, deltas: Vec<u64>) -> Result<PruningSchedule> {
    let mut tokens_after = Vec::with_capacity(deltas.len());
    let mut tokens = initial_tokens;
    for (i, &delta) in deltas.iter().enumerate() {
        if tokens <= delta {
            return Err(Error::InfeasibleSchedule {
                layer: i as u32 + 1,
                tokens_before: tokens,
                delta,
            });
        }
        tokens -= delta;
        tokens_after.push(tokens);
    }
    Ok(PruningSchedule { deltas, tokens_after, initial_tokens })
}

/// Grid rate whose mean per-layer reduction comes closest to a fixed
/// `tokens_per_layer` target, restricted to feasible rates. Maps constant
/// fixed-level pruning settings onto the exponential grid for baselines.
pub fn alpha_for_mean_reduction(
    spec: &ModelSpec,
    grid_step: f64,
    tokens_per_layer: f64,
) -> Result<f64> {
    if tokens_per_layer < 0.0 || !tokens_per_layer.is_finite() {
        return Err(Error::Validation(format!(
            "mean-reduction target must be non-negative and finite, got {tokens_per_layer}"
        )));
    }
    let m_max = max_declining_steps(spec, grid_step)?;
    let n = f64::from(spec.num_layers);
    let target = tokens_per_layer;
    let mut best = (0.0f64, f64::INFINITY);
    for m in 0..=m_max {
        let alpha = f64::from(m) * grid_step;
        let policy = PruningPolicy::new(alpha, grid_step, PruningForm::Exponential)?;
        let schedule = build_schedule(spec, &policy)?;
        let mean = schedule.total_pruned() as f64 / n;
        let gap = (mean - target).abs();
        if gap < best.1 {
            best = (alpha, gap);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_alpha_prunes_nothing() {
        assert_eq!(layer_reduction(0.0, 24, 5).unwrap(), 0);
    }

    #[test]
    fn exponential_reduction_examples() {
        // floor(2^(0.25 * 20)) = floor(2^5)
        assert_eq!(layer_reduction(0.25, 24, 4).unwrap(), 32);
        // final layer: floor(2^0)
        assert_eq!(layer_reduction(0.25, 24, 24).unwrap(), 1);
    }

    #[test]
    fn layer_out_of_range_rejected() {
        assert!(layer_reduction(0.5, 4, 0).is_err());
        assert!(layer_reduction(0.5, 4, 5).is_err());
    }

    /// Independent grid search used to pin the max-rate expectations: walk the
    /// grid upward, summing the bound terms directly.
    fn brute_force_max_rate(num_layers: u32, x0: u64, t: f64) -> f64 {
        let mut best = 0.0;
        let mut m = 1u32;
        loop {
            let alpha = f64::from(m) * t;
            let sum: u64 = (1..=num_layers)
                .map(|l| 2f64.powf(alpha * f64::from(num_layers - (l - 1))).floor() as u64)
                .sum();
            if sum > x0 - 1 {
                return best;
            }
            best = alpha;
            m += 1;
        }
    }

    #[test]
    fn max_rate_two_layer_example() {
        let spec = ModelSpec::toy("t", 2, 10);
        let got = max_declining_rate(&spec, 0.01);
        assert!((got - 1.49).abs() < 1e-9, "got {got}");
        assert!((got - brute_force_max_rate(2, 10, 0.01)).abs() < 1e-12);
        // At 1.49 the bound sum is 7 + 2 = 9 <= 9; one step higher is 8 + 2 = 10.
        assert_eq!(feasibility_sum(1.49, 2, u64::MAX), 9);
        assert_eq!(feasibility_sum(1.50, 2, u64::MAX), 10);
    }

    #[test]
    fn max_rate_single_layer_two_tokens() {
        // One layer, two tokens: the bound is floor(2^alpha) <= 1, which holds
        // right up to alpha = 0.99 on the 0.01 grid.
        let spec = ModelSpec::toy("t", 1, 2);
        let got = max_declining_rate(&spec, 0.01);
        let oracle = brute_force_max_rate(1, 2, 0.01);
        assert!((got - oracle).abs() < 1e-12, "got {got}, oracle {oracle}");
        assert!((got - 0.99).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn alpha_zero_always_feasible() {
        for n in 1..=8 {
            for x0 in 2..=32 {
                let spec = ModelSpec::toy("t", n, x0);
                let policy = PruningPolicy::new(0.0, 0.01, PruningForm::Exponential).unwrap();
                let schedule = build_schedule(&spec, &policy).unwrap();
                assert!(schedule.deltas.iter().all(|&d| d == 0));
                assert!(schedule.tokens_after.iter().all(|&t| t == u64::from(x0)));
            }
        }
    }

    #[test]
    fn schedule_four_layer_example() {
        let spec = ModelSpec::toy("t", 4, 50);
        let policy = PruningPolicy::new(1.0, 0.25, PruningForm::Exponential).unwrap();
        let schedule = build_schedule(&spec, &policy).unwrap();
        assert_eq!(schedule.deltas, vec![8, 4, 2, 1]);
        assert_eq!(schedule.tokens_after, vec![42, 38, 36, 35]);
    }

    #[test]
    fn infeasible_alpha_rejected_by_precondition() {
        // alpha = 1 on a 4-layer, 10-token model: the bound sum is
        // 16 + 8 + 4 + 2 = 30 > 9, so the policy never reaches schedule build.
        let spec = ModelSpec::toy("t", 4, 10);
        let policy = PruningPolicy::new(1.0, 0.25, PruningForm::Exponential).unwrap();
        let err = build_schedule(&spec, &policy).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert_eq!(feasibility_sum(1.0, 4, u64::MAX), 30);
    }

    #[test]
    fn linear_schedule_names_first_offending_layer() {
        // Linear deltas at alpha = 4 on 4 layers: 12, 8, 4, 0 from 10 tokens
        // fails immediately.
        let spec = ModelSpec::toy("t", 4, 10);
        let policy = PruningPolicy::new(4.0, 0.25, PruningForm::Linear).unwrap();
        match build_schedule(&spec, &policy) {
            Err(Error::InfeasibleSchedule { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected schedule error, got {other:?}"),
        }
    }

    #[test]
    fn off_grid_alpha_rejected() {
        assert!(PruningPolicy::new(0.255, 0.01, PruningForm::Exponential).is_err());
        assert!(PruningPolicy::new(0.25, 0.01, PruningForm::Exponential).is_ok());
    }

    #[test]
    fn feasible_rates_keep_final_token_exhaustively() {
        // Grid over small models: every rate at or below the bound must build,
        // and the schedule must end with at least one token.
        for n in 1..=6u32 {
            for x0 in 2..=40u32 {
                let spec = ModelSpec::toy("t", n, x0);
                let m_max = max_declining_steps(&spec, 0.25).unwrap();
                for m in 0..=m_max {
                    let alpha = f64::from(m) * 0.25;
                    let policy =
                        PruningPolicy::new(alpha, 0.25, PruningForm::Exponential).unwrap();
                    let schedule = build_schedule(&spec, &policy).unwrap();
                    assert!(*schedule.tokens_after.last().unwrap() >= 1);
                }
            }
        }
    }

    #[test]
    fn front_half_prunes_at_least_four_times_rear_half() {
        // ViT-L-class geometry at alpha = 0.25: the front 12 layers remove the
        // overwhelming share of tokens. Sums computed directly from the
        // reduction formula: front 292, rear 32.
        let front: u64 = (1..=12).map(|l| layer_reduction(0.25, 24, l).unwrap()).sum();
        let rear: u64 = (13..=24).map(|l| layer_reduction(0.25, 24, l).unwrap()).sum();
        assert_eq!(front, 292);
        assert_eq!(rear, 32);
        assert!(front >= 4 * rear);
    }

    #[test]
    fn constant_schedule_matches_fixed_level_semantics() {
        let spec = ModelSpec::toy("t", 4, 50);
        let schedule = constant_schedule(&spec, 10).unwrap();
        assert_eq!(schedule.tokens_after, vec![40, 30, 20, 10]);
        assert!(constant_schedule(&spec, 13).is_err());
    }

    #[test]
    fn csv_export_shape() {
        let spec = ModelSpec::toy("t", 4, 50);
        let policy = PruningPolicy::new(1.0, 0.25, PruningForm::Exponential).unwrap();
        let schedule = build_schedule(&spec, &policy).unwrap();
        let mut out = Vec::new();
        schedule.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "layer,delta,tokens_after\n1,8,42\n2,4,38\n3,2,36\n4,1,35\n"
        );
    }

    #[test]
    fn mean_reduction_mapping_stays_on_feasible_grid() {
        let spec = ModelSpec::vit_l_384();
        let alpha = alpha_for_mean_reduction(&spec, 0.01, 23.0).unwrap();
        assert!(alpha <= max_declining_rate(&spec, 0.01));
        let policy = PruningPolicy::new(alpha, 0.01, PruningForm::Exponential).unwrap();
        assert!(build_schedule(&spec, &policy).is_ok());
    }

    proptest! {
        // The per-layer reduction never decreases as alpha grows.
        #[test]
        fn reduction_monotone_in_alpha(
            n in 1u32..16, l_off in 0u32..16, a in 0u32..40, b in 0u32..40
        ) {
            let l = 1 + l_off % n;
            let (lo, hi) = (a.min(b), a.max(b));
            let r_lo = layer_reduction(f64::from(lo) * 0.05, n, l).unwrap();
            let r_hi = layer_reduction(f64::from(hi) * 0.05, n, l).unwrap();
            prop_assert!(r_lo <= r_hi);
        }

        // Schedules built under the feasibility bound are non-increasing and
        // conserve tokens layer by layer.
        #[test]
        fn schedule_conserves_tokens(n in 1u32..8, x0 in 2u32..64, m in 0u32..20) {
            let spec = ModelSpec::toy("t", n, x0);
            let m_max = max_declining_steps(&spec, 0.1).unwrap();
            let alpha = f64::from(m.min(m_max)) * 0.1;
            let policy = PruningPolicy::new(alpha, 0.1, PruningForm::Exponential).unwrap();
            let schedule = build_schedule(&spec, &policy).unwrap();
            let mut tokens = schedule.initial_tokens;
            for (d, t) in schedule.deltas.iter().zip(&schedule.tokens_after) {
                prop_assert_eq!(tokens - d, *t);
                tokens = *t;
            }
            prop_assert!(tokens >= 1);
        }
    }
}
