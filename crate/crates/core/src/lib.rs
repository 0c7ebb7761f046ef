//! Core policies for cloud-device collaborative Vision Transformer inference.
//!
//! The crate is organized around the planning pipeline:
//!
//! - [`model`] — ViT geometry ([`ModelSpec`]) and the token/payload arithmetic
//!   every other module builds on.
//! - [`pruning`] — per-layer token reduction schedules (exponential declining
//!   rate with a linear baseline) and the feasibility bound on the rate.
//! - [`splitting`] — fine-to-coarse candidate split point generation.
//! - [`profiling`] — linear per-layer latency models fitted from samples, plus
//!   harmonic-mean uplink bandwidth estimation.
//! - [`scheduler`] — joint selection of declining rate and split point under a
//!   latency SLA.
//! - [`simulator`] — closed-loop trace replay of the scheduler against ground
//!   truth models and a recorded bandwidth trace.

pub mod error;
pub mod model;
pub mod profiling;
pub mod pruning;
pub mod scheduler;
pub mod simulator;
pub mod splitting;

pub use error::{Error, Result};
pub use model::ModelSpec;
pub use profiling::{BandwidthEstimator, LatencyModel, LatencySample};
pub use pruning::{PruningForm, PruningPolicy, PruningSchedule};
pub use scheduler::{Decision, SchedulerConfig};
pub use simulator::{AccuracyTable, GroundTruth, NetworkTrace, Policy, SimMetrics};
pub use splitting::CandidateSet;
