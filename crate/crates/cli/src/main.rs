//! `janus` — operator CLI for the cloud–device collaborative inference
//! stack: profiling, scheduling, trace simulation, the two runtime
//! endpoints, and codec/trace utilities.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration error (bad files
//! or parameters), 3 runtime or protocol failure.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use janus_core::simulator::{BaselinePruning, Policy};
use janus_core::SchedulerConfig;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// A failure already classified into its exit-code lane.
#[derive(Debug)]
pub enum CliError {
    /// Bad input files or parameter values → exit 2.
    Config(String),
    /// Protocol, I/O, or codec failures while running → exit 3.
    Runtime(String),
}

impl From<janus_core::Error> for CliError {
    fn from(e: janus_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<janus_runtime::Error> for CliError {
    fn from(e: janus_runtime::Error) -> Self {
        match e {
            janus_runtime::Error::Config(_) | janus_runtime::Error::Core(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "janus",
    version,
    about = "Cloud-device collaborative ViT inference: plan, simulate, run",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Latency profiling utilities.
    Profile {
        #[command(subcommand)]
        command: ProfileCommand,
    },
    /// Pick a declining rate and split point for one bandwidth estimate.
    Schedule(ScheduleArgs),
    /// Replay a bandwidth trace through the closed scheduling loop.
    Simulate(SimulateArgs),
    /// Replay the same trace under every policy, side by side.
    Compare(CompareArgs),
    /// Print the fine-to-coarse candidate split points.
    SplitPoints(SplitPointsArgs),
    /// Print the per-layer pruning schedule for one declining rate.
    PruneTable(PruneTableArgs),
    /// Cloud-side server.
    Cloud {
        #[command(subcommand)]
        command: CloudCommand,
    },
    /// Device-side agent.
    Device {
        #[command(subcommand)]
        command: DeviceCommand,
    },
    /// LZW codec filters (standard input to standard output).
    Lzw {
        #[command(subcommand)]
        command: LzwCommand,
    },
    /// Bandwidth-trace utilities.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
}

#[derive(Subcommand)]
enum ProfileCommand {
    /// Fit a linear latency model from a tokens/latency CSV.
    Fit(ProfileFitArgs),
}

#[derive(Args)]
struct ProfileFitArgs {
    /// Sample CSV with header `tokens,latency_ms`.
    #[arg(long)]
    samples: PathBuf,
    /// Write the model JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Scheduling parameters shared by `schedule`, `simulate`, and `compare`.
#[derive(Args)]
struct SchedulerArgs {
    /// Latency SLA in milliseconds.
    #[arg(long, default_value_t = 300.0)]
    sla_ms: f64,
    /// Declining-rate grid step t.
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
    /// Split-candidate coarsening parameter k.
    #[arg(long, default_value_t = 5)]
    split_k: u32,
    /// Multiplicative payload size factor modeling tensor compression.
    #[arg(long, default_value_t = 1.0)]
    compression_ratio: f64,
    /// Upload size in bytes for split 0 (a compressed camera input)
    /// instead of the raw embedding size.
    #[arg(long)]
    raw_input_bytes: Option<u64>,
    /// Round-trip time in milliseconds added to every nonzero transfer.
    #[arg(long, default_value_t = 0.0)]
    rtt_ms: f64,
}

impl SchedulerArgs {
    fn to_config(&self) -> SchedulerConfig {
        SchedulerConfig {
            sla_ms: self.sla_ms,
            grid_step: self.grid_step,
            split_k: self.split_k,
            compression_ratio: self.compression_ratio,
            raw_input_payload_bytes: self.raw_input_bytes,
            rtt_ms: self.rtt_ms,
        }
    }
}

#[derive(Args)]
struct ScheduleArgs {
    /// Model spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Device latency model JSON (from `profile fit`).
    #[arg(long)]
    device_model: PathBuf,
    /// Cloud latency model JSON (from `profile fit`).
    #[arg(long)]
    cloud_model: PathBuf,
    /// Estimated uplink bandwidth in Mbps.
    #[arg(long)]
    bandwidth_mbps: f64,
    #[command(flatten)]
    scheduler: SchedulerArgs,
    /// Write the decision JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Ground-truth executor models for simulation.
#[derive(Args)]
struct TruthArgs {
    /// True device cost per token per layer, in ms.
    #[arg(long)]
    device_slope: f64,
    /// True device fixed cost per layer, in ms.
    #[arg(long, default_value_t = 0.0)]
    device_intercept: f64,
    /// True cloud cost per token per layer, in ms.
    #[arg(long)]
    cloud_slope: f64,
    /// True cloud fixed cost per layer, in ms.
    #[arg(long, default_value_t = 0.0)]
    cloud_intercept: f64,
    /// Multiplicative latency noise half-width (0 = deterministic).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Seed for the jitter stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Optional fitted predictor models; defaults to the ground truth.
#[derive(Args)]
struct PredictorArgs {
    /// Device latency model JSON the scheduler consults.
    #[arg(long)]
    predict_device_model: Option<PathBuf>,
    /// Cloud latency model JSON the scheduler consults.
    #[arg(long)]
    predict_cloud_model: Option<PathBuf>,
}

/// Estimator, accuracy, and baseline tuning for simulation.
#[derive(Args)]
struct SimTuningArgs {
    /// Harmonic-mean bandwidth estimator window.
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Offline-mean bandwidth assumed before any observation, in Mbps.
    #[arg(long, default_value_t = 7.6)]
    cold_start_mbps: f64,
    /// Accuracy table JSON: a list of [alpha, accuracy] knots.
    #[arg(long)]
    accuracy_table: Option<PathBuf>,
    /// Fixed-policy pruning: use exactly this grid rate.
    #[arg(long, group = "baseline")]
    baseline_alpha: Option<f64>,
    /// Fixed-policy pruning: grid rate with mean reduction closest to
    /// this many tokens per layer (default 23).
    #[arg(long, group = "baseline")]
    baseline_mean_target: Option<f64>,
    /// Fixed-policy pruning: constant tokens pruned at every layer.
    #[arg(long, group = "baseline")]
    baseline_constant: Option<u64>,
}

impl SimTuningArgs {
    fn baseline(&self) -> BaselinePruning {
        if let Some(alpha) = self.baseline_alpha {
            BaselinePruning::GridAlpha(alpha)
        } else if let Some(target) = self.baseline_mean_target {
            BaselinePruning::MeanReductionTarget(target)
        } else if let Some(constant) = self.baseline_constant {
            BaselinePruning::ConstantPerLayer(constant)
        } else {
            BaselinePruning::default()
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Model spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Bandwidth trace CSV (`timestamp_s,uplink_mbps`).
    #[arg(long)]
    trace: PathBuf,
    /// Policy: janus, cloud_only, device_only, or mixed.
    #[arg(long, default_value = "janus")]
    policy: Policy,
    /// Number of frames to replay.
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[command(flatten)]
    scheduler: SchedulerArgs,
    #[command(flatten)]
    truth: TruthArgs,
    #[command(flatten)]
    predictors: PredictorArgs,
    #[command(flatten)]
    tuning: SimTuningArgs,
    /// Write the metrics JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a per-frame CSV here.
    #[arg(long)]
    per_frame: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Model spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Bandwidth trace CSV (`timestamp_s,uplink_mbps`).
    #[arg(long)]
    trace: PathBuf,
    /// Number of frames to replay per policy.
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[command(flatten)]
    scheduler: SchedulerArgs,
    #[command(flatten)]
    truth: TruthArgs,
    #[command(flatten)]
    predictors: PredictorArgs,
    #[command(flatten)]
    tuning: SimTuningArgs,
    /// Directory for comparison.csv plus per-policy frame CSVs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SplitPointsArgs {
    /// Number of transformer layers N.
    #[arg(long)]
    layers: u32,
    /// Coarsening parameter k.
    #[arg(long, default_value_t = 5)]
    k: u32,
}

#[derive(Args)]
struct PruneTableArgs {
    /// Model spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Declining rate alpha.
    #[arg(long)]
    alpha: f64,
    /// Grid step the rate must sit on.
    #[arg(long, default_value_t = 0.01)]
    grid_step: f64,
    /// Schedule form: exponential, linear, or none.
    #[arg(long, default_value = "exponential", value_parser = commands::parse_form)]
    form: janus_core::PruningForm,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CloudCommand {
    /// Bind the cloud server and serve sessions until interrupted.
    Serve(CloudServeArgs),
}

#[derive(Args)]
struct CloudServeArgs {
    /// Server config JSON: the model registry plus executor noise.
    #[arg(long)]
    config: PathBuf,
    /// Host to bind.
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
    /// TCP port; defaults to JANUS_PORT or 7431.
    #[arg(long)]
    port: Option<u16>,
}

#[derive(Subcommand)]
enum DeviceCommand {
    /// Connect to a cloud server and run frames under one plan.
    Run(DeviceRunArgs),
}

#[derive(Args)]
struct DeviceRunArgs {
    /// Cloud server address as host:port; defaults to loopback on
    /// JANUS_PORT or 7431.
    #[arg(long)]
    server: Option<String>,
    /// Model spec JSON (must name a model the server registers).
    #[arg(long)]
    spec: PathBuf,
    /// Device executor cost per token per layer, in ms.
    #[arg(long)]
    slope: f64,
    /// Device executor fixed cost per layer, in ms.
    #[arg(long, default_value_t = 0.0)]
    intercept: f64,
    /// Multiplicative executor noise half-width.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Seed for the executor jitter stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split point s (0 ships everything, N+1 runs fully on device).
    #[arg(long)]
    split: u32,
    /// Declining rate alpha; must be a multiple of 0.001.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Frames to run.
    #[arg(long, default_value_t = 1)]
    frames: u64,
    /// LZW-compress tensor payloads.
    #[arg(long)]
    compress: bool,
    /// Seed for pseudo-tensor content.
    #[arg(long, default_value_t = 0)]
    payload_seed: u64,
    /// Write the per-frame CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LzwCommand {
    /// Compress standard input to standard output.
    Compress,
    /// Decompress standard input to standard output.
    Decompress,
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Map a third-party bandwidth CSV into the canonical trace layout.
    Convert(TraceConvertArgs),
}

#[derive(Args)]
struct TraceConvertArgs {
    /// Source CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Column mapping JSON.
    #[arg(long)]
    mapping: PathBuf,
    /// Canonical trace CSV to write.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Profile { command: ProfileCommand::Fit(args) } => commands::profile_fit(args),
        Command::Schedule(args) => commands::schedule(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Compare(args) => commands::compare(args),
        Command::SplitPoints(args) => commands::split_points(args),
        Command::PruneTable(args) => commands::prune_table(args),
        Command::Cloud { command: CloudCommand::Serve(args) } => commands::cloud_serve(args),
        Command::Device { command: DeviceCommand::Run(args) } => commands::device_run(args),
        Command::Lzw { command } => commands::lzw(command),
        Command::Trace { command: TraceCommand::Convert(args) } => commands::trace_convert(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successful outcomes, not usage errors.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
