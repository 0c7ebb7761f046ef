//! Subcommand implementations.

use std::io::{Read, Write};
use std::path::Path;

use janus_core::profiling::{fit_latency_model, read_samples_csv, LOW_CORRELATION_GATE};
use janus_core::pruning::build_schedule;
use janus_core::scheduler;
use janus_core::simulator::{
    compare_policies, run_simulation, write_comparison_csv, write_per_frame_csv, Predictors,
    SimOptions,
};
use janus_core::splitting::candidate_split_points;
use janus_core::{
    AccuracyTable, GroundTruth, LatencyModel, ModelSpec, NetworkTrace, PruningForm, PruningPolicy,
};
use janus_runtime::{
    lzw_compress, lzw_decompress, port_from_env, CloudConfig, CloudServer, DeviceAgent,
    ExecutorParams, FrameReport,
};

use crate::util::{emit, read_to_string, to_json_pretty, write_atomic};
use crate::{
    CliError, CliResult, CloudServeArgs, CompareArgs, DeviceRunArgs, LzwCommand, ProfileFitArgs,
    PruneTableArgs, ScheduleArgs, SimulateArgs, SplitPointsArgs, TraceConvertArgs,
};

/// Parse a pruning-schedule form name.
pub fn parse_form(s: &str) -> Result<PruningForm, String> {
    match s {
        "exponential" => Ok(PruningForm::Exponential),
        "linear" => Ok(PruningForm::Linear),
        "none" => Ok(PruningForm::None),
        other => Err(format!("unknown form {other:?}; use exponential, linear, or none")),
    }
}

fn load_spec(path: &Path) -> Result<ModelSpec, CliError> {
    let text = read_to_string(path)?;
    ModelSpec::from_json(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<LatencyModel, CliError> {
    let text = read_to_string(path)?;
    LatencyModel::from_json(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_trace(path: &Path) -> Result<NetworkTrace, CliError> {
    let text = read_to_string(path)?;
    NetworkTrace::from_csv(text.as_bytes())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Convert a rate to the wire's integer millis, requiring an exact fit.
fn alpha_to_milli(alpha: f64) -> Result<u16, CliError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(CliError::Config(format!("alpha {alpha} must be non-negative")));
    }
    let millis = alpha * 1000.0;
    let rounded = millis.round();
    if (millis - rounded).abs() > 1e-6 {
        return Err(CliError::Config(format!(
            "alpha {alpha} does not sit on the 0.001 wire grid"
        )));
    }
    u16::try_from(rounded as i64)
        .map_err(|_| CliError::Config(format!("alpha {alpha} exceeds the wire range")))
}

pub fn profile_fit(args: ProfileFitArgs) -> CliResult {
    let text = read_to_string(&args.samples)?;
    let samples = read_samples_csv(text.as_bytes())
        .map_err(|e| CliError::Config(format!("{}: {e}", args.samples.display())))?;
    let model = fit_latency_model(&samples)?;
    if model.low_correlation() {
        eprintln!(
            "warning: correlation r = {:.4} is at or below {LOW_CORRELATION_GATE}; \
             latency may not be linear in the token count for these samples",
            model.r
        );
    }
    let mut json = model.to_json()?.into_bytes();
    json.push(b'\n');
    emit(args.out.as_deref(), &json)
}

pub fn schedule(args: ScheduleArgs) -> CliResult {
    let spec = load_spec(&args.spec)?;
    let device = load_model(&args.device_model)?;
    let cloud = load_model(&args.cloud_model)?;
    let cfg = args.scheduler.to_config();
    let decision = scheduler::schedule(&spec, &device, &cloud, args.bandwidth_mbps * 1e6, &cfg)?;
    emit(args.out.as_deref(), &to_json_pretty(&decision)?)
}

/// Assemble the simulation inputs shared by `simulate` and `compare`.
struct SimSetup {
    spec: ModelSpec,
    trace: NetworkTrace,
    cfg: janus_core::SchedulerConfig,
    truth: GroundTruth,
    predictors: Option<Predictors>,
    table: AccuracyTable,
    opts: SimOptions,
}

#[allow(clippy::too_many_arguments)]
fn sim_setup(
    spec_path: &Path,
    trace_path: &Path,
    scheduler: &crate::SchedulerArgs,
    truth: &crate::TruthArgs,
    predictors: &crate::PredictorArgs,
    tuning: &crate::SimTuningArgs,
    frames: usize,
) -> Result<SimSetup, CliError> {
    let spec = load_spec(spec_path)?;
    let trace = load_trace(trace_path)?;
    let cfg = scheduler.to_config();
    cfg.validate()?;
    let truth = GroundTruth::new(
        LatencyModel::from_coefficients(truth.device_slope, truth.device_intercept),
        LatencyModel::from_coefficients(truth.cloud_slope, truth.cloud_intercept),
        truth.jitter,
        truth.seed,
    )?;
    let predictors = match (&predictors.predict_device_model, &predictors.predict_cloud_model) {
        (None, None) => None,
        (Some(d), Some(c)) => Some(Predictors { device: load_model(d)?, cloud: load_model(c)? }),
        _ => {
            return Err(CliError::Config(
                "predictor models must be given for both sides or neither".into(),
            ))
        }
    };
    let table = match &tuning.accuracy_table {
        Some(path) => {
            let text = read_to_string(path)?;
            serde_json::from_str::<AccuracyTable>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let alpha_max = janus_core::pruning::max_declining_rate(&spec, cfg.grid_step);
            AccuracyTable::synthetic_default(alpha_max)
        }
    };
    let opts = SimOptions {
        frames,
        estimator_window: tuning.window,
        cold_start_bps: tuning.cold_start_mbps * 1e6,
        baseline: tuning.baseline(),
    };
    Ok(SimSetup { spec, trace, cfg, truth, predictors, table, opts })
}

pub fn simulate(args: SimulateArgs) -> CliResult {
    let setup = sim_setup(
        &args.spec,
        &args.trace,
        &args.scheduler,
        &args.truth,
        &args.predictors,
        &args.tuning,
        args.frames,
    )?;
    let metrics = run_simulation(
        &setup.trace,
        &setup.spec,
        &setup.cfg,
        &setup.truth,
        setup.predictors.as_ref(),
        &setup.table,
        args.policy,
        &setup.opts,
    )?;
    if let Some(path) = &args.per_frame {
        let mut csv = Vec::new();
        write_per_frame_csv(&metrics.per_frame, &mut csv)?;
        write_atomic(path, &csv)?;
    }
    emit(args.out.as_deref(), &to_json_pretty(&metrics)?)
}

pub fn compare(args: CompareArgs) -> CliResult {
    let setup = sim_setup(
        &args.spec,
        &args.trace,
        &args.scheduler,
        &args.truth,
        &args.predictors,
        &args.tuning,
        args.frames,
    )?;
    let rows = compare_policies(
        &setup.trace,
        &setup.spec,
        &setup.cfg,
        &setup.truth,
        setup.predictors.as_ref(),
        &setup.table,
        &setup.opts,
    )?;
    let mut summary = Vec::new();
    write_comparison_csv(&rows, &mut summary)?;
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
        write_atomic(&dir.join("comparison.csv"), &summary)?;
        for row in &rows {
            let mut frames = Vec::new();
            write_per_frame_csv(&row.metrics.per_frame, &mut frames)?;
            write_atomic(&dir.join(format!("frames_{}.csv", row.policy)), &frames)?;
        }
    }
    emit(None, &summary)
}

pub fn split_points(args: SplitPointsArgs) -> CliResult {
    let candidates = candidate_split_points(args.layers, args.k)?;
    let line = candidates
        .points()
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    emit(None, format!("{line}\n").as_bytes())
}

pub fn prune_table(args: PruneTableArgs) -> CliResult {
    let spec = load_spec(&args.spec)?;
    let policy = PruningPolicy::new(args.alpha, args.grid_step, args.form)?;
    policy.validate_for(&spec)?;
    let schedule = build_schedule(&spec, &policy)?;
    let mut csv = Vec::new();
    schedule.write_csv(&mut csv)?;
    emit(args.out.as_deref(), &csv)
}

pub fn cloud_serve(args: CloudServeArgs) -> CliResult {
    let text = read_to_string(&args.config)?;
    let config = CloudConfig::from_json(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let port = match args.port {
        Some(p) => p,
        None => port_from_env()?,
    };
    let server = CloudServer::bind((args.host.as_str(), port), config)?;
    eprintln!("[cloud] listening on {}", server.local_addr()?);
    // An interrupt flips the shutdown flag; the accept loop notices within
    // one poll interval and serve() returns cleanly.
    let handle = server.shutdown_handle();
    ctrlc::set_handler(move || handle.shutdown())
        .map_err(|e| CliError::Runtime(format!("interrupt handler: {e}")))?;
    server.serve()?;
    eprintln!("[cloud] shut down");
    Ok(())
}

fn frame_csv(reports: &[FrameReport]) -> Vec<u8> {
    let mut out = String::from(
        "frame,e2e_ms,device_ms,comm_ms,cloud_ms,payload_raw_bytes,payload_wire_bytes\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.frame,
            r.e2e_ms,
            r.device_ms,
            r.comm_ms,
            r.cloud_ms,
            r.payload_raw_bytes,
            r.payload_wire_bytes
        ));
    }
    out.into_bytes()
}

pub fn device_run(args: DeviceRunArgs) -> CliResult {
    let spec = load_spec(&args.spec)?;
    let server = match &args.server {
        Some(addr) => addr.clone(),
        None => format!("127.0.0.1:{}", port_from_env()?),
    };
    let params = ExecutorParams {
        slope_ms_per_token: args.slope,
        intercept_ms: args.intercept,
        jitter_frac: args.jitter,
        seed: args.seed,
    };
    let alpha_milli = alpha_to_milli(args.alpha)?;
    let mut agent =
        DeviceAgent::connect(server.as_str(), spec, &params, args.compress, args.payload_seed)?;
    agent.configure(args.split, alpha_milli)?;
    let reports = agent.run_frames(args.frames)?;
    let mean_e2e: f64 = reports.iter().map(|r| r.e2e_ms).sum::<f64>() / reports.len().max(1) as f64;
    eprintln!(
        "[device] {} frame(s) at split {} alpha {}: mean e2e {:.3} ms",
        reports.len(),
        args.split,
        args.alpha,
        mean_e2e
    );
    emit(args.out.as_deref(), &frame_csv(&reports))
}

pub fn lzw(command: LzwCommand) -> CliResult {
    let mut input = Vec::new();
    std::io::stdin()
        .lock()
        .read_to_end(&mut input)
        .map_err(|e| CliError::Runtime(format!("stdin: {e}")))?;
    let output = match command {
        LzwCommand::Compress => lzw_compress(&input),
        LzwCommand::Decompress => lzw_decompress(&input)?,
    };
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(&output)
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

/// How to read a third-party bandwidth CSV: which columns hold time and
/// uplink throughput, and how to scale them into seconds and Mbps.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnMapping {
    timestamp_column: String,
    uplink_column: String,
    /// Multiplier taking raw timestamps to seconds.
    #[serde(default = "one")]
    timestamp_scale: f64,
    /// Multiplier taking raw throughput to Mbps.
    #[serde(default = "one")]
    uplink_scale: f64,
}

fn one() -> f64 {
    1.0
}

pub fn trace_convert(args: TraceConvertArgs) -> CliResult {
    let mapping: ColumnMapping = serde_json::from_str(&read_to_string(&args.mapping)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.mapping.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&args.input)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.input.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", args.input.display())))?;
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Config(format!(
                "{}: no column named {name:?} (found: {})",
                args.input.display(),
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let ts_idx = col(&mapping.timestamp_column)?;
    let ul_idx = col(&mapping.uplink_column)?;

    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut skipped = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", args.input.display())))?;
        let parsed = record
            .get(ts_idx)
            .zip(record.get(ul_idx))
            .and_then(|(ts, ul)| Some((ts.parse::<f64>().ok()?, ul.parse::<f64>().ok()?)));
        match parsed {
            Some((ts, ul)) => {
                let ts_s = ts * mapping.timestamp_scale;
                let mbps = ul * mapping.uplink_scale;
                if ts_s.is_finite() && mbps.is_finite() && mbps > 0.0 {
                    rows.push((ts_s, mbps));
                } else {
                    skipped += 1;
                }
            }
            None => skipped += 1,
        }
    }
    // Third-party captures are not always ordered or unique in time; the
    // canonical layout demands both, so order them and keep the first
    // sample of any repeated timestamp.
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows.dedup_by(|next, kept| next.0 == kept.0);
    let pairs: Vec<(f64, f64)> = rows.into_iter().map(|(ts, mbps)| (ts, mbps * 1e6)).collect();
    let trace = NetworkTrace::from_pairs(&pairs)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.input.display())))?;
    let mut csv = Vec::new();
    trace.to_csv(&mut csv)?;
    write_atomic(&args.out, &csv)?;
    eprintln!(
        "[trace] wrote {} sample(s) to {} ({} row(s) skipped)",
        pairs.len(),
        args.out.display(),
        skipped
    );
    Ok(())
}
