//! Device-side agent: connects to the cloud server, announces a session
//! plan, and drives frames through the split execution pipeline.
//!
//! One frame under split point `s` runs layers `1..=s` locally, ships the
//! surviving tokens (optionally LZW-compressed), and waits for the cloud's
//! result; `s = 0` ships everything, and `s = N + 1` runs the whole model
//! locally without touching the wire. Tensor content is deterministic
//! pseudo-data (seeded low-nibble bytes), so payloads have realistic size
//! and a compressible structure without any model weights.
//!
//! Reported timings are wall-clock measurements, not model predictions:
//! `device_ms` is the measured executor time, `cloud_ms` is the compute
//! time the cloud reports for the frame, and `comm_ms` is the remainder
//! of the round trip (transfer plus protocol overhead). The end-to-end
//! time additionally contains payload synthesis and compression, so it
//! can slightly exceed the sum of the named parts.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Instant;

use janus_core::pruning::build_schedule;
use janus_core::{ModelSpec, PruningForm, PruningPolicy, PruningSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::executor::{ExecutorParams, SyntheticExecutor};
use crate::lzw::lzw_compress;
use crate::wire::{ConfigPayload, MsgType, ProfilePayload, ResultPayload, WireMessage};

/// Grid step used to rebuild pruning schedules from the wire's integer
/// declining rate. Every coarser planning grid is a subset of this one,
/// so any scheduler decision survives the round trip unchanged.
pub const WIRE_GRID_STEP: f64 = 0.001;

/// Measurements from one executed frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameReport {
    /// Frame index within this agent's lifetime.
    pub frame: u64,
    /// Wall time from frame start to result in hand.
    pub e2e_ms: f64,
    /// Measured device executor time.
    pub device_ms: f64,
    /// Round-trip wall time minus the cloud's reported compute time;
    /// zero for device-only frames.
    pub comm_ms: f64,
    /// Cloud compute time as reported in the RESULT message.
    pub cloud_ms: f64,
    /// Uncompressed tensor payload size; zero for device-only frames.
    pub payload_raw_bytes: u64,
    /// Bytes actually shipped in the TENSOR message.
    pub payload_wire_bytes: u64,
    /// Per-layer `(tokens, ms)` samples measured on the device.
    #[serde(skip)]
    pub device_samples: Vec<(u32, f64)>,
    /// Per-layer `(tokens, ms)` samples the cloud sent back.
    #[serde(skip)]
    pub cloud_samples: Vec<(u32, f64)>,
    /// Result bytes (empty for device-only frames and zero-length results).
    #[serde(skip)]
    pub result: Vec<u8>,
}

/// The active session plan: what CONFIG most recently established.
#[derive(Debug, Clone)]
struct SessionPlan {
    split_point: u32,
    schedule: PruningSchedule,
}

/// Build the pruning schedule both endpoints derive from a wire CONFIG.
pub fn schedule_from_wire(spec: &ModelSpec, alpha_milli: u16) -> Result<PruningSchedule> {
    let policy = PruningPolicy::new(
        f64::from(alpha_milli) / 1000.0,
        WIRE_GRID_STEP,
        PruningForm::Exponential,
    )?;
    policy.validate_for(spec)?;
    Ok(build_schedule(spec, &policy)?)
}

/// Device agent holding one TCP connection to the cloud server.
pub struct DeviceAgent {
    stream: TcpStream,
    model: ModelSpec,
    executor: SyntheticExecutor,
    payload_rng: ChaCha8Rng,
    compress: bool,
    plan: Option<SessionPlan>,
    frames_run: u64,
}

impl DeviceAgent {
    /// Connect to a cloud server and prepare the local executor.
    ///
    /// `payload_seed` fixes the pseudo-tensor content stream.
    pub fn connect<A: ToSocketAddrs>(
        addr: A,
        model: ModelSpec,
        executor: &ExecutorParams,
        compress: bool,
        payload_seed: u64,
    ) -> Result<Self> {
        model.validate()?;
        let executor = SyntheticExecutor::new(executor, None)?;
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(DeviceAgent {
            stream,
            model,
            executor,
            payload_rng: ChaCha8Rng::seed_from_u64(payload_seed),
            compress,
            plan: None,
            frames_run: 0,
        })
    }

    /// The model this agent executes.
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// Announce a `(split point, declining rate)` plan and wait for the
    /// cloud's acknowledgement. May be called again mid-session to move
    /// the split or the rate between frames.
    pub fn configure(&mut self, split_point: u32, alpha_milli: u16) -> Result<()> {
        let n = self.model.num_layers;
        if split_point > n + 1 {
            return Err(Error::Config(format!(
                "split point {split_point} out of range 0..={}",
                n + 1
            )));
        }
        let schedule = schedule_from_wire(&self.model, alpha_milli)?;
        let config = ConfigPayload {
            model_id: self.model.name.clone(),
            split_point: u16::try_from(split_point).map_err(|_| {
                Error::Config(format!("split point {split_point} does not fit the wire field"))
            })?,
            alpha_milli,
            flags: if self.compress { ConfigPayload::FLAG_COMPRESSED } else { 0 },
        };
        let msg = WireMessage { msg_type: MsgType::Config, payload: config.encode()? };
        msg.write_to(&mut self.stream)?;
        let reply = WireMessage::read_from(&mut self.stream)?;
        if reply.msg_type != MsgType::Ack {
            return Err(Error::Protocol(format!(
                "expected ACK for CONFIG, got {:?}",
                reply.msg_type
            )));
        }
        self.plan = Some(SessionPlan { split_point, schedule });
        Ok(())
    }

    /// Execute one frame under the current plan.
    pub fn run_frame(&mut self) -> Result<FrameReport> {
        let frame = self.frames_run;
        self.frames_run += 1;
        self.run_frame_inner(frame).map_err(|e| e.at_frame(frame))
    }

    fn run_frame_inner(&mut self, frame: u64) -> Result<FrameReport> {
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| Error::Protocol("run_frame before configure".into()))?
            .clone();
        let n = self.model.num_layers;
        let s = plan.split_point;

        let start = Instant::now();
        let device_run = self.executor.run_layers(&plan.schedule, 1, s.min(n));

        if s == n + 1 {
            // Device-only: the result stays local and the wire stays idle.
            return Ok(FrameReport {
                frame,
                e2e_ms: start.elapsed().as_secs_f64() * 1000.0,
                device_ms: device_run.total_ms,
                comm_ms: 0.0,
                cloud_ms: 0.0,
                payload_raw_bytes: 0,
                payload_wire_bytes: 0,
                device_samples: device_run.samples,
                cloud_samples: Vec::new(),
                result: Vec::new(),
            });
        }

        let raw_len = self
            .model
            .token_payload_bytes(plan.schedule.tokens_at_split(s)) as usize;
        let mut raw = vec![0u8; raw_len];
        for byte in &mut raw {
            *byte = self.payload_rng.gen::<u8>() & 0x0F;
        }
        let wire = if self.compress { lzw_compress(&raw) } else { raw };
        let payload_raw_bytes = raw_len as u64;
        let payload_wire_bytes = wire.len() as u64;

        let comm_start = Instant::now();
        WireMessage { msg_type: MsgType::Tensor, payload: wire }.write_to(&mut self.stream)?;
        let reply = WireMessage::read_from(&mut self.stream)?;
        let round_trip_ms = comm_start.elapsed().as_secs_f64() * 1000.0;
        if reply.msg_type != MsgType::Result {
            return Err(Error::Protocol(format!(
                "expected RESULT for TENSOR, got {:?}",
                reply.msg_type
            )));
        }
        let result = ResultPayload::decode(&reply.payload)?;

        let profile = WireMessage::read_from(&mut self.stream)?;
        if profile.msg_type != MsgType::Profile {
            return Err(Error::Protocol(format!(
                "expected PROFILE after RESULT, got {:?}",
                profile.msg_type
            )));
        }
        let cloud_samples = ProfilePayload::decode(&profile.payload)?.samples;

        Ok(FrameReport {
            frame,
            e2e_ms: start.elapsed().as_secs_f64() * 1000.0,
            device_ms: device_run.total_ms,
            comm_ms: (round_trip_ms - result.cloud_ms).max(0.0),
            cloud_ms: result.cloud_ms,
            payload_raw_bytes,
            payload_wire_bytes,
            device_samples: device_run.samples,
            cloud_samples,
            result: result.result,
        })
    }

    /// Run `count` frames back to back under the current plan.
    pub fn run_frames(&mut self, count: u64) -> Result<Vec<FrameReport>> {
        (0..count).map(|_| self.run_frame()).collect()
    }
}
