//! Cloud-side server: accepts device sessions over TCP and completes
//! split inference frames.
//!
//! The server hosts a registry of models it can run, keyed by the model
//! id devices announce in CONFIG. Each connection is served by its own
//! thread: CONFIG (re)establishes the session plan and is acknowledged,
//! TENSOR triggers execution of the cloud-side layers followed by RESULT
//! and PROFILE replies. A protocol violation closes that one session with
//! a logged reason; the server keeps accepting.
//!
//! Sessions get deterministic per-session executor seeds (base seed XOR a
//! session counter) so multi-client runs are reproducible yet distinct.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use janus_core::{ModelSpec, PruningSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::schedule_from_wire;
use crate::error::{Error, Result};
use crate::executor::{ExecutorParams, SyntheticExecutor};
use crate::lzw::lzw_decompress;
use crate::wire::{ConfigPayload, MsgType, ProfilePayload, ResultPayload, WireMessage};

/// How often the accept loop rechecks the shutdown flag.
const ACCEPT_POLL: Duration = Duration::from_millis(25);
/// Salt separating the result-content stream from the executor stream.
const RESULT_SEED_SALT: u64 = 0x524553554C54;

fn default_read_timeout_ms() -> u64 {
    30_000
}

/// One servable model: its geometry plus the synthetic executor cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudModel {
    pub spec: ModelSpec,
    pub slope_ms_per_token: f64,
    pub intercept_ms: f64,
}

/// Server configuration: the model registry and executor noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    pub models: Vec<CloudModel>,
    /// Multiplicative executor jitter half-width, shared by all sessions.
    #[serde(default)]
    pub jitter_frac: f64,
    /// Base seed; session `i` runs with `seed ^ i`.
    #[serde(default)]
    pub seed: u64,
    /// Per-connection idle read timeout; 0 disables it.
    #[serde(default = "default_read_timeout_ms")]
    pub read_timeout_ms: u64,
}

impl CloudConfig {
    pub fn new(models: Vec<CloudModel>) -> Self {
        CloudConfig { models, jitter_frac: 0.0, seed: 0, read_timeout_ms: default_read_timeout_ms() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("server registry holds no models".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for model in &self.models {
            model.spec.validate()?;
            self.executor_params(model).validate()?;
            if !seen.insert(model.spec.name.clone()) {
                return Err(Error::Config(format!(
                    "model {:?} registered twice",
                    model.spec.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let config: CloudConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("server config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    fn executor_params(&self, model: &CloudModel) -> ExecutorParams {
        ExecutorParams {
            slope_ms_per_token: model.slope_ms_per_token,
            intercept_ms: model.intercept_ms,
            jitter_frac: self.jitter_frac,
            seed: self.seed,
        }
    }
}

/// Flag for stopping a [`CloudServer`] from another thread.
#[derive(Debug, Clone)]
pub struct ShutdownHandle(Arc<AtomicBool>);

impl ShutdownHandle {
    /// Ask the accept loop to exit; it notices within one poll interval.
    pub fn shutdown(&self) {
        self.0.store(true, Ordering::Relaxed);
    }
}

/// A bound, not-yet-serving cloud server.
pub struct CloudServer {
    listener: TcpListener,
    config: Arc<CloudConfig>,
    models: Arc<HashMap<String, CloudModel>>,
    shutdown: Arc<AtomicBool>,
    sessions: Arc<AtomicU64>,
}

impl CloudServer {
    /// Bind `addr` and validate the registry. Serving starts with
    /// [`CloudServer::serve`].
    pub fn bind<A: ToSocketAddrs>(addr: A, config: CloudConfig) -> Result<Self> {
        config.validate()?;
        let listener = TcpListener::bind(addr)?;
        let models = config
            .models
            .iter()
            .map(|m| (m.spec.name.clone(), m.clone()))
            .collect();
        Ok(CloudServer {
            listener,
            config: Arc::new(config),
            models: Arc::new(models),
            shutdown: Arc::new(AtomicBool::new(false)),
            sessions: Arc::new(AtomicU64::new(0)),
        })
    }

    /// Address the listener actually bound (relevant with port 0).
    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Handle for stopping the accept loop.
    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle(Arc::clone(&self.shutdown))
    }

    /// Accept and serve sessions until the shutdown handle fires. Each
    /// session runs on its own thread; a failed session never stops the
    /// listener.
    pub fn serve(self) -> Result<()> {
        self.listener.set_nonblocking(true)?;
        loop {
            if self.shutdown.load(Ordering::Relaxed) {
                return Ok(());
            }
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    let session_id = self.sessions.fetch_add(1, Ordering::Relaxed);
                    if let Err(e) = self.launch_session(stream, peer, session_id) {
                        eprintln!("[cloud] session {session_id} ({peer}) failed to start: {e}");
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                Err(e) => {
                    eprintln!("[cloud] accept failed: {e}");
                    thread::sleep(ACCEPT_POLL);
                }
            }
        }
    }

    fn launch_session(&self, stream: TcpStream, peer: SocketAddr, session_id: u64) -> Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        if self.config.read_timeout_ms > 0 {
            stream.set_read_timeout(Some(Duration::from_millis(self.config.read_timeout_ms)))?;
        }
        let config = Arc::clone(&self.config);
        let models = Arc::clone(&self.models);
        let session_seed = self.config.seed ^ session_id;
        thread::Builder::new()
            .name(format!("janus-session-{session_id}"))
            .spawn(move || {
                let mut stream = stream;
                match session_loop(&mut stream, &config, &models, session_seed) {
                    Ok(frames) => {
                        eprintln!("[cloud] session {session_id} ({peer}) closed after {frames} frames")
                    }
                    Err(e) => eprintln!("[cloud] session {session_id} ({peer}) aborted: {e}"),
                }
            })?;
        Ok(())
    }
}

/// Everything a configured session needs to serve TENSOR frames.
struct Session {
    spec: ModelSpec,
    split_point: u32,
    schedule: PruningSchedule,
    compressed: bool,
    executor: SyntheticExecutor,
    result_rng: ChaCha8Rng,
}

fn session_loop(
    stream: &mut TcpStream,
    config: &CloudConfig,
    models: &HashMap<String, CloudModel>,
    session_seed: u64,
) -> Result<u64> {
    let mut session: Option<Session> = None;
    let mut frames = 0u64;
    loop {
        let msg = match WireMessage::read_opt(stream)? {
            Some(msg) => msg,
            None => return Ok(frames),
        };
        match msg.msg_type {
            MsgType::Config => {
                let cfg = ConfigPayload::decode(&msg.payload)?;
                let model = models.get(&cfg.model_id).ok_or_else(|| {
                    Error::Config(format!("unknown model {:?}", cfg.model_id))
                })?;
                let num_layers = model.spec.num_layers;
                let split_point = u32::from(cfg.split_point);
                if split_point > num_layers + 1 {
                    return Err(Error::Protocol(format!(
                        "split point {split_point} out of range 0..={} for {:?}",
                        num_layers + 1,
                        cfg.model_id
                    )));
                }
                let schedule = schedule_from_wire(&model.spec, cfg.alpha_milli)?;
                let mut params = config.executor_params(model);
                params.seed = session_seed;
                session = Some(Session {
                    spec: model.spec.clone(),
                    split_point,
                    schedule,
                    compressed: cfg.compressed(),
                    executor: SyntheticExecutor::new(&params, None)?,
                    result_rng: ChaCha8Rng::seed_from_u64(session_seed ^ RESULT_SEED_SALT),
                });
                WireMessage::ack().write_to(stream)?;
            }
            MsgType::Tensor => {
                let st = session
                    .as_mut()
                    .ok_or_else(|| Error::Protocol("TENSOR before CONFIG".into()))?;
                let num_layers = st.spec.num_layers;
                if st.split_point > num_layers {
                    return Err(Error::Protocol(
                        "device-only session must not ship tensors".into(),
                    ));
                }
                let raw = if st.compressed { lzw_decompress(&msg.payload)? } else { msg.payload };
                // At split 0 a real device ships an encoded input of
                // unknowable size, so only interior splits are checked.
                if st.split_point >= 1 {
                    let expected =
                        st.spec.token_payload_bytes(st.schedule.tokens_at_split(st.split_point));
                    if raw.len() as u64 != expected {
                        return Err(Error::Protocol(format!(
                            "tensor is {} bytes, split {} of {:?} expects {expected}",
                            raw.len(),
                            st.split_point,
                            st.spec.name
                        )));
                    }
                }
                let run = st.executor.run_layers(&st.schedule, st.split_point + 1, num_layers);
                let mut result = vec![0u8; st.spec.result_payload_bytes as usize];
                st.result_rng.fill(&mut result[..]);
                let reply = ResultPayload { cloud_ms: run.total_ms, result };
                WireMessage { msg_type: MsgType::Result, payload: reply.encode()? }
                    .write_to(stream)?;
                WireMessage { msg_type: MsgType::Profile, payload: ProfilePayload { samples: run.samples }.encode()? }
                    .write_to(stream)?;
                frames += 1;
            }
            other => {
                return Err(Error::Protocol(format!(
                    "unexpected {other:?} from a device"
                )))
            }
        }
    }
}

/// A cloud server running on a background thread.
pub struct RunningServer {
    addr: SocketAddr,
    handle: ShutdownHandle,
    join: thread::JoinHandle<Result<()>>,
}

impl RunningServer {
    /// Bind, start serving on a new thread, and hand back the controls.
    pub fn spawn<A: ToSocketAddrs>(addr: A, config: CloudConfig) -> Result<Self> {
        let server = CloudServer::bind(addr, config)?;
        let addr = server.local_addr()?;
        let handle = server.shutdown_handle();
        let join = thread::Builder::new()
            .name("janus-cloud".into())
            .spawn(move || server.serve())?;
        Ok(RunningServer { addr, handle, join })
    }

    /// Address devices should connect to.
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown_handle(&self) -> ShutdownHandle {
        self.handle.clone()
    }

    /// Stop accepting and wait for the accept loop to exit. Sessions
    /// already running finish on their own threads.
    pub fn stop(self) -> Result<()> {
        self.handle.shutdown();
        self.join
            .join()
            .map_err(|_| Error::Protocol("cloud server thread panicked".into()))?
    }
}
