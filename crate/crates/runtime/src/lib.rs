//! Two-process collaborative inference runtime.
//!
//! This crate turns the planning stack of `janus-core` into something that
//! actually moves bytes: a binary wire protocol ([`wire`]), an LZW codec
//! for tensor payloads ([`lzw`]), sleep-based synthetic layer executors
//! ([`executor`]), and the two endpoints — a device agent ([`device`])
//! that runs the local half of a split plan and a cloud server ([`cloud`])
//! that completes it. Everything is deterministic under fixed seeds and
//! runs on plain TCP, so the full device–cloud loop can be exercised on
//! one machine with no accelerators or model weights.

pub mod cloud;
pub mod device;
pub mod error;
pub mod executor;
pub mod lzw;
pub mod wire;

pub use cloud::{CloudConfig, CloudModel, CloudServer, RunningServer, ShutdownHandle};
pub use device::{schedule_from_wire, DeviceAgent, FrameReport, WIRE_GRID_STEP};
pub use error::{Error, Result};
pub use executor::{ExecutorParams, LayerRun, SyntheticExecutor};
pub use lzw::{lzw_compress, lzw_decompress};
pub use wire::{
    port_from_env, ConfigPayload, MsgType, ProfilePayload, ResultPayload, WireMessage,
    DEFAULT_PORT, MAX_PAYLOAD, PORT_ENV,
};
