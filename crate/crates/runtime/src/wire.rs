//! Binary wire protocol between the device agent and the cloud server.
//!
//! Every message is a 9-byte header followed by an opaque payload:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "JNS1"
//! 4       1     message type (1 CONFIG, 2 TENSOR, 3 RESULT, 4 PROFILE, 5 ACK)
//! 5       4     payload length, u32 big-endian
//! 9       n     payload
//! ```
//!
//! ACK carries no payload, so it is exactly the 9 header bytes. Payloads
//! are capped at 64 MiB; the cap is enforced before any buffer is
//! allocated so a corrupt length field cannot trigger a huge allocation.
//! All multi-byte integers on the wire are big-endian, and floating-point
//! values travel as the big-endian bytes of their IEEE 754 bit patterns.

use std::io::{Read, Write};

use janus_core::LatencySample;

use crate::error::{Error, Result};

/// Stream prefix identifying the protocol.
pub const MAGIC: [u8; 4] = *b"JNS1";
/// Upper bound on a single message payload.
pub const MAX_PAYLOAD: usize = 64 * 1024 * 1024;
/// TCP port the cloud server binds when none is configured.
pub const DEFAULT_PORT: u16 = 7431;
/// Environment variable overriding [`DEFAULT_PORT`].
pub const PORT_ENV: &str = "JANUS_PORT";

/// Resolve the protocol port: [`PORT_ENV`] when set, else [`DEFAULT_PORT`].
///
/// A set-but-unparsable value is a configuration error rather than a
/// silent fallback.
pub fn port_from_env() -> Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(raw) => raw
            .trim()
            .parse::<u16>()
            .map_err(|_| Error::Config(format!("{PORT_ENV}={raw:?} is not a TCP port"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_PORT),
        Err(e) => Err(Error::Config(format!("{PORT_ENV}: {e}"))),
    }
}

/// Message discriminant carried in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    /// Device → cloud: session parameters for subsequent frames.
    Config = 1,
    /// Device → cloud: intermediate activations for layers `s+1..=N`.
    Tensor = 2,
    /// Cloud → device: inference result plus the cloud compute time.
    Result = 3,
    /// Cloud → device: per-layer latency samples for profiler fitting.
    Profile = 4,
    /// Cloud → device: bare acknowledgement of a CONFIG.
    Ack = 5,
}

impl MsgType {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => MsgType::Config,
            2 => MsgType::Tensor,
            3 => MsgType::Result,
            4 => MsgType::Profile,
            5 => MsgType::Ack,
            other => return Err(Error::Frame(format!("unknown message type {other}"))),
        })
    }
}

/// One framed protocol message.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl WireMessage {
    /// A payload-free acknowledgement.
    pub fn ack() -> Self {
        WireMessage { msg_type: MsgType::Ack, payload: Vec::new() }
    }

    /// Serialize header plus payload.
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(Error::Frame(format!(
                "payload of {} bytes exceeds the {MAX_PAYLOAD}-byte cap",
                self.payload.len()
            )));
        }
        let mut out = Vec::with_capacity(9 + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parse one message from the front of `bytes`, returning it along
    /// with the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 9 {
            return Err(Error::Frame(format!(
                "{} bytes is shorter than a message header",
                bytes.len()
            )));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Frame(format!("bad magic {:02x?}", &bytes[0..4])));
        }
        let msg_type = MsgType::from_u8(bytes[4])?;
        let len = u32::from_be_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Frame(format!(
                "declared payload of {len} bytes exceeds the {MAX_PAYLOAD}-byte cap"
            )));
        }
        if bytes.len() < 9 + len {
            return Err(Error::Frame(format!(
                "payload truncated: header declares {len} bytes, {} available",
                bytes.len() - 9
            )));
        }
        let payload = bytes[9..9 + len].to_vec();
        Ok((WireMessage { msg_type, payload }, 9 + len))
    }

    /// Read one message, or `None` when the stream is already closed at a
    /// message boundary. End-of-stream anywhere else is a framing error.
    pub fn read_opt<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut header = [0u8; 9];
        let mut filled = 0;
        while filled < header.len() {
            let n = r.read(&mut header[filled..])?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(Error::Frame(format!(
                    "stream closed {filled} bytes into a message header"
                )));
            }
            filled += n;
        }
        if header[0..4] != MAGIC {
            return Err(Error::Frame(format!("bad magic {:02x?}", &header[0..4])));
        }
        let msg_type = MsgType::from_u8(header[4])?;
        let len = u32::from_be_bytes([header[5], header[6], header[7], header[8]]) as usize;
        if len > MAX_PAYLOAD {
            return Err(Error::Frame(format!(
                "declared payload of {len} bytes exceeds the {MAX_PAYLOAD}-byte cap"
            )));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Frame(format!("stream closed inside a {len}-byte payload"))
            } else {
                Error::Io(e)
            }
        })?;
        Ok(Some(WireMessage { msg_type, payload }))
    }

    /// Read one message; a closed stream is a framing error.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        Self::read_opt(r)?.ok_or_else(|| {
            Error::Frame("stream closed before a message header".into())
        })
    }

    /// Write the framed message and flush.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode()?)?;
        w.flush()?;
        Ok(())
    }
}

/// CONFIG payload: the session parameters a device announces before
/// sending frames.
///
/// ```text
/// u16 BE   model id length
/// bytes    model id (UTF-8)
/// u16 BE   split point s (0 ..= N+1)
/// u16 BE   declining rate in millis (alpha = alpha_milli / 1000)
/// u8       flags (bit 0: TENSOR payloads are LZW-compressed)
/// ```
///
/// The declining rate crosses the wire as an integer so both endpoints
/// derive bit-identical pruning schedules from `alpha_milli / 1000.0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigPayload {
    pub model_id: String,
    pub split_point: u16,
    pub alpha_milli: u16,
    pub flags: u8,
}

impl ConfigPayload {
    /// Flag bit: TENSOR payloads are LZW-compressed.
    pub const FLAG_COMPRESSED: u8 = 0x01;

    /// The declining rate both endpoints reconstruct from the wire.
    pub fn alpha(&self) -> f64 {
        f64::from(self.alpha_milli) / 1000.0
    }

    /// Whether TENSOR payloads in this session are LZW-compressed.
    pub fn compressed(&self) -> bool {
        self.flags & Self::FLAG_COMPRESSED != 0
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let id = self.model_id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| {
            Error::Frame(format!("model id of {} bytes does not fit the u16 prefix", id.len()))
        })?;
        let mut out = Vec::with_capacity(2 + id.len() + 5);
        out.extend_from_slice(&id_len.to_be_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&self.split_point.to_be_bytes());
        out.extend_from_slice(&self.alpha_milli.to_be_bytes());
        out.push(self.flags);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 2 {
            return Err(Error::Frame("config payload shorter than its length prefix".into()));
        }
        let id_len = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
        let expected = 2 + id_len + 5;
        if bytes.len() != expected {
            return Err(Error::Frame(format!(
                "config payload is {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let model_id = std::str::from_utf8(&bytes[2..2 + id_len])
            .map_err(|_| Error::Frame("model id is not UTF-8".into()))?
            .to_string();
        let rest = &bytes[2 + id_len..];
        Ok(ConfigPayload {
            model_id,
            split_point: u16::from_be_bytes([rest[0], rest[1]]),
            alpha_milli: u16::from_be_bytes([rest[2], rest[3]]),
            flags: rest[4],
        })
    }
}

/// RESULT payload: the cloud's answer for one frame.
///
/// ```text
/// f64 BE   cloud compute time in ms (IEEE 754 bits)
/// u32 BE   result length
/// bytes    result
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ResultPayload {
    pub cloud_ms: f64,
    pub result: Vec<u8>,
}

impl ResultPayload {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let len = u32::try_from(self.result.len()).map_err(|_| {
            Error::Frame(format!("result of {} bytes does not fit the u32 prefix", self.result.len()))
        })?;
        let mut out = Vec::with_capacity(12 + self.result.len());
        out.extend_from_slice(&self.cloud_ms.to_bits().to_be_bytes());
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.result);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Frame(format!(
                "result payload is {} bytes, expected at least 12",
                bytes.len()
            )));
        }
        let cloud_ms = f64::from_bits(u64::from_be_bytes(bytes[0..8].try_into().unwrap()));
        let len = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + len {
            return Err(Error::Frame(format!(
                "result payload declares {len} bytes, {} present",
                bytes.len() - 12
            )));
        }
        Ok(ResultPayload { cloud_ms, result: bytes[12..].to_vec() })
    }
}

/// PROFILE payload: per-layer latency samples the cloud measured, shipped
/// back so the device can fit its cloud-side latency model.
///
/// ```text
/// u32 BE   sample count
/// repeated u32 BE tokens, f64 BE latency ms
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePayload {
    pub samples: Vec<(u32, f64)>,
}

impl ProfilePayload {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.samples.len()).map_err(|_| {
            Error::Frame(format!("{} samples do not fit the u32 prefix", self.samples.len()))
        })?;
        let mut out = Vec::with_capacity(4 + 12 * self.samples.len());
        out.extend_from_slice(&count.to_be_bytes());
        for &(tokens, ms) in &self.samples {
            out.extend_from_slice(&tokens.to_be_bytes());
            out.extend_from_slice(&ms.to_bits().to_be_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Frame("profile payload shorter than its count".into()));
        }
        let count = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
        if bytes.len() != 4 + 12 * count {
            return Err(Error::Frame(format!(
                "profile payload declares {count} samples but is {} bytes",
                bytes.len()
            )));
        }
        let samples = bytes[4..]
            .chunks_exact(12)
            .map(|c| {
                let tokens = u32::from_be_bytes(c[0..4].try_into().unwrap());
                let ms = f64::from_bits(u64::from_be_bytes(c[4..12].try_into().unwrap()));
                (tokens, ms)
            })
            .collect();
        Ok(ProfilePayload { samples })
    }

    /// The samples as profiler input.
    pub fn to_samples(&self) -> Vec<LatencySample> {
        self.samples
            .iter()
            .map(|&(tokens, ms)| LatencySample { tokens: u64::from(tokens), latency_ms: ms })
            .collect()
    }
}
