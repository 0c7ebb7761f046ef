//! Time-ordered uplink bandwidth traces and transfer-time integration.
//!
//! A trace is piecewise constant: each sample's bandwidth holds from its
//! timestamp until the next sample. Queries before the first sample use the
//! first value; queries past the last sample reuse the final value and are
//! reported as truncated, since the recorded data ran out.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// One bandwidth measurement: `uplink_bps` holds from `timestamp_s` onward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub timestamp_s: f64,
    pub uplink_bps: f64,
}

/// Strictly time-ordered uplink bandwidth trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTrace {
    samples: Vec<TraceSample>,
}

impl NetworkTrace {
    pub fn new(samples: Vec<TraceSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("trace must contain at least one sample".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.timestamp_s.is_finite() {
                return Err(Error::Validation(format!(
                    "trace sample {i}: timestamp must be finite, got {}",
                    s.timestamp_s
                )));
            }
            if s.uplink_bps <= 0.0 || !s.uplink_bps.is_finite() {
                return Err(Error::Validation(format!(
                    "trace sample {i}: bandwidth must be positive and finite, got {}",
                    s.uplink_bps
                )));
            }
            if i > 0 && s.timestamp_s <= samples[i - 1].timestamp_s {
                return Err(Error::Validation(format!(
                    "trace timestamps must be strictly increasing: sample {i} at {} follows {}",
                    s.timestamp_s,
                    samples[i - 1].timestamp_s
                )));
            }
        }
        Ok(Self { samples })
    }

    /// Trace from `(timestamp_s, uplink_bps)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(timestamp_s, uplink_bps)| TraceSample { timestamp_s, uplink_bps })
                .collect(),
        )
    }

    /// Constant-bandwidth trace covering `[0, horizon_s]`.
    pub fn constant(uplink_bps: f64, horizon_s: f64) -> Result<Self> {
        Self::from_pairs(&[(0.0, uplink_bps), (horizon_s, uplink_bps)])
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn first_timestamp(&self) -> f64 {
        self.samples[0].timestamp_s
    }

    pub fn last_timestamp(&self) -> f64 {
        self.samples[self.samples.len() - 1].timestamp_s
    }

    /// Index of the sample whose bandwidth applies at time `t`.
    fn segment_index(&self, t: f64) -> usize {
        let after = self.samples.partition_point(|s| s.timestamp_s <= t);
        after.saturating_sub(1)
    }

    /// Bandwidth in effect at time `t`.
    pub fn bandwidth_at(&self, t: f64) -> f64 {
        self.samples[self.segment_index(t)].uplink_bps
    }

    /// Seconds needed to move `bits` starting at `start_s`, integrating over
    /// the piecewise-constant bandwidth. The flag reports whether the
    /// transfer ran past the final recorded timestamp (the final bandwidth is
    /// extended to finish it).
    pub fn transfer_duration(&self, start_s: f64, bits: f64) -> Result<(f64, bool)> {
        if !start_s.is_finite() {
            return Err(Error::Validation(format!(
                "transfer start time must be finite, got {start_s}"
            )));
        }
        if bits < 0.0 || !bits.is_finite() {
            return Err(Error::Validation(format!(
                "transfer size must be non-negative and finite, got {bits} bits"
            )));
        }
        if bits == 0.0 {
            return Ok((0.0, false));
        }
        let last_ts = self.last_timestamp();
        let mut idx = self.segment_index(start_s);
        let mut cur = start_s;
        let mut remaining = bits;
        while idx + 1 < self.samples.len() {
            let bps = self.samples[idx].uplink_bps;
            let seg_end = self.samples[idx + 1].timestamp_s;
            let capacity = bps * (seg_end - cur);
            if capacity >= remaining {
                let end = cur + remaining / bps;
                return Ok((end - start_s, end > last_ts));
            }
            remaining -= capacity;
            cur = seg_end;
            idx += 1;
        }
        let end = cur + remaining / self.samples[idx].uplink_bps;
        Ok((end - start_s, end > last_ts))
    }

    /// Read a trace from CSV with a required `timestamp_s,uplink_mbps`
    /// header; bandwidth is stored internally in bits per second.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        {
            let headers = rdr.headers()?;
            if headers.len() != 2 || &headers[0] != "timestamp_s" || &headers[1] != "uplink_mbps" {
                return Err(Error::Config(format!(
                    "trace CSV must have exactly a `timestamp_s,uplink_mbps` header, got {:?}",
                    headers
                )));
            }
        }
        let mut samples = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let timestamp_s: f64 = record[0].trim().parse().map_err(|e| {
                Error::Config(format!("bad timestamp {:?}: {e}", &record[0]))
            })?;
            let uplink_mbps: f64 = record[1].trim().parse().map_err(|e| {
                Error::Config(format!("bad bandwidth {:?}: {e}", &record[1]))
            })?;
            samples.push(TraceSample { timestamp_s, uplink_bps: uplink_mbps * 1e6 });
        }
        Self::new(samples)
    }

    pub fn from_csv_file(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    /// Write the trace back out in the canonical CSV layout (megabits per
    /// second in the file).
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["timestamp_s", "uplink_mbps"])?;
        for s in &self.samples {
            wtr.write_record(&[s.timestamp_s.to_string(), (s.uplink_bps / 1e6).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_trace() -> NetworkTrace {
        NetworkTrace::from_pairs(&[(0.0, 8_000.0), (1.0, 800.0), (100.0, 800.0)]).unwrap()
    }

    #[test]
    fn bandwidth_lookup_is_piecewise_constant() {
        let t = step_trace();
        assert_eq!(t.bandwidth_at(-5.0), 8_000.0);
        assert_eq!(t.bandwidth_at(0.0), 8_000.0);
        assert_eq!(t.bandwidth_at(0.999), 8_000.0);
        assert_eq!(t.bandwidth_at(1.0), 800.0);
        assert_eq!(t.bandwidth_at(50.0), 800.0);
        assert_eq!(t.bandwidth_at(1e6), 800.0);
    }

    #[test]
    fn transfer_within_one_segment() {
        let t = step_trace();
        let (dur, truncated) = t.transfer_duration(0.0, 4_000.0).unwrap();
        assert!((dur - 0.5).abs() < 1e-12);
        assert!(!truncated);
    }

    #[test]
    fn transfer_crossing_a_boundary_integrates_both_rates() {
        let t = step_trace();
        // Segment 1 carries 8000 bits in its first second; the remaining
        // 4000 bits drain at 800 bps for 5 more seconds.
        let (dur, truncated) = t.transfer_duration(0.0, 12_000.0).unwrap();
        assert!((dur - 6.0).abs() < 1e-12);
        assert!(!truncated);
    }

    #[test]
    fn transfer_past_the_end_extends_and_flags() {
        let t = NetworkTrace::from_pairs(&[(0.0, 1_000.0), (1.0, 1_000.0)]).unwrap();
        let (dur, truncated) = t.transfer_duration(0.0, 5_000.0).unwrap();
        assert!((dur - 5.0).abs() < 1e-12);
        assert!(truncated);

        // Starting beyond the recorded range is also truncated.
        let (dur, truncated) = t.transfer_duration(10.0, 1_000.0).unwrap();
        assert!((dur - 1.0).abs() < 1e-12);
        assert!(truncated);
    }

    #[test]
    fn transfer_ending_at_the_last_timestamp_is_not_truncated() {
        let t = NetworkTrace::from_pairs(&[(0.0, 1_000.0), (2.0, 500.0), (4.0, 500.0)]).unwrap();
        // 2000 bits in [0,2) plus 1000 bits at 500 bps lands exactly at t=4.
        let (dur, truncated) = t.transfer_duration(0.0, 3_000.0).unwrap();
        assert!((dur - 4.0).abs() < 1e-12);
        assert!(!truncated);
    }

    #[test]
    fn zero_bits_take_zero_time() {
        let t = step_trace();
        assert_eq!(t.transfer_duration(0.3, 0.0).unwrap(), (0.0, false));
    }

    #[test]
    fn start_before_first_sample_uses_first_bandwidth() {
        let t = step_trace();
        let (dur, truncated) = t.transfer_duration(-1.0, 8_000.0).unwrap();
        assert!((dur - 1.0).abs() < 1e-12);
        assert!(!truncated);
    }

    #[test]
    fn validation_rejects_bad_traces() {
        assert!(NetworkTrace::from_pairs(&[]).is_err());
        assert!(NetworkTrace::from_pairs(&[(0.0, 0.0)]).is_err());
        assert!(NetworkTrace::from_pairs(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(NetworkTrace::from_pairs(&[(1.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(NetworkTrace::from_pairs(&[(0.0, f64::NAN)]).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_samples() {
        let t = NetworkTrace::from_pairs(&[(0.0, 7.6e6), (1.5, 2.25e7)]).unwrap();
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_s,uplink_mbps\n"));
        let back = NetworkTrace::from_csv(buf.as_slice()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn csv_requires_the_canonical_header() {
        let bad = "time,mbps\n0,5\n";
        assert!(NetworkTrace::from_csv(bad.as_bytes()).is_err());
        let extra = "timestamp_s,uplink_mbps,extra\n0,5,1\n";
        assert!(NetworkTrace::from_csv(extra.as_bytes()).is_err());
        let good = "timestamp_s,uplink_mbps\n0,5\n2,0.8\n";
        let t = NetworkTrace::from_csv(good.as_bytes()).unwrap();
        assert_eq!(t.bandwidth_at(0.0), 5e6);
        assert_eq!(t.bandwidth_at(2.0), 0.8e6);
    }
}
