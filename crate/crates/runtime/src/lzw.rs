//! Byte-oriented LZW codec with variable-width codes.
//!
//! The format implemented here is pinned as follows (see `docs/formats.md`
//! for the normative statement):
//!
//! - The initial dictionary holds the 256 single-byte strings as codes
//!   0–255, plus two control codes: 256 (`CLEAR`, dictionary reset) and
//!   257 (`STOP`, end of stream). The first assignable code is 258.
//! - Codes are packed most-significant-bit first. The code width starts
//!   at 9 bits and grows up to 16.
//! - After every emitted data code the encoder advances its next-code
//!   counter: mid-stream this records a real dictionary entry (previous
//!   string + next byte); after the final data code it is a bookkeeping
//!   advance only, which keeps the encoder's width schedule in lockstep
//!   with a decoder that adds an entry for every data code after its
//!   first. Following the advance, the width grows by one when the
//!   counter equals `1 << width` (while below 16), and when the counter
//!   reaches 65536 the encoder emits `CLEAR` at the current width and
//!   resets (empty dictionary, counter 258, width 9).
//! - The decoder mirrors this: it adds an entry after every data code
//!   except the first of a segment, widens when its counter equals
//!   `(1 << width) - 1` (while below 16), and resets on `CLEAR`. A code
//!   equal to the counter is the standard self-referential case (the
//!   pending entry: previous string + its own first byte); a larger code
//!   is an error.
//! - A stream is terminated by `STOP`; the final partial byte is padded
//!   with zero bits and anything after `STOP` is ignored. Empty input
//!   encodes to `STOP` alone: the bytes `[0x80, 0x80]`.
//! - A stream that ends before `STOP`, or that references an unassigned
//!   code, is rejected.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dictionary-reset control code.
const CLEAR: u32 = 256;
/// End-of-stream control code.
const STOP: u32 = 257;
/// First dictionary code available for multi-byte strings.
const FIRST_CODE: u32 = 258;
/// Code width, in bits, at the start of a segment.
const INITIAL_WIDTH: u32 = 9;
/// Largest code width; the dictionary resets rather than growing past it.
const MAX_WIDTH: u32 = 16;
/// Exclusive upper bound on assignable codes (`1 << MAX_WIDTH`).
const DICT_CAP: u32 = 1 << MAX_WIDTH;

/// Packs codes into bytes, most significant bit first.
struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter { out: Vec::new(), acc: 0, nbits: 0 }
    }

    fn write(&mut self, code: u32, width: u32) {
        debug_assert!(width <= MAX_WIDTH && code < (1 << width));
        self.acc = (self.acc << width) | code;
        self.nbits += width;
        while self.nbits >= 8 {
            self.out.push((self.acc >> (self.nbits - 8)) as u8);
            self.nbits -= 8;
            self.acc &= (1 << self.nbits) - 1;
        }
    }

    /// Pads the final partial byte with zero bits and returns the stream.
    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.out
    }
}

/// Extracts codes from bytes, most significant bit first.
struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        BitReader { data, pos: 0, acc: 0, nbits: 0 }
    }

    fn read(&mut self, width: u32) -> Result<u32> {
        while self.nbits < width {
            let byte = *self
                .data
                .get(self.pos)
                .ok_or_else(|| Error::Codec("stream truncated before the stop code".into()))?;
            self.pos += 1;
            self.acc = (self.acc << 8) | u32::from(byte);
            self.nbits += 8;
        }
        let value = (self.acc >> (self.nbits - width)) & ((1 << width) - 1);
        self.nbits -= width;
        self.acc &= if self.nbits == 0 { 0 } else { (1 << self.nbits) - 1 };
        Ok(value)
    }
}

/// Compresses `data` into a self-terminating LZW stream.
///
/// The output always ends with the stop code, so even empty input yields
/// two bytes. Identical input always yields identical output.
pub fn lzw_compress(data: &[u8]) -> Vec<u8> {
    let mut writer = BitWriter::new();
    let mut dict: HashMap<(u32, u8), u32> = HashMap::new();
    let mut next_code = FIRST_CODE;
    let mut width = INITIAL_WIDTH;
    let mut prefix: Option<u32> = None;

    // Shared post-emit bookkeeping: advance the counter, widen, and reset
    // the dictionary when it fills. `entry` is the new mapping mid-stream
    // and `None` for the advance after the final data code.
    let after_emit = |writer: &mut BitWriter,
                          dict: &mut HashMap<(u32, u8), u32>,
                          next_code: &mut u32,
                          width: &mut u32,
                          entry: Option<(u32, u8)>| {
        if let Some(key) = entry {
            dict.insert(key, *next_code);
        }
        *next_code += 1;
        if *width < MAX_WIDTH && *next_code == (1 << *width) {
            *width += 1;
        }
        if *next_code == DICT_CAP {
            writer.write(CLEAR, *width);
            dict.clear();
            *next_code = FIRST_CODE;
            *width = INITIAL_WIDTH;
        }
    };

    for &byte in data {
        match prefix {
            None => prefix = Some(u32::from(byte)),
            Some(p) => {
                if let Some(&code) = dict.get(&(p, byte)) {
                    prefix = Some(code);
                } else {
                    writer.write(p, width);
                    after_emit(&mut writer, &mut dict, &mut next_code, &mut width, Some((p, byte)));
                    prefix = Some(u32::from(byte));
                }
            }
        }
    }
    if let Some(p) = prefix {
        writer.write(p, width);
        after_emit(&mut writer, &mut dict, &mut next_code, &mut width, None);
    }
    writer.write(STOP, width);
    writer.finish()
}

/// A decoded dictionary entry: the string for `prefix` followed by `byte`.
struct DecodeEntry {
    prefix: u32,
    byte: u8,
    /// First byte of the full string, kept for O(1) entry construction.
    first: u8,
}

/// First byte of the string a code stands for.
fn first_byte(code: u32, dict: &[DecodeEntry]) -> u8 {
    if code < 256 {
        code as u8
    } else {
        dict[(code - FIRST_CODE) as usize].first
    }
}

/// Appends the string for `code` to `out` by walking the prefix chain.
fn expand(code: u32, dict: &[DecodeEntry], out: &mut Vec<u8>) {
    let start = out.len();
    let mut c = code;
    loop {
        if c < 256 {
            out.push(c as u8);
            break;
        }
        let entry = &dict[(c - FIRST_CODE) as usize];
        out.push(entry.byte);
        c = entry.prefix;
    }
    out[start..].reverse();
}

/// Decompresses an LZW stream produced by [`lzw_compress`].
///
/// Fails with [`Error::Codec`] on a stream that ends before the stop
/// code or references a code the dictionary has not assigned yet.
pub fn lzw_decompress(data: &[u8]) -> Result<Vec<u8>> {
    decompress_impl(data, None)
}

/// Decompression core; optionally records every code read (including
/// control codes) so tests can assert on dictionary resets and the
/// self-referential path without a second implementation.
fn decompress_impl(data: &[u8], mut trace: Option<&mut Vec<u32>>) -> Result<Vec<u8>> {
    let mut reader = BitReader::new(data);
    let mut out = Vec::new();
    let mut dict: Vec<DecodeEntry> = Vec::new();
    let mut next_code = FIRST_CODE;
    let mut width = INITIAL_WIDTH;
    let mut prev: Option<u32> = None;

    loop {
        let code = reader.read(width)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(code);
        }
        match code {
            STOP => return Ok(out),
            CLEAR => {
                dict.clear();
                next_code = FIRST_CODE;
                width = INITIAL_WIDTH;
                prev = None;
            }
            _ => {
                let p = match prev {
                    None => {
                        if code >= 256 {
                            return Err(Error::Codec(format!(
                                "code {code} opens a segment but only literals may"
                            )));
                        }
                        out.push(code as u8);
                        prev = Some(code);
                        continue;
                    }
                    Some(p) => p,
                };
                let first = if code < 256 {
                    expand(code, &dict, &mut out);
                    code as u8
                } else if code < next_code {
                    expand(code, &dict, &mut out);
                    first_byte(code, &dict)
                } else if code == next_code {
                    // Self-referential case: the pending entry is the
                    // previous string followed by its own first byte.
                    let f = first_byte(p, &dict);
                    expand(p, &dict, &mut out);
                    out.push(f);
                    f
                } else {
                    return Err(Error::Codec(format!(
                        "code {code} not yet assigned (next is {next_code})"
                    )));
                };
                if next_code < DICT_CAP {
                    dict.push(DecodeEntry { prefix: p, byte: first, first: first_byte(p, &dict) });
                    next_code += 1;
                    if width < MAX_WIDTH && next_code == (1 << width) - 1 {
                        width += 1;
                    }
                }
                prev = Some(code);
            }
        }
    }
}
