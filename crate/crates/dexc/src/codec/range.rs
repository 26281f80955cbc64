//! Byte-oriented range coder (LZMA-style carry propagation) over
//! [`SymbolModel`] frequency tables.
//!
//! Encoder state: 64-bit `low`, 32-bit `range` initialized to `0xFFFF_FFFF`,
//! renormalizing one byte at a time whenever `range < 2^24`, with a 5-byte
//! flush. The decoder primes its 32-bit window from exactly 5 bytes and
//! consumes one byte per renormalization, so a valid stream is consumed
//! exactly to its end: total length = renormalizations + 5.

use super::gaussian::{SymbolModel, TOTAL_FREQ};
use super::CodecError;

const TOP: u32 = 1 << 24;

/// Streaming range encoder; obtain the byte stream with [`RangeEncoder::finish`].
#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> RangeEncoder {
        RangeEncoder {
            low: 0,
            range: 0xFFFF_FFFF,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            self.out.push(self.cache.wrapping_add(carry));
            while self.cache_size > 1 {
                self.out.push(0xFFu8.wrapping_add(carry));
                self.cache_size -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        } else {
            self.cache_size += 1;
        }
        self.low = ((self.low as u32) as u64) << 8 & 0xFFFF_FFFF;
    }

    /// Encode one symbol under `model`. Fails with `EncodeError` if the
    /// symbol is outside the model's alphabet.
    pub fn encode(&mut self, model: &SymbolModel, symbol: i32) -> Result<(), CodecError> {
        let index = model.index_of(symbol).ok_or_else(|| {
            CodecError::Encode(format!(
                "symbol {symbol} outside model range [{}, {}]",
                model.min_symbol(),
                model.max_symbol()
            ))
        })?;
        let (cum, freq) = model.cum_freq(index);
        let r = self.range >> 16;
        self.low += (r as u64) * (cum as u64);
        // freq <= 2^16, r < 2^16, so the product fits in u32 (max 0xFFFF0000).
        self.range = r.wrapping_mul(freq);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    /// Flush and return the encoded bytes (always at least 5).
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

/// Streaming range decoder over a byte slice.
#[derive(Debug)]
pub struct RangeDecoder<'a> {
    buf: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    /// Prime the decoder window; requires at least 5 bytes.
    pub fn new(buf: &'a [u8]) -> Result<RangeDecoder<'a>, CodecError> {
        if buf.len() < 5 {
            return Err(CodecError::Decode(format!(
                "stream too short: {} bytes, need at least 5",
                buf.len()
            )));
        }
        let mut code = 0u32;
        // The first byte carries only the encoder's initial cache (0 or a
        // propagated carry); the window is the next 4 bytes.
        for &b in &buf[1..5] {
            code = (code << 8) | b as u32;
        }
        Ok(RangeDecoder {
            buf,
            pos: 5,
            range: 0xFFFF_FFFF,
            code,
        })
    }

    /// Decode one symbol under `model`.
    pub fn decode(&mut self, model: &SymbolModel) -> Result<i32, CodecError> {
        let r = self.range >> 16;
        let v = (self.code / r).min(TOTAL_FREQ - 1);
        let index = model.find(v);
        let (cum, freq) = model.cum_freq(index);
        self.code = self.code.wrapping_sub(r.wrapping_mul(cum));
        self.range = r.wrapping_mul(freq);
        while self.range < TOP {
            let byte = *self
                .buf
                .get(self.pos)
                .ok_or_else(|| CodecError::Decode("stream exhausted mid-symbol".into()))?;
            self.pos += 1;
            self.code = (self.code << 8) | byte as u32;
            self.range <<= 8;
        }
        Ok(model.symbol_at(index))
    }

    /// Bytes consumed so far (including the 5 priming bytes).
    pub fn bytes_consumed(&self) -> usize {
        self.pos
    }

    /// True once every input byte has been consumed.
    pub fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Encode `symbols` under a single `model`. Empty input yields an empty
/// stream (the coder is skipped entirely).
pub fn range_encode(symbols: &[i32], model: &SymbolModel) -> Result<Vec<u8>, CodecError> {
    if symbols.is_empty() {
        return Ok(Vec::new());
    }
    let mut enc = RangeEncoder::new();
    for &s in symbols {
        enc.encode(model, s)?;
    }
    Ok(enc.finish())
}

/// Decode exactly `count` symbols under `model`, requiring the stream to be
/// consumed exactly (no truncation, no trailing bytes).
pub fn range_decode(
    bytes: &[u8],
    count: usize,
    model: &SymbolModel,
) -> Result<Vec<i32>, CodecError> {
    if count == 0 {
        return if bytes.is_empty() {
            Ok(Vec::new())
        } else {
            Err(CodecError::Decode(format!(
                "{} trailing bytes after empty stream",
                bytes.len()
            )))
        };
    }
    let mut dec = RangeDecoder::new(bytes)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(dec.decode(model)?);
    }
    if !dec.finished() {
        return Err(CodecError::Decode(format!(
            "{} trailing bytes after final symbol",
            bytes.len() - dec.bytes_consumed()
        )));
    }
    Ok(out)
}
