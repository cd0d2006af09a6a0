//! 32-bit range coder over static 16-bit cumulative frequency tables.
//!
//! Stream format: big-endian bytes produced by carry-propagating byte-wise
//! renormalization (the encoder keeps `range ≥ 2²⁴`). Each symbol narrows
//! `range` to `freq · ⌊range / 2¹⁶⌋`. The terminator flushes five bytes, so an
//! empty stream is exactly [`TERMINATOR_BYTES`] long, and the decoder reads
//! exactly as many bytes as the encoder wrote.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PROB_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PROB_BITS;
pub const TERMINATOR_BYTES: usize = 5;
const TOP: u32 = 1 << 24;

/// Cumulative frequencies for the symbols `offset .. offset + n`.
///
/// `cdf` has `n + 1` entries, starts at 0, ends at 2¹⁶ and is strictly
/// increasing, so every symbol has frequency at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    offset: i32,
    cdf: Vec<u32>,
}

impl CdfTable {
    pub fn new(offset: i32, cdf: Vec<u32>) -> Result<Self> {
        if cdf.len() < 2 {
            return Err(Error::invalid("CdfTable", "need at least one symbol"));
        }
        if cdf[0] != 0 || cdf[cdf.len() - 1] != PROB_TOTAL {
            return Err(Error::invalid("CdfTable", "cdf must run from 0 to 65536"));
        }
        if cdf.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("CdfTable", "cdf must be strictly increasing"));
        }
        Ok(CdfTable { offset, cdf })
    }

    /// Quantizes a probability vector to 16 bits.
    ///
    /// Each symbol gets `1 + ⌊p·(2¹⁶ − n)⌋`; the remainder goes to the
    /// largest fractional parts, ties to the lower index.
    pub fn from_masses(offset: i32, masses: &[f64]) -> Result<Self> {
        let n = masses.len();
        if n == 0 || n > (PROB_TOTAL / 2) as usize {
            return Err(Error::invalid("CdfTable::from_masses", "alphabet size out of range"));
        }
        if masses.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "CdfTable::from_masses",
                "masses must be finite and nonnegative",
            ));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("CdfTable::from_masses", "masses sum to zero"));
        }
        let budget = (PROB_TOTAL as usize - n) as f64;
        let mut freq = vec![1u32; n];
        let mut frac: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut used: u32 = n as u32;
        for (i, p) in masses.iter().enumerate() {
            let share = p / total * budget;
            let whole = libm::floor(share);
            freq[i] += whole as u32;
            used += whole as u32;
            frac.push((share - whole, i));
        }
        let rest = PROB_TOTAL - used;
        frac.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in frac.iter().take(rest as usize) {
            freq[i] += 1;
        }
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0);
        let mut acc = 0;
        for f in freq {
            acc += f;
            cdf.push(acc);
        }
        CdfTable::new(offset, cdf)
    }

    pub fn offset(&self) -> i32 {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_symbol(&self) -> i32 {
        self.offset
    }

    pub fn max_symbol(&self) -> i32 {
        self.offset + self.len() as i32 - 1
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    /// Saturates a symbol into the table range.
    pub fn clamp(&self, symbol: i32) -> i32 {
        symbol.clamp(self.min_symbol(), self.max_symbol())
    }

    fn index(&self, symbol: i32) -> Result<usize> {
        if symbol < self.min_symbol() || symbol > self.max_symbol() {
            return Err(Error::SymbolOutOfRange {
                symbol,
                min: self.min_symbol(),
                max: self.max_symbol(),
            });
        }
        Ok((symbol - self.offset) as usize)
    }

    /// `(start, freq)` of a symbol.
    pub fn interval(&self, symbol: i32) -> Result<(u32, u32)> {
        let i = self.index(symbol)?;
        Ok((self.cdf[i], self.cdf[i + 1] - self.cdf[i]))
    }

    pub fn probability(&self, symbol: i32) -> Result<f64> {
        let (_, f) = self.interval(symbol)?;
        Ok(f as f64 / PROB_TOTAL as f64)
    }

    /// `-log₂` of the coded probability.
    pub fn bits(&self, symbol: i32) -> Result<f64> {
        Ok(-libm::log2(self.probability(symbol)?))
    }

    /// Index `i` with `cdf[i] ≤ target < cdf[i + 1]`.
    fn find(&self, target: u32) -> usize {
        self.cdf.partition_point(|&c| c <= target) - 1
    }
}

#[derive(Debug, Clone)]
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
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = ((self.low as u32) << 8) as u64;
    }

    pub fn encode(&mut self, symbol: i32, table: &CdfTable) -> Result<()> {
        let (start, freq) = table.interval(symbol)?;
        let r = self.range >> PROB_BITS;
        self.low += start as u64 * r as u64;
        self.range = freq * r;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..TERMINATOR_BYTES {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder {
            input,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..TERMINATOR_BYTES {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .input
            .get(self.pos)
            .ok_or(Error::Truncated { position: self.pos })?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<i32> {
        let r = self.range >> PROB_BITS;
        let v = self.code / r;
        if v >= PROB_TOTAL {
            return Err(Error::invalid(
                "RangeDecoder",
                alloc::format!("stream desynchronized near byte {}", self.pos),
            ));
        }
        let i = table.find(v);
        let start = table.cdf[i];
        let freq = table.cdf[i + 1] - start;
        self.code -= start * r;
        self.range = freq * r;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.range <<= 8;
        }
        Ok(table.offset + i as i32)
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Fails unless the whole input was consumed.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.input.len() {
            return Err(Error::invalid(
                "RangeDecoder",
                alloc::format!("{} trailing bytes", self.input.len() - self.pos),
            ));
        }
        Ok(())
    }
}

/// Encodes `symbols[i]` under `tables[i]`.
pub fn encode(symbols: &[i32], tables: &[&CdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(Error::shape(
            "range_coder::encode",
            "contexts",
            symbols.len(),
            tables.len(),
        ));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode(s, t)?;
    }
    Ok(enc.finish())
}

/// Decodes one symbol per table and checks that the stream is used up.
pub fn decode(bytes: &[u8], tables: &[&CdfTable]) -> Result<Vec<i32>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let out = tables.iter().map(|t| dec.decode(t)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}
