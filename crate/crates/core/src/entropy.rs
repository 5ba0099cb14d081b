//! Carry-propagating range coder with a 64-bit interval and byte-wise
//! renormalization.
//!
//! The encoder follows the classic "low + cache + pending 0xFF run" scheme:
//! `low` carries one extra bit so that a carry produced by an interval
//! update can ripple into bytes that have already been determined but not
//! yet written. The interval never leaves `[0, 1)`, so the very first byte
//! shifted out is always zero and is not stored.
//!
//! Termination writes the delayed byte run plus the top four bytes of the
//! window; the decoder substitutes zeros for exactly those four missing
//! low-order bytes and refuses to read any further. Payload length is
//! supplied by the caller (the container knows where the payload ends).

use crate::error::{Error, Result};

/// Renormalization threshold: the range is kept at or above 2^56.
const TOP: u64 = 1 << 56;
/// Largest frequency total accepted by the coder.
pub const MAX_TOTAL: u32 = 1 << 28;
/// Number of trailing window bytes that the encoder never writes.
const IMPLICIT_TAIL: usize = 4;

/// Cumulative frequency table as seen by the coder.
///
/// Symbols are identified by `usize` indices whose meaning belongs to the
/// implementor; the coder only looks at `(cum, freq, total)` triples.
pub trait Frequencies {
    fn total(&self) -> u32;

    /// `(cum, freq)` of `symbol`, or `None` when the symbol has zero frequency.
    fn lookup(&self, symbol: usize) -> Option<(u32, u32)>;

    /// Symbol whose cumulative interval contains `target`, with its `(cum, freq)`.
    /// `target` is always below `total()`.
    fn find(&self, target: u32) -> (usize, u32, u32);
}

/// Dense frequency table over symbols `0..len`.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    cum: Vec<u32>,
}

impl FrequencyTable {
    pub fn new<I: IntoIterator<Item = u32>>(freqs: I) -> Self {
        let freqs = freqs.into_iter();
        let mut cum = Vec::with_capacity(freqs.size_hint().0 + 1);
        cum.push(0);
        let mut acc = 0u32;
        for f in freqs {
            acc += f;
            cum.push(acc);
        }
        Self { cum }
    }

    pub fn len(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.cum[symbol + 1] - self.cum[symbol]
    }
}

impl Frequencies for FrequencyTable {
    fn total(&self) -> u32 {
        *self.cum.last().unwrap_or(&0)
    }

    fn lookup(&self, symbol: usize) -> Option<(u32, u32)> {
        if symbol >= self.len() {
            return None;
        }
        let f = self.freq(symbol);
        (f > 0).then_some((self.cum[symbol], f))
    }

    fn find(&self, target: u32) -> (usize, u32, u32) {
        // First boundary strictly above target; zero-width symbols are skipped.
        let upper = self.cum.partition_point(|&c| c <= target);
        let symbol = upper - 1;
        (symbol, self.cum[symbol], self.freq(symbol))
    }
}

/// Ideal cost in bits of an event with probability `freq / total`.
pub fn cost_bits(freq: u32, total: u32) -> f64 {
    -(f64::from(freq) / f64::from(total)).log2()
}

/// Adaptive binary model: two counters starting at one, halved when their
/// sum exceeds 2^12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitModel {
    counts: [u32; 2],
}

impl Default for BitModel {
    fn default() -> Self {
        Self::new()
    }
}

impl BitModel {
    const LIMIT: u32 = 1 << 12;

    pub fn new() -> Self {
        Self { counts: [1, 1] }
    }

    pub fn counts(&self) -> [u32; 2] {
        self.counts
    }

    pub fn table(&self) -> FrequencyTable {
        FrequencyTable::new(self.counts)
    }

    /// Ideal cost of `bit` under the current counts.
    pub fn cost(&self, bit: bool) -> f64 {
        cost_bits(self.counts[bit as usize], self.counts[0] + self.counts[1])
    }

    pub fn update(&mut self, bit: bool) {
        self.counts[bit as usize] += 1;
        if self.counts[0] + self.counts[1] > Self::LIMIT {
            for c in &mut self.counts {
                *c = (*c).div_ceil(2);
            }
        }
    }
}

fn check_total(total: u32) -> Result<()> {
    if total == 0 || total > MAX_TOTAL {
        return Err(Error::TotalOutOfRange(total));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u128,
    range: u64,
    cache: u8,
    pending: u64,
    // The first byte out of the shift register is always zero and is dropped.
    primed: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u64::MAX,
            cache: 0,
            pending: 1,
            primed: false,
            out: Vec::new(),
        }
    }

    /// Bytes produced so far (excluding the delayed carry run and the flush).
    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }

    pub fn encode_range(&mut self, cum: u32, freq: u32, total: u32) -> Result<()> {
        check_total(total)?;
        if freq == 0 || u64::from(cum) + u64::from(freq) > u64::from(total) {
            return Err(Error::ZeroFrequency);
        }
        let r = self.range / u64::from(total);
        self.low += u128::from(r * u64::from(cum));
        self.range = r * u64::from(freq);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    /// Encodes `symbol` against `freqs`; returns the ideal cost in bits.
    pub fn encode<F: Frequencies + ?Sized>(&mut self, freqs: &F, symbol: usize) -> Result<f64> {
        let total = freqs.total();
        check_total(total)?;
        let (cum, freq) = freqs.lookup(symbol).ok_or(Error::ZeroFrequency)?;
        self.encode_range(cum, freq, total)?;
        Ok(cost_bits(freq, total))
    }

    /// Encodes a flag and updates the model; returns the ideal cost in bits.
    pub fn encode_bit(&mut self, model: &mut BitModel, bit: bool) -> Result<f64> {
        let cost = self.encode(&model.table(), bit as usize)?;
        model.update(bit);
        Ok(cost)
    }

    fn shift_low(&mut self) {
        let carry = (self.low >> 64) as u8;
        if (self.low as u64) < 0xFF00_0000_0000_0000 || carry != 0 {
            let mut byte = self.cache;
            loop {
                let b = byte.wrapping_add(carry);
                if self.primed {
                    self.out.push(b);
                } else {
                    debug_assert_eq!(b, 0);
                    self.primed = true;
                }
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 56) as u8;
        }
        self.pending += 1;
        self.low = u128::from((self.low as u64) << 8);
    }

    pub fn finish(mut self) -> Vec<u8> {
        // Round low up to a multiple of 2^32; the range (>= 2^56) keeps the
        // rounded value inside the final interval, so the bottom four window
        // bytes are zero and can be left implicit.
        let mask = (1u128 << 32) - 1;
        self.low = (self.low + mask) & !mask;
        for _ in 0..=IMPLICIT_TAIL {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u64,
    range: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut dec = Self {
            data,
            pos: 0,
            code: 0,
            range: u64::MAX,
        };
        for _ in 0..8 {
            dec.code = (dec.code << 8) | u64::from(dec.next_byte()?);
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let pos = self.pos;
        self.pos += 1;
        match self.data.get(pos) {
            Some(&b) => Ok(b),
            None if pos < self.data.len() + IMPLICIT_TAIL => Ok(0),
            None => Err(Error::Truncated {
                offset: self.data.len(),
            }),
        }
    }

    /// True when every payload byte has been consumed and nothing more.
    pub fn is_exhausted(&self) -> bool {
        self.pos == self.data.len() + IMPLICIT_TAIL
    }

    /// Payload bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos.min(self.data.len())
    }

    pub fn decode<F: Frequencies + ?Sized>(&mut self, freqs: &F) -> Result<usize> {
        let total = freqs.total();
        check_total(total)?;
        let r = self.range / u64::from(total);
        let target = self.code / r;
        if target >= u64::from(total) {
            return Err(Error::Corrupt(format!(
                "code value outside interval near byte {}",
                self.position()
            )));
        }
        let (symbol, cum, freq) = freqs.find(target as u32);
        self.code -= r * u64::from(cum);
        self.range = r * u64::from(freq);
        while self.range < TOP {
            self.code = (self.code << 8) | u64::from(self.next_byte()?);
            self.range <<= 8;
        }
        Ok(symbol)
    }

    pub fn decode_bit(&mut self, model: &mut BitModel) -> Result<bool> {
        let bit = self.decode(&model.table())? == 1;
        model.update(bit);
        Ok(bit)
    }
}

/// One coding interface for both directions, so every stage runs the same
/// code path in the encoder and the decoder. `known` carries the value on the
/// encoding side and is ignored when decoding. Both calls return the decided
/// value and its ideal cost in bits.
pub trait SymbolCoder {
    fn code_symbol<F: Frequencies + ?Sized>(
        &mut self,
        freqs: &F,
        known: Option<usize>,
    ) -> Result<(usize, f64)>;

    fn code_bit(&mut self, model: &mut BitModel, known: Option<bool>) -> Result<(bool, f64)>;
}

impl SymbolCoder for RangeEncoder {
    fn code_symbol<F: Frequencies + ?Sized>(
        &mut self,
        freqs: &F,
        known: Option<usize>,
    ) -> Result<(usize, f64)> {
        let symbol = known.ok_or_else(|| Error::Invariant("encoder without a symbol".into()))?;
        let cost = self.encode(freqs, symbol)?;
        Ok((symbol, cost))
    }

    fn code_bit(&mut self, model: &mut BitModel, known: Option<bool>) -> Result<(bool, f64)> {
        let bit = known.ok_or_else(|| Error::Invariant("encoder without a flag".into()))?;
        let cost = self.encode_bit(model, bit)?;
        Ok((bit, cost))
    }
}

impl SymbolCoder for RangeDecoder<'_> {
    fn code_symbol<F: Frequencies + ?Sized>(
        &mut self,
        freqs: &F,
        _known: Option<usize>,
    ) -> Result<(usize, f64)> {
        let symbol = self.decode(freqs)?;
        let (_, freq) = freqs.lookup(symbol).ok_or(Error::ZeroFrequency)?;
        Ok((symbol, cost_bits(freq, freqs.total())))
    }

    fn code_bit(&mut self, model: &mut BitModel, _known: Option<bool>) -> Result<(bool, f64)> {
        let cost_model = *model;
        let bit = self.decode_bit(model)?;
        Ok((bit, cost_model.cost(bit)))
    }
}
