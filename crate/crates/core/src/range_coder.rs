//! Adaptive binary range coder.
//!
//! The coder follows the carry-propagating "low/range" design used by the VP8
//! boolean coder family: a 32-bit range register, byte-wise renormalization once
//! the range drops below 2^24, and a cached output byte plus a run of pending
//! `0xFF` bytes so that carries out of `low` can be resolved lazily.
//!
//! Probabilities come from [`StatisticBin`]s, each a pair of saturating 8-bit
//! counters. Both directions update the bin identically, so an encoder and a
//! decoder fed the same bin schedule stay in lock step.

use std::fmt;

use thiserror::Error;

/// Errors raised by the range coder.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoderError {
    #[error("arithmetic-coded stream ended unexpectedly")]
    UnexpectedEndOfStream,
    #[error("range encoder was already flushed")]
    AlreadyFlushed,
    #[error("corrupt arithmetic-coded stream: {0}")]
    Corrupt(&'static str),
    #[error("i/o error while reading coded stream: {0}")]
    Io(String),
}

/// Renormalization threshold of the range register.
pub const TOP: u32 = 1 << 24;
/// Precision of bin probabilities.
pub const PROB_BITS: u32 = 16;

/// Adaptive 0/1 counter pair backing one coding context.
#[derive(Clone, Copy, Default, PartialEq, Eq)]
pub struct StatisticBin {
    count_zero: u8,
    count_one: u8,
}

impl fmt::Debug for StatisticBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bin({}:{})", self.count_zero, self.count_one)
    }
}

static PROBABILITY: [u16; 256 * 256] = {
    let mut table = [0u16; 256 * 256];
    let mut i = 0;
    while i < table.len() {
        let (zero, one) = ((i >> 8) as u32, (i & 0xFF) as u32);
        let p = ((zero + 1) << PROB_BITS) / (zero + one + 2);
        table[i] = if p > 65535 { 65535 } else if p < 1 { 1 } else { p as u16 };
        i += 1;
    }
    table
};

impl StatisticBin {
    pub const fn new() -> Self {
        StatisticBin {
            count_zero: 0,
            count_one: 0,
        }
    }

    pub fn from_counts(count_zero: u8, count_one: u8) -> Self {
        StatisticBin {
            count_zero,
            count_one,
        }
    }

    pub fn count_zero(&self) -> u8 {
        self.count_zero
    }

    pub fn count_one(&self) -> u8 {
        self.count_one
    }

    /// Laplace estimate of P(bit = 0).
    pub fn p_zero(&self) -> f64 {
        (self.count_zero as f64 + 1.0) / (self.count_zero as f64 + self.count_one as f64 + 2.0)
    }

    /// P(bit = 0) scaled to 16 bits, as used by the coder.
    #[inline]
    pub fn p_zero_fixed(&self) -> u32 {
        PROBABILITY[(self.count_zero as usize) << 8 | self.count_one as usize] as u32
    }

    /// Record one observed bit. A counter that reaches 255 halves both counters.
    #[inline]
    pub fn record(&mut self, bit: bool) {
        let counter = if bit {
            &mut self.count_one
        } else {
            &mut self.count_zero
        };
        *counter += 1;
        if *counter == u8::MAX {
            self.count_zero >>= 1;
            self.count_one >>= 1;
        }
    }

    /// Information cost in bits of coding `bit` with the current estimate.
    pub fn cost(&self, bit: bool) -> f64 {
        let p0 = self.p_zero_fixed() as f64 / (1u32 << PROB_BITS) as f64;
        if bit {
            -(1.0 - p0).log2()
        } else {
            -p0.log2()
        }
    }
}

/// Dense, bounds-checked collection of statistic bins with a fixed shape.
///
/// Indices are validated axis by axis; an out-of-range coordinate panics
/// instead of aliasing a neighbouring context.
#[derive(Clone)]
pub struct BinGrid<const D: usize> {
    name: &'static str,
    shape: [usize; D],
    strides: [usize; D],
    bins: Vec<StatisticBin>,
}

impl<const D: usize> BinGrid<D> {
    pub fn new(name: &'static str, shape: [usize; D]) -> Self {
        let mut strides = [0usize; D];
        let mut stride = 1usize;
        for axis in (0..D).rev() {
            assert!(shape[axis] > 0, "{name}: empty axis {axis}");
            strides[axis] = stride;
            stride *= shape[axis];
        }
        BinGrid {
            name,
            shape,
            strides,
            bins: vec![StatisticBin::new(); stride],
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn shape(&self) -> [usize; D] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    #[inline(always)]
    fn offset(&self, index: &[usize]) -> usize {
        let mut offset = 0;
        for (axis, &i) in index.iter().enumerate() {
            debug_assert!(
                i < self.shape[axis],
                "{}: index {} out of range {} on axis {}",
                self.name,
                i,
                self.shape[axis],
                axis
            );
            offset += i * self.strides[axis];
        }
        offset
    }

    #[inline]
    pub fn at(&mut self, index: [usize; D]) -> &mut StatisticBin {
        let offset = self.offset(&index);
        &mut self.bins[offset]
    }

    /// All bins along the last axis for the given leading coordinates.
    #[inline]
    pub fn lane(&mut self, prefix: &[usize]) -> &mut [StatisticBin] {
        assert_eq!(prefix.len() + 1, D, "{}: lane prefix has wrong rank", self.name);
        let start = self.offset(prefix);
        &mut self.bins[start..start + self.shape[D - 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &StatisticBin> {
        self.bins.iter()
    }
}

/// Pull-based byte input for the decoder.
pub trait ByteSource {
    /// Next byte of the coded stream, or `UnexpectedEndOfStream` once exhausted.
    fn read_byte(&mut self) -> Result<u8, CoderError>;
}

/// Byte source over an in-memory slice.
pub struct SliceSource<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        SliceSource { data, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl ByteSource for SliceSource<'_> {
    #[inline]
    fn read_byte(&mut self) -> Result<u8, CoderError> {
        let byte = *self
            .data
            .get(self.pos)
            .ok_or(CoderError::UnexpectedEndOfStream)?;
        self.pos += 1;
        Ok(byte)
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
    flushed: bool,
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
            flushed: false,
        }
    }

    /// Bytes emitted so far. The final few bytes only appear after [`finish`](Self::finish).
    pub fn bytes_so_far(&self) -> usize {
        self.out.len()
    }

    #[inline]
    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Code `bit` with the bin's current estimate, then adapt the bin.
    #[inline(always)]
    pub fn put_bit(&mut self, bin: &mut StatisticBin, bit: bool) -> Result<(), CoderError> {
        if self.flushed {
            return Err(CoderError::AlreadyFlushed);
        }
        let bound = (self.range >> PROB_BITS) * bin.p_zero_fixed();
        if bit {
            self.low += bound as u64;
            self.range -= bound;
        } else {
            self.range = bound;
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        bin.record(bit);
        Ok(())
    }

    /// Emit the remaining register state and hand back the coded bytes.
    pub fn finish(&mut self) -> Result<Vec<u8>, CoderError> {
        if self.flushed {
            return Err(CoderError::AlreadyFlushed);
        }
        for _ in 0..5 {
            self.shift_low();
        }
        self.flushed = true;
        Ok(std::mem::take(&mut self.out))
    }
}

pub struct RangeDecoder<S> {
    source: S,
    code: u32,
    range: u32,
    primed: bool,
}

impl<S: ByteSource> RangeDecoder<S> {
    pub fn new(source: S) -> Self {
        RangeDecoder {
            source,
            code: 0,
            range: u32::MAX,
            primed: false,
        }
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    fn prime(&mut self) -> Result<(), CoderError> {
        // The first byte is the encoder's initial carry slot, which a carry
        // can never reach.
        if self.source.read_byte()? != 0 {
            return Err(CoderError::Corrupt("stream does not start with a zero byte"));
        }
        for _ in 0..4 {
            self.code = (self.code << 8) | self.source.read_byte()? as u32;
        }
        self.primed = true;
        Ok(())
    }

    #[inline(always)]
    pub fn get_bit(&mut self, bin: &mut StatisticBin) -> Result<bool, CoderError> {
        if !self.primed {
            self.prime()?;
        }
        let bound = (self.range >> PROB_BITS) * bin.p_zero_fixed();
        let bit = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.source.read_byte()? as u32;
        }
        bin.record(bit);
        Ok(bit)
    }
}
