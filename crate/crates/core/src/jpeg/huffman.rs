//! Canonical Huffman tables as declared by DHT segments.

use super::JpegError;

const LOOKUP_BITS: u32 = 9;

/// Code lengths and symbols exactly as carried by a DHT segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanSpec {
    pub counts: [u8; 16],
    pub symbols: Vec<u8>,
}

impl HuffmanSpec {
    pub fn new(counts: [u8; 16], symbols: Vec<u8>) -> Result<Self, JpegError> {
        let total: usize = counts.iter().map(|&c| c as usize).sum();
        if total != symbols.len() || total > 256 {
            return Err(JpegError::Unsupported("malformed huffman table".into()));
        }
        // Canonical codes must fit their lengths.
        let mut code = 0u32;
        for (len, &count) in counts.iter().enumerate() {
            code += count as u32;
            if code > 1 << (len + 1) {
                return Err(JpegError::Unsupported("over-subscribed huffman table".into()));
            }
            code <<= 1;
        }
        Ok(HuffmanSpec { counts, symbols })
    }

    /// (code, length) for every symbol in table order.
    fn codes(&self) -> Vec<(u8, u16, u8)> {
        let mut out = Vec::with_capacity(self.symbols.len());
        let mut code = 0u16;
        let mut k = 0;
        for len in 1..=16u8 {
            for _ in 0..self.counts[len as usize - 1] {
                out.push((self.symbols[k], code, len));
                code = code.wrapping_add(1);
                k += 1;
            }
            code = code.wrapping_shl(1);
        }
        out
    }
}

/// Decoding side: a direct lookup for short codes plus canonical limits for long ones.
#[derive(Debug, Clone)]
pub struct HuffmanDecoder {
    /// (symbol, length) indexed by the next `LOOKUP_BITS` bits; length 0 means "long code".
    lookup: Vec<(u8, u8)>,
    max_code: [i32; 17],
    val_offset: [i32; 17],
    symbols: Vec<u8>,
}

impl HuffmanDecoder {
    pub fn new(spec: &HuffmanSpec) -> Self {
        let mut lookup = vec![(0u8, 0u8); 1 << LOOKUP_BITS];
        for (symbol, code, len) in spec.codes() {
            if len as u32 <= LOOKUP_BITS {
                let shift = LOOKUP_BITS - len as u32;
                let base = (code as usize) << shift;
                for entry in &mut lookup[base..base + (1 << shift)] {
                    *entry = (symbol, len);
                }
            }
        }
        let mut max_code = [-1i32; 17];
        let mut val_offset = [0i32; 17];
        let mut code = 0i32;
        let mut k = 0i32;
        for len in 1..=16 {
            let count = spec.counts[len - 1] as i32;
            if count > 0 {
                val_offset[len] = k - code;
                code += count;
                k += count;
                max_code[len] = code - 1;
            }
            code <<= 1;
        }
        HuffmanDecoder {
            lookup,
            max_code,
            val_offset,
            symbols: spec.symbols.clone(),
        }
    }

    /// Decode one symbol from the 16 most significant bits of `peek`.
    /// Returns (symbol, code length) or `None` for a bit pattern with no code.
    #[inline]
    pub fn decode(&self, peek: u32) -> Option<(u8, u32)> {
        let (symbol, len) = self.lookup[(peek >> (16 - LOOKUP_BITS)) as usize];
        if len != 0 {
            return Some((symbol, len as u32));
        }
        for len in (LOOKUP_BITS as usize + 1)..=16 {
            let code = (peek >> (16 - len)) as i32;
            if code <= self.max_code[len] {
                let index = (code + self.val_offset[len]) as usize;
                return self.symbols.get(index).map(|&s| (s, len as u32));
            }
        }
        None
    }
}

/// Encoding side: code and length per symbol value.
#[derive(Debug, Clone)]
pub struct HuffmanEncoder {
    codes: [(u16, u8); 256],
}

impl HuffmanEncoder {
    pub fn new(spec: &HuffmanSpec) -> Self {
        let mut codes = [(0u16, 0u8); 256];
        for (symbol, code, len) in spec.codes() {
            // The first definition of a duplicated symbol is the one a decoder can reach first.
            if codes[symbol as usize].1 == 0 {
                codes[symbol as usize] = (code, len);
            }
        }
        HuffmanEncoder { codes }
    }

    #[inline]
    pub fn code(&self, symbol: u8) -> Option<(u32, u32)> {
        let (code, len) = self.codes[symbol as usize];
        (len != 0).then_some((code as u32, len as u32))
    }
}
