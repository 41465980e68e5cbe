//! Baseline JPEG parsing and bit-exact re-emission.
//!
//! A file is split into three byte ranges: the header (SOI through the SOS
//! segment, kept verbatim), the entropy-coded scan (decoded into quantized
//! coefficient planes), and a trailer (EOI plus anything after it, kept
//! verbatim). [`ScanWriter`] re-encodes coefficients and can start or stop at
//! any MCU given a [`HuffmanHandover`].

mod header;
mod huffman;
mod scan_decode;
mod scan_encode;

use thiserror::Error;

pub use header::{parse_header, Component, JpegHeader};
pub use huffman::{HuffmanDecoder, HuffmanEncoder, HuffmanSpec};
pub use scan_decode::{decode_scan, DecodedScan};
pub use scan_encode::{
    component_bits, encode_scan, row_states, scan_symbols, BlockLookup, RowState, ScanSymbol,
    ScanWriter,
};

/// Natural (raster) index of the k-th coefficient in zigzag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Exclusive bound on the magnitude of any quantized coefficient we accept.
pub const COEFFICIENT_LIMIT: i32 = 2048;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JpegError {
    #[error("progressive JPEG")]
    Progressive,
    #[error("4-component (CMYK) JPEG")]
    FourColorCmyk,
    #[error("chroma subsampling factor larger than 2x2")]
    ChromaSubsampleBig,
    #[error("unsupported JPEG: {0}")]
    Unsupported(String),
    #[error("not an image: {0}")]
    NotAnImage(String),
    #[error("scan data ends before the last MCU")]
    TruncatedScan,
    #[error("corrupt scan data: {0}")]
    CorruptScan(&'static str),
    #[error("coefficient magnitude out of range")]
    AcValuesOutOfRange,
}

/// Result of inspecting a file without decoding its scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Verdict {
    Accept,
    Progressive,
    UnsupportedJpeg,
    NotAnImage,
    FourColorCmyk,
    ChromaSubsampleBig,
}

impl From<&JpegError> for Verdict {
    fn from(err: &JpegError) -> Self {
        match err {
            JpegError::Progressive => Verdict::Progressive,
            JpegError::FourColorCmyk => Verdict::FourColorCmyk,
            JpegError::ChromaSubsampleBig => Verdict::ChromaSubsampleBig,
            JpegError::NotAnImage(_) => Verdict::NotAnImage,
            _ => Verdict::UnsupportedJpeg,
        }
    }
}

/// Classify a file from its header alone.
pub fn classify(bytes: &[u8]) -> Verdict {
    match parse_header(bytes) {
        Ok(_) => Verdict::Accept,
        Err(err) => Verdict::from(&err),
    }
}

/// 64 quantized DCT coefficients of one block in raster order: index `v * 8 + u`
/// where `u` is the horizontal and `v` the vertical frequency. Index 0 is DC.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedBlock {
    pub coeffs: [i16; 64],
}

impl Default for QuantizedBlock {
    fn default() -> Self {
        QuantizedBlock { coeffs: [0; 64] }
    }
}

impl std::fmt::Debug for QuantizedBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.coeffs.chunks(8)).finish()
    }
}

impl QuantizedBlock {
    pub fn dc(&self) -> i16 {
        self.coeffs[0]
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> i16 {
        self.coeffs[v * 8 + u]
    }

    /// Nonzero count over the interior (u >= 1, v >= 1) coefficients.
    pub fn nonzero_7x7(&self) -> u8 {
        (1..8)
            .flat_map(|v| (1..8).map(move |u| (u, v)))
            .filter(|&(u, v)| self.at(u, v) != 0)
            .count() as u8
    }

    pub fn transposed(&self) -> QuantizedBlock {
        let mut out = QuantizedBlock::default();
        for v in 0..8 {
            for u in 0..8 {
                out.coeffs[u * 8 + v] = self.coeffs[v * 8 + u];
            }
        }
        out
    }
}

/// Block grid of one component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientPlane {
    pub width_blocks: usize,
    pub height_blocks: usize,
    /// Sampling factors as declared in the frame header.
    pub h_samp: u8,
    pub v_samp: u8,
    pub blocks: Vec<QuantizedBlock>,
}

impl CoefficientPlane {
    pub fn new(width_blocks: usize, height_blocks: usize, h_samp: u8, v_samp: u8) -> Self {
        CoefficientPlane {
            width_blocks,
            height_blocks,
            h_samp,
            v_samp,
            blocks: vec![QuantizedBlock::default(); width_blocks * height_blocks],
        }
    }

    #[inline]
    pub fn block(&self, row: usize, col: usize) -> &QuantizedBlock {
        &self.blocks[row * self.width_blocks + col]
    }

    #[inline]
    pub fn block_mut(&mut self, row: usize, col: usize) -> &mut QuantizedBlock {
        &mut self.blocks[row * self.width_blocks + col]
    }
}

/// State a Huffman writer needs to resume at an MCU boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct HuffmanHandover {
    /// Bits already written into `partial_byte` (0..=7).
    pub bit_offset: u8,
    /// Pending bits, MSB aligned; the unused low bits are zero.
    pub partial_byte: u8,
    /// Previous DC value per component, in frame order.
    pub prev_dc: [i16; 4],
}

impl HuffmanHandover {
    /// Packed form: bit offset in the low 3 bits, partial byte in the high 8.
    pub fn word(&self) -> u16 {
        (self.partial_byte as u16) << 8 | self.bit_offset as u16
    }

    pub fn from_word(word: u16, prev_dc: [i16; 4]) -> Option<Self> {
        let bit_offset = (word & 0x07) as u8;
        let partial_byte = (word >> 8) as u8;
        let valid = word & 0xF8 == 0 && partial_byte & (0xFFu8 >> bit_offset) == 0;
        valid.then_some(HuffmanHandover {
            bit_offset,
            partial_byte,
            prev_dc,
        })
    }
}

/// A fully decoded baseline JPEG with everything needed to rebuild it.
#[derive(Debug, Clone)]
pub struct ParsedJpeg {
    /// SOI through the end of the SOS segment, verbatim.
    pub header_bytes: Vec<u8>,
    pub header: JpegHeader,
    /// One plane per frame component.
    pub channels: Vec<CoefficientPlane>,
    /// RST markers actually present in the scan.
    pub rst_count: u32,
    /// Fill bit used to pad partial bytes (0 or 1).
    pub pad_bit: u8,
    /// Bytes preceding SOI. Always empty for files parsed directly.
    pub prepend_garbage: Vec<u8>,
    /// Bytes between the end of the entropy-coded data and the end of the EOI marker.
    pub scan_tail: Vec<u8>,
    /// Bytes after the EOI marker.
    pub append_garbage: Vec<u8>,
    /// Length in bytes of the entropy-coded scan as it appears in the file.
    pub scan_len: usize,
}

impl ParsedJpeg {
    pub fn quant_tables(&self) -> Vec<[u16; 64]> {
        (0..self.channels.len())
            .map(|c| *self.header.quant_for(c))
            .collect()
    }

    /// Everything following the entropy-coded scan.
    pub fn trailer(&self) -> Vec<u8> {
        let mut out = self.scan_tail.clone();
        out.extend_from_slice(&self.append_garbage);
        out
    }

    /// Rebuild the original file.
    pub fn reconstruct(&self) -> Result<Vec<u8>, JpegError> {
        let scan = encode_scan(
            &self.header,
            &self.channels,
            self.pad_bit,
            self.rst_count,
            None,
            self.header.mcu_count(),
        )?;
        let mut out = Vec::with_capacity(self.header_bytes.len() + scan.len() + 2);
        out.extend_from_slice(&self.prepend_garbage);
        out.extend_from_slice(&self.header_bytes);
        out.extend_from_slice(&scan);
        out.extend_from_slice(&self.scan_tail);
        out.extend_from_slice(&self.append_garbage);
        Ok(out)
    }
}

/// Parse a baseline JPEG into coefficients and verbatim side data.
pub fn parse_jpeg(bytes: &[u8]) -> Result<ParsedJpeg, JpegError> {
    let header = parse_header(bytes)?;
    let scan = decode_scan(&header, bytes)?;
    let trailer = &bytes[header.header_len + scan.scan_len..];
    let split = trailer
        .windows(2)
        .position(|w| w == [0xFF, 0xD9])
        .map(|p| p + 2)
        .unwrap_or(trailer.len());
    Ok(ParsedJpeg {
        header_bytes: bytes[..header.header_len].to_vec(),
        channels: scan.planes,
        rst_count: scan.rst_count,
        pad_bit: scan.pad_bit,
        prepend_garbage: Vec::new(),
        scan_tail: trailer[..split].to_vec(),
        append_garbage: trailer[split..].to_vec(),
        scan_len: scan.scan_len,
        header,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_is_a_permutation() {
        let mut seen = [false; 64];
        for &i in &ZIGZAG {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }

    #[test]
    fn block_partition_counts() {
        let mut interior = 0;
        let mut row = 0;
        let mut column = 0;
        for v in 0..8 {
            for u in 0..8 {
                match (u, v) {
                    (0, 0) => {}
                    (_, 0) => row += 1,
                    (0, _) => column += 1,
                    _ => interior += 1,
                }
            }
        }
        assert_eq!((interior, row, column), (49, 7, 7));
    }

    #[test]
    fn handover_word_packing() {
        let h = HuffmanHandover {
            bit_offset: 5,
            partial_byte: 0b1011_0000,
            prev_dc: [3, -4, 0, 0],
        };
        assert_eq!(h.word(), 0xB005);
        assert_eq!(HuffmanHandover::from_word(h.word(), h.prev_dc), Some(h));
        // Stray bits below the offset are rejected.
        assert_eq!(HuffmanHandover::from_word(0xB101, [0; 4]), None);
        // Offset zero implies an empty partial byte.
        assert_eq!(HuffmanHandover::from_word(0x0100, [0; 4]), None);
    }

    #[test]
    fn classify_rejects_random_bytes_after_soi() {
        let mut bytes = vec![0xFF, 0xD8];
        bytes.extend((0..500u32).map(|i| (i.wrapping_mul(2654435761) >> 13) as u8 | 1));
        assert_eq!(classify(&bytes), Verdict::NotAnImage);
        assert_eq!(classify(b"GIF89a"), Verdict::NotAnImage);
        assert_eq!(classify(&[]), Verdict::NotAnImage);
    }
}
