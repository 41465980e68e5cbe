//! Huffman decoding of a sequential scan into coefficient planes.

use super::huffman::HuffmanDecoder;
use super::{CoefficientPlane, JpegError, JpegHeader, COEFFICIENT_LIMIT, ZIGZAG};

/// Output of [`decode_scan`].
#[derive(Debug, Clone)]
pub struct DecodedScan {
    /// One plane per frame component; DC values are absolute.
    pub planes: Vec<CoefficientPlane>,
    pub rst_count: u32,
    pub pad_bit: u8,
    /// Bytes of entropy-coded data (stuffing and RST markers included)
    /// starting at the header end.
    pub scan_len: usize,
}

/// Entropy-coded bytes with stuffing and restart markers removed.
struct Destuffed {
    data: Vec<u8>,
    /// Data offsets of bytes that were followed by a stuffed zero.
    stuffed: Vec<usize>,
    /// (data offset, marker byte) of restart markers.
    markers: Vec<(usize, u8)>,
}

fn destuff(raw: &[u8]) -> Destuffed {
    let mut data = Vec::with_capacity(raw.len());
    let mut stuffed = Vec::new();
    let mut markers = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let byte = raw[i];
        if byte != 0xFF {
            data.push(byte);
            i += 1;
            continue;
        }
        match raw.get(i + 1) {
            Some(0x00) => {
                stuffed.push(data.len());
                data.push(0xFF);
                i += 2;
            }
            Some(&m @ 0xD0..=0xD7) => {
                markers.push((data.len(), m));
                i += 2;
            }
            _ => break,
        }
    }
    Destuffed {
        data,
        stuffed,
        markers,
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    /// Next 16 bits, zero-filled past the end of the data.
    #[inline]
    fn peek16(&self) -> u32 {
        let byte = self.pos >> 3;
        let window = if byte + 4 <= self.data.len() {
            u32::from_be_bytes([
                self.data[byte],
                self.data[byte + 1],
                self.data[byte + 2],
                self.data[byte + 3],
            ])
        } else {
            let mut bytes = [0u8; 4];
            for (k, b) in bytes.iter_mut().enumerate() {
                *b = self.data.get(byte + k).copied().unwrap_or(0);
            }
            u32::from_be_bytes(bytes)
        };
        (window << (self.pos & 7)) >> 16
    }

    #[inline]
    fn read(&mut self, bits: u32) -> u32 {
        debug_assert!(bits <= 16);
        if bits == 0 {
            return 0;
        }
        let value = self.peek16() >> (16 - bits);
        self.pos += bits as usize;
        value
    }

    #[inline]
    fn symbol(&mut self, table: &HuffmanDecoder) -> Result<u8, JpegError> {
        let (symbol, len) = table
            .decode(self.peek16())
            .ok_or(JpegError::CorruptScan("invalid huffman code"))?;
        self.pos += len as usize;
        Ok(symbol)
    }

    fn overrun(&self) -> bool {
        self.pos > self.data.len() * 8
    }
}

#[inline]
fn extend(bits: u32, size: u32) -> i32 {
    if size == 0 {
        0
    } else if bits < 1 << (size - 1) {
        bits as i32 - (1 << size) + 1
    } else {
        bits as i32
    }
}

#[derive(Default)]
struct PadObservation {
    ones: bool,
    zeros: bool,
}

impl PadObservation {
    fn observe(&mut self, data: &[u8], from_bit: usize, to_bit: usize) {
        for bit in from_bit..to_bit {
            let byte = data.get(bit >> 3).copied().unwrap_or(0);
            if byte >> (7 - (bit & 7)) & 1 == 1 {
                self.ones = true;
            } else {
                self.zeros = true;
            }
        }
    }

    fn pad_bit(&self) -> u8 {
        // libjpeg pads with ones; use that when the file never reveals its choice.
        if self.zeros && !self.ones {
            0
        } else {
            1
        }
    }
}

/// Decode the scan that starts at `header.header_len`.
///
/// Restart markers are consumed at the interval the header declares until the
/// first one that is missing; after that the scan is read as if it had none,
/// and `rst_count` records how many were present.
pub fn decode_scan(header: &JpegHeader, bytes: &[u8]) -> Result<DecodedScan, JpegError> {
    let raw = &bytes[header.header_len.min(bytes.len())..];
    let destuffed = destuff(raw);
    let mut planes: Vec<CoefficientPlane> = header
        .components
        .iter()
        .map(|c| CoefficientPlane::new(c.width_blocks, c.height_blocks, c.h, c.v))
        .collect();
    let tables: Vec<(HuffmanDecoder, HuffmanDecoder)> = header
        .components
        .iter()
        .map(|c| {
            (
                HuffmanDecoder::new(header.dc_tables[c.dc_table as usize].as_ref().unwrap()),
                HuffmanDecoder::new(header.ac_tables[c.ac_table as usize].as_ref().unwrap()),
            )
        })
        .collect();

    let mut reader = BitReader {
        data: &destuffed.data,
        pos: 0,
    };
    let mut pad = PadObservation::default();
    let mut prev_dc = [0i32; 4];
    let mut rst_count = 0u32;
    let mut restarts_stopped = false;
    let mut next_marker = 0usize;
    let interval = header.restart_interval as usize;

    for mcu in 0..header.mcu_count() {
        if interval > 0 && mcu > 0 && mcu % interval == 0 && !restarts_stopped {
            let aligned = reader.pos.div_ceil(8) * 8;
            let expected = 0xD0 + ((mcu / interval - 1) & 7) as u8;
            if destuffed.markers.get(next_marker) == Some(&(aligned / 8, expected)) {
                pad.observe(&destuffed.data, reader.pos, aligned);
                reader.pos = aligned;
                next_marker += 1;
                rst_count += 1;
                prev_dc = [0; 4];
            } else {
                restarts_stopped = true;
            }
        }
        if reader.overrun() {
            return Err(JpegError::TruncatedScan);
        }
        let (mx, my) = (mcu % header.mcus_x, mcu / header.mcus_x);
        for &ci in &header.scan_order {
            let comp = &header.components[ci];
            let (dc_table, ac_table) = &tables[ci];
            for by in 0..comp.mcu_v {
                for bx in 0..comp.mcu_h {
                    let (row, col) = (my * comp.mcu_v + by, mx * comp.mcu_h + bx);
                    let block = planes[ci].block_mut(row, col);
                    let size = reader.symbol(dc_table)? as u32;
                    if size > 11 {
                        return Err(JpegError::CorruptScan("DC category above 11"));
                    }
                    let dc = prev_dc[ci] + extend(reader.read(size), size);
                    if dc.abs() >= COEFFICIENT_LIMIT {
                        return Err(JpegError::AcValuesOutOfRange);
                    }
                    prev_dc[ci] = dc;
                    block.coeffs[0] = dc as i16;
                    let mut k = 1;
                    while k < 64 {
                        let rs = reader.symbol(ac_table)?;
                        let (run, size) = ((rs >> 4) as usize, (rs & 0x0F) as u32);
                        if size == 0 {
                            if run == 15 {
                                k += 16;
                                continue;
                            }
                            break;
                        }
                        k += run;
                        if k > 63 {
                            return Err(JpegError::CorruptScan("AC run past end of block"));
                        }
                        let value = extend(reader.read(size), size);
                        if value.abs() >= COEFFICIENT_LIMIT {
                            return Err(JpegError::AcValuesOutOfRange);
                        }
                        block.coeffs[ZIGZAG[k]] = value as i16;
                        k += 1;
                    }
                    if k > 64 {
                        return Err(JpegError::CorruptScan("zero run past end of block"));
                    }
                }
            }
        }
    }
    if reader.overrun() {
        return Err(JpegError::TruncatedScan);
    }
    let end_bit = reader.pos.div_ceil(8) * 8;
    pad.observe(&destuffed.data, reader.pos, end_bit);
    let data_end = end_bit / 8;
    let stuffed = destuffed.stuffed.partition_point(|&p| p < data_end);
    let markers = destuffed.markers.partition_point(|&(p, _)| p < data_end);
    Ok(DecodedScan {
        planes,
        rst_count,
        pad_bit: pad.pad_bit(),
        scan_len: data_end + stuffed + 2 * markers,
    })
}
