//! Huffman re-encoding of coefficient planes, resumable at MCU boundaries.

use super::huffman::HuffmanEncoder;
use super::{CoefficientPlane, HuffmanHandover, JpegError, JpegHeader, QuantizedBlock, ZIGZAG};

/// Random access to blocks by (component, block row, block column).
pub trait BlockLookup {
    fn lookup(&self, component: usize, row: usize, col: usize) -> &QuantizedBlock;
}

impl BlockLookup for [CoefficientPlane] {
    fn lookup(&self, component: usize, row: usize, col: usize) -> &QuantizedBlock {
        self[component].block(row, col)
    }
}

impl BlockLookup for Vec<CoefficientPlane> {
    fn lookup(&self, component: usize, row: usize, col: usize) -> &QuantizedBlock {
        self[component].block(row, col)
    }
}

/// Writer state at the start of an MCU row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowState {
    /// Complete bytes (stuffing and markers included) written before this row.
    pub bytes_written: usize,
    pub handover: HuffmanHandover,
}

pub struct ScanWriter<'h> {
    header: &'h JpegHeader,
    tables: Vec<(HuffmanEncoder, HuffmanEncoder)>,
    out: Vec<u8>,
    drained: usize,
    acc: u64,
    nbits: u32,
    pad_bit: u8,
    rst_count: u32,
    prev_dc: [i32; 4],
}

impl<'h> ScanWriter<'h> {
    /// A writer positioned at the start of the scan.
    pub fn new(header: &'h JpegHeader, pad_bit: u8, rst_count: u32) -> Self {
        Self::resume(header, pad_bit, rst_count, HuffmanHandover::default())
    }

    /// A writer that continues from a handover taken at some MCU start.
    pub fn resume(
        header: &'h JpegHeader,
        pad_bit: u8,
        rst_count: u32,
        handover: HuffmanHandover,
    ) -> Self {
        let tables = header
            .components
            .iter()
            .map(|c| {
                (
                    HuffmanEncoder::new(header.dc_tables[c.dc_table as usize].as_ref().unwrap()),
                    HuffmanEncoder::new(header.ac_tables[c.ac_table as usize].as_ref().unwrap()),
                )
            })
            .collect();
        let bits = handover.bit_offset as u32;
        ScanWriter {
            header,
            tables,
            out: Vec::new(),
            drained: 0,
            acc: if bits == 0 {
                0
            } else {
                (handover.partial_byte >> (8 - bits)) as u64
            },
            nbits: bits,
            pad_bit: pad_bit & 1,
            rst_count,
            prev_dc: handover.prev_dc.map(i32::from),
        }
    }

    #[inline]
    fn put(&mut self, code: u32, len: u32) {
        self.acc = self.acc << len | code as u64;
        self.nbits += len;
        if self.nbits >= 32 {
            self.flush_bytes();
        }
    }

    fn flush_bytes(&mut self) {
        while self.nbits >= 8 {
            self.nbits -= 8;
            let byte = (self.acc >> self.nbits) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    fn pad(&mut self) {
        let fill = (8 - self.nbits % 8) % 8;
        if fill > 0 {
            let ones = if self.pad_bit == 1 { (1 << fill) - 1 } else { 0 };
            self.put(ones, fill);
        }
        self.flush_bytes();
    }

    /// State before MCU `mcu` (and before any restart marker it carries).
    pub fn snapshot(&mut self) -> RowState {
        self.flush_bytes();
        let partial = if self.nbits == 0 {
            0
        } else {
            (self.acc << (8 - self.nbits)) as u8
        };
        let mut prev_dc = [0i16; 4];
        for (d, &s) in prev_dc.iter_mut().zip(&self.prev_dc) {
            *d = s as i16;
        }
        RowState {
            bytes_written: self.drained + self.out.len(),
            handover: HuffmanHandover {
                bit_offset: self.nbits as u8,
                partial_byte: partial,
                prev_dc,
            },
        }
    }

    /// Encode MCU number `mcu`, including the restart marker that precedes it.
    pub fn write_mcu<B: BlockLookup + ?Sized>(
        &mut self,
        mcu: usize,
        blocks: &B,
    ) -> Result<(), JpegError> {
        let header = self.header;
        let interval = header.restart_interval as usize;
        if interval > 0 && mcu > 0 && mcu % interval == 0 && mcu / interval <= self.rst_count as usize
        {
            self.pad();
            self.out.push(0xFF);
            self.out.push(0xD0 + ((mcu / interval - 1) & 7) as u8);
            self.prev_dc = [0; 4];
        }
        let (mx, my) = (mcu % header.mcus_x, mcu / header.mcus_x);
        for &ci in &header.scan_order {
            let comp = &header.components[ci];
            for by in 0..comp.mcu_v {
                for bx in 0..comp.mcu_h {
                    let block = blocks.lookup(ci, my * comp.mcu_v + by, mx * comp.mcu_h + bx);
                    self.write_block(ci, block)?;
                }
            }
        }
        Ok(())
    }

    fn write_block(&mut self, ci: usize, block: &QuantizedBlock) -> Result<(), JpegError> {
        let missing = JpegError::CorruptScan("symbol missing from huffman table");
        let dc = block.coeffs[0] as i32;
        let diff = dc - self.prev_dc[ci];
        self.prev_dc[ci] = dc;
        let (size, bits) = magnitude(diff);
        let (code, len) = self.tables[ci].0.code(size as u8).ok_or(missing.clone())?;
        self.put(code, len);
        self.put(bits, size);

        let mut run = 0u32;
        for &natural in &ZIGZAG[1..] {
            let value = block.coeffs[natural] as i32;
            if value == 0 {
                run += 1;
                continue;
            }
            while run >= 16 {
                let (code, len) = self.tables[ci].1.code(0xF0).ok_or(missing.clone())?;
                self.put(code, len);
                run -= 16;
            }
            let (size, bits) = magnitude(value);
            let (code, len) = self.tables[ci]
                .1
                .code((run << 4 | size) as u8)
                .ok_or(missing.clone())?;
            self.put(code, len);
            self.put(bits, size);
            run = 0;
        }
        if run > 0 {
            let (code, len) = self.tables[ci].1.code(0x00).ok_or(missing)?;
            self.put(code, len);
        }
        Ok(())
    }

    /// Take the complete bytes produced so far.
    pub fn drain(&mut self) -> Vec<u8> {
        self.flush_bytes();
        self.drained += self.out.len();
        std::mem::take(&mut self.out)
    }

    /// Pad the final partial byte and return the remaining output.
    pub fn finish(mut self) -> Vec<u8> {
        self.finish_in_place()
    }

    /// As [`ScanWriter::finish`], leaving the writer usable for inspection.
    pub fn finish_in_place(&mut self) -> Vec<u8> {
        self.pad();
        self.drain()
    }
}

/// JPEG magnitude category and its additional bits.
#[inline]
fn magnitude(value: i32) -> (u32, u32) {
    let size = 32 - value.unsigned_abs().leading_zeros();
    let bits = if value < 0 { value - 1 } else { value } as u32 & ((1u32 << size) - 1);
    (size, bits)
}

/// Encode MCUs `start..end_mcu`, where `start` is 0 or an explicit handover.
/// A range that ends at the last MCU is padded; otherwise only complete bytes
/// are returned and the trailing bits belong to the next range's handover.
pub fn encode_scan(
    header: &JpegHeader,
    planes: &[CoefficientPlane],
    pad_bit: u8,
    rst_count: u32,
    start: Option<(usize, HuffmanHandover)>,
    end_mcu: usize,
) -> Result<Vec<u8>, JpegError> {
    let (first, handover) = start.unwrap_or_default();
    let mut writer = ScanWriter::resume(header, pad_bit, rst_count, handover);
    for mcu in first..end_mcu {
        writer.write_mcu(mcu, planes)?;
    }
    if end_mcu >= header.mcu_count() {
        Ok(writer.finish())
    } else {
        Ok(writer.drain())
    }
}

/// One Huffman code word of a scan together with its extra bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanSymbol {
    /// Position of the first code bit, counted in the scan with stuffing and
    /// restart markers removed but padding kept.
    pub bit: u64,
    pub code_len: u32,
    pub extra_len: u32,
    /// 0 for interior AC and end of block, 1 for edge AC, 2 for DC. A zero
    /// run takes the class of the coefficient that follows it.
    pub class: usize,
}

/// Visit every code word of the scan in bitstream order.
pub fn scan_symbols(
    header: &JpegHeader,
    planes: &[CoefficientPlane],
    rst_count: u32,
    mut visit: impl FnMut(ScanSymbol),
) -> Result<(), JpegError> {
    let missing = || JpegError::CorruptScan("symbol missing from huffman table");
    let tables: Vec<(HuffmanEncoder, HuffmanEncoder)> = header
        .components
        .iter()
        .map(|c| {
            (
                HuffmanEncoder::new(header.dc_tables[c.dc_table as usize].as_ref().unwrap()),
                HuffmanEncoder::new(header.ac_tables[c.ac_table as usize].as_ref().unwrap()),
            )
        })
        .collect();
    let interval = header.restart_interval as usize;
    let mut pos = 0u64;
    macro_rules! emit {
        ($code_len:expr, $extra_len:expr, $class:expr) => {{
            let (code_len, extra_len) = ($code_len, $extra_len);
            visit(ScanSymbol {
                bit: pos,
                code_len,
                extra_len,
                class: $class,
            });
            pos += (code_len + extra_len) as u64;
        }};
    }
    let mut prev_dc = [0i32; 4];
    let mut zero_runs = Vec::with_capacity(3);
    for mcu in 0..header.mcu_count() {
        if interval > 0 && mcu > 0 && mcu % interval == 0 && mcu / interval <= rst_count as usize {
            prev_dc = [0; 4];
            pos = pos.div_ceil(8) * 8;
        }
        let (mx, my) = (mcu % header.mcus_x, mcu / header.mcus_x);
        for &ci in &header.scan_order {
            let comp = &header.components[ci];
            let (dc_table, ac_table) = &tables[ci];
            for by in 0..comp.mcu_v {
                for bx in 0..comp.mcu_h {
                    let block = planes[ci].block(my * comp.mcu_v + by, mx * comp.mcu_h + bx);
                    let dc = block.coeffs[0] as i32;
                    let (size, _) = magnitude(dc - prev_dc[ci]);
                    prev_dc[ci] = dc;
                    emit!(dc_table.code(size as u8).ok_or_else(missing)?.1, size, 2);
                    let mut run = 0u32;
                    for &natural in &ZIGZAG[1..] {
                        let value = block.coeffs[natural] as i32;
                        if value == 0 {
                            run += 1;
                            continue;
                        }
                        while run >= 16 {
                            zero_runs.push(ac_table.code(0xF0).ok_or_else(missing)?.1);
                            run -= 16;
                        }
                        let (size, _) = magnitude(value);
                        let len = ac_table.code((run << 4 | size) as u8).ok_or_else(missing)?.1;
                        let class = usize::from(natural % 8 == 0 || natural < 8);
                        for zrl in zero_runs.drain(..) {
                            emit!(zrl, 0, class);
                        }
                        emit!(len, size, class);
                        run = 0;
                    }
                    if run > 0 {
                        emit!(ac_table.code(0x00).ok_or_else(missing)?.1, 0, 0);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Huffman-coded bits of the scan attributed to interior (7x7) AC, edge AC
/// and DC coefficients, classed as in [`ScanSymbol`]. Stuffing, padding and
/// restart markers are not attributed.
pub fn component_bits(
    header: &JpegHeader,
    planes: &[CoefficientPlane],
    rst_count: u32,
) -> Result<[u64; 3], JpegError> {
    let mut bits = [0u64; 3];
    scan_symbols(header, planes, rst_count, |s| {
        bits[s.class] += (s.code_len + s.extra_len) as u64;
    })?;
    Ok(bits)
}

/// Encode the whole scan and record the writer state at every MCU row start.
pub fn row_states(
    header: &JpegHeader,
    planes: &[CoefficientPlane],
    pad_bit: u8,
    rst_count: u32,
) -> Result<(Vec<u8>, Vec<RowState>), JpegError> {
    let mut writer = ScanWriter::new(header, pad_bit, rst_count);
    let mut states = Vec::with_capacity(header.mcus_y);
    for mcu in 0..header.mcu_count() {
        if mcu % header.mcus_x == 0 {
            states.push(writer.snapshot());
        }
        writer.write_mcu(mcu, planes)?;
    }
    Ok((writer.finish(), states))
}
