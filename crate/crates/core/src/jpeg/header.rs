//! Marker-level parsing of everything that precedes the entropy-coded scan.

use super::huffman::HuffmanSpec;
use super::{JpegError, ZIGZAG};

/// One frame component together with the tables its scan uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: u8,
    /// Horizontal / vertical sampling factor as declared in SOF.
    pub h: u8,
    pub v: u8,
    pub quant_table: u8,
    pub dc_table: u8,
    pub ac_table: u8,
    /// Block-grid extent of this component in the scan (MCU padded).
    pub width_blocks: usize,
    pub height_blocks: usize,
    /// Blocks this component contributes to one MCU.
    pub mcu_h: usize,
    pub mcu_v: usize,
}

/// Parsed JPEG header up to and including the SOS segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JpegHeader {
    pub width: u16,
    pub height: u16,
    pub components: Vec<Component>,
    /// Frame component indices in scan (MCU interleave) order.
    pub scan_order: Vec<usize>,
    /// Quantization tables in natural (raster) order.
    pub quant_tables: [Option<[u16; 64]>; 4],
    pub dc_tables: [Option<HuffmanSpec>; 4],
    pub ac_tables: [Option<HuffmanSpec>; 4],
    pub restart_interval: u16,
    pub mcus_x: usize,
    pub mcus_y: usize,
    /// Byte length of the header, i.e. the offset where the scan data starts.
    pub header_len: usize,
}

impl JpegHeader {
    pub fn mcu_count(&self) -> usize {
        self.mcus_x * self.mcus_y
    }

    pub fn quant_for(&self, component: usize) -> &[u16; 64] {
        self.quant_tables[self.components[component].quant_table as usize]
            .as_ref()
            .expect("quant table presence is checked while parsing")
    }

    pub fn total_blocks(&self) -> usize {
        self.components
            .iter()
            .map(|c| c.width_blocks * c.height_blocks)
            .sum()
    }
}

struct SegmentReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl SegmentReader<'_> {
    fn u8(&mut self) -> Result<u8, JpegError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| JpegError::Unsupported("segment shorter than its contents".into()))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, JpegError> {
        Ok((self.u8()? as u16) << 8 | self.u8()? as u16)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

struct Frame {
    width: u16,
    height: u16,
    components: Vec<(u8, u8, u8, u8)>,
}

/// Parse the header of a baseline JPEG.
///
/// Classification-relevant conditions are reported as distinct error variants:
/// progressive frames, 4-channel frames, oversized sampling factors, and
/// everything else we do not handle as `Unsupported`.
pub fn parse_header(bytes: &[u8]) -> Result<JpegHeader, JpegError> {
    if bytes.len() < 4 || bytes[0] != 0xFF || bytes[1] != 0xD8 {
        return Err(JpegError::NotAnImage("missing start-of-image marker".into()));
    }
    let mut pos = 2;
    let mut frame: Option<Frame> = None;
    let mut quant_tables: [Option<[u16; 64]>; 4] = [None; 4];
    let mut dc_tables: [Option<HuffmanSpec>; 4] = Default::default();
    let mut ac_tables: [Option<HuffmanSpec>; 4] = Default::default();
    let mut restart_interval = 0u16;

    loop {
        if pos >= bytes.len() {
            return Err(JpegError::NotAnImage("no scan before end of file".into()));
        }
        if bytes[pos] != 0xFF {
            return Err(JpegError::NotAnImage(format!("expected marker at offset {pos}")));
        }
        while pos < bytes.len() && bytes[pos] == 0xFF {
            pos += 1;
        }
        let Some(&marker) = bytes.get(pos) else {
            return Err(JpegError::NotAnImage("file ends inside a marker".into()));
        };
        pos += 1;
        match marker {
            0xD9 => return Err(JpegError::NotAnImage("image has no scan".into())),
            0xD8 => return Err(JpegError::NotAnImage("nested start-of-image".into())),
            0x01 | 0xD0..=0xD7 => continue,
            _ => {}
        }
        if pos + 2 > bytes.len() {
            return Err(JpegError::NotAnImage("truncated marker segment".into()));
        }
        let length = (bytes[pos] as usize) << 8 | bytes[pos + 1] as usize;
        if length < 2 || pos + length > bytes.len() {
            return Err(JpegError::NotAnImage("truncated marker segment".into()));
        }
        let mut seg = SegmentReader {
            bytes: &bytes[pos + 2..pos + length],
            pos: 0,
        };
        let segment_end = pos + length;
        match marker {
            0xC0 | 0xC1 => {
                if frame.is_some() {
                    return Err(JpegError::Unsupported("multiple frames".into()));
                }
                frame = Some(parse_frame(&mut seg)?);
            }
            0xC2 => return Err(JpegError::Progressive),
            0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                // Report 4-channel frames first: that is the more specific verdict.
                if seg.bytes.len() >= 6 && seg.bytes[5] == 4 {
                    return Err(JpegError::FourColorCmyk);
                }
                return Err(JpegError::Unsupported(format!("frame type 0x{marker:02X}")));
            }
            0xCC => return Err(JpegError::Unsupported("arithmetic coding conditioning".into())),
            0xC4 => {
                while seg.remaining() > 0 {
                    let tc_th = seg.u8()?;
                    let (class, id) = (tc_th >> 4, (tc_th & 0x0F) as usize);
                    if class > 1 || id > 3 {
                        return Err(JpegError::Unsupported("bad huffman table id".into()));
                    }
                    let mut counts = [0u8; 16];
                    for c in counts.iter_mut() {
                        *c = seg.u8()?;
                    }
                    let total: usize = counts.iter().map(|&c| c as usize).sum();
                    let mut symbols = Vec::with_capacity(total);
                    for _ in 0..total {
                        symbols.push(seg.u8()?);
                    }
                    let spec = HuffmanSpec::new(counts, symbols)?;
                    if class == 0 {
                        dc_tables[id] = Some(spec);
                    } else {
                        ac_tables[id] = Some(spec);
                    }
                }
            }
            0xDB => {
                while seg.remaining() > 0 {
                    let pq_tq = seg.u8()?;
                    let (precision, id) = (pq_tq >> 4, (pq_tq & 0x0F) as usize);
                    if precision > 1 || id > 3 {
                        return Err(JpegError::Unsupported("bad quantization table".into()));
                    }
                    let mut table = [0u16; 64];
                    for &natural in ZIGZAG.iter() {
                        let q = if precision == 0 {
                            seg.u8()? as u16
                        } else {
                            seg.u16()?
                        };
                        if q == 0 {
                            return Err(JpegError::Unsupported("zero quantizer".into()));
                        }
                        table[natural] = q;
                    }
                    quant_tables[id] = Some(table);
                }
            }
            0xDD => {
                restart_interval = seg.u16()?;
            }
            0xDA => {
                let frame = frame
                    .ok_or_else(|| JpegError::NotAnImage("scan without frame header".into()))?;
                return build_header(
                    frame,
                    &mut seg,
                    quant_tables,
                    dc_tables,
                    ac_tables,
                    restart_interval,
                    segment_end,
                );
            }
            _ => {}
        }
        pos = segment_end;
    }
}

fn parse_frame(seg: &mut SegmentReader<'_>) -> Result<Frame, JpegError> {
    let precision = seg.u8()?;
    let height = seg.u16()?;
    let width = seg.u16()?;
    let count = seg.u8()?;
    if count == 4 {
        return Err(JpegError::FourColorCmyk);
    }
    if precision != 8 {
        return Err(JpegError::Unsupported(format!("{precision}-bit samples")));
    }
    if width == 0 {
        return Err(JpegError::NotAnImage("zero-width frame".into()));
    }
    if height == 0 {
        return Err(JpegError::Unsupported("height defined by DNL".into()));
    }
    if count != 1 && count != 3 {
        return Err(JpegError::Unsupported(format!("{count} components")));
    }
    let mut components = Vec::<(u8, u8, u8, u8)>::with_capacity(count as usize);
    for _ in 0..count {
        let id = seg.u8()?;
        let hv = seg.u8()?;
        let tq = seg.u8()?;
        let (h, v) = (hv >> 4, hv & 0x0F);
        if h == 0 || v == 0 || h > 4 || v > 4 || tq > 3 {
            return Err(JpegError::Unsupported("bad component parameters".into()));
        }
        if h > 2 || v > 2 {
            return Err(JpegError::ChromaSubsampleBig);
        }
        if components.iter().any(|&(other, ..)| other == id) {
            return Err(JpegError::Unsupported("duplicate component id".into()));
        }
        components.push((id, h, v, tq));
    }
    Ok(Frame {
        width,
        height,
        components,
    })
}

fn build_header(
    frame: Frame,
    seg: &mut SegmentReader<'_>,
    quant_tables: [Option<[u16; 64]>; 4],
    dc_tables: [Option<HuffmanSpec>; 4],
    ac_tables: [Option<HuffmanSpec>; 4],
    restart_interval: u16,
    header_len: usize,
) -> Result<JpegHeader, JpegError> {
    let count = seg.u8()? as usize;
    if count != frame.components.len() {
        return Err(JpegError::Unsupported("non-interleaved multi-scan image".into()));
    }
    let mut scan_order = Vec::with_capacity(count);
    let mut selectors = vec![(0u8, 0u8); frame.components.len()];
    for _ in 0..count {
        let id = seg.u8()?;
        let tables = seg.u8()?;
        let index = frame
            .components
            .iter()
            .position(|c| c.0 == id)
            .ok_or_else(|| JpegError::Unsupported("scan references unknown component".into()))?;
        if scan_order.contains(&index) {
            return Err(JpegError::Unsupported("component repeated in scan".into()));
        }
        let (dc, ac) = (tables >> 4, tables & 0x0F);
        if dc > 3 || ac > 3 || dc_tables[dc as usize].is_none() || ac_tables[ac as usize].is_none() {
            return Err(JpegError::Unsupported("scan references missing huffman table".into()));
        }
        scan_order.push(index);
        selectors[index] = (dc, ac);
    }
    let (ss, se, a) = (seg.u8()?, seg.u8()?, seg.u8()?);
    if ss != 0 || se != 63 || a != 0 {
        return Err(JpegError::Unsupported("spectral selection in sequential scan".into()));
    }

    let (width, height) = (frame.width as usize, frame.height as usize);
    let hmax = frame.components.iter().map(|c| c.1).max().unwrap_or(1) as usize;
    let vmax = frame.components.iter().map(|c| c.2).max().unwrap_or(1) as usize;
    let single = frame.components.len() == 1;
    let (mcus_x, mcus_y) = if single {
        (width.div_ceil(8), height.div_ceil(8))
    } else {
        (width.div_ceil(8 * hmax), height.div_ceil(8 * vmax))
    };
    let mut components = Vec::with_capacity(frame.components.len());
    for (index, &(id, h, v, tq)) in frame.components.iter().enumerate() {
        if quant_tables[tq as usize].is_none() {
            return Err(JpegError::Unsupported("component uses undefined quant table".into()));
        }
        let (mcu_h, mcu_v) = if single { (1, 1) } else { (h as usize, v as usize) };
        components.push(Component {
            id,
            h,
            v,
            quant_table: tq,
            dc_table: selectors[index].0,
            ac_table: selectors[index].1,
            width_blocks: mcus_x * mcu_h,
            height_blocks: mcus_y * mcu_v,
            mcu_h,
            mcu_v,
        });
    }
    Ok(JpegHeader {
        width: frame.width,
        height: frame.height,
        components,
        scan_order,
        quant_tables,
        dc_tables,
        ac_tables,
        restart_interval,
        mcus_x,
        mcus_y,
        header_len,
    })
}
