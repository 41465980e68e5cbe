//! The compressed container: a fixed preamble, a zlib-compressed header
//! section, and the segments' arithmetic-coded streams cut into sections and
//! interleaved.

use std::io::{self, Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use thiserror::Error;

use crate::jpeg::parse_header;

pub const MAGIC: [u8; 2] = [0xCF, 0x84];
pub const VERSION: u8 = 0x01;
/// Bytes before the zlib section.
pub const PREAMBLE_LEN: usize = 28;
/// Payload size the writer cuts each segment's stream into.
pub const SECTION_SIZE: usize = 4096;
/// Most segments a section id can address.
pub const MAX_SEGMENTS: usize = 16;
const SEGMENT_INFO_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("corrupt header section: {0}")]
    CorruptHeader(String),
    #[error("container is truncated")]
    TruncatedContainer,
    #[error("section for segment {id} but only {segments} segments")]
    BadSegmentId { id: usize, segments: usize },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("{0} does not fit the format")]
    TooLarge(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Whether the stored JPEG header is part of the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeaderFlag {
    /// The header is emitted before the scan (`'Y'`).
    Emitted,
    /// The header is stored for its tables only (`'Z'`).
    Skipped,
}

impl HeaderFlag {
    pub fn byte(self) -> u8 {
        match self {
            HeaderFlag::Emitted => b'Y',
            HeaderFlag::Skipped => b'Z',
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            b'Y' => Some(HeaderFlag::Emitted),
            b'Z' => Some(HeaderFlag::Skipped),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContainerHeader {
    pub flag: HeaderFlag,
    pub num_segments: u32,
    pub build_id: [u8; 12],
    pub output_size: u32,
    pub zlib_size: u32,
}

/// Identifies the writer of a container.
pub fn build_id() -> [u8; 12] {
    let mut id = [0u8; 12];
    let text = format!("lj-{}", env!("CARGO_PKG_VERSION"));
    let n = text.len().min(12);
    id[..n].copy_from_slice(&text.as_bytes()[..n]);
    id
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SegmentInfo {
    /// First MCU row; the segment ends where the next one starts.
    pub start_row: u16,
    /// JPEG bytes this segment produces.
    pub output_size: u32,
    /// Packed [`crate::jpeg::HuffmanHandover`] bit offset and partial byte.
    pub handover: u16,
    /// Previous DC per channel at the segment start.
    pub dc: [i16; 4],
}

/// Contents of the zlib-compressed section.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeaderSection {
    /// SOI through SOS, verbatim.
    pub jpeg_header: Vec<u8>,
    /// 0x00 or 0xFF.
    pub pad_byte: u8,
    pub segments: Vec<SegmentInfo>,
    pub rst_count: u32,
    pub blocks_per_channel: Vec<u32>,
    pub prepend: Vec<u8>,
    pub append: Vec<u8>,
}

impl HeaderSection {
    pub fn pad_bit(&self) -> u8 {
        self.pad_byte & 1
    }

    fn serialize(&self) -> Result<Vec<u8>, ContainerError> {
        let mut out = Vec::with_capacity(self.jpeg_header.len() + 64);
        put_len(&mut out, self.jpeg_header.len(), "jpeg header")?;
        out.extend_from_slice(&self.jpeg_header);
        out.push(self.pad_byte);
        for s in &self.segments {
            out.extend_from_slice(&s.start_row.to_le_bytes());
            out.extend_from_slice(&s.output_size.to_le_bytes());
            out.extend_from_slice(&s.handover.to_le_bytes());
            for dc in s.dc {
                out.extend_from_slice(&dc.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.rst_count.to_le_bytes());
        for &b in &self.blocks_per_channel {
            out.extend_from_slice(&b.to_le_bytes());
        }
        put_len(&mut out, self.prepend.len(), "prepended data")?;
        out.extend_from_slice(&self.prepend);
        put_len(&mut out, self.append.len(), "appended data")?;
        out.extend_from_slice(&self.append);
        Ok(out)
    }

    fn parse(bytes: &[u8], num_segments: usize) -> Result<Self, ContainerError> {
        let mut r = Cursor { bytes, pos: 0 };
        let header_len = r.u32()? as usize;
        let jpeg_header = r.take(header_len)?.to_vec();
        let channels = parse_header(&jpeg_header)
            .map_err(|e| ContainerError::CorruptHeader(format!("stored JPEG header: {e}")))?
            .components
            .len();
        let pad_byte = r.u8()?;
        if pad_byte != 0x00 && pad_byte != 0xFF {
            return Err(ContainerError::CorruptHeader(format!("pad byte {pad_byte:#04x}")));
        }
        let mut segments = Vec::with_capacity(num_segments);
        for _ in 0..num_segments {
            let raw = r.take(SEGMENT_INFO_LEN)?;
            let mut dc = [0i16; 4];
            for (i, d) in dc.iter_mut().enumerate() {
                *d = i16::from_le_bytes([raw[8 + 2 * i], raw[9 + 2 * i]]);
            }
            segments.push(SegmentInfo {
                start_row: u16::from_le_bytes([raw[0], raw[1]]),
                output_size: u32::from_le_bytes(raw[2..6].try_into().unwrap()),
                handover: u16::from_le_bytes([raw[6], raw[7]]),
                dc,
            });
        }
        let rst_count = r.u32()?;
        let blocks_per_channel = (0..channels).map(|_| r.u32()).collect::<Result<_, _>>()?;
        let n = r.u32()? as usize;
        let prepend = r.take(n)?.to_vec();
        let n = r.u32()? as usize;
        let append = r.take(n)?.to_vec();
        if r.pos != bytes.len() {
            return Err(ContainerError::CorruptHeader("trailing bytes in header section".into()));
        }
        Ok(HeaderSection {
            jpeg_header,
            pad_byte,
            segments,
            rst_count,
            blocks_per_channel,
            prepend,
            append,
        })
    }
}

fn put_len(out: &mut Vec<u8>, len: usize, what: &'static str) -> Result<(), ContainerError> {
    let len = u32::try_from(len).map_err(|_| ContainerError::TooLarge(what))?;
    out.extend_from_slice(&len.to_le_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ContainerError::CorruptHeader("header section too short".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Length class of a coded section, stored in the high nibble of its id byte.
fn section_class(len: usize) -> u8 {
    match len {
        256 => 0,
        4096 => 1,
        65536 => 2,
        _ => 3,
    }
}

/// Append one coded section.
pub fn write_section(out: &mut Vec<u8>, segment: usize, payload: &[u8]) -> Result<(), ContainerError> {
    if segment >= MAX_SEGMENTS {
        return Err(ContainerError::TooLarge("segment id"));
    }
    let class = section_class(payload.len());
    out.push(class << 4 | segment as u8);
    if class == 3 {
        let len = u16::try_from(payload.len()).map_err(|_| ContainerError::TooLarge("section length"))?;
        out.extend_from_slice(&len.to_le_bytes());
    }
    out.extend_from_slice(payload);
    Ok(())
}

/// Serialize a container. Each stream is cut into [`SECTION_SIZE`] sections
/// and the sections are emitted round-robin across segments.
pub fn write_container(
    flag: HeaderFlag,
    output_size: u64,
    section: &HeaderSection,
    streams: &[Vec<u8>],
) -> Result<Vec<u8>, ContainerError> {
    if streams.len() != section.segments.len() {
        return Err(ContainerError::CorruptHeader(format!(
            "{} streams for {} segments",
            streams.len(),
            section.segments.len()
        )));
    }
    if streams.len() > MAX_SEGMENTS {
        return Err(ContainerError::TooLarge("segment count"));
    }
    let output_size = u32::try_from(output_size).map_err(|_| ContainerError::TooLarge("output size"))?;
    let mut zlib = ZlibEncoder::new(Vec::new(), Compression::best());
    zlib.write_all(&section.serialize()?)?;
    let zlib = zlib.finish()?;
    let zlib_size = u32::try_from(zlib.len()).map_err(|_| ContainerError::TooLarge("header section"))?;

    let payload: usize = streams.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(PREAMBLE_LEN + zlib.len() + payload + payload / SECTION_SIZE * 3 + 64);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(flag.byte());
    out.extend_from_slice(&(streams.len() as u32).to_le_bytes());
    out.extend_from_slice(&build_id());
    out.extend_from_slice(&output_size.to_le_bytes());
    out.extend_from_slice(&zlib_size.to_le_bytes());
    out.extend_from_slice(&zlib);

    let mut offsets = vec![0usize; streams.len()];
    loop {
        let mut progressed = false;
        for (id, stream) in streams.iter().enumerate() {
            let start = offsets[id];
            if start < stream.len() {
                let end = (start + SECTION_SIZE).min(stream.len());
                write_section(&mut out, id, &stream[start..end])?;
                offsets[id] = end;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    Ok(out)
}

/// Incremental reader: the preamble and header section first, then coded
/// sections one at a time.
pub struct Demuxer<R> {
    input: R,
    consumed: u64,
    segments: usize,
}

impl<R: Read> Demuxer<R> {
    /// Read and validate everything up to the first coded section.
    pub fn open(mut input: R) -> Result<(Self, ContainerHeader, HeaderSection), ContainerError> {
        let mut pre = [0u8; PREAMBLE_LEN];
        let got = read_full(&mut input, &mut pre)?;
        if got >= 2 && pre[..2] != MAGIC || got == 1 && pre[0] != MAGIC[0] {
            return Err(ContainerError::BadMagic);
        }
        if got < PREAMBLE_LEN {
            return Err(ContainerError::TruncatedContainer);
        }
        if pre[2] != VERSION {
            return Err(ContainerError::UnsupportedVersion(pre[2]));
        }
        let flag = HeaderFlag::from_byte(pre[3])
            .ok_or_else(|| ContainerError::UnsupportedFeature(format!("header flag {:#04x}", pre[3])))?;
        let u32_at = |i: usize| u32::from_le_bytes(pre[i..i + 4].try_into().unwrap());
        let header = ContainerHeader {
            flag,
            num_segments: u32_at(4),
            build_id: pre[8..20].try_into().unwrap(),
            output_size: u32_at(20),
            zlib_size: u32_at(24),
        };
        let segments = header.num_segments as usize;
        if segments > MAX_SEGMENTS {
            return Err(ContainerError::CorruptHeader(format!("{segments} segments")));
        }
        let mut zlib = Vec::new();
        let got = (&mut input).take(header.zlib_size as u64).read_to_end(&mut zlib)?;
        if got < header.zlib_size as usize {
            return Err(ContainerError::TruncatedContainer);
        }
        let mut raw = Vec::new();
        ZlibDecoder::new(&zlib[..])
            .read_to_end(&mut raw)
            .map_err(|e| ContainerError::CorruptHeader(format!("inflate: {e}")))?;
        let section = HeaderSection::parse(&raw, segments)?;
        let demuxer = Demuxer {
            input,
            consumed: (PREAMBLE_LEN + zlib.len()) as u64,
            segments,
        };
        Ok((demuxer, header, section))
    }

    /// Container bytes read so far.
    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    /// The next coded section as (segment, payload), or `None` at the end.
    pub fn next_section(&mut self) -> Result<Option<(usize, Vec<u8>)>, ContainerError> {
        let mut id = [0u8; 1];
        if read_full(&mut self.input, &mut id)? == 0 {
            return Ok(None);
        }
        self.consumed += 1;
        let segment = (id[0] & 0x0F) as usize;
        if segment >= self.segments {
            return Err(ContainerError::BadSegmentId {
                id: segment,
                segments: self.segments,
            });
        }
        let len = match id[0] >> 4 {
            0 => 256,
            1 => 4096,
            2 => 65536,
            3 => {
                let mut len = [0u8; 2];
                if read_full(&mut self.input, &mut len)? < 2 {
                    return Err(ContainerError::TruncatedContainer);
                }
                self.consumed += 2;
                u16::from_le_bytes(len) as usize
            }
            c => return Err(ContainerError::UnsupportedFeature(format!("section length class {c}"))),
        };
        let mut payload = vec![0u8; len];
        if read_full(&mut self.input, &mut payload)? < len {
            return Err(ContainerError::TruncatedContainer);
        }
        self.consumed += len as u64;
        Ok(Some((segment, payload)))
    }
}

fn read_full<R: Read>(input: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// A fully read container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub header: ContainerHeader,
    pub section: HeaderSection,
    /// Each segment's coded stream, reassembled from its sections.
    pub streams: Vec<Vec<u8>>,
}

pub fn read_container(bytes: &[u8]) -> Result<Container, ContainerError> {
    let (mut demuxer, header, section) = Demuxer::open(bytes)?;
    let mut streams = vec![Vec::new(); header.num_segments as usize];
    while let Some((id, payload)) = demuxer.next_section()? {
        streams[id].extend_from_slice(&payload);
    }
    Ok(Container {
        header,
        section,
        streams,
    })
}

#[cfg(test)]
mod tests;
