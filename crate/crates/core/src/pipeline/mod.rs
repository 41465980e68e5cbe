//! End-to-end compression and decompression.
//!
//! Compression parses the JPEG, splits its MCU rows into thread segments,
//! codes each segment with its own model, writes the container and then
//! decodes it again before reporting success. A chunked variant cuts the file
//! at arbitrary byte offsets into independently decodable containers.

mod decode;
mod verify;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use decode::{
    decompress, decompress_bytes, memory_allowance, model_memory, working_memory, DecodeError,
    DecodeReport, DecompressOptions,
};
pub use verify::{breakdown, check_container, verify, Breakdown, ComponentSize, VerifyReport};

use crate::container::{write_container, HeaderFlag, HeaderSection, SegmentInfo, MAX_SEGMENTS};
use crate::jpeg::{parse_header, parse_jpeg, row_states, JpegError, ParsedJpeg, RowState};
use crate::model::{CostTally, Encoder, ModelOptions, SegmentCoder};

/// Default cap on coefficient memory while encoding.
pub const DEFAULT_MEM_LIMIT_ENCODE: usize = 178 << 20;
/// Default cap on row buffers and side data while decoding, beyond the models.
pub const DEFAULT_MEM_LIMIT_DECODE: usize = 24 << 20;
/// Default chunk size for [`compress_chunked`].
pub const DEFAULT_CHUNK_SIZE: usize = 4 << 20;
/// Smallest chunk size [`compress_chunked`] accepts.
pub const MIN_CHUNK_SIZE: usize = 64 << 10;

/// Outcome of compressing one file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Success,
    Progressive,
    UnsupportedJpeg,
    NotAnImage,
    FourColorCmyk,
    MemLimitDecode,
    MemLimitEncode,
    ChromaSubsampleBig,
    AcValuesOutOfRange,
    RoundtripFailed,
    Timeout,
}

impl Status {
    pub const ALL: [Status; 11] = [
        Status::Success,
        Status::Progressive,
        Status::UnsupportedJpeg,
        Status::NotAnImage,
        Status::FourColorCmyk,
        Status::MemLimitDecode,
        Status::MemLimitEncode,
        Status::ChromaSubsampleBig,
        Status::AcValuesOutOfRange,
        Status::RoundtripFailed,
        Status::Timeout,
    ];

    /// Process exit code for this status.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Progressive => 10,
            Status::UnsupportedJpeg => 11,
            Status::NotAnImage => 12,
            Status::FourColorCmyk => 13,
            Status::MemLimitDecode => 14,
            Status::MemLimitEncode => 15,
            Status::ChromaSubsampleBig => 16,
            Status::AcValuesOutOfRange => 17,
            Status::RoundtripFailed => 18,
            Status::Timeout => 19,
        }
    }

    /// Whether the file was rejected up front as something we do not handle,
    /// as opposed to failing while being handled.
    pub fn is_rejection(self) -> bool {
        matches!(
            self,
            Status::Progressive
                | Status::UnsupportedJpeg
                | Status::NotAnImage
                | Status::FourColorCmyk
                | Status::ChromaSubsampleBig
        )
    }
}

impl From<&JpegError> for Status {
    fn from(err: &JpegError) -> Self {
        match err {
            JpegError::Progressive => Status::Progressive,
            JpegError::FourColorCmyk => Status::FourColorCmyk,
            JpegError::ChromaSubsampleBig => Status::ChromaSubsampleBig,
            JpegError::NotAnImage(_) => Status::NotAnImage,
            JpegError::AcValuesOutOfRange => Status::AcValuesOutOfRange,
            JpegError::Unsupported(_) | JpegError::TruncatedScan | JpegError::CorruptScan(_) => {
                Status::UnsupportedJpeg
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompressOptions {
    /// Thread segments per container; chosen from the scan size when `None`.
    pub segments: Option<usize>,
    pub mem_limit_encode: usize,
    pub mem_limit_decode: usize,
    pub timeout: Option<Duration>,
    /// Workers for the internal verification decode.
    pub workers: Option<usize>,
}

impl Default for CompressOptions {
    fn default() -> Self {
        CompressOptions {
            segments: None,
            mem_limit_encode: DEFAULT_MEM_LIMIT_ENCODE,
            mem_limit_decode: DEFAULT_MEM_LIMIT_DECODE,
            timeout: None,
            workers: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompressionResult {
    pub status: Status,
    /// The container; present exactly when `status` is `Success`.
    pub output: Option<Vec<u8>>,
    pub input_size: usize,
    /// Model cost of the coded streams by coefficient class.
    pub tally: CostTally,
    pub segments: usize,
}

impl CompressionResult {
    fn failed(status: Status, input_size: usize) -> Self {
        CompressionResult {
            status,
            output: None,
            input_size,
            tally: CostTally::default(),
            segments: 0,
        }
    }

    /// Output size over input size.
    pub fn ratio(&self) -> Option<f64> {
        self.output
            .as_ref()
            .map(|o| o.len() as f64 / self.input_size.max(1) as f64)
    }
}

/// Segment count for a range of `scan_bytes` bytes of entropy-coded data.
pub fn segment_policy(scan_bytes: usize) -> usize {
    match scan_bytes {
        n if n < 128 << 10 => 1,
        n if n < 512 << 10 => 2,
        n if n < 2 << 20 => 4,
        _ => 8,
    }
}

/// Coefficient memory the encoder needs for a file, from its header alone.
pub fn encode_memory(bytes: &[u8]) -> Result<usize, JpegError> {
    let header = parse_header(bytes)?;
    Ok(header.total_blocks() * std::mem::size_of::<crate::jpeg::QuantizedBlock>())
}

struct Deadline(Option<Instant>);

impl Deadline {
    fn new(timeout: Option<Duration>) -> Self {
        Deadline(timeout.map(|t| Instant::now() + t))
    }

    fn check(&self) -> Result<(), Status> {
        match self.0 {
            Some(d) if Instant::now() >= d => Err(Status::Timeout),
            _ => Ok(()),
        }
    }
}

/// A parsed file with the writer state at every MCU row.
struct Analysis<'a> {
    bytes: &'a [u8],
    parsed: ParsedJpeg,
    states: Vec<RowState>,
    /// File offset where the scan ends.
    scan_end: usize,
}

impl<'a> Analysis<'a> {
    fn new(bytes: &'a [u8], options: &CompressOptions) -> Result<Self, Status> {
        let header = parse_header(bytes).map_err(|e| Status::from(&e))?;
        let planes = header.total_blocks() * std::mem::size_of::<crate::jpeg::QuantizedBlock>();
        if planes > options.mem_limit_encode {
            return Err(Status::MemLimitEncode);
        }
        let parsed = parse_jpeg(bytes).map_err(|e| Status::from(&e))?;
        let (scan, states) = row_states(&parsed.header, &parsed.channels, parsed.pad_bit, parsed.rst_count)
            .map_err(|_| Status::RoundtripFailed)?;
        let start = parsed.header.header_len;
        let scan_end = start + parsed.scan_len;
        if bytes[start..scan_end] != scan[..] {
            return Err(Status::RoundtripFailed);
        }
        Ok(Analysis {
            bytes,
            parsed,
            states,
            scan_end,
        })
    }

    /// File offset at which MCU row `row` starts; the scan end past the last row.
    fn row_offset(&self, row: usize) -> usize {
        match self.states.get(row) {
            Some(s) => self.parsed.header.header_len + s.bytes_written,
            None => self.scan_end,
        }
    }
}

/// One segment of a planned container.
#[derive(Debug, Clone, Copy)]
struct SegmentPlan {
    start_row: usize,
    /// Rows to encode; the decoder stops once `output_size` bytes are out.
    end_row: usize,
    output_size: usize,
}

/// Layout of the container covering file bytes `start..end`.
#[derive(Debug, Clone)]
struct RangePlan {
    start: usize,
    end: usize,
    flag: HeaderFlag,
    prepend: (usize, usize),
    segments: Vec<SegmentPlan>,
    append: (usize, usize),
}

fn plan_range(a: &Analysis<'_>, start: usize, end: usize, segments: Option<usize>) -> RangePlan {
    let header_len = a.parsed.header.header_len;
    let mcus_y = a.parsed.header.mcus_y;
    let rows: Vec<usize> = (0..mcus_y)
        .filter(|&r| (start..end).contains(&a.row_offset(r)))
        .collect();
    let Some(&first) = rows.first() else {
        return RangePlan {
            start,
            end,
            flag: HeaderFlag::Skipped,
            prepend: (start, end),
            segments: Vec::new(),
            append: (end, end),
        };
    };
    let flag = if start == 0 {
        HeaderFlag::Emitted
    } else {
        HeaderFlag::Skipped
    };
    let prepend = if start == 0 {
        (header_len, header_len)
    } else {
        (start, a.row_offset(first))
    };
    let scan_stop = end.min(a.scan_end);
    let span = scan_stop - a.row_offset(first);
    let wanted = segments
        .unwrap_or_else(|| segment_policy(span))
        .clamp(1, MAX_SEGMENTS);

    let mut starts = vec![first];
    for j in 1..wanted {
        let target = a.row_offset(first) + span * j / wanted;
        if let Some(&r) = rows.iter().find(|&&r| a.row_offset(r) >= target) {
            if r > *starts.last().unwrap() {
                starts.push(r);
            }
        }
    }
    let mut plans = Vec::with_capacity(starts.len());
    for (i, &s) in starts.iter().enumerate() {
        let (end_row, stop) = match starts.get(i + 1) {
            Some(&next) => (next, a.row_offset(next)),
            None => {
                let end_row = (s + 1..=mcus_y)
                    .find(|&r| a.row_offset(r) >= scan_stop)
                    .unwrap_or(mcus_y);
                (end_row, scan_stop)
            }
        };
        plans.push(SegmentPlan {
            start_row: s,
            end_row,
            output_size: stop - a.row_offset(s),
        });
    }
    RangePlan {
        start,
        end,
        flag,
        prepend,
        segments: plans,
        append: (scan_stop.max(start), end),
    }
}

fn encode_segment(a: &Analysis<'_>, plan: SegmentPlan, deadline: &Deadline) -> Result<(Vec<u8>, CostTally), Status> {
    let header = &a.parsed.header;
    let mut coder = Encoder::new();
    let mut segment = SegmentCoder::new(header, ModelOptions::default(), plan.start_row);
    for _ in plan.start_row..plan.end_row {
        deadline.check()?;
        segment
            .code_mcu_row(&mut coder, Some(&a.parsed.channels))
            .map_err(|_| Status::RoundtripFailed)?;
    }
    coder.finish().map_err(|_| Status::RoundtripFailed)
}

#[cfg(feature = "parallel")]
fn encode_segments(a: &Analysis<'_>, plans: &[SegmentPlan], deadline: &Deadline) -> Vec<Result<(Vec<u8>, CostTally), Status>> {
    use rayon::prelude::*;
    plans.par_iter().map(|&p| encode_segment(a, p, deadline)).collect()
}

#[cfg(not(feature = "parallel"))]
fn encode_segments(a: &Analysis<'_>, plans: &[SegmentPlan], deadline: &Deadline) -> Vec<Result<(Vec<u8>, CostTally), Status>> {
    plans.iter().map(|&p| encode_segment(a, p, deadline)).collect()
}

/// Encode and serialize one planned range.
fn write_range(a: &Analysis<'_>, plan: &RangePlan, deadline: &Deadline) -> Result<(Vec<u8>, CostTally), Status> {
    let header = &a.parsed.header;
    let mut tally = CostTally::default();
    let mut streams = Vec::with_capacity(plan.segments.len());
    for result in encode_segments(a, &plan.segments, deadline) {
        let (stream, t) = result?;
        tally.add(&t);
        streams.push(stream);
    }
    let segments = plan
        .segments
        .iter()
        .map(|s| {
            let handover = a.states[s.start_row].handover;
            SegmentInfo {
                start_row: s.start_row as u16,
                output_size: s.output_size as u32,
                handover: handover.word(),
                dc: handover.prev_dc,
            }
        })
        .collect();
    let section = HeaderSection {
        jpeg_header: a.bytes[..header.header_len].to_vec(),
        pad_byte: if a.parsed.pad_bit == 1 { 0xFF } else { 0x00 },
        segments,
        rst_count: a.parsed.rst_count,
        blocks_per_channel: header
            .components
            .iter()
            .map(|c| (c.width_blocks * c.height_blocks) as u32)
            .collect(),
        prepend: a.bytes[plan.prepend.0..plan.prepend.1].to_vec(),
        append: a.bytes[plan.append.0..plan.append.1].to_vec(),
    };
    let container = write_container(plan.flag, (plan.end - plan.start) as u64, &section, &streams)
        .map_err(|_| Status::UnsupportedJpeg)?;
    Ok((container, tally))
}

fn decode_options(options: &CompressOptions) -> DecompressOptions {
    DecompressOptions {
        workers: options.workers,
        mem_limit_decode: options.mem_limit_decode,
    }
}

/// Decode `container` and compare with `expected`.
fn roundtrip(container: &[u8], expected: &[u8], options: &CompressOptions) -> Result<(), Status> {
    match decompress_bytes(container, &decode_options(options)) {
        Ok(out) if out == expected => Ok(()),
        Err(DecodeError::MemLimitDecode { .. }) => Err(Status::MemLimitDecode),
        _ => Err(Status::RoundtripFailed),
    }
}

/// Compress a whole JPEG file into one container.
pub fn compress(bytes: &[u8], options: &CompressOptions) -> CompressionResult {
    let deadline = Deadline::new(options.timeout);
    let run = || -> Result<CompressionResult, Status> {
        let a = Analysis::new(bytes, options)?;
        deadline.check()?;
        let plan = plan_range(&a, 0, bytes.len(), options.segments);
        check_decode_memory(&a, plan.segments.len(), options.mem_limit_decode)?;
        let (container, tally) = write_range(&a, &plan, &deadline)?;
        deadline.check()?;
        roundtrip(&container, bytes, options)?;
        deadline.check()?;
        Ok(CompressionResult {
            status: Status::Success,
            output: Some(container),
            input_size: bytes.len(),
            tally,
            segments: plan.segments.len(),
        })
    };
    run().unwrap_or_else(|status| CompressionResult::failed(status, bytes.len()))
}

fn check_decode_memory(a: &Analysis<'_>, segments: usize, limit: usize) -> Result<(), Status> {
    let header = &a.parsed.header;
    if decode::working_memory(header, segments) > decode::memory_allowance(segments, limit) {
        Err(Status::MemLimitDecode)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ChunkedResult {
    pub status: Status,
    /// One container per chunk, in file order; empty unless `Success`.
    pub containers: Vec<Vec<u8>>,
    /// File offsets where chunks start.
    pub boundaries: Vec<usize>,
}

/// Chunk start offsets for a file of `len` bytes.
pub fn chunk_boundaries(len: usize, chunk_size: usize) -> Vec<usize> {
    (0..len.max(1)).step_by(chunk_size.max(1)).collect()
}

/// Compress a file as independently decodable chunks of `chunk_size` bytes.
pub fn compress_chunked(bytes: &[u8], chunk_size: usize, options: &CompressOptions) -> ChunkedResult {
    let chunk_size = chunk_size.max(MIN_CHUNK_SIZE);
    if chunk_size >= bytes.len() {
        let result = compress(bytes, options);
        return ChunkedResult {
            status: result.status,
            containers: result.output.into_iter().collect(),
            boundaries: vec![0],
        };
    }
    compress_chunks_at(bytes, &chunk_boundaries(bytes.len(), chunk_size), options)
}

/// Compress a file as chunks starting at the given offsets. The first offset
/// must be 0 and the rest strictly increasing and inside the file.
pub fn compress_chunks_at(bytes: &[u8], boundaries: &[usize], options: &CompressOptions) -> ChunkedResult {
    let deadline = Deadline::new(options.timeout);
    let run = || -> Result<Vec<Vec<u8>>, Status> {
        let valid = boundaries.first() == Some(&0)
            && boundaries.windows(2).all(|w| w[0] < w[1])
            && boundaries.last().is_some_and(|&l| l < bytes.len().max(1));
        assert!(valid, "chunk boundaries must start at 0 and increase within the file");
        let a = Analysis::new(bytes, options)?;
        let mut containers = Vec::with_capacity(boundaries.len());
        for (i, &start) in boundaries.iter().enumerate() {
            let end = boundaries.get(i + 1).copied().unwrap_or(bytes.len());
            let plan = plan_range(&a, start, end, options.segments);
            check_decode_memory(&a, plan.segments.len(), options.mem_limit_decode)?;
            let (container, _) = write_range(&a, &plan, &deadline)?;
            roundtrip(&container, &bytes[start..end], options)?;
            deadline.check()?;
            containers.push(container);
        }
        Ok(containers)
    };
    match run() {
        Ok(containers) => ChunkedResult {
            status: Status::Success,
            containers,
            boundaries: boundaries.to_vec(),
        },
        Err(status) => ChunkedResult {
            status,
            containers: Vec::new(),
            boundaries: boundaries.to_vec(),
        },
    }
}

/// Decode one chunk container into its byte range of the original file.
pub fn decompress_chunk(container: &[u8], options: &DecompressOptions) -> Result<Vec<u8>, DecodeError> {
    decompress_bytes(container, options)
}

#[cfg(test)]
mod tests;
