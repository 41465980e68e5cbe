//! Streaming decompression.
//!
//! Coded sections are pulled from the input only when some segment runs out
//! of bytes, and each decoded MCU row is re-encoded and released at once.
//! Segments after the first are buffered until every earlier segment has
//! been written out.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use super::DEFAULT_MEM_LIMIT_DECODE;
use crate::container::{ContainerError, Demuxer, HeaderFlag, HeaderSection};
use crate::jpeg::{parse_header, HuffmanHandover, JpegError, JpegHeader, ScanWriter};
use crate::model::{Decoder, ModelBins, ModelOptions, NeighborInfo, SegmentCoder, TOTAL_BINS};
use crate::range_coder::{ByteSource, CoderError, StatisticBin};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("corrupt coded data: {0}")]
    Corrupt(String),
    #[error("decoding needs {needed} bytes of working memory, limit is {allowed}")]
    MemLimitDecode { needed: usize, allowed: usize },
    #[error("output has {actual} bytes, container promises {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("decoding cancelled")]
    Cancelled,
}

impl From<JpegError> for DecodeError {
    fn from(e: JpegError) -> Self {
        DecodeError::Corrupt(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct DecompressOptions {
    /// Threads decoding segments; all available cores when `None`.
    pub workers: Option<usize>,
    pub mem_limit_decode: usize,
}

impl Default for DecompressOptions {
    fn default() -> Self {
        DecompressOptions {
            workers: None,
            mem_limit_decode: DEFAULT_MEM_LIMIT_DECODE,
        }
    }
}

/// What a decompression consumed and produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeReport {
    pub output_len: u64,
    /// Container bytes read in total.
    pub input_len: u64,
    /// Container bytes read when the first output byte was written.
    pub consumed_at_first_output: Option<u64>,
    /// Container bytes read when the first byte of scan data was written.
    pub consumed_at_first_scan_byte: Option<u64>,
    /// Most block rows resident at once per channel, over all segments.
    pub high_water: Vec<usize>,
    pub segments: usize,
    pub workers: usize,
}

/// Heap and inline size of one segment's model.
pub fn model_memory() -> usize {
    TOTAL_BINS * std::mem::size_of::<StatisticBin>() + std::mem::size_of::<ModelBins>()
}

/// Row buffers and models for decoding `segments` segments at once.
pub fn working_memory(header: &JpegHeader, segments: usize) -> usize {
    let rows: usize = header
        .components
        .iter()
        .map(|c| 2 * c.width_blocks * std::mem::size_of::<NeighborInfo>())
        .sum();
    segments * (rows + model_memory())
}

/// Working memory allowed for `segments` segments under `limit`: the limit
/// itself plus one model per segment.
pub fn memory_allowance(segments: usize, limit: usize) -> usize {
    limit.saturating_add(segments * model_memory())
}

struct Feed<R> {
    demuxer: Demuxer<R>,
    pending: Vec<VecDeque<Vec<u8>>>,
    done: bool,
    error: Option<ContainerError>,
}

struct Shared<R> {
    feed: Mutex<Feed<R>>,
    consumed: AtomicU64,
}

impl<R: Read> Shared<R> {
    /// Next payload for segment `id`, reading sections as needed.
    fn next_payload(&self, id: usize) -> Option<Vec<u8>> {
        let mut feed = self.feed.lock().unwrap();
        loop {
            if let Some(p) = feed.pending[id].pop_front() {
                return Some(p);
            }
            if feed.done {
                return None;
            }
            match feed.demuxer.next_section() {
                Ok(Some((sid, payload))) => feed.pending[sid].push_back(payload),
                Ok(None) => feed.done = true,
                Err(e) => {
                    feed.error = Some(e);
                    feed.done = true;
                }
            }
            self.consumed.store(feed.demuxer.consumed(), Ordering::Relaxed);
        }
    }

    /// Read whatever is left so that a malformed tail is still reported.
    fn drain(&self) -> Result<(), ContainerError> {
        let mut feed = self.feed.lock().unwrap();
        while !feed.done {
            match feed.demuxer.next_section() {
                Ok(Some(_)) => {}
                Ok(None) => feed.done = true,
                Err(e) => {
                    feed.error = Some(e);
                    feed.done = true;
                }
            }
        }
        self.consumed.store(feed.demuxer.consumed(), Ordering::Relaxed);
        feed.error.take().map_or(Ok(()), Err)
    }

    /// Translate a coder failure, preferring the container error behind it.
    fn coder_error(&self, e: CoderError) -> DecodeError {
        match self.feed.lock().unwrap().error.take() {
            Some(c) => DecodeError::Container(c),
            None => DecodeError::Corrupt(e.to_string()),
        }
    }
}

struct SectionSource<'s, R> {
    shared: &'s Shared<R>,
    id: usize,
    buf: Vec<u8>,
    pos: usize,
}

impl<R: Read> ByteSource for SectionSource<'_, R> {
    #[inline]
    fn read_byte(&mut self) -> Result<u8, CoderError> {
        while self.pos >= self.buf.len() {
            self.buf = self
                .shared
                .next_payload(self.id)
                .ok_or(CoderError::UnexpectedEndOfStream)?;
            self.pos = 0;
        }
        self.pos += 1;
        Ok(self.buf[self.pos - 1])
    }
}

/// A validated container ready to decode.
struct Job {
    header: JpegHeader,
    section: HeaderSection,
    flag: HeaderFlag,
    handovers: Vec<HuffmanHandover>,
}

impl Job {
    fn new(flag: HeaderFlag, output_size: u32, section: HeaderSection) -> Result<Self, DecodeError> {
        let corrupt = |m: String| DecodeError::Container(ContainerError::CorruptHeader(m));
        let header = parse_header(&section.jpeg_header).map_err(|e| corrupt(format!("stored JPEG header: {e}")))?;
        let blocks: Vec<u32> = header
            .components
            .iter()
            .map(|c| (c.width_blocks * c.height_blocks) as u32)
            .collect();
        if blocks != section.blocks_per_channel {
            return Err(corrupt("block counts disagree with the JPEG header".into()));
        }
        let starts: Vec<usize> = section.segments.iter().map(|s| s.start_row as usize).collect();
        if starts.windows(2).any(|w| w[0] >= w[1]) || starts.last().is_some_and(|&s| s >= header.mcus_y) {
            return Err(corrupt("segment rows out of order".into()));
        }
        let handovers = section
            .segments
            .iter()
            .map(|s| HuffmanHandover::from_word(s.handover, s.dc))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| corrupt("invalid handover word".into()))?;
        let emitted_header = match flag {
            HeaderFlag::Emitted => section.jpeg_header.len() as u64,
            HeaderFlag::Skipped => 0,
        };
        let total = section.prepend.len() as u64
            + emitted_header
            + section.segments.iter().map(|s| s.output_size as u64).sum::<u64>()
            + section.append.len() as u64;
        if total != output_size as u64 {
            return Err(DecodeError::SizeMismatch {
                expected: output_size as u64,
                actual: total,
            });
        }
        Ok(Job {
            header,
            section,
            flag,
            handovers,
        })
    }

    /// Decode segment `index`, passing its output to `emit` row by row.
    /// Returns the row-buffer high-water mark per channel.
    fn decode_segment<S: ByteSource>(
        &self,
        index: usize,
        source: S,
        emit: &mut dyn FnMut(&[u8]) -> Result<(), DecodeError>,
    ) -> Result<Vec<usize>, CoderOrDecode> {
        let header = &self.header;
        let info = self.section.segments[index];
        let mut coder = Decoder::new(source);
        let mut segment = SegmentCoder::new(header, ModelOptions::default(), info.start_row as usize);
        let mut writer = ScanWriter::resume(
            header,
            self.section.pad_bit(),
            self.section.rst_count,
            self.handovers[index],
        );
        let mut remaining = info.output_size as usize;
        let mut row = info.start_row as usize;
        while remaining > 0 {
            if row >= header.mcus_y {
                return Err(CoderOrDecode::Decode(DecodeError::Corrupt(
                    "segment promises more output than the scan holds".into(),
                )));
            }
            segment.code_mcu_row(&mut coder, None).map_err(CoderOrDecode::Coder)?;
            for mcu in row * header.mcus_x..(row + 1) * header.mcus_x {
                writer
                    .write_mcu(mcu, &segment)
                    .map_err(|e| CoderOrDecode::Decode(e.into()))?;
            }
            row += 1;
            let bytes = if row == header.mcus_y {
                writer.finish_in_place()
            } else {
                writer.drain()
            };
            let n = bytes.len().min(remaining);
            if n > 0 {
                emit(&bytes[..n]).map_err(CoderOrDecode::Decode)?;
            }
            remaining -= n;
        }
        Ok(segment.high_water())
    }
}

enum CoderOrDecode {
    Coder(CoderError),
    Decode(DecodeError),
}

impl CoderOrDecode {
    fn resolve<R: Read>(self, shared: &Shared<R>) -> DecodeError {
        match self {
            CoderOrDecode::Coder(e) => shared.coder_error(e),
            CoderOrDecode::Decode(e) => e,
        }
    }
}

/// Output side: counts bytes and notes how much input had been read when
/// output started.
struct Sink<'w, 'c, W> {
    out: &'w mut W,
    consumed: &'c AtomicU64,
    written: u64,
    first_output: Option<u64>,
    first_scan: Option<u64>,
}

impl<W: Write> Sink<'_, '_, W> {
    fn write(&mut self, bytes: &[u8], scan: bool) -> Result<(), DecodeError> {
        if bytes.is_empty() {
            return Ok(());
        }
        let consumed = self.consumed.load(Ordering::Relaxed);
        self.first_output.get_or_insert(consumed);
        if scan {
            self.first_scan.get_or_insert(consumed);
        }
        self.out.write_all(bytes)?;
        self.written += bytes.len() as u64;
        Ok(())
    }
}

fn merge_high_water(total: &mut [usize], segment: &[usize]) {
    for (t, &s) in total.iter_mut().zip(segment) {
        *t = (*t).max(s);
    }
}

fn worker_count(options: &DecompressOptions, segments: usize) -> usize {
    if cfg!(feature = "parallel") {
        let available = std::thread::available_parallelism().map_or(1, |n| n.get());
        options.workers.unwrap_or(available).clamp(1, segments.max(1))
    } else {
        1
    }
}

/// Decompress a container read from `input`, writing the original bytes to
/// `output` as they become available.
pub fn decompress<R: Read + Send, W: Write>(
    input: R,
    output: &mut W,
    options: &DecompressOptions,
) -> Result<DecodeReport, DecodeError> {
    let (demuxer, container, section) = Demuxer::open(input)?;
    let job = Job::new(container.flag, container.output_size, section)?;
    let segments = job.section.segments.len();
    let needed = working_memory(&job.header, segments);
    let allowed = memory_allowance(segments, options.mem_limit_decode);
    if needed > allowed {
        return Err(DecodeError::MemLimitDecode { needed, allowed });
    }
    let shared = Shared {
        consumed: AtomicU64::new(demuxer.consumed()),
        feed: Mutex::new(Feed {
            demuxer,
            pending: vec![VecDeque::new(); segments],
            done: false,
            error: None,
        }),
    };
    let mut sink = Sink {
        out: output,
        consumed: &shared.consumed,
        written: 0,
        first_output: None,
        first_scan: None,
    };
    sink.write(&job.section.prepend, false)?;
    if job.flag == HeaderFlag::Emitted {
        sink.write(&job.section.jpeg_header, false)?;
    }
    let workers = worker_count(options, segments);
    let mut high_water = vec![0; job.header.components.len()];
    if workers <= 1 {
        for index in 0..segments {
            let source = SectionSource {
                shared: &shared,
                id: index,
                buf: Vec::new(),
                pos: 0,
            };
            let hw = job
                .decode_segment(index, source, &mut |b| sink.write(b, true))
                .map_err(|e| e.resolve(&shared))?;
            merge_high_water(&mut high_water, &hw);
        }
    } else {
        decode_parallel(&job, &shared, &mut sink, workers, &mut high_water)?;
    }
    sink.write(&job.section.append, false)?;
    shared.drain()?;
    if sink.written != container.output_size as u64 {
        return Err(DecodeError::SizeMismatch {
            expected: container.output_size as u64,
            actual: sink.written,
        });
    }
    Ok(DecodeReport {
        output_len: sink.written,
        input_len: shared.consumed.load(Ordering::Relaxed),
        consumed_at_first_output: sink.first_output,
        consumed_at_first_scan_byte: sink.first_scan,
        high_water,
        segments,
        workers,
    })
}

#[cfg(feature = "parallel")]
fn decode_parallel<R: Read + Send, W: Write>(
    job: &Job,
    shared: &Shared<R>,
    sink: &mut Sink<'_, '_, W>,
    workers: usize,
    high_water: &mut [usize],
) -> Result<(), DecodeError> {
    use std::sync::atomic::AtomicUsize;
    use std::sync::mpsc;

    type Message = Result<Vec<u8>, DecodeError>;
    let segments = job.section.segments.len();
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..segments).map(|_| mpsc::channel::<Message>()).unzip();
    let senders = Mutex::new(senders.into_iter().map(Some).collect::<Vec<_>>());
    let next = AtomicUsize::new(0);
    let marks = Mutex::new(vec![0usize; high_water.len()]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= segments {
                    return;
                }
                let tx = senders.lock().unwrap()[index].take().unwrap();
                let source = SectionSource {
                    shared,
                    id: index,
                    buf: Vec::new(),
                    pos: 0,
                };
                let result = job.decode_segment(index, source, &mut |b| {
                    tx.send(Ok(b.to_vec())).map_err(|_| DecodeError::Cancelled)
                });
                match result {
                    Ok(hw) => merge_high_water(&mut marks.lock().unwrap(), &hw),
                    Err(CoderOrDecode::Decode(DecodeError::Cancelled)) => return,
                    Err(e) => {
                        let _ = tx.send(Err(e.resolve(shared)));
                    }
                }
            });
        }
        for rx in receivers {
            for message in rx {
                sink.write(&message?, true)?;
            }
        }
        Ok::<(), DecodeError>(())
    })?;
    merge_high_water(high_water, &marks.into_inner().unwrap());
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn decode_parallel<R: Read + Send, W: Write>(
    _job: &Job,
    _shared: &Shared<R>,
    _sink: &mut Sink<'_, '_, W>,
    _workers: usize,
    _high_water: &mut [usize],
) -> Result<(), DecodeError> {
    unreachable!("worker_count is 1 without the parallel feature")
}

/// Decompress an in-memory container.
pub fn decompress_bytes(container: &[u8], options: &DecompressOptions) -> Result<Vec<u8>, DecodeError> {
    let mut out = Vec::with_capacity(container.len() * 4 / 3);
    decompress(container, &mut out, options)?;
    Ok(out)
}
