mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lepjpeg::container::ContainerError;
use lepjpeg::model::{ModelBins, TOTAL_BINS};
use lepjpeg::pipeline::{
    check_container, compress, compress_chunked, decompress, model_memory, verify, CompressOptions, DecodeError,
    DecompressOptions, Status, DEFAULT_MEM_LIMIT_DECODE, DEFAULT_MEM_LIMIT_ENCODE,
};
use lepjpeg::range_coder::{PROB_BITS, TOP};

use report::{FileRecord, Spread, Summary};

/// Exit code for a file that is not a readable container.
const EXIT_CORRUPT: u8 = 65;
/// Exit code for failed reads and writes.
const EXIT_IO: u8 = 74;

/// Lossless JPEG recompression.
#[derive(Parser)]
#[command(name = "lepjpeg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Limits {
    /// Coefficient memory allowed while encoding, in bytes.
    #[arg(long, env = "LEPJPEG_MEM_LIMIT_ENCODE", default_value_t = DEFAULT_MEM_LIMIT_ENCODE)]
    mem_limit_encode: usize,
    /// Row buffer memory allowed while decoding, in bytes.
    #[arg(long, env = "LEPJPEG_MEM_LIMIT_DECODE", default_value_t = DEFAULT_MEM_LIMIT_DECODE)]
    mem_limit_decode: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a JPEG into a container.
    Compress {
        input: PathBuf,
        output: PathBuf,
        /// Thread segments (1-16); chosen from the file size by default.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=16))]
        segments: Option<u8>,
        /// Split into independent containers of this many input bytes,
        /// written as OUTPUT.0, OUTPUT.1, ...
        #[arg(long)]
        chunk_size: Option<usize>,
        /// Give up after this many seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[command(flatten)]
        limits: Limits,
    },
    /// Restore the original file from one container, or from a list of chunk
    /// containers in order.
    Decompress {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output path, or - for standard output.
        #[arg(short, long)]
        output: PathBuf,
        /// Decoding threads.
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        limits: Limits,
    },
    /// Round-trip a JPEG, or check an existing container against it.
    Verify {
        input: PathBuf,
        /// Container to check instead of compressing afresh.
        #[arg(long)]
        container: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        limits: Limits,
    },
    /// Verify every file under a directory.
    Corpus {
        dir: PathBuf,
        /// Files processed at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Line-delimited JSON records, one per file, then a summary line.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        limits: Limits,
    },
    /// Measure encode and decode speed.
    Bench {
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        /// Segment counts to compare.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8])]
        segments: Vec<usize>,
    },
    /// Print model and coder constants.
    Stats {
        /// The statistic bin layout.
        #[arg(long)]
        layout: bool,
    },
}

/// A failure that maps to an exit code.
enum Failure {
    Status(Status),
    Corrupt(String),
    Io(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<DecodeError> for Failure {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Io(e) => Failure::Io(e.into()),
            DecodeError::Container(ContainerError::Io(e)) => Failure::Io(e.into()),
            DecodeError::MemLimitDecode { .. } => Failure::Status(Status::MemLimitDecode),
            other => Failure::Corrupt(other.to_string()),
        }
    }
}

fn compress_options(limits: &Limits) -> CompressOptions {
    CompressOptions {
        mem_limit_encode: limits.mem_limit_encode,
        mem_limit_decode: limits.mem_limit_decode,
        ..CompressOptions::default()
    }
}

fn decompress_options(limits: &Limits, workers: Option<usize>) -> DecompressOptions {
    DecompressOptions {
        workers,
        mem_limit_decode: limits.mem_limit_decode,
    }
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Fill a temporary file next to `path`, then move it into place.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut fs::File) -> Result<(), Failure>) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().sync_all().context("syncing output")?;
    tmp.persist(path)
        .map_err(|e| anyhow::Error::from(e.error))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run_compress(
    input: &Path,
    output: &Path,
    segments: Option<u8>,
    chunk_size: Option<usize>,
    timeout: Option<f64>,
    limits: &Limits,
) -> Result<(), Failure> {
    let bytes = read(input)?;
    let options = CompressOptions {
        segments: segments.map(usize::from),
        timeout: timeout.map(Duration::from_secs_f64),
        ..compress_options(limits)
    };
    match chunk_size {
        None => {
            let result = compress(&bytes, &options);
            let ratio = result.ratio().unwrap_or(1.0);
            let Some(container) = result.output else {
                return Err(Failure::Status(result.status));
            };
            write_atomic(output, |f| Ok(f.write_all(&container).context("writing container")?))?;
            log::info!(
                "{}: {} -> {} bytes ({:.2}%)",
                input.display(),
                bytes.len(),
                container.len(),
                ratio * 100.0
            );
        }
        Some(size) => {
            let result = compress_chunked(&bytes, size, &options);
            if result.status != Status::Success {
                return Err(Failure::Status(result.status));
            }
            for (i, container) in result.containers.iter().enumerate() {
                let mut name = output.as_os_str().to_owned();
                name.push(format!(".{i}"));
                write_atomic(Path::new(&name), |f| Ok(f.write_all(container).context("writing chunk")?))?;
            }
            log::info!("{}: {} chunks", input.display(), result.containers.len());
        }
    }
    Ok(())
}

fn decode_into(inputs: &[PathBuf], out: &mut dyn Write, options: &DecompressOptions) -> Result<(), Failure> {
    for path in inputs {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut out = io::BufWriter::new(&mut *out);
        decompress(io::BufReader::new(file), &mut out, options)?;
        out.flush().context("writing output")?;
    }
    Ok(())
}

fn run_decompress(inputs: &[PathBuf], output: &Path, options: &DecompressOptions) -> Result<(), Failure> {
    if output.as_os_str() == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        decode_into(inputs, &mut lock, options)
    } else {
        write_atomic(output, |f| decode_into(inputs, f, options))
    }
}

fn run_verify(input: &Path, container: Option<&Path>, json: bool, limits: &Limits) -> Result<(), Failure> {
    let bytes = read(input)?;
    if let Some(path) = container {
        let container = read(path)?;
        return match check_container(&bytes, &container, &decompress_options(limits, None)) {
            Ok(_) => {
                println!("{}: matches", path.display());
                Ok(())
            }
            Err(m) => {
                println!("{}: MISMATCH: {m}", path.display());
                Err(Failure::Status(Status::RoundtripFailed))
            }
        };
    }
    let report = verify(&bytes, &compress_options(limits));
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("status: {:?}", report.status);
        if let (Some(out), Some(ratio)) = (report.output_size, report.ratio) {
            println!("size: {} -> {out} ({:.2}%), {} segments", report.input_size, ratio * 100.0, report.segments);
        }
        if let Some(single) = report.single_segment_size {
            println!("single segment: {single}");
        }
        if let Some(b) = report.breakdown {
            for (name, c) in [("header", b.header), ("7x7 AC", b.seven_by_seven), ("edge AC", b.edge), ("DC", b.dc)] {
                println!("  {name:<8} {:>10.0} -> {:>10.0} ({:.1}%)", c.original, c.compressed, c.ratio() * 100.0);
            }
        }
        println!("encode {:.4}s decode {:.4}s", report.encode_secs, report.decode_secs);
        if let Some(m) = &report.mismatch {
            println!("mismatch: {m}");
        }
    }
    match report.status {
        Status::Success => Ok(()),
        s => Err(Failure::Status(s)),
    }
}

fn corpus_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("listing {}", dir.display()))?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

fn run_corpus(dir: &Path, jobs: usize, report: Option<&Path>, limits: &Limits) -> Result<(), Failure> {
    let files = corpus_files(dir)?;
    let sink = match report {
        Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => None,
    };
    let sink = Mutex::new(sink.map(io::LineWriter::new));
    let options = compress_options(limits);
    let process = |path: &PathBuf| -> anyhow::Result<FileRecord> {
        let bytes = read(path)?;
        let record = FileRecord {
            path: path.display().to_string(),
            report: verify(&bytes, &options),
        };
        if let Some(w) = sink.lock().unwrap().as_mut() {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
        }
        log::debug!("{}: {:?}", record.path, record.report.status);
        Ok(record)
    };
    let records = run_jobs(&files, jobs, process)?;
    let summary = Summary::of(&records);
    if let Some(w) = sink.lock().unwrap().as_mut() {
        serde_json::to_writer(&mut *w, &serde_json::json!({ "summary": summary })).context("writing summary")?;
        w.write_all(b"\n").context("writing summary")?;
    }
    print!("{}", summary.table());
    if summary.failures() > 0 {
        Err(Failure::Status(Status::RoundtripFailed))
    } else {
        Ok(())
    }
}

#[cfg(feature = "parallel")]
fn run_jobs<T: Send>(
    files: &[PathBuf],
    jobs: usize,
    f: impl Fn(&PathBuf) -> anyhow::Result<T> + Sync,
) -> anyhow::Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    pool.install(|| files.par_iter().map(&f).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_jobs<T: Send>(
    files: &[PathBuf],
    _jobs: usize,
    f: impl Fn(&PathBuf) -> anyhow::Result<T> + Sync,
) -> anyhow::Result<Vec<T>> {
    files.iter().map(f).collect()
}

/// A sink that only notes when the first byte arrives.
struct FirstByte {
    started: Instant,
    first: Option<Duration>,
    len: usize,
}

impl Write for FirstByte {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if !buf.is_empty() {
            self.first.get_or_insert_with(|| self.started.elapsed());
        }
        self.len += buf.len();
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn run_bench(input: &Path, iterations: usize, segment_counts: &[usize]) -> Result<(), Failure> {
    let bytes = read(input)?;
    let mbits = bytes.len() as f64 * 8.0 / 1e6;
    let mut sizes = Vec::new();
    println!("{} bytes, {iterations} iterations", bytes.len());
    for &segments in segment_counts {
        let options = CompressOptions {
            segments: Some(segments.clamp(1, 16)),
            ..CompressOptions::default()
        };
        let mut encode = Vec::new();
        let mut container = Vec::new();
        for _ in 0..iterations.max(1) {
            let started = Instant::now();
            let result = compress(&bytes, &options);
            encode.push(started.elapsed().as_secs_f64());
            container = result.output.ok_or(Failure::Status(result.status))?;
        }
        let (mut decode, mut first) = (Vec::new(), Vec::new());
        for _ in 0..iterations.max(1) {
            let mut sink = FirstByte {
                started: Instant::now(),
                first: None,
                len: 0,
            };
            decompress(&container[..], &mut sink, &DecompressOptions::default())?;
            decode.push(sink.started.elapsed().as_secs_f64());
            first.push(sink.first.unwrap_or_default().as_secs_f64());
        }
        let (e, d, f) = (Spread::of(&encode), Spread::of(&decode), Spread::of(&first));
        println!(
            "segments {segments:>2}: {:.2}% | encode {:.1} Mbps | decode {:.1} Mbps, p50 {:.2} ms p99 {:.2} ms | first byte p50 {:.2} ms",
            container.len() as f64 / bytes.len() as f64 * 100.0,
            mbits / e.p50,
            mbits / d.p50,
            d.p50 * 1e3,
            d.p99 * 1e3,
            f.p50 * 1e3
        );
        sizes.push((segments, container.len()));
    }
    if let (Some(&(a, first)), Some(&(b, last))) = (sizes.first(), sizes.last()) {
        println!(
            "size change from {a} to {b} segments: {:+.3}% of input",
            (last as f64 - first as f64) / bytes.len() as f64 * 100.0
        );
    }
    Ok(())
}

fn run_stats(layout: bool) {
    println!("range coder: {}-bit probabilities, renormalize below 2^{}", PROB_BITS, TOP.trailing_zeros());
    if layout {
        let bins = ModelBins::default();
        println!("{:<12} {:<22} {:>10}", "group", "shape", "bins");
        for e in bins.layout() {
            let shape: Vec<String> = e.shape.iter().map(usize::to_string).collect();
            println!("{:<12} {:<22} {:>10}", e.name, shape.join("x"), e.bins);
        }
        println!("{:<12} {:<22} {:>10}", "total", "", TOTAL_BINS);
        println!("bytes per model: {}", model_memory());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Compress {
            input,
            output,
            segments,
            chunk_size,
            timeout,
            limits,
        } => run_compress(input, output, *segments, *chunk_size, *timeout, limits),
        Command::Decompress {
            inputs,
            output,
            workers,
            limits,
        } => run_decompress(inputs, output, &decompress_options(limits, *workers)),
        Command::Verify {
            input,
            container,
            json,
            limits,
        } => run_verify(input, container.as_deref(), *json, limits),
        Command::Corpus {
            dir,
            jobs,
            report,
            limits,
        } => run_corpus(dir, *jobs, report.as_deref(), limits),
        Command::Bench {
            input,
            iterations,
            segments,
        } => run_bench(input, *iterations, segments),
        Command::Stats { layout } => {
            run_stats(*layout);
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Status(s)) => {
            eprintln!("lepjpeg: {s:?}");
            ExitCode::from(s.exit_code() as u8)
        }
        Err(Failure::Corrupt(m)) => {
            eprintln!("lepjpeg: {m}");
            ExitCode::from(EXIT_CORRUPT)
        }
        Err(Failure::Io(e)) => {
            eprintln!("lepjpeg: {e:#}");
            ExitCode::from(EXIT_IO)
        }
    }
}
