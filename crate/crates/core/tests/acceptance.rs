//! Acceptance run: one `[PASS]` or `[FAIL]` line per criterion, nonzero exit
//! if any criterion fails. Informational lines are tagged `[INFO]`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use lepjpeg::jpeg::{parse_jpeg, scan_symbols, ParsedJpeg};
use lepjpeg::model::{measure, CoefficientOrder, CostClass, DcPrediction, EdgePrediction, ModelOptions};
use lepjpeg::pipeline::{
    breakdown, compress, compress_chunks_at, decompress, decompress_bytes, decompress_chunk, Breakdown,
    CompressOptions, DecompressOptions, Status,
};
use lepjpeg::range_coder::{RangeDecoder, RangeEncoder, SliceSource, StatisticBin};
use lepjpeg_testkit::{self as kit, Kind, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CORPUS_FILES: usize = 1000;
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(600);
const RATIO_BAND: (f64, f64) = (0.72, 0.84);
const SEVEN_BAND: (f64, f64) = (0.72, 0.88);
const DC_BAND: (f64, f64) = (0.50, 0.75);
const DC_SAVING: f64 = 0.25;
const DETERMINISM_CONTAINERS: usize = 20;
const DETERMINISM_DECODES: usize = 100;
const LARGE_FILES: usize = 50;
const LARGE_MIN: usize = 8 << 20;
const CODER_BITS: usize = 1_000_000;
const STREAM_MIN: usize = 2 << 20;
const STREAM_FRACTION: f64 = 0.20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Corpus {
    samples: Vec<Sample>,
    /// Compression status, output and breakdown per sample.
    results: Vec<FileResult>,
    failures: Vec<String>,
    elapsed: Duration,
}

fn run_corpus() -> Corpus {
    let started = Instant::now();
    let samples = kit::desk_corpus(CORPUS_FILES);
    let results: Vec<_> = samples
        .par_iter()
        .map(|s| {
            let r = compress(&s.bytes, &CompressOptions::default());
            let check = r.output.as_ref().map(|c| decompress_bytes(c, &DecompressOptions::default()));
            let failure = match (&r.status, &check) {
                (Status::Success, Some(Ok(out))) if *out == s.bytes => None,
                (Status::Success, Some(Ok(_))) => Some(format!("{}: decode differs", s.name)),
                (Status::Success, Some(Err(e))) => Some(format!("{}: {e}", s.name)),
                (Status::RoundtripFailed, _) => Some(format!("{}: round trip failed", s.name)),
                _ => None,
            };
            let parts = r.output.as_ref().and_then(|c| breakdown(&s.bytes, c, &r.tally));
            ((r.status, r.output, parts), failure)
        })
        .collect();
    let (results, failures): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Corpus {
        samples,
        results,
        failures: failures.into_iter().flatten().collect(),
        elapsed: started.elapsed(),
    }
}

fn round_trip(c: &Corpus) -> Outcome {
    let accepted = c.results.iter().filter(|r| !r.0.is_rejection()).count();
    let ok = c.results.iter().filter(|r| r.0 == Status::Success).count();
    let pass = c.samples.len() >= CORPUS_FILES && c.failures.is_empty() && c.elapsed <= ROUND_TRIP_BUDGET;
    let mut detail = format!(
        "{} files, {accepted} accepted, {ok} exact, {} failures, {:.0}s (budget {}s)",
        c.samples.len(),
        c.failures.len(),
        c.elapsed.as_secs_f64(),
        ROUND_TRIP_BUDGET.as_secs()
    );
    if let Some(first) = c.failures.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(pass, detail)
}

type FileResult = (Status, Option<Vec<u8>>, Option<Breakdown>);

fn photographic(c: &Corpus) -> impl Iterator<Item = (&Sample, &FileResult)> {
    c.samples
        .iter()
        .zip(&c.results)
        .filter(|(s, r)| s.kind == Kind::Photographic && r.0 == Status::Success)
}

fn within((lo, hi): (f64, f64), v: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn ratio(c: &Corpus) -> Outcome {
    let ratios: Vec<f64> = photographic(c)
        .map(|(s, r)| r.1.as_ref().map_or(1.0, |o| o.len() as f64 / s.bytes.len() as f64))
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len().max(1) as f64).sqrt();
    outcome(
        !ratios.is_empty() && within(RATIO_BAND, mean),
        format!(
            "photographic mean {mean:.4} (sd {sd:.4}, n={}) in [{}, {}]",
            ratios.len(),
            RATIO_BAND.0,
            RATIO_BAND.1
        ),
    )
}

fn components(c: &Corpus) -> Outcome {
    let mut total = Breakdown::default();
    for (_, r) in photographic(c) {
        if let Some(b) = &r.2 {
            total.add(b);
        }
    }
    let (seven, dc) = (total.seven_by_seven.ratio(), total.dc.ratio());
    outcome(
        within(SEVEN_BAND, seven) && within(DC_BAND, dc),
        format!(
            "7x7 {seven:.4} in [{}, {}], DC {dc:.4} in [{}, {}] (edge {:.4}, header {:.4})",
            SEVEN_BAND.0,
            SEVEN_BAND.1,
            DC_BAND.0,
            DC_BAND.1,
            total.edge.ratio(),
            total.header.ratio()
        ),
    )
}

/// Coded bytes by class, summed over the photographic subset, for each
/// model variant.
fn ablations(c: &Corpus, variants: &[ModelOptions]) -> Vec<[f64; 3]> {
    let parsed: Vec<ParsedJpeg> = photographic(c).filter_map(|(s, _)| parse_jpeg(&s.bytes).ok()).collect();
    variants
        .iter()
        .map(|&options| {
            parsed
                .par_iter()
                .map(|p| {
                    let t = measure(&p.header, &p.channels, options).expect("measure");
                    [
                        t.bytes(CostClass::SevenBySeven),
                        t.bytes(CostClass::Edge),
                        t.bytes(CostClass::Dc),
                    ]
                })
                .reduce(|| [0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
        })
        .collect()
}

fn dc_ablation(sums: &[[f64; 3]]) -> Outcome {
    let (gradient, delta) = (sums[0][2], sums[1][2]);
    let saving = 1.0 - gradient / delta;
    outcome(
        saving >= DC_SAVING,
        format!("gradient {gradient:.0} B vs previous-delta {delta:.0} B, saving {:.1}% (need >= {:.0}%)", saving * 100.0, DC_SAVING * 100.0),
    )
}

fn edge_ablation(sums: &[[f64; 3]]) -> Outcome {
    let (lakhani, average) = (sums[0][1], sums[2][1]);
    outcome(
        lakhani < average,
        format!("edge bytes {lakhani:.0} with edge prediction vs {average:.0} with the 7x7 average"),
    )
}

fn order_ablation(sums: &[[f64; 3]]) -> Outcome {
    let (zigzag, raster) = (sums[0][0], sums[3][0]);
    outcome(zigzag <= raster, format!("7x7 bytes {zigzag:.0} zigzag vs {raster:.0} raster"))
}

fn determinism(c: &Corpus) -> Outcome {
    let picked: Vec<&Sample> = photographic(c).map(|(s, _)| s).take(DETERMINISM_CONTAINERS).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().expect("thread pool");
    let mut problems = Vec::new();
    let mut decodes = 0;
    for (i, s) in picked.iter().enumerate() {
        let options = CompressOptions {
            segments: Some(1 + i % 8),
            ..CompressOptions::default()
        };
        let first = compress(&s.bytes, &options).output;
        let again = compress(&s.bytes, &options).output;
        let pooled = pool.install(|| compress(&s.bytes, &options)).output;
        let Some(container) = first else {
            problems.push(format!("{}: not compressed", s.name));
            continue;
        };
        if again.as_ref() != Some(&container) || pooled.as_ref() != Some(&container) {
            problems.push(format!("{}: encoder reruns differ", s.name));
        }
        for _ in 0..DETERMINISM_DECODES {
            let workers = rng.random_range(1..=8);
            let out = decompress_bytes(
                &container,
                &DecompressOptions {
                    workers: Some(workers),
                    ..DecompressOptions::default()
                },
            );
            decodes += 1;
            if out.as_deref().ok() != Some(&s.bytes[..]) {
                problems.push(format!("{}: decode with {workers} workers differs", s.name));
                break;
            }
        }
    }
    outcome(
        picked.len() == DETERMINISM_CONTAINERS && problems.is_empty(),
        format!(
            "{} containers, {decodes} decodes with 1-8 workers, 3 encodes each; {}",
            picked.len(),
            problems.first().map_or("all identical".to_string(), |p| p.clone())
        ),
    )
}

/// Offsets inside the scan that split a code word, a stuffed `FF 00` pair
/// and an `RST` marker.
struct Cuts {
    mid_symbol: Vec<usize>,
    mid_stuffing: Vec<usize>,
    mid_restart: Vec<usize>,
}

fn adversarial_cuts(bytes: &[u8], parsed: &ParsedJpeg) -> Cuts {
    let start = parsed.header.header_len;
    let scan = &bytes[start..start + parsed.scan_len];
    let mut offsets = Vec::with_capacity(scan.len());
    let (mut mid_stuffing, mut mid_restart) = (Vec::new(), Vec::new());
    let mut i = 0;
    while i < scan.len() {
        if scan[i] == 0xFF && i + 1 < scan.len() {
            if scan[i + 1] == 0x00 {
                offsets.push(start + i);
                mid_stuffing.push(start + i + 1);
            } else {
                mid_restart.push(start + i + 1);
            }
            i += 2;
        } else {
            offsets.push(start + i);
            i += 1;
        }
    }
    let mut mid_symbol = Vec::new();
    scan_symbols(&parsed.header, &parsed.channels, parsed.rst_count, |s| {
        let next_byte = s.bit / 8 + 1;
        if next_byte * 8 < s.bit + s.code_len as u64 {
            mid_symbol.extend(offsets.get(next_byte as usize));
        }
    })
    .expect("symbol walk");
    Cuts {
        mid_symbol,
        mid_stuffing,
        mid_restart,
    }
}

fn nearest(candidates: &[usize], target: usize) -> Option<usize> {
    let i = candidates.partition_point(|&c| c < target);
    candidates.get(i).or_else(|| candidates.last()).copied()
}

fn chunk_independence() -> Outcome {
    let problems: Vec<String> = (0..LARGE_FILES as u64)
        .into_par_iter()
        .filter_map(|index| {
            let sample = kit::large(index, LARGE_MIN);
            let bytes = &sample.bytes;
            let options = CompressOptions::default();
            let whole = compress(bytes, &options);
            let Some(container) = whole.output else {
                return Some(format!("{}: whole file {:?}", sample.name, whole.status));
            };
            let reference = match decompress_bytes(&container, &DecompressOptions::default()) {
                Ok(r) => r,
                Err(e) => return Some(format!("{}: whole-file decode: {e}", sample.name)),
            };
            drop(container);
            let parsed = parse_jpeg(bytes).expect("large sample parses");
            let cuts = adversarial_cuts(bytes, &parsed);
            drop(parsed);
            let third = bytes.len() / 3;
            let second = match index % 3 {
                0 => nearest(&cuts.mid_stuffing, 2 * third),
                1 => nearest(&cuts.mid_restart, 2 * third).or_else(|| nearest(&cuts.mid_stuffing, 2 * third)),
                _ => nearest(&cuts.mid_symbol, 2 * third),
            };
            let mut boundaries = vec![0];
            match index % 5 {
                0 => boundaries.push(301),
                1 => boundaries.push(1),
                _ => {}
            }
            boundaries.extend(nearest(&cuts.mid_symbol, third));
            boundaries.extend(second);
            if index % 4 == 3 {
                boundaries.push(bytes.len() - 1);
            }
            boundaries.sort_unstable();
            boundaries.dedup();
            if boundaries.len() < 3 {
                return Some(format!("{}: no adversarial offsets found", sample.name));
            }
            let chunked = compress_chunks_at(bytes, &boundaries, &options);
            if chunked.status != Status::Success {
                return Some(format!("{}: chunks {:?} at {boundaries:?}", sample.name, chunked.status));
            }
            let mut joined = Vec::with_capacity(bytes.len());
            for (i, c) in chunked.containers.iter().enumerate() {
                match decompress_chunk(c, &DecompressOptions::default()) {
                    Ok(part) => joined.extend_from_slice(&part),
                    Err(e) => return Some(format!("{}: chunk {i}: {e}", sample.name)),
                }
            }
            (joined != reference).then(|| format!("{}: chunks at {boundaries:?} differ", sample.name))
        })
        .collect();
    outcome(
        problems.is_empty(),
        format!(
            "{LARGE_FILES} files > {} MiB, cuts mid-symbol, mid-FF00, mid-RST, in headers and trailers; {}",
            LARGE_MIN >> 20,
            problems.first().map_or("all exact".to_string(), |p| format!("{} failures, first: {p}", problems.len()))
        ),
    )
}

/// Sum of -log2 p over an adaptation sequence, from the estimator
/// definition.
fn entropy_bits(bits: &[bool]) -> f64 {
    let (mut zero, mut one) = (0u32, 0u32);
    let mut total = 0.0;
    for &bit in bits {
        let p0 = (zero as f64 + 1.0) / (zero as f64 + one as f64 + 2.0);
        total -= if bit { (1.0 - p0).log2() } else { p0.log2() };
        if bit {
            one += 1;
        } else {
            zero += 1;
        }
        if zero == 255 || one == 255 {
            zero /= 2;
            one /= 2;
        }
    }
    total
}

fn range_coder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut coded = 0;
    let mut problems = Vec::new();
    let mut worst_excess = 0f64;
    while coded < CODER_BITS {
        let bins = rng.random_range(1..=256usize);
        let n = rng.random_range(1_000..=60_000usize).min(CODER_BITS - coded).max(1);
        let bias: Vec<f64> = (0..bins).map(|_| rng.random::<f64>().powi(3)).collect();
        let schedule: Vec<(usize, bool)> = (0..n)
            .map(|_| {
                let b = rng.random_range(0..bins);
                (b, rng.random_bool(bias[b]))
            })
            .collect();
        let mut enc_bins = vec![StatisticBin::new(); bins];
        let mut enc = RangeEncoder::new();
        for &(b, bit) in &schedule {
            enc.put_bit(&mut enc_bins[b], bit).expect("put_bit");
        }
        let bytes = enc.finish().expect("finish");
        let mut dec_bins = vec![StatisticBin::new(); bins];
        let mut dec = RangeDecoder::new(SliceSource::new(&bytes));
        let exact = schedule
            .iter()
            .all(|&(b, bit)| dec.get_bit(&mut dec_bins[b]).ok() == Some(bit));
        if !exact || enc_bins != dec_bins {
            problems.push(format!("schedule of {n} bits over {bins} bins"));
        }
        let mut per_bin = vec![Vec::new(); bins];
        for &(b, bit) in &schedule {
            per_bin[b].push(bit);
        }
        let bound: f64 = per_bin.iter().map(|bits| entropy_bits(bits)).sum();
        let excess = bytes.len() as f64 * 8.0 - bound;
        worst_excess = worst_excess.max(excess / n as f64);
        if excess > 0.01 * n as f64 + 64.0 {
            problems.push(format!("{n} bits cost {} bytes against a bound of {:.0} bits", bytes.len(), bound));
        }
        coded += n;
    }
    for n in [1_000usize, 10_000, 100_000] {
        for bit in [false, true] {
            let mut bin = StatisticBin::new();
            let mut enc = RangeEncoder::new();
            for _ in 0..n {
                enc.put_bit(&mut bin, bit).expect("put_bit");
            }
            let bits = enc.finish().expect("finish").len() as f64 * 8.0;
            if bits > n as f64 * 0.15 + 64.0 {
                problems.push(format!("{n} equal bits cost {bits} bits"));
            }
        }
    }
    outcome(
        coded >= CODER_BITS && problems.is_empty(),
        format!(
            "{coded} random bits exact; worst excess over the entropy bound {:.4} bits/bit; equal-bit runs within n*0.15+64; {}",
            worst_excess,
            problems.first().map_or("no violations".to_string(), |p| p.clone())
        ),
    )
}

fn streaming() -> Outcome {
    let sample = kit::large(1000, STREAM_MIN * 3 / 2);
    let options = CompressOptions {
        segments: Some(4),
        ..CompressOptions::default()
    };
    let Some(container) = compress(&sample.bytes, &options).output else {
        return outcome(false, format!("{}: not compressed", sample.name));
    };
    let mut out = Vec::new();
    let report = match decompress(&container[..], &mut out, &DecompressOptions::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("decode failed: {e}")),
    };
    let input = report.input_len as f64;
    let first = report.consumed_at_first_output.unwrap_or(u64::MAX) as f64 / input;
    let first_scan = report.consumed_at_first_scan_byte.unwrap_or(u64::MAX) as f64 / input;
    let rows_ok = report.high_water.iter().all(|&h| h <= 2);
    outcome(
        out == sample.bytes
            && report.segments == 4
            && container.len() >= STREAM_MIN
            && first < STREAM_FRACTION
            && first_scan < STREAM_FRACTION
            && rows_ok,
        format!(
            "{} byte container, {} segments: first byte at {:.2}% of input, first scan byte at {:.2}%, high water {:?} rows",
            container.len(),
            report.segments,
            first * 100.0,
            first_scan * 100.0,
            report.high_water
        ),
    )
}

fn performance() -> String {
    let sample = kit::large(2000, 4 << 20);
    let options = CompressOptions {
        segments: Some(8),
        ..CompressOptions::default()
    };
    let Some(container) = compress(&sample.bytes, &options).output else {
        return "not compressed".into();
    };
    let started = Instant::now();
    let out = decompress_bytes(&container, &DecompressOptions::default()).expect("decode");
    let secs = started.elapsed().as_secs_f64();
    format!(
        "8-segment decode of {} bytes: {:.1} Mbps on {} threads (target 100 Mbps on 4 cores)",
        out.len(),
        out.len() as f64 * 8.0 / secs / 1e6,
        rayon::current_num_threads()
    )
}

/// Criteria to run: numbers given on the command line, or all of them.
fn selected() -> Vec<u32> {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if picked.is_empty() {
        (1..=11).collect()
    } else {
        picked
    }
}

fn main() -> ExitCode {
    let wanted = selected();
    let on = |n: u32| wanted.contains(&n);
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    if (1..=7).any(on) {
        let corpus = run_corpus();
        if on(1) {
            report("1 bit-exact round trip", round_trip(&corpus));
        }
        if on(2) {
            report("2 compression ratio", ratio(&corpus));
        }
        if on(3) {
            report("3 component breakdown", components(&corpus));
        }
        if (4..=6).any(on) {
            let variants = [
                ModelOptions::default(),
                ModelOptions {
                    dc: DcPrediction::PreviousDelta,
                    ..ModelOptions::default()
                },
                ModelOptions {
                    edge: EdgePrediction::Average,
                    ..ModelOptions::default()
                },
                ModelOptions {
                    order: CoefficientOrder::Raster,
                    ..ModelOptions::default()
                },
            ];
            let sums = ablations(&corpus, &variants);
            if on(4) {
                report("4 DC predictor ablation", dc_ablation(&sums));
            }
            if on(5) {
                report("5 edge predictor ablation", edge_ablation(&sums));
            }
            if on(6) {
                report("6 zigzag ordering", order_ablation(&sums));
            }
        }
        if on(7) {
            report("7 determinism", determinism(&corpus));
        }
    }
    if on(8) {
        report("8 chunk independence", chunk_independence());
    }
    if on(9) {
        report("9 range coder", range_coder());
    }
    if on(10) {
        report("10 streaming", streaming());
    }
    if on(11) {
        println!("[INFO] 11 performance: {}", performance());
    }

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
