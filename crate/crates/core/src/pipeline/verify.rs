use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{compress, CompressOptions, DecodeReport, DecompressOptions, Status};
use crate::container::read_container;
use crate::jpeg::{component_bits, parse_jpeg};
use crate::model::CostClass;

/// Original and compressed size of one part of a file, in bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentSize {
    pub original: f64,
    pub compressed: f64,
}

impl ComponentSize {
    pub fn ratio(&self) -> f64 {
        if self.original > 0.0 {
            self.compressed / self.original
        } else {
            1.0
        }
    }

    pub fn add(&mut self, other: &ComponentSize) {
        self.original += other.original;
        self.compressed += other.compressed;
    }
}

/// Sizes split into header, 7x7 AC, edge AC and DC.
///
/// The header covers everything outside the scan on the original side and
/// everything but the coded sections on the compressed side. Coefficient
/// sizes on the original side count Huffman code and extra bits; on the
/// compressed side they are model costs scaled to the coded section bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub header: ComponentSize,
    pub seven_by_seven: ComponentSize,
    pub edge: ComponentSize,
    pub dc: ComponentSize,
}

impl Breakdown {
    pub fn add(&mut self, other: &Breakdown) {
        self.header.add(&other.header);
        self.seven_by_seven.add(&other.seven_by_seven);
        self.edge.add(&other.edge);
        self.dc.add(&other.dc);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub status: Status,
    pub input_size: usize,
    pub output_size: Option<usize>,
    pub ratio: Option<f64>,
    pub segments: usize,
    /// Output size when coded as a single segment.
    pub single_segment_size: Option<usize>,
    pub breakdown: Option<Breakdown>,
    pub encode_secs: f64,
    pub decode_secs: f64,
    /// What went wrong if a round trip failed.
    pub mismatch: Option<String>,
}

/// Decode `container` with fresh state and compare it with `original`.
pub fn check_container(
    original: &[u8],
    container: &[u8],
    options: &DecompressOptions,
) -> Result<DecodeReport, String> {
    let mut out = Vec::with_capacity(original.len());
    let report = super::decompress(container, &mut out, options).map_err(|e| e.to_string())?;
    if out == original {
        Ok(report)
    } else {
        let at = out.iter().zip(original).position(|(a, b)| a != b).unwrap_or(out.len().min(original.len()));
        Err(format!(
            "decoded {} bytes, expected {}; first difference at offset {at}",
            out.len(),
            original.len()
        ))
    }
}

/// Split sizes of `bytes` and its `container` by component. `tally` is the
/// model cost reported when the container was written.
pub fn breakdown(bytes: &[u8], container: &[u8], tally: &crate::model::CostTally) -> Option<Breakdown> {
    let parsed = parse_jpeg(bytes).ok()?;
    let bits = component_bits(&parsed.header, &parsed.channels, parsed.rst_count).ok()?;
    let coded: usize = read_container(container).ok()?.streams.iter().map(Vec::len).sum();
    let scale = if tally.total_bytes() > 0.0 {
        coded as f64 / tally.total_bytes()
    } else {
        0.0
    };
    let part = |original_bits: u64, class: CostClass| ComponentSize {
        original: original_bits as f64 / 8.0,
        compressed: tally.bytes(class) * scale,
    };
    Some(Breakdown {
        header: ComponentSize {
            original: (bytes.len() - parsed.scan_len) as f64,
            compressed: (container.len() - coded) as f64,
        },
        seven_by_seven: part(bits[0], CostClass::SevenBySeven),
        edge: part(bits[1], CostClass::Edge),
        dc: part(bits[2], CostClass::Dc),
    })
}

/// Compress with the default and with a single-segment configuration,
/// decode each with fresh state and compare with the input.
pub fn verify(bytes: &[u8], options: &CompressOptions) -> VerifyReport {
    let started = Instant::now();
    let result = compress(bytes, options);
    let encode_secs = started.elapsed().as_secs_f64();
    let mut report = VerifyReport {
        status: result.status,
        input_size: bytes.len(),
        output_size: result.output.as_ref().map(Vec::len),
        ratio: result.ratio(),
        segments: result.segments,
        single_segment_size: None,
        breakdown: None,
        encode_secs,
        decode_secs: 0.0,
        mismatch: None,
    };
    let Some(container) = result.output else {
        return report;
    };
    let decode = DecompressOptions {
        workers: options.workers,
        mem_limit_decode: options.mem_limit_decode,
    };
    let started = Instant::now();
    let checked = check_container(bytes, &container, &decode);
    report.decode_secs = started.elapsed().as_secs_f64();
    if let Err(m) = checked {
        report.status = Status::RoundtripFailed;
        report.mismatch = Some(m);
        return report;
    }
    report.breakdown = breakdown(bytes, &container, &result.tally);

    let single = compress(
        bytes,
        &CompressOptions {
            segments: Some(1),
            ..options.clone()
        },
    );
    match single.output {
        Some(c) => {
            let sequential = DecompressOptions {
                workers: Some(1),
                ..decode
            };
            if let Err(m) = check_container(bytes, &c, &sequential) {
                report.status = Status::RoundtripFailed;
                report.mismatch = Some(format!("single segment: {m}"));
            }
            report.single_segment_size = Some(c.len());
        }
        None => {
            report.status = single.status;
            report.mismatch = Some(format!("single segment: {:?}", single.status));
        }
    }
    report
}
