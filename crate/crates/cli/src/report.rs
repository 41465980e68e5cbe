//! Corpus records and their aggregate summary.

use std::fmt::Write as _;

use lepjpeg::pipeline::{Breakdown, Status, VerifyReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    #[serde(flatten)]
    pub report: VerifyReport,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub stddev: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Spread {
        if values.is_empty() {
            return Spread::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let stddev = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let pct = |p: f64| sorted[((p * (n - 1.0)).round() as usize).min(sorted.len() - 1)];
        Spread {
            mean,
            stddev,
            p50: pct(0.50),
            p75: pct(0.75),
            p95: pct(0.95),
            p99: pct(0.99),
        }
    }
}

/// Totals over a corpus run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Summary {
    pub files: usize,
    pub counts: Vec<(Status, usize)>,
    /// Total output bytes over total input bytes, successful files only.
    pub aggregate_ratio: f64,
    pub ratio: Spread,
    pub encode_secs: Spread,
    pub decode_secs: Spread,
    pub breakdown: Breakdown,
}

impl Summary {
    pub fn of(records: &[FileRecord]) -> Summary {
        let ok: Vec<&VerifyReport> = records
            .iter()
            .map(|r| &r.report)
            .filter(|r| r.status == Status::Success)
            .collect();
        let input: usize = ok.iter().map(|r| r.input_size).sum();
        let output: usize = ok.iter().filter_map(|r| r.output_size).sum();
        let mut breakdown = Breakdown::default();
        for b in ok.iter().filter_map(|r| r.breakdown.as_ref()) {
            breakdown.add(b);
        }
        let counts = Status::ALL
            .iter()
            .map(|&s| (s, records.iter().filter(|r| r.report.status == s).count()))
            .filter(|&(_, n)| n > 0)
            .collect();
        Summary {
            files: records.len(),
            counts,
            aggregate_ratio: if input > 0 { output as f64 / input as f64 } else { 0.0 },
            ratio: Spread::of(&ok.iter().filter_map(|r| r.ratio).collect::<Vec<_>>()),
            encode_secs: Spread::of(&ok.iter().map(|r| r.encode_secs).collect::<Vec<_>>()),
            decode_secs: Spread::of(&ok.iter().map(|r| r.decode_secs).collect::<Vec<_>>()),
            breakdown,
        }
    }

    /// Files that were handled but did not survive the round trip.
    pub fn failures(&self) -> usize {
        self.counts
            .iter()
            .filter(|(s, _)| *s == Status::RoundtripFailed)
            .map(|&(_, n)| n)
            .sum()
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "files: {}", self.files);
        for (status, n) in &self.counts {
            let _ = writeln!(out, "  {:<20} {n:>8}", format!("{status:?}"));
        }
        let _ = writeln!(
            out,
            "ratio: {:.2}% +/- {:.2} (aggregate {:.2}%)",
            self.ratio.mean * 100.0,
            self.ratio.stddev * 100.0,
            self.aggregate_ratio * 100.0
        );
        let _ = writeln!(out, "{:<10} {:>14} {:>14} {:>8}", "component", "original", "compressed", "ratio");
        let b = &self.breakdown;
        for (name, c) in [
            ("header", b.header),
            ("7x7 AC", b.seven_by_seven),
            ("edge AC", b.edge),
            ("DC", b.dc),
        ] {
            let _ = writeln!(
                out,
                "{name:<10} {:>14.0} {:>14.0} {:>7.1}%",
                c.original,
                c.compressed,
                c.ratio() * 100.0
            );
        }
        for (name, s) in [("encode s", &self.encode_secs), ("decode s", &self.decode_secs)] {
            let _ = writeln!(
                out,
                "{name:<10} p50 {:.4} p75 {:.4} p95 {:.4} p99 {:.4}",
                s.p50, s.p75, s.p95, s.p99
            );
        }
        out
    }
}
