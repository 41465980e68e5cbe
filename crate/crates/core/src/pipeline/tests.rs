use super::*;

#[test]
fn exit_codes_are_distinct() {
    let mut codes: Vec<i32> = Status::ALL.iter().map(|s| s.exit_code()).collect();
    assert_eq!(codes[0], 0);
    codes.sort_unstable();
    codes.dedup();
    assert_eq!(codes.len(), Status::ALL.len());
}

#[test]
fn segment_policy_thresholds() {
    assert_eq!(segment_policy(0), 1);
    assert_eq!(segment_policy((128 << 10) - 1), 1);
    assert_eq!(segment_policy(128 << 10), 2);
    assert_eq!(segment_policy(512 << 10), 4);
    assert_eq!(segment_policy(2 << 20), 8);
    assert_eq!(segment_policy(usize::MAX), 8);
}

#[test]
fn jpeg_errors_map_to_statuses() {
    assert_eq!(Status::from(&JpegError::Progressive), Status::Progressive);
    assert_eq!(Status::from(&JpegError::AcValuesOutOfRange), Status::AcValuesOutOfRange);
    assert_eq!(Status::from(&JpegError::TruncatedScan), Status::UnsupportedJpeg);
    assert!(Status::NotAnImage.is_rejection());
    assert!(!Status::RoundtripFailed.is_rejection());
}

#[test]
fn chunk_boundaries_cover_the_file() {
    assert_eq!(chunk_boundaries(10, 4), vec![0, 4, 8]);
    assert_eq!(chunk_boundaries(8, 4), vec![0, 4]);
    assert_eq!(chunk_boundaries(0, 4), vec![0]);
}

fn analysis_of(bytes: &[u8]) -> Analysis<'_> {
    Analysis::new(bytes, &CompressOptions::default()).unwrap()
}

/// Output bytes a plan accounts for.
fn planned_len(a: &Analysis<'_>, plan: &RangePlan) -> usize {
    let header = if plan.flag == HeaderFlag::Emitted {
        a.parsed.header.header_len
    } else {
        0
    };
    (plan.prepend.1 - plan.prepend.0)
        + header
        + plan.segments.iter().map(|s| s.output_size).sum::<usize>()
        + (plan.append.1 - plan.append.0)
}

#[test]
fn plans_account_for_every_byte() {
    for i in 0..30 {
        let sample = lepjpeg_testkit::photographic(i);
        let bytes = &sample.bytes;
        let a = analysis_of(bytes);
        for segments in [None, Some(1), Some(3), Some(16)] {
            let plan = plan_range(&a, 0, bytes.len(), segments);
            assert_eq!(plan.flag, HeaderFlag::Emitted);
            assert_eq!(planned_len(&a, &plan), bytes.len());
            assert!(plan.segments.windows(2).all(|w| w[0].end_row == w[1].start_row));
            assert_eq!(plan.segments.last().unwrap().end_row, a.parsed.header.mcus_y);
        }
        let n = bytes.len();
        for (start, end) in [(0, n / 3), (n / 3, 2 * n / 3 + 1), (2 * n / 3 + 1, n), (n - 1, n), (1, 2)] {
            let plan = plan_range(&a, start, end, None);
            assert_eq!(planned_len(&a, &plan), end - start, "{start}..{end}");
        }
    }
}
