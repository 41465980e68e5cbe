use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use lepjpeg_testkit::{encode, fake_exif, JpegOptions};

/// SOI through SOS of a small JPEG with `channels` components.
fn jpeg_header(channels: u8, exif: Option<Vec<u8>>) -> Vec<u8> {
    let pixels = vec![128u8; 16 * 16 * channels as usize];
    let opts = JpegOptions {
        exif,
        ..JpegOptions::default()
    };
    let jpeg = encode(&pixels, 16, 16, channels, &opts).unwrap();
    let len = parse_header(&jpeg).unwrap().header_len;
    jpeg[..len].to_vec()
}

fn sample_section(channels: u8, segments: usize) -> HeaderSection {
    HeaderSection {
        jpeg_header: jpeg_header(channels, None),
        pad_byte: 0xFF,
        segments: (0..segments)
            .map(|i| SegmentInfo {
                start_row: i as u16 * 3,
                output_size: 1000 + i as u32,
                handover: 0xA003,
                dc: [i as i16, -(i as i16), 7, 0],
            })
            .collect(),
        rst_count: 5,
        blocks_per_channel: vec![4; channels as usize],
        prepend: vec![],
        append: vec![0xFF, 0xD9],
    }
}

fn inflate(zlib: &[u8]) -> Vec<u8> {
    let mut raw = Vec::new();
    ZlibDecoder::new(zlib).read_to_end(&mut raw).unwrap();
    raw
}

#[test]
fn golden_layout() {
    let mut section = sample_section(1, 2);
    section.jpeg_header = jpeg_header(1, None);
    let header_len = section.jpeg_header.len();
    let streams = vec![vec![0xAA; 5], vec![0xBB; 4096 + 2]];
    let bytes = write_container(HeaderFlag::Emitted, 0x0102_0304, &section, &streams).unwrap();

    assert_eq!(&bytes[..8], &[0xCF, 0x84, 0x01, b'Y', 2, 0, 0, 0]);
    assert_eq!(&bytes[8..20], &build_id());
    assert_eq!(&bytes[20..24], &[0x04, 0x03, 0x02, 0x01]);
    let zlib_size = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;

    let raw = inflate(&bytes[28..28 + zlib_size]);
    let mut expect = (header_len as u32).to_le_bytes().to_vec();
    expect.extend_from_slice(&section.jpeg_header);
    expect.push(0xFF);
    expect.extend([0, 0, 0xE8, 0x03, 0, 0, 0x03, 0xA0, 0, 0, 0, 0, 7, 0, 0, 0]);
    expect.extend([3, 0, 0xE9, 0x03, 0, 0, 0x03, 0xA0, 1, 0, 0xFF, 0xFF, 7, 0, 0, 0]);
    expect.extend([5, 0, 0, 0]);
    expect.extend([4, 0, 0, 0]);
    expect.extend([0, 0, 0, 0]);
    expect.extend([2, 0, 0, 0, 0xFF, 0xD9]);
    assert_eq!(raw, expect);

    // Round robin: segment 0's only section, then segment 1 in two pieces.
    let mut tail = vec![0x30, 5, 0];
    tail.extend([0xAA; 5]);
    tail.push(0x11);
    tail.extend([0xBB; 4096]);
    tail.extend([0x31, 2, 0, 0xBB, 0xBB]);
    assert_eq!(&bytes[28 + zlib_size..], &tail[..]);
}

#[test]
fn section_length_classes() {
    for (len, id, extra) in [(256, 0x02, 0), (4096, 0x12, 0), (65536, 0x22, 0), (300, 0x32, 2), (0, 0x32, 2)] {
        let mut out = Vec::new();
        write_section(&mut out, 2, &vec![9; len]).unwrap();
        assert_eq!(out[0], id);
        assert_eq!(out.len(), 1 + extra + len);
    }
    assert!(matches!(
        write_section(&mut Vec::new(), 16, &[1]),
        Err(ContainerError::TooLarge(_))
    ));
    assert!(write_section(&mut Vec::new(), 0, &vec![0; 70000]).is_err());
}

#[test]
fn bad_magic_and_version() {
    assert!(matches!(read_container(&[0, 0, 1, b'Y']), Err(ContainerError::BadMagic)));
    let section = sample_section(3, 1);
    let mut bytes = write_container(HeaderFlag::Emitted, 10, &section, &[vec![1, 2, 3]]).unwrap();
    bytes[2] = 0x02;
    assert!(matches!(read_container(&bytes), Err(ContainerError::UnsupportedVersion(2))));
    bytes[2] = 0x01;
    bytes[3] = b'Q';
    assert!(matches!(read_container(&bytes), Err(ContainerError::UnsupportedFeature(_))));
}

#[test]
fn out_of_range_segment_id() {
    let section = sample_section(1, 4);
    let streams = vec![vec![1u8]; 4];
    let mut bytes = write_container(HeaderFlag::Emitted, 10, &section, &streams).unwrap();
    let first = bytes.len() - 4 * 4;
    assert_eq!(bytes[first], 0x30);
    bytes[first] = 0x37;
    assert!(matches!(
        read_container(&bytes),
        Err(ContainerError::BadSegmentId { id: 7, segments: 4 })
    ));
}

#[test]
fn truncation_is_reported() {
    let section = sample_section(3, 2);
    let streams = vec![vec![5u8; 5000], vec![6u8; 300]];
    let bytes = write_container(HeaderFlag::Emitted, 10, &section, &streams).unwrap();
    assert!(read_container(&bytes).is_ok());
    for cut in [10, 27, 40, bytes.len() - 1, bytes.len() - 302] {
        assert!(
            matches!(read_container(&bytes[..cut]), Err(ContainerError::TruncatedContainer)),
            "cut at {cut}"
        );
    }
}

#[test]
fn corrupt_zlib_is_a_header_error() {
    let section = sample_section(1, 1);
    let mut bytes = write_container(HeaderFlag::Emitted, 10, &section, &[vec![1]]).unwrap();
    bytes[30] ^= 0x55;
    bytes[31] ^= 0x55;
    assert!(matches!(read_container(&bytes), Err(ContainerError::CorruptHeader(_))));
}

#[test]
fn oversized_output_is_rejected() {
    let section = sample_section(1, 1);
    assert!(matches!(
        write_container(HeaderFlag::Emitted, 1 << 32, &section, &[vec![1]]),
        Err(ContainerError::TooLarge(_))
    ));
}

#[test]
fn large_exif_header_compresses() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let header = jpeg_header(3, Some(fake_exif(&mut rng, 60_000)));
    assert!(header.len() > 60_000);
    let section = HeaderSection {
        jpeg_header: header.clone(),
        blocks_per_channel: vec![4, 1, 1],
        ..HeaderSection::default()
    };
    let bytes = write_container(HeaderFlag::Emitted, 0, &section, &[]).unwrap();
    assert!(bytes.len() < header.len() / 2);
    assert_eq!(read_container(&bytes).unwrap().section.jpeg_header, header);
}

#[test]
fn demux_ignores_cross_segment_interleaving() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let streams: Vec<Vec<u8>> = (0..5)
        .map(|_| (0..rng.random_range(1..20_000)).map(|_| rng.random()).collect())
        .collect();
    let section = sample_section(1, 5);
    let mut canonical = write_container(HeaderFlag::Emitted, 10, &section, &streams).unwrap();
    let zlib_size = u32::from_le_bytes(canonical[24..28].try_into().unwrap()) as usize;
    canonical.truncate(PREAMBLE_LEN + zlib_size);
    for _ in 0..20 {
        // Pick random segments to advance, keeping each one's own order.
        let mut bytes = canonical.clone();
        let mut offsets = vec![0usize; streams.len()];
        while offsets.iter().zip(&streams).any(|(o, s)| *o < s.len()) {
            let id = rng.random_range(0..streams.len());
            let (o, s) = (offsets[id], &streams[id]);
            if o < s.len() {
                let end = (o + rng.random_range(1..3000)).min(s.len());
                write_section(&mut bytes, id, &s[o..end]).unwrap();
                offsets[id] = end;
            }
        }
        assert_eq!(read_container(&bytes).unwrap().streams, streams);
    }
}

fn arb_section() -> impl Strategy<Value = (HeaderSection, Vec<Vec<u8>>, bool, u32)> {
    let info = (any::<u16>(), any::<u32>(), any::<u16>(), any::<[i16; 4]>()).prop_map(
        |(start_row, output_size, handover, dc)| SegmentInfo {
            start_row,
            output_size,
            handover,
            dc,
        },
    );
    (
        prop::bool::ANY,
        prop::collection::vec((info, prop::collection::vec(any::<u8>(), 0..9000)), 0..=16),
        any::<u32>(),
        prop::bool::ANY,
        prop::collection::vec(any::<u8>(), 0..300),
        prop::collection::vec(any::<u8>(), 0..300),
        any::<u32>(),
        any::<u32>(),
    )
        .prop_map(|(color, segs, rst_count, pad, prepend, append, blocks, size)| {
            let channels = if color { 3 } else { 1 };
            let (segments, streams): (Vec<_>, Vec<_>) = segs.into_iter().unzip();
            let section = HeaderSection {
                jpeg_header: jpeg_header(channels, None),
                pad_byte: if pad { 0xFF } else { 0 },
                segments,
                rst_count,
                blocks_per_channel: vec![blocks; channels as usize],
                prepend,
                append,
            };
            (section, streams, color, size)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn structural_round_trip((section, streams, skip, size) in arb_section()) {
        let flag = if skip { HeaderFlag::Skipped } else { HeaderFlag::Emitted };
        let bytes = write_container(flag, size as u64, &section, &streams).unwrap();
        let c = read_container(&bytes).unwrap();
        prop_assert_eq!(c.header.flag, flag);
        prop_assert_eq!(c.header.num_segments as usize, streams.len());
        prop_assert_eq!(c.header.output_size, size);
        prop_assert_eq!(c.header.build_id, build_id());
        prop_assert_eq!(c.section, section);
        // Empty streams produce no sections and read back empty.
        prop_assert_eq!(c.streams, streams);
    }
}
