//! Deterministic JPEG corpus for tests, benches and desk runs.
//!
//! Every sample is a pure function of its index, so test failures can be
//! reproduced by name. Photographic samples are derived from a handful of
//! public-domain photographs shipped in `fixtures/`.

use std::sync::OnceLock;

use anyhow::{Context, Result};
use image::{imageops, GrayImage, ImageEncoder, RgbImage};
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    /// Derived from a real photograph.
    Photographic,
    /// Smooth synthetic gradients.
    Gradient,
    /// Uniform random noise.
    Noise,
    Progressive,
    Cmyk,
    NotAnImage,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub name: String,
    pub kind: Kind,
    pub bytes: Vec<u8>,
}

/// One decoded fixture photograph.
pub enum Photo {
    Rgb(RgbImage),
    Gray(GrayImage),
}

impl Photo {
    pub fn dimensions(&self) -> (u32, u32) {
        match self {
            Photo::Rgb(i) => i.dimensions(),
            Photo::Gray(i) => i.dimensions(),
        }
    }
}

const FIXTURES: &[(&str, &[u8])] = &[
    ("astronaut", include_bytes!("../fixtures/astronaut.png")),
    ("brick", include_bytes!("../fixtures/brick.png")),
    ("camera", include_bytes!("../fixtures/camera.png")),
    ("chelsea", include_bytes!("../fixtures/chelsea.png")),
    ("coffee", include_bytes!("../fixtures/coffee.png")),
    ("grass", include_bytes!("../fixtures/grass.png")),
    ("gravel", include_bytes!("../fixtures/gravel.png")),
    ("hubble", include_bytes!("../fixtures/hubble_deep_field.jpg")),
    ("retina", include_bytes!("../fixtures/retina.jpg")),
    ("rocket", include_bytes!("../fixtures/rocket.jpg")),
];

/// The decoded fixture photographs, loaded once.
pub fn photos() -> &'static [(&'static str, Photo)] {
    static PHOTOS: OnceLock<Vec<(&'static str, Photo)>> = OnceLock::new();
    PHOTOS.get_or_init(|| {
        FIXTURES
            .iter()
            .map(|&(name, bytes)| {
                let img = image::load_from_memory(bytes).expect("fixture decodes");
                let photo = match img {
                    image::DynamicImage::ImageLuma8(g) => Photo::Gray(g),
                    other => Photo::Rgb(other.to_rgb8()),
                };
                (name, photo)
            })
            .collect()
    })
}

/// Knobs for [`encode`].
#[derive(Debug, Clone)]
pub struct JpegOptions {
    pub quality: u8,
    /// (h, v) luma sampling factors; ignored for grayscale.
    pub sampling: (u8, u8),
    pub restart_interval: Option<u16>,
    pub progressive: bool,
    /// Raw APP1 payload (starting with "Exif\0\0").
    pub exif: Option<Vec<u8>>,
    pub trailing: Vec<u8>,
    /// Use the `image` crate's encoder instead of `jpeg-encoder`.
    pub alternate_encoder: bool,
}

impl Default for JpegOptions {
    fn default() -> Self {
        JpegOptions {
            quality: 85,
            sampling: (2, 2),
            restart_interval: None,
            progressive: false,
            exif: None,
            trailing: Vec::new(),
            alternate_encoder: false,
        }
    }
}

/// Encode interleaved 8-bit pixels (1 or 3 channels) as a JPEG.
pub fn encode(pixels: &[u8], width: u32, height: u32, channels: u8, opts: &JpegOptions) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if opts.alternate_encoder {
        let color = if channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, opts.quality)
            .write_image(pixels, width, height, color)
            .context("image crate jpeg encode")?;
    } else {
        let mut enc = Encoder::new(&mut out, opts.quality);
        let sampling = SamplingFactor::from_factors(opts.sampling.0, opts.sampling.1)
            .context("unsupported sampling factor")?;
        enc.set_sampling_factor(sampling);
        enc.set_progressive(opts.progressive);
        if let Some(ri) = opts.restart_interval {
            enc.set_restart_interval(ri);
        }
        if let Some(exif) = &opts.exif {
            enc.add_app_segment(1, exif.clone())?;
        }
        let color = if channels == 1 { ColorType::Luma } else { ColorType::Rgb };
        enc.encode(pixels, width as u16, height as u16, color)?;
    }
    out.extend_from_slice(&opts.trailing);
    Ok(out)
}

/// A plausible-looking EXIF APP1 payload of roughly `size` bytes.
pub fn fake_exif(rng: &mut impl Rng, size: usize) -> Vec<u8> {
    let mut data = b"Exif\0\0II*\0\x08\0\0\0".to_vec();
    let tags = ["Make\0CameraCo", "Model\0Desk 1", "Software\0corpus", "DateTime\x002016:07:01 12:00:00"];
    while data.len() < size {
        let tag = tags[rng.random_range(0..tags.len())];
        data.extend_from_slice(tag.as_bytes());
        let filler = rng.random_range(0..32);
        data.extend((0..filler).map(|_| rng.random_range(0..4u8)));
    }
    data.truncate(size.max(14));
    data
}

fn rng_for(kind: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(kind << 48 ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_options(rng: &mut ChaCha8Rng, gray: bool) -> JpegOptions {
    let sampling = [(1, 1), (2, 1), (2, 2), (2, 2), (1, 2)][rng.random_range(0..5)];
    JpegOptions {
        quality: rng.random_range(50..=95),
        sampling: if gray { (1, 1) } else { sampling },
        restart_interval: rng.random_bool(0.2).then(|| rng.random_range(1..40)),
        progressive: false,
        exif: rng.random_bool(0.3).then(|| {
            let size = rng.random_range(64..8192);
            fake_exif(rng, size)
        }),
        trailing: if rng.random_bool(0.1) {
            let n = rng.random_range(1..600);
            if rng.random_bool(0.5) {
                vec![0; n]
            } else {
                (0..n).map(|_| rng.random()).collect()
            }
        } else {
            Vec::new()
        },
        alternate_encoder: rng.random_bool(0.15),
    }
}

/// Photographic sample number `index`: a random crop of a fixture photo,
/// possibly downscaled and flipped, at a random quality in 50..=95.
pub fn photographic(index: u64) -> Sample {
    let mut rng = rng_for(1, index);
    let all = photos();
    let (name, photo) = &all[rng.random_range(0..all.len())];
    let (pw, ph) = photo.dimensions();
    let downscale = rng.random_bool(0.2);
    let max = if downscale { 640 } else { 384 };
    let w = rng.random_range(32..=max.min(pw));
    let h = rng.random_range(32..=max.min(ph));
    let (x, y) = (rng.random_range(0..=pw - w), rng.random_range(0..=ph - h));
    let flip = rng.random_range(0..3);
    let force_gray = rng.random_bool(0.1);
    let gray = force_gray || matches!(photo, Photo::Gray(_));
    let mut opts = random_options(&mut rng, gray);
    if opts.alternate_encoder {
        opts.restart_interval = None;
    }

    macro_rules! prepare {
        ($img:expr) => {{
            let mut img = imageops::crop_imm($img, x, y, w, h).to_image();
            if downscale {
                img = imageops::resize(&img, w / 2, h / 2, imageops::FilterType::Triangle);
            }
            match flip {
                1 => imageops::flip_horizontal(&img),
                2 => imageops::flip_vertical(&img),
                _ => img,
            }
        }};
    }
    let (pixels, width, height, channels) = match photo {
        Photo::Rgb(img) if !force_gray => {
            let img = prepare!(img);
            let (w, h) = img.dimensions();
            (img.into_raw(), w, h, 3)
        }
        Photo::Rgb(img) => {
            let gray = imageops::grayscale(img);
            let img = prepare!(&gray);
            let (w, h) = img.dimensions();
            (img.into_raw(), w, h, 1)
        }
        Photo::Gray(img) => {
            let img = prepare!(img);
            let (w, h) = img.dimensions();
            (img.into_raw(), w, h, 1)
        }
    };
    let bytes = encode(&pixels, width, height, channels, &opts).expect("encode photographic sample");
    Sample {
        name: format!("photo-{index:04}-{name}-q{}", opts.quality),
        kind: Kind::Photographic,
        bytes,
    }
}

/// Smooth synthetic image: sums of linear and radial gradients.
pub fn gradient(index: u64) -> Sample {
    let mut rng = rng_for(2, index);
    let (w, h) = (rng.random_range(8..300u32), rng.random_range(8..300u32));
    let coeffs: [f32; 9] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let (cx, cy) = (rng.random_range(0.0..w as f32), rng.random_range(0.0..h as f32));
    let mut pixels = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f32 / w as f32, y as f32 / h as f32);
            let r = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt() / (w + h) as f32;
            for c in 0..3 {
                let v = 128.0 + 120.0 * (coeffs[c * 3] * fx + coeffs[c * 3 + 1] * fy + coeffs[c * 3 + 2] * r);
                pixels.push(v.clamp(0.0, 255.0) as u8);
            }
        }
    }
    let opts = random_options(&mut rng, false);
    Sample {
        name: format!("gradient-{index:04}-q{}", opts.quality),
        kind: Kind::Gradient,
        bytes: encode(&pixels, w, h, 3, &opts).expect("encode gradient sample"),
    }
}

/// Uniform RGB or gray noise.
pub fn noise(index: u64) -> Sample {
    let mut rng = rng_for(3, index);
    let (w, h) = (rng.random_range(1..200u32), rng.random_range(1..200u32));
    let channels = if rng.random_bool(0.3) { 1 } else { 3 };
    let pixels: Vec<u8> = (0..w * h * channels as u32).map(|_| rng.random()).collect();
    let opts = random_options(&mut rng, channels == 1);
    Sample {
        name: format!("noise-{index:04}-q{}", opts.quality),
        kind: Kind::Noise,
        bytes: encode(&pixels, w, h, channels, &opts).expect("encode noise sample"),
    }
}

pub fn progressive(index: u64) -> Sample {
    let mut rng = rng_for(4, index);
    let (w, h) = (rng.random_range(16..128u32), rng.random_range(16..128u32));
    let pixels: Vec<u8> = (0..w * h * 3).map(|i| (i % 251) as u8).collect();
    let opts = JpegOptions {
        progressive: true,
        ..JpegOptions::default()
    };
    Sample {
        name: format!("progressive-{index:04}"),
        kind: Kind::Progressive,
        bytes: encode(&pixels, w, h, 3, &opts).expect("encode progressive sample"),
    }
}

pub fn cmyk(index: u64) -> Sample {
    let mut rng = rng_for(5, index);
    let (w, h) = (rng.random_range(8..64u16), rng.random_range(8..64u16));
    let pixels: Vec<u8> = (0..w as usize * h as usize * 4).map(|_| rng.random()).collect();
    let mut out = Vec::new();
    Encoder::new(&mut out, 80)
        .encode(&pixels, w, h, ColorType::Cmyk)
        .expect("encode cmyk sample");
    Sample {
        name: format!("cmyk-{index:04}"),
        kind: Kind::Cmyk,
        bytes: out,
    }
}

/// Bytes that are not a JPEG: text, PNG data, or random bytes behind an SOI marker.
pub fn not_an_image(index: u64) -> Sample {
    let mut rng = rng_for(6, index);
    let bytes = match index % 3 {
        0 => format!("plain text file number {index}\n").repeat(rng.random_range(1..50)).into_bytes(),
        1 => FIXTURES[1].1[..rng.random_range(64..4096)].to_vec(),
        _ => {
            let mut b = vec![0xFF, 0xD8];
            b.extend((0..rng.random_range(1..2000)).map(|_| rng.random::<u8>() & 0xFE));
            b
        }
    };
    Sample {
        name: format!("not-image-{index:04}"),
        kind: Kind::NotAnImage,
        bytes,
    }
}

/// Mixed corpus of `n` samples: mostly photographic, with synthetic files and
/// a few rejects.
pub fn desk_corpus(n: usize) -> Vec<Sample> {
    (0..n as u64)
        .map(|i| match i % 20 {
            0..=13 => photographic(i),
            14 | 15 => gradient(i),
            16 | 17 => noise(i),
            18 => match i % 3 {
                0 => progressive(i),
                1 => cmyk(i),
                _ => not_an_image(i),
            },
            _ => photographic(i + 1_000_000),
        })
        .collect()
}

/// First `n` photographic samples.
pub fn photographic_corpus(n: usize) -> Vec<Sample> {
    (0..n as u64).map(photographic).collect()
}

/// A photographic image with film-grain noise, large enough that the JPEG
/// exceeds `min_bytes`.
pub fn large(index: u64, min_bytes: usize) -> Sample {
    let mut rng = rng_for(7, index);
    let all = photos();
    let (name, photo) = loop {
        let candidate = &all[rng.random_range(0..all.len())];
        if matches!(candidate.1, Photo::Rgb(_)) {
            break candidate;
        }
    };
    let Photo::Rgb(src) = photo else { unreachable!() };
    let quality = rng.random_range(92..=98);
    let grain = rng.random_range(40..90u8);
    let restart_interval = rng.random_bool(0.3).then(|| rng.random_range(4..64));
    let sampling = [(1, 1), (2, 2), (2, 1)][rng.random_range(0..3)];
    let mut side = 1536u32;
    loop {
        let base = imageops::resize(src, side, side * 3 / 4, imageops::FilterType::Nearest);
        let mut pixels = base.into_raw();
        for p in pixels.iter_mut() {
            let n = rng.random_range(0..grain) as i16 - grain as i16 / 2;
            *p = (*p as i16 + n).clamp(0, 255) as u8;
        }
        let opts = JpegOptions {
            quality,
            sampling,
            restart_interval,
            ..JpegOptions::default()
        };
        let bytes = encode(&pixels, side, side * 3 / 4, 3, &opts).expect("encode large sample");
        if bytes.len() > min_bytes {
            return Sample {
                name: format!("large-{index:02}-{name}-q{quality}"),
                kind: Kind::Photographic,
                bytes,
            };
        }
        side = (side as f64 * ((min_bytes as f64 / bytes.len() as f64).sqrt() * 1.05)).ceil() as u32;
        side = side.div_ceil(16) * 16;
    }
}
