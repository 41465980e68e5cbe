//! Neighbor-based predictions for the three coefficient classes.
//!
//! All arithmetic is integer. Pixels are carried in 1/8 units (three
//! fractional bits) and the DCT basis is scaled by 2^13.

#![allow(clippy::needless_range_loop)]

use crate::jpeg::QuantizedBlock;

/// Orthonormal 8-point DCT basis `B(x, u)` scaled by 2^13, row `x`.
pub const BASIS: [[i64; 8]; 8] = [
    [2896, 4017, 3784, 3406, 2896, 2276, 1567, 799],
    [2896, 3406, 1567, -799, -2896, -4017, -3784, -2276],
    [2896, 2276, -1567, -4017, -2896, 799, 3784, 3406],
    [2896, 799, -3784, -2276, 2896, 3406, -1567, -4017],
    [2896, -799, -3784, 2276, 2896, -3406, -1567, 4017],
    [2896, -2276, -1567, 4017, -2896, -799, 3784, -3406],
    [2896, -3406, 1567, 799, -2896, 4017, -3784, 2276],
    [2896, -4017, 3784, -3406, 2896, -2276, 1567, -799],
];

const BASIS_SHIFT: u32 = 13;

/// Integer division rounding half away from zero.
#[inline]
pub fn div_round(n: i64, d: i64) -> i64 {
    debug_assert!(d > 0);
    if n >= 0 {
        (n + d / 2) / d
    } else {
        -((-n + d / 2) / d)
    }
}

/// Smallest `s` with ⌊log_1.59(s / 2)⌋ >= k, for k in 1..=9.
const LOG159_HALF_STEPS: [u32; 9] = {
    let mut steps = [0u32; 9];
    // 1.59^k <= s/2  <=>  2 * 159^k <= s * 100^k
    let (mut num, mut den) = (2u128, 1u128);
    let mut k = 0;
    while k < 9 {
        num *= 159;
        den *= 100;
        steps[k] = num.div_ceil(den) as u32;
        k += 1;
    }
    steps
};

/// ⌊log_1.59(s / 2)⌋ clamped to 0..=9, where `s` is a sum of two counts.
#[inline]
fn log159_half(s: u32) -> usize {
    LOG159_HALF_STEPS.iter().take_while(|&&t| s >= t).count()
}

/// Context for the nonzero count: ⌊log_1.59((n_A + n_L) / 2)⌋ in 0..=9.
/// A missing neighbor contributes 0.
pub fn nonzero_count_context(n_above: Option<u8>, n_left: Option<u8>) -> usize {
    log159_half(n_above.unwrap_or(0) as u32 + n_left.unwrap_or(0) as u32)
}

/// ⌊log_1.59 n⌋ in 0..=9 (0 for n = 0).
pub fn log159(n: u32) -> usize {
    log159_half(2 * n)
}

/// ⌊log2(x + 1)⌋ for x >= 0, clamped to `max`.
#[inline]
pub fn log2_bucket(x: u64, max: usize) -> usize {
    ((64 - (x + 1).leading_zeros() - 1) as usize).min(max)
}

/// 0 for zero, 1 for positive, 2 for negative.
#[inline]
pub fn sign_class(x: i64) -> usize {
    match x.signum() {
        0 => 0,
        1 => 1,
        _ => 2,
    }
}

/// Weighted neighbor average for one coefficient, kept as the exact numerator
/// of F̄ = (13 F_A + 13 F_L + 6 F_AL) / 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Average {
    pub sum32: i32,
    /// Same weights over magnitudes.
    pub abs_sum32: i32,
}

impl Average {
    pub fn value(&self) -> f64 {
        self.sum32 as f64 / 32.0
    }

    /// ⌊log2(|F̄| + 1)⌋ over the magnitude-weighted average, 0..=10.
    pub fn bucket(&self) -> usize {
        // ⌊log2((a + 32) / 32)⌋ = ⌊log2(a + 32)⌋ - 5
        let a = self.abs_sum32 as u64 + 32;
        ((63 - a.leading_zeros()) as usize - 5).min(10)
    }

    pub fn sign(&self) -> usize {
        sign_class(self.sum32 as i64)
    }

    pub fn rounded(&self) -> i32 {
        div_round(self.sum32 as i64, 32) as i32
    }
}

/// F̄ for raster position `pos`; missing neighbors count as zero.
pub fn predict_7x7(
    above: Option<&QuantizedBlock>,
    left: Option<&QuantizedBlock>,
    above_left: Option<&QuantizedBlock>,
    pos: usize,
) -> Average {
    let get = |b: Option<&QuantizedBlock>| b.map_or(0, |b| b.coeffs[pos] as i32);
    let (a, l, al) = (get(above), get(left), get(above_left));
    Average {
        sum32: 13 * a + 13 * l + 6 * al,
        abs_sum32: 13 * a.abs() + 13 * l.abs() + 6 * al.abs(),
    }
}

/// Which edge of the block an edge coefficient describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// Coefficients (u, 0), u >= 1: horizontal variation, predicted from the block above.
    Row,
    /// Coefficients (0, v), v >= 1: vertical variation, predicted from the block to the left.
    Column,
}

impl Orientation {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Raster position of the i-th (1..=7) edge coefficient.
    #[inline]
    pub fn position(self, i: usize) -> usize {
        match self {
            Orientation::Row => i,
            Orientation::Column => i * 8,
        }
    }

    /// Raster position of (along = i, across = j) in this orientation's frame.
    #[inline]
    fn at(self, i: usize, j: usize) -> usize {
        match self {
            Orientation::Row => j * 8 + i,
            Orientation::Column => i * 8 + j,
        }
    }
}

/// Edge-continuity prediction of edge coefficient `i` (1..=7), in quantized units.
///
/// For the row edge, the bottom pixel row of the block above is assumed to
/// equal the top pixel row of the current block, which in the 1D-DCT domain
/// gives Σ_v B(7,v) A(i,v) = B(0,0) F(i,0) + Σ_{v≥1} B(0,v) F(i,v). The column
/// edge is the transposed relation against the block to the left.
pub fn predict_edge(
    neighbor: Option<&QuantizedBlock>,
    current: &QuantizedBlock,
    quant: &[u16; 64],
    orientation: Orientation,
    i: usize,
) -> i32 {
    let Some(neighbor) = neighbor else {
        return 0;
    };
    let mut num = 0i64;
    for j in 0..8 {
        let pos = orientation.at(i, j);
        num += BASIS[7][j] * neighbor.coeffs[pos] as i64 * quant[pos] as i64;
    }
    for j in 1..8 {
        let pos = orientation.at(i, j);
        num -= BASIS[0][j] * current.coeffs[pos] as i64 * quant[pos] as i64;
    }
    let den = BASIS[0][0] * quant[orientation.position(i)] as i64;
    div_round(num, den).clamp(-2047, 2047) as i32
}

/// Pixels of one block in 1/8 units, `[y][x]`, without the +128 level shift.
pub type Pixels = [[i32; 8]; 8];

/// Inverse DCT in fixed point. With `with_dc = false` the DC term is skipped.
///
/// Uses `B(7 - y, v) = (-1)^v B(y, v)` to fold each pass in half.
pub fn idct(block: &QuantizedBlock, quant: &[u16; 64], with_dc: bool) -> Pixels {
    // T[y][u] = Σ_v B(y, v) F(u, v) Q(u, v), scale 2^13, split by parity of v.
    let mut even = [[0i64; 8]; 4];
    let mut odd = [[0i64; 8]; 4];
    let mut any = false;
    for v in 0..8 {
        let half = if v % 2 == 0 { &mut even } else { &mut odd };
        for u in 0..8 {
            let pos = v * 8 + u;
            if pos == 0 && !with_dc {
                continue;
            }
            let f = block.coeffs[pos] as i64 * quant[pos] as i64;
            if f == 0 {
                continue;
            }
            any = true;
            for (y, row) in half.iter_mut().enumerate() {
                row[u] += BASIS[y][v] * f;
            }
        }
    }
    if !any {
        return [[0; 8]; 8];
    }
    let mut t = [[0i64; 8]; 8];
    for y in 0..4 {
        for u in 0..8 {
            t[y][u] = even[y][u] + odd[y][u];
            t[7 - y][u] = even[y][u] - odd[y][u];
        }
    }
    let mut out = [[0i32; 8]; 8];
    let shift = 2 * BASIS_SHIFT - 3;
    let half = 1i64 << (shift - 1);
    for (row, out_row) in t.iter().zip(out.iter_mut()) {
        for x in 0..4 {
            let (mut e, mut o) = (0i64, 0i64);
            for u in (0..8).step_by(2) {
                e += BASIS[x][u] * row[u];
                o += BASIS[x][u + 1] * row[u + 1];
            }
            out_row[x] = ((e + o + half) >> shift) as i32;
            out_row[7 - x] = ((e - o + half) >> shift) as i32;
        }
    }
    out
}

/// The pixel rows and columns a later block needs from this one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgePixels {
    /// Rows 6 and 7, indexed by x.
    pub bottom: [[i32; 8]; 2],
    /// Columns 6 and 7, indexed by y.
    pub right: [[i32; 8]; 2],
}

impl EdgePixels {
    pub fn from_pixels(p: &Pixels) -> Self {
        let mut e = EdgePixels {
            bottom: [p[6], p[7]],
            right: [[0; 8]; 2],
        };
        for y in 0..8 {
            e.right[0][y] = p[y][6];
            e.right[1][y] = p[y][7];
        }
        e
    }

    /// Edge pixels of a block from its AC-only pixels plus the DC offset,
    /// which is exactly `dc * q` in 1/8 units.
    pub fn with_dc(ac_pixels: &Pixels, dc: i32, q_dc: u16) -> Self {
        let shift = dc * q_dc as i32;
        let mut e = Self::from_pixels(ac_pixels);
        for line in e.bottom.iter_mut().chain(e.right.iter_mut()) {
            for p in line.iter_mut() {
                *p += shift;
            }
        }
        e
    }
}

/// DC predictor variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub enum DcPrediction {
    /// Match linear extrapolations of both sides of every border pair.
    #[default]
    Gradient,
    /// Match border pixels directly and average the middle half of the pairs.
    MedianPairs,
    /// Predict from the previous (left) block's DC, as baseline JPEG does.
    PreviousDelta,
}

pub const DC_CONFIDENCE_BUCKETS: usize = 10;

/// Neighbor information available to the DC predictor.
#[derive(Debug, Clone, Copy, Default)]
pub struct DcNeighbors<'a> {
    pub above: Option<&'a EdgePixels>,
    pub left: Option<&'a EdgePixels>,
    pub above_dc: Option<i16>,
    pub left_dc: Option<i16>,
}

/// Predicted DC and a confidence bucket (0 = neighbors agree closely).
pub fn predict_dc(
    mode: DcPrediction,
    neighbors: DcNeighbors<'_>,
    ac_pixels: &Pixels,
    q_dc: u16,
) -> (i32, usize) {
    let q = q_dc as i64;
    if mode == DcPrediction::PreviousDelta {
        let pred = neighbors.left_dc.or(neighbors.above_dc).unwrap_or(0);
        return (pred as i32, 0);
    }
    let mut pairs = [0i64; 16];
    let mut n = 0;
    let gradient = mode == DcPrediction::Gradient;
    if let Some(a) = neighbors.above {
        for x in 0..8 {
            let (a6, a7) = (a.bottom[0][x] as i64, a.bottom[1][x] as i64);
            let (c0, c1) = (ac_pixels[0][x] as i64, ac_pixels[1][x] as i64);
            pairs[n] = if gradient {
                div_round(3 * a7 - a6 - 3 * c0 + c1, 2)
            } else {
                a7 - c0
            };
            n += 1;
        }
    }
    if let Some(l) = neighbors.left {
        for y in 0..8 {
            let (l6, l7) = (l.right[0][y] as i64, l.right[1][y] as i64);
            let (c0, c1) = (ac_pixels[y][0] as i64, ac_pixels[y][1] as i64);
            pairs[n] = if gradient {
                div_round(3 * l7 - l6 - 3 * c0 + c1, 2)
            } else {
                l7 - c0
            };
            n += 1;
        }
    }
    if n == 0 {
        return (0, DC_CONFIDENCE_BUCKETS - 1);
    }
    let pairs = &mut pairs[..n];
    let (min, max) = (*pairs.iter().min().unwrap(), *pairs.iter().max().unwrap());
    let (sum, count) = if gradient {
        (pairs.iter().sum::<i64>(), n as i64)
    } else {
        pairs.sort_unstable();
        let middle = &pairs[n / 4..n - n / 4];
        (middle.iter().sum::<i64>(), middle.len() as i64)
    };
    // Pixel offsets are in 1/8 units and DC contributes DC * q / 8 per pixel.
    let pred = div_round(sum, count * q).clamp(-2047, 2047) as i32;
    let spread = ((max - min) / q) as u64;
    (pred, log2_bucket(spread, DC_CONFIDENCE_BUCKETS - 1))
}
