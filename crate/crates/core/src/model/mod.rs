//! Context model: Exp-Golomb binarization of every coefficient, with each
//! bit coded under a statistic bin chosen from already-coded neighbors.
//!
//! Coding and decoding share one code path. [`BitCoder::code_bit`] takes the
//! bit to encode and returns the bit actually coded, so the encoder passes
//! values through while the decoder ignores its input and returns what it read.

mod predict;
mod segment;

use crate::jpeg::{QuantizedBlock, ZIGZAG};
use crate::range_coder::{
    BinGrid, ByteSource, CoderError, RangeDecoder, RangeEncoder, StatisticBin,
};

pub use predict::{
    div_round, idct, log159, log2_bucket, nonzero_count_context, predict_7x7, predict_dc,
    predict_edge, sign_class, Average, DcNeighbors, DcPrediction, EdgePixels, Orientation,
    Pixels, BASIS, DC_CONFIDENCE_BUCKETS,
};
pub use segment::{
    encode_segment, measure, BlockContext, BlockSource, NeighborInfo, RowBuffer, SegmentCoder,
};

/// Largest Exp-Golomb length for AC coefficients (|v| < 2^11).
pub const AC_MAX_LEN: usize = 11;
/// Largest Exp-Golomb length for DC errors (|v| < 2^12).
pub const DC_MAX_LEN: usize = 12;

/// Which part of the image a coded bit belongs to, for size accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum CostClass {
    SevenBySeven = 0,
    Edge = 1,
    Dc = 2,
}

/// Bits spent per [`CostClass`], from the model's own probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostTally {
    pub bits: [f64; 3],
}

impl CostTally {
    pub fn bytes(&self, class: CostClass) -> f64 {
        self.bits[class as usize] / 8.0
    }

    pub fn total_bytes(&self) -> f64 {
        self.bits.iter().sum::<f64>() / 8.0
    }

    pub fn add(&mut self, other: &CostTally) {
        for (a, b) in self.bits.iter_mut().zip(other.bits) {
            *a += b;
        }
    }
}

/// One binary decision through a statistic bin.
pub trait BitCoder {
    fn code_bit(&mut self, bin: &mut StatisticBin, bit: bool) -> Result<bool, CoderError>;

    /// Attribute subsequent bits to `class`.
    fn set_class(&mut self, _class: CostClass) {}
}

fn cost_table() -> &'static [f32] {
    static TABLE: std::sync::OnceLock<Vec<f32>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        (0..65536u32)
            .map(|i| {
                let bin = StatisticBin::from_counts((i >> 8) as u8, i as u8);
                bin.cost(false) as f32
            })
            .collect()
    })
}

#[inline]
fn bit_cost(bin: &StatisticBin, bit: bool) -> f64 {
    // Cost of a one under (z, o) equals the cost of a zero under (o, z).
    let (z, o) = if bit {
        (bin.count_one(), bin.count_zero())
    } else {
        (bin.count_zero(), bin.count_one())
    };
    cost_table()[(z as usize) << 8 | o as usize] as f64
}

/// Encoding side: range-codes every bit and tallies its cost.
#[derive(Default)]
pub struct Encoder {
    encoder: RangeEncoder,
    class: usize,
    tally: CostTally,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tally(&self) -> CostTally {
        self.tally
    }

    pub fn finish(mut self) -> Result<(Vec<u8>, CostTally), CoderError> {
        Ok((self.encoder.finish()?, self.tally))
    }
}

impl BitCoder for Encoder {
    #[inline(always)]
    fn code_bit(&mut self, bin: &mut StatisticBin, bit: bool) -> Result<bool, CoderError> {
        self.tally.bits[self.class] += bit_cost(bin, bit);
        self.encoder.put_bit(bin, bit)?;
        Ok(bit)
    }

    fn set_class(&mut self, class: CostClass) {
        self.class = class as usize;
    }
}

/// Cost-only coder: adapts bins and tallies costs without producing bytes.
#[derive(Default)]
pub struct CostMeter {
    class: usize,
    pub tally: CostTally,
}

impl BitCoder for CostMeter {
    #[inline]
    fn code_bit(&mut self, bin: &mut StatisticBin, bit: bool) -> Result<bool, CoderError> {
        self.tally.bits[self.class] += bit_cost(bin, bit);
        bin.record(bit);
        Ok(bit)
    }

    fn set_class(&mut self, class: CostClass) {
        self.class = class as usize;
    }
}

/// Decoding side.
pub struct Decoder<S> {
    decoder: RangeDecoder<S>,
}

impl<S: ByteSource> Decoder<S> {
    pub fn new(source: S) -> Self {
        Decoder {
            decoder: RangeDecoder::new(source),
        }
    }

    pub fn source(&self) -> &S {
        self.decoder.source()
    }
}

impl<S: ByteSource> BitCoder for Decoder<S> {
    #[inline(always)]
    fn code_bit(&mut self, bin: &mut StatisticBin, _bit: bool) -> Result<bool, CoderError> {
        self.decoder.get_bit(bin)
    }
}

/// Edge predictor variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub enum EdgePrediction {
    /// Edge continuity against the neighboring block's full coefficient column/row.
    #[default]
    Lakhani,
    /// The 7x7 weighted neighbor average applied to edge coefficients.
    Average,
}

/// Coding order of the 7x7 coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub enum CoefficientOrder {
    #[default]
    Zigzag,
    Raster,
}

/// Model switches. The container format always uses the defaults; the
/// alternatives exist for measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct ModelOptions {
    pub edge: EdgePrediction,
    pub dc: DcPrediction,
    pub order: CoefficientOrder,
}

/// Raster positions of the 49 interior coefficients in coding order.
pub fn interior_order(order: CoefficientOrder) -> [usize; 49] {
    let mut out = [0usize; 49];
    let raster = (0..64).collect::<Vec<_>>();
    let source: &[usize] = match order {
        CoefficientOrder::Zigzag => &ZIGZAG,
        CoefficientOrder::Raster => &raster,
    };
    let interior = source.iter().copied().filter(|&p| p % 8 != 0 && p / 8 != 0);
    for (slot, pos) in out.iter_mut().zip(interior) {
        *slot = pos;
    }
    out
}

/// Channel kind index: 0 for luma (first component), 1 for chroma.
pub fn channel_kind(component: usize) -> usize {
    usize::from(component > 0)
}

const KINDS: usize = 2;
const NZ_CONTEXTS: usize = 10;
const AVG_BUCKETS: usize = 11;
const EDGE_CLASSES: usize = 12;

/// Every statistic bin of one segment's model.
#[derive(Clone)]
pub struct ModelBins {
    /// [kind][context][tree node 1..=63]
    nz7x7: BinGrid<3>,
    /// [kind][coefficient][⌊log1.59 remaining⌋][average bucket][unary position]
    ac_exp: BinGrid<5>,
    /// [kind][coefficient][average sign]
    ac_sign: BinGrid<3>,
    /// [kind][coefficient][length][bit position]
    ac_res: BinGrid<4>,
    /// [kind][orientation][⌊log1.59 n7x7⌋][neighbor edge count][tree node 1..=7]
    edge_nz: BinGrid<5>,
    /// [kind][orientation][index][remaining][prediction class][unary position]
    edge_exp: BinGrid<6>,
    /// [kind][orientation][index][prediction sign][prediction class]
    edge_sign: BinGrid<5>,
    /// [kind][orientation][index][length][bit position]
    edge_res: BinGrid<5>,
    /// [kind][confidence][unary position]
    dc_exp: BinGrid<3>,
    /// [kind][confidence]
    dc_sign: BinGrid<2>,
    /// [kind][length][bit position]
    dc_res: BinGrid<3>,
}

impl Default for ModelBins {
    fn default() -> Self {
        ModelBins {
            nz7x7: BinGrid::new("nz7x7", [KINDS, NZ_CONTEXTS, 63]),
            ac_exp: BinGrid::new("ac_exp", [KINDS, 49, NZ_CONTEXTS, AVG_BUCKETS, AC_MAX_LEN]),
            ac_sign: BinGrid::new("ac_sign", [KINDS, 49, 3]),
            ac_res: BinGrid::new("ac_res", [KINDS, 49, AC_MAX_LEN + 1, AC_MAX_LEN - 1]),
            edge_nz: BinGrid::new("edge_nz", [KINDS, 2, NZ_CONTEXTS, 8, 7]),
            edge_exp: BinGrid::new("edge_exp", [KINDS, 2, 7, 8, EDGE_CLASSES, AC_MAX_LEN]),
            edge_sign: BinGrid::new("edge_sign", [KINDS, 2, 7, 3, EDGE_CLASSES]),
            edge_res: BinGrid::new("edge_res", [KINDS, 2, 7, AC_MAX_LEN + 1, AC_MAX_LEN - 1]),
            dc_exp: BinGrid::new("dc_exp", [KINDS, DC_CONFIDENCE_BUCKETS, DC_MAX_LEN]),
            dc_sign: BinGrid::new("dc_sign", [KINDS, DC_CONFIDENCE_BUCKETS]),
            dc_res: BinGrid::new("dc_res", [KINDS, DC_MAX_LEN + 1, DC_MAX_LEN - 1]),
        }
    }
}

/// One named range of the bin layout.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct LayoutEntry {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub bins: usize,
}

impl ModelBins {
    pub fn layout(&self) -> Vec<LayoutEntry> {
        fn entry<const D: usize>(g: &BinGrid<D>) -> LayoutEntry {
            LayoutEntry {
                name: g.name(),
                shape: g.shape().to_vec(),
                bins: g.len(),
            }
        }
        vec![
            entry(&self.nz7x7),
            entry(&self.ac_exp),
            entry(&self.ac_sign),
            entry(&self.ac_res),
            entry(&self.edge_nz),
            entry(&self.edge_exp),
            entry(&self.edge_sign),
            entry(&self.edge_res),
            entry(&self.dc_exp),
            entry(&self.dc_sign),
            entry(&self.dc_res),
        ]
    }

    pub fn total_bins(&self) -> usize {
        self.layout().iter().map(|e| e.bins).sum()
    }
}

/// Total number of statistic bins in one model instance.
pub const TOTAL_BINS: usize = 168_616;

/// Bin selection for the bits of one Exp-Golomb value.
trait GolombBins {
    fn unary(&mut self, i: usize) -> &mut StatisticBin;
    fn sign(&mut self) -> &mut StatisticBin;
    fn residual(&mut self, len: usize, bit: usize) -> &mut StatisticBin;
}

/// Code `value` as: unary bit length, terminating zero (omitted at `max_len`),
/// sign (1 = negative) when nonzero, then the bits below the leading one, MSB first.
fn exp_golomb<C: BitCoder, B: GolombBins>(
    coder: &mut C,
    bins: &mut B,
    value: i32,
    max_len: usize,
) -> Result<i32, CoderError> {
    let magnitude = value.unsigned_abs();
    let want_len = (32 - magnitude.leading_zeros()) as usize;
    if want_len > max_len {
        return Err(CoderError::Corrupt("value too large for exp-golomb length"));
    }
    let mut len = 0;
    while len < max_len && coder.code_bit(bins.unary(len), len < want_len)? {
        len += 1;
    }
    if len == 0 {
        return Ok(0);
    }
    let negative = coder.code_bit(bins.sign(), value < 0)?;
    let mut out = 1u32;
    for bit in (0..len - 1).rev() {
        let b = coder.code_bit(bins.residual(len, bit), magnitude >> bit & 1 == 1)?;
        out = out << 1 | b as u32;
    }
    Ok(if negative { -(out as i32) } else { out as i32 })
}

struct AcBins<'a> {
    bins: &'a mut ModelBins,
    kind: usize,
    coef: usize,
    nz: usize,
    bucket: usize,
    sign: usize,
}

impl GolombBins for AcBins<'_> {
    fn unary(&mut self, i: usize) -> &mut StatisticBin {
        self.bins.ac_exp.at([self.kind, self.coef, self.nz, self.bucket, i])
    }
    fn sign(&mut self) -> &mut StatisticBin {
        self.bins.ac_sign.at([self.kind, self.coef, self.sign])
    }
    fn residual(&mut self, len: usize, bit: usize) -> &mut StatisticBin {
        self.bins.ac_res.at([self.kind, self.coef, len, bit])
    }
}

struct EdgeBins<'a> {
    bins: &'a mut ModelBins,
    kind: usize,
    orient: usize,
    index: usize,
    remaining: usize,
    class: usize,
    sign: usize,
}

impl GolombBins for EdgeBins<'_> {
    fn unary(&mut self, i: usize) -> &mut StatisticBin {
        self.bins
            .edge_exp
            .at([self.kind, self.orient, self.index, self.remaining, self.class, i])
    }
    fn sign(&mut self) -> &mut StatisticBin {
        self.bins
            .edge_sign
            .at([self.kind, self.orient, self.index, self.sign, self.class])
    }
    fn residual(&mut self, len: usize, bit: usize) -> &mut StatisticBin {
        self.bins
            .edge_res
            .at([self.kind, self.orient, self.index, len, bit])
    }
}

struct DcBins<'a> {
    bins: &'a mut ModelBins,
    kind: usize,
    confidence: usize,
}

impl GolombBins for DcBins<'_> {
    fn unary(&mut self, i: usize) -> &mut StatisticBin {
        self.bins.dc_exp.at([self.kind, self.confidence, i])
    }
    fn sign(&mut self) -> &mut StatisticBin {
        self.bins.dc_sign.at([self.kind, self.confidence])
    }
    fn residual(&mut self, len: usize, bit: usize) -> &mut StatisticBin {
        self.bins.dc_res.at([self.kind, len, bit])
    }
}

/// Code an unsigned count of `depth` bits as a binary tree, MSB first, each
/// node (1..2^depth) with its own bin in `lane`.
fn code_tree<C: BitCoder>(
    coder: &mut C,
    lane: &mut [StatisticBin],
    depth: u32,
    value: u32,
) -> Result<u32, CoderError> {
    let mut node = 1usize;
    for shift in (0..depth).rev() {
        let bit = coder.code_bit(&mut lane[node - 1], value >> shift & 1 == 1)?;
        node = node << 1 | bit as usize;
    }
    Ok((node - (1 << depth)) as u32)
}

/// Per-block inputs besides the neighbors.
pub struct BlockParams<'q> {
    pub kind: usize,
    pub quant: &'q [u16; 64],
    pub options: ModelOptions,
    pub order: &'q [usize; 49],
}

/// Code one block. When encoding, `block` holds the values to code; when
/// decoding it must start zeroed and receives the decoded values.
///
/// Returns what later neighbors need to know about the block.
pub fn code_block<C: BitCoder>(
    coder: &mut C,
    bins: &mut ModelBins,
    ctx: &BlockContext<'_>,
    params: &BlockParams<'_>,
    block: &mut QuantizedBlock,
) -> Result<BlockSummary, CoderError> {
    let kind = params.kind;
    let above = ctx.above.map(|n| &n.block);
    let left = ctx.left.map(|n| &n.block);
    let above_left = ctx.above_left.map(|n| &n.block);

    coder.set_class(CostClass::SevenBySeven);
    let nz_ctx = nonzero_count_context(ctx.above.map(|n| n.nz7x7), ctx.left.map(|n| n.nz7x7));
    let n_in = block.nonzero_7x7() as u32;
    let n = code_tree(coder, bins.nz7x7.lane(&[kind, nz_ctx]), 6, n_in)?;
    if n > 49 {
        return Err(CoderError::Corrupt("7x7 nonzero count above 49"));
    }

    let mut remaining = n;
    for &pos in params.order {
        if remaining == 0 {
            break;
        }
        let avg = predict_7x7(above, left, above_left, pos);
        // Bins follow the coefficient, not its place in the coding order.
        let index = (pos / 8 - 1) * 7 + (pos % 8 - 1);
        let mut gb = AcBins {
            bins,
            kind,
            coef: index,
            nz: log159(remaining),
            bucket: avg.bucket(),
            sign: avg.sign(),
        };
        let v = exp_golomb(coder, &mut gb, block.coeffs[pos] as i32, AC_MAX_LEN)?;
        block.coeffs[pos] = v as i16;
        if v != 0 {
            remaining -= 1;
        }
    }

    coder.set_class(CostClass::Edge);
    let mut edge_counts = [0u8; 2];
    for orient in [Orientation::Row, Orientation::Column] {
        let o = orient.index();
        let neighbor = match orient {
            Orientation::Row => ctx.above,
            Orientation::Column => ctx.left,
        };
        let neighbor_count = neighbor.map_or(0, |nb| nb.edge_nz[o] as usize);
        let count_in = (1..8)
            .filter(|&i| block.coeffs[orient.position(i)] != 0)
            .count() as u32;
        let n7 = log159(n);
        let lane = bins.edge_nz.lane(&[kind, o, n7, neighbor_count]);
        let count = code_tree(coder, lane, 3, count_in)?;
        edge_counts[o] = count as u8;
        let mut remaining = count as usize;
        for i in 1..8 {
            if remaining == 0 {
                break;
            }
            let pos = orient.position(i);
            let pred = match params.options.edge {
                EdgePrediction::Lakhani => {
                    predict_edge(neighbor.map(|n| &n.block), block, params.quant, orient, i)
                }
                EdgePrediction::Average => predict_7x7(above, left, above_left, pos).rounded(),
            };
            let mut gb = EdgeBins {
                bins,
                kind,
                orient: o,
                index: i - 1,
                remaining,
                class: log2_bucket(pred.unsigned_abs() as u64, EDGE_CLASSES - 1),
                sign: sign_class(pred as i64),
            };
            let v = exp_golomb(coder, &mut gb, block.coeffs[pos] as i32, AC_MAX_LEN)?;
            block.coeffs[pos] = v as i16;
            if v != 0 {
                remaining -= 1;
            }
        }
    }

    coder.set_class(CostClass::Dc);
    let ac_pixels = idct(block, params.quant, false);
    let neighbors = DcNeighbors {
        above: ctx.above.map(|n| &n.pixels),
        left: ctx.left.map(|n| &n.pixels),
        above_dc: ctx.above.map(|n| n.block.dc()),
        left_dc: ctx.left.map(|n| n.block.dc()),
    };
    let (pred, confidence) = predict_dc(params.options.dc, neighbors, &ac_pixels, params.quant[0]);
    let mut gb = DcBins {
        bins,
        kind,
        confidence,
    };
    let delta = exp_golomb(coder, &mut gb, block.coeffs[0] as i32 - pred, DC_MAX_LEN)?;
    let dc = pred + delta;
    if dc.abs() >= crate::jpeg::COEFFICIENT_LIMIT {
        return Err(CoderError::Corrupt("DC out of range"));
    }
    block.coeffs[0] = dc as i16;
    Ok(BlockSummary {
        nz7x7: n as u8,
        edge_nz: edge_counts,
        pixels: EdgePixels::with_dc(&ac_pixels, dc, params.quant[0]),
    })
}

/// Per-block facts that neighbors use as context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockSummary {
    pub nz7x7: u8,
    /// Nonzero edge coefficients, indexed by [`Orientation::index`].
    pub edge_nz: [u8; 2],
    pub pixels: EdgePixels,
}
