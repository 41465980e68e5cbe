//! Traversal of one thread segment: MCU rows in order, and within an MCU row
//! each component's block rows top to bottom, left to right.

use std::ops::Range;

use super::{
    code_block, interior_order, BitCoder, BlockParams, BlockSummary, CostMeter, CostTally,
    EdgePixels, Encoder, ModelBins, ModelOptions,
};
use crate::jpeg::{BlockLookup, CoefficientPlane, JpegHeader, QuantizedBlock};
use crate::range_coder::CoderError;

/// A coded block together with the context it offers to later blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NeighborInfo {
    pub block: QuantizedBlock,
    pub nz7x7: u8,
    pub edge_nz: [u8; 2],
    pub pixels: EdgePixels,
}

/// Where [`BlockContext::gather`] reads already-coded blocks from.
pub trait BlockSource {
    fn neighbor(&self, row: usize, col: usize) -> &NeighborInfo;
}

/// The causal neighbors of one block.
#[derive(Debug, Clone, Copy, Default)]
pub struct BlockContext<'a> {
    pub above: Option<&'a NeighborInfo>,
    pub left: Option<&'a NeighborInfo>,
    pub above_left: Option<&'a NeighborInfo>,
}

impl<'a> BlockContext<'a> {
    /// Neighbors of block (`row`, `col`). Rows before `first_row` belong to
    /// another segment and count as absent.
    pub fn gather<S: BlockSource + ?Sized>(
        source: &'a S,
        row: usize,
        col: usize,
        first_row: usize,
    ) -> Self {
        let has_above = row > first_row;
        let has_left = col > 0;
        BlockContext {
            above: has_above.then(|| source.neighbor(row - 1, col)),
            left: has_left.then(|| source.neighbor(row, col - 1)),
            above_left: (has_above && has_left).then(|| source.neighbor(row - 1, col - 1)),
        }
    }
}

/// Two block rows of one component: the row being coded and the one above it.
pub struct RowBuffer {
    slots: [Vec<NeighborInfo>; 2],
    tags: [Option<usize>; 2],
    high_water: usize,
}

impl RowBuffer {
    pub fn new(width_blocks: usize) -> Self {
        RowBuffer {
            slots: [
                vec![NeighborInfo::default(); width_blocks],
                vec![NeighborInfo::default(); width_blocks],
            ],
            tags: [None, None],
            high_water: 0,
        }
    }

    /// Claim the slot for `row`, evicting the row two above it.
    pub fn begin_row(&mut self, row: usize) {
        self.tags[row % 2] = Some(row);
        let resident = self.tags.iter().filter(|t| t.is_some()).count();
        self.high_water = self.high_water.max(resident);
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &NeighborInfo {
        assert_eq!(self.tags[row % 2], Some(row), "block row {row} is not resident");
        &self.slots[row % 2][col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, info: NeighborInfo) {
        assert_eq!(self.tags[row % 2], Some(row), "block row {row} is not resident");
        self.slots[row % 2][col] = info;
    }

    /// Most block rows ever resident at once.
    pub fn high_water(&self) -> usize {
        self.high_water
    }
}

impl BlockSource for RowBuffer {
    fn neighbor(&self, row: usize, col: usize) -> &NeighborInfo {
        self.get(row, col)
    }
}

/// Model state and row buffers for one segment.
pub struct SegmentCoder<'h> {
    header: &'h JpegHeader,
    quant: Vec<[u16; 64]>,
    options: ModelOptions,
    order: [usize; 49],
    bins: Box<ModelBins>,
    rows: Vec<RowBuffer>,
    first_mcu_row: usize,
    next_mcu_row: usize,
}

impl<'h> SegmentCoder<'h> {
    pub fn new(header: &'h JpegHeader, options: ModelOptions, first_mcu_row: usize) -> Self {
        SegmentCoder {
            header,
            quant: (0..header.components.len())
                .map(|c| *header.quant_for(c))
                .collect(),
            options,
            order: interior_order(options.order),
            bins: Box::default(),
            rows: header
                .components
                .iter()
                .map(|c| RowBuffer::new(c.width_blocks))
                .collect(),
            first_mcu_row,
            next_mcu_row: first_mcu_row,
        }
    }

    /// Index of the next MCU row to be coded.
    pub fn next_mcu_row(&self) -> usize {
        self.next_mcu_row
    }

    /// Code the next MCU row. With `planes` the blocks are taken from there
    /// (encoding); without, they are decoded.
    pub fn code_mcu_row<C: BitCoder>(
        &mut self,
        coder: &mut C,
        planes: Option<&[CoefficientPlane]>,
    ) -> Result<(), CoderError> {
        let mcu_row = self.next_mcu_row;
        for (c, comp) in self.header.components.iter().enumerate() {
            let params = BlockParams {
                kind: super::channel_kind(c),
                quant: &self.quant[c],
                options: self.options,
                order: &self.order,
            };
            let first_row = self.first_mcu_row * comp.mcu_v;
            let rows = &mut self.rows[c];
            for row in mcu_row * comp.mcu_v..(mcu_row + 1) * comp.mcu_v {
                rows.begin_row(row);
                for col in 0..comp.width_blocks {
                    let mut block = planes.map_or_else(QuantizedBlock::default, |p| *p[c].block(row, col));
                    let ctx = BlockContext::gather(&*rows, row, col, first_row);
                    let BlockSummary {
                        nz7x7,
                        edge_nz,
                        pixels,
                    } = code_block(coder, &mut self.bins, &ctx, &params, &mut block)?;
                    rows.set(
                        row,
                        col,
                        NeighborInfo {
                            block,
                            nz7x7,
                            edge_nz,
                            pixels,
                        },
                    );
                }
            }
        }
        self.next_mcu_row += 1;
        Ok(())
    }

    /// Most block rows resident at once, per component.
    pub fn high_water(&self) -> Vec<usize> {
        self.rows.iter().map(RowBuffer::high_water).collect()
    }
}

impl BlockLookup for SegmentCoder<'_> {
    fn lookup(&self, component: usize, row: usize, col: usize) -> &QuantizedBlock {
        &self.rows[component].get(row, col).block
    }
}

/// Encode MCU rows `rows` of an image as one segment.
pub fn encode_segment(
    header: &JpegHeader,
    planes: &[CoefficientPlane],
    options: ModelOptions,
    rows: Range<usize>,
) -> Result<(Vec<u8>, CostTally), CoderError> {
    let mut coder = Encoder::new();
    let mut segment = SegmentCoder::new(header, options, rows.start);
    for _ in rows {
        segment.code_mcu_row(&mut coder, Some(planes))?;
    }
    coder.finish()
}

/// Model cost of the whole image as a single segment, without range coding.
pub fn measure(
    header: &JpegHeader,
    planes: &[CoefficientPlane],
    options: ModelOptions,
) -> Result<CostTally, CoderError> {
    let mut meter = CostMeter::default();
    let mut segment = SegmentCoder::new(header, options, 0);
    for _ in 0..header.mcus_y {
        segment.code_mcu_row(&mut meter, Some(planes))?;
    }
    Ok(meter.tally)
}
