use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRegion {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

impl BlockRegion {
    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major tiling of an image into `side x side` squares; border tiles are truncated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    pub n1: usize,
    pub n2: usize,
    pub side: usize,
    pub blocks: Vec<BlockRegion>,
}

impl BlockPartition {
    /// One block covering the whole image.
    pub fn whole(n1: usize, n2: usize) -> Self {
        Self {
            n1,
            n2,
            side: n1.max(n2),
            blocks: vec![BlockRegion {
                rows: 0..n1,
                cols: 0..n2,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

pub fn make_partition(n1: usize, n2: usize, b: usize, w: usize) -> Result<BlockPartition> {
    if b == 0 || w == 0 || !b.is_multiple_of(w) {
        return Err(Error::param(format!("block side {b} must be a positive multiple of segment width {w}")));
    }
    if b > n1.min(n2) {
        return Err(Error::param(format!("block side {b} exceeds image {n1}x{n2}")));
    }
    if !n2.is_multiple_of(w) {
        return Err(Error::param(format!("segment width {w} must divide image width {n2}")));
    }
    let mut blocks = Vec::new();
    for r0 in (0..n1).step_by(b) {
        for c0 in (0..n2).step_by(b) {
            blocks.push(BlockRegion {
                rows: r0..(r0 + b).min(n1),
                cols: c0..(c0 + b).min(n2),
            });
        }
    }
    Ok(BlockPartition { n1, n2, side: b, blocks })
}
