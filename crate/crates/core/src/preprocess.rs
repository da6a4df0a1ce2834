//! Input normalization and block partitioning.
//!
//! Contrast enhancement is a per-channel linear percentile stretch applied to
//! the whole image. Quantiles use the nearest-rank rule on the sorted channel
//! values so results are bit-exact across implementations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::InvalidImage { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixels of a rectangular region in row-major order.
    pub fn region_pixels(&self, block: &Block) -> Vec<[u8; 3]> {
        let mut out = Vec::with_capacity(block.w * block.h);
        for y in block.y0..block.y0 + block.h {
            for x in block.x0..block.x0 + block.w {
                out.push(self.pixel(x, y));
            }
        }
        out
    }

    /// Values of one channel (0 = R, 1 = G, 2 = B).
    pub fn channel(&self, c: usize) -> impl Iterator<Item = u8> + '_ {
        self.data.iter().skip(c).step_by(3).copied()
    }
}

/// Result of [`enhance_contrast`].
#[derive(Debug, Clone)]
pub struct ContrastOutcome {
    pub image: RgbImage,
    /// Channels whose low and high quantiles coincided; passed through unchanged.
    pub degenerate_channels: Vec<usize>,
}

/// Nearest-rank quantile of a channel given its 256-bin histogram.
fn nearest_rank(hist: &[u64; 256], n: u64, q: f64) -> u8 {
    let rank = ((q * n as f64).ceil() as u64).clamp(1, n);
    let mut acc = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= rank {
            return v as u8;
        }
    }
    255
}

/// Per-channel linear percentile stretch.
///
/// Values at or below the `low_pct` quantile map to 0, values at or above the
/// `high_pct` quantile map to 255, and values in between are mapped linearly
/// (rounded to nearest).
pub fn enhance_contrast(img: &RgbImage, low_pct: f64, high_pct: f64) -> Result<ContrastOutcome> {
    if !(0.0..1.0).contains(&low_pct) || !(low_pct < high_pct && high_pct <= 1.0) {
        return Err(Error::InvalidPercentiles { low: low_pct, high: high_pct });
    }
    let n = (img.width * img.height) as u64;
    let mut luts = [[0u8; 256]; 3];
    let mut degenerate_channels = Vec::new();
    for (c, lut) in luts.iter_mut().enumerate() {
        let mut hist = [0u64; 256];
        for v in img.channel(c) {
            hist[v as usize] += 1;
        }
        let lo = nearest_rank(&hist, n, low_pct);
        let hi = nearest_rank(&hist, n, high_pct);
        if lo >= hi {
            degenerate_channels.push(c);
            for (v, slot) in lut.iter_mut().enumerate() {
                *slot = v as u8;
            }
            continue;
        }
        let (lo, hi) = (lo as f64, hi as f64);
        for (v, slot) in lut.iter_mut().enumerate() {
            let mapped = ((v as f64 - lo) * 255.0 / (hi - lo)).round();
            *slot = mapped.clamp(0.0, 255.0) as u8;
        }
    }
    let data = img.data.iter().enumerate().map(|(i, &v)| luts[i % 3][v as usize]).collect();
    Ok(ContrastOutcome { image: RgbImage { width: img.width, height: img.height, data }, degenerate_channels })
}

/// Scale a block was processed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    /// Quadrant of a base block (25×25 at the default size).
    Sub,
    /// Base tile (50×50 at the default size).
    Base,
    /// Aligned 2×2 group of base tiles (100×100 at the default size).
    Super,
}

/// Axis-aligned rectangular image region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub scale: Scale,
}

impl Block {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    /// Split into (up to) four quadrants tagged [`Scale::Sub`]. Empty
    /// quadrants of one-pixel-wide edge blocks are dropped.
    pub fn quadrants(&self) -> Vec<Block> {
        let (lw, lh) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let xs = [(self.x0, lw), (self.x0 + lw, self.w - lw)];
        let ys = [(self.y0, lh), (self.y0 + lh, self.h - lh)];
        let mut out = Vec::with_capacity(4);
        for &(y0, h) in &ys {
            for &(x0, w) in &xs {
                if w > 0 && h > 0 {
                    out.push(Block { x0, y0, w, h, scale: Scale::Sub });
                }
            }
        }
        out
    }
}

/// Tiling of an image into non-overlapping base blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    pub base_block: usize,
    pub width: usize,
    pub height: usize,
    pub cols: usize,
    pub rows: usize,
    /// Row-major, `rows * cols` entries.
    pub blocks: Vec<Block>,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize, base: usize) -> Result<Self> {
        if base < 8 {
            return Err(Error::BlockTooSmall(base));
        }
        let cols = width.div_ceil(base);
        let rows = height.div_ceil(base);
        let mut blocks = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let (x0, y0) = (c * base, r * base);
                blocks.push(Block { x0, y0, w: base.min(width - x0), h: base.min(height - y0), scale: Scale::Base });
            }
        }
        Ok(Self { base_block: base, width, height, cols, rows, blocks })
    }

    pub fn block(&self, col: usize, row: usize) -> &Block {
        &self.blocks[row * self.cols + col]
    }

    /// Grid coordinates of the block containing pixel `(x, y)`.
    pub fn cell_of(&self, x: usize, y: usize) -> (usize, usize) {
        (x / self.base_block, y / self.base_block)
    }

    /// Super-block group index of a base cell. Groups are aligned to even
    /// cell coordinates.
    pub fn group_of(&self, col: usize, row: usize) -> (usize, usize) {
        (col / 2, row / 2)
    }

    /// Grid cells belonging to a super-block group, row-major.
    pub fn group_members(&self, gcol: usize, grow: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        for r in 2 * grow..(2 * grow + 2).min(self.rows) {
            for c in 2 * gcol..(2 * gcol + 2).min(self.cols) {
                out.push((c, r));
            }
        }
        out
    }

    /// Region covered by a super-block group, clipped to the image.
    pub fn group_block(&self, gcol: usize, grow: usize) -> Block {
        let x0 = 2 * gcol * self.base_block;
        let y0 = 2 * grow * self.base_block;
        Block {
            x0,
            y0,
            w: (2 * self.base_block).min(self.width - x0),
            h: (2 * self.base_block).min(self.height - y0),
            scale: Scale::Super,
        }
    }
}

/// Partition `img` into base blocks of side `base`; edge blocks are truncated.
pub fn partition_blocks(img: &RgbImage, base: usize) -> Result<BlockGrid> {
    BlockGrid::new(img.width, img.height, base)
}
