//! End-to-end segmentation: contrast stretch, block grid, adaptive
//! binarization, morphological refinement.

use crate::binarization::{adaptive_binarize, BinaryMask, BlockRecord};
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::morphology::{refine, LabelMap, RefineOutcome};
use crate::preprocess::{enhance_contrast, partition_blocks, RgbImage};

/// Everything a segmentation run produces.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: LabelMap,
    /// Binarization output before refinement.
    pub mask: BinaryMask,
    pub records: Vec<BlockRecord>,
    pub refine: RefineOutcome,
    /// Channels left unstretched because their quantiles coincided.
    pub degenerate_channels: Vec<usize>,
}

/// Segment nuclei in `img`.
pub fn segment(img: &RgbImage, cfg: &PipelineConfig) -> Result<Segmentation> {
    cfg.validate()?;
    let enhanced = enhance_contrast(img, cfg.contrast_low, cfg.contrast_high)?;
    let grid = partition_blocks(&enhanced.image, cfg.block_size)?;
    let bin = adaptive_binarize(&enhanced.image, &grid, cfg);
    let refined = refine(&bin.mask, cfg);
    Ok(Segmentation {
        labels: refined.labels.clone(),
        mask: bin.mask,
        records: bin.records,
        refine: refined,
        degenerate_channels: enhanced.degenerate_channels,
    })
}
