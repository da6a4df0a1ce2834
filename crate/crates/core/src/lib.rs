//! Unsupervised nuclei instance segmentation for stained histology tiles.
//!
//! The pipeline works on non-overlapping square blocks:
//!
//! 1. [`preprocess`]: global per-channel contrast stretch and block tiling.
//! 2. [`color_transform`]: per-block PCA of RGB vectors; the first principal
//!    component, oriented so that bright is high, becomes the P channel.
//! 3. [`binarization`]: valley thresholding of each block's P histogram,
//!    with quadrant splitting for multi-modal blocks and 2×2 merging for
//!    blocks dominated by one class.
//! 4. [`morphology`]: hole filling, small-object removal and concavity
//!    splitting, iterated to a fixed point.
//!
//! [`metrics`] scores instance maps with the Aggregated Jaccard Index and
//! [`synthetic`] generates images with exact ground truth for testing.
//! This crate does no file I/O.

pub mod binarization;
pub mod color_transform;
pub mod config;
pub mod error;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod preprocess;
pub mod synthetic;

pub use binarization::{BinaryMask, BlockRecord};
pub use color_transform::ChannelMode;
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use metrics::aji;
pub use morphology::LabelMap;
pub use pipeline::{segment, Segmentation};
pub use preprocess::RgbImage;
