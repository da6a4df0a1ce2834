//! File formats and subcommands of the `nucseg` command-line tool.

use std::path::PathBuf;

use thiserror::Error;

pub mod annotation;
pub mod commands;
pub mod image_io;
pub mod overlay;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: cannot read: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{}: cannot write: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{}: unsupported image format {format} (expected PNG or TIFF)", path.display())]
    Unsupported { path: PathBuf, format: String },
    #[error("{}: cannot decode {format} image: {msg}", path.display())]
    Decode { path: PathBuf, format: String, msg: String },
    #[error("{}: cannot encode PNG: {msg}", path.display())]
    Encode { path: PathBuf, msg: String },
    #[error("{}: expected a 16-bit single-channel label PNG, found {found}", path.display())]
    NotLabelImage { path: PathBuf, found: String },
    #[error("{}: label {count} does not fit in 16 bits", path.display())]
    TooManyLabels { path: PathBuf, count: u32 },
    #[error("{}: {msg}", path.display())]
    Annotation { path: PathBuf, msg: String },
    #[error("{}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
}
