//! Image and label-map files.
//!
//! Every write goes to a temporary file in the destination directory that is
//! renamed into place once complete.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma};
use nucseg_core::{LabelMap, RgbImage};
use tempfile::NamedTempFile;

use crate::IoError;

/// Write `bytes` to `path` through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let wrap = |e: std::io::Error| IoError::Write { path: path.to_path_buf(), source: e };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

fn format_name(path: &Path, detected: Option<ImageFormat>) -> String {
    match detected {
        Some(f) => format!("{f:?}").to_uppercase(),
        None => path.extension().map(|e| e.to_string_lossy().to_uppercase()).unwrap_or_else(|| "unknown".to_string()),
    }
}

fn open(path: &Path) -> Result<(DynamicImage, String), IoError> {
    let read_err = |e: std::io::Error| IoError::Read { path: path.to_path_buf(), source: e };
    let reader = ImageReader::open(path).map_err(read_err)?.with_guessed_format().map_err(read_err)?;
    let detected = reader.format();
    let format = format_name(path, detected);
    if !matches!(detected, Some(ImageFormat::Png | ImageFormat::Tiff)) {
        return Err(IoError::Unsupported { path: path.to_path_buf(), format });
    }
    let img = reader.decode().map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        format: format.clone(),
        msg: e.to_string(),
    })?;
    Ok((img, format))
}

/// Decode a PNG or TIFF file as 8-bit RGB. Grayscale is replicated across
/// the three channels and alpha is dropped.
pub fn load_image(path: &Path) -> Result<RgbImage, IoError> {
    let (img, _) = open(path)?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    RgbImage::new(w, h, rgb.into_raw()).map_err(|e| IoError::Invalid { path: path.to_path_buf(), msg: e.to_string() })
}

fn encode_png(img: DynamicImage, path: &Path) -> Result<Vec<u8>, IoError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| IoError::Encode { path: path.to_path_buf(), msg: e.to_string() })?;
    Ok(buf.into_inner())
}

pub fn save_rgb_png(path: &Path, img: &RgbImage) -> Result<(), IoError> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("buffer length matches dimensions");
    write_atomic(path, &encode_png(DynamicImage::ImageRgb8(buf), path)?)
}

/// Write a label map as a single-channel 16-bit PNG.
pub fn save_label_png(path: &Path, lm: &LabelMap) -> Result<(), IoError> {
    let max = lm.labels.iter().copied().max().unwrap_or(0);
    if max > u16::MAX as u32 {
        return Err(IoError::TooManyLabels { path: path.to_path_buf(), count: max });
    }
    let raw: Vec<u16> = lm.labels.iter().map(|&l| l as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(lm.width as u32, lm.height as u32, raw).expect("buffer length matches dimensions");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma16(buf), path)?)
}

/// Read a 16-bit single-channel PNG of instance ids, compacting the ids to
/// `1..=n` in order of first appearance.
pub fn load_label_png(path: &Path) -> Result<LabelMap, IoError> {
    let (img, _) = open(path)?;
    let DynamicImage::ImageLuma16(buf) = img else {
        return Err(IoError::NotLabelImage { path: path.to_path_buf(), found: format!("{:?}", img.color()) });
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let raw: Vec<u32> = buf.into_raw().into_iter().map(u32::from).collect();
    LabelMap::from_raw(w, h, &raw).map_err(|e| IoError::Invalid { path: path.to_path_buf(), msg: e.to_string() })
}

/// Write a binary mask as an 8-bit PNG, foreground white.
pub fn save_mask_png(path: &Path, mask: &nucseg_core::BinaryMask) -> Result<(), IoError> {
    let raw: Vec<u8> = mask.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, raw)
        .expect("buffer length matches dimensions");
    write_atomic(path, &encode_png(DynamicImage::ImageLuma8(buf), path)?)
}

/// Read a whole text file.
pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })
}
