//! Adaptive per-block thresholding of the P map.
//!
//! Every base block is histogrammed and classified. A bi-modal block is
//! thresholded at the valley between its two modes. A multi-modal block is
//! split once into quadrants that are processed on their own. A block
//! dominated by one class is merged with its aligned 2×2 neighbours into a
//! super-block and reprocessed there. Regions that still fail to resolve
//! fall back to a fixed rule described on [`adaptive_binarize`].

use rayon::prelude::*;
use serde::Serialize;

use crate::color_transform::{transform_region, ChannelMode, PMap};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::preprocess::{Block, BlockGrid, RgbImage, Scale};

fn lcm_upto(n: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=n).fold(1, |acc, k| acc / gcd(acc, k) * k)
}

/// Histogram of P values over uniform bins on [0, 1].
///
/// Smoothing is a centered moving window of width `2r + 1`. Near the edges
/// each bin spreads its count evenly over the in-range part of its window,
/// so the smoothed total equals the raw total. Smoothed values are kept as
/// exact integers scaled by `lcm(1..=2r+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    smoothed_scaled: Vec<u64>,
    scale: u64,
}

/// Lowest count walked before reaching a taller bin; zero if the walk runs
/// off the end of the histogram first.
fn base<'a>(walk: impl Iterator<Item = &'a u64>, taller: impl Fn(u64) -> bool) -> u64 {
    let mut low = u64::MAX;
    for &v in walk {
        if taller(v) {
            return low;
        }
        low = low.min(v);
    }
    0
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn smoothed(&self) -> Vec<f64> {
        self.smoothed_scaled.iter().map(|&s| s as f64 / self.scale as f64).collect()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.bins() as f64
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) / self.bins() as f64
    }

    pub fn bin_of(&self, v: f64) -> usize {
        bin_index(v, self.bins())
    }

    /// Qualifying peaks of the smoothed histogram, ascending by bin.
    ///
    /// A peak is a local maximum (a flat top counts once, reported at its
    /// lower-middle bin) whose height and whose prominence are both at least
    /// `min_fraction` of the highest smoothed count. Prominence is the drop
    /// to the higher of the two lowest points separating the peak from a
    /// taller bin on either side, a side with no taller bin counting as zero.
    /// Of two equal tops the right one counts as taller. The prominence test
    /// filters the ripples that noise leaves on top of a single mode.
    pub fn peaks(&self, min_fraction: f64) -> Vec<usize> {
        let s = &self.smoothed_scaled;
        let max = s.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return Vec::new();
        }
        let floor = min_fraction * max as f64;
        let mut out = Vec::new();
        let mut i = 0;
        while i < s.len() {
            let mut j = i;
            while j + 1 < s.len() && s[j + 1] == s[i] {
                j += 1;
            }
            let left_lower = i == 0 || s[i - 1] < s[i];
            let right_lower = j + 1 == s.len() || s[j + 1] < s[i];
            if left_lower && right_lower && s[i] > 0 && s[i] as f64 >= floor {
                let height = s[i];
                let left_base = base(s[..i].iter().rev(), |v| v > height);
                let right_base = base(s[j + 1..].iter(), |v| v >= height);
                let prominence = height - left_base.max(right_base);
                if prominence as f64 >= floor {
                    out.push((i + j) / 2);
                }
            }
            i = j + 1;
        }
        out
    }

    /// Bin with the lowest smoothed count strictly between two peaks; ties go
    /// to the bin nearest the peaks' midpoint, then to the lower bin.
    pub fn valley_between(&self, lo: usize, hi: usize) -> Result<usize> {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        if hi - lo < 2 {
            return Err(Error::AdjacentPeaks(lo, hi));
        }
        let mid2 = lo + hi;
        (lo + 1..hi)
            .min_by_key(|&b| (self.smoothed_scaled[b], (2 * b).abs_diff(mid2), b))
            .ok_or(Error::AdjacentPeaks(lo, hi))
    }

    fn mass_up_to(&self, bin: usize) -> u64 {
        self.counts[..=bin].iter().sum()
    }
}

#[inline]
fn bin_index(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Histogram `values` (expected in [0, 1]) into `bins` uniform bins.
pub fn build_histogram(values: &[f64], bins: usize, smooth_radius: usize) -> Histogram {
    assert!(bins >= 1, "histogram needs at least one bin");
    let mut counts = vec![0u64; bins];
    for &v in values {
        counts[bin_index(v, bins)] += 1;
    }
    let scale = lcm_upto(2 * smooth_radius as u64 + 1);
    let mut smoothed_scaled = vec![0u64; bins];
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let lo = i.saturating_sub(smooth_radius);
        let hi = (i + smooth_radius).min(bins - 1);
        let share = c * (scale / (hi - lo + 1) as u64);
        for s in &mut smoothed_scaled[lo..=hi] {
            *s += share;
        }
    }
    Histogram { counts, smoothed_scaled, scale }
}

/// Outcome of modality analysis on one histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModalityClass {
    /// Two balanced modes separated by a valley at `threshold`.
    Bimodal { threshold: f64, low_peak: usize, high_peak: usize },
    /// Three or more modes; the region is too large to threshold robustly.
    Multimodal { peaks: usize },
    /// One mode, or a minority mode below the dominance ratio.
    Dominant,
}

/// Classify a histogram by counting its qualifying peaks.
pub fn classify_modality(h: &Histogram, peak_min_fraction: f64, dominance_ratio: f64) -> Result<ModalityClass> {
    if h.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let peaks = h.peaks(peak_min_fraction);
    match peaks.len() {
        0 | 1 => Ok(ModalityClass::Dominant),
        2 => {
            let (lo, hi) = (peaks[0], peaks[1]);
            let Ok(valley) = h.valley_between(lo, hi) else {
                return Ok(ModalityClass::Dominant);
            };
            let low_mass = h.mass_up_to(valley);
            let minority = low_mass.min(h.total() - low_mass) as f64 / h.total() as f64;
            if minority < dominance_ratio {
                Ok(ModalityClass::Dominant)
            } else {
                Ok(ModalityClass::Bimodal { threshold: h.bin_center(valley), low_peak: lo, high_peak: hi })
            }
        }
        n => Ok(ModalityClass::Multimodal { peaks: n }),
    }
}

/// Threshold at the valley between the two qualifying peaks.
pub fn valley_threshold(h: &Histogram, peak_min_fraction: f64) -> Result<f64> {
    let peaks = h.peaks(peak_min_fraction);
    match peaks.as_slice() {
        _ if h.total() == 0 => Err(Error::EmptyHistogram),
        [lo, hi] => Ok(h.bin_center(h.valley_between(*lo, *hi)?)),
        _ => Err(Error::NotBimodal(peaks.len())),
    }
}

/// Foreground (nucleus) mask. `true` = nucleus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Nucleus where `P <= threshold`. The mask has the shape of the map's
/// region, or a single row when the map has no region.
pub fn binarize_block(p: &PMap, threshold: f64) -> BinaryMask {
    let (width, height) = p.region.map_or((p.values.len(), 1), |r| (r.w, r.h));
    BinaryMask { width, height, data: p.values.iter().map(|&v| v <= threshold).collect() }
}

/// How a region's pixels were finally decided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolution {
    /// Thresholded at `threshold`.
    Threshold { threshold: f64 },
    /// Every pixel set to one class.
    Fill { nucleus: bool },
    /// Deferred to its quadrants.
    Split,
    /// Deferred to its super-block.
    Merge,
}

/// Per-region processing record, emitted for debugging and energy reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRecord {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub scale: Scale,
    /// `bimodal`, `multimodal`, `dominant` or `constant`.
    pub class: &'static str,
    pub resolution: Resolution,
    pub energy: Option<[f64; 3]>,
}

/// Result of [`adaptive_binarize`].
#[derive(Debug, Clone)]
pub struct BinarizeOutcome {
    pub mask: BinaryMask,
    /// Records ordered by base block, then quadrant, then super-block group.
    pub records: Vec<BlockRecord>,
}

struct Analysis {
    transform_pmap: PMap,
    energy: Option<[f64; 3]>,
    constant: bool,
    class: ModalityClass,
    hist: Histogram,
}

fn analyze(img: &RgbImage, region: &Block, cfg: &PipelineConfig) -> Analysis {
    let t = transform_region(img, region, cfg.channel);
    let hist = build_histogram(&t.pmap.values, cfg.histogram_bins, cfg.smooth_radius);
    let class = if t.constant || t.pmap.degenerate {
        ModalityClass::Dominant
    } else {
        classify_modality(&hist, cfg.peak_min_fraction, cfg.dominance_ratio).unwrap_or(ModalityClass::Dominant)
    };
    Analysis { transform_pmap: t.pmap, energy: t.energy, constant: t.constant || hist.total() == 0, class, hist }
}

fn class_name(a: &Analysis) -> &'static str {
    if a.constant {
        return "constant";
    }
    match a.class {
        ModalityClass::Bimodal { .. } => "bimodal",
        ModalityClass::Multimodal { .. } => "multimodal",
        ModalityClass::Dominant => "dominant",
    }
}

/// Threshold for a multimodal region that can no longer be split: the
/// valley separating the darkest mode from the next one.
fn darkest_mode_threshold(a: &Analysis, cfg: &PipelineConfig) -> Option<f64> {
    let peaks = a.hist.peaks(cfg.peak_min_fraction);
    let (&lo, &hi) = (peaks.first()?, peaks.get(1)?);
    a.hist.valley_between(lo, hi).ok().map(|v| a.hist.bin_center(v))
}

/// Decide a region without further splitting or merging.
fn terminal_resolution(a: &Analysis, region: &Block, reference: &ReferenceMap, cfg: &PipelineConfig) -> Resolution {
    if a.constant {
        return Resolution::Fill { nucleus: false };
    }
    match a.class {
        ModalityClass::Bimodal { threshold, .. } => Resolution::Threshold { threshold },
        ModalityClass::Multimodal { .. } => match darkest_mode_threshold(a, cfg) {
            Some(threshold) => Resolution::Threshold { threshold },
            None => Resolution::Fill { nucleus: reference.region_mean(region) < cfg.background_p_cutoff },
        },
        ModalityClass::Dominant => {
            Resolution::Fill { nucleus: reference.region_mean(region) < cfg.background_p_cutoff }
        }
    }
}

/// Image-wide P (or L) map. A single-mode region's own normalized map is
/// centered by construction, so its class is read off this shared scale.
struct ReferenceMap {
    width: usize,
    values: Vec<f64>,
}

impl ReferenceMap {
    fn new(img: &RgbImage, mode: ChannelMode) -> Self {
        let whole = Block { x0: 0, y0: 0, w: img.width(), h: img.height(), scale: Scale::Super };
        let t = transform_region(img, &whole, mode);
        // A constant image is all background.
        let values = if t.constant { vec![1.0; whole.area()] } else { t.pmap.values };
        Self { width: img.width(), values }
    }

    fn region_mean(&self, r: &Block) -> f64 {
        let mut sum = 0.0;
        for y in r.y0..r.y0 + r.h {
            sum += self.values[y * self.width + r.x0..y * self.width + r.x0 + r.w].iter().sum::<f64>();
        }
        sum / r.area().max(1) as f64
    }
}

fn write_region(mask: &mut BinaryMask, target: &Block, source: &Block, pmap: &PMap, res: Resolution) {
    for y in target.y0..target.y0 + target.h {
        for x in target.x0..target.x0 + target.w {
            let v = match res {
                Resolution::Threshold { threshold } => {
                    let i = (y - source.y0) * source.w + (x - source.x0);
                    pmap.values[i] <= threshold
                }
                Resolution::Fill { nucleus } => nucleus,
                Resolution::Split | Resolution::Merge => unreachable!("deferred regions are never written"),
            };
            mask.set(x, y, v);
        }
    }
}

fn record(region: &Block, a: &Analysis, resolution: Resolution) -> BlockRecord {
    BlockRecord {
        x0: region.x0,
        y0: region.y0,
        w: region.w,
        h: region.h,
        scale: region.scale,
        class: class_name(a),
        resolution,
        energy: a.energy,
    }
}

/// Binarize the whole image block by block.
///
/// Per base block: bi-modal → thresholded in place; multi-modal → each
/// quadrant gets its own transform and histogram; dominant → the aligned 2×2
/// super-block is reprocessed and its result written to the merged members
/// only, so every pixel is decided at the finest scale that claimed it.
/// Edge blocks narrower than half the base size are always merged.
/// Constant-color regions are background. Regions that stay unresolved after
/// one split or merge level use the darkest-mode valley when they still
/// have two or more peaks, and are otherwise filled: background when the
/// region's mean on the image-wide P scale is at least
/// `background_p_cutoff`, nucleus otherwise.
pub fn adaptive_binarize(img: &RgbImage, grid: &BlockGrid, cfg: &PipelineConfig) -> BinarizeOutcome {
    let reference = ReferenceMap::new(img, cfg.channel);
    let mut mask = BinaryMask::new(img.width(), img.height());
    let mut records = Vec::new();

    let base: Vec<(Block, Analysis)> = grid.blocks.par_iter().map(|b| (*b, analyze(img, b, cfg))).collect();

    let mut merged = vec![false; grid.blocks.len()];
    for (idx, (block, a)) in base.iter().enumerate() {
        match (a.constant, a.class) {
            _ if block.w.min(block.h) * 2 < grid.base_block => {
                merged[idx] = true;
                records.push(record(block, a, Resolution::Merge));
            }
            (false, ModalityClass::Multimodal { .. }) => {
                records.push(record(block, a, Resolution::Split));
                let quads: Vec<(Block, Analysis)> = block
                    .quadrants()
                    .into_par_iter()
                    .map(|q| {
                        let a = analyze(img, &q, cfg);
                        (q, a)
                    })
                    .collect();
                for (q, qa) in &quads {
                    let res = terminal_resolution(qa, q, &reference, cfg);
                    write_region(&mut mask, q, q, &qa.transform_pmap, res);
                    records.push(record(q, qa, res));
                }
            }
            (false, ModalityClass::Dominant) => {
                merged[idx] = true;
                records.push(record(block, a, Resolution::Merge));
            }
            _ => {
                let res = terminal_resolution(a, block, &reference, cfg);
                write_region(&mut mask, block, block, &a.transform_pmap, res);
                records.push(record(block, a, res));
            }
        }
    }

    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (idx, _) in merged.iter().enumerate().filter(|(_, &d)| d) {
        let g = grid.group_of(idx % grid.cols, idx / grid.cols);
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    let supers: Vec<(Block, Analysis, (usize, usize))> = groups
        .par_iter()
        .map(|&(gc, gr)| {
            let sb = grid.group_block(gc, gr);
            let a = analyze(img, &sb, cfg);
            (sb, a, (gc, gr))
        })
        .collect();
    for (sb, a, (gc, gr)) in &supers {
        let res = terminal_resolution(a, sb, &reference, cfg);
        for (c, r) in grid.group_members(*gc, *gr) {
            if merged[r * grid.cols + c] {
                write_region(&mut mask, grid.block(c, r), sb, &a.transform_pmap, res);
            }
        }
        records.push(record(sb, a, res));
    }

    BinarizeOutcome { mask, records }
}
