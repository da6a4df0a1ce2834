//! Seeded generator of histology-like test images with exact instance
//! ground truth.
//!
//! Nuclei are dark ellipses placed by rejection sampling on a bright
//! background. Pixel colors share a per-pixel latent factor across the three
//! channels, so the channels are strongly correlated, and receive
//! independent Gaussian noise on top. The random stream is ChaCha8 seeded
//! from a `u64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::binarization::BinaryMask;
use crate::error::{Error, Result};
use crate::morphology::{label_components, Connectivity, LabelMap};
use crate::preprocess::RgbImage;

/// Placement attempts before giving up.
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    /// Semi-major axis range in pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    pub eccentricity_min: f64,
    pub eccentricity_max: f64,
    /// Largest fraction of a nucleus that may overlap earlier nuclei.
    pub max_overlap: f64,
    pub nucleus_rgb: [u8; 3],
    pub nucleus_jitter: f64,
    pub background_rgb: [u8; 3],
    pub background_jitter: f64,
    /// Weight of the shared latent factor in each channel's jitter.
    pub correlation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            count: 40,
            radius_min: 8.0,
            radius_max: 16.0,
            eccentricity_min: 0.0,
            eccentricity_max: 0.6,
            max_overlap: 0.05,
            nucleus_rgb: [85, 45, 135],
            nucleus_jitter: 12.0,
            background_rgb: [232, 205, 222],
            background_jitter: 8.0,
            correlation: 0.95,
            noise_sigma: 3.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSynthParams(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max) {
            return bad("radius range must be positive and ordered");
        }
        if 2.0 * self.radius_max >= self.width.min(self.height) as f64 {
            return bad("nuclei do not fit inside the image");
        }
        if !(0.0 <= self.eccentricity_min
            && self.eccentricity_min <= self.eccentricity_max
            && self.eccentricity_max < 1.0)
        {
            return bad("eccentricity range must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.max_overlap) || !(0.0..=1.0).contains(&self.correlation) {
            return bad("overlap and correlation must lie in [0, 1]");
        }
        if self.nucleus_jitter < 0.0 || self.background_jitter < 0.0 || self.noise_sigma < 0.0 {
            return bad("jitter and noise must be non-negative");
        }
        Ok(())
    }
}

/// Ellipse with its parameters, as placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
}

impl Ellipse {
    /// Pixel indices whose centers fall inside the ellipse.
    pub fn pixels(&self, width: usize, height: usize) -> Vec<usize> {
        let (s, c) = self.angle.sin_cos();
        let r = self.semi_major.ceil() as i64 + 1;
        let (x0, y0) = (self.cx.floor() as i64 - r, self.cy.floor() as i64 - r);
        let mut out = Vec::new();
        for y in y0.max(0)..(y0 + 2 * r + 2).min(height as i64) {
            for x in x0.max(0)..(x0 + 2 * r + 2).min(width as i64) {
                let (dx, dy) = (x as f64 + 0.5 - self.cx, y as f64 + 0.5 - self.cy);
                let u = (dx * c + dy * s) / self.semi_major;
                let v = (-dx * s + dy * c) / self.semi_minor;
                if u * u + v * v <= 1.0 {
                    out.push(y as usize * width + x as usize);
                }
            }
        }
        out
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_major * self.semi_minor
    }
}

/// Generated image, ground truth and the ellipses behind it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub image: RgbImage,
    pub labels: LabelMap,
    /// Ellipse for each label, in label order.
    pub ellipses: Vec<Ellipse>,
}

fn connected(pixels: &[usize], width: usize, height: usize) -> bool {
    let mut m = BinaryMask::new(width, height);
    for &i in pixels {
        m.data[i] = true;
    }
    label_components(&m, Connectivity::Eight).count == 1
}

/// Generate an image and its instance labels from `params`.
pub fn generate(params: &SynthParams) -> Result<Synthetic> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut labels = vec![0u32; w * h];
    let mut areas: Vec<usize> = vec![0];
    let mut ellipses = Vec::new();
    let mut attempts = 0;

    while ellipses.len() < params.count {
        if attempts == MAX_ATTEMPTS {
            return Err(Error::PlacementFailed { placed: ellipses.len(), requested: params.count, attempts });
        }
        attempts += 1;
        let semi_major = rng.gen_range(params.radius_min..=params.radius_max);
        let ecc = rng.gen_range(params.eccentricity_min..=params.eccentricity_max);
        let semi_minor = (semi_major * (1.0 - ecc * ecc).sqrt()).max(1.0);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let cx = rng.gen_range(semi_major..=w as f64 - semi_major);
        let cy = rng.gen_range(semi_major..=h as f64 - semi_major);
        let e = Ellipse { cx, cy, semi_major, semi_minor, angle };

        let pixels = e.pixels(w, h);
        let mut shared: Vec<(u32, usize)> = Vec::new();
        for &i in &pixels {
            let l = labels[i];
            if l != 0 {
                match shared.iter_mut().find(|(k, _)| *k == l) {
                    Some(entry) => entry.1 += 1,
                    None => shared.push((l, 1)),
                }
            }
        }
        let overlap: usize = shared.iter().map(|s| s.1).sum();
        let budget = params.max_overlap * pixels.len() as f64;
        if overlap as f64 > budget
            || shared.iter().any(|&(l, n)| n as f64 > params.max_overlap * areas[l as usize] as f64)
        {
            continue;
        }
        let fresh: Vec<usize> = pixels.into_iter().filter(|&i| labels[i] == 0).collect();
        if fresh.is_empty() || !connected(&fresh, w, h) {
            continue;
        }
        let label = ellipses.len() as u32 + 1;
        for &i in &fresh {
            labels[i] = label;
        }
        areas.push(fresh.len());
        ellipses.push(e);
    }

    let mut data = Vec::with_capacity(w * h * 3);
    let rho = params.correlation;
    let free = (1.0 - rho * rho).sqrt();
    for &l in &labels {
        let (base, jitter) = if l != 0 {
            (params.nucleus_rgb, params.nucleus_jitter)
        } else {
            (params.background_rgb, params.background_jitter)
        };
        let z: f64 = rng.sample(StandardNormal);
        for b in base {
            let e: f64 = rng.sample(StandardNormal);
            let n: f64 = rng.sample(StandardNormal);
            let v = b as f64 + jitter * (rho * z + free * e) + params.noise_sigma * n;
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }

    // Labels were assigned in placement order; renumber by raster order.
    let lm = LabelMap::from_raw(w, h, &labels)?;
    let mut order = vec![0usize; ellipses.len()];
    for (&raw, &compact) in labels.iter().zip(&lm.labels) {
        if raw != 0 {
            order[compact as usize - 1] = raw as usize - 1;
        }
    }
    let ellipses = order.iter().map(|&i| ellipses[i]).collect();
    Ok(Synthetic { image: RgbImage::new(w, h, data)?, labels: lm, ellipses })
}
