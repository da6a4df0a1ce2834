//! Per-block data-driven color transform.
//!
//! Each block's RGB pixel vectors are decomposed with a 3×3 PCA. The first
//! principal direction gives the P channel, oriented so that brighter pixels
//! receive higher values and rescaled to [0, 1]. The eigenvalue spectrum
//! gives the block's energy distribution over the P, Q and R channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{Block, RgbImage};

/// Symmetric 3×3 matrix stored as its six unique entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl Sym3 {
    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        Self {
            xx: m[0][0],
            xy: 0.5 * (m[0][1] + m[1][0]),
            xz: 0.5 * (m[0][2] + m[2][0]),
            yy: m[1][1],
            yz: 0.5 * (m[1][2] + m[2][1]),
            zz: m[2][2],
        }
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        [[self.xx, self.xy, self.xz], [self.xy, self.yy, self.yz], [self.xz, self.yz, self.zz]]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    fn off_diagonal_sq(&self) -> f64 {
        self.xy * self.xy + self.xz * self.xz + self.yz * self.yz
    }

    fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz) - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    pub fn mul_vec(&self, v: &[f64; 3]) -> [f64; 3] {
        let m = self.to_matrix();
        [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
    }
}

/// Eigenvalues in descending order with matching unit eigenvectors
/// (the P, Q and R directions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDecomp {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

impl EigenDecomp {
    /// Reassemble `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            for (i, row) in m.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell += lambda * v[i] * v[j];
                }
            }
        }
        m
    }
}

#[inline]
pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalized(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(&v, &v).sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.map(|c| c / n))
}

/// Mean RGB vector of a pixel list.
pub fn mean_rgb(pixels: &[[u8; 3]]) -> [f64; 3] {
    let mut sum = [0u64; 3];
    for p in pixels {
        for c in 0..3 {
            sum[c] += p[c] as u64;
        }
    }
    let n = pixels.len().max(1) as f64;
    sum.map(|s| s as f64 / n)
}

/// Population covariance (divisor n) of RGB pixel vectors.
pub fn block_covariance(pixels: &[[u8; 3]]) -> Result<Sym3> {
    if pixels.len() < 2 {
        return Err(Error::DegenerateBlock(pixels.len()));
    }
    let mean = mean_rgb(pixels);
    let mut acc = [0.0f64; 6];
    for p in pixels {
        let d = [0, 1, 2].map(|c| p[c] as f64 - mean[c]);
        acc[0] += d[0] * d[0];
        acc[1] += d[0] * d[1];
        acc[2] += d[0] * d[2];
        acc[3] += d[1] * d[1];
        acc[4] += d[1] * d[2];
        acc[5] += d[2] * d[2];
    }
    let n = pixels.len() as f64;
    Ok(Sym3 { xx: acc[0] / n, xy: acc[1] / n, xz: acc[2] / n, yy: acc[3] / n, yz: acc[4] / n, zz: acc[5] / n })
}

const GAP_TOLERANCE: f64 = 1e-10;
const ORTHO_TOLERANCE: f64 = 1e-12;

/// Eigen-decomposition of a symmetric 3×3 matrix.
///
/// Eigenvalues come from the closed-form trigonometric solution of the
/// characteristic polynomial and eigenvectors from cross products of rows of
/// `m - λI`. When two eigenvalues are closer than `1e-10 * trace`, or the
/// closed-form vectors fail an orthonormality check, cyclic Jacobi is used.
pub fn eigen3(m: &Sym3) -> EigenDecomp {
    let scale = m.xx.abs() + m.yy.abs() + m.zz.abs();
    if scale == 0.0 && m.off_diagonal_sq() == 0.0 {
        return EigenDecomp { values: [0.0; 3], vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
    }
    if m.off_diagonal_sq() == 0.0 {
        return sorted([m.xx, m.yy, m.zz], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }
    closed_form(m).unwrap_or_else(|| jacobi(m))
}

fn closed_form(m: &Sym3) -> Option<EigenDecomp> {
    let q = m.trace() / 3.0;
    let p2 = (m.xx - q).powi(2) + (m.yy - q).powi(2) + (m.zz - q).powi(2) + 2.0 * m.off_diagonal_sq();
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return None;
    }
    let b =
        Sym3 { xx: (m.xx - q) / p, xy: m.xy / p, xz: m.xz / p, yy: (m.yy - q) / p, yz: m.yz / p, zz: (m.zz - q) / p };
    let r = (b.det() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;

    let gap_floor = GAP_TOLERANCE * m.trace().abs().max(p);
    if l1 - l2 < gap_floor || l2 - l3 < gap_floor {
        return None;
    }
    let v1 = null_vector(m, l1)?;
    let v3 = null_vector(m, l3)?;
    let v2 = normalized(cross(&v3, &v1))?;
    let v3 = normalized(cross(&v1, &v2))?;
    let d = EigenDecomp { values: [l1, l2, l3], vectors: [v1, v2, v3] };

    let tol = 1e-9 * (1.0 + m.trace().abs());
    let residual_ok = d.values.iter().zip(&d.vectors).all(|(l, v)| {
        let mv = m.mul_vec(v);
        (0..3).all(|i| (mv[i] - l * v[i]).abs() <= tol)
    });
    let ortho_ok = dot(&d.vectors[0], &d.vectors[2]).abs() <= ORTHO_TOLERANCE;
    (residual_ok && ortho_ok).then_some(d)
}

/// Unit vector spanning the null space of `m - λI`, taken as the largest
/// cross product of two of its rows.
fn null_vector(m: &Sym3, lambda: f64) -> Option<[f64; 3]> {
    let a = m.to_matrix();
    let rows = [
        [a[0][0] - lambda, a[0][1], a[0][2]],
        [a[1][0], a[1][1] - lambda, a[1][2]],
        [a[2][0], a[2][1], a[2][2] - lambda],
    ];
    let candidates = [cross(&rows[0], &rows[1]), cross(&rows[0], &rows[2]), cross(&rows[1], &rows[2])];
    let best = candidates.iter().max_by(|a, b| dot(a, a).total_cmp(&dot(b, b))).copied()?;
    normalized(best)
}

fn jacobi(m: &Sym3) -> EigenDecomp {
    let mut a = m.to_matrix();
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let diag = a[0][0].powi(2) + a[1][1].powi(2) + a[2][2].powi(2);
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for row in a.iter_mut() {
                let akp = row[p];
                let akq = row[q];
                row[p] = c * akp - s * akq;
                row[q] = s * akp + c * akq;
            }
            let (rp, rq) = (a[p], a[q]);
            for k in 0..3 {
                a[p][k] = c * rp[k] - s * rq[k];
                a[q][k] = s * rp[k] + c * rq[k];
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    // columns of v are eigenvectors
    let cols = [0, 1, 2].map(|j| [v[0][j], v[1][j], v[2][j]]);
    sorted([a[0][0], a[1][1], a[2][2]], cols)
}

fn sorted(values: [f64; 3], vectors: [[f64; 3]; 3]) -> EigenDecomp {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    EigenDecomp { values: idx.map(|i| values[i]), vectors: idx.map(|i| vectors[i]) }
}

/// Projection of each pixel onto `dir` after centering at `mean`.
pub fn project(pixels: &[[u8; 3]], mean: &[f64; 3], dir: &[f64; 3]) -> Vec<f64> {
    pixels
        .iter()
        .map(|p| (p[0] as f64 - mean[0]) * dir[0] + (p[1] as f64 - mean[1]) * dir[1] + (p[2] as f64 - mean[2]) * dir[2])
        .collect()
}

/// Raw P channel: projection onto the first principal direction.
pub fn project_p(pixels: &[[u8; 3]], mean: &[f64; 3], v1: &[f64; 3]) -> Vec<f64> {
    project(pixels, mean, v1)
}

/// Rec. 601 luma, used as the luminance reference for sign orientation.
#[inline]
pub fn luma(p: &[u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// CIE L* of an sRGB pixel under D65, in [0, 100].
pub fn lab_lightness(p: &[u8; 3]) -> f64 {
    fn linear(c: u8) -> f64 {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    let y = 0.2126729 * linear(p[0]) + 0.7151522 * linear(p[1]) + 0.0721750 * linear(p[2]);
    let f = if y > 216.0 / 24389.0 { y.cbrt() } else { (24389.0 / 27.0 * y + 16.0) / 116.0 };
    116.0 * f - 16.0
}

/// Sign-oriented field.
#[derive(Debug, Clone, PartialEq)]
pub struct Oriented {
    pub values: Vec<f64>,
    pub flipped: bool,
    /// The covariance with luminance was exactly zero; sign left as-is.
    pub zero_correlation: bool,
}

/// Flip `raw_p` if it is negatively correlated with pixel luminance, so that
/// brighter pixels receive higher values.
pub fn orient_sign(raw_p: &[f64], pixels: &[[u8; 3]]) -> Oriented {
    assert_eq!(raw_p.len(), pixels.len(), "field and pixels must align");
    let n = raw_p.len().max(1) as f64;
    let mean_p = raw_p.iter().sum::<f64>() / n;
    let mean_l = pixels.iter().map(luma).sum::<f64>() / n;
    let cov: f64 = raw_p.iter().zip(pixels).map(|(p, px)| (p - mean_p) * (luma(px) - mean_l)).sum();
    if cov < 0.0 {
        Oriented { values: raw_p.iter().map(|v| -v).collect(), flipped: true, zero_correlation: false }
    } else {
        Oriented { values: raw_p.to_vec(), flipped: false, zero_correlation: cov == 0.0 }
    }
}

/// Per-pixel values in [0, 1] over one region.
#[derive(Debug, Clone, PartialEq)]
pub struct PMap {
    pub values: Vec<f64>,
    /// Region (and scale) that produced the map.
    pub region: Option<Block>,
    /// Input had zero range; every value is 0.5.
    pub degenerate: bool,
}

/// Linear rescale to [0, 1]. A constant field maps to 0.5 everywhere with
/// the degenerate flag set.
pub fn normalize01(field: &[f64]) -> PMap {
    let (min, max) = field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if field.is_empty() || max <= min {
        return PMap { values: vec![0.5; field.len()], region: None, degenerate: true };
    }
    let range = max - min;
    PMap {
        values: field.iter().map(|v| ((v - min) / range).clamp(0.0, 1.0)).collect(),
        region: None,
        degenerate: false,
    }
}

/// Fraction of total variance carried by each principal channel.
pub fn energy_distribution(d: &EigenDecomp) -> Result<[f64; 3]> {
    let total: f64 = d.values.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::ConstantBlock);
    }
    Ok(d.values.map(|v| v.max(0.0) / total))
}

/// Which scalar channel drives binarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ChannelMode {
    /// First principal component of the block's RGB vectors.
    #[default]
    P,
    /// CIE L* lightness.
    L,
}

/// Output of the color transform for one region.
#[derive(Debug, Clone)]
pub struct BlockTransform {
    pub pmap: PMap,
    /// P/Q/R energy fractions; `None` for constant-color regions.
    pub energy: Option<[f64; 3]>,
    /// Region has a single color.
    pub constant: bool,
    /// Orientation found zero correlation with luminance.
    pub orientation_warning: bool,
}

/// Run the color transform over one region of `img`.
pub fn transform_region(img: &RgbImage, region: &Block, mode: ChannelMode) -> BlockTransform {
    let pixels = img.region_pixels(region);
    let constant = pixels.windows(2).all(|w| w[0] == w[1]);
    if constant || pixels.len() < 2 {
        return BlockTransform {
            pmap: PMap { values: vec![0.5; pixels.len()], region: Some(*region), degenerate: true },
            energy: None,
            constant: true,
            orientation_warning: false,
        };
    }
    let cov = block_covariance(&pixels).expect("at least two pixels");
    let decomp = eigen3(&cov);
    let energy = energy_distribution(&decomp).ok();
    let (mut pmap, orientation_warning) = match mode {
        ChannelMode::P => {
            let mean = mean_rgb(&pixels);
            let raw = project_p(&pixels, &mean, &decomp.vectors[0]);
            let oriented = orient_sign(&raw, &pixels);
            (normalize01(&oriented.values), oriented.zero_correlation)
        }
        ChannelMode::L => {
            let l: Vec<f64> = pixels.iter().map(lab_lightness).collect();
            (normalize01(&l), false)
        }
    };
    pmap.region = Some(*region);
    BlockTransform { pmap, energy, constant: false, orientation_warning }
}
