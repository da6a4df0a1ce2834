//! Refinement of a binary nucleus mask into instance labels.
//!
//! Each refinement pass fills holes, labels components, drops components
//! below the minimum nucleus area, and cuts low-solidity components along
//! the chord joining a pair of concavity defects. Passes repeat until the
//! label map stops changing or the iteration cap is reached.

mod geometry;

pub use geometry::{
    component_geometry, convex_hull, hull_depth, polygon_area, trace_outer_contour, ComponentGeometry, Defect,
    POCKET_DEPTH,
};

use crate::binarization::BinaryMask;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Minimum pocket depth, in pixels, for a defect to anchor a cut.
pub const MIN_DEFECT_DEPTH: f64 = 2.0;

/// Pixel adjacency used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        }
    }
}

/// Instance raster: 0 = background, `1..=count` = instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: u32,
}

impl LabelMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![0; width * height], count: 0 }
    }

    /// Build from arbitrary ids, renumbering them `1..=n` by first appearance
    /// in raster order.
    pub fn from_raw(width: usize, height: usize, raw: &[u32]) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, raw.len(), 1));
        }
        let mut map = std::collections::HashMap::new();
        let mut next = 0u32;
        let labels = raw
            .iter()
            .map(|&v| {
                if v == 0 {
                    0
                } else {
                    *map.entry(v).or_insert_with(|| {
                        next += 1;
                        next
                    })
                }
            })
            .collect();
        Ok(Self { width, height, labels, count: next })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn foreground(&self) -> BinaryMask {
        BinaryMask { width: self.width, height: self.height, data: self.labels.iter().map(|&l| l != 0).collect() }
    }

    /// Pixel count per label, indexed by label (index 0 is background).
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.count as usize + 1];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    /// Labels are exactly `1..=count`, numbered by first appearance.
    pub fn is_compact(&self) -> bool {
        let mut next = 1;
        for &l in &self.labels {
            if l == next {
                next += 1;
            } else if l > next {
                return false;
            }
        }
        next == self.count + 1
    }
}

/// Connected components of `mask`, numbered in raster order of their first pixel.
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> LabelMap {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.data[j] && labels[j] == 0 {
                    labels[j] = count;
                    stack.push(j);
                }
            }
        }
    }
    LabelMap { width: w, height: h, labels, count }
}

/// Set to foreground every background region that is not 4-connected to
/// the image border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut outside = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    let seed = |i: usize, stack: &mut Vec<usize>, outside: &mut Vec<bool>| {
        if !mask.data[i] && !outside[i] {
            outside[i] = true;
            stack.push(i);
        }
    };
    for x in 0..w {
        seed(x, &mut stack, &mut outside);
        seed((h - 1) * w + x, &mut stack, &mut outside);
    }
    for y in 0..h {
        seed(y * w, &mut stack, &mut outside);
        seed(y * w + w - 1, &mut stack, &mut outside);
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for &(dx, dy) in Connectivity::Four.offsets() {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                seed(ny as usize * w + nx as usize, &mut stack, &mut outside);
            }
        }
    }
    BinaryMask { width: w, height: h, data: outside.iter().map(|&o| !o).collect() }
}

/// Erase instances smaller than `min_area` pixels and renumber the rest in
/// raster order.
pub fn remove_small(lm: &LabelMap, min_area: usize) -> LabelMap {
    let areas = lm.areas();
    let raw: Vec<u32> = lm.labels.iter().map(|&l| if areas[l as usize] >= min_area { l } else { 0 }).collect();
    LabelMap::from_raw(lm.width, lm.height, &raw).expect("same dimensions")
}

/// Why [`split_concave`] left a component whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitOutcome {
    /// Cut into this many parts, each at least `min_area`.
    Split { parts: usize },
    /// Solidity at or above the threshold.
    Convex,
    /// Smaller than twice the minimum area.
    TooSmall,
    /// Fewer than two qualifying defects on distinct hull edges.
    NoDefectPair,
    /// The cut would leave a part smaller than the minimum area.
    PartsTooSmall,
    /// The cut did not disconnect the component.
    NotSeparated,
}

impl SplitOutcome {
    /// Rejection for minimum-size reasons.
    pub fn is_size_rejection(self) -> bool {
        matches!(self, SplitOutcome::TooSmall | SplitOutcome::PartsTooSmall)
    }
}

/// 4-connected digital segment from `a` to `b`, inclusive.
fn line4(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let (dx, dy) = ((b.0 - x).abs(), -(b.1 - y).abs());
    let (sx, sy) = ((b.0 - x).signum(), (b.1 - y).signum());
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
        }
        let e2 = 2 * err;
        let (step_x, step_y) = (e2 >= dy, e2 <= dx);
        if step_x {
            err += dy;
            x += sx;
        }
        if step_x && step_y {
            out.push((x, y));
        }
        if step_y {
            err += dx;
            y += sy;
        }
    }
}

/// Choose the defect pair to cut between: distinct hull edges, maximizing
/// combined depth per unit of chord length.
fn pick_defect_pair(defects: &[Defect]) -> Option<(Defect, Defect)> {
    let usable: Vec<&Defect> = defects.iter().filter(|d| d.depth >= MIN_DEFECT_DEPTH).collect();
    let mut best: Option<(f64, Defect, Defect)> = None;
    for (i, a) in usable.iter().enumerate() {
        for b in &usable[i + 1..] {
            if a.anchor == b.anchor {
                continue;
            }
            let chord = ((a.x as f64 - b.x as f64).powi(2) + (a.y as f64 - b.y as f64).powi(2)).sqrt();
            let score = (a.depth + b.depth) / chord.max(1.0);
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, **a, **b));
            }
        }
    }
    best.map(|(_, a, b)| (a, b))
}

/// Pixels to clear to cut `label` between its chosen defect pair, or the
/// reason no cut is made. Parts of the cut component smaller than
/// `min_area` are included in the returned pixel list.
fn plan_split(lm: &LabelMap, label: u32, cfg: &PipelineConfig) -> Result<(Vec<usize>, SplitOutcome)> {
    let g = component_geometry(lm, label)?;
    if g.solidity >= cfg.solidity_threshold {
        return Ok((Vec::new(), SplitOutcome::Convex));
    }
    if g.area < 2 * cfg.min_area {
        return Ok((Vec::new(), SplitOutcome::TooSmall));
    }
    let Some((a, b)) = pick_defect_pair(&g.defects) else {
        return Ok((Vec::new(), SplitOutcome::NoDefectPair));
    };

    // Extend the chord two pixels past each defect so the cut reaches the
    // exterior even where the defect only touches it diagonally.
    let (ax, ay, bx, by) = (a.x as f64, a.y as f64, b.x as f64, b.y as f64);
    let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt().max(1.0);
    let (ux, uy) = ((bx - ax) / len, (by - ay) / len);
    let from = ((ax - 2.0 * ux).round() as i64, (ay - 2.0 * uy).round() as i64);
    let to = ((bx + 2.0 * ux).round() as i64, (by + 2.0 * uy).round() as i64);

    let (w, h) = (lm.width, lm.height);
    let mut cut: Vec<usize> = line4(from, to)
        .into_iter()
        .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h)
        .map(|(x, y)| y as usize * w + x as usize)
        .filter(|&i| lm.labels[i] == label)
        .collect();
    cut.sort_unstable();
    cut.dedup();

    let mut sub = BinaryMask::new(w, h);
    for (i, &l) in lm.labels.iter().enumerate() {
        sub.data[i] = l == label;
    }
    for &i in &cut {
        sub.data[i] = false;
    }
    let parts = label_components(&sub, Connectivity::Eight);
    let areas = parts.areas();
    let kept = areas[1..].iter().filter(|&&a| a >= cfg.min_area).count();
    if parts.count < 2 {
        return Ok((Vec::new(), SplitOutcome::NotSeparated));
    }
    if kept < 2 {
        return Ok((Vec::new(), SplitOutcome::PartsTooSmall));
    }
    for (i, &p) in parts.labels.iter().enumerate() {
        if p != 0 && areas[p as usize] < cfg.min_area {
            cut.push(i);
        }
    }
    Ok((cut, SplitOutcome::Split { parts: kept }))
}

/// Cut component `label` along the chord between two concavity defects.
///
/// Eligible components have solidity below `cfg.solidity_threshold` and at
/// least `2 * cfg.min_area` pixels. The cut is a 4-connected one-pixel line,
/// which separates 8-connected foreground. A cut is kept only if it leaves
/// at least two parts of `cfg.min_area` pixels or more; smaller fragments
/// are erased. The returned map is renumbered in raster order.
pub fn split_concave(lm: &LabelMap, label: u32, cfg: &PipelineConfig) -> Result<(LabelMap, SplitOutcome)> {
    let (cut, outcome) = plan_split(lm, label, cfg)?;
    if !matches!(outcome, SplitOutcome::Split { .. }) {
        return Ok((lm.clone(), outcome));
    }
    let mut mask = lm.foreground();
    for i in cut {
        mask.data[i] = false;
    }
    // Other components keep their pixels; only `label` is re-split.
    let parts = label_components(&mask, Connectivity::Eight);
    let raw: Vec<u32> = lm
        .labels
        .iter()
        .zip(&parts.labels)
        .map(|(&l, &p)| match (l, p) {
            (0, _) | (_, 0) => 0,
            (l, _) if l != label => l,
            (_, p) => lm.count + p,
        })
        .collect();
    Ok((LabelMap::from_raw(lm.width, lm.height, &raw)?, outcome))
}

/// Result of [`refine`].
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub labels: LabelMap,
    /// Passes executed.
    pub iterations: usize,
    /// Stopped because a pass changed nothing (rather than at the cap).
    pub converged: bool,
    /// Split attempts on eligible-by-solidity components that were rejected
    /// because a part would fall below the minimum area, over all passes.
    pub size_rejections: usize,
    /// Label map after each pass.
    pub trace: Vec<LabelMap>,
}

/// Iterate fill → label → remove small → split until the label map is
/// unchanged by a pass or `cfg.max_iterations` passes have run.
pub fn refine(mask: &BinaryMask, cfg: &PipelineConfig) -> RefineOutcome {
    let mut previous = label_components(mask, Connectivity::Eight);
    let mut current = mask.clone();
    let mut trace = Vec::new();
    let mut size_rejections = 0;
    for iteration in 1..=cfg.max_iterations {
        let filled = fill_holes(&current);
        let labeled = remove_small(&label_components(&filled, Connectivity::Eight), cfg.min_area);
        let mut next_mask = labeled.foreground();
        for label in 1..=labeled.count {
            let (cut, outcome) = plan_split(&labeled, label, cfg).expect("label exists");
            if outcome.is_size_rejection() {
                size_rejections += 1;
            }
            for i in cut {
                next_mask.data[i] = false;
            }
        }
        let next = label_components(&next_mask, Connectivity::Eight);
        trace.push(next.clone());
        if next == previous {
            return RefineOutcome { labels: next, iterations: iteration, converged: true, size_rejections, trace };
        }
        previous = next;
        current = next_mask;
    }
    RefineOutcome { labels: previous, iterations: cfg.max_iterations, converged: false, size_rejections, trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(cx: f64, cy: f64, r: f64) -> impl Fn(usize, usize) -> bool {
        move |x, y| (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2) <= r * r
    }

    fn mask_of(w: usize, h: usize, shapes: &[&dyn Fn(usize, usize) -> bool]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| shapes.iter().any(|s| s(x, y)))
    }

    fn pixel_area(r: f64) -> usize {
        let m = mask_of(64, 64, &[&disk(32.0, 32.0, r)]);
        m.count()
    }

    fn split_cfg() -> PipelineConfig {
        PipelineConfig { solidity_threshold: 0.95, ..PipelineConfig::default() }
    }

    #[test]
    fn labeling_examples() {
        assert_eq!(label_components(&BinaryMask::new(5, 5), Connectivity::Eight).count, 0);

        let m = BinaryMask::from_fn(10, 10, |x, y| (x < 3 && y < 3) || (x > 5 && y > 5));
        let lm = label_components(&m, Connectivity::Eight);
        assert_eq!(lm.count, 2);
        assert_eq!(lm.get(0, 0), 1);
        assert_eq!(lm.get(9, 9), 2);

        let diag = BinaryMask::from_fn(2, 2, |x, y| x == y);
        assert_eq!(label_components(&diag, Connectivity::Eight).count, 1);
        assert_eq!(label_components(&diag, Connectivity::Four).count, 2);
    }

    #[test]
    fn hole_filling_examples() {
        let solid = mask_of(30, 30, &[&disk(15.0, 15.0, 10.0)]);
        assert_eq!(fill_holes(&solid), solid);

        let annulus = BinaryMask::from_fn(30, 30, |x, y| disk(15.0, 15.0, 10.0)(x, y) && !disk(15.0, 15.0, 5.0)(x, y));
        assert_eq!(fill_holes(&annulus), solid);

        // C-shape whose opening runs to the image border.
        let c = BinaryMask::from_fn(30, 30, |x, y| {
            disk(15.0, 15.0, 10.0)(x, y) && !(disk(15.0, 15.0, 5.0)(x, y) || (x > 15 && (13..17).contains(&y)))
        });
        let c = BinaryMask::from_fn(30, 30, |x, y| c.get(x, y) && !(x >= 15 && (13..17).contains(&y)));
        assert_eq!(fill_holes(&c), c);
    }

    #[test]
    fn small_object_removal() {
        let m = BinaryMask::from_fn(10, 10, |x, y| y == 0 && x < 5);
        let lm = label_components(&m, Connectivity::Eight);
        assert_eq!(remove_small(&lm, 30).count, 0);
        assert_eq!(remove_small(&lm, 5).count, 1);
        assert_eq!(remove_small(&lm, 6).count, 0);

        // sizes in raster order: 4, 9, 2, 12
        let m = BinaryMask::from_fn(20, 20, |x, y| {
            (x < 2 && y < 2)
                || ((5..8).contains(&x) && y < 3)
                || (x == 10 && y < 2)
                || ((14..18).contains(&x) && (5..8).contains(&y))
        });
        let lm = label_components(&m, Connectivity::Eight);
        assert_eq!(lm.areas()[1..], [4, 9, 2, 12]);
        let kept = remove_small(&lm, 4);
        assert_eq!(kept.count, 3);
        assert_eq!(kept.areas()[1..], [4, 9, 12]);
        assert_eq!(kept.get(0, 0), 1);
        assert_eq!(kept.get(5, 0), 2);
        assert_eq!(kept.get(15, 6), 3);
        assert!(kept.is_compact());
    }

    #[test]
    fn dumbbell_splits_into_two_disks() {
        let m = mask_of(56, 34, &[&disk(16.0, 17.0, 12.0), &disk(36.0, 17.0, 12.0)]);
        let lm = label_components(&m, Connectivity::Eight);
        let (out, outcome) = split_concave(&lm, 1, &split_cfg()).unwrap();
        assert_eq!(outcome, SplitOutcome::Split { parts: 2 });
        assert_eq!(out.count, 2);
        let single = pixel_area(12.0) as f64;
        for a in &out.areas()[1..] {
            assert!((*a as f64 - single).abs() <= 0.15 * single, "{a} vs {single}");
        }
    }

    #[test]
    fn convex_blob_is_not_split() {
        let m = mask_of(40, 40, &[&disk(20.0, 20.0, 12.0)]);
        let lm = label_components(&m, Connectivity::Eight);
        let (out, outcome) = split_concave(&lm, 1, &split_cfg()).unwrap();
        assert_eq!(outcome, SplitOutcome::Convex);
        assert_eq!(out, lm);
    }

    #[test]
    fn small_dumbbell_split_is_rejected() {
        let m = mask_of(34, 20, &[&disk(10.0, 10.0, 6.0), &disk(20.0, 10.0, 6.0)]);
        let lm = label_components(&m, Connectivity::Eight);
        let (halves, outcome) = split_concave(&lm, 1, &split_cfg()).unwrap();
        assert_eq!(outcome, SplitOutcome::Split { parts: 2 });
        let smaller = *halves.areas()[1..].iter().min().unwrap();

        // Raise the minimum area just above the smaller half.
        let cfg = PipelineConfig { min_area: smaller + 1, solidity_threshold: 0.95, ..PipelineConfig::default() };
        let g = component_geometry(&lm, 1).unwrap();
        assert!(g.area >= 2 * cfg.min_area && g.solidity < 0.95, "{} {}", g.area, g.solidity);
        let (out, outcome) = split_concave(&lm, 1, &cfg).unwrap();
        assert_eq!(outcome, SplitOutcome::PartsTooSmall);
        assert!(outcome.is_size_rejection());
        assert_eq!(out, lm);
    }

    #[test]
    fn clean_mask_converges_immediately() {
        let m = mask_of(80, 40, &[&disk(15.0, 20.0, 9.0), &disk(50.0, 20.0, 11.0)]);
        let out = refine(&m, &PipelineConfig::default());
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_eq!(out.labels, label_components(&m, Connectivity::Eight));
    }

    #[test]
    fn chain_of_three_splits_twice() {
        let m = mask_of(80, 34, &[&disk(16.0, 17.0, 12.0), &disk(36.0, 17.0, 12.0), &disk(56.0, 17.0, 12.0)]);
        let out = refine(&m, &split_cfg());
        assert_eq!(out.labels.count, 3);
        assert!(out.converged && out.iterations <= 3, "{}", out.iterations);
        assert_eq!(out.trace[0].count, 2);
        assert_eq!(out.trace[1].count, 3);
    }

    #[test]
    fn noisy_mask_is_cleaned() {
        let mut m = mask_of(60, 60, &[&disk(20.0, 20.0, 10.0), &disk(42.0, 42.0, 9.0)]);
        for (x, y) in [(20, 20), (21, 20), (19, 22), (42, 41)] {
            m.set(x, y, false);
        }
        for (x, y) in [(2, 50), (55, 3), (50, 10), (51, 10), (5, 5)] {
            m.set(x, y, true);
        }
        let out = refine(&m, &PipelineConfig::default());
        assert!(out.iterations >= 1);
        assert_eq!(out.labels.count, 2);
        assert_eq!(out.labels.get(20, 20), 1);
        assert_eq!(out.labels.get(42, 41), 2);
        assert_eq!(out.labels.get(2, 50), 0);
    }

    #[test]
    fn line4_is_four_connected() {
        for b in [(7, 3), (-4, 9), (0, -5), (6, 6), (-8, -2)] {
            let l = line4((0, 0), b);
            assert_eq!(l[0], (0, 0));
            assert_eq!(*l.last().unwrap(), b);
            for w in l.windows(2) {
                assert!((w[0].0 - w[1].0).abs() + (w[0].1 - w[1].1).abs() <= 1, "{w:?}");
            }
        }
    }

    #[test]
    fn from_raw_compacts_by_first_appearance() {
        let lm = LabelMap::from_raw(3, 1, &[0, 9, 5]).unwrap();
        assert_eq!(lm.labels, vec![0, 1, 2]);
        assert_eq!(lm.count, 2);
        assert!(lm.is_compact());
    }

    fn random_mask() -> impl Strategy<Value = BinaryMask> {
        (4usize..48, 4usize..48, 0.2f64..0.7, any::<u64>()).prop_map(|(w, h, density, seed)| {
            let mut s = seed | 1;
            let data = (0..w * h)
                .map(|_| {
                    s ^= s << 13;
                    s ^= s >> 7;
                    s ^= s << 17;
                    (s % 1000) as f64 / 1000.0 < density
                })
                .collect();
            BinaryMask { width: w, height: h, data }
        })
    }

    proptest! {
        #[test]
        fn fill_holes_is_extensive_and_idempotent(m in random_mask()) {
            let f = fill_holes(&m);
            prop_assert!(m.data.iter().zip(&f.data).all(|(a, b)| !*a || *b));
            prop_assert_eq!(fill_holes(&f), f);
        }

        #[test]
        fn remove_small_is_anti_extensive_and_idempotent(m in random_mask(), min_area in 1usize..20) {
            let lm = label_components(&m, Connectivity::Eight);
            let r = remove_small(&lm, min_area);
            prop_assert!(r.labels.iter().zip(&lm.labels).all(|(a, b)| *a == 0 || *b != 0));
            prop_assert_eq!(remove_small(&r, min_area), r.clone());
            prop_assert!(r.is_compact());
        }

        #[test]
        fn labels_are_connected_and_compact(m in random_mask()) {
            let lm = label_components(&m, Connectivity::Eight);
            prop_assert!(lm.is_compact());
            for l in 1..=lm.count {
                let sub = BinaryMask { width: m.width, height: m.height, data: lm.labels.iter().map(|&v| v == l).collect() };
                prop_assert_eq!(label_components(&sub, Connectivity::Eight).count, 1);
            }
        }

        #[test]
        fn refine_respects_min_area(m in random_mask()) {
            let cfg = PipelineConfig { min_area: 6, ..PipelineConfig::default() };
            let out = refine(&m, &cfg);
            prop_assert!(out.iterations <= cfg.max_iterations);
            prop_assert!(out.labels.areas()[1..].iter().all(|&a| a >= cfg.min_area));
        }
    }
}
