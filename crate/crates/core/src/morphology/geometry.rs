//! Shape measurements for a single labeled component: convex hull,
//! solidity, outer contour and concavity defects.

use super::LabelMap;
use crate::error::{Error, Result};

/// Contour pixels closer than this to the hull are not part of any pocket.
pub const POCKET_DEPTH: f64 = 1.0;

/// Deepest point of one concave pocket of the outer contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defect {
    pub x: usize,
    pub y: usize,
    /// Distance from the pixel center to the hull boundary, in pixels.
    pub depth: f64,
    /// Index of the nearest hull edge (edge `i` runs from `hull[i]` to `hull[i + 1]`).
    pub anchor: usize,
}

/// Area, hull and concavity information for one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGeometry {
    pub area: usize,
    /// Convex hull of the pixel squares (corner coordinates), counter-clockwise
    /// in image coordinates, without collinear vertices.
    pub hull: Vec<[f64; 2]>,
    pub hull_area: f64,
    /// `area / hull_area`, in (0, 1].
    pub solidity: f64,
    /// One defect per pocket, deepest first.
    pub defects: Vec<Defect>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull. Collinear points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice.abs() / 2.0
}

/// Distance from `p` to the boundary of convex polygon `hull` (for points
/// inside it) and the index of the nearest edge.
pub fn hull_depth(hull: &[[f64; 2]], p: [f64; 2]) -> (f64, usize) {
    let n = hull.len();
    let mut best = (f64::INFINITY, 0);
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        let d = cross(a, b, p).abs() / len;
        if d < best.0 {
            best = (d, i);
        }
    }
    best
}

// Clockwise in image coordinates (y down), starting west.
const RING: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

fn ring_index(d: (i64, i64)) -> usize {
    RING.iter().position(|&r| r == d).expect("unit offset")
}

/// Outer contour of an 8-connected pixel set by Moore-neighbour tracing,
/// starting from its first pixel in raster order. Pixels on one-pixel-wide
/// parts appear more than once.
pub fn trace_outer_contour(inside: impl Fn(i64, i64) -> bool, start: (i64, i64)) -> Vec<(i64, i64)> {
    let mut contour = vec![start];
    // The raster-first pixel has no foreground to its west.
    let mut back = ring_index((-1, 0));
    let mut p = start;
    let mut first_move: Option<(i64, i64)> = None;
    let limit = 1 << 24;
    for _ in 0..limit {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let q = (p.0 + RING[d].0, p.1 + RING[d].1);
            if inside(q.0, q.1) {
                let prev = RING[(back + k - 1) % 8];
                let b = (p.0 + prev.0, p.1 + prev.1);
                next = Some((q, ring_index((b.0 - q.0, b.1 - q.1))));
                break;
            }
        }
        let Some((q, new_back)) = next else {
            return contour; // isolated pixel
        };
        if p == start {
            match first_move {
                None => first_move = Some(q),
                Some(f) if f == q => {
                    contour.pop();
                    return contour;
                }
                Some(_) => {}
            }
        }
        contour.push(q);
        p = q;
        back = new_back;
    }
    contour
}

/// Measure component `label` of `lm`.
pub fn component_geometry(lm: &LabelMap, label: u32) -> Result<ComponentGeometry> {
    if label == 0 || label > lm.count {
        return Err(Error::NoSuchLabel(label));
    }
    let (w, h) = (lm.width, lm.height);
    let mut area = 0usize;
    let mut corners = Vec::new();
    let mut start = None;
    for y in 0..h {
        let row = &lm.labels[y * w..(y + 1) * w];
        let mut first = None;
        let mut last = 0;
        for (x, &l) in row.iter().enumerate() {
            if l == label {
                area += 1;
                first.get_or_insert(x);
                last = x;
            }
        }
        if let Some(f) = first {
            start.get_or_insert((f as i64, y as i64));
            let (yf, xf, xl) = (y as f64, f as f64, last as f64 + 1.0);
            corners.extend([[xf, yf], [xf, yf + 1.0], [xl, yf], [xl, yf + 1.0]]);
        }
    }
    let start = start.ok_or(Error::NoSuchLabel(label))?;
    let hull = convex_hull(&corners);
    let hull_area = polygon_area(&hull);
    let solidity = (area as f64 / hull_area).min(1.0);

    let inside = |x: i64, y: i64| {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && lm.get(x as usize, y as usize) == label
    };
    let contour = trace_outer_contour(inside, start);
    let defects = pocket_defects(&hull, &contour);
    Ok(ComponentGeometry { area, hull, hull_area, solidity, defects })
}

fn pocket_defects(hull: &[[f64; 2]], contour: &[(i64, i64)]) -> Vec<Defect> {
    let depths: Vec<(f64, usize)> =
        contour.iter().map(|&(x, y)| hull_depth(hull, [x as f64 + 0.5, y as f64 + 0.5])).collect();
    let Some(origin) = depths.iter().position(|d| d.0 <= POCKET_DEPTH) else {
        return Vec::new();
    };
    let n = contour.len();
    let mut defects = Vec::new();
    let mut current: Option<(usize, f64)> = None;
    for k in 1..=n {
        let i = (origin + k) % n;
        let d = depths[i].0;
        if d > POCKET_DEPTH {
            if current.is_none_or(|(_, best)| d > best) {
                current = Some((i, d));
            }
        } else if let Some((j, depth)) = current.take() {
            let (x, y) = contour[j];
            defects.push(Defect { x: x as usize, y: y as usize, depth, anchor: depths[j].1 });
        }
    }
    defects.sort_by(|a, b| b.depth.total_cmp(&a.depth).then((a.y, a.x).cmp(&(b.y, b.x))));
    defects
}
