//! Polygon annotations in the Aperio-style XML used by MoNuSeg, and their
//! rasterization into instance label maps.
//!
//! ```text
//! <Annotations>
//!   <Annotation>
//!     <Regions>
//!       <Region Id="1">
//!         <Vertices>
//!           <Vertex X="10.5" Y="20.25" />
//! ```

use std::path::Path;

use nucseg_core::LabelMap;

use crate::image_io::read_text;
use crate::IoError;

/// Ordered vertex list in image coordinates.
pub type Polygon = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationPolygons {
    /// One polygon per kept region, in file order.
    pub polygons: Vec<Polygon>,
    /// Regions that were skipped, with the reason.
    pub warnings: Vec<String>,
}

fn element_path(node: roxmltree::Node) -> String {
    let mut parts = Vec::new();
    for n in node.ancestors().filter(|n| n.is_element()) {
        let name = n.tag_name().name();
        let index = n.prev_siblings().skip(1).filter(|s| s.is_element() && s.tag_name().name() == name).count() + 1;
        parts.push(format!("{name}[{index}]"));
    }
    parts.reverse();
    parts.join("/")
}

fn coordinate(vertex: roxmltree::Node, attr: &str) -> Result<f64, String> {
    let raw = vertex.attribute(attr).ok_or_else(|| format!("{}: missing attribute {attr}", element_path(vertex)))?;
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{}: invalid {attr} value {raw:?}", element_path(vertex)))
}

fn children<'a, 'input>(
    node: roxmltree::Node<'a, 'input>,
    name: &'static str,
) -> impl Iterator<Item = roxmltree::Node<'a, 'input>> {
    node.children().filter(move |c| c.is_element() && c.tag_name().name() == name)
}

/// Parse annotation XML text.
pub fn parse_annotation_str(text: &str) -> Result<AnnotationPolygons, String> {
    let doc = roxmltree::Document::parse(text).map_err(|e| format!("malformed XML: {e}"))?;
    let mut out = AnnotationPolygons::default();
    let root = doc.root_element();
    let annotations: Vec<_> =
        if root.tag_name().name() == "Annotation" { vec![root] } else { children(root, "Annotation").collect() };
    for annotation in annotations {
        for regions in children(annotation, "Regions") {
            for region in children(regions, "Region") {
                let vertices = children(region, "Vertices")
                    .next()
                    .ok_or_else(|| format!("{}: missing Vertices", element_path(region)))?;
                let polygon = children(vertices, "Vertex")
                    .map(|v| Ok([coordinate(v, "X")?, coordinate(v, "Y")?]))
                    .collect::<Result<Polygon, String>>()?;
                if polygon.len() < 3 {
                    out.warnings.push(format!(
                        "{}: skipped region with {} vertices",
                        element_path(region),
                        polygon.len()
                    ));
                    continue;
                }
                out.polygons.push(polygon);
            }
        }
    }
    Ok(out)
}

pub fn parse_annotation_xml(path: &Path) -> Result<AnnotationPolygons, IoError> {
    let text = read_text(path)?;
    parse_annotation_str(&text).map_err(|msg| IoError::Annotation { path: path.to_path_buf(), msg })
}

/// Rasterize polygons into a `w × h` label map.
///
/// A pixel belongs to a polygon when its center is inside under the
/// even-odd rule; an edge crosses a scanline when exactly one endpoint lies
/// at or above it. Polygons are drawn in order, later ones overwriting
/// earlier ones, and the surviving polygons are numbered `1..=n` in that
/// order.
pub fn rasterize_polygons(polygons: &[Polygon], w: usize, h: usize) -> LabelMap {
    let mut raw = vec![0u32; w * h];
    let mut crossings = Vec::new();
    for (k, poly) in polygons.iter().enumerate() {
        let label = k as u32 + 1;
        let ys = poly.iter().map(|p| p[1]);
        let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        if !(ymin < h as f64 && ymax > 0.0) {
            continue;
        }
        let row_lo = (ymin - 0.5).ceil().max(0.0) as usize;
        let row_hi = ((ymax - 0.5).ceil().max(0.0) as usize).min(h);
        for y in row_lo..row_hi {
            let yc = y as f64 + 0.5;
            crossings.clear();
            for (i, a) in poly.iter().enumerate() {
                let b = poly[(i + 1) % poly.len()];
                if (a[1] <= yc) != (b[1] <= yc) {
                    crossings.push(a[0] + (yc - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for pair in crossings.chunks_exact(2) {
                // pixel centers x + 0.5 in [pair[0], pair[1])
                let x0 = (pair[0] - 0.5).ceil().max(0.0);
                let x1 = (pair[1] - 0.5).ceil().min(w as f64);
                for x in (x0 as usize)..(x1.max(x0) as usize) {
                    raw[y * w + x] = label;
                }
            }
        }
    }

    let mut present = vec![false; polygons.len() + 1];
    for &l in &raw {
        present[l as usize] = true;
    }
    let mut remap = vec![0u32; polygons.len() + 1];
    let mut count = 0;
    for (l, _) in present.iter().enumerate().skip(1).filter(|(_, &p)| p) {
        count += 1;
        remap[l] = count;
    }
    let labels = raw.iter().map(|&l| remap[l as usize]).collect();
    LabelMap { width: w, height: h, labels, count }
}
