use nucseg_core::{LabelMap, RgbImage};

/// Deterministic, saturated color for a label.
pub fn label_color(label: u32) -> [u8; 3] {
    let mut z = (label as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut c = [(z & 0xFF) as u8, ((z >> 8) & 0xFF) as u8, ((z >> 16) & 0xFF) as u8];
    // push one channel up and one down so the color stands out on stain
    let hi = (z >> 24) as usize % 3;
    c[hi] |= 0xC0;
    c[(hi + 1) % 3] &= 0x3F;
    c
}

/// Draw each instance's boundary pixels in its label color.
///
/// A boundary pixel is a labeled pixel with a 4-neighbour outside its
/// instance, counting the image border as outside.
pub fn render_overlay(img: &RgbImage, lm: &LabelMap) -> RgbImage {
    assert_eq!((img.width(), img.height()), (lm.width, lm.height), "overlay dimensions differ");
    let mut out = img.clone();
    let (w, h) = (lm.width, lm.height);
    for y in 0..h {
        for x in 0..w {
            let l = lm.get(x, y);
            if l == 0 {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || lm.get(x - 1, y) != l
                || lm.get(x + 1, y) != l
                || lm.get(x, y - 1) != l
                || lm.get(x, y + 1) != l;
            if edge {
                out.set_pixel(x, y, label_color(l));
            }
        }
    }
    out
}
