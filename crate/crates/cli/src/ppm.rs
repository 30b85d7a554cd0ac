//! Binary PPM (P6) export of feature images, attention maps and confusion
//! matrices.

use std::io::{self, Write};
use std::path::Path;

use afe_autograd::Tensor;

/// 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write_ppm(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.to_ppm())
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_ppm())
    }
}

/// Maps `v` in `[0, 1]` to 0..=255, rounding to nearest.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `(v - lo) / (hi - lo)`, or 0 when the range is empty.
fn normalize(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

fn min_max(values: &[f32]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v as f64), hi.max(v as f64))
    })
}

/// Dark violet to bright yellow; stronger values are more yellow.
pub fn heat_ramp(v: f64) -> [u8; 3] {
    const LOW: [f64; 3] = [68.0, 1.0, 84.0];
    const HIGH: [f64; 3] = [253.0, 231.0, 37.0];
    let v = v.clamp(0.0, 1.0);
    [0, 1, 2].map(|c| (LOW[c] + (HIGH[c] - LOW[c]) * v).round() as u8)
}

/// A `[3, H, W]` image with the three coordinate channels as RGB, min-max
/// normalized over the whole image.
pub fn rgb_from_channels(image: &Tensor<f32>) -> RgbImage {
    let s = image.shape();
    assert!(s.len() == 3 && s[0] == 3, "expected a [3, H, W] image, got {s:?}");
    let (h, w) = (s[1], s[2]);
    let (lo, hi) = min_max(image.data());
    let plane = h * w;
    let d = image.data();
    let pixels = (0..plane)
        .map(|i| [0, 1, 2].map(|c| quantize(normalize(d[c * plane + i] as f64, lo, hi))))
        .collect();
    RgbImage {
        width: w,
        height: h,
        pixels,
    }
}

/// A `[H, W]` map min-max normalized through [`heat_ramp`].
pub fn heatmap(map: &Tensor<f32>) -> RgbImage {
    let s = map.shape();
    assert!(s.len() == 2, "expected a [H, W] map, got {s:?}");
    let (lo, hi) = min_max(map.data());
    RgbImage {
        width: s[1],
        height: s[0],
        pixels: map.data().iter().map(|&v| heat_ramp(normalize(v as f64, lo, hi))).collect(),
    }
}

/// Row-normalized confusion rates (`c x c`); empty rows stay at zero.
pub fn confusion_heatmap(counts: &[u64], classes: usize) -> RgbImage {
    let mut pixels = Vec::with_capacity(classes * classes);
    for row in counts.chunks(classes) {
        let total: u64 = row.iter().sum();
        for &n in row {
            let rate = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            pixels.push(heat_ramp(rate));
        }
    }
    RgbImage {
        width: classes,
        height: classes,
        pixels,
    }
}
