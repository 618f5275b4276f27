//! Plate binarization with Otsu's threshold and character clipping.

use thiserror::Error;

use crate::image::{BinaryImage, GrayImage, Rect};

pub const HISTOGRAM_BINS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("degenerate histogram: region has a single intensity level")]
    DegenerateHistogram,
    #[error("segmentation failed: {found} character candidate(s) accepted, need at least 2")]
    SegmentationFailed { found: usize },
    #[error("character image has no foreground pixels")]
    EmptyForeground,
    #[error("grid must be at least 1x1")]
    InvalidGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuResult {
    /// Cut value in `[0, 1]`; pixels strictly below it form the dark class.
    pub threshold: f64,
    /// Index of the last histogram bin in the dark class.
    pub cut_bin: usize,
    pub between_class_variance: f64,
    pub total_variance: f64,
}

impl OtsuResult {
    /// Separability `σ_B² / σ_T²` in `[0, 1]`.
    pub fn separability(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.between_class_variance / self.total_variance
        } else {
            0.0
        }
    }
}

#[inline]
pub fn histogram_bin(v: f64) -> usize {
    ((v * 255.0).round() as usize).min(HISTOGRAM_BINS - 1)
}

pub fn histogram(img: &GrayImage) -> [u64; HISTOGRAM_BINS] {
    let mut h = [0u64; HISTOGRAM_BINS];
    for &v in img.data() {
        h[histogram_bin(v)] += 1;
    }
    h
}

/// Otsu's threshold over a 256-bin histogram: the cut maximizing the between-class
/// variance (hence `σ_B² / σ_T²`, the total variance being fixed). The lowest cut wins ties.
pub fn otsu_threshold(region: &GrayImage) -> Result<OtsuResult, SegmentError> {
    otsu_from_histogram(&histogram(region))
}

/// `a² / da > b² / db`, exactly unless the cross products overflow.
fn greater_ratio(a: i128, da: i128, b: i128, db: i128) -> bool {
    let lhs = a.checked_mul(a).and_then(|v| v.checked_mul(db));
    let rhs = b.checked_mul(b).and_then(|v| v.checked_mul(da));
    match (lhs, rhs) {
        (Some(l), Some(r)) => l > r,
        _ => (a as f64).powi(2) / da as f64 > (b as f64).powi(2) / db as f64,
    }
}

pub fn otsu_from_histogram(hist: &[u64; HISTOGRAM_BINS]) -> Result<OtsuResult, SegmentError> {
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    if occupied < 2 {
        return Err(SegmentError::DegenerateHistogram);
    }
    let n: u64 = hist.iter().sum();
    let s: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let nf = n as f64;
    let mean = s as f64 / nf;
    let total_variance = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 * (i as f64 - mean).powi(2))
        .sum::<f64>()
        / nf
        / (255.0 * 255.0);

    let (mut n0, mut s0) = (0u64, 0u64);
    // best cut as the exact fraction num² / (n0·n1); σ_B² = that / N²
    let mut best: Option<(usize, i128, i128)> = None;
    for (t, &c) in hist.iter().enumerate().take(HISTOGRAM_BINS - 1) {
        n0 += c;
        s0 += t as u64 * c;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let num = n as i128 * s0 as i128 - n0 as i128 * s as i128;
        let den = n0 as i128 * n1 as i128;
        let better = match best {
            None => true,
            Some((_, bnum, bden)) => greater_ratio(num, den, bnum, bden),
        };
        if better {
            best = Some((t, num, den));
        }
    }
    let (best_cut, num, den) = best.expect("two occupied bins give a valid cut");
    let best = (num as f64).powi(2) / den as f64 / (nf * nf);
    Ok(OtsuResult {
        threshold: (best_cut as f64 + 0.5) / 255.0,
        cut_bin: best_cut,
        between_class_variance: best / (255.0 * 255.0),
        total_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Polarity {
    /// Pixels below the threshold are ink.
    DarkInk,
    /// Pixels at or above the threshold are ink.
    LightInk,
    /// The smaller side of the threshold is ink.
    Auto,
}

pub fn binarize(region: &GrayImage, t: f64, polarity: Polarity) -> BinaryImage {
    let dark = region.data().iter().filter(|&&v| v < t).count();
    let dark_ink = match polarity {
        Polarity::DarkInk => true,
        Polarity::LightInk => false,
        Polarity::Auto => 2 * dark <= region.data().len(),
    };
    let data = region
        .data()
        .iter()
        .map(|&v| u8::from((v < t) == dark_ink))
        .collect();
    BinaryImage::new(region.width(), region.height(), data).expect("same dimensions")
}

#[derive(Debug, Clone)]
pub struct Component {
    pub bbox: Rect,
    pub pixels: Vec<(usize, usize)>,
}

/// 8-connected foreground components in raster order of their first pixel.
pub fn connected_components(bin: &BinaryImage) -> Vec<Component> {
    let (w, h) = (bin.width(), bin.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if bin.get(sx, sy) == 0 || seen[sy * w + sx] {
                continue;
            }
            seen[sy * w + sx] = true;
            stack.push((sx, sy));
            let mut pixels = Vec::new();
            let (mut x0, mut y0, mut x1, mut y1) = (sx, sy, sx, sy);
            while let Some((x, y)) = stack.pop() {
                pixels.push((x, y));
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let i = ny * w + nx;
                        if !seen[i] && bin.get(nx, ny) == 1 {
                            seen[i] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            out.push(Component {
                bbox: Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
                pixels,
            });
        }
    }
    out
}

/// Size and alignment gates for character components, relative to the seed glyph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipConfig {
    pub min_height: f64,
    pub max_height: f64,
    pub min_width: f64,
    pub max_width: f64,
    /// Minimum fraction of a box's height that must overlap the seed's rows.
    pub min_row_overlap: f64,
    /// Horizontal overlap, as a fraction of the seed width, above which two boxes conflict.
    pub max_x_overlap: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig {
            min_height: 0.6,
            max_height: 1.4,
            min_width: 0.3,
            max_width: 1.6,
            min_row_overlap: 0.5,
            max_x_overlap: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharBox {
    /// Box in plate-region coordinates.
    pub bbox: Rect,
    /// The component's own pixels, cropped to `bbox`.
    pub image: BinaryImage,
}

/// Connected components that look like characters of the seed's size and row,
/// ordered left to right.
pub fn clip_characters(
    bin: &BinaryImage,
    seed: Rect,
    cfg: &ClipConfig,
) -> Result<Vec<CharBox>, SegmentError> {
    let (sw, sh) = (seed.width.max(1) as f64, seed.height.max(1) as f64);
    let mut accepted: Vec<Component> = connected_components(bin)
        .into_iter()
        .filter(|c| {
            let (w, h) = (c.bbox.width as f64, c.bbox.height as f64);
            let overlap = c.bbox.bottom().min(seed.bottom()) as f64 - c.bbox.y.max(seed.y) as f64;
            h >= cfg.min_height * sh
                && h <= cfg.max_height * sh
                && w >= cfg.min_width * sw
                && w <= cfg.max_width * sw
                && overlap >= cfg.min_row_overlap * h
        })
        .collect();
    accepted.sort_by_key(|c| (c.bbox.x, c.bbox.y));

    let limit = cfg.max_x_overlap * sw;
    let mut kept: Vec<Component> = Vec::with_capacity(accepted.len());
    for c in accepted {
        if let Some(prev) = kept.last() {
            let overlap = prev.bbox.right().min(c.bbox.right()) as f64 - c.bbox.x as f64;
            if overlap > limit {
                if c.pixels.len() > prev.pixels.len() {
                    kept.pop();
                    kept.push(c);
                }
                continue;
            }
        }
        kept.push(c);
    }
    if kept.len() < 2 {
        return Err(SegmentError::SegmentationFailed { found: kept.len() });
    }
    Ok(kept
        .into_iter()
        .map(|c| {
            let mut image = BinaryImage::zeros(c.bbox.width, c.bbox.height);
            for (x, y) in c.pixels {
                image.set(x - c.bbox.x, y - c.bbox.y, true);
            }
            CharBox {
                bbox: c.bbox,
                image,
            }
        })
        .collect())
}

/// Resamples the tight foreground box of `img` onto a `grid_w × grid_h` grid by nearest
/// neighbour. Images already of grid size are returned unchanged.
pub fn normalize_character(
    img: &BinaryImage,
    grid_w: usize,
    grid_h: usize,
) -> Result<BinaryImage, SegmentError> {
    if grid_w == 0 || grid_h == 0 {
        return Err(SegmentError::InvalidGrid);
    }
    if img.count_ones() == 0 {
        return Err(SegmentError::EmptyForeground);
    }
    if img.width() == grid_w && img.height() == grid_h {
        return Ok(img.clone());
    }
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.get(x, y) == 1 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut out = BinaryImage::zeros(grid_w, grid_h);
    for gy in 0..grid_h {
        let sy = y0 + ((gy * 2 + 1) * bh / (2 * grid_h)).min(bh - 1);
        for gx in 0..grid_w {
            let sx = x0 + ((gx * 2 + 1) * bw / (2 * grid_w)).min(bw - 1);
            out.set(gx, gy, img.get(sx, sy) == 1);
        }
    }
    Ok(out)
}
