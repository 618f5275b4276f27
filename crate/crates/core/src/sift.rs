//! Scale-invariant keypoints: difference-of-Gaussians pyramid, 26-neighbour
//! extrema, gradient-histogram orientations and 128-value descriptors.

use std::f64::consts::PI;

use thiserror::Error;

use crate::image::{downsample_half, gaussian_blur, subtract, DiffImage, GrayImage, ImageError};

pub const DESCRIPTOR_LEN: usize = 128;
/// Smallest image side for which an octave is built.
pub const MIN_OCTAVE_SIZE: usize = 16;
pub const ORIENTATION_BINS: usize = 36;
/// Width of one orientation histogram bin, 2π/36.
pub const ORIENTATION_BIN_WIDTH: f64 = 2.0 * PI / ORIENTATION_BINS as f64;

const ASSUMED_INPUT_BLUR: f64 = 0.5;
const ORIENTATION_WINDOW_FACTOR: f64 = 1.5;
const ORIENTATION_PEAK_RATIO: f64 = 0.8;
const DESCRIPTOR_SAMPLES: usize = 16;
const DESCRIPTOR_CELLS: usize = 4;
const DESCRIPTOR_ORI_BINS: usize = 8;
/// Sample spacing in units of the keypoint's octave-relative scale.
const DESCRIPTOR_SPACING: f64 = 0.75;
const DESCRIPTOR_WEIGHT_SIGMA: f64 = 8.0;
const DESCRIPTOR_CLAMP: f32 = 0.2;

#[derive(Debug, Error)]
pub enum SiftError {
    #[error("image of {width}x{height} is too small for one octave (need {min}x{min})")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("invalid SIFT configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftConfig {
    /// Intervals per octave (`s`); each octave holds `s + 3` Gaussian levels.
    pub intervals: usize,
    /// `None` builds octaves until the smaller side drops below 16 pixels.
    pub num_octaves: Option<usize>,
    pub sigma0: f64,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    /// Quadratic sub-pixel refinement of extrema. Off by default.
    pub refine: bool,
}

impl Default for SiftConfig {
    fn default() -> Self {
        SiftConfig {
            intervals: 3,
            num_octaves: None,
            sigma0: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            refine: false,
        }
    }
}

impl SiftConfig {
    pub fn validate(&self) -> Result<(), SiftError> {
        if self.intervals < 1 {
            return Err(SiftError::InvalidConfig("intervals must be >= 1".into()));
        }
        if self.sigma0.is_nan() || self.sigma0 <= 0.0 {
            return Err(SiftError::InvalidConfig("sigma0 must be positive".into()));
        }
        if self.contrast_threshold.is_nan()
            || self.contrast_threshold <= 0.0
            || self.edge_ratio.is_nan()
            || self.edge_ratio <= 0.0
        {
            return Err(SiftError::InvalidConfig(
                "thresholds must be positive".into(),
            ));
        }
        if self.num_octaves == Some(0) {
            return Err(SiftError::InvalidConfig("num_octaves must be >= 1".into()));
        }
        Ok(())
    }

    /// Multiplicative scale step between adjacent levels, `2^(1/s)`.
    pub fn k(&self) -> f64 {
        2f64.powf(1.0 / self.intervals as f64)
    }
}

/// 128-value gradient histogram descriptor.
#[derive(Clone, Copy, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance_sq(&self, other: &Descriptor) -> f64 {
        squared_distance(&self.0, &other.0)
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

impl std::fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Descriptor(|d|={:.4}, {:?}..)",
            self.norm(),
            &self.0[..4]
        )
    }
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    /// Position in input-image pixels.
    pub x: f64,
    pub y: f64,
    /// Absolute scale in input-image pixels.
    pub sigma: f64,
    /// Dominant gradient orientation in `(-π, π]`.
    pub theta: f64,
    pub descriptor: Descriptor,
}

#[derive(Debug, Clone)]
pub struct Octave {
    /// `s + 3` Gaussian levels.
    pub gaussians: Vec<GrayImage>,
    /// `s + 2` difference-of-Gaussian levels, `dogs[i] = gaussians[i + 1] - gaussians[i]`.
    pub dogs: Vec<DiffImage>,
    /// Factor mapping octave pixels to input pixels (`2^o`).
    pub scale: f64,
}

impl Octave {
    pub fn width(&self) -> usize {
        self.gaussians[0].width()
    }

    pub fn height(&self) -> usize {
        self.gaussians[0].height()
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
    /// Octave-relative scale of each Gaussian level, `sigma0 * k^i`.
    pub level_sigmas: Vec<f64>,
    pub intervals: usize,
}

impl ScaleSpace {
    /// Absolute scale of level `level` in octave `octave`, in input pixels.
    pub fn absolute_sigma(&self, octave: usize, level: f64) -> f64 {
        let s0 = self.level_sigmas[0];
        let k = 2f64.powf(1.0 / self.intervals as f64);
        s0 * k.powf(level) * self.octaves[octave].scale
    }
}

pub fn build_scale_space(img: &GrayImage, cfg: &SiftConfig) -> Result<ScaleSpace, SiftError> {
    cfg.validate()?;
    if img.width() < MIN_OCTAVE_SIZE || img.height() < MIN_OCTAVE_SIZE {
        return Err(SiftError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_OCTAVE_SIZE,
        });
    }
    let s = cfg.intervals;
    let k = cfg.k();
    let level_sigmas: Vec<f64> = (0..s + 3).map(|i| cfg.sigma0 * k.powi(i as i32)).collect();
    // incremental blur taking level i-1 to level i
    let increments: Vec<f64> = (1..s + 3)
        .map(|i| (level_sigmas[i].powi(2) - level_sigmas[i - 1].powi(2)).sqrt())
        .collect();

    let base_blur = (cfg.sigma0.powi(2) - ASSUMED_INPUT_BLUR.powi(2))
        .max(0.01)
        .sqrt();
    let mut seed = gaussian_blur(img, base_blur)?;
    let mut octaves = Vec::new();
    let mut scale = 1.0;
    loop {
        let mut gaussians = Vec::with_capacity(s + 3);
        gaussians.push(seed);
        for inc in &increments {
            let next = gaussian_blur(gaussians.last().unwrap(), *inc)?;
            gaussians.push(next);
        }
        let dogs = gaussians
            .windows(2)
            .map(|pair| subtract(&pair[1], &pair[0]))
            .collect::<Result<Vec<_>, _>>()?;
        let next_seed = &gaussians[s];
        let (nw, nh) = (next_seed.width() / 2, next_seed.height() / 2);
        let more = match cfg.num_octaves {
            Some(n) => octaves.len() + 1 < n && nw >= 2 && nh >= 2,
            None => nw.min(nh) >= MIN_OCTAVE_SIZE,
        };
        let following = if more {
            Some(downsample_half(next_seed)?)
        } else {
            None
        };
        octaves.push(Octave {
            gaussians,
            dogs,
            scale,
        });
        match following {
            Some(next) => {
                seed = next;
                scale *= 2.0;
            }
            None => break,
        }
    }
    Ok(ScaleSpace {
        octaves,
        level_sigmas,
        intervals: s,
    })
}

/// A scale-space extremum in octave coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub octave: usize,
    /// DoG level, always in `1..=s`.
    pub level: usize,
    pub x: usize,
    pub y: usize,
    /// Sub-pixel offsets from quadratic refinement; zero when refinement is off.
    pub offset: [f64; 3],
    /// DoG value at the sample.
    pub value: f64,
}

impl Candidate {
    pub fn octave_xy(&self) -> (f64, f64) {
        (
            self.x as f64 + self.offset[0],
            self.y as f64 + self.offset[1],
        )
    }
}

/// True when `dogs[level](x, y)` is strictly above or strictly below all 26 neighbours.
pub fn is_strict_extremum(dogs: &[DiffImage], level: usize, x: usize, y: usize) -> bool {
    let v = dogs[level].get(x, y);
    let mut above = true;
    let mut below = true;
    for plane in &dogs[level - 1..=level + 1] {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dogs[level]) && nx == x && ny == y {
                    continue;
                }
                let n = plane.get(nx, ny);
                above &= v > n;
                below &= v < n;
                if !above && !below {
                    return false;
                }
            }
        }
    }
    above || below
}

fn passes_edge_test(d: &DiffImage, x: usize, y: usize, edge_ratio: f64) -> bool {
    let c = d.get(x, y);
    let dxx = d.get(x + 1, y) + d.get(x - 1, y) - 2.0 * c;
    let dyy = d.get(x, y + 1) + d.get(x, y - 1) - 2.0 * c;
    let dxy = (d.get(x + 1, y + 1) - d.get(x - 1, y + 1) - d.get(x + 1, y - 1)
        + d.get(x - 1, y - 1))
        / 4.0;
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr * edge_ratio < (edge_ratio + 1.0).powi(2) * det
}

/// One Newton step of the 3-D quadratic fit; `None` when the step leaves the sample cell.
fn refine_offset(dogs: &[DiffImage], level: usize, x: usize, y: usize) -> Option<[f64; 3]> {
    let at = |l: usize, dx: isize, dy: isize| {
        dogs[l].get((x as isize + dx) as usize, (y as isize + dy) as usize)
    };
    let c = at(level, 0, 0);
    let g = [
        (at(level, 1, 0) - at(level, -1, 0)) / 2.0,
        (at(level, 0, 1) - at(level, 0, -1)) / 2.0,
        (at(level + 1, 0, 0) - at(level - 1, 0, 0)) / 2.0,
    ];
    let hxx = at(level, 1, 0) + at(level, -1, 0) - 2.0 * c;
    let hyy = at(level, 0, 1) + at(level, 0, -1) - 2.0 * c;
    let hss = at(level + 1, 0, 0) + at(level - 1, 0, 0) - 2.0 * c;
    let hxy = (at(level, 1, 1) - at(level, -1, 1) - at(level, 1, -1) + at(level, -1, -1)) / 4.0;
    let hxs = (at(level + 1, 1, 0) - at(level + 1, -1, 0) - at(level - 1, 1, 0)
        + at(level - 1, -1, 0))
        / 4.0;
    let hys = (at(level + 1, 0, 1) - at(level + 1, 0, -1) - at(level - 1, 0, 1)
        + at(level - 1, 0, -1))
        / 4.0;
    let h = [[hxx, hxy, hxs], [hxy, hyy, hys], [hxs, hys, hss]];
    let det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
        - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    // Cramer's rule for H * off = -g
    let solve_col = |col: usize| {
        let mut m = h;
        for r in 0..3 {
            m[r][col] = -g[r];
        }
        (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
            / det
    };
    let off = [solve_col(0), solve_col(1), solve_col(2)];
    if off.iter().all(|o| o.abs() <= 0.5) {
        Some(off)
    } else {
        None
    }
}

pub fn detect_extrema(ss: &ScaleSpace, cfg: &SiftConfig) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (o, oct) in ss.octaves.iter().enumerate() {
        let (w, h) = (oct.width(), oct.height());
        if w < 3 || h < 3 {
            continue;
        }
        for level in 1..oct.dogs.len() - 1 {
            let d = &oct.dogs[level];
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = d.get(x, y);
                    if v.abs() < cfg.contrast_threshold {
                        continue;
                    }
                    if !is_strict_extremum(&oct.dogs, level, x, y) {
                        continue;
                    }
                    if !passes_edge_test(d, x, y, cfg.edge_ratio) {
                        continue;
                    }
                    let offset = if cfg.refine {
                        refine_offset(&oct.dogs, level, x, y).unwrap_or([0.0; 3])
                    } else {
                        [0.0; 3]
                    };
                    out.push(Candidate {
                        octave: o,
                        level,
                        x,
                        y,
                        offset,
                        value: v,
                    });
                }
            }
        }
    }
    out
}

/// Gradient magnitude and full-quadrant orientation from central differences
/// `Δx = L(x+1,y) - L(x-1,y)`, `Δy = L(x,y+1) - L(x,y-1)`.
pub fn gradient_at(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (xi, yi) = (x as isize, y as isize);
    let dx = img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi);
    let dy = img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1);
    ((dx * dx + dy * dy).sqrt(), dy.atan2(dx))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// A candidate with one of its dominant orientations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedCandidate {
    pub candidate: Candidate,
    /// Position in input-image pixels.
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub theta: f64,
}

/// 36-bin gradient orientation histogram around `(x, y)` of `img`, Gaussian
/// weighted with `1.5 * sigma`. Bin `b` is centred on angle `b * 2π/36`.
pub fn orientation_histogram(
    img: &GrayImage,
    x: f64,
    y: f64,
    sigma: f64,
) -> [f64; ORIENTATION_BINS] {
    let mut hist = [0.0; ORIENTATION_BINS];
    let win = ORIENTATION_WINDOW_FACTOR * sigma;
    let radius = (3.0 * win).round() as isize;
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let denom = 2.0 * win * win;
    for dy in -radius..=radius {
        let py = cy + dy;
        if py <= 0 || py >= img.height() as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let px = cx + dx;
            if px <= 0 || px >= img.width() as isize - 1 {
                continue;
            }
            let (rx, ry) = (px as f64 - x, py as f64 - y);
            let r2 = rx * rx + ry * ry;
            if r2 > (radius * radius) as f64 {
                continue;
            }
            let (m, theta) = gradient_at(img, px as usize, py as usize);
            if m == 0.0 {
                continue;
            }
            let weight = (-r2 / denom).exp();
            let bin = (theta.rem_euclid(2.0 * PI) / ORIENTATION_BIN_WIDTH).round() as usize
                % ORIENTATION_BINS;
            hist[bin] += weight * m;
        }
    }
    hist
}

/// Orientations of every histogram peak within 80% of the maximum, refined by a parabola
/// through the peak bin and its two neighbours.
pub fn dominant_orientations(hist: &[f64; ORIENTATION_BINS]) -> Vec<f64> {
    let max = hist.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let n = ORIENTATION_BINS;
    let mut out = Vec::new();
    for b in 0..n {
        let c = hist[b];
        let l = hist[(b + n - 1) % n];
        let r = hist[(b + 1) % n];
        if c > l && c >= r && c >= ORIENTATION_PEAK_RATIO * max {
            let denom = l - 2.0 * c + r;
            let offset = if denom.abs() > 1e-300 {
                (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            out.push(wrap_angle((b as f64 + offset) * ORIENTATION_BIN_WIDTH));
        }
    }
    out
}

pub fn assign_orientations(ss: &ScaleSpace, candidates: &[Candidate]) -> Vec<OrientedCandidate> {
    let mut out = Vec::new();
    for c in candidates {
        let oct = &ss.octaves[c.octave];
        let level_f = c.level as f64 + c.offset[2];
        let gi = (level_f.round() as usize).min(oct.gaussians.len() - 1);
        let sigma_oct = ss.level_sigmas[0] * 2f64.powf(level_f / ss.intervals as f64);
        let (ox, oy) = c.octave_xy();
        let hist = orientation_histogram(&oct.gaussians[gi], ox, oy, sigma_oct);
        for theta in dominant_orientations(&hist) {
            out.push(OrientedCandidate {
                candidate: *c,
                x: ox * oct.scale,
                y: oy * oct.scale,
                sigma: sigma_oct * oct.scale,
                theta,
            });
        }
    }
    out
}

struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GradientField {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (xi, yi) = (x as isize, y as isize);
                gx[y * w + x] = img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi);
                gy[y * w + x] = img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1);
            }
        }
        GradientField {
            width: w,
            height: h,
            gx,
            gy,
        }
    }

    /// Bilinearly interpolated gradient; the caller guarantees `(x, y)` lies in the image.
    fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let lerp = |v: &[f64]| {
            let a = v[y0 * self.width + x0] * (1.0 - fx) + v[y0 * self.width + x1] * fx;
            let b = v[y1 * self.width + x0] * (1.0 - fx) + v[y1 * self.width + x1] * fx;
            a * (1.0 - fy) + b * fy
        };
        (lerp(&self.gx), lerp(&self.gy))
    }
}

/// Descriptor of one oriented keypoint; `None` when its sampling window leaves the image
/// or the window carries no gradient.
fn describe(
    field: &GradientField,
    ox: f64,
    oy: f64,
    sigma_oct: f64,
    theta: f64,
) -> Option<Descriptor> {
    let spacing = DESCRIPTOR_SPACING * sigma_oct;
    let (sin, cos) = theta.sin_cos();
    let half = DESCRIPTOR_SAMPLES as f64 / 2.0;
    let to_image = |u: f64, v: f64| {
        (
            ox + (u * cos - v * sin) * spacing,
            oy + (u * sin + v * cos) * spacing,
        )
    };
    let max_x = (field.width - 1) as f64;
    let max_y = (field.height - 1) as f64;
    for (u, v) in [(-half, -half), (half, -half), (-half, half), (half, half)] {
        let (px, py) = to_image(u, v);
        if px < 0.0 || py < 0.0 || px > max_x || py > max_y {
            return None;
        }
    }

    let cells = DESCRIPTOR_CELLS;
    let obins = DESCRIPTOR_ORI_BINS;
    let mut hist = [0.0f64; DESCRIPTOR_LEN];
    let samples_per_cell = (DESCRIPTOR_SAMPLES / cells) as f64;
    for j in 0..DESCRIPTOR_SAMPLES {
        for i in 0..DESCRIPTOR_SAMPLES {
            let u = i as f64 + 0.5 - half;
            let v = j as f64 + 0.5 - half;
            let (px, py) = to_image(u, v);
            let (gx, gy) = field.sample(px, py);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(u * u + v * v) / (2.0 * DESCRIPTOR_WEIGHT_SIGMA.powi(2))).exp();
            let angle = (gy.atan2(gx) - theta).rem_euclid(2.0 * PI);
            let ob = angle / (2.0 * PI) * obins as f64;
            let cx = (i as f64 + 0.5) / samples_per_cell - 0.5;
            let cy = (j as f64 + 0.5) / samples_per_cell - 0.5;
            let (x0, y0, o0) = (cx.floor(), cy.floor(), ob.floor());
            let (fx, fy, fo) = (cx - x0, cy - y0, ob - o0);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let yy = y0 as isize + dy;
                if yy < 0 || yy >= cells as isize {
                    continue;
                }
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let xx = x0 as isize + dx;
                    if xx < 0 || xx >= cells as isize {
                        continue;
                    }
                    for (dob, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let oo = (o0 as usize + dob) % obins;
                        let idx = (yy as usize * cells + xx as usize) * obins + oo;
                        hist[idx] += weight * mag * wx * wy * wo;
                    }
                }
            }
        }
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        return None;
    }
    let mut out = [0f32; DESCRIPTOR_LEN];
    for (o, h) in out.iter_mut().zip(&hist) {
        *o = ((h / norm) as f32).min(DESCRIPTOR_CLAMP);
    }
    let norm2 = out.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    for o in out.iter_mut() {
        *o = (*o as f64 / norm2) as f32;
    }
    Some(Descriptor(out))
}

pub fn compute_descriptors(ss: &ScaleSpace, oriented: &[OrientedCandidate]) -> Vec<Keypoint> {
    // gradient fields are built lazily, once per (octave, level)
    let mut fields: Vec<Vec<Option<GradientField>>> = ss
        .octaves
        .iter()
        .map(|o| (0..o.gaussians.len()).map(|_| None).collect())
        .collect();
    let mut out = Vec::with_capacity(oriented.len());
    for oc in oriented {
        let c = &oc.candidate;
        let oct = &ss.octaves[c.octave];
        let level_f = c.level as f64 + c.offset[2];
        let gi = (level_f.round() as usize).min(oct.gaussians.len() - 1);
        let field =
            fields[c.octave][gi].get_or_insert_with(|| GradientField::new(&oct.gaussians[gi]));
        let (ox, oy) = c.octave_xy();
        let sigma_oct = oc.sigma / oct.scale;
        if let Some(descriptor) = describe(field, ox, oy, sigma_oct, oc.theta) {
            out.push(Keypoint {
                x: oc.x,
                y: oc.y,
                sigma: oc.sigma,
                theta: oc.theta,
                descriptor,
            });
        }
    }
    out
}

pub fn extract_keypoints(img: &GrayImage, cfg: &SiftConfig) -> Result<Vec<Keypoint>, SiftError> {
    let ss = build_scale_space(img, cfg)?;
    let candidates = detect_extrema(&ss, cfg);
    let oriented = assign_orientations(&ss, &candidates);
    Ok(compute_descriptors(&ss, &oriented))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(w: usize, h: usize, cx: f64, cy: f64, s: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            0.1 + 0.8 * (-r2 / (2.0 * s * s)).exp()
        })
    }

    /// Exhaustive scan for strict 26-neighbour extrema, independent of `detect_extrema`.
    fn brute_extrema(ss: &ScaleSpace, threshold: f64) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        for (o, oct) in ss.octaves.iter().enumerate() {
            let (w, h) = (oct.width(), oct.height());
            for l in 1..oct.dogs.len() - 1 {
                for y in 1..h - 1 {
                    for x in 1..w - 1 {
                        let v = oct.dogs[l].get(x, y);
                        if v.abs() < threshold {
                            continue;
                        }
                        let mut neigh = Vec::with_capacity(26);
                        for ll in l - 1..=l + 1 {
                            for yy in y - 1..=y + 1 {
                                for xx in x - 1..=x + 1 {
                                    if (ll, yy, xx) != (l, y, x) {
                                        neigh.push(oct.dogs[ll].get(xx, yy));
                                    }
                                }
                            }
                        }
                        if neigh.iter().all(|&n| v > n) || neigh.iter().all(|&n| v < n) {
                            out.push((o, l, x, y));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn scale_space_shape() {
        let img = blob(64, 64, 32.0, 32.0, 4.0);
        let ss = build_scale_space(&img, &SiftConfig::default()).unwrap();
        assert!(!ss.octaves.is_empty());
        for oct in &ss.octaves {
            assert_eq!(oct.gaussians.len(), 6);
            assert_eq!(oct.dogs.len(), 5);
            for i in 0..5 {
                let d = subtract(&oct.gaussians[i + 1], &oct.gaussians[i]).unwrap();
                assert_eq!(d, oct.dogs[i]);
            }
        }
        // 64 -> 32 -> 16; the next would be 8 < 16
        assert_eq!(ss.octaves.len(), 3);
        assert!((SiftConfig::default().k() - 1.2599).abs() < 1e-4);
    }

    #[test]
    fn octave_count_can_be_fixed() {
        let img = blob(64, 64, 32.0, 32.0, 4.0);
        let cfg = SiftConfig {
            num_octaves: Some(1),
            ..SiftConfig::default()
        };
        assert_eq!(build_scale_space(&img, &cfg).unwrap().octaves.len(), 1);
    }

    #[test]
    fn constant_image_has_flat_dog_and_no_keypoints() {
        let img = GrayImage::filled(48, 40, 0.6);
        let cfg = SiftConfig::default();
        let ss = build_scale_space(&img, &cfg).unwrap();
        for oct in &ss.octaves {
            for d in &oct.dogs {
                assert!(d.data().iter().all(|v| v.abs() < 1e-9));
            }
        }
        assert!(detect_extrema(&ss, &cfg).is_empty());
        assert!(extract_keypoints(&img, &cfg).unwrap().is_empty());
    }

    #[test]
    fn rejects_small_images_and_bad_config() {
        assert!(matches!(
            build_scale_space(&GrayImage::filled(15, 40, 0.0), &SiftConfig::default()),
            Err(SiftError::ImageTooSmall { .. })
        ));
        let bad = SiftConfig {
            intervals: 0,
            ..SiftConfig::default()
        };
        assert!(build_scale_space(&GrayImage::filled(32, 32, 0.0), &bad).is_err());
    }

    #[test]
    fn blob_center_is_detected() {
        let img = blob(64, 64, 30.0, 33.0, 3.0);
        let cfg = SiftConfig::default();
        let ss = build_scale_space(&img, &cfg).unwrap();
        let found = detect_extrema(&ss, &cfg);
        let oracle = brute_extrema(&ss, cfg.contrast_threshold);
        assert!(oracle.iter().any(|&(o, _, x, y)| {
            let s = ss.octaves[o].scale;
            ((x as f64 * s - 30.0).powi(2) + (y as f64 * s - 33.0).powi(2)).sqrt() <= 2.0
        }));
        assert!(found.iter().any(|c| {
            let s = ss.octaves[c.octave].scale;
            ((c.x as f64 * s - 30.0).powi(2) + (c.y as f64 * s - 33.0).powi(2)).sqrt() <= 2.0
        }));
        // every detection is a strict extremum the oracle also sees
        for c in &found {
            assert!(oracle.contains(&(c.octave, c.level, c.x, c.y)));
        }
    }

    #[test]
    fn extrema_shift_with_the_image() {
        let img = GrayImage::from_fn(96, 64, |x, y| {
            let b = |cx: f64, cy: f64, s: f64| {
                (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp()
            };
            0.1 + 0.5 * b(30.0, 30.0, 2.5) + 0.3 * b(44.0, 36.0, 1.8) + 0.4 * b(38.0, 22.0, 3.0)
        });
        let shifted =
            GrayImage::from_fn(96, 64, |x, y| img.get_clamped(x as isize - 8, y as isize));
        let cfg = SiftConfig {
            num_octaves: Some(1),
            ..SiftConfig::default()
        };
        let a = brute_extrema(
            &build_scale_space(&img, &cfg).unwrap(),
            cfg.contrast_threshold,
        );
        let b = brute_extrema(
            &build_scale_space(&shifted, &cfg).unwrap(),
            cfg.contrast_threshold,
        );
        let interior =
            |x: usize, y: usize| (16..96 - 16).contains(&x) && (16..64 - 16).contains(&y);
        let mut a: Vec<_> = a
            .into_iter()
            .filter(|&(_, _, x, y)| interior(x + 8, y))
            .map(|(o, l, x, y)| (o, l, x + 8, y))
            .collect();
        let mut b: Vec<_> = b
            .into_iter()
            .filter(|&(_, _, x, y)| interior(x, y) && x >= 24)
            .collect();
        a.sort_unstable();
        b.sort_unstable();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn ramp_gradients() {
        let c = 0.01;
        let ramp_x = GrayImage::from_fn(8, 8, |x, _| c * x as f64);
        let (m, t) = gradient_at(&ramp_x, 4, 4);
        assert!((m - 2.0 * c).abs() < 1e-12);
        assert!(t.abs() < 1e-12);
        let ramp_y = GrayImage::from_fn(8, 8, |_, y| c * y as f64);
        let (_, t) = gradient_at(&ramp_y, 4, 4);
        assert!((t - PI / 2.0).abs() < 1e-12);
        let ramp_neg = GrayImage::from_fn(8, 8, |x, _| 0.5 - c * x as f64);
        let (_, t) = gradient_at(&ramp_neg, 4, 4);
        assert!((t - PI).abs() < 1e-12);
    }

    #[test]
    fn diagonal_ramp_histogram_peak() {
        let ramp = GrayImage::from_fn(40, 40, |x, y| 0.01 * (x + y) as f64);
        let hist = orientation_histogram(&ramp, 20.0, 20.0, 2.0);
        let peaks = dominant_orientations(&hist);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0] - PI / 4.0).abs() <= ORIENTATION_BIN_WIDTH);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn descriptors_are_unit_length() {
        let img = GrayImage::from_fn(80, 80, |x, y| {
            let v = ((x as f64 * 0.31).sin() * (y as f64 * 0.17).cos() + 1.0) / 2.0;
            0.1 + 0.8 * v
        });
        let kps = extract_keypoints(&img, &SiftConfig::default()).unwrap();
        assert!(!kps.is_empty());
        for kp in &kps {
            assert_eq!(kp.descriptor.as_slice().len(), DESCRIPTOR_LEN);
            assert!((kp.descriptor.norm() - 1.0).abs() < 1e-6);
            assert!(kp.descriptor.as_slice().iter().all(|&v| v >= 0.0));
            assert!(kp.theta > -PI && kp.theta <= PI);
            assert!(kp.x >= 0.0 && kp.x < 80.0 && kp.y >= 0.0 && kp.y < 80.0);
        }
    }

    #[test]
    fn refinement_keeps_points_inside() {
        let img = GrayImage::from_fn(80, 80, |x, y| {
            let v = ((x as f64 * 0.29).sin() * (y as f64 * 0.21).cos() + 1.0) / 2.0;
            0.1 + 0.8 * v
        });
        let cfg = SiftConfig {
            refine: true,
            ..SiftConfig::default()
        };
        let kps = extract_keypoints(&img, &cfg).unwrap();
        assert!(!kps.is_empty());
        assert!(kps
            .iter()
            .all(|k| k.x >= 0.0 && k.x < 80.0 && k.y >= 0.0 && k.y < 80.0));
    }
}
