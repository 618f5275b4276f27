//! Synthetic plates: a stroke font for `0-9A-Z`, digit templates, OCR training
//! glyphs and full 640×240 vehicle-like scenes with noise, scale jitter and
//! screw holes. Rendering is deterministic for a given seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::{GrayImage, Rect};

/// Glyph design box is `GLYPH_UNITS_W × GLYPH_UNITS_H` units; strokes are centred on its lines.
pub const GLYPH_UNITS_W: f64 = 4.0;
pub const GLYPH_UNITS_H: f64 = 6.0;
/// Stroke width in glyph units.
pub const STROKE_UNITS: f64 = 0.9;
/// Nominal glyph height in pixels, stroke extent included.
pub const NOMINAL_CHAR_HEIGHT: f64 = 48.0;
pub const TEMPLATE_MARGIN: usize = 16;
pub const SCENE_WIDTH: usize = 640;
pub const SCENE_HEIGHT: usize = 240;

type Pt = (f64, f64);

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Vec<Pt> {
    let steps = ((to_deg - from_deg).abs() / 10.0).ceil().max(2.0) as usize;
    (0..=steps)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64) * PI / 180.0;
            (cx + rx * a.cos(), cy - ry * a.sin())
        })
        .collect()
}

fn line(pts: &[Pt]) -> Vec<Pt> {
    pts.to_vec()
}

fn chain(parts: &[Vec<Pt>]) -> Vec<Pt> {
    parts.iter().flatten().copied().collect()
}

fn rounded_rect(x0: f64, y0: f64, x1: f64, y1: f64, r: f64) -> Vec<Pt> {
    chain(&[
        arc(x1 - r, y0 + r, r, r, 90.0, 0.0),
        arc(x1 - r, y1 - r, r, r, 0.0, -90.0),
        arc(x0 + r, y1 - r, r, r, -90.0, -180.0),
        arc(x0 + r, y0 + r, r, r, 180.0, 90.0),
        vec![(x1 - r, y0)],
    ])
}

/// Polylines making up a glyph, in design units with y pointing down.
pub fn glyph_strokes(ch: char) -> Option<Vec<Vec<Pt>>> {
    let s = match ch {
        '0' => vec![arc(2.0, 3.0, 2.0, 3.0, 0.0, 360.0)],
        '1' => vec![
            line(&[(0.9, 1.3), (2.2, 0.0), (2.2, 6.0)]),
            line(&[(0.8, 6.0), (3.4, 6.0)]),
        ],
        '2' => vec![chain(&[
            arc(2.0, 1.9, 2.0, 1.9, 160.0, -25.0),
            line(&[(0.0, 6.0), (4.0, 6.0)]),
        ])],
        '3' => vec![chain(&[
            arc(2.0, 1.5, 1.9, 1.5, 150.0, -90.0),
            arc(2.0, 4.5, 2.0, 1.5, 90.0, -150.0),
        ])],
        '4' => vec![line(&[(3.0, 6.0), (3.0, 0.0), (0.0, 4.2), (4.0, 4.2)])],
        '5' => vec![chain(&[
            line(&[(4.0, 0.0), (0.4, 0.0), (0.2, 2.9)]),
            arc(2.0, 4.2, 2.0, 1.8, 130.0, -140.0),
        ])],
        '6' => vec![
            arc(2.0, 3.0, 2.0, 3.0, 50.0, 190.0),
            arc(2.0, 4.2, 2.0, 1.8, 0.0, 360.0),
        ],
        '7' => vec![line(&[(0.0, 0.0), (4.0, 0.0), (1.4, 6.0)])],
        '8' => vec![
            arc(2.0, 1.5, 1.7, 1.5, 0.0, 360.0),
            arc(2.0, 4.4, 2.0, 1.6, 0.0, 360.0),
        ],
        '9' => vec![
            arc(2.0, 1.8, 2.0, 1.8, 0.0, 360.0),
            arc(2.0, 3.0, 2.0, 3.0, -130.0, 10.0),
        ],
        'A' => vec![
            line(&[(0.0, 6.0), (2.0, 0.0), (4.0, 6.0)]),
            line(&[(0.7, 4.0), (3.3, 4.0)]),
        ],
        'B' => vec![chain(&[
            line(&[(0.0, 3.0), (0.0, 0.0), (2.7, 0.0)]),
            arc(2.7, 1.5, 1.2, 1.5, 90.0, -90.0),
            line(&[(0.0, 3.0), (2.9, 3.0)]),
            arc(2.9, 4.5, 1.1, 1.5, 90.0, -90.0),
            line(&[(0.0, 6.0), (0.0, 3.0)]),
        ])],
        'C' => vec![arc(2.0, 3.0, 2.0, 3.0, 45.0, 315.0)],
        'D' => vec![chain(&[
            line(&[(1.8, 0.0), (0.0, 0.0), (0.0, 6.0), (1.8, 6.0)]),
            arc(1.8, 3.0, 2.2, 3.0, -90.0, 90.0),
        ])],
        'E' => vec![
            line(&[(4.0, 0.0), (0.0, 0.0), (0.0, 6.0), (4.0, 6.0)]),
            line(&[(0.0, 3.0), (3.0, 3.0)]),
        ],
        'F' => vec![
            line(&[(4.0, 0.0), (0.0, 0.0), (0.0, 6.0)]),
            line(&[(0.0, 3.0), (3.0, 3.0)]),
        ],
        'G' => vec![chain(&[
            arc(2.0, 3.0, 2.0, 3.0, 45.0, 360.0),
            line(&[(2.2, 3.0)]),
        ])],
        'H' => vec![
            line(&[(0.0, 0.0), (0.0, 6.0)]),
            line(&[(4.0, 0.0), (4.0, 6.0)]),
            line(&[(0.0, 3.0), (4.0, 3.0)]),
        ],
        'I' => vec![
            line(&[(2.0, 0.0), (2.0, 6.0)]),
            line(&[(0.6, 0.0), (3.4, 0.0)]),
            line(&[(0.6, 6.0), (3.4, 6.0)]),
        ],
        'J' => vec![chain(&[
            line(&[(1.6, 0.0), (4.0, 0.0), (4.0, 4.2)]),
            arc(2.0, 4.2, 2.0, 1.8, 0.0, -180.0),
        ])],
        'K' => vec![
            line(&[(0.0, 0.0), (0.0, 6.0)]),
            line(&[(4.0, 0.0), (0.0, 3.6)]),
            line(&[(1.3, 2.5), (4.0, 6.0)]),
        ],
        'L' => vec![line(&[(0.0, 0.0), (0.0, 6.0), (4.0, 6.0)])],
        'M' => vec![line(&[
            (0.0, 6.0),
            (0.0, 0.0),
            (2.0, 3.6),
            (4.0, 0.0),
            (4.0, 6.0),
        ])],
        'N' => vec![line(&[(0.0, 6.0), (0.0, 0.0), (4.0, 6.0), (4.0, 0.0)])],
        'O' => vec![rounded_rect(0.0, 0.0, 4.0, 6.0, 1.3)],
        'P' => vec![chain(&[
            line(&[(0.0, 6.0), (0.0, 0.0), (2.5, 0.0)]),
            arc(2.5, 1.6, 1.5, 1.6, 90.0, -90.0),
            line(&[(0.0, 3.2)]),
        ])],
        'Q' => vec![
            rounded_rect(0.0, 0.0, 4.0, 6.0, 1.3),
            line(&[(2.4, 4.2), (4.0, 6.2)]),
        ],
        'R' => vec![
            chain(&[
                line(&[(0.0, 6.0), (0.0, 0.0), (2.5, 0.0)]),
                arc(2.5, 1.6, 1.5, 1.6, 90.0, -90.0),
                line(&[(0.0, 3.2)]),
            ]),
            line(&[(2.0, 3.2), (4.0, 6.0)]),
        ],
        'S' => vec![chain(&[
            arc(2.0, 1.5, 2.0, 1.5, 20.0, 270.0),
            arc(2.0, 4.5, 2.0, 1.5, 90.0, -160.0),
        ])],
        'T' => vec![
            line(&[(0.0, 0.0), (4.0, 0.0)]),
            line(&[(2.0, 0.0), (2.0, 6.0)]),
        ],
        'U' => vec![chain(&[
            line(&[(0.0, 0.0), (0.0, 4.0)]),
            arc(2.0, 4.0, 2.0, 2.0, 180.0, 360.0),
            line(&[(4.0, 0.0)]),
        ])],
        'V' => vec![line(&[(0.0, 0.0), (2.0, 6.0), (4.0, 0.0)])],
        'W' => vec![line(&[
            (0.0, 0.0),
            (0.9, 6.0),
            (2.0, 2.4),
            (3.1, 6.0),
            (4.0, 0.0),
        ])],
        'X' => vec![
            line(&[(0.0, 0.0), (4.0, 6.0)]),
            line(&[(4.0, 0.0), (0.0, 6.0)]),
        ],
        'Y' => vec![
            line(&[(0.0, 0.0), (2.0, 3.0), (4.0, 0.0)]),
            line(&[(2.0, 3.0), (2.0, 6.0)]),
        ],
        'Z' => vec![line(&[(0.0, 0.0), (4.0, 0.0), (0.0, 6.0), (4.0, 6.0)])],
        _ => return None,
    };
    Some(s)
}

fn segment_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// A glyph placed in pixel space: `origin` is the top-left of the stroke extent.
#[derive(Debug, Clone)]
pub struct PlacedGlyph {
    segments: Vec<(Pt, Pt)>,
    /// Pixels per design unit.
    pub unit: f64,
    pub origin: Pt,
}

impl PlacedGlyph {
    /// Places `ch` so that its full height (stroke included) is `height` pixels.
    pub fn new(ch: char, height: f64, origin: Pt) -> Option<Self> {
        let strokes = glyph_strokes(ch)?;
        let unit = height / (GLYPH_UNITS_H + STROKE_UNITS);
        let pad = STROKE_UNITS / 2.0;
        let segments = strokes
            .iter()
            .flat_map(|s| s.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>())
            .map(|(a, b)| {
                let f = |p: Pt| (origin.0 + (p.0 + pad) * unit, origin.1 + (p.1 + pad) * unit);
                (f(a), f(b))
            })
            .collect();
        Some(PlacedGlyph {
            segments,
            unit,
            origin,
        })
    }

    pub fn width(&self) -> f64 {
        glyph_width_units() * self.unit
    }

    pub fn height(&self) -> f64 {
        (GLYPH_UNITS_H + STROKE_UNITS) * self.unit
    }

    /// Ink coverage in `[0, 1]` of the pixel centred at `(x, y)`.
    pub fn coverage(&self, x: f64, y: f64) -> f64 {
        let r = STROKE_UNITS / 2.0 * self.unit;
        let d = self
            .segments
            .iter()
            .map(|&(a, b)| segment_distance((x, y), a, b))
            .fold(f64::INFINITY, f64::min);
        (r - d + 0.5).clamp(0.0, 1.0)
    }

    /// Pixel bounds of the glyph, padded by one pixel.
    pub fn pixel_bounds(&self) -> (isize, isize, isize, isize) {
        (
            self.origin.0.floor() as isize - 1,
            self.origin.1.floor() as isize - 1,
            (self.origin.0 + self.width()).ceil() as isize + 1,
            (self.origin.1 + self.height()).ceil() as isize + 1,
        )
    }

    /// Blends the glyph into `img` with intensity `ink`.
    pub fn draw(&self, img: &mut GrayImage, ink: f64) {
        let (x0, y0, x1, y1) = self.pixel_bounds();
        for y in y0.max(0)..y1.min(img.height() as isize) {
            for x in x0.max(0)..x1.min(img.width() as isize) {
                let c = self.coverage(x as f64, y as f64);
                if c > 0.0 {
                    let (xu, yu) = (x as usize, y as usize);
                    let v = img.get(xu, yu);
                    img.set(xu, yu, v * (1.0 - c) + ink * c);
                }
            }
        }
    }
}

/// Glyph width in design units, stroke included.
pub fn glyph_width_units() -> f64 {
    GLYPH_UNITS_W + STROKE_UNITS
}

/// Dark glyph on a light field with a fixed margin; the digit templates and
/// clean OCR samples are rendered this way.
pub fn render_glyph(
    ch: char,
    height: f64,
    margin: usize,
    ink: f64,
    paper: f64,
) -> Option<GrayImage> {
    let unit = height / (GLYPH_UNITS_H + STROKE_UNITS);
    let w = (glyph_width_units() * unit).ceil() as usize + 2 * margin;
    let h = height.ceil() as usize + 2 * margin;
    let mut img = GrayImage::filled(w, h, paper);
    PlacedGlyph::new(ch, height, (margin as f64, margin as f64))?.draw(&mut img, ink);
    Some(img)
}

/// Template image for a digit at the nominal plate character height.
pub fn render_template(digit: char) -> Option<GrayImage> {
    render_glyph(digit, NOMINAL_CHAR_HEIGHT, TEMPLATE_MARGIN, 0.1, 0.88)
}

/// A degraded rendering of one glyph for OCR training: scale jitter, sub-pixel
/// placement, contrast variation and Gaussian noise.
pub fn render_training_glyph(ch: char, rng: &mut impl Rng) -> Option<GrayImage> {
    let height = NOMINAL_CHAR_HEIGHT * rng.gen_range(0.9..1.1);
    let unit = height / (GLYPH_UNITS_H + STROKE_UNITS);
    let margin = 6.0;
    let w = (glyph_width_units() * unit + 2.0 * margin).ceil() as usize + 1;
    let h = (height + 2.0 * margin).ceil() as usize + 1;
    let paper = rng.gen_range(0.8..0.92);
    let ink = rng.gen_range(0.05..0.2);
    let mut img = GrayImage::filled(w, h, paper);
    let origin = (
        margin + rng.gen_range(0.0..1.0),
        margin + rng.gen_range(0.0..1.0),
    );
    PlacedGlyph::new(ch, height, origin)?.draw(&mut img, ink);
    add_gaussian_noise(&mut img, 0.02, rng);
    Some(img)
}

pub fn add_gaussian_noise(img: &mut GrayImage, sigma: f64, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for y in 0..img.height() {
        for x in 0..img.width() {
            let v = img.get(x, y) + normal.sample(rng);
            img.set(x, y, v);
        }
    }
}

/// Rendering parameters of one synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub text: String,
    pub char_height: f64,
    /// Centre of the character row.
    pub center: Pt,
    pub noise_sigma: f64,
    pub screw_holes: bool,
    pub ink: f64,
    pub paper: f64,
    pub seed: u64,
}

/// A rendered scene and where each character ended up.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image: GrayImage,
    pub text: String,
    pub char_boxes: Vec<Rect>,
    pub screw_holes: Vec<Rect>,
}

/// Random plate text in the `LLL-NNNN` layout (returned without the dash).
pub fn random_plate_text(rng: &mut impl Rng) -> String {
    let letters = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    let mut s = String::with_capacity(7);
    for _ in 0..3 {
        s.push(letters[rng.gen_range(0..26)] as char);
    }
    for _ in 0..4 {
        s.push(char::from_digit(rng.gen_range(0..10), 10).unwrap());
    }
    s
}

impl SceneParams {
    /// Scene parameters drawn with ±10% scale jitter around the nominal character height.
    pub fn random(text: &str, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneParams {
            text: text.to_string(),
            char_height: NOMINAL_CHAR_HEIGHT * rng.gen_range(0.9..1.1),
            center: (
                SCENE_WIDTH as f64 / 2.0 + rng.gen_range(-50.0..50.0),
                SCENE_HEIGHT as f64 / 2.0 + rng.gen_range(-25.0..25.0),
            ),
            noise_sigma: 0.02,
            screw_holes: true,
            ink: rng.gen_range(0.06..0.16),
            paper: rng.gen_range(0.82..0.92),
            seed,
        }
    }
}

fn fill_disc(img: &mut GrayImage, cx: f64, cy: f64, r: f64, value: f64) -> Rect {
    let (x0, y0) = (
        (cx - r - 1.0).floor().max(0.0),
        (cy - r - 1.0).floor().max(0.0),
    );
    let x1 = (cx + r + 1.0).ceil().min(img.width() as f64 - 1.0);
    let y1 = (cy + r + 1.0).ceil().min(img.height() as f64 - 1.0);
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            let c = (r - d + 0.5).clamp(0.0, 1.0);
            if c > 0.0 {
                let v = img.get(x, y);
                img.set(x, y, v * (1.0 - c) + value * c);
            }
        }
    }
    Rect::new(
        (cx - r).floor() as usize,
        (cy - r).floor() as usize,
        (2.0 * r).ceil() as usize,
        (2.0 * r).ceil() as usize,
    )
}

/// Renders a vehicle-like scene: textured background, a light plate with a dark
/// border, the characters (a dash after the third), optional screw holes and noise.
pub fn render_scene(p: &SceneParams) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed_5eed);
    let (w, h) = (SCENE_WIDTH, SCENE_HEIGHT);

    // background: low-frequency shading plus a few horizontal bars (grille-like)
    let phases: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.005..0.03),
                rng.gen_range(0.005..0.03),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let base = rng.gen_range(0.3..0.5);
    let mut img = GrayImage::from_fn(w, h, |x, y| {
        let s: f64 = phases
            .iter()
            .map(|&(fx, fy, ph)| (fx * x as f64 + fy * y as f64 + ph).sin())
            .sum();
        base + 0.04 * s
    });
    for _ in 0..rng.gen_range(2..5) {
        let y = rng.gen_range(0..h - 8);
        let thick = rng.gen_range(2..6);
        let v = rng.gen_range(0.15..0.65);
        for yy in y..(y + thick).min(h) {
            for x in 0..w {
                img.set(x, yy, v);
            }
        }
    }

    let n = p.text.chars().count();
    let glyph_w = glyph_width_units() * p.char_height / (GLYPH_UNITS_H + STROKE_UNITS);
    let gap = 0.18 * p.char_height;
    let dash_gap = 0.55 * p.char_height;
    let dash_after = if n == 7 { Some(3) } else { None };
    let total = n as f64 * glyph_w
        + (n.saturating_sub(1)) as f64 * gap
        + dash_after.map_or(0.0, |_| dash_gap - gap);
    let left = p.center.0 - total / 2.0;
    let top = p.center.1 - p.char_height / 2.0;

    // plate body
    let margin_x = 0.9 * p.char_height;
    let margin_y = 0.55 * p.char_height;
    let (px0, py0) = ((left - margin_x).max(1.0), (top - margin_y).max(1.0));
    let px1 = (left + total + margin_x).min(w as f64 - 2.0);
    let py1 = (top + p.char_height + margin_y).min(h as f64 - 2.0);
    for y in py0 as usize..=py1 as usize {
        for x in px0 as usize..=px1 as usize {
            let border = x <= px0 as usize + 2
                || x + 2 >= px1 as usize
                || y <= py0 as usize + 2
                || y + 2 >= py1 as usize;
            img.set(x, y, if border { p.ink + 0.1 } else { p.paper });
        }
    }

    let mut char_boxes = Vec::with_capacity(n);
    let mut x = left;
    for (i, ch) in p.text.chars().enumerate() {
        if let Some(g) = PlacedGlyph::new(ch, p.char_height, (x, top)) {
            g.draw(&mut img, p.ink);
            char_boxes.push(Rect::new(
                x.round() as usize,
                top.round() as usize,
                g.width().round() as usize,
                g.height().round() as usize,
            ));
        }
        x += glyph_w + gap;
        if dash_after == Some(i + 1) {
            // short dash, well under the character-height gates
            let dx0 = x - gap + 0.12 * p.char_height;
            let dx1 = x - gap + dash_gap - 0.12 * p.char_height;
            let dy = p.center.1;
            let half = 0.05 * p.char_height;
            for yy in (dy - half).round() as usize..=(dy + half).round() as usize {
                for xx in dx0.round() as usize..=dx1.round() as usize {
                    img.set(xx, yy, p.ink);
                }
            }
            x += dash_gap - gap;
        }
    }

    let mut screw_holes = Vec::new();
    if p.screw_holes {
        let r = p.char_height / 4.0;
        for cx in [left - margin_x / 2.0, left + total + margin_x / 2.0] {
            screw_holes.push(fill_disc(&mut img, cx, p.center.1, r, p.ink + 0.05));
        }
    }

    add_gaussian_noise(&mut img, p.noise_sigma, &mut rng);
    Scene {
        image: img,
        text: p.text.clone(),
        char_boxes,
        screw_holes,
    }
}

/// `count` training renderings of `ch`, reproducible from `seed`.
pub fn training_glyphs(ch: char, count: usize, seed: u64) -> Option<Vec<GrayImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (ch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (0..count)
        .map(|_| render_training_glyph(ch, &mut rng))
        .collect()
}

/// The `index`-th scene of the corpus identified by `seed`: random `LLLNNNN` text,
/// random placement and ±10% scale jitter.
pub fn corpus_scene(seed: u64, index: usize) -> Scene {
    let scene_seed = seed
        .wrapping_mul(0x2545_f491_4f6c_dd1d)
        .wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
    let text = random_plate_text(&mut rng);
    render_scene(&SceneParams::random(&text, scene_seed))
}
