//! Plate localization from digit-template matches.
//!
//! Raw matches are reduced to inliers in two stages: pairs whose gradient
//! orientations disagree by more than 2π/36 are dropped, then the survivors are
//! mapped to offset space (image position minus template position) and only the
//! densest neighbourhood under a square-wave kernel is kept. A template needs at
//! least three inliers to seed the plate; otherwise the orientation-filtered
//! candidates of all templates are pooled and the densest region wins.

use std::f64::consts::PI;

use thiserror::Error;

use crate::image::Rect;
use crate::matchdb::{match_template, TemplateFeatureDB, DEFAULT_MAX_CHECKS, DEFAULT_TAU_MATCH};
use crate::sift::{wrap_angle, Keypoint};

/// Largest accepted orientation disagreement between template and image keypoints (10°).
pub const MAX_ORIENTATION_DIFF: f64 = 2.0 * PI / 36.0;
pub const MIN_INLIERS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum LocateError {
    #[error("plate not found: no template keypoint matched the image")]
    PlateNotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MatchPair {
    pub template_char: char,
    pub template_xy: (f64, f64),
    pub template_theta: f64,
    pub image_xy: (f64, f64),
    pub image_theta: f64,
}

impl MatchPair {
    pub fn offset(&self) -> (f64, f64) {
        (
            self.image_xy.0 - self.template_xy.0,
            self.image_xy.1 - self.template_xy.1,
        )
    }

    pub fn orientation_diff(&self) -> f64 {
        wrap_angle(self.template_theta - self.image_theta).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityConfig {
    /// Square-wave kernel radius in pixels.
    pub h: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { h: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocatorConfig {
    pub tau_match: f64,
    pub max_checks: usize,
    pub density: DensityConfig,
    /// Plate window size as multiples of the seed glyph's height.
    pub window_width: f64,
    pub window_height: f64,
}

impl Default for LocatorConfig {
    fn default() -> Self {
        LocatorConfig {
            tau_match: DEFAULT_TAU_MATCH,
            max_checks: DEFAULT_MAX_CHECKS,
            density: DensityConfig::default(),
            window_width: 14.0,
            window_height: 1.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateRegion {
    pub bbox: Rect,
    pub seed_char: char,
    /// Template glyph box shifted by `translation`, clipped to the image.
    pub seed_bbox: Rect,
    pub translation: (f64, f64),
    pub inliers: Vec<MatchPair>,
    /// Set when no single template reached three inliers.
    pub fallback: bool,
}

/// Keeps pairs whose circular orientation difference is at most 2π/36.
pub fn filter_by_orientation(pairs: &[MatchPair]) -> Vec<MatchPair> {
    pairs
        .iter()
        .filter(|p| p.orientation_diff() <= MAX_ORIENTATION_DIFF)
        .copied()
        .collect()
}

fn within(a: (f64, f64), b: (f64, f64), h: f64) -> bool {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    dx * dx + dy * dy <= h * h
}

/// Square-wave density of every offset point: the number of offsets (itself included)
/// within distance `h`.
pub fn offset_densities(pairs: &[MatchPair], h: f64) -> Vec<usize> {
    let offsets: Vec<_> = pairs.iter().map(MatchPair::offset).collect();
    offsets
        .iter()
        .map(|&o| offsets.iter().filter(|&&p| within(o, p, h)).count())
        .collect()
}

/// Index of the densest offset point, lowest index on ties.
pub fn density_anchor(pairs: &[MatchPair], h: f64) -> Option<usize> {
    let dens = offset_densities(pairs, h);
    let mut best: Option<usize> = None;
    for (i, &d) in dens.iter().enumerate() {
        if best.is_none_or(|b| d > dens[b]) {
            best = Some(i);
        }
    }
    best
}

/// Pairs whose offsets lie within `h` of the densest offset point.
pub fn offset_density_inliers(pairs: &[MatchPair], cfg: &DensityConfig) -> Vec<MatchPair> {
    let Some(anchor) = density_anchor(pairs, cfg.h) else {
        return Vec::new();
    };
    let a = pairs[anchor].offset();
    pairs
        .iter()
        .filter(|p| within(p.offset(), a, cfg.h))
        .copied()
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Clips a real-valued box to the image; always at least one pixel.
fn clip_box(x0: f64, y0: f64, x1: f64, y1: f64, (w, h): (usize, usize)) -> Rect {
    let cx0 = (x0.floor().max(0.0) as usize).min(w - 1);
    let cy0 = (y0.floor().max(0.0) as usize).min(h - 1);
    let cx1 = (x1.ceil().max(0.0) as usize).clamp(cx0 + 1, w);
    let cy1 = (y1.ceil().max(0.0) as usize).clamp(cy0 + 1, h);
    Rect::new(cx0, cy0, cx1 - cx0, cy1 - cy0)
}

/// Template-image pairs for every match of `ch`, before any filtering.
pub fn candidate_pairs(
    db: &TemplateFeatureDB,
    ch: char,
    image_kps: &[Keypoint],
    cfg: &LocatorConfig,
) -> Vec<MatchPair> {
    let (Some(entry), Some(index)) = (db.entry(ch), db.index(ch)) else {
        return Vec::new();
    };
    match_template(entry, index, image_kps, cfg.tau_match, cfg.max_checks)
        .into_iter()
        .map(|m| {
            let t = &entry.keypoints[m.template_kp];
            let i = &image_kps[m.image_kp];
            MatchPair {
                template_char: ch,
                template_xy: (t.x, t.y),
                template_theta: t.theta,
                image_xy: (i.x, i.y),
                image_theta: i.theta,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateOutcome {
    pub ch: char,
    pub matches: usize,
    pub candidates: Vec<MatchPair>,
    pub inliers: Vec<MatchPair>,
}

/// Match, orientation filter and density filter for each digit template.
pub fn per_template_outcomes(
    image_kps: &[Keypoint],
    db: &TemplateFeatureDB,
    cfg: &LocatorConfig,
) -> Vec<TemplateOutcome> {
    db.entries()
        .map(|e| {
            let pairs = candidate_pairs(db, e.ch, image_kps, cfg);
            let candidates = filter_by_orientation(&pairs);
            let inliers = offset_density_inliers(&candidates, &cfg.density);
            TemplateOutcome {
                ch: e.ch,
                matches: pairs.len(),
                candidates,
                inliers,
            }
        })
        .collect()
}

pub fn locate_plate(
    image_kps: &[Keypoint],
    db: &TemplateFeatureDB,
    image_size: (usize, usize),
    cfg: &LocatorConfig,
) -> Result<PlateRegion, LocateError> {
    let outcomes = per_template_outcomes(image_kps, db, cfg);
    if outcomes.iter().all(|o| o.matches == 0) {
        return Err(LocateError::PlateNotFound);
    }
    // entries iterate in ascending digit order, so the first maximum is the lowest digit
    let mut best: Option<&TemplateOutcome> = None;
    for o in outcomes.iter().filter(|o| o.inliers.len() >= MIN_INLIERS) {
        if best.is_none_or(|b| o.inliers.len() > b.inliers.len()) {
            best = Some(o);
        }
    }
    let (seed_char, inliers, fallback) = match best {
        Some(o) => (o.ch, o.inliers.clone(), false),
        None => {
            let pooled: Vec<MatchPair> = outcomes
                .iter()
                .flat_map(|o| o.candidates.iter().copied())
                .collect();
            let inliers = offset_density_inliers(&pooled, &cfg.density);
            if inliers.is_empty() {
                return Err(LocateError::PlateNotFound);
            }
            let mut counts = [0usize; 10];
            for p in &inliers {
                if let Some(d) = p.template_char.to_digit(10) {
                    counts[d as usize] += 1;
                }
            }
            let digit = (0..10).rev().max_by_key(|&d| counts[d]).unwrap_or(0);
            (char::from_digit(digit as u32, 10).unwrap(), inliers, true)
        }
    };

    let mut dx: Vec<f64> = inliers.iter().map(|p| p.offset().0).collect();
    let mut dy: Vec<f64> = inliers.iter().map(|p| p.offset().1).collect();
    let translation = (median(&mut dx), median(&mut dy));
    let ink = db.entry(seed_char).expect("all digits present").ink_box;
    let sx0 = ink.x as f64 + translation.0;
    let sy0 = ink.y as f64 + translation.1;
    let (sw, sh) = (ink.width as f64, ink.height as f64);
    let seed_bbox = clip_box(sx0, sy0, sx0 + sw, sy0 + sh, image_size);
    let (cx, cy) = (sx0 + sw / 2.0, sy0 + sh / 2.0);
    let (ww, wh) = (cfg.window_width * sh, cfg.window_height * sh);
    let bbox = clip_box(
        cx - ww / 2.0,
        cy - wh / 2.0,
        cx + ww / 2.0,
        cy + wh / 2.0,
        image_size,
    );
    Ok(PlateRegion {
        bbox,
        seed_char,
        seed_bbox,
        translation,
        inliers,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(t: (f64, f64, f64), i: (f64, f64, f64)) -> MatchPair {
        MatchPair {
            template_char: '3',
            template_xy: (t.0, t.1),
            template_theta: t.2,
            image_xy: (i.0, i.1),
            image_theta: i.2,
        }
    }

    #[test]
    fn equal_orientations_are_kept() {
        let p = pair((0.0, 0.0, 1.0), (5.0, 5.0, 1.0));
        assert_eq!(filter_by_orientation(&[p]), vec![p]);
    }

    #[test]
    fn orientation_wraps_at_pi() {
        let p = pair((0.0, 0.0, PI - 0.01), (0.0, 0.0, -PI + 0.01));
        assert!((p.orientation_diff() - 0.02).abs() < 1e-12);
        assert_eq!(filter_by_orientation(&[p]).len(), 1);
        let q = pair((0.0, 0.0, 0.0), (0.0, 0.0, 0.2));
        assert!(filter_by_orientation(&[q]).is_empty());
    }

    #[test]
    fn empty_and_single_inputs() {
        assert!(offset_density_inliers(&[], &DensityConfig::default()).is_empty());
        let p = pair((1.0, 2.0, 0.0), (40.0, 50.0, 0.0));
        assert_eq!(
            offset_density_inliers(&[p], &DensityConfig::default()),
            vec![p]
        );
    }

    #[test]
    fn larger_cluster_wins() {
        let h = 10.0;
        let mut pairs = Vec::new();
        for k in 0..3 {
            pairs.push(pair((0.0, 0.0, 0.0), (500.0 + k as f64, 0.0, 0.0)));
        }
        for k in 0..5 {
            pairs.push(pair((0.0, 0.0, 0.0), (300.0, k as f64 * 2.0, 0.0)));
        }
        let got = offset_density_inliers(&pairs, &DensityConfig { h });
        assert_eq!(got, pairs[3..].to_vec());
    }

    #[test]
    fn tie_takes_lowest_index() {
        let pairs = vec![
            pair((0.0, 0.0, 0.0), (100.0, 0.0, 0.0)),
            pair((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
        ];
        assert_eq!(density_anchor(&pairs, 10.0), Some(0));
        assert_eq!(
            offset_density_inliers(&pairs, &DensityConfig { h: 10.0 }),
            vec![pairs[0]]
        );
    }
}
