//! End-to-end recognition: locate the plate from digit-template matches,
//! segment it with Otsu, clip the character components and classify each one.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::BinaryImage;
use crate::image::{GrayImage, Rect};
use crate::locator::{locate_plate, LocatorConfig, PlateRegion};
use crate::matchdb::TemplateFeatureDB;
use crate::ocr::{ClassifierModel, GridSpec, OcrError};
use crate::segment::{
    binarize, clip_characters, connected_components, normalize_character, otsu_threshold,
    ClipConfig, Polarity, SegmentError,
};
use crate::sift::{extract_keypoints, SiftConfig, SiftError};

/// Character written into the plate string for a glyph rejected as noise.
pub const NOISE_MARKER: char = '?';

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sift(#[from] SiftError),
    #[error(transparent)]
    Ocr(#[from] OcrError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("reading config {path}: {source}")]
    ConfigIo {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed report line: {0}")]
    ReportLine(String),
    #[error("invalid plate pattern {0:?}: use L for letters, N for digits, * for any")]
    Pattern(String),
}

/// Positional character classes, e.g. `LLLNNNN`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatePattern(String);

impl PlatePattern {
    /// Whether `label` may appear at position `i`. Positions past the end are unrestricted.
    pub fn allows(&self, i: usize, label: char) -> bool {
        match self.0.as_bytes().get(i) {
            Some(b'L') => label.is_ascii_alphabetic(),
            Some(b'N') => label.is_ascii_digit(),
            _ => true,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for PlatePattern {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s: String = s.chars().filter(|&c| c != '-').collect();
        if s.is_empty() || !s.chars().all(|c| matches!(c, 'L' | 'N' | '*')) {
            return Err(PipelineError::Pattern(s));
        }
        Ok(PlatePattern(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sift: SiftConfig,
    pub locator: LocatorConfig,
    pub clip: ClipConfig,
    pub polarity: Polarity,
    /// Grid used when training; recognition uses the model's own grid.
    pub grid: GridSpec,
    /// Overrides the model's noise fraction when set.
    pub noise_fraction: Option<f64>,
    pub plate_pattern: Option<PlatePattern>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sift: SiftConfig::default(),
            locator: LocatorConfig::default(),
            clip: ClipConfig::default(),
            polarity: Polarity::DarkInk,
            grid: GridSpec::new(65, 60, 2).expect("valid default grid"),
            noise_fraction: None,
            plate_pattern: None,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, PipelineError> {
    v.parse().map_err(|_| PipelineError::Config {
        line,
        msg: format!("bad value {v:?} for {key}"),
    })
}

/// Parses `WxH`.
pub fn parse_grid_size(s: &str) -> Option<(usize, usize)> {
    let (w, h) = s.split_once(['x', 'X'])?;
    Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
}

impl PipelineConfig {
    /// Applies `key = value` lines on top of `self`. Blank lines and `#` comments are ignored.
    pub fn apply_str(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PipelineError::Config {
                    line: n,
                    msg: format!("expected key = value, got {line:?}"),
                });
            };
            let (key, v) = (key.trim(), value.trim());
            match key {
                "intervals" => self.sift.intervals = parse_value(n, key, v)?,
                "num_octaves" => self.sift.num_octaves = Some(parse_value(n, key, v)?),
                "sigma0" => self.sift.sigma0 = parse_value(n, key, v)?,
                "contrast_threshold" => self.sift.contrast_threshold = parse_value(n, key, v)?,
                "edge_ratio" => self.sift.edge_ratio = parse_value(n, key, v)?,
                "refine" => self.sift.refine = parse_value(n, key, v)?,
                "tau_match" => self.locator.tau_match = parse_value(n, key, v)?,
                "max_checks" => self.locator.max_checks = parse_value(n, key, v)?,
                "density_h" | "h" => self.locator.density.h = parse_value(n, key, v)?,
                "window_width" => self.locator.window_width = parse_value(n, key, v)?,
                "window_height" => self.locator.window_height = parse_value(n, key, v)?,
                "min_height" => self.clip.min_height = parse_value(n, key, v)?,
                "max_height" => self.clip.max_height = parse_value(n, key, v)?,
                "min_width" => self.clip.min_width = parse_value(n, key, v)?,
                "max_width" => self.clip.max_width = parse_value(n, key, v)?,
                "min_row_overlap" => self.clip.min_row_overlap = parse_value(n, key, v)?,
                "max_x_overlap" => self.clip.max_x_overlap = parse_value(n, key, v)?,
                "noise_fraction" => self.noise_fraction = Some(parse_value(n, key, v)?),
                "plate_pattern" => self.plate_pattern = Some(parse_value(n, key, v)?),
                "polarity" => {
                    self.polarity = match v {
                        "dark" => Polarity::DarkInk,
                        "light" => Polarity::LightInk,
                        "auto" => Polarity::Auto,
                        _ => {
                            return Err(PipelineError::Config {
                                line: n,
                                msg: format!("polarity must be dark, light or auto, got {v:?}"),
                            })
                        }
                    }
                }
                "grid" => {
                    let (w, h) = parse_grid_size(v).ok_or_else(|| PipelineError::Config {
                        line: n,
                        msg: format!("grid must be WxH, got {v:?}"),
                    })?;
                    self.grid = GridSpec::new(w, h, self.grid.order)?;
                }
                "order" => {
                    self.grid =
                        GridSpec::new(self.grid.width, self.grid.height, parse_value(n, key, v)?)?
                }
                _ => {
                    return Err(PipelineError::Config {
                        line: n,
                        msg: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        self.sift.validate()?;
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::ConfigIo {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Ok,
    PlateNotFound,
    SegmentationFailed,
    Partial,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::PlateNotFound => "PLATE_NOT_FOUND",
            Status::SegmentationFailed => "SEGMENTATION_FAILED",
            Status::Partial => "PARTIAL",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "OK" => Status::Ok,
            "PLATE_NOT_FOUND" => Status::PlateNotFound,
            "SEGMENTATION_FAILED" => Status::SegmentationFailed,
            "PARTIAL" => Status::Partial,
            _ => return Err(PipelineError::ReportLine(format!("unknown status {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub sift_match_ms: f64,
    pub segment_ms: f64,
    pub ocr_ms: f64,
}

impl Timings {
    pub fn total_ms(&self) -> f64 {
        self.sift_match_ms + self.segment_ms + self.ocr_ms
    }

    /// Rounds to the three decimals used in report lines.
    pub fn rounded(&self) -> Timings {
        let r = |v: f64| (v * 1000.0).round() / 1000.0;
        Timings {
            sift_match_ms: r(self.sift_match_ms),
            segment_ms: r(self.segment_ms),
            ocr_ms: r(self.ocr_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharResult {
    /// `None` for noise.
    pub label: Option<char>,
    /// Box in image coordinates.
    pub bbox: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub path: String,
    pub status: Status,
    pub plate: String,
    pub chars: Vec<CharResult>,
    pub plate_bbox: Option<Rect>,
    pub timings: Option<Timings>,
}

impl RecognitionReport {
    /// `path<TAB>status<TAB>plate<TAB>timings`; timings are `-` when omitted.
    pub fn to_line(&self) -> String {
        let timings = match &self.timings {
            Some(t) => format!(
                "sift_match_ms={:.3};segment_ms={:.3};ocr_ms={:.3}",
                t.sift_match_ms, t.segment_ms, t.ocr_ms
            ),
            None => "-".to_string(),
        };
        format!(
            "{}\t{}\t{}\t{}",
            self.path, self.status, self.plate, timings
        )
    }

    /// Parses a report line. Character boxes are not part of the line and come back empty.
    pub fn from_line(line: &str) -> Result<Self, PipelineError> {
        let bad = || PipelineError::ReportLine(line.to_string());
        let fields: Vec<&str> = line.trim_end_matches(['\n', '\r']).split('\t').collect();
        let [path, status, plate, timings] = fields[..] else {
            return Err(bad());
        };
        let timings = if timings == "-" {
            None
        } else {
            let mut t = Timings::default();
            let mut seen = 0;
            for kv in timings.split(';') {
                let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                let v: f64 = v.parse().map_err(|_| bad())?;
                if v.is_nan() || v < 0.0 {
                    return Err(bad());
                }
                match k {
                    "sift_match_ms" => t.sift_match_ms = v,
                    "segment_ms" => t.segment_ms = v,
                    "ocr_ms" => t.ocr_ms = v,
                    _ => return Err(bad()),
                }
                seen += 1;
            }
            if seen != 3 {
                return Err(bad());
            }
            Some(t)
        };
        Ok(RecognitionReport {
            path: path.to_string(),
            status: status.parse()?,
            plate: plate.to_string(),
            chars: Vec::new(),
            plate_bbox: None,
            timings,
        })
    }

    /// Report lines with timings omitted compare equal on repeated runs.
    pub fn without_timings(mut self) -> Self {
        self.timings = None;
        self
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// The largest ink component of a glyph image, resampled onto the grid.
/// Training samples and clipped plate characters both go through here.
pub fn glyph_to_grid(
    img: &GrayImage,
    grid: &GridSpec,
    polarity: Polarity,
) -> Result<BinaryImage, SegmentError> {
    let otsu = otsu_threshold(img)?;
    let bin = binarize(img, otsu.threshold, polarity);
    let largest = connected_components(&bin)
        .into_iter()
        .max_by_key(|c| c.pixels.len())
        .ok_or(SegmentError::EmptyForeground)?;
    let mut glyph = BinaryImage::zeros(bin.width(), bin.height());
    for (x, y) in largest.pixels {
        glyph.set(x, y, true);
    }
    normalize_character(&glyph, grid.width, grid.height)
}

/// Seed box in plate-window coordinates.
fn local_seed(region: &PlateRegion) -> Rect {
    let s = region.seed_bbox;
    let b = region.bbox;
    let x = s.x.max(b.x) - b.x;
    let y = s.y.max(b.y) - b.y;
    Rect::new(
        x,
        y,
        s.right().min(b.right()).saturating_sub(s.x.max(b.x)),
        s.bottom().min(b.bottom()).saturating_sub(s.y.max(b.y)),
    )
}

/// Runs the full pipeline on one image.
pub fn recognize(
    path: &str,
    img: &GrayImage,
    db: &TemplateFeatureDB,
    model: &ClassifierModel,
    cfg: &PipelineConfig,
) -> Result<RecognitionReport, PipelineError> {
    let mut report = RecognitionReport {
        path: path.to_string(),
        status: Status::PlateNotFound,
        plate: String::new(),
        chars: Vec::new(),
        plate_bbox: None,
        timings: None,
    };
    let mut timings = Timings::default();

    let t = Instant::now();
    let located = match extract_keypoints(img, &cfg.sift) {
        Ok(kps) => locate_plate(&kps, db, (img.width(), img.height()), &cfg.locator).ok(),
        Err(SiftError::ImageTooSmall { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    timings.sift_match_ms = ms_since(t);
    let Some(region) = located else {
        report.timings = Some(timings);
        return Ok(report);
    };
    report.plate_bbox = Some(region.bbox);

    let t = Instant::now();
    let boxes = img
        .crop(region.bbox)
        .ok()
        .and_then(|window| {
            let otsu = otsu_threshold(&window).ok()?;
            let bin = binarize(&window, otsu.threshold, cfg.polarity);
            clip_characters(&bin, local_seed(&region), &cfg.clip).ok()
        })
        .map(|boxes| {
            boxes
                .into_iter()
                .map(|b| {
                    let grid = normalize_character(&b.image, model.grid.width, model.grid.height);
                    let bbox = Rect::new(
                        b.bbox.x + region.bbox.x,
                        b.bbox.y + region.bbox.y,
                        b.bbox.width,
                        b.bbox.height,
                    );
                    (bbox, grid)
                })
                .collect::<Vec<_>>()
        });
    timings.segment_ms = ms_since(t);
    let Some(boxes) = boxes else {
        report.status = Status::SegmentationFailed;
        report.timings = Some(timings);
        return Ok(report);
    };

    let t = Instant::now();
    let mut classifier = model.clone();
    if let Some(nf) = cfg.noise_fraction {
        classifier.noise_fraction = nf;
    }
    for (i, (bbox, grid)) in boxes.into_iter().enumerate() {
        let label = match grid {
            Ok(g) => match &cfg.plate_pattern {
                Some(p) => classifier.classify_among(&g, |c| p.allows(i, c))?.label,
                None => classifier.classify(&g)?.label,
            },
            Err(_) => None,
        };
        report.plate.push(label.unwrap_or(NOISE_MARKER));
        report.chars.push(CharResult { label, bbox });
    }
    timings.ocr_ms = ms_since(t);

    report.status = if report.chars.iter().all(|c| c.label.is_some()) {
        Status::Ok
    } else {
        Status::Partial
    };
    report.timings = Some(timings);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overrides() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_str("# comment\ntau_match = 0.4\n\nh=12 # inline\ngrid = 50x30\nplate_pattern = LLL-NNNN\npolarity = auto\n")
            .unwrap();
        assert_eq!(cfg.locator.tau_match, 0.4);
        assert_eq!(cfg.locator.density.h, 12.0);
        assert_eq!(
            (cfg.grid.width, cfg.grid.height, cfg.grid.order),
            (50, 30, 2)
        );
        assert_eq!(cfg.plate_pattern.unwrap().as_str(), "LLLNNNN");
        assert_eq!(cfg.polarity, Polarity::Auto);
    }

    #[test]
    fn config_errors_name_the_line() {
        let mut cfg = PipelineConfig::default();
        let err = cfg.apply_str("tau_match = 0.3\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, PipelineError::Config { line: 2, .. }));
        assert!(cfg.apply_str("tau_match 0.3").is_err());
        assert!(cfg.apply_str("intervals = 0").is_err());
    }

    #[test]
    fn pattern_masks_positions() {
        let p: PlatePattern = "LLLNNNN".parse().unwrap();
        assert!(p.allows(0, 'A') && !p.allows(0, '4'));
        assert!(p.allows(3, '4') && !p.allows(3, 'A'));
        assert!(p.allows(9, 'A') && p.allows(9, '4'));
        assert!("LXN".parse::<PlatePattern>().is_err());
    }

    #[test]
    fn report_line_round_trip() {
        let r = RecognitionReport {
            path: "plates/a.pgm".into(),
            status: Status::Partial,
            plate: "AB?1234".into(),
            chars: Vec::new(),
            plate_bbox: None,
            timings: Some(Timings {
                sift_match_ms: 812.5,
                segment_ms: 3.25,
                ocr_ms: 0.125,
            }),
        };
        let line = r.to_line();
        assert_eq!(
            line,
            "plates/a.pgm\tPARTIAL\tAB?1234\tsift_match_ms=812.500;segment_ms=3.250;ocr_ms=0.125"
        );
        assert_eq!(RecognitionReport::from_line(&line).unwrap(), r);
        let bare = r.without_timings();
        assert_eq!(RecognitionReport::from_line(&bare.to_line()).unwrap(), bare);
        assert!(RecognitionReport::from_line("a\tOK\tX").is_err());
        assert!(RecognitionReport::from_line("a\tDONE\tX\t-").is_err());
    }

    #[test]
    fn blank_image_is_not_found() {
        use crate::matchdb::{TemplateEntry, TemplateFeatureDB};
        let entries = crate::matchdb::DIGITS
            .iter()
            .map(|&ch| TemplateEntry {
                ch,
                width: 10,
                height: 10,
                ink_box: Rect::new(0, 0, 10, 10),
                keypoints: Vec::new(),
            })
            .collect();
        let db = TemplateFeatureDB::from_entries(entries).unwrap();
        let model = crate::ocr::train(
            &[('A', vec![BinaryImage::zeros(4, 4)])]
                .into_iter()
                .collect(),
            GridSpec::new(4, 4, 2).unwrap(),
            0.3,
        )
        .unwrap();
        let img = GrayImage::filled(640, 240, 0.5);
        let r = recognize("blank", &img, &db, &model, &PipelineConfig::default()).unwrap();
        assert_eq!(r.status, Status::PlateNotFound);
        assert!(r.plate.is_empty());
        assert!(r.timings.unwrap().sift_match_ms >= 0.0);
    }
}
