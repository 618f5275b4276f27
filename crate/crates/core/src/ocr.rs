//! Transition-vector character classifier.
//!
//! A grid-sampled binary glyph is read along a serpentine path (row 0 left to
//! right, row 1 right to left, ...). Position `p` of the transition vector is
//! the bit pattern of path pixels `p, p+1` (and `p+2` for triples), wrapping
//! around at the end so an `m × n` grid yields exactly `m·n` values.
//!
//! Training records, per class and per position, the patterns that never
//! occur; these are the class's restrictions. Classification:
//!
//! 1. classes with no violated restriction are candidates;
//! 2. among several candidates the one with the most restrictions wins;
//! 3. with no candidate, the least-violated class wins unless even that class
//!    satisfies less than `noise_fraction` of its restricted positions, in
//!    which case the glyph is noise.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::BinaryImage;

pub const OCR_MAGIC: &[u8; 9] = b"ALPRSOCR1";
pub const DEFAULT_NOISE_FRACTION: f64 = 0.30;

/// The 36 plate character classes.
pub const PLATE_CLASSES: [char; 36] = [
    '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', 'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I',
    'J', 'K', 'L', 'M', 'N', 'O', 'P', 'Q', 'R', 'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z',
];

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("grid must be at least 2x2 with order 2 or 3, got {width}x{height} order {order}")]
    InvalidGrid {
        width: usize,
        height: usize,
        order: usize,
    },
    #[error("image is {actual_w}x{actual_h}, grid is {grid_w}x{grid_h}")]
    SizeMismatch {
        actual_w: usize,
        actual_h: usize,
        grid_w: usize,
        grid_h: usize,
    },
    #[error("transition vector has {actual} values, rules expect {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("class '{0}' has no training samples")]
    EmptyClass(char),
    #[error("no classes to train")]
    NoClasses,
    #[error("no class is allowed at this position")]
    NoAllowedClass,
    #[error("not an OCR model (bad magic bytes)")]
    NotOcrModel,
    #[error("corrupt OCR model: {0}")]
    Corrupt(String),
    #[error("OCR model I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Pixels per transition: 2 (pairs) or 3 (triples).
    pub order: usize,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, order: usize) -> Result<Self, OcrError> {
        if width < 2 || height < 2 || !(2..=3).contains(&order) {
            return Err(OcrError::InvalidGrid {
                width,
                height,
                order,
            });
        }
        Ok(GridSpec {
            width,
            height,
            order,
        })
    }

    /// Number of transitions, `width · height`.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct patterns: 4 for pairs, 8 for triples.
    pub fn alphabet_size(&self) -> usize {
        1 << self.order
    }

    fn full_mask(&self) -> u8 {
        ((1u16 << self.alphabet_size()) - 1) as u8
    }

    /// Pixel coordinates along the serpentine path.
    pub fn path(&self) -> Vec<(usize, usize)> {
        let mut p = Vec::with_capacity(self.len());
        for y in 0..self.height {
            if y % 2 == 0 {
                p.extend((0..self.width).map(|x| (x, y)));
            } else {
                p.extend((0..self.width).rev().map(|x| (x, y)));
            }
        }
        p
    }
}

/// Bit pattern over `order` pixels, first pixel in the most significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern {
    pub bits: u8,
    pub order: u8,
}

impl Pattern {
    /// Parses `"01"`, `"110"` and the like.
    pub fn parse(s: &str) -> Option<Pattern> {
        if !(2..=3).contains(&s.len()) {
            return None;
        }
        let mut bits = 0u8;
        for c in s.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return None,
                };
        }
        Some(Pattern {
            bits,
            order: s.len() as u8,
        })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.order).rev() {
            write!(f, "{}", (self.bits >> i) & 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransitionVector {
    pub order: usize,
    /// Pattern code at each path position.
    pub values: Vec<u8>,
}

impl TransitionVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pattern(&self, p: usize) -> Pattern {
        Pattern {
            bits: self.values[p],
            order: self.order as u8,
        }
    }
}

pub fn transition_vector(img: &BinaryImage, grid: &GridSpec) -> Result<TransitionVector, OcrError> {
    if img.width() != grid.width || img.height() != grid.height {
        return Err(OcrError::SizeMismatch {
            actual_w: img.width(),
            actual_h: img.height(),
            grid_w: grid.width,
            grid_h: grid.height,
        });
    }
    let seq: Vec<u8> = grid
        .path()
        .into_iter()
        .map(|(x, y)| img.get(x, y))
        .collect();
    let n = seq.len();
    let values = (0..n)
        .map(|p| (0..grid.order).fold(0u8, |acc, k| (acc << 1) | seq[(p + k) % n]))
        .collect();
    Ok(TransitionVector {
        order: grid.order,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassRuleSet {
    pub label: char,
    /// Per position, a bitmask of the patterns never observed in training.
    pub forbidden: Vec<u8>,
    /// Total number of forbidden patterns over all positions.
    pub restriction_count: usize,
}

impl ClassRuleSet {
    fn from_masks(label: char, forbidden: Vec<u8>) -> Self {
        let restriction_count = forbidden.iter().map(|m| m.count_ones() as usize).sum();
        ClassRuleSet {
            label,
            forbidden,
            restriction_count,
        }
    }

    /// Forbidden patterns at position `p`, in ascending code order.
    pub fn forbidden_at(&self, p: usize, order: usize) -> Vec<Pattern> {
        (0..(1u8 << order))
            .filter(|b| self.forbidden[p] & (1 << b) != 0)
            .map(|bits| Pattern {
                bits,
                order: order as u8,
            })
            .collect()
    }

    /// Positions carrying at least one restriction.
    pub fn restricted_positions(&self) -> usize {
        self.forbidden.iter().filter(|&&m| m != 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub grid: GridSpec,
    /// Rule sets in ascending label order.
    pub classes: Vec<ClassRuleSet>,
    pub noise_fraction: f64,
}

/// Outcome of classifying one glyph.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// `None` means the glyph was rejected as noise.
    pub label: Option<char>,
    /// Violated restrictions per class, in model order.
    pub violations: Vec<(char, usize)>,
}

/// Builds the restriction lists from labelled grid-sized samples.
pub fn train(
    samples: &BTreeMap<char, Vec<BinaryImage>>,
    grid: GridSpec,
    noise_fraction: f64,
) -> Result<ClassifierModel, OcrError> {
    if samples.is_empty() {
        return Err(OcrError::NoClasses);
    }
    let mut classes = Vec::with_capacity(samples.len());
    for (&label, imgs) in samples {
        if imgs.is_empty() {
            return Err(OcrError::EmptyClass(label));
        }
        let mut seen = vec![0u8; grid.len()];
        for img in imgs {
            let tv = transition_vector(img, &grid)?;
            for (s, &v) in seen.iter_mut().zip(&tv.values) {
                *s |= 1 << v;
            }
        }
        let full = grid.full_mask();
        classes.push(ClassRuleSet::from_masks(
            label,
            seen.into_iter().map(|s| !s & full).collect(),
        ));
    }
    Ok(ClassifierModel {
        grid,
        classes,
        noise_fraction,
    })
}

pub fn count_violations(tv: &TransitionVector, rules: &ClassRuleSet) -> Result<usize, OcrError> {
    if tv.len() != rules.forbidden.len() {
        return Err(OcrError::LengthMismatch {
            expected: rules.forbidden.len(),
            actual: tv.len(),
        });
    }
    Ok(tv
        .values
        .iter()
        .zip(&rules.forbidden)
        .filter(|(&v, &m)| m & (1 << v) != 0)
        .count())
}

impl ClassifierModel {
    pub fn class(&self, label: char) -> Option<&ClassRuleSet> {
        self.classes.iter().find(|c| c.label == label)
    }

    pub fn labels(&self) -> impl Iterator<Item = char> + '_ {
        self.classes.iter().map(|c| c.label)
    }

    pub fn classify(&self, img: &BinaryImage) -> Result<Classification, OcrError> {
        self.classify_among(img, |_| true)
    }

    /// Classifies against the classes accepted by `allowed` only.
    pub fn classify_among(
        &self,
        img: &BinaryImage,
        allowed: impl Fn(char) -> bool,
    ) -> Result<Classification, OcrError> {
        let tv = transition_vector(img, &self.grid)?;
        self.classify_vector(&tv, allowed)
    }

    pub fn classify_vector(
        &self,
        tv: &TransitionVector,
        allowed: impl Fn(char) -> bool,
    ) -> Result<Classification, OcrError> {
        let mut scored = Vec::new();
        for c in self.classes.iter().filter(|c| allowed(c.label)) {
            scored.push((c, count_violations(tv, c)?));
        }
        if scored.is_empty() {
            return Err(OcrError::NoAllowedClass);
        }
        let violations = scored.iter().map(|(c, v)| (c.label, *v)).collect();

        // R1 + R2: unviolated classes, most restrictive first, then smallest label
        let mut best: Option<&ClassRuleSet> = None;
        for (c, _) in scored.iter().filter(|(_, v)| *v == 0) {
            if best.is_none_or(|b| c.restriction_count > b.restriction_count) {
                best = Some(c);
            }
        }
        if let Some(c) = best {
            return Ok(Classification {
                label: Some(c.label),
                violations,
            });
        }

        // R3: least violated class by fraction of restricted positions, or noise
        let ratio = |c: &ClassRuleSet, v: usize| {
            let restricted = c.restricted_positions();
            if restricted == 0 {
                0.0
            } else {
                v as f64 / restricted as f64
            }
        };
        let (mut arg, mut r_min) = (scored[0].0, f64::INFINITY);
        for (c, v) in &scored {
            let r = ratio(c, *v);
            if r < r_min {
                r_min = r;
                arg = c;
            }
        }
        let label = if 1.0 - r_min < self.noise_fraction {
            None
        } else {
            Some(arg.label)
        };
        Ok(Classification { label, violations })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(OCR_MAGIC);
        out.extend_from_slice(&(self.grid.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.height as u32).to_le_bytes());
        out.push(self.grid.order as u8);
        out.extend_from_slice(&self.noise_fraction.to_le_bytes());
        out.extend_from_slice(&(self.classes.len() as u32).to_le_bytes());
        for c in &self.classes {
            out.push(c.label as u8);
            out.extend_from_slice(&c.forbidden);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, OcrError> {
        if bytes.len() < OCR_MAGIC.len() || &bytes[..OCR_MAGIC.len()] != OCR_MAGIC {
            return Err(OcrError::NotOcrModel);
        }
        let header = OCR_MAGIC.len() + 4 + 4 + 1 + 8 + 4;
        if bytes.len() < header + 4 {
            return Err(OcrError::Corrupt("truncated header".into()));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let mut pos = OCR_MAGIC.len();
        let width = u32_at(pos);
        let height = u32_at(pos + 4);
        let order = bytes[pos + 8] as usize;
        let noise_fraction = f64::from_le_bytes(bytes[pos + 9..pos + 17].try_into().unwrap());
        let count = u32_at(pos + 17);
        pos = header;
        let grid = GridSpec::new(width, height, order)
            .map_err(|e| OcrError::Corrupt(format!("bad header: {e}")))?;
        let per_class = 1 + grid.len();
        if body.len() != header + count * per_class {
            return Err(OcrError::Corrupt(format!(
                "expected {} bytes for {count} classes, found {}",
                header + count * per_class + 4,
                bytes.len()
            )));
        }
        let computed = crc32fast::hash(body);
        if computed != stored {
            return Err(OcrError::Corrupt(format!(
                "checksum mismatch (stored {stored:08x}, computed {computed:08x})"
            )));
        }
        let full = grid.full_mask();
        let mut classes = Vec::with_capacity(count);
        for _ in 0..count {
            let label = bytes[pos] as char;
            let masks = bytes[pos + 1..pos + per_class].to_vec();
            if masks.iter().any(|&m| m & !full != 0) {
                return Err(OcrError::Corrupt(format!(
                    "class '{label}' has mask bits outside the alphabet"
                )));
            }
            classes.push(ClassRuleSet::from_masks(label, masks));
            pos += per_class;
        }
        Ok(ClassifierModel {
            grid,
            classes,
            noise_fraction,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OcrError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| OcrError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OcrError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| OcrError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, order: usize) -> GridSpec {
        GridSpec::new(w, h, order).unwrap()
    }

    #[test]
    fn serpentine_path() {
        assert_eq!(
            grid(3, 2, 2).path(),
            vec![(0, 0), (1, 0), (2, 0), (2, 1), (1, 1), (0, 1)]
        );
    }

    #[test]
    fn all_zero_pairs() {
        let tv = transition_vector(&BinaryImage::zeros(2, 2), &grid(2, 2, 2)).unwrap();
        assert_eq!(tv.values, vec![0, 0, 0, 0]);
    }

    #[test]
    fn hand_traced_diagonal() {
        let img = BinaryImage::from_rows(&["#.", ".#"]).unwrap();
        let tv = transition_vector(&img, &grid(2, 2, 2)).unwrap();
        let shown: Vec<String> = (0..4).map(|p| tv.pattern(p).to_string()).collect();
        assert_eq!(shown, vec!["10", "01", "10", "01"]);
    }

    #[test]
    fn triples_wrap_around() {
        let img = BinaryImage::from_rows(&["#.", ".."]).unwrap();
        let tv = transition_vector(&img, &grid(2, 2, 3)).unwrap();
        let shown: Vec<String> = (0..4).map(|p| tv.pattern(p).to_string()).collect();
        assert_eq!(shown, vec!["100", "000", "001", "010"]);
    }

    #[test]
    fn vector_lengths() {
        for (w, h) in [(65, 60), (50, 30)] {
            let tv = transition_vector(&BinaryImage::zeros(w, h), &grid(w, h, 2)).unwrap();
            assert_eq!(tv.len(), w * h);
        }
        assert!(matches!(
            transition_vector(&BinaryImage::zeros(3, 3), &grid(2, 2, 2)),
            Err(OcrError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 5, 2).is_err());
        assert!(GridSpec::new(5, 5, 4).is_err());
        assert_eq!(grid(4, 4, 3).alphabet_size(), 8);
    }

    #[test]
    fn single_sample_forbids_all_but_one() {
        let img = BinaryImage::from_rows(&["#..", ".#.", "..#"]).unwrap();
        let g = grid(3, 3, 2);
        let model = train(&BTreeMap::from([('X', vec![img.clone()])]), g, 0.3).unwrap();
        let rules = &model.classes[0];
        assert!(rules.forbidden.iter().all(|m| m.count_ones() == 3));
        assert_eq!(rules.restriction_count, 27);
        let tv = transition_vector(&img, &g).unwrap();
        assert_eq!(count_violations(&tv, rules).unwrap(), 0);
    }

    #[test]
    fn violations_of_all_zero_vector() {
        let g = grid(3, 2, 2);
        let rules = ClassRuleSet::from_masks('Z', vec![0b0001; 6]);
        let tv = transition_vector(&BinaryImage::zeros(3, 2), &g).unwrap();
        assert_eq!(count_violations(&tv, &rules).unwrap(), 6);
        let short = ClassRuleSet::from_masks('Z', vec![0; 5]);
        assert!(matches!(
            count_violations(&tv, &short),
            Err(OcrError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn empty_class_is_rejected() {
        let g = grid(2, 2, 2);
        let samples = BTreeMap::from([('A', vec![BinaryImage::zeros(2, 2)]), ('B', vec![])]);
        assert!(matches!(
            train(&samples, g, 0.3),
            Err(OcrError::EmptyClass('B'))
        ));
    }

    #[test]
    fn model_bytes_roundtrip() {
        let g = grid(4, 3, 3);
        let a = BinaryImage::from_rows(&["#..#", ".##.", "#..#"]).unwrap();
        let b = BinaryImage::from_rows(&["####", "#...", "####"]).unwrap();
        let model = train(
            &BTreeMap::from([('A', vec![a.clone(), b.clone()]), ('B', vec![b])]),
            g,
            0.3,
        )
        .unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..9], b"ALPRSOCR1");
        assert_eq!(ClassifierModel::from_bytes(&bytes).unwrap(), model);
        let mut bad = bytes.clone();
        bad[30] ^= 1;
        assert!(matches!(
            ClassifierModel::from_bytes(&bad),
            Err(OcrError::Corrupt(_))
        ));
        assert!(matches!(
            ClassifierModel::from_bytes(b"ALPRSDB1...."),
            Err(OcrError::NotOcrModel)
        ));
        assert!(matches!(
            ClassifierModel::from_bytes(&bytes[..bytes.len() - 3]),
            Err(OcrError::Corrupt(_))
        ));
    }

    #[test]
    fn pattern_parse_and_display() {
        assert_eq!(Pattern::parse("10").unwrap().bits, 2);
        assert_eq!(Pattern::parse("011").unwrap().to_string(), "011");
        assert!(Pattern::parse("2").is_none());
        assert!(Pattern::parse("0101").is_none());
    }
}
