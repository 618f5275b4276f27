//! Digit-template feature database, a k-d tree over descriptors and
//! Best-Bin-First nearest-neighbour search.
//!
//! The database file (`ALPRSDB1`) is little-endian:
//!
//! ```text
//! magic        8 bytes  "ALPRSDB1"
//! version      u32      FORMAT_VERSION
//! entries      u32
//! per entry:
//!   char       u8       ASCII digit
//!   width      u32      template image width
//!   height     u32      template image height
//!   ink box    4 x u32  x, y, width, height of the glyph in template pixels
//!   keypoints  u32
//!   per keypoint: x, y, sigma, theta as f64, then 128 x f32 descriptor
//! crc32        u32      over every preceding byte
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::{GrayImage, Rect};
use crate::segment::{otsu_threshold, Polarity};
use crate::sift::{extract_keypoints, Descriptor, Keypoint, SiftConfig, SiftError, DESCRIPTOR_LEN};

pub const DB_MAGIC: &[u8; 8] = b"ALPRSDB1";
pub const FORMAT_VERSION: u32 = 1;
pub const DIGITS: [char; 10] = ['0', '1', '2', '3', '4', '5', '6', '7', '8', '9'];
pub const DEFAULT_MAX_CHECKS: usize = 200;
pub const DEFAULT_TAU_MATCH: f64 = 0.35;

#[derive(Debug, Error)]
pub enum MatchDbError {
    #[error("template for digit '{0}' is missing")]
    MissingDigit(char),
    #[error("unexpected template character {0:?}")]
    UnexpectedChar(char),
    #[error("not a template DB (bad magic bytes)")]
    NotTemplateDb,
    #[error("template DB format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt template DB: truncated ({0})")]
    Truncated(String),
    #[error(
        "corrupt template DB: checksum mismatch (stored {stored:08x}, computed {computed:08x})"
    )]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("corrupt template DB: {0}")]
    Corrupt(String),
    #[error("cannot index an empty descriptor list")]
    EmptyIndex,
    #[error("template DB I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feature extraction failed for template '{ch}': {source}")]
    Sift {
        ch: char,
        #[source]
        source: SiftError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateEntry {
    pub ch: char,
    pub width: usize,
    pub height: usize,
    /// Tight box around the glyph ink, in template pixels.
    pub ink_box: Rect,
    pub keypoints: Vec<Keypoint>,
}

/// Keypoints of the ten digit templates, each with its search index.
#[derive(Debug, Clone)]
pub struct TemplateFeatureDB {
    entries: BTreeMap<char, TemplateEntry>,
    indexes: BTreeMap<char, KdIndex>,
    pub format_version: u32,
}

impl PartialEq for TemplateFeatureDB {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.format_version == other.format_version
    }
}

impl TemplateFeatureDB {
    pub fn from_entries(entries: Vec<TemplateEntry>) -> Result<Self, MatchDbError> {
        let mut map = BTreeMap::new();
        for e in entries {
            if !DIGITS.contains(&e.ch) {
                return Err(MatchDbError::UnexpectedChar(e.ch));
            }
            map.insert(e.ch, e);
        }
        if let Some(&d) = DIGITS.iter().find(|d| !map.contains_key(d)) {
            return Err(MatchDbError::MissingDigit(d));
        }
        let indexes = map
            .iter()
            .filter(|(_, e)| !e.keypoints.is_empty())
            .map(|(&c, e)| {
                let descs: Vec<Descriptor> = e.keypoints.iter().map(|k| k.descriptor).collect();
                (c, build_index(&descs).expect("non-empty"))
            })
            .collect();
        Ok(TemplateFeatureDB {
            entries: map,
            indexes,
            format_version: FORMAT_VERSION,
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = &TemplateEntry> {
        self.entries.values()
    }

    pub fn entry(&self, ch: char) -> Option<&TemplateEntry> {
        self.entries.get(&ch)
    }

    pub fn index(&self, ch: char) -> Option<&KdIndex> {
        self.indexes.get(&ch)
    }

    /// Digits whose template produced no keypoints.
    pub fn empty_templates(&self) -> Vec<char> {
        self.entries
            .values()
            .filter(|e| e.keypoints.is_empty())
            .map(|e| e.ch)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DB_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in self.entries.values() {
            out.push(e.ch as u8);
            for v in [
                e.width,
                e.height,
                e.ink_box.x,
                e.ink_box.y,
                e.ink_box.width,
                e.ink_box.height,
                e.keypoints.len(),
            ] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
            for k in &e.keypoints {
                for v in [k.x, k.y, k.sigma, k.theta] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                for v in k.descriptor.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MatchDbError> {
        if bytes.len() < DB_MAGIC.len() || &bytes[..DB_MAGIC.len()] != DB_MAGIC {
            return Err(MatchDbError::NotTemplateDb);
        }
        let mut r = ByteReader {
            bytes,
            pos: DB_MAGIC.len(),
        };
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(MatchDbError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32("entry count")? as usize;
        if count > 64 {
            return Err(MatchDbError::Corrupt(format!(
                "implausible entry count {count}"
            )));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let ch = r.take(1, "entry char")?[0] as char;
            let width = r.u32("width")? as usize;
            let height = r.u32("height")? as usize;
            let ink_box = Rect::new(
                r.u32("ink x")? as usize,
                r.u32("ink y")? as usize,
                r.u32("ink width")? as usize,
                r.u32("ink height")? as usize,
            );
            let n = r.u32("keypoint count")? as usize;
            let kp_size = 4 * 8 + DESCRIPTOR_LEN * 4;
            if n.saturating_mul(kp_size) > r.remaining() {
                return Err(MatchDbError::Truncated(format!(
                    "entry '{ch}' declares {n} keypoints"
                )));
            }
            let mut keypoints = Vec::with_capacity(n);
            for _ in 0..n {
                let x = r.f64("x")?;
                let y = r.f64("y")?;
                let sigma = r.f64("sigma")?;
                let theta = r.f64("theta")?;
                let mut d = [0f32; DESCRIPTOR_LEN];
                for v in d.iter_mut() {
                    *v = f32::from_le_bytes(r.take(4, "descriptor")?.try_into().unwrap());
                }
                keypoints.push(Keypoint {
                    x,
                    y,
                    sigma,
                    theta,
                    descriptor: Descriptor(d),
                });
            }
            entries.push(TemplateEntry {
                ch,
                width,
                height,
                ink_box,
                keypoints,
            });
        }
        let body_len = r.pos;
        let stored = r.u32("checksum")?;
        if r.remaining() != 0 {
            return Err(MatchDbError::Corrupt(format!(
                "{} trailing bytes after checksum",
                r.remaining()
            )));
        }
        let computed = crc32fast::hash(&bytes[..body_len]);
        if stored != computed {
            return Err(MatchDbError::ChecksumMismatch { stored, computed });
        }
        TemplateFeatureDB::from_entries(entries)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MatchDbError> {
        if self.remaining() < n {
            return Err(MatchDbError::Truncated(format!("reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, MatchDbError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, MatchDbError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Tight box around the template's ink, found with an Otsu cut; the whole
/// image when the template is uniform.
pub fn ink_box(img: &GrayImage) -> Rect {
    let full = Rect::new(0, 0, img.width(), img.height());
    let Ok(otsu) = otsu_threshold(img) else {
        return full;
    };
    let bin = crate::segment::binarize(img, otsu.threshold, Polarity::Auto);
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..bin.height() {
        for x in 0..bin.width() {
            if bin.get(x, y) == 1 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return full;
    }
    Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
}

/// Runs SIFT once per digit template.
pub fn build_template_db(
    templates: &BTreeMap<char, GrayImage>,
    cfg: &SiftConfig,
) -> Result<TemplateFeatureDB, MatchDbError> {
    if let Some(&d) = DIGITS.iter().find(|d| !templates.contains_key(d)) {
        return Err(MatchDbError::MissingDigit(d));
    }
    let mut entries = Vec::with_capacity(templates.len());
    for (&ch, img) in templates {
        if !DIGITS.contains(&ch) {
            return Err(MatchDbError::UnexpectedChar(ch));
        }
        let keypoints =
            extract_keypoints(img, cfg).map_err(|source| MatchDbError::Sift { ch, source })?;
        entries.push(TemplateEntry {
            ch,
            width: img.width(),
            height: img.height(),
            ink_box: ink_box(img),
            keypoints,
        });
    }
    TemplateFeatureDB::from_entries(entries)
}

pub fn save_db(db: &TemplateFeatureDB, path: impl AsRef<Path>) -> Result<(), MatchDbError> {
    let path = path.as_ref();
    fs::write(path, db.to_bytes()).map_err(|source| MatchDbError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_db(path: impl AsRef<Path>) -> Result<TemplateFeatureDB, MatchDbError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| MatchDbError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    TemplateFeatureDB::from_bytes(&bytes)
}

#[derive(Debug, Clone)]
enum KdNode {
    Leaf {
        id: usize,
    },
    Split {
        dim: usize,
        value: f32,
        left: usize,
        right: usize,
    },
}

/// Balanced k-d tree with one leaf per descriptor.
#[derive(Debug, Clone)]
pub struct KdIndex {
    nodes: Vec<KdNode>,
    points: Vec<Descriptor>,
    root: usize,
}

pub fn build_index(descriptors: &[Descriptor]) -> Result<KdIndex, MatchDbError> {
    if descriptors.is_empty() {
        return Err(MatchDbError::EmptyIndex);
    }
    let mut index = KdIndex {
        nodes: Vec::with_capacity(2 * descriptors.len()),
        points: descriptors.to_vec(),
        root: 0,
    };
    let mut ids: Vec<usize> = (0..descriptors.len()).collect();
    index.root = index.build_node(&mut ids);
    Ok(index)
}

impl KdIndex {
    fn build_node(&mut self, ids: &mut [usize]) -> usize {
        if ids.len() == 1 {
            self.nodes.push(KdNode::Leaf { id: ids[0] });
            return self.nodes.len() - 1;
        }
        // dimension of greatest spread
        let mut dim = 0;
        let mut best_spread = f32::NEG_INFINITY;
        for d in 0..DESCRIPTOR_LEN {
            let (lo, hi) = ids
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.points[i].0[d];
                    (lo.min(v), hi.max(v))
                });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                dim = d;
            }
        }
        let points = &self.points;
        ids.sort_by(|&a, &b| {
            points[a].0[dim]
                .total_cmp(&points[b].0[dim])
                .then(a.cmp(&b))
        });
        let mid = ids.len() / 2;
        let value = self.points[ids[mid]].0[dim];
        let (lo, hi) = ids.split_at_mut(mid);
        let left = self.build_node(lo);
        let right = self.build_node(hi);
        self.nodes.push(KdNode::Split {
            dim,
            value,
            left,
            right,
        });
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn descriptor(&self, id: usize) -> &Descriptor {
        &self.points[id]
    }

    /// Split dimensions of every internal node.
    pub fn split_dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            KdNode::Split { dim, .. } => Some(*dim),
            KdNode::Leaf { .. } => None,
        })
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            KdNode::Leaf { id } => Some(*id),
            KdNode::Split { .. } => None,
        })
    }

    /// Best-Bin-First search: unexplored branches wait in a priority queue keyed by a
    /// lower bound on their distance to the query, and at most `max_checks` leaves are
    /// examined. Returns `(id, euclidean distance)`; ties prefer the lower id.
    pub fn nearest_neighbor_bbf(&self, query: &Descriptor, max_checks: usize) -> (usize, f64) {
        let max_checks = max_checks.max(1);
        let mut heap = BinaryHeap::new();
        heap.push(Branch {
            bound: 0.0,
            node: self.root,
        });
        let mut best_id = usize::MAX;
        let mut best = f64::INFINITY;
        let mut checks = 0;
        while let Some(Branch { bound, node }) = heap.pop() {
            if bound > best || checks >= max_checks {
                break;
            }
            let mut node = node;
            loop {
                match self.nodes[node] {
                    KdNode::Leaf { id } => {
                        checks += 1;
                        let d = self.points[id].distance_sq(query);
                        if d < best || (d == best && id < best_id) {
                            best = d;
                            best_id = id;
                        }
                        break;
                    }
                    KdNode::Split {
                        dim,
                        value,
                        left,
                        right,
                    } => {
                        let diff = query.0[dim] as f64 - value as f64;
                        let (near, far) = if diff < 0.0 {
                            (left, right)
                        } else {
                            (right, left)
                        };
                        heap.push(Branch {
                            bound: bound.max(diff * diff),
                            node: far,
                        });
                        node = near;
                    }
                }
            }
        }
        (best_id, best.sqrt())
    }
}

/// Queue entry ordered so that `BinaryHeap` pops the smallest bound first.
#[derive(Debug, Clone, Copy)]
struct Branch {
    bound: f64,
    node: usize,
}

impl PartialEq for Branch {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Branch {}

impl PartialOrd for Branch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Branch {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.node.cmp(&self.node))
    }
}

/// Exhaustive nearest neighbour; ties prefer the lower id.
pub fn nearest_neighbor_linear(points: &[Descriptor], query: &Descriptor) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = p.distance_sq(query);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub template_char: char,
    /// Index into the template entry's keypoints.
    pub template_kp: usize,
    /// Index into the image keypoint list.
    pub image_kp: usize,
    pub distance: f64,
}

/// Pairs every image keypoint with its nearest template keypoint and keeps pairs
/// within `tau_match`. An image keypoint appears at most once; a template keypoint
/// may appear many times.
pub fn match_template(
    entry: &TemplateEntry,
    index: &KdIndex,
    image_kps: &[Keypoint],
    tau_match: f64,
    max_checks: usize,
) -> Vec<Match> {
    image_kps
        .iter()
        .enumerate()
        .filter_map(|(i, kp)| {
            let (t, d) = index.nearest_neighbor_bbf(&kp.descriptor, max_checks);
            (d <= tau_match).then_some(Match {
                template_char: entry.ch,
                template_kp: t,
                image_kp: i,
                distance: d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_desc(rng: &mut ChaCha8Rng) -> Descriptor {
        let mut d = [0f32; DESCRIPTOR_LEN];
        for v in d.iter_mut() {
            *v = rng.gen::<f32>();
        }
        let n = d.iter().map(|v| v * v).sum::<f32>().sqrt();
        d.iter_mut().for_each(|v| *v /= n);
        Descriptor(d)
    }

    fn kp(desc: Descriptor, x: f64) -> Keypoint {
        Keypoint {
            x,
            y: 2.0 * x,
            sigma: 1.6,
            theta: 0.25,
            descriptor: desc,
        }
    }

    fn fake_db(rng: &mut ChaCha8Rng) -> TemplateFeatureDB {
        let entries = DIGITS
            .iter()
            .enumerate()
            .map(|(i, &ch)| TemplateEntry {
                ch,
                width: 40,
                height: 60,
                ink_box: Rect::new(5, 6, 30, 48),
                keypoints: (0..i + 1)
                    .map(|j| kp(random_desc(rng), j as f64 + 0.125))
                    .collect(),
            })
            .collect();
        TemplateFeatureDB::from_entries(entries).unwrap()
    }

    #[test]
    fn single_leaf_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_desc(&mut rng);
        let idx = build_index(&[d]).unwrap();
        assert_eq!(idx.leaf_ids().count(), 1);
        assert_eq!(idx.nearest_neighbor_bbf(&random_desc(&mut rng), 1).0, 0);
        assert!(matches!(build_index(&[]), Err(MatchDbError::EmptyIndex)));
    }

    #[test]
    fn identical_descriptors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_desc(&mut rng);
        let idx = build_index(&vec![d; 9]).unwrap();
        let q = random_desc(&mut rng);
        let (_, dist) = idx.nearest_neighbor_bbf(&q, 200);
        assert!((dist - d.distance(&q)).abs() < 1e-12);
    }

    #[test]
    fn self_query_returns_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..100).map(|_| random_desc(&mut rng)).collect();
        let idx = build_index(&pts).unwrap();
        let mut leaves: Vec<_> = idx.leaf_ids().collect();
        leaves.sort_unstable();
        assert_eq!(leaves, (0..100).collect::<Vec<_>>());
        assert!(idx.split_dims().all(|d| d < DESCRIPTOR_LEN));
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(idx.nearest_neighbor_bbf(p, idx.len()), (i, 0.0));
            // the containing bin is examined first, so a single check suffices
            assert_eq!(idx.nearest_neighbor_bbf(p, 1), (i, 0.0));
        }
    }

    #[test]
    fn one_check_returns_containing_leaf() {
        let mut a = [0f32; DESCRIPTOR_LEN];
        let mut b = [0f32; DESCRIPTOR_LEN];
        a[0] = 1.0;
        b[1] = 1.0;
        let idx = build_index(&[Descriptor(a), Descriptor(b)]).unwrap();
        // split is on dim 0 at a[0] = 1.0: b's cell is x0 < 1, a's is x0 >= 1
        let mut q = [0f32; DESCRIPTOR_LEN];
        q[0] = 1.5;
        q[1] = 3.0;
        assert_eq!(idx.nearest_neighbor_bbf(&Descriptor(q), 1).0, 0);
        q[0] = 0.5;
        q[1] = -2.0;
        assert_eq!(idx.nearest_neighbor_bbf(&Descriptor(q), 1).0, 1);
    }

    #[test]
    fn bbf_equals_linear_scan_when_unbounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..1000).map(|_| random_desc(&mut rng)).collect();
        let idx = build_index(&pts).unwrap();
        for _ in 0..100 {
            let q = random_desc(&mut rng);
            let (id, d) = idx.nearest_neighbor_bbf(&q, pts.len());
            let (lid, ld) = nearest_neighbor_linear(&pts, &q);
            assert_eq!(id, lid);
            assert!((d - ld).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let entry = TemplateEntry {
            ch: '3',
            width: 30,
            height: 40,
            ink_box: Rect::new(0, 0, 30, 40),
            keypoints: (0..7)
                .map(|i| kp(random_desc(&mut rng), i as f64))
                .collect(),
        };
        let descs: Vec<_> = entry.keypoints.iter().map(|k| k.descriptor).collect();
        let idx = build_index(&descs).unwrap();

        let copies = entry.keypoints.clone();
        let m = match_template(&entry, &idx, &copies, 0.1, 200);
        assert_eq!(m.len(), 7);
        for (i, mm) in m.iter().enumerate() {
            assert_eq!((mm.template_kp, mm.image_kp, mm.distance), (i, i, 0.0));
            assert_eq!(mm.template_char, '3');
        }

        let others: Vec<_> = (0..20)
            .map(|i| kp(random_desc(&mut rng), i as f64))
            .collect();
        assert!(match_template(&entry, &idx, &others, 0.0, 200).is_empty());

        // many image keypoints may share one template keypoint
        let dup = vec![entry.keypoints[4].clone(); 3];
        let m = match_template(&entry, &idx, &dup, 0.1, 200);
        assert_eq!(m.len(), 3);
        assert!(m.iter().all(|mm| mm.template_kp == 4));
    }

    #[test]
    fn db_roundtrip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let db = fake_db(&mut rng);
        let bytes = db.to_bytes();
        let back = TemplateFeatureDB::from_bytes(&bytes).unwrap();
        assert_eq!(back, db);
        assert_eq!(back.to_bytes(), bytes);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            TemplateFeatureDB::from_bytes(&bad),
            Err(MatchDbError::NotTemplateDb)
        ));
        assert!(matches!(
            TemplateFeatureDB::from_bytes(&bytes[..bytes.len() - 100]),
            Err(MatchDbError::Truncated(_))
        ));
        assert!(matches!(
            TemplateFeatureDB::from_bytes(&bytes[..20]),
            Err(MatchDbError::Truncated(_))
        ));
        let mut flipped = bytes.clone();
        flipped[100] ^= 0x40;
        assert!(matches!(
            TemplateFeatureDB::from_bytes(&flipped),
            Err(MatchDbError::ChecksumMismatch { .. })
        ));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(
            TemplateFeatureDB::from_bytes(&v2),
            Err(MatchDbError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn db_requires_all_digits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let db = fake_db(&mut rng);
        let mut entries: Vec<_> = db.entries().cloned().collect();
        entries.retain(|e| e.ch != '7');
        assert!(matches!(
            TemplateFeatureDB::from_entries(entries),
            Err(MatchDbError::MissingDigit('7'))
        ));
    }
}
