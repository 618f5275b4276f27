//! Grayscale and binary rasters, PNM file I/O and the filtering primitives
//! used by the scale-space construction.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported magic number {0:?} (expected P2, P3, P5 or P6)")]
    UnsupportedFormat(String),
    #[error("malformed PNM header: {0}")]
    MalformedHeader(String),
    #[error("truncated or malformed PNM pixel data: {0}")]
    MalformedData(String),
    #[error("image dimensions must be non-zero, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer has {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityRange { index: usize, value: f64 },
    #[error("gaussian sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("image of {width}x{height} is too small to downsample")]
    TooSmall { width: usize, height: usize },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Axis-aligned pixel rectangle, half-open on the right and bottom edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    pub fn right(&self) -> usize {
        self.x + self.width
    }

    pub fn bottom(&self) -> usize {
        self.y + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}+{}", self.width, self.height, self.x, self.y)
    }
}

/// Row-major raster of intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::IntensityRange { index, value });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    /// Creates an image filled with a constant value, clamped into `[0, 1]`.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        GrayImage {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel; results are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sets a pixel, clamping the value into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Edge-clamped access with signed coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Copies out the part of `rect` that lies inside the image.
    pub fn crop(&self, rect: Rect) -> Result<GrayImage, ImageError> {
        let x1 = rect.right().min(self.width);
        let y1 = rect.bottom().min(self.height);
        if rect.x >= x1 || rect.y >= y1 {
            return Err(ImageError::EmptyImage {
                width: x1.saturating_sub(rect.x),
                height: y1.saturating_sub(rect.y),
            });
        }
        let w = x1 - rect.x;
        let h = y1 - rect.y;
        let mut data = Vec::with_capacity(w * h);
        for y in rect.y..y1 {
            data.extend_from_slice(&self.data[y * self.width + rect.x..y * self.width + x1]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            data,
        })
    }

    /// Writes the image as a binary PGM (P5) with maxval 255.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let io_err = |source| ImageError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        file.write_all(&self.to_p5_bytes()).map_err(io_err)?;
        file.flush().map_err(io_err)
    }

    /// Encodes the image as P5 bytes; intensities are rounded to the nearest of 256 levels.
    pub fn to_p5_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| (v * 255.0).round() as u8));
        out
    }
}

/// Row-major raster of `{0, 1}` values; 1 marks foreground (character ink).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some((index, &v)) = data.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(ImageError::IntensityRange {
                index,
                value: v as f64,
            });
        }
        Ok(BinaryImage {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        BinaryImage {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// Parses rows of `'#'`/`'1'` (foreground) and `'.'`/`'0'` (background).
    pub fn from_rows(rows: &[&str]) -> Result<Self, ImageError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut data = Vec::with_capacity(width * height);
        for row in rows {
            if row.chars().count() != width {
                return Err(ImageError::BufferSize {
                    expected: width,
                    actual: row.chars().count(),
                });
            }
            data.extend(row.chars().map(|c| u8::from(c == '#' || c == '1')));
        }
        BinaryImage::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn crop(&self, rect: Rect) -> Result<BinaryImage, ImageError> {
        let x1 = rect.right().min(self.width);
        let y1 = rect.bottom().min(self.height);
        if rect.x >= x1 || rect.y >= y1 {
            return Err(ImageError::EmptyImage {
                width: x1.saturating_sub(rect.x),
                height: y1.saturating_sub(rect.y),
            });
        }
        let mut data = Vec::with_capacity((x1 - rect.x) * (y1 - rect.y));
        for y in rect.y..y1 {
            data.extend_from_slice(&self.data[y * self.width + rect.x..y * self.width + x1]);
        }
        Ok(BinaryImage {
            width: x1 - rect.x,
            height: y1 - rect.y,
            data,
        })
    }

    /// Renders foreground as black on white, for inspection.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1.0 - v as f64).collect(),
        }
    }
}

/// Signed raster produced by subtracting two gray images; values lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DiffImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Loads a PGM (P2/P5) or PPM (P3/P6) file as a gray image scaled into `[0, 1]`.
///
/// Color pixels are reduced to luma with the Rec. 601 weights.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pnm(&bytes)
}

/// Decodes PNM bytes (P2, P3, P5 or P6).
pub fn decode_pnm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(ImageError::UnsupportedFormat(magic));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'5' => (1, true),
        b'3' => (3, false),
        b'6' => (3, true),
        _ => {
            return Err(ImageError::UnsupportedFormat(
                String::from_utf8_lossy(&bytes[..2]).into_owned(),
            ))
        }
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.next_uint("width")?;
    let height = header.next_uint("height")?;
    let maxval = header.next_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyImage { width, height });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::MalformedHeader(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let n = width * height * channels;
    let samples: Vec<u32> = if binary {
        // exactly one whitespace byte separates the header from the raster
        if header.pos >= bytes.len() || !bytes[header.pos].is_ascii_whitespace() {
            return Err(ImageError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ));
        }
        let raster = &bytes[header.pos + 1..];
        let bps = if maxval < 256 { 1 } else { 2 };
        if raster.len() < n * bps {
            return Err(ImageError::MalformedData(format!(
                "expected {} bytes of pixel data, found {}",
                n * bps,
                raster.len()
            )));
        }
        if bps == 1 {
            raster[..n].iter().map(|&b| b as u32).collect()
        } else {
            raster[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                .collect()
        }
    } else {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let v = header
                .next_uint("sample")
                .map_err(|_| ImageError::MalformedData(format!("sample {i} of {n} missing")))?;
            out.push(v as u32);
        }
        out
    };
    if let Some(v) = samples.iter().find(|&&v| v as usize > maxval) {
        return Err(ImageError::MalformedData(format!(
            "sample {v} exceeds maxval {maxval}"
        )));
    }
    let maxval = maxval as f64;
    let data: Vec<f64> = if channels == 1 {
        samples.iter().map(|&v| v as f64 / maxval).collect()
    } else {
        samples
            .chunks_exact(3)
            .map(|p| {
                let luma = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                (luma / maxval).clamp(0.0, 1.0)
            })
            .collect()
    };
    GrayImage::new(width, height, data)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::MalformedHeader(format!("{what} out of range")))
    }
}

/// Sampled, renormalized 1-D Gaussian with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian convolution with edge-clamped borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage, ImageError> {
    if sigma.is_nan() || sigma <= 0.0 || !sigma.is_finite() {
        return Err(ImageError::InvalidSigma(sigma));
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * row[sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    // rounding can push a convex combination a hair outside [0, 1]
    out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(GrayImage {
        width: w,
        height: h,
        data: out,
    })
}

/// Keeps every second pixel in both directions.
pub fn downsample_half(img: &GrayImage) -> Result<GrayImage, ImageError> {
    if img.width < 2 || img.height < 2 {
        return Err(ImageError::TooSmall {
            width: img.width,
            height: img.height,
        });
    }
    let (w, h) = (img.width / 2, img.height / 2);
    Ok(GrayImage::from_fn(w, h, |x, y| img.get(2 * x, 2 * y)))
}

pub fn subtract(a: &GrayImage, b: &GrayImage) -> Result<DiffImage, ImageError> {
    if a.width != b.width || a.height != b.height {
        return Err(ImageError::DimensionMismatch(
            a.width, a.height, b.width, b.height,
        ));
    }
    Ok(DiffImage {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(w: usize, h: usize, v: &[f64]) -> GrayImage {
        GrayImage::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn decodes_ascii_pgm() {
        let img = decode_pnm(b"P2\n# made by hand\n2 2\n255\n0 255\n255 0\n").unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn decodes_white_p6() {
        let mut bytes = b"P6 3 2 255\n".to_vec();
        bytes.extend(std::iter::repeat_n(255u8, 18));
        let img = decode_pnm(&bytes).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ascii_ppm_uses_luma_weights() {
        let img = decode_pnm(b"P3\n1 1\n255\n255 0 0\n").unwrap();
        assert!((img.get(0, 0) - 0.299).abs() < 1e-6);
    }

    #[test]
    fn sixteen_bit_p5() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0x00, 0x00]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0]);
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(
            decode_pnm(b"P7\n1 1\n255\n"),
            Err(ImageError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_pnm(b"GIF89a"),
            Err(ImageError::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_pnm(b"P5\n2 x\n255\n"),
            Err(ImageError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pnm(b"P5\n2 2\n255\n\x00\x01"),
            Err(ImageError::MalformedData(_))
        ));
        assert!(matches!(
            decode_pnm(b"P2\n1 1\n10\n11\n"),
            Err(ImageError::MalformedData(_))
        ));
        assert!(matches!(
            load_image("/definitely/not/here.pgm"),
            Err(ImageError::Io { .. })
        ));
    }

    #[test]
    fn p5_roundtrip_is_bit_exact() {
        let img = GrayImage::from_fn(7, 5, |x, y| ((x * 37 + y * 11) % 256) as f64 / 255.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        img.save_pgm(&path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);
        back.save_pgm(dir.path().join("b.pgm")).unwrap();
        assert_eq!(
            fs::read(&path).unwrap(),
            fs::read(dir.path().join("b.pgm")).unwrap()
        );
    }

    #[test]
    fn blur_preserves_constants() {
        let img = GrayImage::filled(17, 9, 0.5);
        for sigma in [0.3, 1.0, 2.5, 7.0] {
            let b = gaussian_blur(&img, sigma).unwrap();
            assert!(b.data().iter().all(|v| (v - 0.5).abs() < 1e-9));
        }
        let one = p(1, 1, &[0.25]);
        assert!((gaussian_blur(&one, 2.0).unwrap().get(0, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn blur_of_impulse_matches_gaussian_peak() {
        let img = GrayImage::from_fn(21, 21, |x, y| if x == 10 && y == 10 { 1.0 } else { 0.0 });
        let b = gaussian_blur(&img, 1.0).unwrap();
        assert!((b.get(10, 10) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 0.002);
    }

    #[test]
    fn blur_rejects_bad_sigma() {
        let img = GrayImage::filled(3, 3, 0.0);
        assert!(matches!(
            gaussian_blur(&img, 0.0),
            Err(ImageError::InvalidSigma(_))
        ));
        assert!(matches!(
            gaussian_blur(&img, -1.0),
            Err(ImageError::InvalidSigma(_))
        ));
        assert!(gaussian_blur(&img, f64::NAN).is_err());
    }

    #[test]
    fn downsample_takes_even_samples() {
        let checker = GrayImage::from_fn(4, 4, |x, y| ((x + y + 1) % 2) as f64);
        let d = downsample_half(&checker).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
        assert!(d.data().iter().all(|&v| v == 1.0));
        let odd = GrayImage::filled(5, 3, 0.3);
        let d = downsample_half(&odd).unwrap();
        assert_eq!((d.width(), d.height()), (2, 1));
        assert!(d.data().iter().all(|&v| v == 0.3));
        assert!(matches!(
            downsample_half(&GrayImage::filled(1, 5, 0.0)),
            Err(ImageError::TooSmall { .. })
        ));
    }

    #[test]
    fn subtract_cases() {
        let a = GrayImage::filled(3, 2, 1.0);
        let b = GrayImage::filled(3, 2, 0.0);
        assert!(subtract(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(subtract(&a, &b).unwrap().data().iter().all(|&v| v == 1.0));
        let d = subtract(&p(1, 1, &[0.7]), &p(1, 1, &[0.2])).unwrap();
        assert!((d.get(0, 0) - 0.5).abs() < 1e-12);
        assert!(matches!(
            subtract(&a, &GrayImage::filled(2, 3, 0.0)),
            Err(ImageError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn constructor_validates() {
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(0, 1, vec![]).is_err());
        assert!(BinaryImage::new(1, 1, vec![2]).is_err());
    }

    #[test]
    fn crop_clips_to_image() {
        let img = GrayImage::from_fn(6, 4, |x, y| (x + 10 * y) as f64 / 40.0);
        let c = img.crop(Rect::new(4, 2, 10, 10)).unwrap();
        assert_eq!((c.width(), c.height()), (2, 2));
        assert_eq!(c.get(1, 1), img.get(5, 3));
        assert!(img.crop(Rect::new(6, 0, 2, 2)).is_err());
    }
}
