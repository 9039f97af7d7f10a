//! Grayscale slices, foreground masks and binary PGM (P5) I/O.
//!
//! Pixels are stored row-major with the origin at the top-left corner, so
//! pixel `(x, y)` lives at index `y * width + x`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

/// Default background threshold on normalized intensity.
pub const DEFAULT_BACKGROUND_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("unsupported bit depth (maxval {0})")]
    UnsupportedBitDepth(u32),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("data length {len} does not match {width}x{height}")]
    LengthMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("non-finite value at pixel {0}")]
    NonFinite(usize),
}

/// A real-valued 2D scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty grid");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels P.
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape(&self, other: &PixelGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PixelGrid {
        PixelGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two grids of equal shape.
    pub fn zip_map(&self, other: &PixelGrid, f: impl Fn(f64, f64) -> f64) -> PixelGrid {
        assert!(self.same_shape(other), "grid shape mismatch");
        PixelGrid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Population variance over all pixels.
    pub fn variance(&self) -> f64 {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        self.data
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n
    }

    /// Anisotropic total variation with forward differences.
    pub fn total_variation(&self) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut tv = 0.0;
        for y in 0..h {
            for x in 0..w {
                let v = self.get(x, y);
                if x + 1 < w {
                    tv += (self.get(x + 1, y) - v).abs();
                }
                if y + 1 < h {
                    tv += (self.get(x, y + 1) - v).abs();
                }
            }
        }
        tv
    }

    fn check_finite(&self) -> Result<(), ImageError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(ImageError::NonFinite(p)),
            None => Ok(()),
        }
    }
}

/// Per-pixel tissue flag (`true` = tissue, `false` = background).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForegroundMask {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(width: usize, height: usize, flags: Vec<bool>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || flags.len() != width * height {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                len: flags.len(),
            });
        }
        Ok(Self {
            width,
            height,
            flags,
        })
    }

    pub fn all(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            flags: vec![true; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    #[inline]
    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    #[inline]
    pub fn is_foreground(&self, p: usize) -> bool {
        self.flags[p]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn matches(&self, grid: &PixelGrid) -> bool {
        self.width == grid.width() && self.height == grid.height()
    }
}

/// Affine map of `[min, max]` onto `[0, 1]`; a constant grid maps to zeros.
pub fn normalize(grid: &PixelGrid) -> Result<PixelGrid, ImageError> {
    grid.check_finite()?;
    let (lo, hi) = (grid.min(), grid.max());
    let span = hi - lo;
    if span <= 0.0 {
        return Ok(PixelGrid::zeros(grid.width(), grid.height()));
    }
    Ok(grid.map(|v| ((v - lo) / span).clamp(0.0, 1.0)))
}

/// Flags pixels strictly brighter than `threshold`.
pub fn foreground_mask(grid: &PixelGrid, threshold: f64) -> ForegroundMask {
    ForegroundMask {
        width: grid.width(),
        height: grid.height(),
        flags: grid.data().iter().map(|&v| v > threshold).collect(),
    }
}

/// Raw sample values of a decoded 8- or 16-bit grayscale image.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

impl RawImage {
    pub fn to_grid(&self) -> PixelGrid {
        PixelGrid {
            width: self.width,
            height: self.height,
            data: self.samples.iter().map(|&s| f64::from(s)).collect(),
        }
    }
}

/// Loads a binary PGM (P5) or 8-bit grayscale PNG, returning raw intensities.
pub fn load_image(path: impl AsRef<Path>) -> Result<PixelGrid, ImageError> {
    Ok(load_raw(path)?.to_grid())
}

/// Like [`load_image`] but divides every sample by the file's maxval.
pub fn load_image_unit(path: impl AsRef<Path>) -> Result<PixelGrid, ImageError> {
    let raw = load_raw(path)?;
    let scale = f64::from(raw.maxval);
    Ok(raw.to_grid().map(|v| v / scale))
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<RawImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        Err(ImageError::UnsupportedFormat(
            "expected binary PGM (P5) or PNG".into(),
        ))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::MalformedHeader(format!("invalid {what}")))
    }
}

/// Decodes a binary PGM byte stream.
pub fn decode_pgm(bytes: &[u8]) -> Result<RawImage, ImageError> {
    if !bytes.starts_with(b"P5") {
        return Err(ImageError::MalformedHeader("magic is not P5".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::UnsupportedBitDepth(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(ImageError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let pixels = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::MalformedHeader("dimensions overflow".into()))?;
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let expected = pixels * bytes_per_sample;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(ImageError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let samples = if bytes_per_sample == 1 {
        payload[..expected].iter().map(|&b| u16::from(b)).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(RawImage {
        width,
        height,
        maxval,
        samples,
    })
}

fn decode_png(bytes: &[u8]) -> Result<RawImage, ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::UnsupportedFormat(format!("png: {e}")))?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            Ok(RawImage {
                width: w as usize,
                height: h as usize,
                maxval: 255,
                samples: gray.into_raw().into_iter().map(u16::from).collect(),
            })
        }
        other => Err(ImageError::UnsupportedFormat(format!(
            "png color type {:?}; only 8-bit grayscale is read",
            other.color()
        ))),
    }
}

/// Quantizes a value in `[0, 1]` to a byte, clamping and rounding half up.
#[inline]
pub fn quantize_unit(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encodes 8-bit samples as a binary PGM stream.
pub fn encode_pgm(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    debug_assert_eq!(samples.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

pub fn write_pgm_bytes(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    samples: &[u8],
) -> Result<(), ImageError> {
    let path = path.as_ref();
    let io_err = |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&encode_pgm(width, height, samples))
        .map_err(io_err)
}

/// Writes `grid` as an 8-bit P5 PGM after clamping to `[0, 1]`.
pub fn save_image(grid: &PixelGrid, path: impl AsRef<Path>) -> Result<(), ImageError> {
    grid.check_finite()?;
    let samples: Vec<u8> = grid.data().iter().map(|&v| quantize_unit(v)).collect();
    write_pgm_bytes(path, grid.width(), grid.height(), &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pgm(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn decodes_8bit_pgm() {
        let raw = decode_pgm(&pgm("P5\n2 2\n255\n", &[0, 128, 255, 64])).unwrap();
        assert_eq!(raw.to_grid().data(), &[0.0, 128.0, 255.0, 64.0]);
    }

    #[test]
    fn decodes_header_comments_and_16bit() {
        let raw = decode_pgm(&pgm(
            "P5 # comment\n# more\n2 1\n65535\n",
            &[0x01, 0x00, 0xff, 0xff],
        ))
        .unwrap();
        assert_eq!(raw.maxval, 65535);
        assert_eq!(raw.samples, vec![256, 65535]);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let err = decode_pgm(&pgm("P5\n2 2\n255\n", &[1, 2, 3])).unwrap_err();
        assert!(matches!(
            err,
            ImageError::TruncatedPayload {
                expected: 4,
                found: 3
            }
        ));
    }

    #[test]
    fn header_errors_are_distinct() {
        assert!(matches!(
            decode_pgm(b"P5\n2\n"),
            Err(ImageError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n70000\n\0\0"),
            Err(ImageError::UnsupportedBitDepth(70000))
        ));
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n0"),
            Err(ImageError::MalformedHeader(_))
        ));
    }

    #[test]
    fn slice_sized_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slice.pgm");
        write_pgm_bytes(&path, 181, 127, &vec![7u8; 181 * 127]).unwrap();
        let g = load_image(&path).unwrap();
        assert_eq!(g.len(), 22987);
        assert_eq!((g.width(), g.height()), (181, 127));
    }

    #[test]
    fn save_quantizes_half_up_and_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.pgm");
        let g = PixelGrid::new(5, 1, vec![0.0, 0.5, 1.0, 0.25, 1.7]).unwrap();
        save_image(&g, &path).unwrap();
        let raw = load_raw(&path).unwrap();
        assert_eq!(raw.samples, vec![0, 128, 255, 64, 255]);
    }

    #[test]
    fn zeros_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.pgm");
        let g = PixelGrid::zeros(4, 3);
        save_image(&g, &path).unwrap();
        assert_eq!(load_image_unit(&path).unwrap(), g);
    }

    #[test]
    fn save_rejects_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let g = PixelGrid::new(2, 1, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            save_image(&g, dir.path().join("x.pgm")),
            Err(ImageError::NonFinite(1))
        ));
    }

    #[test]
    fn unwritable_path_errors() {
        let g = PixelGrid::zeros(1, 1);
        assert!(matches!(
            save_image(&g, "/nonexistent-dir/x.pgm"),
            Err(ImageError::Io { .. })
        ));
    }

    #[test]
    fn png_grayscale_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        image::GrayImage::from_raw(2, 1, vec![10, 200])
            .unwrap()
            .save(&path)
            .unwrap();
        assert_eq!(load_image(&path).unwrap().data(), &[10.0, 200.0]);
    }

    #[test]
    fn normalize_examples() {
        let g = PixelGrid::new(3, 1, vec![10.0, 20.0, 30.0]).unwrap();
        assert_eq!(normalize(&g).unwrap().data(), &[0.0, 0.5, 1.0]);
        let c = PixelGrid::new(3, 1, vec![5.0; 3]).unwrap();
        assert_eq!(normalize(&c).unwrap().data(), &[0.0; 3]);
        let u = PixelGrid::new(3, 1, vec![0.0, 0.3, 1.0]).unwrap();
        assert_eq!(normalize(&u).unwrap(), u);
        let bad = PixelGrid::new(2, 1, vec![0.0, f64::INFINITY]).unwrap();
        assert!(matches!(normalize(&bad), Err(ImageError::NonFinite(1))));
    }

    #[test]
    fn mask_examples() {
        let g = PixelGrid::new(3, 1, vec![0.0, 0.005, 0.5]).unwrap();
        assert_eq!(
            foreground_mask(&g, DEFAULT_BACKGROUND_THRESHOLD).flags(),
            &[false, false, true]
        );
        assert_eq!(foreground_mask(&PixelGrid::zeros(3, 1), 0.01).count(), 0);
        assert_eq!(foreground_mask(&g, -1.0).count(), 3);
    }

    proptest! {
        #[test]
        fn save_load_round_trip(values in prop::collection::vec(0.0f64..=1.0, 1..64)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.pgm");
            let g = PixelGrid::new(values.len(), 1, values).unwrap();
            save_image(&g, &path).unwrap();
            let back = load_image_unit(&path).unwrap();
            for (a, b) in g.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 255.0);
            }
        }

        #[test]
        fn normalize_is_idempotent(values in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let g = PixelGrid::new(values.len(), 1, values).unwrap();
            let once = normalize(&g).unwrap();
            let twice = normalize(&once).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(a));
            }
        }
    }
}
