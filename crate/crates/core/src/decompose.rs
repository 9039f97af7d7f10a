//! Cartoon-texture split of a slice by a nonlinear low-pass/high-pass pair.
//!
//! Each pixel is classified by how much its local total variation (LTV)
//! drops when the image is Gaussian-smoothed. Oscillatory content (noise,
//! fine texture) loses most of its LTV under smoothing and is replaced by the
//! smoothed value; edges and flat areas keep theirs and pass through
//! unchanged. The texture is whatever the cartoon leaves behind, so
//! `cartoon + texture == input` holds by construction.

use thiserror::Error;

use crate::image::{ForegroundMask, PixelGrid};

/// LTV values at or below this are treated as flat.
const FLAT_LTV: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DecomposeError {
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("rates must satisfy 0 < lower < upper < 1, got ({0}, {1})")]
    BadRates(f64, f64),
    #[error("texture and mask dimensions differ")]
    ShapeMismatch,
    #[error("mask selects no pixels")]
    EmptyMask,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DecomposeParams {
    /// Gaussian scale in pixels.
    pub sigma: f64,
    pub lower_rate: f64,
    pub upper_rate: f64,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            lower_rate: 0.25,
            upper_rate: 0.5,
        }
    }
}

impl DecomposeParams {
    pub fn validate(&self) -> Result<(), DecomposeError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(DecomposeError::BadSigma(self.sigma));
        }
        let (lo, hi) = (self.lower_rate, self.upper_rate);
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(DecomposeError::BadRates(lo, hi));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub cartoon: PixelGrid,
    pub texture: PixelGrid,
}

/// Truncated, unit-sum Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let two_s2 = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / two_s2).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur with clamp-to-edge boundaries.
pub fn gaussian_blur(grid: &PixelGrid, sigma: f64) -> PixelGrid {
    let taps = gaussian_kernel(sigma);
    let r = (taps.len() / 2) as isize;
    let (w, h) = (grid.width(), grid.height());

    let mut rows = PixelGrid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * grid.get(clamp_index(x as isize + k as isize - r, w), y);
            }
            rows.set(x, y, acc);
        }
    }
    let mut out = PixelGrid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows.get(x, clamp_index(y as isize + k as isize - r, h));
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Forward-difference gradient magnitude; the difference past the last
/// row/column is zero (replicate boundary).
pub fn gradient_magnitude(grid: &PixelGrid) -> PixelGrid {
    let (w, h) = (grid.width(), grid.height());
    PixelGrid::from_fn(w, h, |x, y| {
        let v = grid.get(x, y);
        let dx = grid.get((x + 1).min(w - 1), y) - v;
        let dy = grid.get(x, (y + 1).min(h - 1)) - v;
        dx.hypot(dy)
    })
}

/// `G_sigma * |grad grid|`.
pub fn local_total_variation(grid: &PixelGrid, sigma: f64) -> PixelGrid {
    gaussian_blur(&gradient_magnitude(grid), sigma)
}

/// Blend weight toward the smoothed image for one pixel.
fn blend_weight(ltv: f64, ltv_smoothed: f64, params: &DecomposeParams) -> f64 {
    if ltv <= FLAT_LTV {
        return 0.0;
    }
    let reduction = (ltv - ltv_smoothed) / ltv;
    ((reduction - params.lower_rate) / (params.upper_rate - params.lower_rate)).clamp(0.0, 1.0)
}

pub fn decompose(
    grid: &PixelGrid,
    params: &DecomposeParams,
) -> Result<Decomposition, DecomposeError> {
    params.validate()?;
    let smoothed = gaussian_blur(grid, params.sigma);
    let ltv = local_total_variation(grid, params.sigma);
    let ltv_smoothed = local_total_variation(&smoothed, params.sigma);

    let cartoon_data: Vec<f64> = (0..grid.len())
        .map(|p| {
            let weight = blend_weight(ltv.data()[p], ltv_smoothed.data()[p], params);
            weight * smoothed.data()[p] + (1.0 - weight) * grid.data()[p]
        })
        .collect();
    let cartoon =
        PixelGrid::new(grid.width(), grid.height(), cartoon_data).expect("shape preserved");
    let texture = grid.zip_map(&cartoon, |g, c| g - c);
    Ok(Decomposition { cartoon, texture })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TextureStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn texture_statistics(
    texture: &PixelGrid,
    mask: &ForegroundMask,
) -> Result<TextureStats, DecomposeError> {
    if !mask.matches(texture) {
        return Err(DecomposeError::ShapeMismatch);
    }
    let values: Vec<f64> = texture
        .data()
        .iter()
        .zip(mask.flags())
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect();
    if values.is_empty() {
        return Err(DecomposeError::EmptyMask);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(TextureStats {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count: values.len(),
    })
}
