//! Synthetic three-tissue brain-like slices with a smooth multiplicative
//! bias field and Rician noise, plus exact ground truth.
//!
//! Every random quantity comes from a ChaCha stream keyed by the seed:
//! stream `p` feeds the noise of pixel `p`, a reserved stream feeds the
//! geometry and the bias coefficients. Any single pixel can therefore be
//! regenerated in isolation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisSet;
use crate::image::PixelGrid;
use crate::segmentation::{LabelMap, BACKGROUND};

const LAYOUT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("phantom must be at least 16x16, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("tissue levels must be strictly increasing in (0, 1]")]
    BadLevels,
    #[error("tissue fractions must be positive and sum to 1")]
    BadFractions,
    #[error("noise and bias percentages must be finite, >= 0, and bias < 200")]
    BadPercent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    /// Outer CSF ring, GM band with a wavy inner border, WM core.
    NestedEllipses,
    /// Random smooth field thresholded at tissue-fraction quantiles.
    Blobs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    /// Noise std as a percentage of the brightest tissue level.
    pub noise_percent: f64,
    /// Peak-to-peak bias range in percent, centered at 1.
    pub bias_level: f64,
    pub seed: u64,
    pub tissue_levels: [f64; 3],
    /// Area fractions of CSF, GM and WM within the head.
    pub tissue_fractions: [f64; 3],
    pub geometry: Geometry,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 181,
            height: 127,
            noise_percent: 5.0,
            bias_level: 0.0,
            seed: 0,
            tissue_levels: [0.33, 0.66, 0.99],
            tissue_fractions: [0.14, 0.44, 0.42],
            geometry: Geometry::NestedEllipses,
        }
    }
}

impl PhantomSpec {
    pub fn new(noise_percent: f64, bias_level: f64, seed: u64) -> Self {
        Self {
            noise_percent,
            bias_level,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        if self.width < 16 || self.height < 16 {
            return Err(PhantomError::TooSmall(self.width, self.height));
        }
        let l = self.tissue_levels;
        if !(l[0] > 0.0 && l[0] < l[1] && l[1] < l[2] && l[2] <= 1.0) {
            return Err(PhantomError::BadLevels);
        }
        let f = self.tissue_fractions;
        if f.iter().any(|&x| x.is_nan() || x <= 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(PhantomError::BadFractions);
        }
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.noise_percent) || !ok(self.bias_level) || self.bias_level >= 200.0 {
            return Err(PhantomError::BadPercent);
        }
        Ok(())
    }

    /// Rician `sigma` implied by `noise_percent`.
    pub fn sigma(&self) -> f64 {
        self.noise_percent / 100.0 * self.tissue_levels[2]
    }

    pub fn bias_range(&self) -> (f64, f64) {
        (1.0 - self.bias_level / 200.0, 1.0 + self.bias_level / 200.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomInstance {
    pub spec: PhantomSpec,
    /// Piecewise-constant tissue image.
    pub clean: PixelGrid,
    pub gt: LabelMap,
    pub bias: PixelGrid,
    pub corrupted: PixelGrid,
    pub sigma: f64,
}

impl PhantomInstance {
    /// Pixels per tissue, darkest first.
    pub fn tissue_counts(&self) -> Vec<usize> {
        self.gt.class_counts()
    }
}

/// Magnitude of `amplitude` plus complex Gaussian noise.
#[inline]
pub fn rician_sample(amplitude: f64, sigma: f64, draw1: f64, draw2: f64) -> f64 {
    (amplitude + sigma * draw1).hypot(sigma * draw2)
}

/// The two unit-normal draws of pixel `p`.
pub fn pixel_draws(seed: u64, p: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    (rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn layout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(LAYOUT_STREAM);
    rng
}

/// Head ellipse: center and semi-axes in pixels.
fn head(spec: &PhantomSpec) -> (f64, f64, f64, f64) {
    let (w, h) = (spec.width as f64, spec.height as f64);
    ((w - 1.0) / 2.0, (h - 1.0) / 2.0, 0.45 * w, 0.45 * h)
}

struct Wave {
    amp: f64,
    freq: f64,
    phase: f64,
}

fn wavy(base: f64, waves: &[Wave], theta: f64) -> f64 {
    base * (1.0
        + waves
            .iter()
            .map(|w| w.amp * (w.freq * theta + w.phase).sin())
            .sum::<f64>())
}

/// Mean of `r(theta)^2 / base^2` over a full turn.
fn area_factor(waves: &[Wave]) -> f64 {
    1.0 + waves.iter().map(|w| w.amp * w.amp / 2.0).sum::<f64>()
}

fn nested_labels(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (cx, cy, a, b) = head(spec);
    let [csf, _gm, wm] = spec.tissue_fractions;
    let mut phase = || rng.random_range(0.0..2.0 * PI);
    let outer_waves = [Wave {
        amp: 0.02,
        freq: 4.0,
        phase: phase(),
    }];
    let inner_waves = [
        Wave {
            amp: 0.07,
            freq: 7.0,
            phase: phase(),
        },
        Wave {
            amp: 0.035,
            freq: 13.0,
            phase: phase(),
        },
    ];
    // normalized areas: head = 1, inside the GM border 1 - csf, inside the WM border wm
    let r1 = ((1.0 - csf) / area_factor(&outer_waves)).sqrt();
    let r2 = (wm / area_factor(&inner_waves)).sqrt();
    (0..spec.height)
        .flat_map(|y| (0..spec.width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let nx = (x as f64 - cx) / a;
            let ny = (y as f64 - cy) / b;
            let r = nx.hypot(ny);
            if r >= 1.0 {
                return BACKGROUND;
            }
            let theta = ny.atan2(nx);
            if r >= wavy(r1, &outer_waves, theta) {
                return 0;
            }
            if r >= wavy(r2, &inner_waves, theta) {
                return 1;
            }
            2
        })
        .collect()
}

fn blob_labels(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (cx, cy, a, b) = head(spec);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..14)
        .map(|_| {
            (
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(0.15..0.4),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let mut inside = Vec::new();
    let mut field = vec![f64::NAN; spec.width * spec.height];
    for y in 0..spec.height {
        for x in 0..spec.width {
            let nx = (x as f64 - cx) / a;
            let ny = (y as f64 - cy) / b;
            if nx.hypot(ny) >= 1.0 {
                continue;
            }
            let p = y * spec.width + x;
            field[p] = blobs
                .iter()
                .map(|&(bx, by, s, amp)| {
                    amp * (-((nx - bx).powi(2) + (ny - by).powi(2)) / (2.0 * s * s)).exp()
                })
                .sum();
            inside.push(p);
        }
    }
    let mut sorted: Vec<f64> = inside.iter().map(|&p| field[p]).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let [csf, gm, _] = spec.tissue_fractions;
    let t1 = sorted[((csf * n as f64) as usize).min(n - 1)];
    let t2 = sorted[(((csf + gm) * n as f64) as usize).min(n - 1)];
    field
        .iter()
        .map(|&f| {
            if f.is_nan() {
                BACKGROUND
            } else if f < t1 {
                0
            } else if f < t2 {
                1
            } else {
                2
            }
        })
        .collect()
}

/// Random order-3 Legendre field rescaled onto `[lo, hi]`.
fn bias_field(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> PixelGrid {
    let (w, h) = (spec.width, spec.height);
    let basis = BasisSet::legendre(w, h, 3).expect("phantom is at least 16x16");
    let mut coeffs: Vec<f64> = (0..basis.m()).map(|_| rng.sample(StandardNormal)).collect();
    coeffs[0] = 0.0;
    let (lo, hi) = spec.bias_range();
    if spec.bias_level == 0.0 {
        return PixelGrid::filled(w, h, 1.0);
    }
    let raw = basis.bias_values(&coeffs);
    let (fmin, fmax) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = fmax - fmin;
    let data = raw
        .iter()
        .map(|&v| {
            if span > 0.0 {
                lo + (v - fmin) / span * (hi - lo)
            } else {
                1.0
            }
        })
        .collect();
    PixelGrid::new(w, h, data).expect("shape")
}

pub fn generate(spec: &PhantomSpec) -> Result<PhantomInstance, PhantomError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = layout_rng(spec.seed);
    let labels = match spec.geometry {
        Geometry::NestedEllipses => nested_labels(spec, &mut rng),
        Geometry::Blobs => blob_labels(spec, &mut rng),
    };
    let bias = bias_field(spec, &mut rng);
    let clean_data: Vec<f64> = labels
        .iter()
        .map(|&l| match l {
            BACKGROUND => 0.0,
            l => spec.tissue_levels[l as usize],
        })
        .collect();
    let sigma = spec.sigma();
    let corrupted_data: Vec<f64> = clean_data
        .iter()
        .zip(bias.data())
        .enumerate()
        .map(|(p, (&j, &b))| {
            let amplitude = b * j;
            if sigma == 0.0 {
                return amplitude;
            }
            let (d1, d2) = pixel_draws(spec.seed, p);
            rician_sample(amplitude, sigma, d1, d2)
        })
        .collect();
    Ok(PhantomInstance {
        spec: spec.clone(),
        clean: PixelGrid::new(w, h, clean_data).expect("shape"),
        gt: LabelMap::new(w, h, 3, labels).expect("labels below 3"),
        bias,
        corrupted: PixelGrid::new(w, h, corrupted_data).expect("shape"),
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_and_bias_free_is_clean() {
        let inst = generate(&PhantomSpec::new(0.0, 0.0, 1)).unwrap();
        assert_eq!(inst.corrupted, inst.clean);
        assert!(inst.bias.data().iter().all(|&b| b == 1.0));
        assert_eq!(inst.sigma, 0.0);
    }

    #[test]
    fn bias_only_range() {
        let inst = generate(&PhantomSpec::new(0.0, 40.0, 2)).unwrap();
        assert!((inst.bias.min() - 0.8).abs() < 1e-12);
        assert!((inst.bias.max() - 1.2).abs() < 1e-12);
        for p in 0..inst.clean.len() {
            assert_eq!(
                inst.corrupted.data()[p],
                inst.bias.data()[p] * inst.clean.data()[p]
            );
        }
    }

    #[test]
    fn deterministic() {
        let spec = PhantomSpec::new(9.0, 40.0, 77);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let bits = |g: &PixelGrid| g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.corrupted), bits(&b.corrupted));
        let c = generate(&PhantomSpec::new(9.0, 40.0, 78)).unwrap();
        assert_ne!(a.corrupted, c.corrupted);
    }

    #[test]
    fn pixel_reproducible_in_isolation() {
        let spec = PhantomSpec::new(7.0, 20.0, 5);
        let inst = generate(&spec).unwrap();
        for p in [0, 1234, inst.clean.len() - 1] {
            let (d1, d2) = pixel_draws(spec.seed, p);
            let amp = inst.bias.data()[p] * inst.clean.data()[p];
            assert_eq!(
                inst.corrupted.data()[p],
                rician_sample(amp, inst.sigma, d1, d2)
            );
        }
    }

    #[test]
    fn tissue_fractions_close_to_targets() {
        for geometry in [Geometry::NestedEllipses, Geometry::Blobs] {
            for seed in 0..4 {
                let spec = PhantomSpec {
                    geometry,
                    ..PhantomSpec::new(0.0, 0.0, seed)
                };
                let inst = generate(&spec).unwrap();
                let counts = inst.tissue_counts();
                let total: usize = counts.iter().sum();
                assert_eq!(total, inst.gt.foreground().count());
                let frac: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
                assert!((0.12..=0.16).contains(&frac[0]), "{geometry:?} {frac:?}");
                assert!((0.40..=0.48).contains(&frac[1]), "{geometry:?} {frac:?}");
                assert!((0.38..=0.46).contains(&frac[2]), "{geometry:?} {frac:?}");
            }
        }
    }

    #[test]
    fn levels_follow_labels_and_corruption_nonnegative() {
        let inst = generate(&PhantomSpec::new(9.0, 20.0, 3)).unwrap();
        for p in 0..inst.clean.len() {
            let expect = match inst.gt.class_at(p) {
                None => 0.0,
                Some(i) => inst.spec.tissue_levels[i],
            };
            assert_eq!(inst.clean.data()[p], expect);
            assert!(inst.corrupted.data()[p] >= 0.0);
        }
        assert!((inst.sigma - 0.09 * 0.99).abs() < 1e-15);
    }

    #[test]
    fn rician_limits() {
        assert_eq!(rician_sample(0.7, 0.0, 1.3, -2.0), 0.7);
        assert_eq!(rician_sample(-0.7, 0.0, 1.3, -2.0), 0.7);
        assert_eq!(rician_sample(3.0, 1.0, 1.0, 0.0), 4.0);
    }

    #[test]
    fn invalid_specs() {
        let bad_levels = PhantomSpec {
            tissue_levels: [0.5, 0.4, 0.9],
            ..PhantomSpec::default()
        };
        assert!(matches!(
            generate(&bad_levels),
            Err(PhantomError::BadLevels)
        ));
        assert!(matches!(
            generate(&PhantomSpec::new(-1.0, 0.0, 0)),
            Err(PhantomError::BadPercent)
        ));
        let tiny = PhantomSpec {
            width: 4,
            ..PhantomSpec::default()
        };
        assert!(matches!(
            generate(&tiny),
            Err(PhantomError::TooSmall(4, 127))
        ));
    }
}
