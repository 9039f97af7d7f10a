//! Tissue label maps, 1D K-means clustering and label PGM I/O.
//!
//! Labels are ordered by intensity: label 0 is the darkest class (CSF),
//! then GM, then WM for three classes.

use std::path::Path;

use thiserror::Error;

use crate::admm::MembershipField;
use crate::image::{load_raw, write_pgm_bytes, ForegroundMask, ImageError, PixelGrid};

/// Label value carried by background pixels.
pub const BACKGROUND: u8 = u8::MAX;

/// Upper bound on Lloyd iterations.
pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("need at least {k} foreground pixels, found {found}")]
    TooFewPixels { k: usize, found: usize },
    #[error("cluster count must be at least 2, got {0}")]
    TooFewClusters(usize),
    #[error("initial centroids must be {k} strictly increasing finite values")]
    BadCentroids { k: usize },
    #[error("dimensions differ")]
    ShapeMismatch,
    #[error("class count mismatch: {expected} vs {found}")]
    ClassCount { expected: usize, found: usize },
    #[error("label {label} at pixel {pixel} is not below {n}")]
    LabelOutOfRange { pixel: usize, label: u8, n: usize },
    #[error("pixel {pixel} has value {value}, which is no label level for {n} classes")]
    UnknownLevel { pixel: usize, value: u16, n: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Per-pixel class index in `0..n`, or [`BACKGROUND`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    n_classes: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(
        width: usize,
        height: usize,
        n_classes: usize,
        labels: Vec<u8>,
    ) -> Result<Self, SegmentError> {
        if labels.len() != width * height || width == 0 || height == 0 {
            return Err(SegmentError::ShapeMismatch);
        }
        if n_classes == 0 || n_classes >= BACKGROUND as usize {
            return Err(SegmentError::TooFewClusters(n_classes));
        }
        if let Some((pixel, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l != BACKGROUND && l as usize >= n_classes)
        {
            return Err(SegmentError::LabelOutOfRange {
                pixel,
                label,
                n: n_classes,
            });
        }
        Ok(Self {
            width,
            height,
            n_classes,
            labels,
        })
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
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Class of pixel `p`, `None` on background.
    #[inline]
    pub fn class_at(&self, p: usize) -> Option<usize> {
        match self.labels[p] {
            BACKGROUND => None,
            l => Some(l as usize),
        }
    }

    pub fn foreground(&self) -> ForegroundMask {
        let flags = self.labels.iter().map(|&l| l != BACKGROUND).collect();
        ForegroundMask::new(self.width, self.height, flags).expect("shape")
    }

    /// Number of pixels per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            if l != BACKGROUND {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    /// Gray level used for class `i` in label images.
    pub fn level(i: usize, n_classes: usize) -> u8 {
        (255.0 * (i + 1) as f64 / n_classes as f64).round() as u8
    }

    /// 8-bit rendering: class `i` at `round(255 (i+1)/N)`, background 0.
    pub fn to_gray(&self) -> Vec<u8> {
        self.labels
            .iter()
            .map(|&l| match l {
                BACKGROUND => 0,
                l => Self::level(l as usize, self.n_classes),
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SegmentError> {
        write_pgm_bytes(path, self.width, self.height, &self.to_gray())?;
        Ok(())
    }

    /// Reads a label image written by [`LabelMap::save`].
    pub fn load(path: impl AsRef<Path>, n_classes: usize) -> Result<Self, SegmentError> {
        let raw = load_raw(path)?;
        let scale = 255.0 / raw.maxval as f64;
        let levels: Vec<u8> = (0..n_classes).map(|i| Self::level(i, n_classes)).collect();
        let mut labels = Vec::with_capacity(raw.samples.len());
        for (pixel, &value) in raw.samples.iter().enumerate() {
            let v = (value as f64 * scale).round() as u8;
            if v == 0 {
                labels.push(BACKGROUND);
                continue;
            }
            match levels.iter().position(|&l| l == v) {
                Some(i) => labels.push(i as u8),
                None => {
                    return Err(SegmentError::UnknownLevel {
                        pixel,
                        value,
                        n: n_classes,
                    })
                }
            }
        }
        Self::new(raw.width, raw.height, n_classes, labels)
    }
}

/// Outcome of [`kmeans_segment`].
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: LabelMap,
    /// Centroid of each output label, ascending over nonempty clusters.
    pub centroids: Vec<f64>,
    /// `true` for clusters that ended up without pixels; these come last.
    pub empty: Vec<bool>,
    pub iterations: usize,
    /// Within-cluster sum of squares after every Lloyd iteration.
    pub wcss: Vec<f64>,
}

#[inline]
fn nearest(x: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = (x - centroids[0]).abs();
    for (i, &c) in centroids.iter().enumerate().skip(1) {
        let d = (x - c).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Lloyd's algorithm on the intensities of the foreground pixels.
pub fn kmeans_segment(
    image: &PixelGrid,
    mask: &ForegroundMask,
    k: usize,
    init_centroids: &[f64],
) -> Result<KMeansResult, SegmentError> {
    if k < 2 || k >= BACKGROUND as usize {
        return Err(SegmentError::TooFewClusters(k));
    }
    if init_centroids.len() != k
        || init_centroids.iter().any(|c| !c.is_finite())
        || init_centroids.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(SegmentError::BadCentroids { k });
    }
    if !mask.matches(image) {
        return Err(SegmentError::ShapeMismatch);
    }
    let pixels: Vec<usize> = (0..image.len())
        .filter(|&p| mask.is_foreground(p))
        .collect();
    if pixels.len() < k {
        return Err(SegmentError::TooFewPixels {
            k,
            found: pixels.len(),
        });
    }
    let values: Vec<f64> = pixels.iter().map(|&p| image.data()[p]).collect();

    let mut centroids = init_centroids.to_vec();
    let mut assign = vec![usize::MAX; values.len()];
    let mut wcss = Vec::new();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        let mut changed = false;
        for (a, &x) in assign.iter_mut().zip(&values) {
            let j = nearest(x, &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        iterations += 1;
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &x) in assign.iter().zip(&values) {
            sums[a] += x;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j] / counts[j] as f64;
            }
        }
        wcss.push(
            assign
                .iter()
                .zip(&values)
                .map(|(&a, &x)| (x - centroids[a]).powi(2))
                .sum(),
        );
    }

    let mut counts = vec![0usize; k];
    for &a in &assign {
        counts[a] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    // nonempty clusters by centroid, empty ones after in original order
    order.sort_by(|&a, &b| {
        (counts[a] == 0)
            .cmp(&(counts[b] == 0))
            .then(if counts[a] > 0 && counts[b] > 0 {
                centroids[a].total_cmp(&centroids[b])
            } else {
                a.cmp(&b)
            })
    });
    let mut rank = vec![0u8; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new as u8;
    }
    let mut labels = vec![BACKGROUND; image.len()];
    for (&p, &a) in pixels.iter().zip(&assign) {
        labels[p] = rank[a];
    }
    Ok(KMeansResult {
        labels: LabelMap::new(image.width(), image.height(), k, labels)?,
        centroids: order.iter().map(|&j| centroids[j]).collect(),
        empty: order.iter().map(|&j| counts[j] == 0).collect(),
        iterations,
        wcss,
    })
}

/// Hard labels from fuzzy memberships; ties go to the lower class index.
pub fn argmax_labels(u: &MembershipField, mask: &ForegroundMask) -> Result<LabelMap, SegmentError> {
    if u.pixels() != mask.len() {
        return Err(SegmentError::ShapeMismatch);
    }
    let labels = (0..u.pixels())
        .map(|p| {
            if !mask.is_foreground(p) {
                return BACKGROUND;
            }
            let row = u.row(p);
            let mut best = 0;
            for (i, &x) in row.iter().enumerate().skip(1) {
                if x > row[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(mask.width(), mask.height(), u.n_classes(), labels)
}

/// Foreground pixels carrying `class_index`.
pub fn binary_mask(labels: &LabelMap, class_index: usize) -> Vec<bool> {
    labels
        .labels
        .iter()
        .map(|&l| l != BACKGROUND && l as usize == class_index)
        .collect()
}

/// Fraction of pixels in `mask` where both maps agree.
pub fn agreement(a: &LabelMap, b: &LabelMap, mask: &ForegroundMask) -> f64 {
    let mut total = 0usize;
    let mut same = 0usize;
    for p in 0..a.len() {
        if mask.is_foreground(p) {
            total += 1;
            same += (a.labels[p] == b.labels[p]) as usize;
        }
    }
    if total == 0 {
        return 1.0;
    }
    same as f64 / total as f64
}
