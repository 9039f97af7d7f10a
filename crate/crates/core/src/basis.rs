//! Tensor-product Legendre basis for smooth bias fields.
//!
//! Images are indexed by `(i, j)` pairs of x- and y-degree with
//! `i + j <= order`, ordered by total degree and then by x-degree, so the
//! first image is always the constant `P_0 P_0 = 1`.

use thiserror::Error;

use crate::image::PixelGrid;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("basis grid must be at least 2x2, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("pixel index {index} out of range for {len} pixels")]
    PixelOutOfRange { index: usize, len: usize },
    #[error("expected {expected} coefficients, got {found}")]
    CoefficientCount { expected: usize, found: usize },
}

/// Legendre polynomial `P_degree(t)` by the three-term recurrence.
pub fn legendre(degree: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if degree == 0 {
        return prev;
    }
    for k in 1..degree {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * t * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Maps pixel index `0..n` affinely onto `[-1, 1]`.
#[inline]
fn unit_coordinate(i: usize, n: usize) -> f64 {
    2.0 * i as f64 / (n - 1) as f64 - 1.0
}

/// Number of basis images for a given total order.
pub fn basis_size(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// `(x_degree, y_degree)` of every basis image, in storage order.
pub fn degree_pairs(order: usize) -> Vec<(usize, usize)> {
    (0..=order)
        .flat_map(|total| (0..=total).map(move |i| (i, total - i)))
        .collect()
}

/// The `M` basis images sampled at every pixel.
///
/// Storage is pixel-major: the `M` values of pixel `p` (the vector `G_p`)
/// are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSet {
    width: usize,
    height: usize,
    order: usize,
    degrees: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl BasisSet {
    pub fn legendre(width: usize, height: usize, order: usize) -> Result<Self, BasisError> {
        if width < 2 || height < 2 {
            return Err(BasisError::TooSmall(width, height));
        }
        let degrees = degree_pairs(order);
        let px: Vec<Vec<f64>> = (0..width)
            .map(|x| {
                let t = unit_coordinate(x, width);
                (0..=order).map(|k| legendre(k, t)).collect()
            })
            .collect();
        let py: Vec<Vec<f64>> = (0..height)
            .map(|y| {
                let t = unit_coordinate(y, height);
                (0..=order).map(|k| legendre(k, t)).collect()
            })
            .collect();
        let mut values = Vec::with_capacity(width * height * degrees.len());
        for ly in &py {
            for lx in &px {
                values.extend(degrees.iter().map(|&(i, j)| lx[i] * ly[j]));
            }
        }
        Ok(Self {
            width,
            height,
            order,
            degrees,
            values,
        })
    }

    /// Basis size `M`.
    #[inline]
    pub fn m(&self) -> usize {
        self.degrees.len()
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
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
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn degrees(&self) -> &[(usize, usize)] {
        &self.degrees
    }

    /// `G_p` without bounds reporting; panics on a bad index.
    #[inline]
    pub fn row(&self, p: usize) -> &[f64] {
        let m = self.m();
        &self.values[p * m..(p + 1) * m]
    }

    pub fn basis_vector_at(&self, p: usize) -> Result<&[f64], BasisError> {
        if p >= self.pixels() {
            return Err(BasisError::PixelOutOfRange {
                index: p,
                len: self.pixels(),
            });
        }
        Ok(self.row(p))
    }

    /// The `j`-th basis image `g^j`.
    pub fn image(&self, j: usize) -> PixelGrid {
        let data = (0..self.pixels()).map(|p| self.row(p)[j]).collect();
        PixelGrid::new(self.width, self.height, data).expect("basis shape")
    }

    /// `w^T G_p` at one pixel.
    #[inline]
    pub fn bias_at(&self, w: &[f64], p: usize) -> f64 {
        self.row(p).iter().zip(w).map(|(g, c)| g * c).sum()
    }

    /// Bias field values `w^T G_p` for every pixel.
    pub fn bias_values(&self, w: &[f64]) -> Vec<f64> {
        (0..self.pixels()).map(|p| self.bias_at(w, p)).collect()
    }

    pub fn eval_bias(&self, w: &BiasCoeffs) -> Result<PixelGrid, BasisError> {
        if w.len() != self.m() {
            return Err(BasisError::CoefficientCount {
                expected: self.m(),
                found: w.len(),
            });
        }
        Ok(
            PixelGrid::new(self.width, self.height, self.bias_values(w.as_slice()))
                .expect("basis shape"),
        )
    }
}

/// Bias coefficients `w`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BiasCoeffs(pub Vec<f64>);

impl BiasCoeffs {
    /// Coefficients of the constant field `b == 1`.
    pub fn unit(m: usize) -> Self {
        let mut w = vec![0.0; m];
        w[0] = 1.0;
        Self(w)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
