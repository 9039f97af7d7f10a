use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::basis::{BasisSet, BiasCoeffs};
use crate::image::PixelGrid;

/// Rows of `u` must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Solver parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Weight of the texture-distance penalty.
    pub mu: f64,
    /// Clamp for the penalty weights, `gamma_p` in `[epsilon, 1/epsilon]`.
    pub epsilon: f64,
    /// Augmented-Lagrangian penalty.
    pub rho: f64,
    pub n_classes: usize,
    pub basis_order: usize,
    pub max_iter: usize,
    pub history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl SolverConfig {
    /// Parameters used for the reported brain-slice experiments.
    pub fn paper() -> Self {
        Self {
            mu: 1e-2,
            epsilon: 1e-13,
            rho: 10.0,
            n_classes: 3,
            basis_order: 3,
            max_iter: 30,
            history: true,
        }
    }

    /// A regime where the monotone-decrease guarantee applies:
    /// `epsilon = 0.1` and `rho` one above the lower bound.
    pub fn theory() -> Self {
        let (mu, epsilon) = (1e-2, 0.1);
        Self {
            mu,
            epsilon,
            rho: super::rho_lower_bound(mu, epsilon, 0.0) + 1.0,
            ..Self::paper()
        }
    }

    /// Plain multiplicative-intrinsic-component baseline: no texture penalty.
    pub fn mico(&self) -> Self {
        Self {
            mu: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Config(msg));
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0,1), got {}", self.epsilon));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be > 0, got {}", self.rho));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        if !(2..=16).contains(&self.n_classes) {
            return bad(format!(
                "n_classes must lie in 2..=16, got {}",
                self.n_classes
            ));
        }
        Ok(())
    }
}

/// Fuzzy memberships, one simplex row of length `N` per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipField {
    n: usize,
    values: Vec<f64>,
}

impl MembershipField {
    pub fn new(n: usize, values: Vec<f64>) -> Self {
        assert!(n > 0 && values.len().is_multiple_of(n), "membership shape");
        Self { n, values }
    }

    /// Hard assignment of every pixel to class `labels[p]`.
    pub fn from_labels(n: usize, labels: &[usize]) -> Self {
        let mut values = vec![0.0; n * labels.len()];
        for (p, &l) in labels.iter().enumerate() {
            values[p * n + l] = 1.0;
        }
        Self { n, values }
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.values.len() / self.n
    }

    #[inline]
    pub fn row(&self, p: usize) -> &[f64] {
        &self.values[p * self.n..(p + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.values[p * self.n..(p + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest violation of the simplex constraints over all rows.
    pub fn simplex_violation(&self) -> f64 {
        self.values
            .chunks_exact(self.n)
            .map(|row| {
                let sum_err = (row.iter().sum::<f64>() - 1.0).abs();
                let bound_err = row
                    .iter()
                    .map(|&x| (-x).max(x - 1.0).max(0.0))
                    .fold(0.0, f64::max);
                sum_err.max(bound_err)
            })
            .fold(0.0, f64::max)
    }

    pub fn on_simplex(&self) -> bool {
        self.simplex_violation() <= SIMPLEX_TOL
    }
}

/// Tissue intensities `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMeans(pub Vec<f64>);

impl ClassMeans {
    /// Evenly spaced levels `0.99 (i+1)/N`; for three classes 0.33, 0.66, 0.99.
    pub fn evenly_spaced(n: usize) -> Self {
        if n == 3 {
            return Self(vec![0.33, 0.66, 0.99]);
        }
        Self((1..=n).map(|i| 0.99 * i as f64 / n as f64).collect())
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn dot(&self, u: &[f64]) -> f64 {
        self.0.iter().zip(u).map(|(c, x)| c * x).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextureIterate(pub Vec<f64>);

/// `zeta = lambda / rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledMultipliers(pub Vec<f64>);

/// Diagonal of the penalty weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaWeights(pub Vec<f64>);

/// Rank deficiency encountered in a normal-equation solve.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub singular: bool,
    /// Unknowns with an (almost) zero diagonal in the normal matrix.
    pub flagged: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub aug_lagrangian: f64,
    pub constraint_residual: f64,
    pub image_change: f64,
    pub multiplier_change: f64,
    pub c_norm: f64,
    pub w_norm: f64,
    pub v_norm: f64,
}

impl IterationRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.objective,
            self.aug_lagrangian,
            self.constraint_residual,
            self.image_change,
            self.multiplier_change,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// The data an ADMM run operates on.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    /// Cartoon image the multiaffine constraint is fitted to.
    pub ibar: &'a PixelGrid,
    /// Texture estimate the `v` iterate is pulled toward.
    pub vbar: &'a PixelGrid,
    pub basis: &'a BasisSet,
}

impl<'a> Problem<'a> {
    pub fn new(
        ibar: &'a PixelGrid,
        vbar: &'a PixelGrid,
        basis: &'a BasisSet,
    ) -> Result<Self, SolverError> {
        if !ibar.same_shape(vbar)
            || basis.width() != ibar.width()
            || basis.height() != ibar.height()
        {
            return Err(SolverError::ShapeMismatch);
        }
        Ok(Self { ibar, vbar, basis })
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.ibar.len()
    }
}

/// All ADMM iterates plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub u: MembershipField,
    pub c: ClassMeans,
    pub w: BiasCoeffs,
    pub v: TextureIterate,
    pub zeta: ScaledMultipliers,
    pub gamma: GammaWeights,
    pub iter: usize,
    pub history: Vec<IterationRecord>,
    pub c_degeneracy: Degeneracy,
    pub w_degeneracy: Degeneracy,
}

impl AdmmState {
    /// Standard starting point: evenly spaced class means, hard memberships
    /// by thresholding the cartoon at those means, unit bias, zero texture
    /// and zero multipliers.
    pub fn initial(problem: &Problem<'_>, config: &SolverConfig) -> Self {
        let n = config.n_classes;
        let c = ClassMeans::evenly_spaced(n);
        let labels: Vec<usize> = problem
            .ibar
            .data()
            .iter()
            .map(|&v| c.0[..n - 1].iter().take_while(|&&level| v > level).count())
            .collect();
        let pixels = problem.pixels();
        Self {
            u: MembershipField::from_labels(n, &labels),
            c,
            w: BiasCoeffs::unit(problem.basis.m()),
            v: TextureIterate(vec![0.0; pixels]),
            zeta: ScaledMultipliers(vec![0.0; pixels]),
            gamma: super::compute_gamma(problem.vbar, config.epsilon),
            iter: 0,
            history: Vec::new(),
            c_degeneracy: Degeneracy::default(),
            w_degeneracy: Degeneracy::default(),
        }
    }

    /// Tissue image `J_p = c^T u_p`.
    pub fn tissue_values(&self) -> Vec<f64> {
        (0..self.u.pixels())
            .map(|p| self.c.dot(self.u.row(p)))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.u.values().iter().all(|x| x.is_finite())
            && self.c.0.iter().all(|x| x.is_finite())
            && self.w.0.iter().all(|x| x.is_finite())
            && self.v.0.iter().all(|x| x.is_finite())
            && self.zeta.0.iter().all(|x| x.is_finite())
    }
}
