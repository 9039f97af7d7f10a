//! Decompose, correct, segment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{self, ClassMeans, IterationRecord, SolverConfig, SolverError, SolverOutput};
use crate::basis::{BasisError, BasisSet};
use crate::decompose::{decompose, DecomposeError, DecomposeParams, Decomposition};
use crate::image::{ForegroundMask, PixelGrid};
use crate::segmentation::{argmax_labels, kmeans_segment, KMeansResult, LabelMap, SegmentError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Cartoon/texture split, then the full solver with the texture penalty.
    #[default]
    Segmict2t,
    /// No decomposition, `mu = 0`, zero texture estimate.
    MicoBaseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Segmict2t => "segmict2t",
            Mode::MicoBaseline => "mico-baseline",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("mask and image dimensions differ")]
    ShapeMismatch,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub mode: Mode,
    pub solver: SolverConfig,
    pub decompose: DecomposeParams,
}

impl PipelineOptions {
    /// Solver settings actually used in `mode`.
    pub fn effective_solver(&self) -> SolverConfig {
        match self.mode {
            Mode::Segmict2t => self.solver.clone(),
            Mode::MicoBaseline => self.solver.mico(),
        }
    }
}

pub struct PipelineResult {
    pub mode: Mode,
    /// Absent in baseline mode.
    pub decomposition: Option<Decomposition>,
    pub solver: SolverOutput,
    pub kmeans: KMeansResult,
    /// Argmax readout of the final memberships.
    pub argmax: LabelMap,
}

impl PipelineResult {
    pub fn labels(&self) -> &LabelMap {
        &self.kmeans.labels
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.solver.state.history
    }

    /// Corrected image clamped to `[0, 1]` for display.
    pub fn corrected_for_output(&self) -> PixelGrid {
        self.solver.corrected.map(|v| v.clamp(0.0, 1.0))
    }
}

/// K-means seeds: sorted solver means, or the standard levels when those
/// are not strictly increasing. [`run_pipeline`] also reseeds from the
/// standard levels when the first pass leaves a cluster empty.
pub fn kmeans_init(c: &ClassMeans) -> Vec<f64> {
    let mut init = c.0.clone();
    init.sort_by(f64::total_cmp);
    if init.iter().all(|x| x.is_finite()) && init.windows(2).all(|w| w[0] < w[1]) {
        init
    } else {
        ClassMeans::evenly_spaced(c.0.len()).0
    }
}

/// Runs all three steps on a normalized image. `mask` selects the pixels
/// that are clustered.
pub fn run_pipeline(
    image: &PixelGrid,
    mask: &ForegroundMask,
    options: &PipelineOptions,
) -> Result<PipelineResult, PipelineError> {
    if !mask.matches(image) {
        return Err(PipelineError::ShapeMismatch);
    }
    let config = options.effective_solver();
    config.validate()?;
    let (w, h) = (image.width(), image.height());
    let decomposition = match options.mode {
        Mode::Segmict2t => Some(decompose(image, &options.decompose)?),
        Mode::MicoBaseline => None,
    };
    let zeros = PixelGrid::zeros(w, h);
    let (ibar, vbar) = match &decomposition {
        Some(d) => (&d.cartoon, &d.texture),
        None => (image, &zeros),
    };
    let basis = BasisSet::legendre(w, h, config.basis_order)?;
    let solver = admm::run(ibar, vbar, &config, &basis)?;
    let init = kmeans_init(&solver.state.c);
    let mut kmeans = kmeans_segment(&solver.corrected, mask, config.n_classes, &init)?;
    let standard = ClassMeans::evenly_spaced(config.n_classes).0;
    if kmeans.empty.iter().any(|&e| e) && init != standard {
        // a seed outside the range of J never attracts pixels
        kmeans = kmeans_segment(&solver.corrected, mask, config.n_classes, &standard)?;
    }
    let argmax = argmax_labels(&solver.state.u, mask)?;
    Ok(PipelineResult {
        mode: options.mode,
        decomposition,
        solver,
        kmeans,
        argmax,
    })
}

pub const HISTORY_HEADER: &str =
    "iter,objective,aug_lagrangian,constraint_residual,image_change,multiplier_change";

/// Per-iteration history as CSV, one row per iteration.
pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.iter,
            r.objective,
            r.aug_lagrangian,
            r.constraint_residual,
            r.image_change,
            r.multiplier_change
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate, PhantomSpec};

    fn small(np: f64, bl: f64) -> crate::phantom::PhantomInstance {
        generate(&PhantomSpec {
            width: 64,
            height: 48,
            ..PhantomSpec::new(np, bl, 9)
        })
        .unwrap()
    }

    #[test]
    fn kmeans_init_fallback() {
        assert_eq!(
            kmeans_init(&ClassMeans(vec![0.9, 0.2, 0.5])),
            vec![0.2, 0.5, 0.9]
        );
        assert_eq!(
            kmeans_init(&ClassMeans(vec![0.5, 0.5, 0.1])),
            vec![0.33, 0.66, 0.99]
        );
    }

    #[test]
    fn history_has_one_row_per_iteration() {
        let inst = small(5.0, 0.0);
        let mask = inst.gt.foreground();
        let opts = PipelineOptions::default();
        let res = run_pipeline(&inst.corrupted, &mask, &opts).unwrap();
        let csv = history_csv(res.history());
        assert_eq!(csv.lines().count(), 31);
        assert_eq!(csv.lines().next(), Some(HISTORY_HEADER));
        assert!(res.decomposition.is_some());
    }

    #[test]
    fn baseline_skips_decomposition() {
        let inst = small(5.0, 0.0);
        let mask = inst.gt.foreground();
        let opts = PipelineOptions {
            mode: Mode::MicoBaseline,
            ..PipelineOptions::default()
        };
        assert_eq!(opts.effective_solver().mu, 0.0);
        let res = run_pipeline(&inst.corrupted, &mask, &opts).unwrap();
        assert!(res.decomposition.is_none());
        assert_eq!(res.mode.as_str(), "mico-baseline");
    }

    #[test]
    fn mask_shape_checked() {
        let inst = small(0.0, 0.0);
        let mask = ForegroundMask::all(3, 3);
        assert!(matches!(
            run_pipeline(&inst.corrupted, &mask, &PipelineOptions::default()),
            Err(PipelineError::ShapeMismatch)
        ));
    }
}
