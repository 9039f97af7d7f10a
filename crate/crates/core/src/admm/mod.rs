//! Multiaffine ADMM for joint bias correction and denoising.
//!
//! The cartoon image is modelled as `b_p (c^T u_p) + v_p`, where `b = G^T w`
//! is a smooth bias field, `c` holds the tissue intensities, `u_p` is a
//! fuzzy membership row on the probability simplex and `v` is a residual
//! texture pulled toward an independent texture estimate.

mod diagnostics;
mod normal;
mod simplex;
mod solver;
mod state;
mod updates;

use thiserror::Error;

pub use diagnostics::{
    check_multiplier_increase, check_v_decrease, lipschitz_bound, multiplier_identity_error,
    rho_lower_bound, strong_convexity_bound, LagrangianChange,
};
pub use normal::{NormalEquations, RIDGE};
pub use simplex::{pixel_objective, solve_pixel};
pub use solver::{run, Solver, SolverOutput, StageLagrangians, StepTrace};
pub use state::{
    AdmmState, ClassMeans, Degeneracy, GammaWeights, IterationRecord, MembershipField, Problem,
    ScaledMultipliers, SolverConfig, TextureIterate, SIMPLEX_TOL,
};
pub use updates::{
    augmented_lagrangian, compute_gamma, constraint_map, constraint_residual, objective,
    texture_penalty, texture_penalty_grad, update_c, update_multipliers, update_u, update_v,
    update_w, v_closed_form,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("cartoon, texture and basis dimensions differ")]
    ShapeMismatch,
    #[error("iterates became non-finite at iteration {iter}")]
    Divergence {
        iter: usize,
        last: Option<IterationRecord>,
    },
}
