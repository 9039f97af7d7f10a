//! Block updates of the scaled-multiplier ADMM scheme and the functions
//! they are derived from.

use super::normal::NormalEquations;
use super::simplex::solve_pixel;
use super::state::{
    AdmmState, ClassMeans, Degeneracy, GammaWeights, MembershipField, Problem, ScaledMultipliers,
    SolverConfig, TextureIterate,
};
use crate::basis::{BasisSet, BiasCoeffs};
use crate::image::PixelGrid;

/// `gamma_p = mid{eps, 1/vbar_p, 1/eps}`, with `1/0` read as `+inf`.
pub fn compute_gamma(vbar: &PixelGrid, epsilon: f64) -> GammaWeights {
    let hi = 1.0 / epsilon;
    GammaWeights(
        vbar.data()
            .iter()
            .map(|&v| {
                let inv = if v == 0.0 { f64::INFINITY } else { 1.0 / v };
                inv.clamp(epsilon, hi)
            })
            .collect(),
    )
}

/// Multiaffine part of the constraint: `(w^T G_p)(c^T u_p) - ibar_p`.
pub fn constraint_map(
    u: &MembershipField,
    c: &ClassMeans,
    w: &BiasCoeffs,
    basis: &BasisSet,
    ibar: &PixelGrid,
) -> Vec<f64> {
    ibar.data()
        .iter()
        .enumerate()
        .map(|(p, &target)| basis.bias_at(w.as_slice(), p) * c.dot(u.row(p)) - target)
        .collect()
}

/// Constraint residual `M(x) + v`.
pub fn constraint_residual(state: &AdmmState, problem: &Problem<'_>) -> Vec<f64> {
    let mut r = constraint_map(&state.u, &state.c, &state.w, problem.basis, problem.ibar);
    r.iter_mut().zip(&state.v.0).for_each(|(r, v)| *r += v);
    r
}

pub fn update_u(state: &AdmmState, problem: &Problem<'_>) -> MembershipField {
    let n = state.c.0.len();
    let mut u = state.u.clone();
    let mut m = vec![0.0; n];
    for p in 0..problem.pixels() {
        let bias = problem.basis.bias_at(state.w.as_slice(), p);
        m.iter_mut()
            .zip(&state.c.0)
            .for_each(|(mi, ci)| *mi = bias * ci);
        let l = state.v.0[p] - problem.ibar.data()[p] + state.zeta.0[p];
        solve_pixel(&m, l, u.row_mut(p));
    }
    u
}

/// Right-hand side `ibar - v - zeta` shared by the c and w subproblems.
fn shifted_target(state: &AdmmState, problem: &Problem<'_>, p: usize) -> f64 {
    problem.ibar.data()[p] - state.v.0[p] - state.zeta.0[p]
}

/// Least-squares class means with design rows `(w^T G_p) u_p^T`.
pub fn update_c(state: &AdmmState, problem: &Problem<'_>) -> (ClassMeans, Degeneracy) {
    let n = state.c.0.len();
    let mut ne = NormalEquations::new(n);
    let mut row = vec![0.0; n];
    for p in 0..problem.pixels() {
        let bias = problem.basis.bias_at(state.w.as_slice(), p);
        row.iter_mut()
            .zip(state.u.row(p))
            .for_each(|(a, u)| *a = bias * u);
        ne.add_row(&row, shifted_target(state, problem, p));
    }
    let (c, deg) = ne.solve(&state.c.0);
    (ClassMeans(c), deg)
}

/// Least-squares bias coefficients with design rows `(c^T u_p) G_p^T`.
pub fn update_w(state: &AdmmState, problem: &Problem<'_>) -> (BiasCoeffs, Degeneracy) {
    let m = problem.basis.m();
    let mut ne = NormalEquations::new(m);
    let mut row = vec![0.0; m];
    for p in 0..problem.pixels() {
        let tissue = state.c.dot(state.u.row(p));
        row.iter_mut()
            .zip(problem.basis.row(p))
            .for_each(|(b, g)| *b = tissue * g);
        ne.add_row(&row, shifted_target(state, problem, p));
    }
    let (w, deg) = ne.solve(state.w.as_slice());
    (BiasCoeffs(w), deg)
}

/// Closed-form minimizer of `v^2/2 + (mu gamma/2)(v - vbar)^2 + (rho/2)(v + z)^2`.
#[inline]
pub fn v_closed_form(mu_gamma: f64, rho: f64, vbar: f64, z: f64) -> f64 {
    (mu_gamma * vbar - rho * z) / (1.0 + mu_gamma + rho)
}

pub fn update_v(state: &AdmmState, problem: &Problem<'_>, config: &SolverConfig) -> TextureIterate {
    let mx = constraint_map(&state.u, &state.c, &state.w, problem.basis, problem.ibar);
    TextureIterate(
        (0..problem.pixels())
            .map(|p| {
                let z = mx[p] + state.zeta.0[p];
                v_closed_form(
                    config.mu * state.gamma.0[p],
                    config.rho,
                    problem.vbar.data()[p],
                    z,
                )
            })
            .collect(),
    )
}

/// `zeta + M(x) + v`.
pub fn update_multipliers(state: &AdmmState, problem: &Problem<'_>) -> ScaledMultipliers {
    let r = constraint_residual(state, problem);
    ScaledMultipliers(state.zeta.0.iter().zip(&r).map(|(z, r)| z + r).collect())
}

/// `g(v) = |v|^2/2 + (mu/2) |v - vbar|^2_Gamma`.
pub fn texture_penalty(v: &[f64], vbar: &[f64], gamma: &[f64], mu: f64) -> f64 {
    v.iter()
        .zip(vbar)
        .zip(gamma)
        .map(|((&v, &vb), &g)| 0.5 * v * v + 0.5 * mu * g * (v - vb) * (v - vb))
        .sum()
}

/// Gradient of [`texture_penalty`].
pub fn texture_penalty_grad(v: &[f64], vbar: &[f64], gamma: &[f64], mu: f64) -> Vec<f64> {
    v.iter()
        .zip(vbar)
        .zip(gamma)
        .map(|((&v, &vb), &g)| v + mu * g * (v - vb))
        .collect()
}

/// Objective `chi(u) + g(v)`; `+inf` when some membership row leaves the simplex.
pub fn objective(state: &AdmmState, problem: &Problem<'_>, config: &SolverConfig) -> f64 {
    if !state.u.on_simplex() {
        return f64::INFINITY;
    }
    texture_penalty(&state.v.0, problem.vbar.data(), &state.gamma.0, config.mu)
}

/// `g(v) + <rho zeta, M(x) + v> + (rho/2) |M(x) + v|^2`.
pub fn augmented_lagrangian(
    state: &AdmmState,
    problem: &Problem<'_>,
    config: &SolverConfig,
) -> f64 {
    let phi = objective(state, problem, config);
    if phi.is_infinite() {
        return phi;
    }
    let r = constraint_residual(state, problem);
    let coupling: f64 = r
        .iter()
        .zip(&state.zeta.0)
        .map(|(r, z)| config.rho * z * r + 0.5 * config.rho * r * r)
        .sum();
    phi + coupling
}
