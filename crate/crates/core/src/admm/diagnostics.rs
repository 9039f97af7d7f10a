//! Runtime checks of the decrease/increase identities and curvature bounds
//! that underpin the convergence argument for the scheme.

use super::state::{AdmmState, Problem, SolverConfig};
use super::updates::{
    augmented_lagrangian, constraint_map, constraint_residual, texture_penalty_grad,
};

/// Smallest penalty `rho` for which the augmented Lagrangian decreases by at
/// least `delta |v^{k+1} - v^k|^2` per iteration.
pub fn rho_lower_bound(mu: f64, epsilon: f64, delta: f64) -> f64 {
    let lg = 1.0 + mu / epsilon;
    4.0 * (lg * lg + delta) - 1.0 - mu * epsilon
}

/// Lower bound `(1 + mu eps)/2` on the strong convexity of the texture penalty.
pub fn strong_convexity_bound(mu: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + mu * epsilon)
}

/// Upper bound `1 + mu/eps` on the gradient Lipschitz constant of the penalty.
pub fn lipschitz_bound(mu: f64, epsilon: f64) -> f64 {
    1.0 + mu / epsilon
}

/// A measured change of the augmented Lagrangian next to its closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LagrangianChange {
    /// Exact change, summed per pixel from factored differences so that
    /// small steps are not lost to cancellation.
    pub measured: f64,
    /// Difference of two full Lagrangian evaluations.
    pub naive: f64,
    pub closed_form: f64,
}

impl LagrangianChange {
    pub fn relative_error(&self) -> f64 {
        let diff = (self.measured - self.closed_form).abs();
        if diff == 0.0 {
            return 0.0;
        }
        diff / self
            .closed_form
            .abs()
            .max(self.measured.abs())
            .max(f64::MIN_POSITIVE)
    }

    pub fn agrees(&self, rel_tol: f64) -> bool {
        self.relative_error() <= rel_tol
    }
}

/// Lagrangian drop caused by a `v` update (`before` and `after` differ only
/// in `v`), against `1/2 |dv|^2_S` with `S = (1 + rho) I + mu Gamma`.
#[allow(clippy::needless_range_loop)]
pub fn check_v_decrease(
    before: &AdmmState,
    after: &AdmmState,
    problem: &Problem<'_>,
    config: &SolverConfig,
) -> LagrangianChange {
    let mx = constraint_map(&after.u, &after.c, &after.w, problem.basis, problem.ibar);
    let (mu, rho) = (config.mu, config.rho);
    let mut measured = 0.0;
    let mut closed_form = 0.0;
    for p in 0..problem.pixels() {
        let (a, b) = (before.v.0[p], after.v.0[p]);
        let (vbar, gamma, zeta) = (problem.vbar.data()[p], after.gamma.0[p], after.zeta.0[p]);
        let d = a - b;
        let s = a + b;
        measured += d
            * (0.5 * s
                + 0.5 * mu * gamma * (s - 2.0 * vbar)
                + rho * zeta
                + 0.5 * rho * (2.0 * mx[p] + s));
        closed_form += 0.5 * (1.0 + rho + mu * gamma) * d * d;
    }
    LagrangianChange {
        measured,
        naive: augmented_lagrangian(before, problem, config)
            - augmented_lagrangian(after, problem, config),
        closed_form,
    }
}

/// Lagrangian rise caused by a multiplier update, against `rho |dzeta|^2`.
pub fn check_multiplier_increase(
    before: &AdmmState,
    after: &AdmmState,
    problem: &Problem<'_>,
    config: &SolverConfig,
) -> LagrangianChange {
    let r = constraint_residual(after, problem);
    let mut measured = 0.0;
    let mut closed_form = 0.0;
    for ((za, zb), rp) in after.zeta.0.iter().zip(&before.zeta.0).zip(&r) {
        let dz = za - zb;
        measured += config.rho * dz * rp;
        closed_form += config.rho * dz * dz;
    }
    LagrangianChange {
        measured,
        naive: augmented_lagrangian(after, problem, config)
            - augmented_lagrangian(before, problem, config),
        closed_form,
    }
}

/// `max_p |rho zeta_p + grad g(v)_p|`; zero after every completed iteration.
pub fn multiplier_identity_error(
    state: &AdmmState,
    problem: &Problem<'_>,
    config: &SolverConfig,
) -> f64 {
    let grad = texture_penalty_grad(&state.v.0, problem.vbar.data(), &state.gamma.0, config.mu);
    state
        .zeta
        .0
        .iter()
        .zip(&grad)
        .map(|(z, g)| (config.rho * z + g).abs())
        .fold(0.0, f64::max)
}
