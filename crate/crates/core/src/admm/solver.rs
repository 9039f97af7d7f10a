use super::diagnostics::{
    check_multiplier_increase, check_v_decrease, multiplier_identity_error, LagrangianChange,
};
use super::state::{AdmmState, IterationRecord, Problem, SolverConfig};
use super::updates::{
    augmented_lagrangian, constraint_residual, objective, update_c, update_multipliers, update_u,
    update_v, update_w,
};
use super::SolverError;
use crate::basis::BasisSet;
use crate::image::PixelGrid;

/// Augmented Lagrangian after each stage of one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageLagrangians {
    pub start: f64,
    pub after_u: f64,
    pub after_c: f64,
    pub after_w: f64,
    pub after_v: f64,
    pub after_multipliers: f64,
}

/// Everything observed while executing one traced iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub record: IterationRecord,
    pub lagrangian: StageLagrangians,
    pub v_decrease: LagrangianChange,
    pub multiplier_increase: LagrangianChange,
    /// `max_p |rho zeta_p + grad g(v)_p|` at the end of the iteration.
    pub multiplier_identity: f64,
    /// Largest simplex violation of `u` after its update.
    pub simplex_violation: f64,
}

pub struct SolverOutput {
    pub state: AdmmState,
    /// Tissue image `J_p = c^T u_p`, unclamped.
    pub corrected: PixelGrid,
    pub bias: PixelGrid,
    /// Augmented Lagrangian at the starting point.
    pub initial_lagrangian: f64,
}

/// Owns the iterates of one ADMM run.
pub struct Solver<'a> {
    problem: Problem<'a>,
    config: SolverConfig,
    state: AdmmState,
    reconstruction: Vec<f64>,
    initial_lagrangian: f64,
}

/// `(w^T G_p)(c^T u_p)` for every pixel.
fn reconstruction(state: &AdmmState, problem: &Problem<'_>) -> Vec<f64> {
    (0..problem.pixels())
        .map(|p| problem.basis.bias_at(state.w.as_slice(), p) * state.c.dot(state.u.row(p)))
        .collect()
}

fn l2(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|x| x * x).sum::<f64>().sqrt()
}

impl<'a> Solver<'a> {
    pub fn new(problem: Problem<'a>, config: SolverConfig) -> Result<Self, SolverError> {
        config.validate()?;
        if problem.basis.m() == 0 {
            return Err(SolverError::Config("empty basis".into()));
        }
        let state = AdmmState::initial(&problem, &config);
        Ok(Self::with_state(problem, config, state))
    }

    /// Starts from a caller-supplied state instead of the default one.
    pub fn with_state(problem: Problem<'a>, config: SolverConfig, state: AdmmState) -> Self {
        let reconstruction = reconstruction(&state, &problem);
        let initial_lagrangian = augmented_lagrangian(&state, &problem, &config);
        Self {
            problem,
            config,
            state,
            reconstruction,
            initial_lagrangian,
        }
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn initial_lagrangian(&self) -> f64 {
        self.initial_lagrangian
    }

    pub fn step(&mut self) -> Result<IterationRecord, SolverError> {
        self.advance(false).map(|(record, _)| record)
    }

    /// One iteration with the Lagrangian evaluated after every block and
    /// the per-iteration identities checked.
    pub fn step_traced(&mut self) -> Result<StepTrace, SolverError> {
        self.advance(true)
            .map(|(_, trace)| trace.expect("tracing requested"))
    }

    fn advance(
        &mut self,
        traced: bool,
    ) -> Result<(IterationRecord, Option<StepTrace>), SolverError> {
        let problem = self.problem;
        let config = &self.config;
        let lag = |s: &AdmmState| {
            if traced {
                augmented_lagrangian(s, &problem, config)
            } else {
                f64::NAN
            }
        };
        let s = &mut self.state;
        let start = lag(s);

        s.u = update_u(s, &problem);
        let simplex_violation = if traced { s.u.simplex_violation() } else { 0.0 };
        let after_u = lag(s);

        let (c, c_deg) = update_c(s, &problem);
        s.c = c;
        s.c_degeneracy = c_deg;
        let after_c = lag(s);

        let (w, w_deg) = update_w(s, &problem);
        s.w = w;
        s.w_degeneracy = w_deg;
        let after_w = lag(s);

        let before_v = traced.then(|| s.clone());
        s.v = update_v(s, &problem, config);
        let after_v = lag(s);
        let v_decrease = before_v
            .as_ref()
            .map(|b| check_v_decrease(b, s, &problem, config));

        let before_zeta = traced.then(|| s.clone());
        let old_zeta = s.zeta.0.clone();
        s.zeta = update_multipliers(s, &problem);
        let after_multipliers = lag(s);
        let multiplier_increase = before_zeta
            .as_ref()
            .map(|b| check_multiplier_increase(b, s, &problem, config));
        s.iter += 1;

        let recon = reconstruction(s, &problem);
        let residual = constraint_residual(s, &problem);
        let record = IterationRecord {
            iter: s.iter,
            objective: objective(s, &problem, config),
            aug_lagrangian: augmented_lagrangian(s, &problem, config),
            constraint_residual: l2(residual.iter().copied()),
            image_change: l2(recon.iter().zip(&self.reconstruction).map(|(a, b)| a - b)),
            multiplier_change: config.rho * l2(s.zeta.0.iter().zip(&old_zeta).map(|(a, b)| a - b)),
            c_norm: l2(s.c.0.iter().copied()),
            w_norm: l2(s.w.0.iter().copied()),
            v_norm: l2(s.v.0.iter().copied()),
        };
        self.reconstruction = recon;

        if !record.is_finite() || !s.is_finite() {
            return Err(SolverError::Divergence {
                iter: s.iter,
                last: s.history.last().copied(),
            });
        }
        if config.history {
            s.history.push(record);
        }

        let trace = traced.then(|| StepTrace {
            record,
            lagrangian: StageLagrangians {
                start,
                after_u,
                after_c,
                after_w,
                after_v,
                after_multipliers,
            },
            v_decrease: v_decrease.expect("traced"),
            multiplier_increase: multiplier_increase.expect("traced"),
            multiplier_identity: multiplier_identity_error(s, &problem, config),
            simplex_violation,
        });
        Ok((record, trace))
    }

    /// Runs the remaining iterations up to `max_iter`.
    pub fn finish(mut self) -> Result<SolverOutput, SolverError> {
        while self.state.iter < self.config.max_iter {
            self.step()?;
        }
        Ok(self.into_output())
    }

    pub fn into_output(self) -> SolverOutput {
        let (w, h) = (self.problem.ibar.width(), self.problem.ibar.height());
        let corrected = PixelGrid::new(w, h, self.state.tissue_values()).expect("shape");
        let bias = self
            .problem
            .basis
            .eval_bias(&self.state.w)
            .expect("coefficient count");
        SolverOutput {
            state: self.state,
            corrected,
            bias,
            initial_lagrangian: self.initial_lagrangian,
        }
    }
}

/// Runs `config.max_iter` iterations from the standard starting point.
///
/// With `mu = 0` and an all-zero `vbar` this is the plain multiplicative
/// intrinsic component baseline.
pub fn run(
    ibar: &PixelGrid,
    vbar: &PixelGrid,
    config: &SolverConfig,
    basis: &BasisSet,
) -> Result<SolverOutput, SolverError> {
    let problem = Problem::new(ibar, vbar, basis)?;
    Solver::new(problem, config.clone())?.finish()
}
