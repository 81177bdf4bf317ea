//! Starting points for the primary branches.

use nalgebra::DVector;

use super::{annotate, BranchPoint};
use crate::error::{Result, SktError};
use crate::limits::{laplacian_eigenvalue, sine_mode, solve_logistic};
use crate::model::{BranchTag, Grid, ModelParams, SteadyState};
use crate::solvers::newton::{newton_solve, NewtonSettings};

/// Distance above `λ_1^h` at which the coexistence branch is seeded.
pub const COEXISTENCE_OFFSET: f64 = 0.3;

pub fn trivial_start(
    params: &ModelParams,
    grid: &Grid,
    lambda: f64,
    m: usize,
) -> Result<BranchPoint> {
    annotate(
        &params.with_lambda(lambda),
        grid,
        SteadyState::zeros(grid.n),
        0.0,
        m,
    )
}

/// `(θ_λ, 0)` for [`BranchTag::SemitrivialU`] (logistic coefficient `b1`), or
/// `(0, θ_λ)` for [`BranchTag::SemitrivialV`] (coefficient `c2`).
pub fn semitrivial_start(
    params: &ModelParams,
    grid: &Grid,
    lambda: f64,
    tag: BranchTag,
    m: usize,
) -> Result<BranchPoint> {
    let b = match tag {
        BranchTag::SemitrivialU => params.b1,
        BranchTag::SemitrivialV => params.c2,
        other => {
            return Err(SktError::Input(format!(
                "{} is not a semi-trivial tag",
                other.as_str()
            )))
        }
    };
    let theta = solve_logistic(lambda, b, grid)?.ok_or_else(|| {
        SktError::Input(format!(
            "no semi-trivial state at lambda = {lambda} (not above the first eigenvalue)"
        ))
    })?;
    let zero = DVector::zeros(grid.n);
    let state = match tag {
        BranchTag::SemitrivialU => SteadyState::new(theta, zero, tag)?,
        _ => SteadyState::new(zero, theta, tag)?,
    };
    annotate(&params.with_lambda(lambda), grid, state, 0.0, m)
}

/// Positive state at `λ_1^h + 0.3` from the guess `u = v = (0.1/α)·sin`, the
/// amplitude scaling of small coexistence.
pub fn coexistence_start(
    params: &ModelParams,
    grid: &Grid,
    newton: &NewtonSettings,
    m: usize,
) -> Result<BranchPoint> {
    let lambda = laplacian_eigenvalue(grid, 1) + COEXISTENCE_OFFSET;
    let guess_profile = sine_mode(grid, 1) * (0.1 / params.alpha);
    let guess = SteadyState::new(guess_profile.clone(), guess_profile, BranchTag::Coexistence)?;
    let p = params.with_lambda(lambda);
    let state = newton_solve(&p, grid, &guess, newton)?;
    if state.u.iter().chain(state.v.iter()).any(|&x| x <= 0.0) {
        return Err(SktError::Solver(format!(
            "coexistence seed at lambda = {lambda:.6} converged to a non-positive state"
        )));
    }
    annotate(&p, grid, state, 0.0, m)
}
