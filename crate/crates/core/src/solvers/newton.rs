use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::linear::BlockLu;
use crate::error::{Result, SktError};
use crate::model::{
    assemble_linearization, assemble_residual, residual_noise_floor, Grid, ModelParams, SteadyState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSettings {
    /// Max-norm residual threshold.
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Smallest step fraction tried by the backtracking line search.
    pub damping_min: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iters: 50,
            damping_min: 1.0 / 64.0,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0)
            || self.max_iters < 1
            || !(self.damping_min > 0.0 && self.damping_min <= 1.0)
        {
            return Err(SktError::Input(format!("invalid newton settings {self:?}")));
        }
        Ok(())
    }
}

/// A square nonlinear system `F(x) = 0` with a direct Newton step.
pub(crate) trait NonlinearSystem {
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Solve `F'(x) δ = -r`.
    fn newton_step(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>>;

    /// Residual size that roundoff alone produces at `x`.
    fn noise_floor(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonRun {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug)]
pub(crate) enum NewtonFailure {
    Diverged {
        x: DVector<f64>,
        residual: f64,
        iterations: usize,
    },
    Failed(SktError),
}

pub(crate) fn damped_newton<P: NonlinearSystem>(
    problem: &P,
    x0: DVector<f64>,
    settings: &NewtonSettings,
) -> std::result::Result<NewtonRun, NewtonFailure> {
    let mut x = x0;
    let mut r = problem.residual(&x);
    let mut rn = r.amax();
    for it in 0..settings.max_iters {
        if !rn.is_finite() {
            return Err(NewtonFailure::Diverged {
                x,
                residual: rn,
                iterations: it,
            });
        }
        let tol = settings.tol_residual.max(problem.noise_floor(&x));
        if rn <= tol {
            return Ok(NewtonRun {
                x,
                residual: rn,
                iterations: it,
            });
        }
        let step = problem.newton_step(&x, &r).map_err(NewtonFailure::Failed)?;
        let mut t = 1.0;
        loop {
            let trial = &x + &step * t;
            let rt = problem.residual(&trial);
            let rtn = rt.amax();
            if (rtn.is_finite() && rtn < rn) || t <= settings.damping_min {
                x = trial;
                r = rt;
                rn = rtn;
                break;
            }
            t *= 0.5;
        }
    }
    let tol = settings.tol_residual.max(problem.noise_floor(&x));
    if rn <= tol {
        Ok(NewtonRun {
            x,
            residual: rn,
            iterations: settings.max_iters,
        })
    } else {
        Err(NewtonFailure::Diverged {
            x,
            residual: rn,
            iterations: settings.max_iters,
        })
    }
}

pub(crate) struct SteadyProblem<'a> {
    pub params: &'a ModelParams,
    pub grid: &'a Grid,
    pub tag: crate::model::BranchTag,
}

impl SteadyProblem<'_> {
    fn state(&self, x: &DVector<f64>) -> SteadyState {
        SteadyState::from_stacked(x, self.tag)
    }
}

impl NonlinearSystem for SteadyProblem<'_> {
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        assemble_residual(self.params, self.grid, &self.state(x))
            .expect("dimensions fixed by construction")
    }

    fn newton_step(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        let lin = assemble_linearization(self.params, self.grid, &self.state(x))?;
        // F' = -L
        let lu = BlockLu::new(&lin.matrix, -1.0, 0.0)?;
        lu.check_conditioning()?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        Ok(DVector::from_vec(lu.solve(&rhs)))
    }

    fn noise_floor(&self, x: &DVector<f64>) -> f64 {
        residual_noise_floor(self.params, self.grid, &self.state(x))
    }
}

/// Damped Newton iteration for a steady state. The branch tag is copied from
/// the guess.
pub fn newton_solve(
    params: &ModelParams,
    grid: &Grid,
    guess: &SteadyState,
    settings: &NewtonSettings,
) -> Result<SteadyState> {
    guess.check_grid(grid)?;
    settings.validate()?;
    let problem = SteadyProblem {
        params,
        grid,
        tag: guess.tag,
    };
    match damped_newton(&problem, guess.stacked(), settings) {
        Ok(run) => {
            log::trace!(
                "newton: {} iterations, residual {:.3e}",
                run.iterations,
                run.residual
            );
            Ok(SteadyState::from_stacked(&run.x, guess.tag))
        }
        Err(NewtonFailure::Diverged {
            x,
            residual,
            iterations,
        }) => Err(SktError::Divergence {
            iterations,
            residual,
            last_iterate: Box::new(SteadyState::from_stacked(&x, guess.tag)),
        }),
        Err(NewtonFailure::Failed(e)) => Err(e),
    }
}
