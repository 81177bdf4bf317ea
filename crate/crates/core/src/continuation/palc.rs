//! Keller pseudo-arclength stepping.
//!
//! The arclength uses the weighted product `h Σ z_i z'_i + λλ'`, so the state
//! part approximates the `L²(Ω)` product and does not grow with `n`.

use nalgebra::DVector;

use super::{admissible, annotate, Branch, BranchPoint, StepControls, StopCriteria, StopReason};
use crate::error::{Result, SktError};
use crate::model::{
    assemble_linearization, assemble_residual, residual_noise_floor, BranchTag, Grid, ModelParams,
    SteadyState,
};
use crate::solvers::linear::BlockLu;
use crate::solvers::newton::newton_solve;

/// A point `(z, λ)` of the extended space, or a direction in it.
#[derive(Debug, Clone)]
pub(crate) struct Extended {
    pub z: DVector<f64>,
    pub lambda: f64,
}

impl Extended {
    fn axpy(&self, s: f64, d: &Extended) -> Extended {
        Extended {
            z: &self.z + &d.z * s,
            lambda: self.lambda + s * d.lambda,
        }
    }
}

pub(crate) struct Palc<'a> {
    pub params: &'a ModelParams,
    pub grid: &'a Grid,
    pub tag: BranchTag,
}

enum StepFailure {
    Corrector,
    Boundary,
}

impl Palc<'_> {
    fn dot(&self, a: &Extended, b: &Extended) -> f64 {
        self.grid.h * a.z.dot(&b.z) + a.lambda * b.lambda
    }

    fn normalized(&self, mut d: Extended) -> Extended {
        let norm = self.dot(&d, &d).sqrt();
        d.z /= norm;
        d.lambda /= norm;
        d
    }

    fn state(&self, z: &DVector<f64>) -> SteadyState {
        SteadyState::from_stacked(z, self.tag)
    }

    /// Keep the vanishing component of a semi-trivial state exactly zero.
    fn project(&self, z: &mut DVector<f64>) {
        let n = self.grid.n;
        match self.tag {
            BranchTag::SemitrivialU => z.rows_mut(n, n).fill(0.0),
            BranchTag::SemitrivialV => z.rows_mut(0, n).fill(0.0),
            BranchTag::Trivial => z.fill(0.0),
            _ => {}
        }
    }

    fn jacobian(&self, x: &Extended) -> Result<BlockLu<f64>> {
        let lin = assemble_linearization(
            &self.params.with_lambda(x.lambda),
            self.grid,
            &self.state(&x.z),
        )?;
        let lu = BlockLu::new(&lin.matrix, -1.0, 0.0)?;
        lu.check_conditioning()?;
        Ok(lu)
    }

    fn residual(&self, x: &Extended) -> Result<(DVector<f64>, f64)> {
        let state = self.state(&x.z);
        let params = self.params.with_lambda(x.lambda);
        let r = assemble_residual(&params, self.grid, &state)?;
        let floor = residual_noise_floor(&params, self.grid, &state);
        Ok((r, floor))
    }

    /// Tangent from `[[F_z, F_λ], [W prev_zᵀ, prev_λ]] t = e_last`, normalized
    /// and oriented along `prev`.
    pub fn tangent(&self, x: &Extended, prev: &Extended) -> Result<Extended> {
        let lu = self.jacobian(x)?;
        let q = DVector::from_vec(lu.solve(x.z.as_slice()));
        let denom = prev.lambda - self.grid.h * prev.z.dot(&q);
        if denom.abs() < 1e-14 {
            return Err(SktError::Singular { rcond: denom.abs() });
        }
        let t_lambda = 1.0 / denom;
        let mut t = self.normalized(Extended {
            z: -q * t_lambda,
            lambda: t_lambda,
        });
        self.project(&mut t.z);
        if self.dot(&t, prev) < 0.0 {
            t.z.neg_mut();
            t.lambda = -t.lambda;
        }
        Ok(t)
    }

    /// Newton on `F = 0`, `⟨τ, x − x0⟩ − ds = 0`; returns the point and the
    /// iteration count.
    fn correct(
        &self,
        x0: &Extended,
        tau: &Extended,
        ds: f64,
        controls: &StepControls,
    ) -> Result<(Extended, usize)> {
        let mut x = x0.axpy(ds, tau);
        self.project(&mut x.z);
        let c = &tau.z * self.grid.h;
        for it in 0..=controls.max_corrector_iters {
            let (f, floor) = self.residual(&x)?;
            let diff = Extended {
                z: &x.z - &x0.z,
                lambda: x.lambda - x0.lambda,
            };
            let constraint = self.dot(tau, &diff) - ds;
            let fnorm = f.amax();
            if !fnorm.is_finite() {
                break;
            }
            if fnorm <= controls.newton.tol_residual.max(floor)
                && constraint.abs() <= 1e-9 * ds.abs().max(1.0)
            {
                return Ok((x, it));
            }
            if it == controls.max_corrector_iters {
                break;
            }
            let lu = self.jacobian(&x)?;
            let p = DVector::from_vec(lu.solve((-&f).as_slice()));
            let q = DVector::from_vec(lu.solve(x.z.as_slice()));
            let dl = (-constraint - c.dot(&p)) / (tau.lambda - c.dot(&q));
            let dz = p - q * dl;
            x.z += dz;
            x.lambda += dl;
            self.project(&mut x.z);
        }
        Err(SktError::Solver(format!(
            "corrector failed from lambda = {:.6} with step {ds:.3e}",
            x0.lambda
        )))
    }

    fn try_step(
        &self,
        x0: &Extended,
        tau: &Extended,
        ds: f64,
        controls: &StepControls,
    ) -> std::result::Result<(Extended, Extended, usize), StepFailure> {
        let (x, iters) = self
            .correct(x0, tau, ds, controls)
            .map_err(|_| StepFailure::Corrector)?;
        if !admissible(&self.state(&x.z)) {
            return Err(StepFailure::Boundary);
        }
        let t = self.tangent(&x, tau).map_err(|_| StepFailure::Corrector)?;
        // a sharp turn means the corrector jumped to another branch
        if self.dot(&t, tau) < 0.8 {
            return Err(StepFailure::Corrector);
        }
        Ok((x, t, iters))
    }
}

/// Continue from `start` in the direction of increasing (`direction > 0`) or
/// decreasing λ.
pub fn continue_branch(
    params: &ModelParams,
    grid: &Grid,
    start: BranchPoint,
    direction: f64,
    controls: &StepControls,
    stop: &StopCriteria,
) -> Result<Branch> {
    let hint = (DVector::zeros(2 * grid.n), direction.signum());
    continue_branch_along(params, grid, start, hint, controls, stop)
}

/// Continue from `start` with the initial tangent oriented along
/// `(hint_z, hint_lambda)`.
pub fn continue_branch_along(
    params: &ModelParams,
    grid: &Grid,
    start: BranchPoint,
    hint: (DVector<f64>, f64),
    controls: &StepControls,
    stop: &StopCriteria,
) -> Result<Branch> {
    controls.validate()?;
    start.state.check_grid(grid)?;
    let tag = start.state.tag;
    let palc = Palc { params, grid, tag };
    let mut x = Extended {
        z: start.state.stacked(),
        lambda: start.lambda,
    };
    let (f, floor) = palc.residual(&x)?;
    if f.amax() > 10.0 * controls.newton.tol_residual.max(floor) {
        return Err(SktError::Input(format!(
            "start point is not a steady state (residual {:.3e})",
            f.amax()
        )));
    }
    let hint = Extended {
        z: hint.0,
        lambda: hint.1,
    };
    if hint.z.len() != x.z.len() || palc.dot(&hint, &hint) == 0.0 {
        return Err(SktError::Input(
            "tangent hint must be a nonzero extended vector".into(),
        ));
    }
    let mut tau = palc.tangent(&x, &hint)?;
    let mut branch = Branch {
        tag,
        params: *params,
        grid: *grid,
        points: vec![start],
        events: Vec::new(),
        stop_reason: None,
    };
    let mut ds = controls.ds_initial;
    let mut arclength = branch.points[0].arclength;
    let span = [stop.lambda_max, stop.lambda_min, x.lambda]
        .into_iter()
        .filter(|l| l.is_finite())
        .fold(1.0_f64, |acc, l| acc.max(l.abs()));
    loop {
        if branch.points.len() >= stop.max_points {
            branch.stop_reason = Some(StopReason::MaxPoints);
            return Ok(branch);
        }
        if x.lambda >= stop.lambda_max - 1e-9 * span && tau.lambda > 0.0 {
            branch.stop_reason = Some(StopReason::LambdaMax);
            return Ok(branch);
        }
        if x.lambda <= stop.lambda_min + 1e-9 * span && tau.lambda < 0.0 {
            branch.stop_reason = Some(StopReason::LambdaMin);
            return Ok(branch);
        }
        // land on the λ limit instead of overshooting it
        let mut step = ds;
        let mut landing = None;
        if tau.lambda > 0.0 && x.lambda + step * tau.lambda > stop.lambda_max {
            step = (stop.lambda_max - x.lambda) / tau.lambda;
            landing = Some(stop.lambda_max);
        } else if tau.lambda < 0.0 && x.lambda + step * tau.lambda < stop.lambda_min {
            step = (stop.lambda_min - x.lambda) / tau.lambda;
            landing = Some(stop.lambda_min);
        }
        match palc.try_step(&x, &tau, step, controls) {
            Ok((mut next, next_tau, iters)) => {
                if let Some(limit) = landing {
                    // pin the last point exactly on the limit
                    let guess = palc.state(&next.z);
                    if let Ok(pinned) =
                        newton_solve(&params.with_lambda(limit), grid, &guess, &controls.newton)
                    {
                        if admissible(&pinned) {
                            next = Extended {
                                z: pinned.stacked(),
                                lambda: limit,
                            };
                        }
                    }
                }
                arclength += step;
                let state = palc.state(&next.z);
                let point = annotate(
                    &params.with_lambda(next.lambda),
                    grid,
                    state,
                    arclength,
                    controls.m,
                )?;
                log::debug!(
                    "{} lambda = {:.6} morse = {} ds = {:.3e} iters = {}",
                    tag.as_str(),
                    next.lambda,
                    point.morse_index,
                    step,
                    iters
                );
                branch.points.push(point);
                x = next;
                tau = next_tau;
                if iters <= controls.fast_iters {
                    ds = (ds * controls.growth).min(controls.ds_max);
                }
            }
            Err(failure) => {
                ds = 0.5 * step;
                if ds < controls.ds_min {
                    if matches!(failure, StepFailure::Boundary) {
                        branch.stop_reason = Some(StopReason::Boundary);
                        return Ok(branch);
                    }
                    return Err(SktError::Stall {
                        lambda: x.lambda,
                        step: ds,
                        partial: Box::new(branch),
                    });
                }
            }
        }
    }
}
