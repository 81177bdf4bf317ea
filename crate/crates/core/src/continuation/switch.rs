//! Branch switching at a refined crossing.
//!
//! Newton at fixed λ from `parent + δ·kernel` falls back onto the parent
//! branch, whose attraction basin dominates near a flat pitchfork. Instead λ
//! is left free and the amplitude is pinned by `⟨k, z − z*⟩ = δ`, which picks
//! out the child branch directly. The pin direction is the kernel with its
//! component along the parent tangent removed; otherwise, when the kernel
//! shares the symmetry of the parent, the parent itself satisfies the pin at
//! a nearby λ. The tangent is a secant over the bracketing branch points,
//! since Newton on the parent right at the crossing is ill-posed.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{admissible, annotate, BifurcationEvent, BranchPoint};
use crate::error::{Result, SktError};
use crate::model::{
    assemble_linearization, assemble_residual, residual_noise_floor, BranchTag, Grid, ModelParams,
    SteadyState,
};
use crate::solvers::linear::BlockLu;
use crate::solvers::newton::{
    damped_newton, newton_solve, NewtonFailure, NewtonSettings, NonlinearSystem,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchSettings {
    /// `δ = relative_amplitude · ‖parent state‖₂` when no amplitude is given.
    pub relative_amplitude: f64,
    /// Initial λ offset from the crossing.
    pub lambda_offset: f64,
    /// A child closer than `min_separation · |δ|` to the parent counts as a
    /// fall-back onto the parent.
    pub min_separation: f64,
    pub newton: NewtonSettings,
    pub m: usize,
}

impl Default for SwitchSettings {
    fn default() -> Self {
        Self {
            relative_amplitude: 1e-2,
            lambda_offset: 0.2,
            min_separation: 0.1,
            newton: NewtonSettings::default(),
            m: 8,
        }
    }
}

impl SwitchSettings {
    pub fn default_amplitude(&self, parent: &SteadyState) -> f64 {
        self.relative_amplitude * parent.stacked().norm()
    }
}

struct Pinned<'a> {
    params: &'a ModelParams,
    grid: &'a Grid,
    tag: BranchTag,
    kernel: &'a DVector<f64>,
    anchor: &'a DVector<f64>,
    amplitude: f64,
}

impl Pinned<'_> {
    fn split(&self, x: &DVector<f64>) -> (SteadyState, ModelParams) {
        let dim = 2 * self.grid.n;
        let z = x.rows(0, dim).into_owned();
        (
            SteadyState::from_stacked(&z, self.tag),
            self.params.with_lambda(x[dim]),
        )
    }
}

impl NonlinearSystem for Pinned<'_> {
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let dim = 2 * self.grid.n;
        let (state, params) = self.split(x);
        let f = assemble_residual(&params, self.grid, &state)
            .expect("dimensions fixed by construction");
        let pin = self.kernel.dot(&(x.rows(0, dim) - self.anchor)) - self.amplitude;
        DVector::from_fn(dim + 1, |i, _| if i < dim { f[i] } else { pin })
    }

    fn newton_step(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        let dim = 2 * self.grid.n;
        let (state, params) = self.split(x);
        let lin = assemble_linearization(&params, self.grid, &state)?;
        let lu = BlockLu::new(&lin.matrix, -1.0, 0.0)?;
        lu.check_conditioning()?;
        let p = DVector::from_vec(lu.solve((-r.rows(0, dim)).as_slice()));
        let q = DVector::from_vec(lu.solve(state.stacked().as_slice()));
        let kq = self.kernel.dot(&q);
        if kq == 0.0 {
            return Err(SktError::Singular { rcond: 0.0 });
        }
        let dl = (r[dim] + self.kernel.dot(&p)) / kq;
        let dz = p - q * dl;
        Ok(DVector::from_fn(
            dim + 1,
            |i, _| if i < dim { dz[i] } else { dl },
        ))
    }

    fn noise_floor(&self, x: &DVector<f64>) -> f64 {
        let (state, params) = self.split(x);
        residual_noise_floor(&params, self.grid, &state)
    }
}

/// Tag of the child branch seeded with amplitude `δ`.
pub fn child_tag(amplitude: f64) -> BranchTag {
    if amplitude >= 0.0 {
        BranchTag::SegregationPlus
    } else {
        BranchTag::SegregationMinus
    }
}

/// First point of the branch bifurcating at `event`, on the side selected by
/// the sign of `amplitude`.
pub fn switch_branch(
    params: &ModelParams,
    grid: &Grid,
    event: &BifurcationEvent,
    parent_point: &BranchPoint,
    amplitude: f64,
    settings: &SwitchSettings,
) -> Result<BranchPoint> {
    if !(amplitude != 0.0 && amplitude.is_finite()) {
        return Err(SktError::Input(format!(
            "switching amplitude must be nonzero, got {amplitude}"
        )));
    }
    let dim = 2 * grid.n;
    if event.kernel_vector.len() != dim {
        return Err(SktError::Input(
            "event carries no kernel vector for this grid".into(),
        ));
    }
    let parent = event
        .state
        .clone()
        .unwrap_or_else(|| parent_point.state.clone());
    parent.check_grid(grid)?;
    let anchor = parent.stacked();
    let tag = child_tag(amplitude);
    let kernel = match &event.parent_tangent {
        Some(t) if t.len() == dim => pin_direction(&event.kernel_vector, t),
        _ => event.kernel_vector.clone(),
    };
    let problem = Pinned {
        params,
        grid,
        tag,
        kernel: &kernel,
        anchor: &anchor,
        amplitude,
    };
    let start_z = &anchor + &kernel * amplitude;
    let x0 = DVector::from_fn(dim + 1, |i, _| {
        if i < dim {
            start_z[i]
        } else {
            event.lambda_star + settings.lambda_offset
        }
    });
    let x = match damped_newton(&problem, x0, &settings.newton) {
        Ok(run) => run.x,
        Err(NewtonFailure::Diverged { residual, x, .. }) => {
            return Err(SktError::Solver(format!(
            "pinned newton for branch switching stopped at residual {residual:.3e} (lambda {:.6})",
            x[dim]
        )))
        }
        Err(NewtonFailure::Failed(e)) => return Err(e),
    };
    let (child, child_params) = problem.split(&x);
    let lambda = child_params.lambda;

    // Parent branch at the same λ. Right next to the crossing Newton on the
    // parent may stall or jump onto the child, so the secant prediction
    // serves as the reference unless a re-solve stays close to it.
    let predicted = match &event.parent_tangent {
        Some(t) if t.len() == dim => &anchor + t * (lambda - event.lambda_star),
        _ => anchor.clone(),
    };
    let to_prediction = (child.stacked() - &predicted).norm();
    let distance = match newton_solve(
        &child_params,
        grid,
        &SteadyState::from_stacked(&predicted, parent.tag),
        &settings.newton,
    ) {
        Ok(p) if (p.stacked() - &predicted).norm() <= 0.5 * to_prediction => {
            (child.stacked() - p.stacked()).norm()
        }
        _ => to_prediction,
    };
    if distance <= settings.min_separation * amplitude.abs() || !admissible(&child) {
        return Err(SktError::NoSwitch { distance });
    }
    log::info!(
        "switched to {} at lambda = {lambda:.6}, distance {distance:.3e} from parent",
        tag.as_str()
    );
    annotate(&child_params, grid, child, 0.0, settings.m)
}

/// Unit vector along `kernel` orthogonal to `tangent`.
fn pin_direction(kernel: &DVector<f64>, tangent: &DVector<f64>) -> DVector<f64> {
    let tt = tangent.norm_squared();
    let k = if tt > 0.0 {
        kernel - tangent * (kernel.dot(tangent) / tt)
    } else {
        kernel.clone()
    };
    let norm = k.norm();
    if norm > 1e-3 * kernel.norm() {
        k / norm
    } else {
        kernel.clone()
    }
}
