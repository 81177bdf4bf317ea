//! Pseudo-arclength continuation of steady-state branches, bifurcation
//! detection on them and branch switching at pitchforks.

mod detect;
mod palc;
mod seeds;
mod switch;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};
use crate::model::{assemble_linearization, BranchTag, Grid, ModelParams, SteadyState};
use crate::solvers::eigen::{morse_spectrum, Spectrum};
use crate::solvers::newton::NewtonSettings;

pub use detect::{detect_bifurcations, refine_crossing};
pub use palc::{continue_branch, continue_branch_along};
pub use seeds::{coexistence_start, semitrivial_start, trivial_start};
pub use switch::{child_tag, switch_branch, SwitchSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControls {
    pub ds_initial: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    /// Step growth factor after a fast corrector.
    pub growth: f64,
    /// Corrector iterations counted as fast.
    pub fast_iters: usize,
    pub max_corrector_iters: usize,
    /// Number of eigenvalues tracked at each point.
    pub m: usize,
    pub newton: NewtonSettings,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            ds_initial: 0.05,
            ds_min: 1e-8,
            ds_max: 1.0,
            growth: 1.3,
            fast_iters: 3,
            max_corrector_iters: 12,
            m: 8,
            newton: NewtonSettings::default(),
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<()> {
        self.newton.validate()?;
        let ok = self.ds_min > 0.0
            && self.ds_initial >= self.ds_min
            && self.ds_max >= self.ds_initial
            && self.growth >= 1.0
            && self.max_corrector_iters >= 1
            && self.m >= 1;
        if !ok {
            return Err(SktError::Input(format!("invalid step controls {self:?}")));
        }
        Ok(())
    }

    /// Same controls with every step length halved.
    pub fn halved(&self) -> Self {
        Self {
            ds_initial: 0.5 * self.ds_initial,
            ds_max: 0.5 * self.ds_max,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopCriteria {
    pub lambda_max: f64,
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_lambda_min() -> f64 {
    f64::NEG_INFINITY
}

fn default_max_points() -> usize {
    2000
}

impl StopCriteria {
    pub fn up_to(lambda_max: f64) -> Self {
        Self {
            lambda_max,
            lambda_min: f64::NEG_INFINITY,
            max_points: default_max_points(),
        }
    }
}

/// Why a branch ended without error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LambdaMax,
    LambdaMin,
    MaxPoints,
    /// The next point would leave the admissible set of the branch tag
    /// (e.g. a positive branch reaching the trivial state).
    Boundary,
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub lambda: f64,
    pub state: SteadyState,
    pub arclength: f64,
    /// Eigenvalues of smallest real part, ascending.
    pub spectrum_summary: Vec<Complex64>,
    pub morse_index: usize,
    pub critical_flag: bool,
    pub tol_zero: f64,
    pub norm_inf: f64,
}

impl BranchPoint {
    pub fn from_spectrum(
        lambda: f64,
        state: SteadyState,
        arclength: f64,
        spectrum: &Spectrum,
    ) -> Self {
        Self {
            lambda,
            state,
            arclength,
            spectrum_summary: spectrum.eigenvalues.clone(),
            morse_index: spectrum.morse_index,
            critical_flag: spectrum.is_critical(),
            tol_zero: spectrum.tol_zero,
            norm_inf: spectrum.norm_inf,
        }
    }

    /// Count of eigenvalues with negative real part, without the zero band.
    pub fn raw_negative_count(&self) -> usize {
        self.spectrum_summary
            .iter()
            .filter(|mu| mu.re < 0.0)
            .count()
    }

    pub fn tag(&self) -> BranchTag {
        self.state.tag
    }
}

/// Solve nothing; linearize at `state` and attach its spectrum.
pub fn annotate(
    params: &ModelParams,
    grid: &Grid,
    state: SteadyState,
    arclength: f64,
    m: usize,
) -> Result<BranchPoint> {
    let lin = assemble_linearization(params, grid, &state)?;
    let spectrum = morse_spectrum(&lin, m)?;
    Ok(BranchPoint::from_spectrum(
        params.lambda,
        state,
        arclength,
        &spectrum,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub lambda_star: f64,
    /// Unit 2-norm, blocked `[φ; ψ]`.
    #[serde(skip)]
    pub kernel_vector: DVector<f64>,
    /// Sign of `dμ/dλ` for the crossing eigenvalue.
    pub crossing_direction: i8,
    /// Real part of the crossing eigenvalue at `lambda_star`.
    pub eigenvalue: f64,
    pub norm_inf: f64,
    /// Refinement did not reach `|μ| ≤ 1e-8 ‖L‖_∞`.
    pub approximate: bool,
    /// Raw negative counts on either side of the crossing.
    pub index_before: usize,
    pub index_after: usize,
    #[serde(skip)]
    pub state: Option<SteadyState>,
    /// Secant `dz/dλ` of the parent between the bracketing points.
    #[serde(skip)]
    pub parent_tangent: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub tag: BranchTag,
    pub params: ModelParams,
    pub grid: Grid,
    pub points: Vec<BranchPoint>,
    pub events: Vec<BifurcationEvent>,
    pub stop_reason: Option<StopReason>,
}

impl Branch {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }
}

/// Overlap ratio `∫min(u, v) / ∫max(u, v)`: 1 for identical profiles, 0 for
/// disjoint supports.
pub fn segregation_measure(state: &SteadyState) -> Result<f64> {
    if state.u.iter().chain(state.v.iter()).any(|&x| x < -1e-12) {
        return Err(SktError::Input(
            "segregation measure needs a nonnegative state".into(),
        ));
    }
    let (mut lo, mut hi) = (0.0, 0.0);
    for (&u, &v) in state.u.iter().zip(state.v.iter()) {
        lo += u.min(v).max(0.0);
        hi += u.max(v).max(0.0);
    }
    if hi == 0.0 {
        return Err(SktError::UndefinedMeasure);
    }
    Ok(lo / hi)
}

/// Whether `state` lies in the admissible set of its branch tag.
pub(crate) fn admissible(state: &SteadyState) -> bool {
    let positive = |w: &DVector<f64>| w.iter().all(|&x| x > 0.0);
    match state.tag {
        BranchTag::Trivial => true,
        BranchTag::SemitrivialU => positive(&state.u),
        BranchTag::SemitrivialV => positive(&state.v),
        BranchTag::Coexistence | BranchTag::SegregationPlus | BranchTag::SegregationMinus => {
            positive(&state.u) && positive(&state.v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_of_identical_profiles_is_one() {
        let u = DVector::from_fn(10, |i, _| (i as f64 * 0.3).sin().abs() + 0.1);
        let s = SteadyState::new(u.clone(), u, BranchTag::Coexistence).unwrap();
        assert_eq!(segregation_measure(&s).unwrap(), 1.0);
    }

    #[test]
    fn overlap_of_disjoint_profiles_is_zero() {
        let u = DVector::from_fn(10, |i, _| if i < 5 { 1.0 } else { 0.0 });
        let v = DVector::from_fn(10, |i, _| if i >= 5 { 2.0 } else { 0.0 });
        let s = SteadyState::new(u, v, BranchTag::SegregationPlus).unwrap();
        assert_eq!(segregation_measure(&s).unwrap(), 0.0);
    }

    #[test]
    fn overlap_of_zero_state_is_undefined() {
        assert!(matches!(
            segregation_measure(&SteadyState::zeros(5)),
            Err(SktError::UndefinedMeasure)
        ));
    }

    #[test]
    fn step_controls_validation() {
        assert!(StepControls::default().validate().is_ok());
        assert!(StepControls {
            ds_min: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(StepControls {
            ds_max: 0.01,
            ..Default::default()
        }
        .validate()
        .is_err());
        let h = StepControls::default().halved();
        assert_eq!(h.ds_max, 0.5);
    }
}
