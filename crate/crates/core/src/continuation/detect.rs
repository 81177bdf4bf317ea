//! Location of eigenvalue crossings between consecutive branch points.

use nalgebra::DVector;

use super::{BifurcationEvent, Branch, BranchPoint, StepControls};
use crate::error::{Result, SktError};
use crate::model::{assemble_linearization, Grid, ModelParams, SteadyState};
use crate::solvers::eigen::{morse_spectrum, Spectrum};
use crate::solvers::newton::newton_solve;

const MAX_REFINE_ITERS: usize = 30;
/// Sub-steps of the fallback march towards a trial λ.
const MARCH_STEPS: usize = 8;

/// One event per pair of consecutive points whose counts of eigenvalues with
/// negative real part differ.
pub fn detect_bifurcations(
    branch: &Branch,
    controls: &StepControls,
) -> Result<Vec<BifurcationEvent>> {
    if branch.points.len() < 2 {
        return Err(SktError::Input(
            "bifurcation detection needs at least two branch points".into(),
        ));
    }
    let mut events = Vec::new();
    for pair in branch.points.windows(2) {
        if pair[0].raw_negative_count() != pair[1].raw_negative_count() {
            events.push(refine_crossing(
                &branch.params,
                &branch.grid,
                &pair[0],
                &pair[1],
                controls,
            )?);
        }
    }
    Ok(events)
}

struct Trial {
    lambda: f64,
    value: f64,
    state: SteadyState,
}

/// Illinois iteration on `λ ↦ Re μ_k(λ)`, where `k` is the smaller of the two
/// negative counts so that `μ_k` is the eigenvalue that changes sign. Every
/// trial λ gets a fresh steady state.
pub fn refine_crossing(
    params: &ModelParams,
    grid: &Grid,
    a: &BranchPoint,
    b: &BranchPoint,
    controls: &StepControls,
) -> Result<BifurcationEvent> {
    let (na, nb) = (a.raw_negative_count(), b.raw_negative_count());
    let k = na.min(nb);
    let m = controls.m.max(k + 2);
    let value_at = |p: &BranchPoint| p.spectrum_summary.get(k).map(|mu| mu.re);
    let (fa0, fb0) = match (value_at(a), value_at(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(SktError::Spectral(format!(
                "spectrum summary too short to track eigenvalue {k}"
            )))
        }
    };
    let direction = ((fb0 - fa0) * (b.lambda - a.lambda)).signum() as i8;

    let mut lo = Trial {
        lambda: a.lambda,
        value: fa0,
        state: a.state.clone(),
    };
    let mut hi = Trial {
        lambda: b.lambda,
        value: fb0,
        state: b.state.clone(),
    };
    let mut best: Option<(Trial, Spectrum)> = None;
    let norm = a.norm_inf.max(b.norm_inf);
    let target = 1e-10 * norm;
    let tol = 1e-8 * norm;

    if lo.value * hi.value < 0.0 {
        for _ in 0..MAX_REFINE_ITERS {
            let mut lambda = (lo.lambda * hi.value - hi.lambda * lo.value) / (hi.value - lo.value);
            let width = hi.lambda - lo.lambda;
            let (trial, spectrum) = match solve_at(params, grid, &lo, &hi, lambda, m, k, controls) {
                Ok(r) => r,
                Err(SktError::Singular { .. }) => {
                    // exactly singular Jacobian: step off the crossing a little
                    lambda += 1e-7 * width;
                    match solve_at(params, grid, &lo, &hi, lambda, m, k, controls) {
                        Ok(r) => r,
                        Err(e) => {
                            log::debug!("crossing refinement stopped at lambda = {lambda:.6}: {e}");
                            break;
                        }
                    }
                }
                Err(e) => {
                    log::debug!("crossing refinement stopped at lambda = {lambda:.6}: {e}");
                    break;
                }
            };
            let done = trial.value.abs() <= target;
            let better = best
                .as_ref()
                .is_none_or(|(t, _)| trial.value.abs() < t.value.abs());
            let next = Trial {
                lambda: trial.lambda,
                value: trial.value,
                state: trial.state.clone(),
            };
            if better {
                best = Some((trial, spectrum));
            }
            if done {
                break;
            }
            if next.value * hi.value < 0.0 {
                lo = std::mem::replace(&mut hi, next);
            } else {
                lo.value *= 0.5;
                hi = next;
            }
            if (hi.lambda - lo.lambda).abs() <= 1e-13 * hi.lambda.abs().max(1.0) {
                break;
            }
        }
    }

    let (trial, spectrum) = match best {
        Some(b) => b,
        None => {
            // no bracket; report the endpoint closer to the crossing
            let p = if fa0.abs() <= fb0.abs() { a } else { b };
            let lin = assemble_linearization(&params.with_lambda(p.lambda), grid, &p.state)?;
            let spectrum = morse_spectrum(&lin, m)?;
            let value = spectrum.eigenvalues.get(k).map_or(f64::NAN, |mu| mu.re);
            (
                Trial {
                    lambda: p.lambda,
                    value,
                    state: p.state.clone(),
                },
                spectrum,
            )
        }
    };
    let kernel = spectrum
        .eigenvectors
        .get(k)
        .map(|q| {
            let re = q.map(|z| z.re);
            let norm = re.norm();
            re / norm
        })
        .unwrap_or_else(|| DVector::zeros(2 * grid.n));
    let approximate = !(trial.value.abs() <= tol);
    if approximate {
        log::warn!(
            "crossing near lambda = {:.6} refined only to |mu| = {:.3e} (tolerance {:.3e})",
            trial.lambda,
            trial.value.abs(),
            tol
        );
    }
    Ok(BifurcationEvent {
        lambda_star: trial.lambda,
        kernel_vector: kernel,
        crossing_direction: direction,
        eigenvalue: trial.value,
        norm_inf: spectrum.norm_inf,
        approximate,
        index_before: na,
        index_after: nb,
        state: Some(trial.state),
        parent_tangent: (b.lambda != a.lambda)
            .then(|| (b.state.stacked() - a.state.stacked()) / (b.lambda - a.lambda)),
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_at(
    params: &ModelParams,
    grid: &Grid,
    lo: &Trial,
    hi: &Trial,
    lambda: f64,
    m: usize,
    k: usize,
    controls: &StepControls,
) -> Result<(Trial, Spectrum)> {
    let s = (lambda - lo.lambda) / (hi.lambda - lo.lambda);
    let guess = SteadyState {
        u: &lo.state.u * (1.0 - s) + &hi.state.u * s,
        v: &lo.state.v * (1.0 - s) + &hi.state.v * s,
        tag: lo.state.tag,
    };
    let p = params.with_lambda(lambda);
    let state = match newton_solve(&p, grid, &guess, &controls.newton) {
        Ok(state) => state,
        Err(SktError::Divergence { .. }) => march(params, grid, lo, hi, lambda, controls)?,
        Err(e) => return Err(e),
    };
    let lin = assemble_linearization(&p, grid, &state)?;
    let spectrum = morse_spectrum(&lin, m)?;
    let value = spectrum.eigenvalues.get(k).map(|mu| mu.re).ok_or_else(|| {
        SktError::Spectral(format!(
            "fewer than {} eigenvalues at lambda = {lambda}",
            k + 1
        ))
    })?;
    Ok((
        Trial {
            lambda,
            value,
            state,
        },
        spectrum,
    ))
}

/// Reach `lambda` from the nearer bracket end in small secant-predicted steps.
/// Close to a branch point the Newton basin shrinks with the critical
/// eigenvalue, so a single interpolated guess across the bracket can miss it.
fn march(
    params: &ModelParams,
    grid: &Grid,
    lo: &Trial,
    hi: &Trial,
    lambda: f64,
    controls: &StepControls,
) -> Result<SteadyState> {
    let (start, other) = if (lambda - lo.lambda).abs() <= (lambda - hi.lambda).abs() {
        (lo, hi)
    } else {
        (hi, lo)
    };
    let mut slope = (other.state.stacked() - start.state.stacked()) / (other.lambda - start.lambda);
    let mut z = start.state.stacked();
    let mut at = start.lambda;
    let tag = start.state.tag;
    for i in 1..=MARCH_STEPS {
        let next = start.lambda + (lambda - start.lambda) * i as f64 / MARCH_STEPS as f64;
        let guess = SteadyState::from_stacked(&(&z + &slope * (next - at)), tag);
        let state = newton_solve(&params.with_lambda(next), grid, &guess, &controls.newton)?;
        let znew = state.stacked();
        slope = (&znew - &z) / (next - at);
        z = znew;
        at = next;
    }
    Ok(SteadyState::from_stacked(&z, tag))
}
