//! Linearly implicit time stepping of the parabolic system.
//!
//! Each step solves
//! `(I − dt Δ_h diag(1 + α v)) u⁺ = u + dt u (λ − b1 u − c1 v)` and the
//! analogous equation for `v`, with both diffusion coefficients frozen at the
//! current step. Steady states of the discrete system are exact fixed points.

use nalgebra::DVector;

use crate::error::{Result, SktError};
use crate::model::{Grid, ModelParams, SteadyState, Tridiag};
use crate::solvers::linear::tridiag_solve;

/// Norm of the stacked state above which a run counts as blown up.
pub const BLOW_UP_NORM: f64 = 1e6;
/// Number of snapshots aimed for over the horizon.
pub const SNAPSHOTS: usize = 200;
/// Minimum probe samples for a growth-rate fit.
pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SteadyState>,
    /// `‖(u, v) − reference‖₂` at each snapshot, when a reference was given.
    pub probe: Option<Vec<f64>>,
}

impl Trajectory {
    fn record(&mut self, time: f64, state: &SteadyState, reference: Option<&SteadyState>) {
        self.times.push(time);
        self.states.push(state.clone());
        if let (Some(probe), Some(r)) = (self.probe.as_mut(), reference) {
            probe.push((state.stacked() - r.stacked()).norm());
        }
    }

    pub fn last(&self) -> Option<&SteadyState> {
        self.states.last()
    }
}

fn implicit_diffusion(grid: &Grid, dt: f64, other: &DVector<f64>, alpha: f64) -> Tridiag {
    let a: Vec<f64> = other.iter().map(|&w| dt * (1.0 + alpha * w)).collect();
    Tridiag::diffusion(grid, &a, &vec![1.0; grid.n])
}

/// Clamp negative entries to zero; returns the most negative value seen.
fn clamp_negative(w: &mut DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for x in w.iter_mut() {
        if *x < 0.0 {
            worst = worst.min(*x);
            *x = 0.0;
        }
    }
    worst
}

/// Integrate from `initial` up to time `t_end` with step `dt`. Snapshots are
/// stored every `max(1, ⌊t_end / (200 dt)⌋)` steps, plus the initial state.
pub fn evolve(
    params: &ModelParams,
    grid: &Grid,
    initial: &SteadyState,
    t_end: f64,
    dt: f64,
    reference: Option<&SteadyState>,
) -> Result<Trajectory> {
    params.validate()?;
    initial.check_grid(grid)?;
    if let Some(r) = reference {
        r.check_grid(grid)?;
    }
    if !(dt > 0.0 && dt.is_finite() && t_end > 0.0 && t_end.is_finite()) {
        return Err(SktError::Input(format!(
            "need dt > 0 and horizon > 0, got dt = {dt}, horizon = {t_end}"
        )));
    }
    if initial.u.iter().chain(initial.v.iter()).any(|&x| x < 0.0) {
        return Err(SktError::Input("initial state must be nonnegative".into()));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let every = ((t_end / (SNAPSHOTS as f64 * dt)).floor() as usize).max(1);
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        probe: reference.map(|_| Vec::new()),
    };
    let mut state = initial.clone();
    traj.record(0.0, &state, reference);

    let ModelParams {
        lambda,
        alpha,
        b1,
        b2,
        c1,
        c2,
        ..
    } = *params;
    for step in 1..=steps {
        let (u, v) = (&state.u, &state.v);
        let ru = DVector::from_fn(grid.n, |i, _| {
            u[i] + dt * u[i] * (lambda - b1 * u[i] - c1 * v[i])
        });
        let rv = DVector::from_fn(grid.n, |i, _| {
            v[i] + dt * v[i] * (lambda - b2 * u[i] - c2 * v[i])
        });
        let mut u_next = tridiag_solve(&implicit_diffusion(grid, dt, v, alpha), &ru)?;
        let mut v_next = tridiag_solve(&implicit_diffusion(grid, dt, u, alpha), &rv)?;
        let time = step as f64 * dt;
        let worst = clamp_negative(&mut u_next).min(clamp_negative(&mut v_next));
        if worst < -1e-8 {
            log::warn!("negative undershoot {worst:.3e} at t = {time:.6}; clamped to zero");
        }
        state.u = u_next;
        state.v = v_next;
        let norm = state.stacked().norm();
        if !(norm <= BLOW_UP_NORM) {
            traj.record(time, &state, reference);
            return Err(SktError::BlowUp {
                time,
                norm,
                partial: Box::new(traj),
            });
        }
        if step % every == 0 || step == steps {
            traj.record(time, &state, reference);
        }
    }
    Ok(traj)
}

/// Least-squares slope of `ln probe` against time over the samples with
/// `window.0 < probe < window.1`.
pub fn growth_rate(trajectory: &Trajectory, window: (f64, f64)) -> Result<f64> {
    let probe = trajectory
        .probe
        .as_ref()
        .ok_or_else(|| SktError::Input("trajectory carries no probe series".into()))?;
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo) {
        return Err(SktError::Input(format!(
            "invalid probe window ({lo}, {hi})"
        )));
    }
    let samples: Vec<(f64, f64)> = trajectory
        .times
        .iter()
        .zip(probe)
        .filter(|(_, &p)| p > lo && p < hi)
        .map(|(&t, &p)| (t, p.ln()))
        .collect();
    if samples.len() < MIN_SAMPLES {
        return Err(SktError::Estimation {
            needed: MIN_SAMPLES,
            found: samples.len(),
        });
    }
    let count = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / count;
    let y_mean = samples.iter().map(|s| s.1).sum::<f64>() / count;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in &samples {
        sty += (t - t_mean) * (y - y_mean);
        stt += (t - t_mean) * (t - t_mean);
    }
    Ok(sty / stt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BranchTag;

    fn synthetic(probe: impl Fn(f64) -> f64) -> Trajectory {
        let times: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let probe = Some(times.iter().map(|&t| probe(t)).collect());
        Trajectory {
            states: vec![SteadyState::zeros(1); times.len()],
            times,
            probe,
        }
    }

    #[test]
    fn exponential_probe_rate() {
        let rate =
            growth_rate(&synthetic(|t| 1e-3 * (0.7 * t).exp()), (0.0, f64::INFINITY)).unwrap();
        assert!((rate - 0.7).abs() < 1e-6);
    }

    #[test]
    fn constant_probe_rate() {
        let rate = growth_rate(&synthetic(|_| 0.5), (0.1, 1.0)).unwrap();
        assert!(rate.abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let traj = synthetic(|t| (0.7 * t).exp());
        assert!(matches!(
            growth_rate(&traj, (1.0, 1.5)),
            Err(SktError::Estimation { needed: 10, found }) if found < 10
        ));
    }

    #[test]
    fn snapshot_spacing_and_times() {
        let grid = Grid::new(20, 0.5).unwrap();
        let s = SteadyState::new(
            DVector::from_element(20, 0.1),
            DVector::from_element(20, 0.1),
            BranchTag::Coexistence,
        )
        .unwrap();
        let traj = evolve(&ModelParams::benchmark(20.0), &grid, &s, 0.1, 1e-4, None).unwrap();
        // every 5 steps over 1000 steps, plus the initial state
        assert_eq!(traj.times.len(), 201);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.probe.is_none());
    }

    #[test]
    fn rejects_negative_initial_state() {
        let grid = Grid::new(5, 0.5).unwrap();
        let mut s = SteadyState::zeros(5);
        s.u[2] = -1.0;
        assert!(evolve(&ModelParams::default(), &grid, &s, 1.0, 1e-3, None).is_err());
    }

    #[test]
    fn blow_up_keeps_partial_trajectory() {
        // a huge resource level drives the logistic growth past the threshold
        let grid = Grid::new(5, 0.5).unwrap();
        let s = SteadyState::new(
            DVector::from_element(5, 1.0),
            DVector::zeros(5),
            BranchTag::SemitrivialU,
        )
        .unwrap();
        let p = ModelParams {
            b1: 1e-9,
            ..ModelParams::benchmark(1e3)
        };
        match evolve(&p, &grid, &s, 10.0, 1e-3, None) {
            Err(SktError::BlowUp { partial, norm, .. }) => {
                assert!(norm > BLOW_UP_NORM);
                assert!(!partial.times.is_empty());
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
