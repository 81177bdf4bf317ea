use skt_morse::continuation::{
    coexistence_start, continue_branch, detect_bifurcations, trivial_start, StepControls,
    StopCriteria,
};
use skt_morse::limits::laplacian_eigenvalue;
use skt_morse::{Grid, ModelParams};

#[test]
fn trivial_branch_gains_two_unstable_directions_per_mode() {
    let grid = Grid::new(100, 0.5).unwrap();
    let params = ModelParams::benchmark(5.0);
    let controls = StepControls {
        ds_max: 2.0,
        ..Default::default()
    };
    let start = trivial_start(&params, &grid, 5.0, controls.m).unwrap();
    let branch = continue_branch(
        &params,
        &grid,
        start,
        1.0,
        &controls,
        &StopCriteria::up_to(50.0),
    )
    .unwrap();
    let last = branch.points.last().unwrap();
    assert!((last.lambda - 50.0).abs() < 1e-9);
    assert_eq!(branch.points[0].morse_index, 0);
    assert_eq!(last.morse_index, 4);
    let events = detect_bifurcations(&branch, &controls).unwrap();
    assert_eq!(events.len(), 2);
    let l1 = laplacian_eigenvalue(&grid, 1);
    assert!(
        (events[0].lambda_star - l1).abs() < 1e-6 * l1,
        "{} vs {l1}",
        events[0].lambda_star
    );
    assert!(!events[0].approximate);
}

#[test]
fn coexistence_branch_loses_stability_near_second_mode() {
    let grid = Grid::new(100, 0.5).unwrap();
    let params = ModelParams::benchmark(10.0);
    let controls = StepControls::default();
    let start = coexistence_start(&params, &grid, &controls.newton, controls.m).unwrap();
    assert_eq!(start.morse_index, 1);
    let branch = continue_branch(
        &params,
        &grid,
        start,
        1.0,
        &controls,
        &StopCriteria::up_to(45.0),
    )
    .unwrap();
    let events = detect_bifurcations(&branch, &controls).unwrap();
    assert_eq!(events.len(), 1, "{events:?}");
    let beta2 = events[0].lambda_star;
    assert!(beta2 > 38.5 && beta2 < 40.34, "beta2 = {beta2}");
    assert!(events[0].eigenvalue.abs() <= 1e-8 * events[0].norm_inf);
}

#[test]
fn segregation_branches_bifurcate_at_beta2() {
    use skt_morse::continuation::{continue_branch_along, switch_branch, SwitchSettings};
    let grid = Grid::new(100, 0.5).unwrap();
    let params = ModelParams::benchmark(10.0);
    let controls = StepControls::default();
    let start = coexistence_start(&params, &grid, &controls.newton, controls.m).unwrap();
    let branch = continue_branch(
        &params,
        &grid,
        start,
        1.0,
        &controls,
        &StopCriteria::up_to(45.0),
    )
    .unwrap();
    let events = detect_bifurcations(&branch, &controls).unwrap();
    let event = &events[0];
    let parent = branch
        .points
        .iter()
        .min_by(|a, b| {
            (a.lambda - event.lambda_star)
                .abs()
                .total_cmp(&(b.lambda - event.lambda_star).abs())
        })
        .unwrap();
    let settings = SwitchSettings::default();
    let mut ends = Vec::new();
    for sign in [1.0, -1.0] {
        let delta = sign * settings.default_amplitude(&parent.state);
        let child = switch_branch(&params, &grid, event, parent, delta, &settings).unwrap();
        assert!((child.lambda - event.lambda_star).abs() < 0.5);
        let hint = (event.kernel_vector.clone() * sign, 0.0);
        let seg = continue_branch_along(
            &params,
            &grid,
            child,
            hint,
            &controls,
            &StopCriteria::up_to(60.0),
        )
        .unwrap();
        let last = seg.points.last().unwrap();
        assert!((last.lambda - 60.0).abs() < 1e-9);
        for p in seg
            .points
            .iter()
            .filter(|p| p.lambda > event.lambda_star + 0.5)
        {
            assert_eq!(p.morse_index, 1, "index at lambda = {}", p.lambda);
        }
        ends.push(last.state.clone());
    }
    // the two orientations are reflections of each other
    let n = grid.n;
    let mirrored = |w: &nalgebra::DVector<f64>| nalgebra::DVector::from_fn(n, |i, _| w[n - 1 - i]);
    let scale = ends[0].u.amax();
    assert!((mirrored(&ends[0].u) - &ends[1].u).amax() < 1e-6 * scale);
    assert!((mirrored(&ends[0].v) - &ends[1].v).amax() < 1e-6 * scale);
    assert!((&ends[0].u - &ends[1].u).amax() > 1e-2 * scale);
}
