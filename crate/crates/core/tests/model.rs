use nalgebra::DVector;
use proptest::prelude::*;

use skt_morse::{
    assemble_linearization, assemble_residual, BranchTag, Grid, ModelParams, SteadyState,
};

fn state(u: Vec<f64>, v: Vec<f64>) -> SteadyState {
    SteadyState::new(
        DVector::from_vec(u),
        DVector::from_vec(v),
        BranchTag::Coexistence,
    )
    .unwrap()
}

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jacobian_matches_central_differences(
        (u, v, d) in (5usize..60).prop_flat_map(|n| (
            positive(n),
            positive(n),
            proptest::collection::vec(-1.0f64..1.0, 2 * n),
        )),
        lambda in 0.0f64..120.0,
        alpha in 0.0f64..100.0,
    ) {
        let n = u.len();
        let grid = Grid::new(n, 0.5).unwrap();
        let params = ModelParams::benchmark(lambda).with_alpha(alpha);
        let s = state(u, v);
        let mut dir = DVector::from_vec(d);
        prop_assume!(dir.norm() > 1e-3);
        dir /= dir.norm();
        let z = s.stacked();
        let eps = 1e-5;
        let at = |z: DVector<f64>| {
            assemble_residual(&params, &grid, &SteadyState::from_stacked(&z, s.tag)).unwrap()
        };
        let fd = (at(&z + &dir * eps) - at(&z - &dir * eps)) / (2.0 * eps);
        let exact = -assemble_linearization(&params, &grid, &s).unwrap().matrix.matvec(&dir);
        let err = (fd - &exact).norm() / exact.norm();
        prop_assert!(err <= 1e-6, "relative error {err:e}");
    }

    #[test]
    fn residual_commutes_with_reflection((u, v) in (4usize..40).prop_flat_map(|n| (positive(n), positive(n)))) {
        let n = u.len();
        let grid = Grid::new(n, 0.5).unwrap();
        let params = ModelParams::benchmark(30.0);
        let s = state(u, v);
        let r = assemble_residual(&params, &grid, &s).unwrap();
        let rr = assemble_residual(&params, &grid, &s.reflected()).unwrap();
        let scale = r.amax().max(1.0);
        for i in 0..n {
            prop_assert!((rr[i] - r[n - 1 - i]).abs() <= 1e-12 * scale);
            prop_assert!((rr[n + i] - r[2 * n - 1 - i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn residual_commutes_with_species_exchange((u, v) in (4usize..40).prop_flat_map(|n| (positive(n), positive(n)))) {
        let n = u.len();
        let grid = Grid::new(n, 0.5).unwrap();
        let params = ModelParams::benchmark(30.0);
        let s = state(u, v);
        let r = assemble_residual(&params, &grid, &s).unwrap();
        let rx = assemble_residual(&params.exchanged(), &grid, &s.exchanged()).unwrap();
        let scale = r.amax().max(1.0);
        for i in 0..n {
            prop_assert!((rx[i] - r[n + i]).abs() <= 1e-12 * scale);
            prop_assert!((rx[n + i] - r[i]).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn sine_mode_is_an_eigenvector_of_the_trivial_linearization() {
    let grid = Grid::new(50, 0.5).unwrap();
    let params = ModelParams::benchmark(7.0);
    let lin = assemble_linearization(&params, &grid, &SteadyState::zeros(50)).unwrap();
    let phi = DVector::from_fn(100, |k, _| {
        if k < 50 {
            (std::f64::consts::PI * (grid.node(k) + 0.5)).sin()
        } else {
            0.0
        }
    });
    let mu = 4.0 * grid.inv_h2() * (std::f64::consts::PI * grid.h / 2.0).sin().powi(2) - 7.0;
    let r = lin.matrix.matvec(&phi) - &phi * mu;
    assert!(r.amax() < 1e-8 * lin.norm_inf());
}
