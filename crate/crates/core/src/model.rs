//! Domain types and the discrete stationary problem.
//!
//! The interval `(-ell, ell)` is discretized by `n` uniformly spaced interior
//! nodes; Dirichlet values at `±ell` are eliminated. The discrete Laplacian is
//! the standard three-point stencil applied to the *composite* variables
//! `(1 + alpha v) u` and `(1 + alpha u) v`, so every diffusion operator in this
//! crate has the form `-Δ_h diag(a) + diag(c)`.
//!
//! Unknown vectors are stored field-blocked: `[u_1..u_n, v_1..v_n]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};

/// Scalar parameters of the stationary SKT system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: f64,
    pub alpha: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub ell: f64,
}

impl ModelParams {
    pub fn new(
        lambda: f64,
        alpha: f64,
        b1: f64,
        b2: f64,
        c1: f64,
        c2: f64,
        ell: f64,
    ) -> Result<Self> {
        let p = Self {
            lambda,
            alpha,
            b1,
            b2,
            c1,
            c2,
            ell,
        };
        p.validate()?;
        Ok(p)
    }

    /// The benchmark setting `Ω = (-0.5, 0.5)`, `α = 20`, `b1 = 3`, `b2 = 2`,
    /// `c1 = 2`, `c2 = 1` at resource level `lambda`.
    pub fn benchmark(lambda: f64) -> Self {
        Self {
            lambda,
            alpha: 20.0,
            b1: 3.0,
            b2: 2.0,
            c1: 2.0,
            c2: 1.0,
            ell: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("b1", self.b1),
            ("b2", self.b2),
            ("c1", self.c1),
            ("c2", self.c2),
            ("ell", self.ell),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SktError::Input(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        if !self.lambda.is_finite() {
            return Err(SktError::Input(format!(
                "lambda must be finite, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..*self }
    }

    /// Parameters of the species-exchanged system `(u, v, b1, c1, b2, c2) -> (v, u, c2, b2, c1, b1)`.
    pub fn exchanged(&self) -> Self {
        Self {
            b1: self.c2,
            c1: self.b2,
            b2: self.c1,
            c2: self.b1,
            ..*self
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::benchmark(20.0)
    }
}

/// Uniform interior-node mesh on `(-ell, ell)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub ell: f64,
    pub h: f64,
}

impl Grid {
    pub fn new(n: usize, ell: f64) -> Result<Self> {
        if n < 3 {
            return Err(SktError::Input(format!(
                "grid needs at least 3 interior nodes, got {n}"
            )));
        }
        if !(ell.is_finite() && ell > 0.0) {
            return Err(SktError::Input(format!(
                "half-length must be > 0, got {ell}"
            )));
        }
        Ok(Self {
            n,
            ell,
            h: 2.0 * ell / (n as f64 + 1.0),
        })
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.ell + (i as f64 + 1.0) * self.h
    }

    pub fn nodes(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| self.node(i))
    }

    /// `1 / h^2`
    pub fn inv_h2(&self) -> f64 {
        1.0 / (self.h * self.h)
    }

    /// Grid-weighted L2 norm `sqrt(h Σ w_i^2)`, the discrete analogue of `‖w‖_{L²(Ω)}`.
    pub fn l2_norm(&self, w: &DVector<f64>) -> f64 {
        (self.h * w.norm_squared()).sqrt()
    }

    /// Trapezoid sum of nodal values; boundary values are zero.
    pub fn integrate(&self, w: impl IntoIterator<Item = f64>) -> f64 {
        self.h * w.into_iter().sum::<f64>()
    }

    /// `Δ_h w` with zero Dirichlet ghost values.
    pub fn laplacian(&self, w: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let s = self.inv_h2();
        DVector::from_fn(n, |i, _| {
            let left = if i > 0 { w[i - 1] } else { 0.0 };
            let right = if i + 1 < n { w[i + 1] } else { 0.0 };
            (left - 2.0 * w[i] + right) * s
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTag {
    Trivial,
    SemitrivialU,
    SemitrivialV,
    Coexistence,
    SegregationPlus,
    SegregationMinus,
}

impl BranchTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchTag::Trivial => "trivial",
            BranchTag::SemitrivialU => "semitrivial_u",
            BranchTag::SemitrivialV => "semitrivial_v",
            BranchTag::Coexistence => "coexistence",
            BranchTag::SegregationPlus => "segregation_plus",
            BranchTag::SegregationMinus => "segregation_minus",
        }
    }
}

impl std::str::FromStr for BranchTag {
    type Err = SktError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "trivial" => BranchTag::Trivial,
            "semitrivial_u" => BranchTag::SemitrivialU,
            "semitrivial_v" => BranchTag::SemitrivialV,
            "coexistence" => BranchTag::Coexistence,
            "segregation_plus" => BranchTag::SegregationPlus,
            "segregation_minus" => BranchTag::SegregationMinus,
            other => return Err(SktError::Input(format!("unknown branch tag '{other}'"))),
        })
    }
}

/// Nodal values of `(u, v)` at the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub tag: BranchTag,
}

impl SteadyState {
    pub fn new(u: DVector<f64>, v: DVector<f64>, tag: BranchTag) -> Result<Self> {
        if u.len() != v.len() {
            return Err(SktError::Input(format!(
                "u has {} nodes but v has {}",
                u.len(),
                v.len()
            )));
        }
        Ok(Self { u, v, tag })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            u: DVector::zeros(n),
            v: DVector::zeros(n),
            tag: BranchTag::Trivial,
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Blocked vector `[u; v]`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(2 * n, |i, _| if i < n { self.u[i] } else { self.v[i - n] })
    }

    pub fn from_stacked(z: &DVector<f64>, tag: BranchTag) -> Self {
        let n = z.len() / 2;
        Self {
            u: z.rows(0, n).into_owned(),
            v: z.rows(n, n).into_owned(),
            tag,
        }
    }

    /// Spatial reflection `x -> -x`.
    pub fn reflected(&self) -> Self {
        let n = self.n();
        Self {
            u: DVector::from_fn(n, |i, _| self.u[n - 1 - i]),
            v: DVector::from_fn(n, |i, _| self.v[n - 1 - i]),
            tag: self.tag,
        }
    }

    /// Exchange the two species.
    pub fn exchanged(&self) -> Self {
        Self {
            u: self.v.clone(),
            v: self.u.clone(),
            tag: self.tag,
        }
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.u.len() != grid.n || self.v.len() != grid.n {
            return Err(SktError::Input(format!(
                "state has ({}, {}) nodes, grid has {}",
                self.u.len(),
                self.v.len(),
                grid.n
            )));
        }
        Ok(())
    }
}

/// Tridiagonal `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n - 1],
            diag: vec![0.0; n],
            sup: vec![0.0; n - 1],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sub: vec![0.0; n - 1],
            diag: vec![1.0; n],
            sup: vec![0.0; n - 1],
        }
    }

    /// `-Δ_h diag(a) + diag(c)`.
    pub fn diffusion(grid: &Grid, a: &[f64], c: &[f64]) -> Self {
        let n = grid.n;
        let s = grid.inv_h2();
        Self {
            sub: (0..n - 1).map(|i| -a[i] * s).collect(),
            diag: (0..n).map(|i| 2.0 * a[i] * s + c[i]).collect(),
            sup: (0..n - 1).map(|i| -a[i + 1] * s).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.sup[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.sub[j]
        } else if i + 1 == j {
            self.sup[i]
        } else {
            0.0
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.sub
            .iter()
            .chain(&self.diag)
            .chain(&self.sup)
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn row_abs_sum(&self, i: usize) -> f64 {
        let mut s = self.diag[i].abs();
        if i > 0 {
            s += self.sub[i - 1].abs();
        }
        if i + 1 < self.n() {
            s += self.sup[i].abs();
        }
        s
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
        Self {
            sub: z(&self.sub, &other.sub),
            diag: z(&self.diag, &other.diag),
            sup: z(&self.sup, &other.sup),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub_m(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.zip_with(self, |a, _| k * a)
    }

    /// `diag(d) · self`
    pub fn row_scaled(&self, d: &[f64]) -> Self {
        Self {
            sub: (0..self.sub.len())
                .map(|j| d[j + 1] * self.sub[j])
                .collect(),
            diag: (0..self.n()).map(|i| d[i] * self.diag[i]).collect(),
            sup: (0..self.sup.len()).map(|i| d[i] * self.sup[i]).collect(),
        }
    }

    /// `self · diag(d)`
    pub fn col_scaled(&self, d: &[f64]) -> Self {
        Self {
            sub: (0..self.sub.len()).map(|j| self.sub[j] * d[j]).collect(),
            diag: (0..self.n()).map(|i| self.diag[i] * d[i]).collect(),
            sup: (0..self.sup.len())
                .map(|i| self.sup[i] * d[i + 1])
                .collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}

/// `2n × 2n` operator made of four tridiagonal blocks in field-blocked order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiag {
    pub uu: Tridiag,
    pub uv: Tridiag,
    pub vu: Tridiag,
    pub vv: Tridiag,
}

impl BlockTridiag {
    pub fn identity(n: usize) -> Self {
        Self {
            uu: Tridiag::identity(n),
            uv: Tridiag::zeros(n),
            vu: Tridiag::zeros(n),
            vv: Tridiag::identity(n),
        }
    }

    pub fn n(&self) -> usize {
        self.uu.n()
    }

    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let (xu, xv) = (&x.as_slice()[..n], &x.as_slice()[n..]);
        let (a, b) = (self.uu.matvec(xu), self.uv.matvec(xv));
        let (c, d) = (self.vu.matvec(xu), self.vv.matvec(xv));
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                a[i] + b[i]
            } else {
                c[i - n] + d[i - n]
            }
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        match (i < n, j < n) {
            (true, true) => self.uu.get(i, j),
            (true, false) => self.uv.get(i, j - n),
            (false, true) => self.vu.get(i - n, j),
            (false, false) => self.vv.get(i - n, j - n),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|i| {
                let top = self.uu.row_abs_sum(i) + self.uv.row_abs_sum(i);
                let bottom = self.vu.row_abs_sum(i) + self.vv.row_abs_sum(i);
                top.max(bottom)
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| self.get(i, j))
    }

    /// `self - shift · I`
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.uu.diag.iter_mut().for_each(|d| *d -= shift);
        out.vv.diag.iter_mut().for_each(|d| *d -= shift);
        out
    }
}

/// Discrete linearization `L(λ, u*, v*)` together with the state it was built at.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    pub matrix: BlockTridiag,
    pub lambda: f64,
    pub base_state: SteadyState,
}

impl LinearizedSystem {
    pub fn norm_inf(&self) -> f64 {
        self.matrix.norm_inf()
    }
}

/// Residual of the stationary problem; zero at a steady state.
///
/// Entry `i` is `Δ_h[(1+αv)u]_i + u_i(λ - b1 u_i - c1 v_i)`, entry `n+i` is
/// `Δ_h[(1+αu)v]_i + v_i(λ - b2 u_i - c2 v_i)`.
pub fn assemble_residual(
    params: &ModelParams,
    grid: &Grid,
    state: &SteadyState,
) -> Result<DVector<f64>> {
    state.check_grid(grid)?;
    let ModelParams {
        lambda,
        alpha,
        b1,
        b2,
        c1,
        c2,
        ..
    } = *params;
    let (u, v) = (&state.u, &state.v);
    let comp_u = u.zip_map(v, |ui, vi| (1.0 + alpha * vi) * ui);
    let comp_v = u.zip_map(v, |ui, vi| (1.0 + alpha * ui) * vi);
    let du = grid.laplacian(&comp_u);
    let dv = grid.laplacian(&comp_v);
    let n = grid.n;
    Ok(DVector::from_fn(2 * n, |k, _| {
        if k < n {
            du[k] + u[k] * (lambda - b1 * u[k] - c1 * v[k])
        } else {
            let i = k - n;
            dv[i] + v[i] * (lambda - b2 * u[i] - c2 * v[i])
        }
    }))
}

/// Negated Jacobian of [`assemble_residual`] with respect to `(u, v)`.
pub fn assemble_linearization(
    params: &ModelParams,
    grid: &Grid,
    state: &SteadyState,
) -> Result<LinearizedSystem> {
    state.check_grid(grid)?;
    let ModelParams {
        lambda,
        alpha,
        b1,
        b2,
        c1,
        c2,
        ..
    } = *params;
    let (u, v) = (state.u.as_slice(), state.v.as_slice());
    let n = grid.n;
    let map = |f: &dyn Fn(usize) -> f64| (0..n).map(f).collect::<Vec<_>>();

    let uu = Tridiag::diffusion(
        grid,
        &map(&|i| 1.0 + alpha * v[i]),
        &map(&|i| -(lambda - 2.0 * b1 * u[i] - c1 * v[i])),
    );
    let uv = Tridiag::diffusion(grid, &map(&|i| alpha * u[i]), &map(&|i| c1 * u[i]));
    let vu = Tridiag::diffusion(grid, &map(&|i| alpha * v[i]), &map(&|i| b2 * v[i]));
    let vv = Tridiag::diffusion(
        grid,
        &map(&|i| 1.0 + alpha * u[i]),
        &map(&|i| -(lambda - b2 * u[i] - 2.0 * c2 * v[i])),
    );
    Ok(LinearizedSystem {
        matrix: BlockTridiag { uu, uv, vu, vv },
        lambda,
        base_state: state.clone(),
    })
}

/// `∂F/∂λ`, which is just the stacked state.
pub fn residual_lambda_derivative(state: &SteadyState) -> DVector<f64> {
    state.stacked()
}

/// Size of the floating-point noise in a residual evaluation at `state`.
///
/// The composite values are multiplied by `4/h²` before cancellation, so an
/// absolute tolerance below this floor cannot be met at fine resolution.
pub fn residual_noise_floor(params: &ModelParams, grid: &Grid, state: &SteadyState) -> f64 {
    let alpha = params.alpha;
    let comp = state
        .u
        .iter()
        .zip(state.v.iter())
        .map(|(&u, &v)| {
            ((1.0 + alpha * v) * u)
                .abs()
                .max(((1.0 + alpha * u) * v).abs())
        })
        .fold(0.0, f64::max);
    64.0 * f64::EPSILON * 4.0 * grid.inv_h2() * comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing_covers_interval() {
        let g = Grid::new(400, 0.5).unwrap();
        assert!((g.h * 401.0 - 1.0).abs() < 1e-14);
        assert!((g.node(0) + 0.5 - g.h).abs() < 1e-15);
        assert!((g.node(399) - 0.5 + g.h).abs() < 1e-14);
    }

    #[test]
    fn grid_rejects_small_n() {
        assert!(Grid::new(2, 0.5).is_err());
        assert!(Grid::new(3, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(-5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_ok());
        assert!(ModelParams::new(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(f64::NAN, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_state_has_zero_residual() {
        let g = Grid::new(20, 0.5).unwrap();
        for lambda in [-3.0, 0.0, 17.0, 120.0] {
            let r = assemble_residual(&ModelParams::benchmark(lambda), &g, &SteadyState::zeros(20))
                .unwrap();
            assert_eq!(r.amax(), 0.0);
        }
    }

    #[test]
    fn residual_rejects_mismatched_state() {
        let g = Grid::new(20, 0.5).unwrap();
        assert!(assemble_residual(&ModelParams::default(), &g, &SteadyState::zeros(19)).is_err());
        assert!(
            assemble_linearization(&ModelParams::default(), &g, &SteadyState::zeros(21)).is_err()
        );
    }

    #[test]
    fn trivial_linearization_is_shifted_laplacian() {
        let g = Grid::new(12, 0.5).unwrap();
        let lambda = 7.5;
        let lin =
            assemble_linearization(&ModelParams::benchmark(lambda), &g, &SteadyState::zeros(12))
                .unwrap();
        let lap = Tridiag::diffusion(&g, &[1.0; 12], &[-lambda; 12]).to_dense();
        let m = lin.matrix.to_dense();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(m[(i, j)], lap[(i, j)]);
                assert_eq!(m[(i + 12, j + 12)], lap[(i, j)]);
                assert_eq!(m[(i, j + 12)], 0.0);
                assert_eq!(m[(i + 12, j)], 0.0);
            }
        }
    }

    #[test]
    fn tridiag_scaling_matches_dense() {
        let g = Grid::new(6, 1.0).unwrap();
        let t = Tridiag::diffusion(&g, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.5; 6]);
        let d = [1.0, -2.0, 0.5, 3.0, 1.5, -1.0];
        let dm = DMatrix::from_diagonal(&DVector::from_row_slice(&d));
        assert!((t.row_scaled(&d).to_dense() - &dm * t.to_dense()).amax() < 1e-12);
        assert!((t.col_scaled(&d).to_dense() - t.to_dense() * &dm).amax() < 1e-12);
    }
}
