//! Large cross-diffusion limits: the diffusive logistic equation, the two
//! limiting systems, weighted Sturm-Liouville eigenproblems and the
//! decoupled spectrum of the limiting linearization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SktError};
use crate::model::{BlockTridiag, Grid, ModelParams, Tridiag};
use crate::solvers::eigen::full_spectrum;
use crate::solvers::linear::tridiag_solve;
use crate::solvers::newton::{damped_newton, NewtonFailure, NewtonSettings, NonlinearSystem};

/// `λ_j^h = (4/h²) sin²(jπ / (2(n+1)))`, `j = 1..=n`.
pub fn laplacian_eigenvalue(grid: &Grid, j: usize) -> f64 {
    let t = j as f64 * PI / (2.0 * (grid.n as f64 + 1.0));
    4.0 * grid.inv_h2() * t.sin().powi(2)
}

/// `sin(jπ(x+ℓ)/(2ℓ))` at the nodes (unnormalized; peak value 1 up to grid offset).
pub fn sine_mode(grid: &Grid, j: usize) -> DVector<f64> {
    DVector::from_fn(grid.n, |i, _| {
        (j as f64 * PI * (grid.node(i) + grid.ell) / (2.0 * grid.ell)).sin()
    })
}

#[derive(Debug, Clone)]
pub struct LaplacianMode {
    pub j: usize,
    pub value: f64,
    /// Unit 2-norm.
    pub vector: DVector<f64>,
}

/// Closed-form eigenpairs of `-Δ_h` with Dirichlet conditions, ascending.
pub fn discrete_laplacian_eigs(grid: &Grid) -> Vec<LaplacianMode> {
    (1..=grid.n)
        .map(|j| {
            let v = sine_mode(grid, j);
            let norm = v.norm();
            LaplacianMode {
                j,
                value: laplacian_eigenvalue(grid, j),
                vector: v / norm,
            }
        })
        .collect()
}

/// Number of strict sign changes, ignoring exact zeros.
pub fn sign_changes(w: &DVector<f64>) -> usize {
    let mut last = 0.0f64;
    let mut count = 0;
    for &x in w.iter() {
        if x == 0.0 {
            continue;
        }
        if last != 0.0 && (x > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = x;
    }
    count
}

/// Scalar problem `Δ_h x + g(x) = 0` with Jacobian `Δ_h + diag(g'(x))`.
struct ScalarProblem<'a, G, D> {
    grid: &'a Grid,
    g: G,
    dg: D,
}

impl<G, D> NonlinearSystem for ScalarProblem<'_, G, D>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let lap = self.grid.laplacian(x);
        DVector::from_fn(x.len(), |i, _| lap[i] + (self.g)(x[i]))
    }

    fn newton_step(&self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        // -J = -Δ_h - diag(g')
        let c: Vec<f64> = x.iter().map(|&xi| -(self.dg)(xi)).collect();
        let m = Tridiag::diffusion(self.grid, &vec![1.0; self.grid.n], &c);
        tridiag_solve(&m, r)
    }

    fn noise_floor(&self, x: &DVector<f64>) -> f64 {
        64.0 * f64::EPSILON * 4.0 * self.grid.inv_h2() * x.amax()
    }
}

fn run_scalar<G, D>(
    grid: &Grid,
    g: G,
    dg: D,
    seed: DVector<f64>,
    what: &str,
) -> Result<DVector<f64>>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let problem = ScalarProblem { grid, g, dg };
    match damped_newton(&problem, seed, &NewtonSettings::default()) {
        Ok(run) => Ok(run.x),
        Err(NewtonFailure::Diverged {
            residual,
            iterations,
            ..
        }) => Err(SktError::Solver(format!(
            "{what}: newton stopped at residual {residual:.3e} after {iterations} iterations"
        ))),
        Err(NewtonFailure::Failed(e)) => Err(SktError::Solver(format!("{what}: {e}"))),
    }
}

/// Positive solution of `Δθ + θ(λ − bθ) = 0`, or `None` when `λ ≤ λ_1^h`.
pub fn solve_logistic(lambda: f64, b: f64, grid: &Grid) -> Result<Option<DVector<f64>>> {
    if !(b > 0.0 && b.is_finite() && lambda.is_finite()) {
        return Err(SktError::Input(format!(
            "logistic needs finite lambda and b > 0, got ({lambda}, {b})"
        )));
    }
    let l1 = laplacian_eigenvalue(grid, 1);
    if lambda <= l1 {
        return Ok(None);
    }
    // one-mode Galerkin amplitude
    let phi = sine_mode(grid, 1);
    let s2: f64 = phi.iter().map(|p| p * p).sum();
    let s3: f64 = phi.iter().map(|p| p * p * p).sum();
    let seed = &phi * ((lambda - l1) / b * s2 / s3);
    let theta = run_scalar(
        grid,
        |t| t * (lambda - b * t),
        |t| lambda - 2.0 * b * t,
        seed,
        "logistic equation",
    )?;
    if theta.iter().any(|&t| t <= 0.0) {
        return Err(SktError::Solver(format!(
            "logistic iteration lost positivity at lambda = {lambda}"
        )));
    }
    Ok(Some(theta))
}

/// Finite eigenvalues of `-Δ_h φ + qφ = μ r φ`, ascending.
///
/// With `r > 0` everywhere the pencil is similar to the symmetric tridiagonal
/// `R^{-1/2}(−Δ_h + Q)R^{-1/2}` and is solved by Sturm bisection. Nodes with
/// zero weight are eliminated by a Schur complement first.
pub fn weighted_eigenvalues(q: &DVector<f64>, r: &DVector<f64>, grid: &Grid) -> Result<Vec<f64>> {
    let (d, e) = check_weighted(q, r, grid)?;
    if r.iter().all(|&ri| ri > 0.0) {
        let sym = symmetrize(&d, &e, r);
        Ok((0..grid.n)
            .map(|k| tridiag_eigenvalue(&sym.0, &sym.1, k))
            .collect())
    } else {
        let (values, _) = schur_weighted(&d, &e, r)?;
        Ok(values)
    }
}

/// `μ_1(q, r)` and its positive eigenvector (unit 2-norm).
pub fn weighted_principal_eig(
    q: &DVector<f64>,
    r: &DVector<f64>,
    grid: &Grid,
) -> Result<(f64, DVector<f64>)> {
    let (d, e) = check_weighted(q, r, grid)?;
    let (mu, mut phi) = if r.iter().all(|&ri| ri > 0.0) {
        let (sd, se) = symmetrize(&d, &e, r);
        let mu = tridiag_eigenvalue(&sd, &se, 0);
        let y = tridiag_eigenvector(&sd, &se, mu)?;
        (mu, y.component_div(&r.map(f64::sqrt)))
    } else {
        let (values, vectors) = schur_weighted(&d, &e, r)?;
        (values[0], vectors)
    };
    if phi.sum() < 0.0 {
        phi.neg_mut();
    }
    let norm = phi.norm();
    Ok((mu, phi / norm))
}

fn check_weighted(q: &DVector<f64>, r: &DVector<f64>, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    if q.len() != grid.n || r.len() != grid.n {
        return Err(SktError::Input(format!(
            "potential/weight lengths ({}, {}) differ from grid {}",
            q.len(),
            r.len(),
            grid.n
        )));
    }
    if r.iter().any(|&ri| !(ri >= 0.0) || !ri.is_finite()) {
        return Err(SktError::Input(
            "weight must be finite and nonnegative".into(),
        ));
    }
    if r.iter().all(|&ri| ri == 0.0) {
        return Err(SktError::Input("weight is identically zero".into()));
    }
    let s = grid.inv_h2();
    let d = q.iter().map(|qi| 2.0 * s + qi).collect();
    let e = vec![-s; grid.n - 1];
    Ok((d, e))
}

fn symmetrize(d: &[f64], e: &[f64], r: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let sd = d.iter().zip(r.iter()).map(|(di, ri)| di / ri).collect();
    let se = e
        .iter()
        .enumerate()
        .map(|(i, ei)| ei / (r[i] * r[i + 1]).sqrt())
        .collect();
    (sd, se)
}

/// Eliminate zero-weight nodes; returns all finite eigenvalues and the
/// principal eigenvector on the full grid.
fn schur_weighted(d: &[f64], e: &[f64], r: &DVector<f64>) -> Result<(Vec<f64>, DVector<f64>)> {
    let n = d.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            d[i]
        } else if i + 1 == j {
            e[i]
        } else if j + 1 == i {
            e[j]
        } else {
            0.0
        }
    });
    let pos: Vec<usize> = (0..n).filter(|&i| r[i] > 0.0).collect();
    let zer: Vec<usize> = (0..n).filter(|&i| r[i] == 0.0).collect();
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
    };
    let a_pp = pick(&pos, &pos);
    let a_pz = pick(&pos, &zer);
    let a_zz = pick(&zer, &zer);
    let a_zp = pick(&zer, &pos);
    let lu = a_zz.lu();
    let x = lu.solve(&a_zp).ok_or(SktError::Singular { rcond: 0.0 })?;
    let schur = a_pp - &a_pz * &x;
    let w = DVector::from_iterator(pos.len(), pos.iter().map(|&i| 1.0 / r[i].sqrt()));
    let sym = DMatrix::from_fn(pos.len(), pos.len(), |i, j| {
        w[i] * 0.5 * (schur[(i, j)] + schur[(j, i)]) * w[j]
    });
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..pos.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let y = eig.eigenvectors.column(order[0]).component_mul(&w);
    let phi_z = -&x * &y;
    let mut phi = DVector::zeros(n);
    for (k, &i) in pos.iter().enumerate() {
        phi[i] = y[k];
    }
    for (k, &i) in zer.iter().enumerate() {
        phi[i] = phi_z[k];
    }
    Ok((values, phi))
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut p = d[0] - x;
    if p < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let prev = if p.abs() < tiny {
            -tiny.copysign(-p)
        } else {
            p
        };
        p = d[i] - x - e[i - 1] * e[i - 1] / prev;
        if p < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest eigenvalue (0-based) by bisection.
pub fn tridiag_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let n = d.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let rad =
            if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - rad);
        hi = hi.max(d[i] + rad);
    }
    let pad = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
    lo -= pad;
    hi += pad;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn tridiag_eigenvector(d: &[f64], e: &[f64], mu: f64) -> Result<DVector<f64>> {
    let n = d.len();
    let scale = d
        .iter()
        .chain(e)
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let t = Tridiag {
        sub: e.to_vec(),
        diag: d.iter().map(|di| di - mu - 1e-12 * scale).collect(),
        sup: e.to_vec(),
    };
    let lu = t.to_band().factor()?;
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i as f64) * 0.7).sin());
    for _ in 0..3 {
        x = DVector::from_vec(lu.solve(x.as_slice()));
        let norm = x.norm();
        x /= norm;
    }
    Ok(x)
}

/// Limit profile of the coexistence branch: `αu, αv → U`.
#[derive(Debug, Clone)]
pub struct LimitProfileU {
    pub u: DVector<f64>,
    pub z: DVector<f64>,
    pub lambda: f64,
}

/// `U = (−1 + √(1 + 4Z))/2`, written to avoid cancellation.
fn u_of_z(z: f64) -> f64 {
    2.0 * z / (1.0 + (1.0 + 4.0 * z).sqrt())
}

/// Residual of `Δ_h Z + λ U(Z) = 0`, the form of `Δ[(1+U)U] + λU = 0` in
/// `Z = (1+U)U`.
pub fn ls1_z_residual(lambda: f64, z: &DVector<f64>, grid: &Grid) -> DVector<f64> {
    grid.laplacian(z) + z.map(|zi| lambda * u_of_z(zi))
}

pub fn solve_ls1(lambda: f64, grid: &Grid) -> Result<Option<LimitProfileU>> {
    if !lambda.is_finite() {
        return Err(SktError::Input(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    let l1 = laplacian_eigenvalue(grid, 1);
    if lambda <= l1 {
        return Ok(None);
    }
    // Galerkin amplitude t for Z = tφ: λ Σ U(tφ)φ = λ_1 t Σφ²
    let phi = sine_mode(grid, 1);
    let s2: f64 = phi.iter().map(|p| p * p).sum();
    let g = |t: f64| lambda * phi.iter().map(|&p| u_of_z(t * p) * p).sum::<f64>() - l1 * t * s2;
    let (mut lo, mut hi) = (0.0, 1e-3);
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SktError::Solver(
                "no Galerkin amplitude bracket for the limiting coexistence profile".into(),
            ));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let seed = &phi * (0.5 * (lo + hi));
    let z = run_scalar(
        grid,
        |z| lambda * u_of_z(z),
        |z| lambda / (1.0 + 4.0 * z).sqrt(),
        seed,
        "limiting coexistence system",
    )?;
    let u = z.map(u_of_z);
    if u.iter().any(|&ui| ui <= 0.0) {
        return Err(SktError::Solver(format!(
            "limiting coexistence profile lost positivity at lambda = {lambda}"
        )));
    }
    Ok(Some(LimitProfileU { u, z, lambda }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `w > 0` next to `x = −ℓ`.
    Plus,
    Minus,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }
}

/// Sign-changing limit profile of a segregation branch: `(u, v) → (w₊, w₋)`.
#[derive(Debug, Clone)]
pub struct LimitProfileW {
    pub w: DVector<f64>,
    pub lambda: f64,
    pub j: usize,
    pub orientation: Orientation,
}

impl LimitProfileW {
    pub fn positive_part(&self) -> DVector<f64> {
        self.w.map(|x| x.max(0.0))
    }

    pub fn negative_part(&self) -> DVector<f64> {
        self.w.map(|x| (-x).max(0.0))
    }
}

pub fn ls2_residual(params: &ModelParams, w: &DVector<f64>, grid: &Grid) -> DVector<f64> {
    let (lambda, b1, c2) = (params.lambda, params.b1, params.c2);
    grid.laplacian(w) + w.map(|x| ls2_reaction(lambda, b1, c2, x))
}

fn ls2_reaction(lambda: f64, b1: f64, c2: f64, x: f64) -> f64 {
    let (p, m) = (x.max(0.0), (-x).max(0.0));
    lambda * x - b1 * p * p + c2 * m * m
}

/// `f_w = λ − 2b₁w₊ − 2c₂w₋`
fn ls2_derivative(lambda: f64, b1: f64, c2: f64, x: f64) -> f64 {
    lambda - 2.0 * b1 * x.max(0.0) - 2.0 * c2 * (-x).max(0.0)
}

/// Solution of `Δw + λw − b₁w₊² + c₂w₋² = 0` with `j − 1` sign changes, seeded
/// by the `j`-th sine mode at amplitude `0.5(λ − λ_j^h)/max(b₁, c₂)`.
pub fn solve_ls2(
    params: &ModelParams,
    j: usize,
    orientation: Orientation,
    grid: &Grid,
) -> Result<Option<LimitProfileW>> {
    let lj = if (1..=grid.n).contains(&j) {
        laplacian_eigenvalue(grid, j)
    } else {
        f64::INFINITY
    };
    let t = 0.5 * (params.lambda - lj) / params.b1.max(params.c2);
    solve_ls2_seeded(params, j, orientation, grid, t)
}

/// [`solve_ls2`] with an explicit seed amplitude `t > 0`.
pub fn solve_ls2_seeded(
    params: &ModelParams,
    j: usize,
    orientation: Orientation,
    grid: &Grid,
    t: f64,
) -> Result<Option<LimitProfileW>> {
    params.validate()?;
    if j < 2 || j > grid.n {
        return Err(SktError::Input(format!(
            "segregation class j must lie in 2..={}, got {j}",
            grid.n
        )));
    }
    if params.lambda <= laplacian_eigenvalue(grid, j) {
        return Ok(None);
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(SktError::Input(format!(
            "seed amplitude must be positive, got {t}"
        )));
    }
    let (lambda, b1, c2) = (params.lambda, params.b1, params.c2);
    let seed = sine_mode(grid, j) * (t * orientation.sign());
    let w = run_scalar(
        grid,
        |x| ls2_reaction(lambda, b1, c2, x),
        |x| ls2_derivative(lambda, b1, c2, x),
        seed,
        "limiting segregation system",
    )?;
    let found = sign_changes(&w);
    if found != j - 1 || w.amax() == 0.0 {
        return Err(SktError::WrongClass {
            expected: j - 1,
            found,
        });
    }
    Ok(Some(LimitProfileW {
        w,
        lambda,
        j,
        orientation,
    }))
}

/// Negative eigenvalue count of `−Δ_h − diag(λ − 2b₁w₊ − 2c₂w₋)`.
pub fn scalar_limit_morse(params: &ModelParams, w: &DVector<f64>, grid: &Grid) -> Result<usize> {
    if w.len() != grid.n {
        return Err(SktError::Input(format!(
            "profile has {} nodes, grid has {}",
            w.len(),
            grid.n
        )));
    }
    let s = grid.inv_h2();
    let d: Vec<f64> = w
        .iter()
        .map(|&x| 2.0 * s - ls2_derivative(params.lambda, params.b1, params.c2, x))
        .collect();
    let e = vec![-s; grid.n - 1];
    let count = sturm_count(&d, &e, 0.0);
    log::info!(
        "scalar limit at lambda = {}: {} negative eigenvalues, profile has {} sign changes",
        params.lambda,
        count,
        sign_changes(w)
    );
    Ok(count)
}

/// Discrete limiting linearization: blocks `−Δ_h diag(1+U) − λ` on the
/// diagonal and `−Δ_h diag(U)` off the diagonal.
pub fn limiting_operator(lambda: f64, u: &DVector<f64>, grid: &Grid) -> BlockTridiag {
    let n = grid.n;
    let diag = Tridiag::diffusion(grid, u.map(|x| 1.0 + x).as_slice(), &vec![-lambda; n]);
    let off = Tridiag::diffusion(grid, u.as_slice(), &vec![0.0; n]);
    BlockTridiag {
        uu: diag.clone(),
        uv: off.clone(),
        vu: off,
        vv: diag,
    }
}

#[derive(Debug, Clone)]
pub struct LimitDecomposition {
    pub lambda: f64,
    /// Full spectrum of the limiting operator, sorted by real part.
    pub full: Vec<Complex64>,
    /// `{λ_j^h − λ}`, ascending.
    pub set_a: Vec<f64>,
    /// `μ_j(−λ/(1+2U), 1/(1+2U))`, ascending.
    pub set_b: Vec<f64>,
    /// Largest `|full − (A ∪ B)| / max(1, |A ∪ B|)` over sorted pairs.
    pub max_mismatch: f64,
}

impl LimitDecomposition {
    pub fn negative_eigenvalues(&self) -> Vec<f64> {
        self.full
            .iter()
            .filter(|mu| mu.re < 0.0)
            .map(|mu| mu.re)
            .collect()
    }
}

/// Relative tolerance for matching the full limiting spectrum against `A ∪ B`.
pub const DECOMPOSITION_TOL: f64 = 1e-6;

pub fn limiting_eigen_decomposition(lambda: f64, grid: &Grid) -> Result<LimitDecomposition> {
    let profile = solve_ls1(lambda, grid)?.ok_or_else(|| {
        SktError::Input(format!(
            "lambda = {lambda} is not above the first eigenvalue"
        ))
    })?;
    let u = &profile.u;
    let full = full_spectrum(&limiting_operator(lambda, u, grid));
    let set_a: Vec<f64> = (1..=grid.n)
        .map(|j| laplacian_eigenvalue(grid, j) - lambda)
        .collect();
    let weight = u.map(|x| 1.0 / (1.0 + 2.0 * x));
    let set_b = weighted_eigenvalues(&(&weight * -lambda), &weight, grid)?;
    let mut union: Vec<f64> = set_a.iter().chain(&set_b).copied().collect();
    union.sort_by(f64::total_cmp);
    let mut max_mismatch: f64 = 0.0;
    for (mu, expected) in full.iter().zip(&union) {
        let err = ((mu.re - expected).abs() + mu.im.abs()) / expected.abs().max(1.0);
        if err > DECOMPOSITION_TOL {
            return Err(SktError::Decomposition {
                eigenvalue: *expected,
                detail: format!("full-system eigenvalue {mu} differs by relative {err:.3e}"),
            });
        }
        max_mismatch = max_mismatch.max(err);
    }
    Ok(LimitDecomposition {
        lambda,
        full,
        set_a,
        set_b,
        max_mismatch,
    })
}

/// Off-block magnitudes of the limiting operator after the change of variables
/// `h = φ − ψ`, `k = (1+2U)(φ + ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    /// Largest entry of `M_hh − (−Δ_h − λ)`.
    pub h_block_deviation: f64,
    /// Largest entry of the `k → h` block.
    pub k_to_h: f64,
    /// Largest entry of the `h → k` block.
    pub h_to_k: f64,
    /// Largest entry of the limiting operator, for scale.
    pub scale: f64,
}

impl DecouplingReport {
    /// The quantity that must vanish analytically.
    pub fn coupling(&self) -> f64 {
        self.h_block_deviation.max(self.k_to_h)
    }
}

pub fn decoupling_check(lambda: f64, grid: &Grid) -> Result<DecouplingReport> {
    let profile = solve_ls1(lambda, grid)?.ok_or_else(|| {
        SktError::Input(format!(
            "lambda = {lambda} is not above the first eigenvalue"
        ))
    })?;
    decoupling_residual(lambda, &profile.u, grid)
}

/// As [`decoupling_check`] for an arbitrary profile `U`.
///
/// With `T = [[I, −I], [S, S]]`, `S = diag(1+2U)`, the conjugated operator
/// `T A T⁻¹` has blocks `½[(A11−A21) − (A12−A22)]`, `½[(A11−A21) + (A12−A22)]S⁻¹`,
/// `½S[(A11+A21) − (A12+A22)]` and `½S[(A11+A21) + (A12+A22)]S⁻¹`.
pub fn decoupling_residual(lambda: f64, u: &DVector<f64>, grid: &Grid) -> Result<DecouplingReport> {
    if u.len() != grid.n {
        return Err(SktError::Input(format!(
            "profile has {} nodes, grid has {}",
            u.len(),
            grid.n
        )));
    }
    let a = limiting_operator(lambda, u, grid);
    let s: Vec<f64> = u.iter().map(|x| 1.0 + 2.0 * x).collect();
    let s_inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
    let d1 = a.uu.sub_m(&a.vu);
    let d2 = a.uv.sub_m(&a.vv);
    let p1 = a.uu.add(&a.vu);
    let p2 = a.uv.add(&a.vv);
    let m11 = d1.sub_m(&d2).scale(0.5);
    let m12 = d1.add(&d2).scale(0.5).col_scaled(&s_inv);
    let m21 = p1.sub_m(&p2).scale(0.5).row_scaled(&s);
    let target = Tridiag::diffusion(grid, &vec![1.0; grid.n], &vec![-lambda; grid.n]);
    let scale = a.uu.max_abs().max(a.uv.max_abs());
    Ok(DecouplingReport {
        h_block_deviation: m11.sub_m(&target).max_abs(),
        k_to_h: m12.max_abs(),
        h_to_k: m21.max_abs(),
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, 0.5).unwrap()
    }

    #[test]
    fn laplacian_modes_are_eigenpairs() {
        let g = grid(40);
        let modes = discrete_laplacian_eigs(&g);
        for w in modes.windows(2) {
            assert!(w[0].value < w[1].value);
        }
        for m in modes.iter().take(5) {
            let r = -g.laplacian(&m.vector) - &m.vector * m.value;
            assert!(r.amax() < 1e-9 * m.value);
        }
    }

    #[test]
    fn sign_change_counting() {
        assert_eq!(
            sign_changes(&DVector::from_row_slice(&[1.0, 2.0, 0.0, 3.0])),
            0
        );
        assert_eq!(
            sign_changes(&DVector::from_row_slice(&[1.0, 0.0, -1.0, 2.0])),
            2
        );
    }

    #[test]
    fn logistic_below_threshold_has_no_solution() {
        assert!(solve_logistic(9.0, 3.0, &grid(100)).unwrap().is_none());
    }

    #[test]
    fn logistic_is_bounded_by_carrying_capacity() {
        let lambda = 2.0 * PI * PI;
        let theta = solve_logistic(lambda, 3.0, &grid(100)).unwrap().unwrap();
        assert!(theta.iter().all(|&t| t > 0.0 && t <= lambda / 3.0));
    }

    #[test]
    fn weighted_constant_potential() {
        let g = grid(60);
        let (mu, phi) = weighted_principal_eig(
            &DVector::from_element(60, -20.0),
            &DVector::from_element(60, 1.0),
            &g,
        )
        .unwrap();
        assert!((mu - (laplacian_eigenvalue(&g, 1) - 20.0)).abs() < 1e-9);
        assert!(phi.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_weight_nodes_match_dense_pencil() {
        let g = grid(12);
        let q = DVector::from_fn(12, |i, _| (i as f64 * 0.4).cos());
        let r = DVector::from_fn(12, |i, _| {
            if i % 4 == 1 {
                0.0
            } else {
                1.0 + 0.1 * i as f64
            }
        });
        let values = weighted_eigenvalues(&q, &r, &g).unwrap();
        assert_eq!(values.len(), 9);
        let a = Tridiag::diffusion(&g, &[1.0; 12], q.as_slice()).to_dense();
        for mu in values {
            let sv = (&a - DMatrix::from_diagonal(&r) * mu).singular_values();
            assert!(sv.min() < 1e-10 * sv.max(), "mu {mu}");
        }
        let (_, phi) = weighted_principal_eig(&q, &r, &g).unwrap();
        assert!(phi.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn weighted_rejects_zero_weight() {
        let g = grid(10);
        assert!(weighted_principal_eig(&DVector::zeros(10), &DVector::zeros(10), &g).is_err());
    }

    #[test]
    fn ls1_shrinks_toward_onset() {
        let g = grid(100);
        let l1 = laplacian_eigenvalue(&g, 1);
        assert!(solve_ls1(l1 - 0.1, &g).unwrap().is_none());
        let sup: Vec<f64> = [1.0, 0.5, 0.1]
            .iter()
            .map(|d| solve_ls1(l1 + d, &g).unwrap().unwrap().u.amax())
            .collect();
        assert!(sup[0] > sup[1] && sup[1] > sup[2] && sup[2] > 0.0);
    }

    #[test]
    fn ls2_class_and_asymmetry() {
        let g = grid(200);
        let p = ModelParams::benchmark(45.0);
        let w = solve_ls2(&p, 2, Orientation::Plus, &g).unwrap().unwrap();
        assert_eq!(sign_changes(&w.w), 1);
        assert!(w.w[0] > 0.0);
        assert!(w.positive_part().amax() < w.negative_part().amax());
        assert!(ls2_residual(&p, &w.w, &g).amax() < 1e-8);
        assert!(
            solve_ls2(&ModelParams::benchmark(30.0), 2, Orientation::Plus, &g)
                .unwrap()
                .is_none()
        );
    }

    #[test]
    fn scalar_morse_of_logistic_profile_is_zero() {
        let g = grid(100);
        let p = ModelParams::benchmark(30.0);
        let theta = solve_logistic(30.0, p.b1, &g).unwrap().unwrap();
        assert_eq!(scalar_limit_morse(&p, &theta, &g).unwrap(), 0);
    }

    #[test]
    fn decoupling_is_exact_for_zero_profile() {
        let g = grid(50);
        let r = decoupling_residual(20.0, &DVector::zeros(50), &g).unwrap();
        assert!(r.coupling() <= 4.0 * f64::EPSILON * r.scale);
        assert!(r.h_to_k <= 4.0 * f64::EPSILON * r.scale);
    }
}
