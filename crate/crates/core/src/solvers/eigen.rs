//! Eigenvalues of the linearization with smallest real part.
//!
//! Small systems go through a dense Schur decomposition. Larger ones use
//! shift-invert subspace iteration with a Rayleigh-Ritz projection onto `L`;
//! the block iteration keeps repeated eigenvalues (the trivial state has
//! every eigenvalue twice). Eigenvectors are finished by complex inverse
//! iteration on the banded operator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linear::BlockLu;
use crate::error::{Result, SktError};
use crate::model::{BlockTridiag, LinearizedSystem};

/// Systems of at most this dimension use the dense path.
pub const DENSE_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    /// `tol_zero = zero_rel · ‖L‖_∞`
    pub zero_rel: f64,
    /// Required `‖Lq − μq‖ / ‖L‖_∞` for every returned pair.
    pub residual_rel: f64,
    pub max_iters: usize,
    pub dense_limit: usize,
    pub seed: u64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            zero_rel: 1e-7,
            residual_rel: 1e-8,
            max_iters: 400,
            dense_limit: DENSE_LIMIT,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Unit 2-norm, phase-normalized so the largest entry is real and positive.
    pub eigenvectors: Vec<DVector<Complex64>>,
    pub morse_index: usize,
    pub tol_zero: f64,
    pub norm_inf: f64,
}

impl Spectrum {
    pub fn new(
        eigenvalues: Vec<Complex64>,
        eigenvectors: Vec<DVector<Complex64>>,
        tol_zero: f64,
        norm_inf: f64,
    ) -> Self {
        let morse_index = count_negative(&eigenvalues, tol_zero);
        Self {
            eigenvalues,
            eigenvectors,
            morse_index,
            tol_zero,
            norm_inf,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalues inside the zero band `|Re μ| ≤ tol_zero`.
    pub fn critical_count(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|mu| mu.re.abs() <= self.tol_zero)
            .count()
    }

    pub fn is_critical(&self) -> bool {
        self.critical_count() > 0
    }

    /// Index of the eigenvalue with the smallest `|Re μ|`.
    pub fn nearest_zero(&self) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| {
            self.eigenvalues[a]
                .re
                .abs()
                .total_cmp(&self.eigenvalues[b].re.abs())
        })
    }

    /// Whether every eigenvalue with non-positive real part is included, so the
    /// Morse index is complete.
    pub fn resolves_unstable_set(&self) -> bool {
        self.eigenvalues
            .last()
            .is_some_and(|mu| mu.re > self.tol_zero)
    }

    /// Real parts, ascending.
    pub fn real_parts(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|mu| mu.re).collect()
    }
}

fn count_negative(eigenvalues: &[Complex64], tol_zero: f64) -> usize {
    eigenvalues.iter().filter(|mu| mu.re < -tol_zero).count()
}

/// Number of stored eigenvalues with `Re μ < −tol_zero`.
pub fn morse_index(spectrum: &Spectrum) -> usize {
    count_negative(&spectrum.eigenvalues, spectrum.tol_zero)
}

/// The `m` eigenvalues of smallest real part, with eigenvectors.
pub fn eigen_spectrum(linsys: &LinearizedSystem, m: usize) -> Result<Spectrum> {
    eigen_spectrum_with(&linsys.matrix, m, &EigenSettings::default())
}

/// Like [`eigen_spectrum`], doubling `m` until the largest returned real part
/// is positive, so the Morse index counts every unstable eigenvalue.
pub fn morse_spectrum(linsys: &LinearizedSystem, m: usize) -> Result<Spectrum> {
    let dim = linsys.matrix.dim();
    let mut count = m.min(dim);
    loop {
        let spectrum = eigen_spectrum_with(&linsys.matrix, count, &EigenSettings::default())?;
        if spectrum.resolves_unstable_set() || count >= dim {
            return Ok(spectrum);
        }
        count = (2 * count).min(dim);
    }
}

pub fn eigen_spectrum_with(
    matrix: &BlockTridiag,
    m: usize,
    settings: &EigenSettings,
) -> Result<Spectrum> {
    let dim = matrix.dim();
    if m == 0 || m > dim {
        return Err(SktError::Input(format!(
            "requested {m} eigenvalues of a {dim}-dimensional system"
        )));
    }
    let norm = matrix.norm_inf();
    let tol_zero = settings.zero_rel * norm;
    let candidates = if dim <= settings.dense_limit {
        sort_by_real(full_spectrum(matrix))
    } else {
        subspace_ritz_values(matrix, m, settings)?
    };
    let wanted = select_with_pairs(&candidates, m, norm);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut values = Vec::with_capacity(wanted.len());
    let mut vectors: Vec<DVector<Complex64>> = Vec::with_capacity(wanted.len());
    let imag_tol = 1e-12 * norm.max(1.0);
    for mu in wanted {
        if mu.im < -imag_tol {
            // Partner of an already-computed value with positive imaginary part.
            if let Some(k) = values
                .iter()
                .position(|v: &Complex64| (v.conj() - mu).norm() <= 1e-8 * norm.max(1.0))
            {
                let conj_mu: Complex64 = values[k];
                let q = vectors[k].map(|z| z.conj());
                values.push(conj_mu.conj());
                vectors.push(q);
                continue;
            }
        }
        let mu = if mu.im.abs() <= imag_tol {
            Complex64::new(mu.re, 0.0)
        } else {
            mu
        };
        let (value, vector) = eigenpair(matrix, mu, &values, &vectors, norm, settings, &mut rng)?;
        values.push(value);
        vectors.push(vector);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .re
            .total_cmp(&values[b].re)
            .then(values[a].im.total_cmp(&values[b].im))
    });
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let eigenvectors = order.iter().map(|&k| vectors[k].clone()).collect();
    Ok(Spectrum::new(eigenvalues, eigenvectors, tol_zero, norm))
}

/// All eigenvalues by dense Schur decomposition. Intended for oracles and
/// full-spectrum checks; cost is cubic in `2n`.
pub fn full_spectrum(matrix: &BlockTridiag) -> Vec<Complex64> {
    sort_by_real(
        matrix
            .to_dense()
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect(),
    )
}

/// Dense eigenvalues of an arbitrary square matrix, sorted by real part.
pub fn dense_eigenvalues(matrix: &DMatrix<f64>) -> Vec<Complex64> {
    sort_by_real(matrix.complex_eigenvalues().iter().copied().collect())
}

fn sort_by_real(mut values: Vec<Complex64>) -> Vec<Complex64> {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    values
}

/// First `m` of `sorted`, extended so that no conjugate pair is split.
fn select_with_pairs(sorted: &[Complex64], m: usize, norm: f64) -> Vec<Complex64> {
    let tol = 1e-8 * norm.max(1.0);
    let mut out: Vec<Complex64> = sorted.iter().take(m).copied().collect();
    let unpaired: Vec<Complex64> = out
        .iter()
        .filter(|mu| mu.im.abs() > tol && !out.iter().any(|nu| (nu.conj() - **mu).norm() <= tol))
        .copied()
        .collect();
    for mu in unpaired {
        out.push(mu.conj());
    }
    // positive imaginary part first so the partner can reuse the vector
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
    out
}

/// Lower shift for the shift-invert iteration. The diffusion matrix has
/// positive eigenvalues for nonnegative states, so the reaction rows bound how
/// far the spectrum can reach to the left.
fn lower_shift(matrix: &BlockTridiag) -> f64 {
    let n = matrix.n();
    let s = 2.0 * {
        // diagonal entry minus its diffusion share leaves the reaction term
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let uu = matrix.uu.diag[i] - diffusion_diag(&matrix.uu, i);
            let uv = matrix.uv.diag[i] - diffusion_diag(&matrix.uv, i);
            let vu = matrix.vu.diag[i] - diffusion_diag(&matrix.vu, i);
            let vv = matrix.vv.diag[i] - diffusion_diag(&matrix.vv, i);
            worst = worst.max(uu.abs() + uv.abs()).max(vu.abs() + vv.abs());
        }
        worst
    };
    -s - 1.0
}

/// Diagonal contribution `2 a_i / h²` of the `-Δ_h diag(a)` part, recovered
/// from the off-diagonals (`-a_i / h²` appears as `sup[i-1]` and `sub[i]`).
fn diffusion_diag(t: &crate::model::Tridiag, i: usize) -> f64 {
    let n = t.n();
    if i + 1 < n {
        -2.0 * t.sub[i]
    } else if i > 0 {
        -2.0 * t.sup[i - 1]
    } else {
        0.0
    }
}

fn subspace_ritz_values(
    matrix: &BlockTridiag,
    m: usize,
    settings: &EigenSettings,
) -> Result<Vec<Complex64>> {
    let dim = matrix.dim();
    let p = (2 * m + 10).max(m + 20).min(dim);
    let track = (m + 2).min(p);
    let sigma = lower_shift(matrix);
    let lu = BlockLu::<f64>::new(matrix, 1.0, sigma)?;
    lu.check_conditioning()?;
    let norm = matrix.norm_inf();

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x9e37_79b9);
    let mut v = DMatrix::from_fn(dim, p, |_, _| rng.random_range(-1.0..1.0));
    v = v.qr().q();
    let mut previous: Option<Vec<Complex64>> = None;
    for _ in 0..settings.max_iters {
        let mut w = DMatrix::zeros(dim, p);
        for k in 0..p {
            let col = lu.solve(v.column(k).as_slice());
            w.set_column(k, &DVector::from_vec(col));
        }
        v = w.qr().q();
        let lv = DMatrix::from_fn(dim, p, |_, _| 0.0);
        let lv = (0..p).fold(lv, |mut acc, k| {
            acc.set_column(k, &matrix.matvec(&v.column(k).into_owned()));
            acc
        });
        let h = v.transpose() * lv;
        let ritz = dense_eigenvalues(&h);
        let head: Vec<Complex64> = ritz.iter().take(track).copied().collect();
        if let Some(prev) = &previous {
            let change = head
                .iter()
                .zip(prev)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if change <= 1e-12 * norm {
                return Ok(ritz);
            }
        }
        previous = Some(head);
    }
    // Not stabilized; the residual check on each pair decides.
    log::debug!("subspace iteration hit {} iterations", settings.max_iters);
    let mut w = DMatrix::zeros(dim, p);
    for k in 0..p {
        w.set_column(k, &matrix.matvec(&v.column(k).into_owned()));
    }
    Ok(dense_eigenvalues(&(v.transpose() * w)))
}

fn complex_matvec(matrix: &BlockTridiag, x: &DVector<Complex64>) -> DVector<Complex64> {
    let re = matrix.matvec(&x.map(|z| z.re));
    let im = matrix.matvec(&x.map(|z| z.im));
    DVector::from_fn(x.len(), |i, _| Complex64::new(re[i], im[i]))
}

fn normalize_phase(mut x: DVector<Complex64>) -> DVector<Complex64> {
    let norm = x.norm();
    let k = x
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let phase = x[k] / x[k].norm();
    let scale = phase.conj() / norm;
    x.iter_mut().for_each(|z| *z *= scale);
    x
}

fn rayleigh(matrix: &BlockTridiag, q: &DVector<Complex64>) -> (Complex64, f64) {
    let lq = complex_matvec(matrix, q);
    let mu = q.dotc(&lq) / q.dotc(q);
    let res = (lq - q * mu).norm() / q.norm();
    (mu, res)
}

/// Inverse iteration at a shift just off `mu`. Previously found vectors for
/// the same eigenvalue are projected out when the plain iteration lands on one
/// of them.
fn eigenpair(
    matrix: &BlockTridiag,
    mu: Complex64,
    found_values: &[Complex64],
    found_vectors: &[DVector<Complex64>],
    norm: f64,
    settings: &EigenSettings,
    rng: &mut ChaCha8Rng,
) -> Result<(Complex64, DVector<Complex64>)> {
    let tol = settings.residual_rel * norm;
    let cluster: Vec<(Complex64, &DVector<Complex64>)> = found_values
        .iter()
        .zip(found_vectors)
        .filter(|(v, _)| (**v - mu).norm() <= 1e-6 * norm.max(1.0))
        .map(|(v, q)| (*v, q))
        .collect();
    let cluster_vectors: Vec<&DVector<Complex64>> = cluster.iter().map(|(_, q)| *q).collect();
    let dim = matrix.dim();
    let offset = 1e-10 * norm.max(1.0);
    let shift = mu + Complex64::new(offset, 0.0);
    let lu = BlockLu::<Complex64>::new(matrix, 1.0, shift)?;

    let mut best: Option<(Complex64, DVector<Complex64>, f64)> = None;
    for deflate in [false, true] {
        if deflate && cluster.is_empty() {
            break;
        }
        let mut x = DVector::from_fn(dim, |_, _| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        for _ in 0..6 {
            if deflate {
                project_out(&mut x, &cluster_vectors);
            }
            x /= Complex64::new(x.norm(), 0.0);
            x = DVector::from_vec(lu.solve(x.as_slice()));
            if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(SktError::Spectral(format!(
                    "inverse iteration overflow at shift {mu}"
                )));
            }
            if deflate {
                project_out(&mut x, &cluster_vectors);
            }
            x /= Complex64::new(x.norm(), 0.0);
            let (value, res) = rayleigh(matrix, &x);
            // nearly defective pairs have almost parallel vectors, so a
            // duplicate must also reproduce the eigenvalue
            let duplicate = cluster
                .iter()
                .any(|(v, q)| q.dotc(&x).norm() > 0.99 && (value - v).norm() <= tol);
            if res <= 1e-3 * tol && !duplicate {
                return Ok((value, normalize_phase(x)));
            }
            if !duplicate && best.as_ref().is_none_or(|b| res < b.2) {
                best = Some((value, x.clone(), res));
            }
        }
    }
    match best {
        Some((value, x, res)) if res <= tol => Ok((value, normalize_phase(x))),
        Some((value, _, res)) => Err(SktError::Spectral(format!(
            "eigenpair near {value} has residual {res:.3e}, above {tol:.3e}"
        ))),
        None => Err(SktError::Spectral(format!(
            "no independent eigenvector found near {mu}"
        ))),
    }
}

fn project_out(x: &mut DVector<Complex64>, basis: &[&DVector<Complex64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dotc(x) / q.dotc(q);
            *x -= *q * c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_linearization, BranchTag, Grid, ModelParams, SteadyState};

    fn laplacian_eig(g: &Grid, j: usize) -> f64 {
        let t = (j as f64) * std::f64::consts::PI / (2.0 * (g.n as f64 + 1.0));
        4.0 * g.inv_h2() * t.sin().powi(2)
    }

    fn bumpy_state(n: usize) -> SteadyState {
        let g = Grid::new(n, 0.5).unwrap();
        let s = |x: f64| (std::f64::consts::PI * (x + 0.5)).sin();
        SteadyState::new(
            DVector::from_fn(n, |i, _| 0.3 * s(g.node(i)) * (1.0 + 0.2 * g.node(i))),
            DVector::from_fn(n, |i, _| 0.05 * s(g.node(i)).powi(2)),
            BranchTag::Coexistence,
        )
        .unwrap()
    }

    #[test]
    fn trivial_state_double_eigenvalues() {
        for n in [30, 150] {
            let g = Grid::new(n, 0.5).unwrap();
            let lin =
                assemble_linearization(&ModelParams::benchmark(20.0), &g, &SteadyState::zeros(n))
                    .unwrap();
            let settings = EigenSettings {
                dense_limit: 80,
                ..Default::default()
            };
            let s = eigen_spectrum_with(&lin.matrix, 6, &settings).unwrap();
            assert_eq!(s.len(), 6);
            for (k, mu) in s.eigenvalues.iter().enumerate() {
                let expected = laplacian_eig(&g, k / 2 + 1) - 20.0;
                assert!(
                    (mu.re - expected).abs() < 1e-8 * expected.abs().max(1.0),
                    "{mu} vs {expected}"
                );
                assert!(mu.im.abs() < 1e-9);
            }
            assert_eq!(s.morse_index, 2);
            // the two copies span both blocks
            let overlap = s.eigenvectors[0].dotc(&s.eigenvectors[1]).norm();
            assert!(overlap < 0.9, "overlap {overlap}");
        }
    }

    #[test]
    fn subspace_path_matches_dense() {
        let n = 120;
        let g = Grid::new(n, 0.5).unwrap();
        let lin =
            assemble_linearization(&ModelParams::benchmark(35.0), &g, &bumpy_state(n)).unwrap();
        let dense = full_spectrum(&lin.matrix);
        let s = eigen_spectrum_with(
            &lin.matrix,
            8,
            &EigenSettings {
                dense_limit: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let norm = lin.norm_inf();
        for (k, mu) in s.eigenvalues.iter().enumerate() {
            assert!(
                (mu - dense[k]).norm() < 1e-9 * norm,
                "{k}: {mu} vs {}",
                dense[k]
            );
        }
    }

    #[test]
    fn returned_pairs_satisfy_residual_bound() {
        let n = 60;
        let g = Grid::new(n, 0.5).unwrap();
        let lin =
            assemble_linearization(&ModelParams::benchmark(50.0), &g, &bumpy_state(n)).unwrap();
        let s = eigen_spectrum(&lin, 10).unwrap();
        for (mu, q) in s.eigenvalues.iter().zip(&s.eigenvectors) {
            let r = (complex_matvec(&lin.matrix, q) - q * *mu).norm();
            assert!(r <= 1e-8 * s.norm_inf);
            assert!((q.norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(morse_index(&s), s.morse_index);
    }

    #[test]
    fn conjugate_pairs_are_kept_together() {
        let picked = select_with_pairs(
            &[
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.5, -2.0),
                Complex64::new(0.5, 2.0),
                Complex64::new(3.0, 0.0),
            ],
            2,
            1.0,
        );
        assert_eq!(picked.len(), 3);
        assert_eq!(picked[1], Complex64::new(0.5, 2.0));
        assert_eq!(picked[2], Complex64::new(0.5, -2.0));
    }

    #[test]
    fn complex_spectrum_vectors() {
        // a rotation-like coupling produces complex pairs
        let n = 20;
        let g = Grid::new(n, 0.5).unwrap();
        let mut lin =
            assemble_linearization(&ModelParams::benchmark(5.0), &g, &SteadyState::zeros(n))
                .unwrap();
        lin.matrix.uv.diag.iter_mut().for_each(|d| *d = 30.0);
        lin.matrix.vu.diag.iter_mut().for_each(|d| *d = -30.0);
        let s = eigen_spectrum(&lin, 4).unwrap();
        assert!(s.eigenvalues[0].im.abs() > 1.0);
        assert!((s.eigenvalues[0] - s.eigenvalues[1].conj()).norm() < 1e-8);
        for (mu, q) in s.eigenvalues.iter().zip(&s.eigenvectors) {
            assert!((complex_matvec(&lin.matrix, q) - q * *mu).norm() < 1e-8 * s.norm_inf);
        }
    }

    #[test]
    fn nearly_defective_pair_is_resolved() {
        // eigenvalues 1 ± 0.05 with almost parallel eigenvectors
        let mut m = BlockTridiag::identity(2);
        m.uu.diag = vec![1.0, 5.0];
        m.vv.diag = vec![1.0, 7.0];
        m.uv.diag = vec![1e6, 0.0];
        m.vu.diag = vec![2.5e-9, 0.0];
        let s = eigen_spectrum_with(&m, 2, &EigenSettings::default()).unwrap();
        // ‖L‖ ≈ 1e6, so 1e-3 is far inside the residual tolerance
        assert!((s.eigenvalues[0].re - 0.95).abs() < 1e-3);
        assert!((s.eigenvalues[1].re - 1.05).abs() < 1e-3);
        assert!(s.eigenvectors[0].dotc(&s.eigenvectors[1]).norm() > 0.99);
    }

    #[test]
    fn morse_counts_respect_zero_band() {
        let s = Spectrum::new(
            vec![
                Complex64::new(-2.0, 0.0),
                Complex64::new(-1e-9, 0.0),
                Complex64::new(3.0, 0.0),
            ],
            vec![DVector::zeros(2); 3],
            1e-7,
            1.0,
        );
        assert_eq!(morse_index(&s), 1);
        assert_eq!(s.critical_count(), 1);
        assert!(s.resolves_unstable_set());
    }

    #[test]
    fn rejects_bad_count() {
        let lin = assemble_linearization(
            &ModelParams::default(),
            &Grid::new(5, 0.5).unwrap(),
            &SteadyState::zeros(5),
        )
        .unwrap();
        assert!(eigen_spectrum(&lin, 0).is_err());
        assert!(eigen_spectrum(&lin, 11).is_err());
    }
}
