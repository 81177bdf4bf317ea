//! Solves with the `2n × 2n` block-tridiagonal operators.
//!
//! Field-blocked ordering has bandwidth `n + 1`; the factorization works on the
//! node-interleaved ordering `[u_1, v_1, u_2, v_2, ...]`, where the same
//! operator has three sub- and three super-diagonals.

use nalgebra::DVector;

use super::banded::{BandLu, BandMatrix, BandScalar};
use crate::error::{Result, SktError};
use crate::model::{BlockTridiag, Tridiag};

/// Position of blocked index `k` in the interleaved ordering.
#[inline]
pub fn interleaved_index(k: usize, n: usize) -> usize {
    if k < n {
        2 * k
    } else {
        2 * (k - n) + 1
    }
}

pub fn to_interleaved<T: Copy>(x: &[T]) -> Vec<T> {
    let n = x.len() / 2;
    let mut out = x.to_vec();
    for (k, v) in x.iter().enumerate() {
        out[interleaved_index(k, n)] = *v;
    }
    out
}

pub fn from_interleaved<T: Copy>(y: &[T]) -> Vec<T> {
    let n = y.len() / 2;
    (0..2 * n).map(|k| y[interleaved_index(k, n)]).collect()
}

impl BlockTridiag {
    /// Interleaved band form of `scale · self - shift · I`.
    pub fn to_band<T: BandScalar>(&self, scale: f64, shift: T) -> BandMatrix<T> {
        let n = self.n();
        let mut band = BandMatrix::zeros(2 * n, 3, 3);
        let blocks = [
            (&self.uu, 0, 0),
            (&self.uv, 0, n),
            (&self.vu, n, 0),
            (&self.vv, n, n),
        ];
        for (block, r0, c0) in blocks {
            for i in 0..n {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                for j in lo..=hi {
                    let value = block.get(i, j);
                    if value != 0.0 {
                        band.add_to(
                            interleaved_index(r0 + i, n),
                            interleaved_index(c0 + j, n),
                            T::from_real(scale * value),
                        );
                    }
                }
            }
        }
        for k in 0..2 * n {
            band.add_to(k, k, -shift);
        }
        band
    }
}

/// LU factorization of a block operator, applied in blocked ordering.
#[derive(Debug, Clone)]
pub struct BlockLu<T> {
    lu: BandLu<T>,
}

impl<T: BandScalar> BlockLu<T> {
    pub fn new(matrix: &BlockTridiag, scale: f64, shift: T) -> Result<Self> {
        Ok(Self {
            lu: matrix.to_band(scale, shift).factor()?,
        })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut y = to_interleaved(rhs);
        self.lu.solve_in_place(&mut y);
        from_interleaved(&y)
    }

    pub fn rcond_estimate(&self) -> f64 {
        self.lu.rcond_estimate()
    }

    pub fn check_conditioning(&self) -> Result<()> {
        self.lu.check_conditioning()
    }
}

/// Solve `matrix · x = rhs`, rejecting numerically singular matrices.
pub fn linear_solve(matrix: &BlockTridiag, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != matrix.dim() {
        return Err(SktError::Input(format!(
            "rhs has length {}, matrix has dimension {}",
            rhs.len(),
            matrix.dim()
        )));
    }
    let lu = BlockLu::new(matrix, 1.0, 0.0)?;
    lu.check_conditioning()?;
    Ok(DVector::from_vec(lu.solve(rhs.as_slice())))
}

impl Tridiag {
    pub fn to_band(&self) -> BandMatrix<f64> {
        let n = self.n();
        let mut band = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            band.set(i, i, self.diag[i]);
            if i + 1 < n {
                band.set(i + 1, i, self.sub[i]);
                band.set(i, i + 1, self.sup[i]);
            }
        }
        band
    }
}

/// Solve a tridiagonal system, rejecting numerically singular matrices.
pub fn tridiag_solve(matrix: &Tridiag, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != matrix.n() {
        return Err(SktError::Input(format!(
            "rhs has length {}, matrix has dimension {}",
            rhs.len(),
            matrix.n()
        )));
    }
    let lu = matrix.to_band().factor()?;
    lu.check_conditioning()?;
    Ok(DVector::from_vec(lu.solve(rhs.as_slice())))
}
