//! Newton iteration, banded linear solves and eigenvalue extraction.

pub mod banded;
pub mod eigen;
pub mod linear;
pub mod newton;

pub use eigen::{
    eigen_spectrum, eigen_spectrum_with, full_spectrum, morse_index, morse_spectrum, EigenSettings,
    Spectrum,
};
pub use linear::{linear_solve, tridiag_solve, BlockLu};
pub use newton::{newton_solve, NewtonSettings};
