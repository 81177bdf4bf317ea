//! Steady states of the one-dimensional SKT competition model with equal
//! cross-diffusion: branch continuation, bifurcation detection, Morse indices,
//! the large cross-diffusion limiting problems and a time stepper for the
//! parabolic flow.

pub mod continuation;
pub mod error;
pub mod evolution;
pub mod io;
pub mod limits;
pub mod model;
pub mod solvers;

pub use error::{Result, SktError};
pub use model::{
    assemble_linearization, assemble_residual, BlockTridiag, BranchTag, Grid, LinearizedSystem,
    ModelParams, SteadyState, Tridiag,
};
