//! Numerical laboratory for convolution semigroups generated by Levy-type
//! (nonlocal) operators.
//!
//! The crate builds concrete jump models (stable, relativistic, tempered,
//! compound Poisson), evaluates their Fourier symbols and derived scale
//! functions, manipulates densities on symmetric lattices via FFT
//! convolution, produces heat kernels through several independent routes
//! (spectral inversion, small-jump / big-jump decompositions, closed-form
//! oracles), and measures how kernel tails track the jump density at
//! large distances.

pub mod error;
pub mod kfunc;
pub mod matrix;
pub mod model;
pub mod quad;
pub mod symbol;
pub mod convolve;
pub mod kernel;
pub mod asymptotics;

pub use error::{Error, Result};
