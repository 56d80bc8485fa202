//! Error types shared across the crate.
//!
//! Numerical routines in this crate fail loudly rather than silently: every
//! operation that can run out of resolution, leave its domain of validity, or
//! detect an inconsistent input reports a dedicated variant carrying enough
//! context to act on (the offending radius, node, or tolerance).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Model construction rejected (parameter out of range, degenerate
    /// angular density, profile class that fails the kernel-method
    /// hypotheses without an explicit override, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A quadrature did not reach its target accuracy within budget.
    #[error("quadrature for {context} did not converge: achieved {achieved:.3e}, target {target:.3e}")]
    QuadratureNonConvergent {
        context: String,
        achieved: f64,
        target: f64,
    },

    /// A tail integral grew without saturating, so the requested quantity
    /// is divergent (e.g. an exponential moment beyond the critical rate).
    #[error("divergent moment integral: {context}")]
    DivergentMoment { context: String },

    /// Generalized inverse queried at a level the function never reaches.
    #[error("inverse query out of range: level {level:.6e} not attained (supremum {sup:.6e})")]
    OutOfRange { level: f64, sup: f64 },

    /// Two lattice fields were combined but live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Linear-convolution mass stopped being multiplicative, i.e. the
    /// result no longer fits in the window. Enlarge the grid half-width.
    #[error(
        "aliasing detected in {context}: mass deviates by {deviation:.3e} (tolerance {tolerance:.3e}); enlarge the grid half-width"
    )]
    Aliasing {
        context: String,
        deviation: f64,
        tolerance: f64,
    },

    /// The integrand still carries weight at the Nyquist shell, so spectral
    /// inversion on this grid would alias. Use a finer spacing.
    #[error(
        "insufficient frequency decay: |exp(-t psi)| = {have:.3e} at the Nyquist shell (need <= {need:.3e}); use a finer grid spacing"
    )]
    InsufficientFrequencyDecay { have: f64, need: f64 },

    /// A density was sampled at a node where it is not finite.
    #[error("non-finite sample at node {index:?} (position {position:?})")]
    NonFiniteSample { index: Vec<usize>, position: Vec<f64> },

    /// Far-field evaluation declined to return a number it cannot certify.
    #[error("far-field evaluation refused at |x| = {radius:.3e}: {reason}")]
    FarFieldRefused { radius: f64, reason: String },

    /// Grid construction rejected (size not a power of two, bad half-width).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Requested configuration is outside the supported envelope.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Caller violated a documented precondition of an operation.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Configuration file could not be parsed or validated.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
