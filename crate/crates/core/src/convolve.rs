//! Lattice machinery for densities.
//!
//! This module provides the uniform grids and FFT plumbing shared by every
//! field-valued computation in the crate: sampling densities on centered
//! lattices, linear (zero-padded) convolution, n-fold self-convolutions of
//! restricted jump intensities, compound-Poisson sums, centered discrete
//! Fourier transforms matching the continuum conventions, the long-range
//! interaction functional `K`, and exponentially weighted moment integrals.
//!
//! Conventions. A [`Grid`] covers `[-L, L)^d` with `N` points per axis and
//! spacing `Δ = 2L/N`; node `i` of an axis sits at `(i - N/2)·Δ`, so the
//! origin is always a node. The dual grid has spacing `Δξ = π/L` with the
//! same centering. The forward transform of a field approximates
//! `ĥ(ξ) = ∫ e^{i⟨ξ,x⟩} h(x) dx` and the inverse approximates
//! `h(x) = (2π)^{-d} ∫ e^{-i⟨ξ,x⟩} ĥ(ξ) dξ`; both reduce to standard FFTs
//! after checkerboard phase flips.

use std::io::{Read, Write};
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{norm, LevyModel};
use crate::quad::{gk_adaptive_breaks, head_integral, tail_integral, TailOutcome};

/// Fraction of the field maximum below which negative round-off samples are
/// clipped to zero; deeper negativity is reported as aliasing.
pub const NEGATIVITY_CLIP: f64 = 1e-12;

/// Relative mass-deviation tolerance for n-fold convolutions, before the
/// capture-loss allowance for heavy-tailed inputs.
pub const NFOLD_MASS_RTOL: f64 = 1e-6;

/// Relative tolerance on the compound-Poisson mass identity, before the
/// capture-loss allowance.
pub const POISSON_MASS_RTOL: f64 = 1e-8;

/// The truncated compound-Poisson series stops once the remaining terms are
/// bounded by this fraction of the current supremum.
pub const POISSON_TAIL_RTOL: f64 = 1e-12;

/// Default points per axis for one-dimensional grids.
pub const DEFAULT_POINTS_1D: usize = 1 << 16;

/// Default points per axis for two-dimensional grids.
pub const DEFAULT_POINTS_2D: usize = 1 << 10;

/// Default points per axis for three-dimensional grids.
pub const DEFAULT_POINTS_3D: usize = 1 << 7;

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform centered lattice on `[-L, L)^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl Grid {
    /// A grid with `points` nodes per axis (a power of two, at least four)
    /// covering `[-half_width, half_width)` on every axis.
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} not supported (use 1..=3)"
            )));
        }
        if !points.is_power_of_two() || points < 4 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 4, got {points}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half-width must be positive and finite, got {half_width}"
            )));
        }
        let total = points.checked_pow(dim as u32).ok_or_else(|| {
            Error::InvalidGrid("grid size overflows".into())
        })?;
        if total > (1 << 26) {
            return Err(Error::InvalidGrid(format!(
                "grid with {total} nodes exceeds the supported budget"
            )));
        }
        Ok(Grid {
            dim,
            points,
            half_width,
        })
    }

    /// Desk-scale default: generous frequency range in one dimension,
    /// coarser lattices in two and three, with the half-width adapted to
    /// eight times the largest probe radius.
    pub fn default_for(dim: usize, probe_radius: f64) -> Result<Self> {
        let points = match dim {
            1 => DEFAULT_POINTS_1D,
            2 => DEFAULT_POINTS_2D,
            _ => DEFAULT_POINTS_3D,
        };
        let floor = match dim {
            1 => 64.0,
            2 => 16.0,
            _ => 8.0,
        };
        let half = (8.0 * probe_radius).max(floor);
        Grid::new(dim, points, half)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Lattice spacing `Δ = 2L/N`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Spacing of the dual lattice, `π/L`.
    pub fn frequency_spacing(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }

    /// Largest frequency magnitude per axis (the Nyquist shell).
    pub fn nyquist(&self) -> f64 {
        self.frequency_spacing() * (self.points / 2) as f64
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along one axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        (i as f64 - (self.points / 2) as f64) * self.spacing()
    }

    /// Coordinate of dual node `k` along one axis.
    pub fn frequency_coord(&self, k: usize) -> f64 {
        (k as f64 - (self.points / 2) as f64) * self.frequency_spacing()
    }

    /// Row-major flat index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dim);
        let mut flat = 0;
        for &i in idx {
            debug_assert!(i < self.points);
            flat = flat * self.points + i;
        }
        flat
    }

    /// Multi-index of a row-major flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    /// Position of a node given its flat index.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| self.axis_coord(i))
            .collect()
    }

    /// Position on the dual lattice given a flat index.
    pub fn frequency_node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|k| self.frequency_coord(k))
            .collect()
    }

    /// Nearest positive half-cell boundary `(k + 1/2)·Δ` to `r`. Radial
    /// cutoffs snapped here fall between lattice shells, so the indicator
    /// of the cutoff never lands on a node.
    pub fn snap_to_half_cell(&self, r: f64) -> f64 {
        let step = self.spacing();
        let k = ((r / step - 0.5).round()).max(0.0);
        (k + 0.5) * step
    }

    /// Flat index of the node nearest to `x`, if `x` is inside the box.
    pub fn nearest_flat(&self, x: &[f64]) -> Option<usize> {
        debug_assert_eq!(x.len(), self.dim);
        let step = self.spacing();
        let mut flat = 0usize;
        for &c in x {
            let i = (c / step).round() + (self.points / 2) as f64;
            if i < 0.0 || i >= self.points as f64 {
                return None;
            }
            flat = flat * self.points + i as usize;
        }
        Some(flat)
    }
}

/// Parity `(-1)^(i_1 + ... + i_d)` of a flat row-major index.
fn parity_sign(grid_points: usize, dim: usize, mut flat: usize) -> f64 {
    let mut sum = 0usize;
    for _ in 0..dim {
        sum += flat % grid_points;
        flat /= grid_points;
    }
    if sum % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// FFT plumbing
// ---------------------------------------------------------------------------

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// In-place unnormalized DFT along every axis of a row-major `dim`-cube
/// with `n` points per axis. `inverse` selects the `e^{+i}` kernel.
fn fft_all_axes(data: &mut [Complex64], dim: usize, n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let fft = {
        let mut guard = planner().lock().expect("FFT planner poisoned");
        if inverse {
            guard.plan_fft_inverse(n)
        } else {
            guard.plan_fft_forward(n)
        }
    };
    let total = data.len();
    let mut scratch = vec![Complex64::default(); n];
    for axis in 0..dim {
        // Row-major layout: the stride of `axis` is n^(dim-1-axis).
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            for line in data.chunks_exact_mut(n) {
                fft.process(line);
            }
            continue;
        }
        let block = stride * n;
        let mut base = 0;
        while base < total {
            for offset in 0..stride {
                for j in 0..n {
                    scratch[j] = data[base + offset + j * stride];
                }
                fft.process(&mut scratch);
                for j in 0..n {
                    data[base + offset + j * stride] = scratch[j];
                }
            }
            base += block;
        }
    }
}

// ---------------------------------------------------------------------------
// DensityField
// ---------------------------------------------------------------------------

/// Real samples of a density on a [`Grid`].
#[derive(Debug, Clone)]
pub struct DensityField {
    grid: Grid,
    samples: Vec<f64>,
}

impl DensityField {
    /// Wraps samples after enforcing the nonnegativity policy: negative
    /// values within [`NEGATIVITY_CLIP`] of the field maximum are zeroed as
    /// transform round-off; anything deeper is reported as aliasing.
    pub fn new(grid: Grid, mut samples: Vec<f64>, context: &str) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{context}: {} samples for a grid of {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        let mut max = 0.0f64;
        for (i, v) in samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteSample {
                    index: grid.multi_index(i),
                    position: grid.node(i),
                });
            }
            max = max.max(*v);
        }
        let threshold = NEGATIVITY_CLIP * max;
        let mut worst = 0.0f64;
        for v in samples.iter_mut() {
            if *v < 0.0 {
                if -*v <= threshold {
                    *v = 0.0;
                } else {
                    worst = worst.max(-*v);
                }
            }
        }
        if worst > 0.0 {
            return Err(Error::Aliasing {
                context: context.to_string(),
                deviation: if max > 0.0 { worst / max } else { worst },
                tolerance: NEGATIVITY_CLIP,
            });
        }
        Ok(DensityField { grid, samples })
    }

    /// The everywhere-zero field.
    pub fn zeros(grid: Grid) -> Self {
        let samples = vec![0.0; grid.len()];
        DensityField { grid, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Riemann mass `Δ^d · Σ samples`.
    pub fn mass(&self) -> f64 {
        let cell = self.grid.spacing().powi(self.grid.dim() as i32);
        cell * self.samples.iter().sum::<f64>()
    }

    /// Mass carried by nodes with `|x| > radius`.
    pub fn mass_outside(&self, radius: f64) -> f64 {
        let cell = self.grid.spacing().powi(self.grid.dim() as i32);
        let mut acc = 0.0;
        for (i, v) in self.samples.iter().enumerate() {
            if norm(&self.grid.node(i)) > radius {
                acc += v;
            }
        }
        cell * acc
    }

    pub fn max_value(&self) -> f64 {
        self.samples.iter().cloned().fold(0.0, f64::max)
    }

    /// Sample at a multi-index.
    pub fn value(&self, idx: &[usize]) -> f64 {
        self.samples[self.grid.flat_index(idx)]
    }

    /// Multilinear interpolation; zero outside the box.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.grid.dim());
        let n = self.grid.points_per_axis();
        let step = self.grid.spacing();
        let mut cell = vec![0usize; x.len()];
        let mut frac = vec![0.0f64; x.len()];
        for (a, &c) in x.iter().enumerate() {
            let u = c / step + (n / 2) as f64;
            if u < 0.0 || u > (n - 1) as f64 {
                return 0.0;
            }
            let i = (u.floor() as usize).min(n - 2);
            cell[a] = i;
            frac[a] = u - i as f64;
        }
        let mut acc = 0.0;
        let corners = 1usize << x.len();
        let mut idx = vec![0usize; x.len()];
        for corner in 0..corners {
            let mut weight = 1.0;
            for a in 0..x.len() {
                if corner >> a & 1 == 1 {
                    idx[a] = cell[a] + 1;
                    weight *= frac[a];
                } else {
                    idx[a] = cell[a];
                    weight *= 1.0 - frac[a];
                }
            }
            if weight != 0.0 {
                acc += weight * self.samples[self.grid.flat_index(&idx)];
            }
        }
        acc
    }

    /// Riemann integral of `e^{⟨w, x⟩}` against the field.
    pub fn exp_weighted_mass(&self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.grid.dim());
        let cell = self.grid.spacing().powi(self.grid.dim() as i32);
        let acc: f64 = self
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, v)| {
                if *v == 0.0 {
                    0.0
                } else {
                    let x = self.grid.node(i);
                    let dot: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
                    v * dot.exp()
                }
            })
            .sum();
        cell * acc
    }

    /// Writes `coordinate..., value` rows with a header line.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        match self.grid.dim() {
            1 => writeln!(out, "x,value")?,
            2 => writeln!(out, "x0,x1,value")?,
            _ => writeln!(out, "x0,x1,x2,value")?,
        }
        for (i, v) in self.samples.iter().enumerate() {
            let x = self.grid.node(i);
            for c in &x {
                write!(out, "{c:.17e},")?;
            }
            writeln!(out, "{v:.17e}")?;
        }
        Ok(())
    }

    /// Compact binary dump. Header: `u32` dimension, then one `u32` point
    /// count per axis, then the `f64` spacing; body: row-major samples.
    /// All fields little-endian.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        for _ in 0..self.grid.dim() {
            out.write_all(&(self.grid.points_per_axis() as u32).to_le_bytes())?;
        }
        out.write_all(&self.grid.spacing().to_le_bytes())?;
        for v in &self.samples {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`Self::write_binary`].
    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let mut u32buf = [0u8; 4];
        let mut f64buf = [0u8; 8];
        input.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "binary dump declares dimension {dim}"
            )));
        }
        let mut points = 0usize;
        for axis in 0..dim {
            input.read_exact(&mut u32buf)?;
            let n = u32::from_le_bytes(u32buf) as usize;
            if axis == 0 {
                points = n;
            } else if n != points {
                return Err(Error::InvalidGrid(
                    "binary dump has unequal axis lengths".into(),
                ));
            }
        }
        input.read_exact(&mut f64buf)?;
        let spacing = f64::from_le_bytes(f64buf);
        let half_width = spacing * points as f64 / 2.0;
        let grid = Grid::new(dim, points, half_width)?;
        let mut samples = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            input.read_exact(&mut f64buf)?;
            samples.push(f64::from_le_bytes(f64buf));
        }
        DensityField::new(grid, samples, "binary dump")
    }
}

/// Midpoint sampling of a pointwise density on the grid nodes.
pub fn sample<F>(density: F, grid: &Grid) -> Result<DensityField>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| density(&grid.node(i)))
        .collect();
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteSample {
                index: grid.multi_index(i),
                position: grid.node(i),
            });
        }
    }
    DensityField::new(grid.clone(), values, "density sampling")
}

// ---------------------------------------------------------------------------
// RestrictedMeasure
// ---------------------------------------------------------------------------

/// Jump intensity restricted to the complement of a centered ball:
/// `ν_r(y) = 1_{|y| ≥ r} ν(y)`, together with its total mass.
#[derive(Debug, Clone)]
pub struct RestrictedMeasure {
    model: LevyModel,
    cutoff: f64,
    mass: f64,
}

impl RestrictedMeasure {
    /// Builds the restriction outside radius `cutoff`; `cutoff = 0` keeps
    /// the whole intensity and requires finite total mass.
    pub fn new(model: LevyModel, cutoff: f64) -> Result<Self> {
        if !(cutoff >= 0.0 && cutoff.is_finite()) {
            return Err(Error::Precondition(format!(
                "restriction cutoff must be a finite nonnegative radius, got {cutoff}"
            )));
        }
        if !model.has_jumps() {
            return Err(Error::Precondition(
                "restricted measure of a model without jumps".into(),
            ));
        }
        let mass = if cutoff == 0.0 {
            model.total_mass()?
        } else {
            model.tail_mass(cutoff)?
        };
        Ok(RestrictedMeasure {
            model,
            cutoff,
            mass,
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Total mass `|ν_r|`, from radial quadrature.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Pointwise density; zero strictly inside the cutoff ball. The origin
    /// itself is only meaningful through [`Self::sample_on`], which gives
    /// the origin cell its average.
    pub fn density(&self, y: &[f64]) -> f64 {
        let s = norm(y);
        if s < self.cutoff {
            0.0
        } else {
            self.model.density(y)
        }
    }

    /// Midpoint samples on a grid, scaled so the lattice mass reproduces
    /// the quadrature mass captured inside the window (total mass minus
    /// the tail beyond the grid radius). The scale correction is O(Δ²) for
    /// cutoffs on half-cell boundaries (see [`Grid::snap_to_half_cell`]),
    /// so pointwise values keep midpoint accuracy while downstream Poisson
    /// bookkeeping becomes exact instead of resolution-limited. Windowing
    /// against the inscribed ball slightly undercounts box corners for
    /// d ≥ 2; the bias is the corner mass, negligible for decaying tails.
    ///
    /// With a zero cutoff the origin node receives the average of the
    /// intensity over the inscribed ball of its cell, which stays finite
    /// for every finite-mass intensity.
    pub fn sample_on(&self, grid: &Grid) -> Result<DensityField> {
        if grid.half_width() <= self.cutoff {
            return Err(Error::InvalidGrid(format!(
                "grid half-width {} does not reach past the cutoff {}",
                grid.half_width(),
                self.cutoff
            )));
        }
        let mut values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let y = grid.node(i);
                let s = norm(&y);
                if s == 0.0 {
                    0.0
                } else {
                    self.density(&y)
                }
            })
            .collect();
        if self.cutoff == 0.0 {
            let origin = grid.flat_index(&vec![grid.points_per_axis() / 2; grid.dim()]);
            values[origin] = self.origin_cell_average(grid)?;
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteSample {
                    index: grid.multi_index(i),
                    position: grid.node(i),
                });
            }
        }
        let cell = grid.spacing().powi(grid.dim() as i32);
        let raw_mass: f64 = values.iter().sum::<f64>() * cell;
        let beyond_window = self.model.tail_mass(grid.half_width())?;
        let captured = self.mass - beyond_window;
        if !(raw_mass > 0.0 && captured > 0.0) {
            return Err(Error::InvalidGrid(
                "restricted measure has no mass on this grid; enlarge or refine it".into(),
            ));
        }
        let scale = captured / raw_mass;
        for v in values.iter_mut() {
            *v *= scale;
        }
        DensityField::new(grid.clone(), values, "restricted measure sampling")
    }

    /// Average of the intensity over the ball of radius `Δ/2` around the
    /// origin, divided by the cell volume.
    fn origin_cell_average(&self, grid: &Grid) -> Result<f64> {
        let half = grid.spacing() / 2.0;
        let d = self.model.dim();
        let weight = self.model.angular().integral();
        let radial = |s: f64| {
            let log = self.model.log_radial(s) + (d as f64 - 1.0) * s.ln();
            if log < -700.0 {
                0.0
            } else {
                log.exp()
            }
        };
        let integral = match head_integral(radial, half, 1e-10, 200) {
            TailOutcome::Converged(q) => q.value,
            TailOutcome::Diverged { .. } => {
                return Err(Error::DivergentMoment {
                    context: "origin cell of a restricted measure".into(),
                })
            }
        };
        Ok(weight * integral / grid.spacing().powi(d as i32))
    }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Linear (zero-padded) convolution of two fields on the same grid,
/// scaled by the cell volume; the result is truncated back to the grid.
pub fn convolve(a: &DensityField, b: &DensityField) -> Result<DensityField> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch(
            "convolution operands live on different grids".into(),
        ));
    }
    let samples = convolve_raw(a.grid(), a.samples(), b.samples());
    DensityField::new(a.grid().clone(), samples, "convolution output")
}

/// The convolution kernel shared by [`convolve`] and the series builders;
/// works on raw sample slices to avoid intermediate clips.
fn convolve_raw(grid: &Grid, a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let n = grid.points_per_axis();
    let m = 2 * n;
    let padded_len = m.pow(d as u32);
    let mut fa = vec![Complex64::default(); padded_len];
    let mut fb = vec![Complex64::default(); padded_len];
    embed(grid, a, &mut fa);
    embed(grid, b, &mut fb);
    fft_all_axes(&mut fa, d, m, false);
    fft_all_axes(&mut fb, d, m, false);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    fft_all_axes(&mut fa, d, m, true);
    let scale = grid.spacing().powi(d as i32) / padded_len as f64;
    extract_center(grid, &fa)
        .into_iter()
        .map(|v| v * scale)
        .collect()
}

/// Copies an `n^d` cube into the low corner of a `(2n)^d` cube of zeros.
fn embed(grid: &Grid, src: &[f64], dst: &mut [Complex64]) {
    let d = grid.dim();
    let n = grid.points_per_axis();
    let m = 2 * n;
    for (flat, v) in src.iter().enumerate() {
        let mut rest = flat;
        let mut coords = [0usize; 3];
        for a in (0..d).rev() {
            coords[a] = rest % n;
            rest /= n;
        }
        let mut padded = 0usize;
        for a in 0..d {
            padded = padded * m + coords[a];
        }
        dst[padded] = Complex64::new(*v, 0.0);
    }
}

/// Reads the centered window of a linear-convolution result: output node
/// `q` (per axis) corresponds to padded index `q + n/2`.
fn extract_center(grid: &Grid, padded: &[Complex64]) -> Vec<f64> {
    let d = grid.dim();
    let n = grid.points_per_axis();
    let m = 2 * n;
    let offset = n / 2;
    (0..grid.len())
        .map(|flat| {
            let mut rest = flat;
            let mut coords = [0usize; 3];
            for a in (0..d).rev() {
                coords[a] = rest % n;
                rest /= n;
            }
            let mut p = 0usize;
            for a in 0..d {
                p = p * m + coords[a] + offset;
            }
            padded[p].re
        })
        .collect()
}

/// Fraction of the base field's mass sitting beyond half the grid radius;
/// an empirical proxy for how much one convolution step pushes past the
/// window. Heavy-tailed inputs lose real mass to truncation, and the
/// aliasing tolerances below widen by this allowance so that genuine
/// wrap-around or gross escape is still caught.
fn capture_loss_fraction(base: &DensityField) -> f64 {
    let mass = base.mass();
    if mass <= 0.0 {
        return 1.0;
    }
    (base.mass_outside(base.grid().half_width() / 2.0) / mass).min(1.0)
}

/// n-fold self-convolution by repeated squaring.
///
/// Only the mass identity `mass(out) = mass(base)^n` is asserted, to
/// [`NFOLD_MASS_RTOL`] plus the heavy-tail capture allowance; violation is
/// reported as aliasing with an instruction to enlarge the grid.
pub fn nfold(base: &DensityField, n: usize) -> Result<DensityField> {
    if n == 0 {
        return Err(Error::Precondition(
            "n-fold convolution needs n >= 1".into(),
        ));
    }
    let mut result: Option<DensityField> = None;
    let mut square = base.clone();
    let mut bits = n;
    loop {
        if bits & 1 == 1 {
            result = Some(match result {
                None => square.clone(),
                Some(r) => convolve(&r, &square)?,
            });
        }
        bits >>= 1;
        if bits == 0 {
            break;
        }
        square = convolve(&square, &square)?;
    }
    let out = result.expect("n >= 1 always yields a field");
    let expected_log = n as f64 * base.mass().ln();
    let deviation = (out.mass().ln() - expected_log).exp() - 1.0;
    let tolerance = NFOLD_MASS_RTOL + 2.0 * (n as f64 - 1.0) * capture_loss_fraction(base);
    if deviation.abs() > tolerance {
        return Err(Error::Aliasing {
            context: format!("{n}-fold convolution"),
            deviation: deviation.abs(),
            tolerance,
        });
    }
    Ok(out)
}

/// Upper tail `P[Poisson(λ) > n]`.
fn poisson_upper_tail(lambda: f64, n: usize) -> f64 {
    let mut term = (-lambda).exp();
    let mut cdf = term;
    for k in 1..=n {
        term *= lambda / k as f64;
        cdf += term;
    }
    (1.0 - cdf).max(0.0)
}

/// Density of the jump part of a compound-Poisson law at time `t` built
/// from the intensity outside radius `r`:
/// `e^{-t|ν_r|} Σ_{n≥1} t^n ν_r^{n*}/n!`.
///
/// With `r = 0` (finite total mass) this is the fully absolutely
/// continuous part of the law; the remaining atom `e^{-t|ν|}δ_0` is never
/// represented on the lattice.
pub fn compound_poisson(model: &LevyModel, r: f64, t: f64, grid: &Grid) -> Result<DensityField> {
    compound_poisson_with_terms(model, r, t, grid, None).map(|(field, _)| field)
}

/// As [`compound_poisson`], returning the number of series terms used;
/// `terms` forces a fixed truncation instead of the automatic rule.
///
/// The automatic rule adds terms until the sup-norm of the remainder —
/// bounded through `sup ν_r^{k*} ≤ |ν_r|^{k-1} sup ν_r` and the Poisson
/// tail — drops below [`POISSON_TAIL_RTOL`] of the running supremum.
pub fn compound_poisson_with_terms(
    model: &LevyModel,
    r: f64,
    t: f64,
    grid: &Grid,
    terms: Option<usize>,
) -> Result<(DensityField, usize)> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!(
            "compound-Poisson density needs t > 0, got {t}"
        )));
    }
    let nu = RestrictedMeasure::new(model.clone(), r)?;
    let base = nu.sample_on(grid)?;
    let m = nu.mass();
    let tm = t * m;
    let sup_base = base.max_value();
    // Work with q_n = ν^{n*}/|ν|^n so the running samples stay O(sup ν/|ν|);
    // the series is then Σ w_n q_n with Poisson weights w_n = e^{-tm}(tm)^n/n!.
    let mut q: Vec<f64> = base.samples().iter().map(|v| v / m).collect();
    let mut acc = vec![0.0f64; grid.len()];
    let mut weight = (-tm).exp() * tm;
    let mut used = 0usize;
    let cap = terms.unwrap_or(400).max(1);
    loop {
        used += 1;
        for (a, v) in acc.iter_mut().zip(q.iter()) {
            *a += weight * v;
        }
        let done = match terms {
            Some(k) => used >= k,
            None => {
                let sup_acc = acc.iter().cloned().fold(0.0, f64::max);
                let remainder = (sup_base / m) * poisson_upper_tail(tm, used);
                used >= 2 && remainder <= POISSON_TAIL_RTOL * sup_acc
            }
        };
        if done || used >= cap {
            break;
        }
        q = convolve_raw(grid, &q, base.samples())
            .into_iter()
            .map(|v| v / m)
            .collect();
        weight *= tm / (used + 1) as f64;
    }
    let field = DensityField::new(grid.clone(), acc, "compound-Poisson series")?;
    let target = -(-tm).exp_m1();
    let deviation = (field.mass() - target).abs() / target;
    // A fraction `esc` of the intensity mass lies beyond the window, so the
    // n-jump term loses about `n·esc` of its weight; averaged over the
    // Poisson weights that is `tm/(1 - e^{-tm})·esc`, allowed twice over.
    let tolerance =
        POISSON_MASS_RTOL + 2.0 * (tm / target) * capture_loss_fraction(&base);
    if deviation > tolerance {
        return Err(Error::Aliasing {
            context: "compound-Poisson mass".into(),
            deviation,
            tolerance,
        });
    }
    Ok((field, used))
}

// ---------------------------------------------------------------------------
// Centered discrete transforms
// ---------------------------------------------------------------------------

/// Samples of `ĥ(ξ) = ∫ e^{i⟨ξ,x⟩} h(x) dx` on the dual grid.
pub fn characteristic_function(field: &DensityField) -> Vec<Complex64> {
    let grid = field.grid();
    let d = grid.dim();
    let n = grid.points_per_axis();
    let mut buf: Vec<Complex64> = field
        .samples()
        .iter()
        .enumerate()
        .map(|(i, v)| Complex64::new(v * parity_sign(n, d, i), 0.0))
        .collect();
    fft_all_axes(&mut buf, d, n, true);
    let cell = grid.spacing().powi(d as i32);
    buf.iter_mut().enumerate().for_each(|(k, v)| {
        *v *= cell * parity_sign(n, d, k);
    });
    buf
}

/// Inverse of [`characteristic_function`]: recovers lattice samples of
/// `h(x) = (2π)^{-d} ∫ e^{-i⟨ξ,x⟩} ĥ(ξ) dξ` from dual-grid samples of `ĥ`.
///
/// Returns the real field together with the largest imaginary residue
/// relative to the field maximum; callers decide how much residue to
/// tolerate. The nonnegativity clip of [`DensityField::new`] applies.
pub fn field_from_spectrum(
    grid: &Grid,
    spectrum: &[Complex64],
    context: &str,
) -> Result<(DensityField, f64)> {
    if spectrum.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{context}: {} spectrum samples for a grid of {} nodes",
            spectrum.len(),
            grid.len()
        )));
    }
    let d = grid.dim();
    let n = grid.points_per_axis();
    let mut buf: Vec<Complex64> = spectrum
        .iter()
        .enumerate()
        .map(|(k, v)| v * parity_sign(n, d, k))
        .collect();
    fft_all_axes(&mut buf, d, n, false);
    let scale = (grid.frequency_spacing() / (2.0 * std::f64::consts::PI)).powi(d as i32);
    let mut max_re = 0.0f64;
    let mut max_im = 0.0f64;
    let samples: Vec<f64> = buf
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let w = v * (scale * parity_sign(n, d, j));
            max_re = max_re.max(w.re.abs());
            max_im = max_im.max(w.im.abs());
            w.re
        })
        .collect();
    let residue = if max_re > 0.0 { max_im / max_re } else { max_im };
    let field = DensityField::new(grid.clone(), samples, context)?;
    Ok((field, residue))
}

// ---------------------------------------------------------------------------
// The long-range interaction functional K
// ---------------------------------------------------------------------------

/// Outcome of a [`k_function`] scan.
#[derive(Debug, Clone, Serialize)]
pub struct KFunctionEstimate {
    /// Largest two-center ratio found (a lower bound on the true supremum).
    pub value: f64,
    /// Set when the scan kept growing by more than 1% per doubling of the
    /// probe range until the budget ran out.
    pub diverged: bool,
    /// Last probe radius examined.
    pub x_max_used: f64,
    /// `(|x|, ratio)` pairs actually evaluated.
    pub probes: Vec<(f64, f64)>,
}

/// Lower-bound estimate of
/// `K(r) = sup_{|x|>1} ∫_{|x-y|>r, |y|>r} f(|x-y|) f(|y|) dy / f(|x|)`
/// where `f` is the model's radial factor.
///
/// The supremum is scanned over 64 log-spaced probe radii up to `x_max`,
/// then the range doubles until the estimate stabilizes to 1% or the
/// doubling budget runs out; in the latter case `diverged` is set rather
/// than an error returned. Exponential radial factors cancel inside the
/// two-center exponent, so the scan stays well-conditioned far past the
/// underflow range of `f` itself.
pub fn k_function(model: &LevyModel, r: f64, x_max: f64, rtol: f64) -> Result<KFunctionEstimate> {
    if !(r >= 1.0) {
        return Err(Error::Precondition(format!(
            "interaction functional needs r >= 1, got {r}"
        )));
    }
    if !model.has_jumps() {
        return Err(Error::Precondition(
            "interaction functional of a model without jumps".into(),
        ));
    }
    if !(x_max > 2.0 * r) {
        return Err(Error::Precondition(format!(
            "probe range x_max = {x_max} must exceed 2r = {}",
            2.0 * r
        )));
    }
    const PROBES_INITIAL: usize = 64;
    const PROBES_PER_DOUBLING: usize = 16;
    const MAX_DOUBLINGS: usize = 8;
    let lo = 1.0 + 1e-3;

    let mut probes: Vec<f64> = (0..PROBES_INITIAL)
        .map(|i| {
            let u = (i + 1) as f64 / PROBES_INITIAL as f64;
            lo * (x_max / lo).powf(u)
        })
        .collect();
    let mut results: Vec<(f64, f64)> = eval_probes(model, r, &probes, rtol)?;
    let mut sup = results
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut reach = x_max;
    let mut diverged = true;
    for _ in 0..MAX_DOUBLINGS {
        if !sup.is_finite() {
            break;
        }
        let next = reach * 2.0;
        let extra: Vec<f64> = (0..PROBES_PER_DOUBLING)
            .map(|i| {
                let u = (i + 1) as f64 / PROBES_PER_DOUBLING as f64;
                reach * (next / reach).powf(u)
            })
            .collect();
        let more = eval_probes(model, r, &extra, rtol)?;
        let new_sup = more
            .iter()
            .map(|&(_, v)| v)
            .fold(sup, f64::max);
        results.extend(more);
        reach = next;
        let growth = (new_sup - sup) / sup.abs().max(f64::MIN_POSITIVE);
        sup = new_sup;
        if growth < 0.01 {
            diverged = false;
            break;
        }
    }
    probes.clear();
    Ok(KFunctionEstimate {
        value: sup,
        diverged: diverged || !sup.is_finite(),
        x_max_used: reach,
        probes: results,
    })
}

fn eval_probes(
    model: &LevyModel,
    r: f64,
    probes: &[f64],
    rtol: f64,
) -> Result<Vec<(f64, f64)>> {
    probes
        .par_iter()
        .map(|&x| two_center_ratio(model, x, r, rtol).map(|v| (x, v)))
        .collect()
}

/// `∫_{|x-y|>r, |y|>r} f(|x-y|) f(|y|) dy / f(|x|)` for `x` on the first
/// axis, evaluated entirely through log-space exponents so that common
/// exponential factors cancel.
fn two_center_ratio(model: &LevyModel, x: f64, r: f64, rtol: f64) -> Result<f64> {
    let log_fx = model.log_radial(x);
    match model.dim() {
        1 => {
            // Domain: (-∞,-r] ∪ [r, x-r] ∪ [x+r, ∞); the two unbounded
            // pieces carry the same integrand under u = |y| resp. u = y-x.
            let outer = |u: f64| {
                let e = model.log_radial(u) + model.log_radial(x + u) - log_fx;
                safe_exp(e)
            };
            let tails = match tail_integral(outer, r, rtol, 120) {
                TailOutcome::Converged(q) => 2.0 * q.value,
                TailOutcome::Diverged { .. } => {
                    return Err(Error::QuadratureNonConvergent {
                        context: format!("two-center outer tail at |x| = {x:.3e}"),
                        achieved: f64::INFINITY,
                        target: rtol,
                    })
                }
            };
            let middle = if x > 2.0 * r {
                // Symmetric about x/2; integrate the left half twice.
                let f = |y: f64| {
                    let e = model.log_radial(y) + model.log_radial(x - y) - log_fx;
                    safe_exp(e)
                };
                let mut breaks = vec![r];
                let mut b = r * 2.0;
                while b < x / 2.0 {
                    breaks.push(b);
                    b *= 2.0;
                }
                breaks.push(x / 2.0);
                let q = gk_adaptive_breaks(f, &breaks, 0.0, rtol, 20_000);
                if !q.converged {
                    return Err(Error::QuadratureNonConvergent {
                        context: format!("two-center middle at |x| = {x:.3e}"),
                        achieved: q.abs_error / q.value.abs().max(f64::MIN_POSITIVE),
                        target: rtol,
                    });
                }
                2.0 * q.value
            } else {
                0.0
            };
            Ok(tails + middle)
        }
        d => {
            // Polar reduction: y has radius s and angle θ against x; the
            // sphere factor is 2 s^(d-1) (d=2) or 2π s^(d-1) sin θ (d=3).
            let angular_const = if d == 2 {
                2.0
            } else {
                2.0 * std::f64::consts::PI
            };
            let shell = |s: f64| -> f64 {
                let inner = |theta: f64| {
                    let dist2 = x * x + s * s - 2.0 * x * s * theta.cos();
                    let dist = dist2.max(0.0).sqrt();
                    if dist <= r {
                        return 0.0;
                    }
                    let mut e =
                        model.log_radial(s) + model.log_radial(dist) - log_fx;
                    e += (d as f64 - 1.0) * s.ln();
                    if d == 3 {
                        let sin = theta.sin();
                        if sin <= 0.0 {
                            return 0.0;
                        }
                        e += sin.ln();
                    }
                    safe_exp(e)
                };
                // Break where the exclusion disk boundary crosses the arc.
                let cos_cross = (x * x + s * s - r * r) / (2.0 * x * s);
                let mut breaks = vec![0.0];
                if cos_cross.abs() < 1.0 {
                    breaks.push(cos_cross.acos());
                }
                breaks.push(std::f64::consts::PI);
                breaks.sort_by(f64::total_cmp);
                let q = gk_adaptive_breaks(inner, &breaks, 0.0, rtol, 8_000);
                q.value
            };
            let near = {
                let mut breaks = vec![r];
                let mut b = r * 2.0;
                let hi = (2.0 * x).max(4.0 * r);
                while b < hi {
                    breaks.push(b);
                    b *= 2.0;
                }
                breaks.push(hi);
                let q = gk_adaptive_breaks(&shell, &breaks, 0.0, rtol, 40_000);
                if !q.converged {
                    return Err(Error::QuadratureNonConvergent {
                        context: format!("two-center shells at |x| = {x:.3e}"),
                        achieved: q.abs_error / q.value.abs().max(f64::MIN_POSITIVE),
                        target: rtol,
                    });
                }
                q.value
            };
            let far_start = (2.0 * x).max(4.0 * r);
            let far = match tail_integral(&shell, far_start, rtol, 120) {
                TailOutcome::Converged(q) => q.value,
                TailOutcome::Diverged { .. } => {
                    return Err(Error::QuadratureNonConvergent {
                        context: format!("two-center far shells at |x| = {x:.3e}"),
                        achieved: f64::INFINITY,
                        target: rtol,
                    })
                }
            };
            Ok(angular_const * (near + far))
        }
    }
}

pub(crate) fn safe_exp(e: f64) -> f64 {
    if e > 700.0 {
        f64::INFINITY
    } else if e < -700.0 {
        0.0
    } else {
        e.exp()
    }
}

// ---------------------------------------------------------------------------
// Exponentially weighted moments
// ---------------------------------------------------------------------------

/// `(∫ e^{κ⟨θ,z⟩} ν_r(z) dz)^n` where `κ` is the model's exponential far-
/// field rate and `θ` a unit direction. The single integral is evaluated
/// by radial quadrature; the n-th power is the exact factorization of the
/// same weight integrated against the n-fold convolution.
pub fn exp_moment_integral(model: &LevyModel, r: f64, theta: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition(
            "exponential moment power needs n >= 1".into(),
        ));
    }
    if theta.len() != model.dim() {
        return Err(Error::Precondition(
            "direction length does not match the model dimension".into(),
        ));
    }
    let len = norm(theta);
    if !((len - 1.0).abs() < 1e-9) {
        return Err(Error::Precondition(format!(
            "direction must be a unit vector, |θ| = {len}"
        )));
    }
    if !(r > 0.0) && !model.finite_mass() {
        return Err(Error::DivergentMoment {
            context: "exponential moment down to the origin of an infinite-activity intensity"
                .into(),
        });
    }
    let kappa = model.kappa();
    let xi: Vec<f64> = theta.iter().map(|v| v * kappa).collect();
    let single = model.exp_tail_integral(&xi, r)?;
    Ok(single.powi(n as i32))
}
