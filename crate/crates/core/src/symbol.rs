//! Fourier-side evaluation of jump models: the characteristic exponent, its
//! symmetrized maximal function and inverse, split-radius bookkeeping, and
//! exponential-moment exponents.
//!
//! The jump part of the exponent is
//!
//! ```text
//! Phi(xi) = integral of (1 - e^{i<xi,y>} + i<xi,y> 1_{|y|<1}(y)) nu(dy),
//! ```
//!
//! evaluated in polar form: an angular sum over quadrature directions times a
//! one-dimensional radial integral per ray. Closed forms cover power-law and
//! relativistic radial laws; every other profile goes through compensated
//! adaptive quadrature with an accelerated oscillatory tail. The full
//! exponent adds the diffusion quadratic form and the drift phase:
//! `psi(xi) = <xi, A xi> + Phi(xi) - i<xi, b>`.
//!
//! The maximal function `Psi(r) = sup_{|xi| <= r} Re Phi(xi)` and its
//! generalized right inverse drive the small/large-jump split radius used by
//! the kernel decompositions; both are exposed here together with a sampled
//! [`PsiTable`] and a spectral-decay diagnostic for the frequency integrals
//! behind kernel inversion.

use std::collections::{HashMap, HashSet};
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::model::{sphere_quadrature, LevyModel, RadialLaw};
use crate::quad::{
    exp_rem2, gk_adaptive_breaks, head_integral, one_minus_cos, oscillation_breaks,
    oscillatory_tail, tail_integral, w_minus_sin, QuadResult, QuadValue, TailOutcome,
};

/// Value of a characteristic exponent at one frequency. The real part of the
/// jump contribution is nonnegative and even in the frequency; the imaginary
/// part is odd, so conjugating tracks a sign flip of the frequency.
pub type SymbolValue = Complex64;

/// Relative tolerance of the per-ray radial quadratures.
const RAY_RTOL: f64 = 1e-11;
/// Smallest ray frequency the oscillatory splitting supports; below this the
/// panel bookkeeping degenerates, and no caller has a legitimate need.
const MIN_RAY_FREQUENCY: f64 = 1e-7;
/// For finite-activity intensities the compensated ray integral plateaus at
/// the per-ray mass; above this frequency the residual oscillatory dip is
/// below every tolerance used here and the plateau value is returned.
const FINITE_MASS_PLATEAU_FREQ: f64 = 1e4;
/// Relative stability target for the directional supremum refinement.
const SUP_STABILITY_RTOL: f64 = 1e-6;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multiplies a bounded oscillatory factor by `exp(log_weight)` without
/// overflowing when the weight is steep: the product is assembled in log
/// space whenever the exponent alone would not be representable.
fn guarded(log_weight: f64, factor: f64) -> f64 {
    if factor == 0.0 || log_weight == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_weight < 600.0 {
        factor * log_weight.exp()
    } else {
        factor.signum() * (factor.abs().ln() + log_weight).exp()
    }
}

fn settle(outcome: TailOutcome, context: &str, target: f64) -> Result<f64> {
    match outcome {
        TailOutcome::Converged(q) if q.value.is_finite() => Ok(q.value),
        _ => Err(Error::QuadratureNonConvergent {
            context: context.into(),
            achieved: f64::INFINITY,
            target,
        }),
    }
}

fn require_converged<T: QuadValue>(q: QuadResult<T>, context: &str, target: f64) -> Result<T> {
    if q.converged && q.value.abs().is_finite() {
        Ok(q.value)
    } else {
        Err(Error::QuadratureNonConvergent {
            context: context.into(),
            achieved: q.abs_error / q.value.abs().max(f64::MIN_POSITIVE),
            target,
        })
    }
}

/// Closed form of the compensated power-law ray integral
///
/// ```text
/// J(u) = integral over s in (0, inf) of
///        (1 - e^{ius} + ius 1_{s<1}) s^{-1-alpha} ds,
/// ```
///
/// the radial factor of stable exponents. For `alpha != 1`,
/// `J(u) = -Gamma(-alpha) (-iu)^alpha + iu/(1-alpha)`; the `alpha = 1` limit
/// is `pi/2 |u| + i (u ln|u| - (1 - gamma) u)` with Euler's constant gamma.
pub fn stable_ray_integral(alpha: f64, u: f64) -> Complex64 {
    assert!(
        alpha > 0.0 && alpha < 2.0,
        "stability index must lie in (0, 2)"
    );
    if u == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let au = u.abs();
    if (alpha - 1.0).abs() < 1e-9 {
        return Complex64::new(FRAC_PI_2 * au, u * au.ln() - (1.0 - EULER_GAMMA) * u);
    }
    let g = gamma(-alpha);
    let p = au.powf(alpha);
    let (sin_a, cos_a) = (FRAC_PI_2 * alpha).sin_cos();
    Complex64::new(-g * cos_a * p, g * sin_a * u.signum() * p + u / (1.0 - alpha))
}

fn log_ray_weight(model: &LevyModel, s: f64) -> f64 {
    model.log_radial(s) + ((model.dim() - 1) as f64) * s.ln()
}

/// Compensated radial jump integral along one ray of a model's intensity:
/// for `u >= 0` the integral over `s` in `(0, inf)` of
/// `(1 - e^{ius} + ius 1_{s<1}) radial(s) s^{d-1} ds`; negative frequencies
/// are handled by conjugation.
///
/// The integral is split into an origin head (shells shrinking to zero, with
/// series-corrected integrands so the quadratic cancellation near the origin
/// costs no precision), a mid range whose adaptive panels never exceed half
/// an oscillation period and break at the compensation cutoff `s = 1`, and
/// tails in which the monotone envelope and the oscillatory parts are
/// integrated separately, the latter with alternating-series acceleration
/// over half-period chunks.
pub fn compensated_ray_integral(model: &LevyModel, u: f64) -> Result<Complex64> {
    ray_integral_parts(model, u, true)
}

fn ray_integral_parts(model: &LevyModel, u: f64, want_im: bool) -> Result<Complex64> {
    if !model.has_jumps() || u == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if u < 0.0 {
        return Ok(ray_integral_parts(model, -u, want_im)?.conj());
    }
    if u < MIN_RAY_FREQUENCY {
        return Err(Error::Precondition(format!(
            "ray frequency {u:.3e} below the supported minimum {MIN_RAY_FREQUENCY:.1e}"
        )));
    }
    if u > FINITE_MASS_PLATEAU_FREQ && model.finite_mass() {
        if want_im {
            return Err(Error::Unsupported(format!(
                "full complex ray integral above frequency {FINITE_MASS_PLATEAU_FREQ:.1e} \
                 for a finite-activity intensity"
            )));
        }
        let mass = model.total_mass()? / model.angular().integral();
        return Ok(Complex64::new(mass, 0.0));
    }

    let log_w = |s: f64| log_ray_weight(model, s);
    let hp = PI / u;
    let a_end = (0.25 * hp).min(1.0);
    let b_end = (4.0 * hp).max(2.0);

    let re_head = settle(
        head_integral(
            |s| guarded(log_w(s), one_minus_cos(u * s)),
            a_end,
            RAY_RTOL,
            700,
        ),
        "origin head of the compensated ray integral",
        RAY_RTOL,
    )?;
    let im_head = if want_im {
        settle(
            head_integral(
                |s| guarded(log_w(s), w_minus_sin(u * s)),
                a_end,
                RAY_RTOL,
                700,
            ),
            "origin head of the compensated ray phase",
            RAY_RTOL,
        )?
    } else {
        0.0
    };

    let mut breaks = oscillation_breaks(a_end, b_end, u, 8192);
    if a_end < 1.0 && 1.0 < b_end {
        breaks.push(1.0);
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
    }
    let mid = if want_im {
        // Imaginary integrand: compensated below the cutoff, plain above it;
        // the kink sits on a panel boundary.
        let f = |s: f64| {
            let lw = log_w(s);
            let re = guarded(lw, one_minus_cos(u * s));
            let im = if s < 1.0 {
                guarded(lw, w_minus_sin(u * s))
            } else {
                guarded(lw, -(u * s).sin())
            };
            Complex64::new(re, im)
        };
        require_converged(
            gk_adaptive_breaks(&f, &breaks, 0.0, RAY_RTOL, 1_000_000),
            "mid range of the compensated ray integral",
            RAY_RTOL,
        )?
    } else {
        let f = |s: f64| guarded(log_w(s), one_minus_cos(u * s));
        let v = require_converged(
            gk_adaptive_breaks(&f, &breaks, 0.0, RAY_RTOL, 1_000_000),
            "mid range of the compensated ray integral",
            RAY_RTOL,
        )?;
        Complex64::new(v, 0.0)
    };

    let w_tail = settle(
        tail_integral(|s| guarded(log_w(s), 1.0), b_end, RAY_RTOL, 96),
        "envelope tail of the compensated ray integral",
        RAY_RTOL,
    )?;
    let cos_tail = settle(
        oscillatory_tail(
            |s| guarded(log_w(s), (u * s).cos()),
            b_end,
            FRAC_PI_2 / u,
            hp,
            RAY_RTOL * 10.0,
            2000,
        ),
        "oscillatory cosine tail of the compensated ray integral",
        RAY_RTOL * 10.0,
    )?;
    let sin_tail = if want_im {
        settle(
            oscillatory_tail(
                |s| guarded(log_w(s), (u * s).sin()),
                b_end,
                0.0,
                hp,
                RAY_RTOL * 10.0,
                2000,
            ),
            "oscillatory sine tail of the compensated ray integral",
            RAY_RTOL * 10.0,
        )?
    } else {
        0.0
    };

    Ok(Complex64::new(
        re_head + mid.re + w_tail - cos_tail,
        im_head + mid.im - sin_tail,
    ))
}

fn ray_integral_re(model: &LevyModel, u: f64) -> Result<f64> {
    Ok(ray_integral_parts(model, u, false)?.re)
}

fn generic_sphere_sum(model: &LevyModel, xi: &[f64], want_im: bool) -> Result<Complex64> {
    let mut memo: HashMap<u64, Complex64> = HashMap::new();
    let mut acc = Complex64::new(0.0, 0.0);
    for (theta, w) in sphere_quadrature(model.dim()) {
        let g = model.angular().eval(&theta);
        if g == 0.0 {
            continue;
        }
        let u = dot(&theta, xi);
        if u == 0.0 {
            continue;
        }
        let key = u.abs().to_bits();
        let base = match memo.get(&key) {
            Some(v) => *v,
            None => {
                let v = ray_integral_parts(model, u.abs(), want_im)?;
                memo.insert(key, v);
                v
            }
        };
        let val = if u < 0.0 { base.conj() } else { base };
        acc += val * (g * w);
    }
    Ok(acc)
}

/// Jump part of the characteristic exponent at one frequency.
///
/// Power-law radial parts use the closed-form ray integral, relativistic
/// models the closed radial symbol `(m^{2/alpha} + |xi|^2)^{alpha/2} - m`;
/// everything else runs the compensated quadrature ray by ray, reusing rays
/// that share a frequency magnitude.
pub fn phi(model: &LevyModel, xi: &[f64]) -> Result<Complex64> {
    check_dim(model, xi)?;
    if !model.has_jumps() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if let Some((alpha, mass, _)) = model.relativistic_params() {
        let q2: f64 = xi.iter().map(|v| v * v).sum();
        return Ok(Complex64::new(
            (mass.powf(2.0 / alpha) + q2).powf(alpha * 0.5) - mass,
            0.0,
        ));
    }
    if let RadialLaw::Power { alpha } = model.radial() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (theta, w) in sphere_quadrature(model.dim()) {
            let g = model.angular().eval(&theta);
            if g == 0.0 {
                continue;
            }
            acc += stable_ray_integral(*alpha, dot(&theta, xi)) * (g * w);
        }
        return Ok(acc * model.amplitude());
    }
    generic_sphere_sum(model, xi, true)
}

/// Real part of the jump exponent; cheaper than [`phi`] because the odd
/// (phase) component of each ray is skipped entirely.
pub fn re_phi(model: &LevyModel, xi: &[f64]) -> Result<f64> {
    check_dim(model, xi)?;
    if !model.has_jumps() {
        return Ok(0.0);
    }
    if let Some((alpha, mass, _)) = model.relativistic_params() {
        let q2: f64 = xi.iter().map(|v| v * v).sum();
        return Ok((mass.powf(2.0 / alpha) + q2).powf(alpha * 0.5) - mass);
    }
    if let RadialLaw::Power { alpha } = model.radial() {
        let unit = stable_ray_integral(*alpha, 1.0).re * model.amplitude();
        let mut acc = 0.0;
        for (theta, w) in sphere_quadrature(model.dim()) {
            let g = model.angular().eval(&theta);
            if g == 0.0 {
                continue;
            }
            acc += g * w * dot(&theta, xi).abs().powf(*alpha);
        }
        return Ok(unit * acc);
    }
    Ok(generic_sphere_sum(model, xi, false)?.re)
}

/// Full characteristic exponent `psi(xi) = <xi,A xi> + Phi(xi) - i<xi,b>`,
/// so that the Fourier transform of the time-t law is `exp(-t psi)`.
pub fn psi(model: &LevyModel, xi: &[f64]) -> Result<Complex64> {
    let jump = phi(model, xi)?;
    let quad = model
        .gaussian()
        .map(|a| a.quadratic_form(xi))
        .unwrap_or(0.0);
    let lin = dot(model.drift(), xi);
    Ok(Complex64::new(jump.re + quad, jump.im - lin))
}

/// Fully compensated exponent of the jumps inside the centered ball of
/// radius `r`:
///
/// ```text
/// integral over |y| < r of (1 - e^{i<xi,y>} + i<xi,y>) nu(dy).
/// ```
///
/// This is the Fourier exponent of the small-jump component after its mean
/// has been absorbed into the shifted drift; for symmetric intensities the
/// phase vanishes identically and is not computed.
pub fn small_jump_exponent(model: &LevyModel, xi: &[f64], r: f64) -> Result<Complex64> {
    check_dim(model, xi)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Precondition(
            "small-jump cutoff radius must be positive and finite".into(),
        ));
    }
    if !model.has_jumps() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let want_im = !model.is_symmetric();
    let mut memo: HashMap<u64, Complex64> = HashMap::new();
    let mut acc = Complex64::new(0.0, 0.0);
    for (theta, w) in sphere_quadrature(model.dim()) {
        let g = model.angular().eval(&theta);
        if g == 0.0 {
            continue;
        }
        let u = dot(&theta, xi);
        if u == 0.0 {
            continue;
        }
        let key = u.abs().to_bits();
        let base = match memo.get(&key) {
            Some(v) => *v,
            None => {
                let v = small_jump_ray(model, u.abs(), r, want_im)?;
                memo.insert(key, v);
                v
            }
        };
        let val = if u < 0.0 { base.conj() } else { base };
        acc += val * (g * w);
    }
    Ok(acc)
}

fn small_jump_ray(model: &LevyModel, u: f64, r: f64, want_im: bool) -> Result<Complex64> {
    if u < MIN_RAY_FREQUENCY {
        return Err(Error::Precondition(format!(
            "ray frequency {u:.3e} below the supported minimum {MIN_RAY_FREQUENCY:.1e}"
        )));
    }
    let log_w = |s: f64| log_ray_weight(model, s);
    let a_end = (0.25 * PI / u).min(r);
    let re_head = settle(
        head_integral(
            |s| guarded(log_w(s), one_minus_cos(u * s)),
            a_end,
            RAY_RTOL,
            700,
        ),
        "origin head of the small-jump exponent",
        RAY_RTOL,
    )?;
    let im_head = if want_im {
        settle(
            head_integral(
                |s| guarded(log_w(s), w_minus_sin(u * s)),
                a_end,
                RAY_RTOL,
                700,
            ),
            "origin head of the small-jump phase",
            RAY_RTOL,
        )?
    } else {
        0.0
    };
    let (re_mid, im_mid) = if a_end < r {
        let breaks = oscillation_breaks(a_end, r, u, 8192);
        if want_im {
            let f = |s: f64| {
                let lw = log_w(s);
                Complex64::new(
                    guarded(lw, one_minus_cos(u * s)),
                    guarded(lw, w_minus_sin(u * s)),
                )
            };
            let v = require_converged(
                gk_adaptive_breaks(&f, &breaks, 0.0, RAY_RTOL, 1_000_000),
                "mid range of the small-jump exponent",
                RAY_RTOL,
            )?;
            (v.re, v.im)
        } else {
            let f = |s: f64| guarded(log_w(s), one_minus_cos(u * s));
            let v = require_converged(
                gk_adaptive_breaks(&f, &breaks, 0.0, RAY_RTOL, 1_000_000),
                "mid range of the small-jump exponent",
                RAY_RTOL,
            )?;
            (v, 0.0)
        }
    } else {
        (0.0, 0.0)
    };
    Ok(Complex64::new(re_head + re_mid, im_head + im_mid))
}

fn check_dim(model: &LevyModel, xi: &[f64]) -> Result<()> {
    if xi.len() != model.dim() {
        return Err(Error::Precondition(format!(
            "frequency has {} components but the model dimension is {}",
            xi.len(),
            model.dim()
        )));
    }
    Ok(())
}

fn golden_max(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Directional supremum for one-dimensional generic intensities: scans the
/// ray on a geometric frequency grid, refines around the best sample by
/// golden-section search in log frequency, and doubles the scan density
/// until the supremum is stable to one part in 10^6.
///
/// For finite-activity intensities, frequencies above the plateau threshold
/// evaluate to the per-ray mass; levels within about a percent of that
/// plateau are therefore resolved only approximately.
fn ray_sup_1d(model: &LevyModel, r: f64) -> Result<f64> {
    let g_sum: f64 = sphere_quadrature(1)
        .iter()
        .map(|(th, w)| model.angular().eval(th) * w)
        .sum();
    if g_sum <= 0.0 {
        return Ok(0.0);
    }
    let mut mass_ray: Option<f64> = None;
    let mut ray_re = |u: f64| -> Result<f64> {
        if model.finite_mass() && u > FINITE_MASS_PLATEAU_FREQ {
            let m = match mass_ray {
                Some(m) => m,
                None => {
                    let m = model.total_mass()? / model.angular().integral();
                    mass_ray = Some(m);
                    m
                }
            };
            Ok(g_sum * m)
        } else {
            Ok(g_sum * ray_integral_re(model, u)?)
        }
    };
    if r <= MIN_RAY_FREQUENCY * 16.0 {
        // Quadratic regime: the real part is increasing, the endpoint wins.
        return ray_re(r);
    }
    let lo = (r * 1e-3).min(1e-4).max(MIN_RAY_FREQUENCY);
    let mut ppd = 8usize;
    let mut prev: Option<f64> = None;
    loop {
        let decades = (r / lo).log10().max(0.1);
        let n = ((decades * ppd as f64).ceil() as usize).clamp(8, 6000);
        let (ln_lo, ln_hi) = (lo.ln(), r.ln());
        let mut best_i = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..=n {
            let u = (ln_lo + (ln_hi - ln_lo) * (i as f64) / (n as f64)).exp();
            let v = ray_re(u)?;
            if v > best_v {
                best_v = v;
                best_i = i;
            }
        }
        let a = ln_lo + (ln_hi - ln_lo) * (best_i.saturating_sub(1) as f64) / (n as f64);
        let b = ln_lo + (ln_hi - ln_lo) * (((best_i + 1).min(n)) as f64) / (n as f64);
        let (_, refined) = golden_max(|x: f64| ray_re(x.exp()), a, b, 48)?;
        let sup = refined.max(best_v);
        if let Some(p) = prev {
            if (sup - p).abs() <= SUP_STABILITY_RTOL * sup.abs().max(f64::MIN_POSITIVE) {
                return Ok(sup);
            }
        }
        prev = Some(sup);
        ppd *= 2;
        if ppd > 64 {
            return Ok(sup);
        }
    }
}

/// Maximal function of the symmetrized jump exponent,
/// `Psi(r) = sup over |xi| <= r of Re Phi(xi)`.
///
/// Power-law models scale exactly (`Psi(r) = k r^alpha` with the angular
/// supremum of the closed-form factor); relativistic models have a radially
/// increasing symbol with a closed expression. Generic profiles are handled
/// in one dimension by scanning and refining the ray; other dimensions are
/// outside the supported envelope.
pub fn psi_max(model: &LevyModel, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Precondition(
            "supremum radius must be positive and finite".into(),
        ));
    }
    if !model.has_jumps() {
        return Ok(0.0);
    }
    if let Some((alpha, mass, _)) = model.relativistic_params() {
        return Ok((mass.powf(2.0 / alpha) + r * r).powf(alpha * 0.5) - mass);
    }
    match (model.radial(), model.dim()) {
        (RadialLaw::Power { alpha }, 1) => {
            let g_sum: f64 = sphere_quadrature(1)
                .iter()
                .map(|(th, w)| model.angular().eval(th) * w)
                .sum();
            Ok(stable_ray_integral(*alpha, 1.0).re * model.amplitude() * g_sum * r.powf(*alpha))
        }
        (RadialLaw::Power { .. }, 2) => {
            let table = StableAngularTable::build(model)?;
            Ok(table.max_factor() * r.powf(table.alpha()))
        }
        (_, 1) => ray_sup_1d(model, r),
        _ => Err(Error::Unsupported(format!(
            "symbol supremum over balls in dimension {} (supported: dimension 1, \
             two-dimensional power laws, relativistic models)",
            model.dim()
        ))),
    }
}

/// Generalized right inverse of the maximal function: the largest radius at
/// which `Psi` still equals the level `s`. Closed forms invert power-law and
/// relativistic symbols; generic one-dimensional profiles bracket the level
/// by doubling and bisect, keeping the largest radius whose supremum does
/// not exceed the level. Levels at or beyond the reachable supremum (finite
/// activity without diffusion) report `OutOfRange`.
pub fn psi_inverse(model: &LevyModel, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Precondition(
            "inverse level must be positive and finite".into(),
        ));
    }
    if !model.has_jumps() {
        return Err(Error::OutOfRange { level: s, sup: 0.0 });
    }
    if let Some((alpha, mass, _)) = model.relativistic_params() {
        return Ok(((s + mass).powf(2.0 / alpha) - mass.powf(2.0 / alpha)).sqrt());
    }
    if let RadialLaw::Power { alpha } = model.radial() {
        if model.dim() <= 2 {
            let unit = psi_max(model, 1.0)?;
            return Ok((s / unit).powf(1.0 / *alpha));
        }
    }
    if model.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "symbol inverse in dimension {} (supported: dimension 1, two-dimensional \
             power laws, relativistic models)",
            model.dim()
        )));
    }
    if model.finite_mass() {
        // Re Phi never exceeds twice the total mass, so levels beyond that
        // bound are unreachable without scanning.
        let bound = 2.0 * model.total_mass()?;
        if s >= bound {
            return Err(Error::OutOfRange {
                level: s,
                sup: psi_max(model, 1e6)?,
            });
        }
    }
    let mut hi = 1.0;
    let mut v_hi = psi_max(model, hi)?;
    if v_hi <= s {
        let mut doublings = 0;
        while v_hi <= s {
            hi *= 2.0;
            doublings += 1;
            v_hi = psi_max(model, hi)?;
            if doublings > 60 {
                return Err(Error::OutOfRange {
                    level: s,
                    sup: v_hi,
                });
            }
        }
    } else {
        let mut lo_probe = 0.5;
        let mut halvings = 0;
        loop {
            let v = psi_max(model, lo_probe)?;
            if v <= s {
                hi = lo_probe * 2.0;
                break;
            }
            lo_probe *= 0.5;
            halvings += 1;
            if halvings > 80 {
                return Err(Error::Precondition(
                    "inverse level bracket collapsed toward zero radius".into(),
                ));
            }
        }
    }
    let mut lo = hi * 0.5;
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if psi_max(model, mid)? <= s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Radius separating small from large jumps at time `t`: the reciprocal of
/// the inverse maximal function at level `1/t`. Kernel decompositions
/// restrict the intensity to jumps at least this large and fold the rest
/// into the smooth small-jump factor.
pub fn jump_split_radius(model: &LevyModel, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Precondition(
            "split radius requires a positive finite time".into(),
        ));
    }
    Ok(psi_inverse(model, t.recip())?.recip())
}

/// Exponent of the exponential moment: `E[e^{<xi, X_t>}] = e^{-t w(xi)}`
/// with
///
/// ```text
/// w(xi) = -<xi,b> - <xi,A xi>
///         + integral of (1 - e^{<xi,y>} + <xi,y> 1_{|y|<1}(y)) nu(dy).
/// ```
///
/// The large-jump part is checked first: if the weighted tail integral
/// diverges, the moment does not exist and `DivergentMoment` is returned.
pub fn exp_moment_exponent(model: &LevyModel, xi: &[f64]) -> Result<f64> {
    check_dim(model, xi)?;
    let lin = dot(model.drift(), xi);
    let quad = model
        .gaussian()
        .map(|a| a.quadratic_form(xi))
        .unwrap_or(0.0);
    let mut jump = 0.0;
    if model.has_jumps() {
        jump += model.tail_mass(1.0)?;
        jump -= model.exp_tail_integral(xi, 1.0)?;
        for (theta, w) in sphere_quadrature(model.dim()) {
            let g = model.angular().eval(&theta);
            if g == 0.0 {
                continue;
            }
            let u = dot(&theta, xi);
            if u == 0.0 {
                continue;
            }
            // 1 - e^{us} + us is exactly minus the second exponential
            // remainder, kept in series form near the origin.
            let f = |s: f64| -guarded(log_ray_weight(model, s), exp_rem2(u * s));
            let inner = settle(
                head_integral(f, 1.0, RAY_RTOL, 700),
                "compensated exponential-moment integral near the origin",
                RAY_RTOL,
            )?;
            jump += g * w * inner;
        }
    }
    Ok(-lin - quad + jump)
}

/// Sampled maximal function on a geometric radius grid with log-linear
/// interpolation. Values are clamped to be nondecreasing, so interpolation
/// preserves monotonicity; queries outside the tabulated range return the
/// nearest endpoint value.
#[derive(Debug, Clone, Serialize)]
pub struct PsiTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl PsiTable {
    /// Tabulates the maximal function on `[r_min, r_max]` with roughly
    /// `points_per_decade` geometric samples per decade.
    pub fn build(
        model: &LevyModel,
        r_min: f64,
        r_max: f64,
        points_per_decade: usize,
    ) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(Error::Precondition(
                "table range must satisfy 0 < r_min < r_max < infinity".into(),
            ));
        }
        if points_per_decade == 0 {
            return Err(Error::Precondition(
                "table density must be at least one point per decade".into(),
            ));
        }
        let decades = (r_max / r_min).log10();
        let count = (((decades * points_per_decade as f64).ceil() as usize) + 1).max(2);
        let mut radii = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        let (ln_lo, ln_hi) = (r_min.ln(), r_max.ln());
        let mut running = 0.0f64;
        for i in 0..count {
            let r = (ln_lo + (ln_hi - ln_lo) * (i as f64) / ((count - 1) as f64)).exp();
            let v = psi_max(model, r)?;
            running = running.max(v);
            radii.push(r);
            values.push(running);
        }
        Ok(Self { radii, values })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.radii.iter().copied().zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Interpolated value at radius `r` (log-linear between samples,
    /// clamped to the endpoints outside the tabulated range).
    pub fn value_at(&self, r: f64) -> f64 {
        let n = self.radii.len();
        if r <= self.radii[0] {
            return self.values[0];
        }
        if r >= self.radii[n - 1] {
            return self.values[n - 1];
        }
        let idx = self.radii.partition_point(|&x| x < r);
        let (r0, r1) = (self.radii[idx - 1], self.radii[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        let t = (r / r0).ln() / (r1 / r0).ln();
        v0 + (v1 - v0) * t
    }

    /// Largest ratio `Psi(2r)/Psi(r)` observable on the table; finite for
    /// every doubling-bounded symbol.
    pub fn max_doubling_ratio(&self) -> f64 {
        let r_max = self.radii[self.radii.len() - 1];
        let mut worst = 1.0f64;
        for (&r, &v) in self.radii.iter().zip(&self.values) {
            if 2.0 * r <= r_max && v > 0.0 {
                worst = worst.max(self.value_at(2.0 * r) / v);
            }
        }
        worst
    }
}

/// Angular factor of the real part of two-dimensional power-law exponents:
/// `Re Phi(xi) = |xi|^alpha * factor(angle)`, with the factor tabulated by a
/// circular convolution of the angular weight against `|cos|^alpha` on the
/// midpoint direction grid.
#[derive(Debug, Clone)]
pub struct StableAngularTable {
    alpha: f64,
    values: Vec<f64>,
}

impl StableAngularTable {
    pub fn build(model: &LevyModel) -> Result<Self> {
        let RadialLaw::Power { alpha } = model.radial() else {
            return Err(Error::Precondition(
                "angular symbol tables require a power-law radial intensity".into(),
            ));
        };
        if model.dim() != 2 {
            return Err(Error::Precondition(
                "angular symbol tables are two-dimensional".into(),
            ));
        }
        let nodes = sphere_quadrature(2);
        let n = nodes.len();
        let g: Vec<f64> = nodes.iter().map(|(th, _)| model.angular().eval(th)).collect();
        let w = nodes[0].1;
        let unit = stable_ray_integral(*alpha, 1.0).re * model.amplitude() * w;
        // Midpoint angles differ by exact multiples of the grid step, so the
        // convolution kernel |cos|^alpha is shared across rows.
        let kernel: Vec<f64> = (0..n)
            .map(|k| {
                (2.0 * PI * k as f64 / n as f64)
                    .cos()
                    .abs()
                    .powf(*alpha)
            })
            .collect();
        let mut values = vec![0.0; n];
        for (i, slot) in values.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &gj) in g.iter().enumerate() {
                if gj == 0.0 {
                    continue;
                }
                acc += gj * kernel[(i + n - j) % n];
            }
            *slot = unit * acc;
        }
        Ok(Self {
            alpha: *alpha,
            values,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Angular factor at the given direction angle (periodic linear
    /// interpolation between midpoint samples).
    pub fn factor(&self, angle: f64) -> f64 {
        let n = self.values.len();
        let pos = (angle / (2.0 * PI) * n as f64 - 0.5).rem_euclid(n as f64);
        let i0 = pos.floor() as usize % n;
        let frac = pos - pos.floor();
        self.values[i0] * (1.0 - frac) + self.values[(i0 + 1) % n] * frac
    }

    /// Real part of the jump exponent at a two-component frequency.
    pub fn re_phi(&self, xi: &[f64]) -> f64 {
        let rho = xi[0].hypot(xi[1]);
        if rho == 0.0 {
            return 0.0;
        }
        rho.powf(self.alpha) * self.factor(xi[1].atan2(xi[0]))
    }

    /// Supremum of the angular factor, sharpened by a parabolic fit through
    /// the best sample and its neighbors.
    pub fn max_factor(&self) -> f64 {
        let n = self.values.len();
        let (best, _) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("table is nonempty");
        let y0 = self.values[(best + n - 1) % n];
        let y1 = self.values[best];
        let y2 = self.values[(best + 1) % n];
        let denom = y0 - 2.0 * y1 + y2;
        if denom >= 0.0 {
            return y1;
        }
        let peak = y1 - (y0 - y2) * (y0 - y2) / (8.0 * denom);
        peak.max(y1)
    }
}

/// One probe time of the spectral-decay diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecayRow {
    pub t: f64,
    /// Integral of `exp(-t Re Phi(xi)) |xi|` over frequency space, absent
    /// when it diverges on this model.
    pub heat_integral: Option<f64>,
    /// Inverse maximal function at level `1/t`, absent beyond its range.
    pub inverse_scale: Option<f64>,
    /// `heat_integral / inverse_scale^(d+1)` when both exist; bounded in `t`
    /// exactly when spectral kernel inversion stays well conditioned.
    pub ratio: Option<f64>,
}

/// Outcome of the spectral-decay diagnostic across a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecayReport {
    /// False when the model has no jump part at all.
    pub applicable: bool,
    /// True when the frequency integral diverged for at least one time.
    pub divergent: bool,
    pub rows: Vec<SpectralDecayRow>,
    /// Max/min of the observed finite ratios; near one for self-similar
    /// symbols, unbounded growth signals ill-conditioned inversion.
    pub ratio_spread: Option<f64>,
}

enum RayKind {
    /// `Re Phi(rho theta) = coeff * rho^alpha` along this direction.
    PowerLike { coeff: f64, alpha: f64 },
    Relativistic { alpha: f64, mass: f64 },
    Generic1d { g_sum: f64, plateau: Option<f64> },
}

struct RayDir {
    weight: f64,
    kind: RayKind,
}

fn ray_re_phi(model: &LevyModel, kind: &RayKind, rho: f64) -> Result<f64> {
    match kind {
        RayKind::PowerLike { coeff, alpha } => Ok(coeff * rho.powf(*alpha)),
        RayKind::Relativistic { alpha, mass } => {
            Ok((mass.powf(2.0 / alpha) + rho * rho).powf(alpha * 0.5) - mass)
        }
        RayKind::Generic1d { g_sum, plateau } => {
            if let Some(m) = plateau {
                if rho > FINITE_MASS_PLATEAU_FREQ {
                    return Ok(g_sum * m);
                }
            }
            Ok(g_sum * ray_integral_re(model, rho)?)
        }
    }
}

/// Checks how fast `exp(-t Re Phi)` decays in frequency relative to the
/// natural inverse length scale: for each probe time the report carries
/// `integral of exp(-t Re Phi(xi)) |xi| d xi` divided by the inverse maximal
/// function at `1/t` raised to `d+1`. Divergent integrals (finite-activity
/// jumps without diffusion) are flagged rather than failed, and diffusive
/// models without jumps are reported as inapplicable.
pub fn spectral_decay_check(model: &LevyModel, t_grid: &[f64]) -> Result<SpectralDecayReport> {
    if t_grid.is_empty() {
        return Err(Error::Precondition(
            "spectral-decay diagnostic needs at least one probe time".into(),
        ));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Precondition(
            "probe times must be positive and finite".into(),
        ));
    }
    if !model.has_jumps() {
        return Ok(SpectralDecayReport {
            applicable: false,
            divergent: false,
            rows: Vec::new(),
            ratio_spread: None,
        });
    }
    let dim = model.dim();
    let sphere_total: f64 = sphere_quadrature(dim).iter().map(|(_, w)| *w).sum();
    let directions: Vec<RayDir> = if let Some((alpha, mass, _)) = model.relativistic_params() {
        vec![RayDir {
            weight: sphere_total,
            kind: RayKind::Relativistic { alpha, mass },
        }]
    } else {
        match (model.radial(), dim) {
            (RadialLaw::Power { alpha }, 1) => {
                let g_sum: f64 = sphere_quadrature(1)
                    .iter()
                    .map(|(th, w)| model.angular().eval(th) * w)
                    .sum();
                let coeff = stable_ray_integral(*alpha, 1.0).re * model.amplitude() * g_sum;
                vec![RayDir {
                    weight: 2.0,
                    kind: RayKind::PowerLike {
                        coeff,
                        alpha: *alpha,
                    },
                }]
            }
            (RadialLaw::Power { .. }, 2) => {
                let table = StableAngularTable::build(model)?;
                sphere_quadrature(2)
                    .iter()
                    .map(|(th, w)| RayDir {
                        weight: *w,
                        kind: RayKind::PowerLike {
                            coeff: table.factor(th[1].atan2(th[0])),
                            alpha: table.alpha(),
                        },
                    })
                    .collect()
            }
            (_, 1) => {
                let g_sum: f64 = sphere_quadrature(1)
                    .iter()
                    .map(|(th, w)| model.angular().eval(th) * w)
                    .sum();
                let plateau = if model.finite_mass() {
                    Some(model.total_mass()? / model.angular().integral())
                } else {
                    None
                };
                vec![RayDir {
                    weight: 2.0,
                    kind: RayKind::Generic1d { g_sum, plateau },
                }]
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "spectral-decay diagnostic in dimension {dim} for this radial law"
                )))
            }
        }
    };

    let rows: Vec<SpectralDecayRow> = t_grid
        .par_iter()
        .map(|&t| -> Result<SpectralDecayRow> {
            let mut heat: Option<f64> = Some(0.0);
            for dir in &directions {
                let failure = std::cell::Cell::new(false);
                let error: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
                let f = |rho: f64| -> f64 {
                    match ray_re_phi(model, &dir.kind, rho) {
                        Ok(v) => rho.powi(dim as i32) * (-t * v).exp(),
                        Err(e) => {
                            failure.set(true);
                            if error.borrow().is_none() {
                                *error.borrow_mut() = Some(e);
                            }
                            0.0
                        }
                    }
                };
                let head = head_integral(&f, 1.0, 1e-9, 300);
                let tail = tail_integral(&f, 1.0, 1e-9, 140);
                if failure.get() {
                    return Err(error
                        .borrow_mut()
                        .take()
                        .expect("failure recorded an error"));
                }
                match (head, tail) {
                    (TailOutcome::Converged(h), TailOutcome::Converged(q))
                        if h.value.is_finite() && q.value.is_finite() =>
                    {
                        if let Some(acc) = heat.as_mut() {
                            *acc += dir.weight * (h.value + q.value);
                        }
                    }
                    _ => {
                        heat = None;
                        break;
                    }
                }
            }
            let inverse_scale = match psi_inverse(model, t.recip()) {
                Ok(v) => Some(v),
                Err(Error::OutOfRange { .. }) => None,
                Err(e) => return Err(e),
            };
            let ratio = match (heat, inverse_scale) {
                (Some(h), Some(s)) => Some(h / s.powi(dim as i32 + 1)),
                _ => None,
            };
            Ok(SpectralDecayRow {
                t,
                heat_integral: heat,
                inverse_scale,
                ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let finite: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let ratio_spread = if finite.is_empty() {
        None
    } else {
        let max = finite.iter().cloned().fold(f64::MIN, f64::max);
        let min = finite.iter().cloned().fold(f64::MAX, f64::min);
        Some(max / min)
    };
    let divergent = rows.iter().any(|r| r.heat_integral.is_none());
    Ok(SpectralDecayReport {
        applicable: true,
        divergent,
        rows,
        ratio_spread,
    })
}

/// Evaluates the jump exponent at many frequencies in parallel. On
/// one-dimensional generic profiles the expensive ray integrals are computed
/// once per distinct frequency magnitude and shared across the batch; closed
/// forms are simply mapped in parallel.
pub fn phi_batch(model: &LevyModel, xis: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    if !model.has_jumps() {
        for xi in xis {
            check_dim(model, xi)?;
        }
        return Ok(vec![Complex64::new(0.0, 0.0); xis.len()]);
    }
    let generic = !matches!(model.radial(), RadialLaw::Power { .. })
        && model.relativistic_params().is_none();
    if !(generic && model.dim() == 1) {
        return xis
            .par_iter()
            .map(|xi| phi(model, xi))
            .collect::<Result<Vec<_>>>();
    }
    for xi in xis {
        check_dim(model, xi)?;
    }
    let map = shared_ray_values(xis, |u| ray_integral_parts(model, u, true))?;
    let gp = model.angular().eval(&[1.0]);
    let gm = model.angular().eval(&[-1.0]);
    Ok(xis
        .iter()
        .map(|xi| {
            let u = xi[0];
            if u == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let base = map[&u.abs().to_bits()];
            let i_u = if u < 0.0 { base.conj() } else { base };
            i_u * gp + i_u.conj() * gm
        })
        .collect())
}

/// Batch variant of [`small_jump_exponent`] with the same ray sharing as
/// [`phi_batch`].
pub fn small_jump_exponent_batch(
    model: &LevyModel,
    xis: &[Vec<f64>],
    r: f64,
) -> Result<Vec<Complex64>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Precondition(
            "small-jump cutoff radius must be positive and finite".into(),
        ));
    }
    if !model.has_jumps() {
        for xi in xis {
            check_dim(model, xi)?;
        }
        return Ok(vec![Complex64::new(0.0, 0.0); xis.len()]);
    }
    if model.dim() != 1 {
        return xis
            .par_iter()
            .map(|xi| small_jump_exponent(model, xi, r))
            .collect::<Result<Vec<_>>>();
    }
    for xi in xis {
        check_dim(model, xi)?;
    }
    let want_im = !model.is_symmetric();
    let map = shared_ray_values(xis, |u| small_jump_ray(model, u, r, want_im))?;
    let gp = model.angular().eval(&[1.0]);
    let gm = model.angular().eval(&[-1.0]);
    Ok(xis
        .iter()
        .map(|xi| {
            let u = xi[0];
            if u == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let base = map[&u.abs().to_bits()];
            let i_u = if u < 0.0 { base.conj() } else { base };
            i_u * gp + i_u.conj() * gm
        })
        .collect())
}

fn shared_ray_values(
    xis: &[Vec<f64>],
    eval: impl Fn(f64) -> Result<Complex64> + Sync,
) -> Result<HashMap<u64, Complex64>> {
    let mut seen = HashSet::new();
    let mut keys: Vec<f64> = Vec::new();
    for xi in xis {
        let u = xi[0].abs();
        if u > 0.0 && seen.insert(u.to_bits()) {
            keys.push(u);
        }
    }
    let values: Vec<Complex64> = keys
        .par_iter()
        .map(|&u| eval(u))
        .collect::<Result<Vec<_>>>()?;
    Ok(keys
        .iter()
        .map(|u| u.to_bits())
        .zip(values)
        .collect())
}
