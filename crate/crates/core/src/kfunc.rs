//! The two-center tail functional K(r) of a radial profile.
//!
//! For a nonincreasing profile f this evaluates
//!
//! ```text
//! K(r) = sup_{|x| > 1}  (1 / f(|x|)) * integral over { |x - y| > r, |y| > r }
//!                        of f(|x - y|) f(|y|) dy,        r >= 1,
//! ```
//!
//! the quantity that controls whether a double jump can outweigh a single
//! long jump. Rotational symmetry collapses the d-dimensional integral to
//! a two-variable "two-center" integral in (u, v) = (|y|, |x - y|); the
//! Jacobian weight depends on the dimension only. Everything is computed
//! through `log f` so that exponentially small profile values at large
//! radii neither underflow nor overflow.
//!
//! The supremum over |x| is scanned on a geometric grid whose cap doubles
//! until the scan saturates; a scan that keeps growing at the cap is
//! reported with a divergence flag rather than a number pretending to be
//! final.

use serde::Serialize;

use crate::model::RadialProfile;
use crate::quad::{gauss_legendre, gk_adaptive_breaks, legendre_rule, tail_integral, TailOutcome};

/// Result of evaluating K at one restriction radius.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KEstimate {
    pub r: f64,
    /// Best available value of the supremum (a lower bound: the scan is a
    /// finite sample of center radii).
    pub value: f64,
    /// Center radius realizing the scanned supremum.
    pub argmax_radius: f64,
    /// Largest center radius the scan actually visited.
    pub x_max: f64,
    /// Set when the scanned supremum kept growing as the cap doubled, or
    /// when the integral itself fails to converge for some center.
    pub diverged: bool,
}

const OUTER_SCAN_POINTS: usize = 64;
const MAX_CAP_DOUBLINGS: usize = 12;
const SATURATION_RTOL: f64 = 0.01;

/// Evaluates K(r), scanning center radii over (1, x_max] and doubling the
/// cap until the supremum saturates (relative change below one percent).
pub fn k_functional(profile: &RadialProfile, r: f64, x_max: f64) -> crate::Result<KEstimate> {
    if r < 1.0 {
        return Err(crate::Error::Precondition(format!(
            "K functional is defined for restriction radii r >= 1 (got {r})"
        )));
    }
    if x_max <= 2.0 {
        return Err(crate::Error::Precondition(
            "center-radius cap must exceed 2".into(),
        ));
    }
    let mut cap = x_max;
    let mut previous: Option<(f64, f64)> = None; // (sup, argmax)
    for _ in 0..=MAX_CAP_DOUBLINGS {
        let mut sup = 0.0_f64;
        let mut argmax = 0.0_f64;
        let lo = 1.0 + 1e-3;
        let ratio = (cap / lo).powf(1.0 / (OUTER_SCAN_POINTS as f64 - 1.0));
        for i in 0..OUTER_SCAN_POINTS {
            let center = lo * ratio.powi(i as i32);
            let v = match normalized_integral(profile, r, center) {
                Some(v) => v,
                None => {
                    return Ok(KEstimate {
                        r,
                        value: f64::INFINITY,
                        argmax_radius: center,
                        x_max: cap,
                        diverged: true,
                    })
                }
            };
            if v > sup {
                sup = v;
                argmax = center;
            }
        }
        if let Some((prev_sup, _)) = previous {
            if (sup - prev_sup).abs() <= SATURATION_RTOL * prev_sup.abs().max(f64::MIN_POSITIVE) {
                return Ok(KEstimate {
                    r,
                    value: sup,
                    argmax_radius: argmax,
                    x_max: cap,
                    diverged: false,
                });
            }
        }
        previous = Some((sup, argmax));
        cap *= 2.0;
    }
    let (sup, argmax) = previous.unwrap();
    Ok(KEstimate {
        r,
        value: sup,
        argmax_radius: argmax,
        x_max: cap * 0.5,
        diverged: true,
    })
}

/// I(R) / f(R) for one center radius R, or None when the integral diverges.
fn normalized_integral(profile: &RadialProfile, r: f64, center: f64) -> Option<f64> {
    match profile.dim() {
        1 => two_center_1d(profile, r, center),
        2 | 3 => two_center_nd(profile, r, center),
        _ => None,
    }
}

/// d = 1: I(R)/f(R) = 2 * integral_r^inf e(u, R + u) du
///                  + [R >= 2r] * integral_r^(R-r) e(u, R - u) du,
/// where e(u, v) = exp(log f(u) + log f(v) - log f(R)).
fn two_center_1d(profile: &RadialProfile, r: f64, center: f64) -> Option<f64> {
    let lfc = profile.log_f(center);
    let e = |u: f64, v: f64| (profile.log_f(u) + profile.log_f(v) - lfc).exp();

    let far = |u: f64| e(u, center + u);
    let far_part = match tail_integral(far, r, 1e-9, 200) {
        TailOutcome::Converged(q) => q.value,
        TailOutcome::Diverged { .. } => return None,
    };

    let mut total = 2.0 * far_part;
    if center >= 2.0 * r {
        // U-shaped integrand peaking at both endpoints; seed geometric
        // breakpoints from each end before the adaptive pass.
        let a = r;
        let b = center - r;
        let mid = 0.5 * (a + b);
        let mut breaks = vec![a];
        let mut step = (b - a).min(r) * 0.25;
        let mut pos = a + step;
        while pos < mid {
            breaks.push(pos);
            step *= 2.0;
            pos += step;
        }
        breaks.push(mid);
        let lower: Vec<f64> = breaks.clone();
        for &x in lower.iter().rev().skip(1) {
            breaks.push(a + b - x);
        }
        let q = gk_adaptive_breaks(|u: f64| e(u, center - u), &breaks, 0.0, 1e-8, 60_000);
        total += q.value;
    }
    Some(total)
}

/// d = 2 or 3: bipolar coordinates. With a = |R - u|, b = R + u the volume
/// element becomes w(u, v) dv du on |R - u| <= v <= R + u, where
///   d = 2: w = 4 u v / sqrt((v^2 - a^2)(b^2 - v^2))
///   d = 3: w = 2 pi u v / R.
/// The d = 2 inverse-square-root endpoint singularities are absorbed by the
/// substitution v = c + h sin(tau).
fn two_center_nd(profile: &RadialProfile, r: f64, center: f64) -> Option<f64> {
    let lfc = profile.log_f(center);
    let dim = profile.dim();

    let inner = |u: f64| -> f64 {
        let a = (center - u).abs();
        let b = center + u;
        let v0 = a.max(r);
        if v0 >= b {
            return 0.0;
        }
        match dim {
            2 => {
                let c = 0.5 * (a + b);
                let h = 0.5 * (b - a);
                let tau0 = ((v0 - c) / h).clamp(-1.0, 1.0).asin();
                gauss_legendre(
                    |tau: f64| {
                        let v = c + h * tau.sin();
                        let weight = 4.0 * u * v / ((v + a) * (v + b)).sqrt();
                        (profile.log_f(u) + profile.log_f(v) - lfc).exp() * weight
                    },
                    tau0,
                    std::f64::consts::FRAC_PI_2,
                    48,
                )
            }
            3 => {
                let w = 2.0 * std::f64::consts::PI / center;
                gauss_legendre(
                    |v: f64| (profile.log_f(u) + profile.log_f(v) - lfc).exp() * w * u * v,
                    v0,
                    b,
                    48,
                )
            }
            _ => unreachable!(),
        }
    };

    // Outer integral over u > r: compact part with breakpoints around the
    // two concentration zones (u near r, u near R), then dyadic tail.
    let compact_hi = (2.0 * center).max(4.0 * r);
    let mut breaks = vec![r];
    for candidate in [
        1.5 * r,
        2.0 * r,
        0.5 * center,
        center - r,
        center,
        center + r,
        1.5 * center,
    ] {
        if candidate > r && candidate < compact_hi {
            breaks.push(candidate);
        }
    }
    breaks.push(compact_hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let compact = gk_adaptive_breaks(&inner, &breaks, 0.0, 1e-8, 120_000);
    let tail = match tail_integral(&inner, compact_hi, 1e-9, 160) {
        TailOutcome::Converged(q) => q.value,
        TailOutcome::Diverged { .. } => return None,
    };
    // Warm up the Legendre cache deterministically before any parallel use.
    let _ = legendre_rule(48);
    Some(compact.value + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RadialProfile;
    use crate::quad::linear_fit;

    #[test]
    fn pure_power_profile_tracks_its_scaling_exponent() {
        // For f(s) = s^(-alpha-d) the functional scales like r^(-alpha):
        // the log-log slope over r in [2, 64] must sit near -alpha.
        for &alpha in &[0.5, 1.0, 1.5] {
            let profile = RadialProfile::stable(1, alpha).unwrap();
            let rs: Vec<f64> = (0..7).map(|i| 2.0_f64 * 2.0_f64.powf(i as f64 * 5.0 / 6.0)).collect();
            let mut lx = Vec::new();
            let mut ly = Vec::new();
            for &r in &rs {
                let est = k_functional(&profile, r, 256.0).unwrap();
                assert!(!est.diverged, "alpha={alpha} r={r} diverged");
                lx.push(r.ln());
                ly.push(est.value.ln());
            }
            let (slope, _) = linear_fit(&lx, &ly);
            assert!(
                (slope + alpha).abs() < 0.1,
                "alpha={alpha}: slope {slope} not within 0.1 of {}",
                -alpha
            );
        }
    }

    #[test]
    fn shrinking_support_shrinks_the_functional() {
        let profile = RadialProfile::stable(2, 0.8).unwrap();
        let k2 = k_functional(&profile, 2.0, 256.0).unwrap();
        let k8 = k_functional(&profile, 8.0, 256.0).unwrap();
        assert!(k8.value < k2.value);
    }

    #[test]
    fn critical_exponential_profile_diverges() {
        // Exponential tail with delta = (d+1)/2 in d = 1: the near-segment
        // contribution grows logarithmically in the center radius, so the
        // scan must keep growing and trip the divergence flag.
        let profile = RadialProfile::new(
            1,
            crate::model::EtaSpec::Power {
                coeff: 1.0_f64 / std::f64::consts::E,
                exponent: 2.0,
            },
            1.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let est = k_functional(&profile, 2.0, 64.0).unwrap();
        assert!(est.diverged, "critical profile must not saturate");
    }

    #[test]
    fn supercritical_exponential_profile_saturates() {
        // delta = 2 > (d+1)/2 = 1 in d = 1: K is finite.
        let profile = RadialProfile::new(
            1,
            crate::model::EtaSpec::Power {
                coeff: 1.0_f64 / std::f64::consts::E,
                exponent: 2.0,
            },
            1.0,
            1.0,
            1.0,
            2.0,
        )
        .unwrap();
        let est = k_functional(&profile, 2.0, 64.0).unwrap();
        assert!(!est.diverged);
        assert!(est.value.is_finite() && est.value > 0.0);
    }

    #[test]
    fn rejects_radius_below_one() {
        let profile = RadialProfile::stable(1, 1.0).unwrap();
        assert!(k_functional(&profile, 0.5, 64.0).is_err());
    }
}
