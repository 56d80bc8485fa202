//! Bessel-type radial density of the relativistic family.
//!
//! The radial factor is
//!
//! ```text
//! f(s) = c * s^(-dim-alpha) * exp(-kappa s) * phi(kappa s),
//! phi(z) = integral_0^inf exp(-v) v^p (z + v/2)^p dv,   p = (dim+alpha-1)/2,
//! kappa  = m^(1/alpha),
//! ```
//!
//! with c fixed so that f matches the stable power-law density as the mass
//! goes to zero. This is exactly the jump intensity whose symbol is
//! (m^(2/alpha) + |xi|^2)^(alpha/2) - m: subordinating the Gaussian kernel
//! by an exponentially tilted one-sided stable subordinator produces this
//! density, and the tests below verify the construction against that
//! subordination integral directly.
//!
//! phi is evaluated by shell quadrature in log space; its value at zero has
//! the closed form 2^(-p) Gamma(2p + 1), which the constructor checks
//! against the quadrature as a self-test.

use statrs::function::gamma::ln_gamma;

use crate::quad::{head_integral, tail_integral, TailOutcome};
use crate::{Error, Result};

/// Coefficient of the stable density s^(-dim-alpha) whose symbol is |xi|^alpha
/// under an isotropic unit angular weight:
/// alpha 2^(alpha-1) Gamma((dim+alpha)/2) / (pi^(dim/2) Gamma(1 - alpha/2)).
pub fn stable_tail_coefficient(dim: usize, alpha: f64) -> f64 {
    let d = dim as f64;
    (alpha.ln() + (alpha - 1.0) * std::f64::consts::LN_2 + ln_gamma((d + alpha) / 2.0)
        - 0.5 * d * std::f64::consts::PI.ln()
        - ln_gamma(1.0 - alpha / 2.0))
    .exp()
}

#[derive(Debug, Clone)]
pub struct RelativisticRadial {
    dim: usize,
    alpha: f64,
    mass: f64,
    kappa: f64,
    p: f64,
    log_coeff: f64,
    phi0: f64,
}

impl RelativisticRadial {
    pub fn new(dim: usize, alpha: f64, mass: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidModel(format!(
                "dimension must be 1, 2 or 3 (got {dim})"
            )));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidModel(format!(
                "stability index must lie in (0, 2) (got {alpha})"
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "mass parameter must be positive and finite (got {mass})"
            )));
        }
        let p = (dim as f64 + alpha - 1.0) / 2.0;
        let kappa = mass.powf(1.0 / alpha);
        let log_phi0 = ln_gamma(2.0 * p + 1.0) - p * std::f64::consts::LN_2;
        let phi0 = log_phi0.exp();
        let log_coeff = stable_tail_coefficient(dim, alpha).ln() - log_phi0;
        let out = Self {
            dim,
            alpha,
            mass,
            kappa,
            p,
            log_coeff,
            phi0,
        };
        // Self-test: the quadrature must reproduce the closed form at zero.
        let numeric = out.phi(0.0);
        let rel = ((numeric - phi0) / phi0).abs();
        if !(rel < 1e-9) {
            return Err(Error::QuadratureNonConvergent {
                context: "normalization integral of the relativistic radial density".into(),
                achieved: rel,
                target: 1e-9,
            });
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Exponential decay rate of the density: m^(1/alpha).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Overall coefficient c of the density.
    pub fn coefficient(&self) -> f64 {
        self.log_coeff.exp()
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    /// phi(z) by shell quadrature; accurate to roughly 1e-12 relative.
    pub fn phi(&self, z: f64) -> f64 {
        debug_assert!(z >= 0.0);
        let p = self.p;
        let f = move |v: f64| (-v + p * (v.ln() + (z + 0.5 * v).ln())).exp();
        let head = match head_integral(&f, 2.0, 1e-13, 120) {
            TailOutcome::Converged(q) => q.value,
            TailOutcome::Diverged { partial, .. } => partial,
        };
        let tail = match tail_integral(&f, 2.0, 1e-13, 64) {
            TailOutcome::Converged(q) => q.value,
            TailOutcome::Diverged { partial, .. } => partial,
        };
        head + tail
    }

    /// ln phi(z), stable for arbitrarily large z: the z^p growth is peeled
    /// off analytically before the quadrature.
    pub fn log_phi(&self, z: f64) -> f64 {
        if z < 1.0 {
            return self.phi(z).ln();
        }
        let p = self.p;
        let f = move |v: f64| (-v + p * (v.ln() + (1.0 + 0.5 * v / z).ln())).exp();
        let head = match head_integral(&f, 2.0, 1e-13, 120) {
            TailOutcome::Converged(q) => q.value,
            TailOutcome::Diverged { partial, .. } => partial,
        };
        let tail = match tail_integral(&f, 2.0, 1e-13, 64) {
            TailOutcome::Converged(q) => q.value,
            TailOutcome::Diverged { partial, .. } => partial,
        };
        p * z.ln() + (head + tail).ln()
    }

    pub fn density(&self, s: f64) -> f64 {
        self.log_density(s).exp()
    }

    pub fn log_density(&self, s: f64) -> f64 {
        debug_assert!(s > 0.0);
        self.log_coeff - (self.dim as f64 + self.alpha) * s.ln() - self.kappa * s
            + self.log_phi(self.kappa * s)
    }

    /// Log-density with the exponential tail factor removed, i.e.
    /// `log_density(s) + kappa * s` assembled without the linear term.
    /// Integrals weighted by `exp(u s)` with `u` near the tempering rate
    /// need this split: at very large radii the linear term swallows the
    /// subdominant terms in floating point, so adding the weight afterwards
    /// would cancel catastrophically.
    pub fn log_density_detempered(&self, s: f64) -> f64 {
        debug_assert!(s > 0.0);
        self.log_coeff - (self.dim as f64 + self.alpha) * s.ln() + self.log_phi(self.kappa * s)
    }

    /// Two-piece profile with the same near-origin power law and the exact
    /// exponential-tail parameters of this density.
    pub fn profile(&self) -> Result<super::RadialProfile> {
        let d = self.dim as f64;
        let near_coeff = stable_tail_coefficient(self.dim, self.alpha);
        let far_coeff =
            (self.log_coeff + ln_gamma(self.p + 1.0) + self.p * self.kappa.ln()).exp();
        super::RadialProfile::new(
            self.dim,
            super::EtaSpec::Power {
                coeff: near_coeff,
                exponent: d + self.alpha,
            },
            far_coeff,
            self.kappa,
            1.0,
            (d + self.alpha + 1.0) / 2.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProfileClass;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma;

    /// Jump density of the one-sided stable subordinator with Laplace
    /// exponent lambda^(alpha/2), exponentially tilted by theta:
    /// (alpha/2) / Gamma(1 - alpha/2) * s^(-1-alpha/2) * exp(-theta s).
    fn tilted_subordinator_density(alpha: f64, theta: f64, s: f64) -> f64 {
        (alpha / 2.0) / gamma(1.0 - alpha / 2.0) * s.powf(-1.0 - alpha / 2.0) * (-theta * s).exp()
    }

    /// The subordination integral for the jump intensity at radius |x| = r:
    /// integral of the Gaussian kernel at time s against the tilted
    /// subordinator jump density.
    fn subordination_density(dim: usize, alpha: f64, mass: f64, r: f64) -> f64 {
        let theta = mass.powf(2.0 / alpha);
        let d = dim as f64;
        let f = |s: f64| {
            (4.0 * std::f64::consts::PI * s).powf(-d / 2.0)
                * (-r * r / (4.0 * s)).exp()
                * tilted_subordinator_density(alpha, theta, s)
        };
        // Integrate outward from the saddle of the exponent.
        let peak = r / (2.0 * theta.sqrt().max(1e-8));
        let head = match head_integral(&f, peak, 1e-12, 300) {
            TailOutcome::Converged(q) => q.value,
            TailOutcome::Diverged { .. } => panic!("head of subordination integral diverged"),
        };
        let tail = match tail_integral(&f, peak, 1e-12, 200) {
            TailOutcome::Converged(q) => q.value,
            TailOutcome::Diverged { .. } => panic!("tail of subordination integral diverged"),
        };
        head + tail
    }

    #[test]
    fn laplace_exponent_of_tilted_subordinator() {
        // integral of (1 - e^(-lambda s)) against the tilted jump density
        // must equal (lambda + theta)^(alpha/2) - theta^(alpha/2).
        for (alpha, theta) in [(1.0, 1.0), (0.7, 2.3), (1.6, 0.4)] {
            for lambda in [0.3, 1.0, 7.0] {
                let f = |s: f64| {
                    (-(-lambda * s).exp_m1()) * tilted_subordinator_density(alpha, theta, s)
                };
                let head = match head_integral(&f, 1.0, 1e-12, 300) {
                    TailOutcome::Converged(q) => q.value,
                    _ => panic!("head diverged"),
                };
                let tail = match tail_integral(&f, 1.0, 1e-12, 200) {
                    TailOutcome::Converged(q) => q.value,
                    _ => panic!("tail diverged"),
                };
                let expect = (lambda + theta).powf(alpha / 2.0) - theta.powf(alpha / 2.0);
                assert_relative_eq!(head + tail, expect, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn phi_at_zero_matches_closed_form() {
        for (dim, alpha) in [(1, 1.0), (1, 0.6), (2, 0.8), (3, 1.4)] {
            let r = RelativisticRadial::new(dim, alpha, 1.0).unwrap();
            let p = (dim as f64 + alpha - 1.0) / 2.0;
            let expect = 2.0_f64.powf(-p) * gamma(2.0 * p + 1.0);
            assert_relative_eq!(r.phi(0.0), expect, max_relative = 1e-11);
        }
    }

    #[test]
    fn density_matches_subordination_integral() {
        for (dim, alpha, mass) in [(1, 1.0, 1.3), (2, 0.6, 0.9), (1, 1.4, 2.0), (3, 1.0, 1.0)] {
            let radial = RelativisticRadial::new(dim, alpha, mass).unwrap();
            for r in [0.4, 1.0, 5.0, 20.0] {
                let oracle = subordination_density(dim, alpha, mass, r);
                let got = radial.density(r);
                assert_relative_eq!(got, oracle, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn coefficient_for_unit_mass_cauchy_like_density() {
        // dim 1, alpha 1: c = sqrt(2) / pi, and c * phi(0) = 1 / pi, the
        // stable coefficient of the symbol |xi|.
        let r = RelativisticRadial::new(1, 1.0, 1.0).unwrap();
        assert_relative_eq!(
            r.coefficient(),
            2.0_f64.sqrt() / std::f64::consts::PI,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            r.coefficient() * r.phi0(),
            1.0 / std::f64::consts::PI,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            stable_tail_coefficient(2, 1.0),
            1.0 / (2.0 * std::f64::consts::PI),
            max_relative = 1e-13
        );
    }

    #[test]
    fn vanishing_mass_recovers_the_stable_density() {
        let radial = RelativisticRadial::new(1, 1.0, 1e-10).unwrap();
        for x in [0.3, 0.7, 2.0] {
            let stable = 1.0 / (std::f64::consts::PI * x * x);
            assert_relative_eq!(radial.density(x), stable, max_relative = 1e-9);
        }
    }

    #[test]
    fn log_phi_branches_agree_and_match_asymptotics() {
        let r = RelativisticRadial::new(1, 1.0, 1.0).unwrap();
        // Continuity across the branch switch at z = 1.
        let below = r.log_phi(1.0 - 1e-9);
        let above = r.log_phi(1.0 + 1e-9);
        assert!((below - above).abs() < 1e-7);
        // Large-argument expansion: phi(z) ~ Gamma(p+1) z^p (1 + p(p+1)/(2z)).
        let p: f64 = 0.5;
        let z: f64 = 300.0;
        let expect = gamma(p + 1.0).ln() + p * z.ln() + (1.0 + p * (p + 1.0) / (2.0 * z)).ln();
        assert_relative_eq!(r.log_phi(z), expect, max_relative = 1e-6);
    }

    #[test]
    fn profile_is_exponential_class_with_matching_rate() {
        let radial = RelativisticRadial::new(1, 1.0, 1.0).unwrap();
        let profile = radial.profile().unwrap();
        assert_eq!(profile.classify(), ProfileClass::Exponential);
        assert_eq!(profile.kappa(), radial.kappa());
        assert_relative_eq!(profile.delta(), 1.5, max_relative = 1e-15);
        // Far field of the profile tracks the true density: the ratio tends
        // to one as s grows.
        let ratio = |s: f64| radial.density(s) / profile.f(s);
        assert!((ratio(40.0) - 1.0).abs() < 0.01);
        assert!((ratio(400.0) - 1.0).abs() < 0.001);
        assert!((ratio(40.0) - 1.0).abs() > (ratio(400.0) - 1.0).abs());
    }
}
