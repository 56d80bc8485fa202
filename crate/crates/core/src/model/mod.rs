//! Jump models: angular weights on the sphere, radial tail profiles, and the
//! assembled jump intensity with optional drift and diffusion parts.
//!
//! A model describes an intensity nu(dx) = g(x/|x|) f(|x|) dx. The angular
//! weight g lives on the unit sphere (a two-point set in one dimension) and
//! the radial factor f is one of: a pure power law, the Bessel-type density
//! of the relativistic family, or a two-piece profile with a near-field
//! shape on (0, 1) and a far field c0 * s^(-delta) * exp(-m * s^beta).
//!
//! Every model carries a classification of its far field — polynomial,
//! stretched exponential, or exponential with enough polynomial damping —
//! so that downstream consumers can branch on a recorded verdict instead of
//! re-deriving it. The exponential rate kappa (zero for subexponential
//! tails) feeds the predicted limits of the tail-ratio diagnostics.

mod conditions;
mod config;
mod relativistic;

pub use conditions::{
    convolution_bound_check, directional_tail_ratio_check, ComparabilityRow,
    ConvolutionBoundReport, TailRatioReport, TailRatioRow,
};
pub use config::{ModelConfig, ModelKind};
pub use relativistic::{stable_tail_coefficient, RelativisticRadial};

use serde::{Deserialize, Serialize};

use crate::matrix::SymMatrix;
use crate::quad::{gk_adaptive_breaks, head_integral, legendre_rule, tail_integral, TailOutcome};
use crate::{Error, Result};

/// Angular weight on the unit sphere. In one dimension the sphere is the
/// two-point set {+1, -1} and the weight is a pair of masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AngularSpec {
    /// The same weight in every direction.
    Const { value: f64 },
    /// One dimension only: masses on the two half-lines.
    TwoPoint { plus: f64, minus: f64 },
    /// Two dimensions only: one value where the coordinate signs agree and
    /// another where they differ. Discontinuous across the axes.
    Quadrant { same: f64, opposite: f64 },
}

/// Angular weight together with the set of directions on which it is both
/// positive and locally constant or continuous (the "valid" directions for
/// ratio diagnostics).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphericalDensity {
    dim: usize,
    spec: AngularSpec,
    /// Directions with |theta_1 * theta_2| below this band sit too close to
    /// a discontinuity of a quadrant weight and are excluded from the valid
    /// set. Zero for weights without discontinuities.
    exclusion_band: f64,
}

impl SphericalDensity {
    pub fn new(dim: usize, spec: AngularSpec) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidModel(format!(
                "dimension must be 1, 2 or 3 (got {dim})"
            )));
        }
        match spec {
            AngularSpec::Const { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidModel(
                        "constant angular weight must be finite and nonnegative".into(),
                    ));
                }
            }
            AngularSpec::TwoPoint { plus, minus } => {
                if dim != 1 {
                    return Err(Error::InvalidModel(
                        "two-point angular weight requires dimension 1".into(),
                    ));
                }
                if !(plus >= 0.0 && minus >= 0.0 && plus.is_finite() && minus.is_finite()) {
                    return Err(Error::InvalidModel(
                        "two-point angular masses must be finite and nonnegative".into(),
                    ));
                }
            }
            AngularSpec::Quadrant { same, opposite } => {
                if dim != 2 {
                    return Err(Error::InvalidModel(
                        "quadrant angular weight requires dimension 2".into(),
                    ));
                }
                if !(same >= 0.0 && opposite >= 0.0 && same.is_finite() && opposite.is_finite()) {
                    return Err(Error::InvalidModel(
                        "quadrant angular values must be finite and nonnegative".into(),
                    ));
                }
            }
        }
        let exclusion_band = match spec {
            AngularSpec::Quadrant { .. } => 0.1,
            _ => 0.0,
        };
        Ok(Self {
            dim,
            spec,
            exclusion_band,
        })
    }

    pub fn with_exclusion_band(mut self, band: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&band) {
            return Err(Error::InvalidModel(
                "exclusion band must lie in [0, 0.5)".into(),
            ));
        }
        self.exclusion_band = band;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &AngularSpec {
        &self.spec
    }

    pub fn exclusion_band(&self) -> f64 {
        self.exclusion_band
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        match self.spec {
            AngularSpec::Const { value } => value,
            AngularSpec::TwoPoint { plus, minus } => {
                if theta[0] >= 0.0 {
                    plus
                } else {
                    minus
                }
            }
            AngularSpec::Quadrant { same, opposite } => {
                if theta[0] * theta[1] >= 0.0 {
                    same
                } else {
                    opposite
                }
            }
        }
    }

    pub fn log_eval(&self, theta: &[f64]) -> f64 {
        self.eval(theta).ln()
    }

    /// Total angular mass; closed forms (the one-dimensional sphere carries
    /// counting measure, the circle arc length, the two-sphere area).
    pub fn integral(&self) -> f64 {
        use std::f64::consts::PI;
        match (self.dim, self.spec) {
            (1, AngularSpec::Const { value }) => 2.0 * value,
            (1, AngularSpec::TwoPoint { plus, minus }) => plus + minus,
            (2, AngularSpec::Const { value }) => 2.0 * PI * value,
            (2, AngularSpec::Quadrant { same, opposite }) => PI * (same + opposite),
            (3, AngularSpec::Const { value }) => 4.0 * PI * value,
            _ => unreachable!("validated at construction"),
        }
    }

    /// First angular moment: the integral of theta * g(theta) over the
    /// sphere. Zero for all even weights.
    pub fn moment_vector(&self) -> Vec<f64> {
        match self.spec {
            AngularSpec::TwoPoint { plus, minus } => vec![plus - minus],
            _ => vec![0.0; self.dim],
        }
    }

    /// Whether a direction belongs to the valid set: positive weight, away
    /// from any discontinuity.
    pub fn is_valid_direction(&self, theta: &[f64]) -> bool {
        if self.eval(theta) <= 0.0 {
            return false;
        }
        match self.spec {
            AngularSpec::Quadrant { .. } => (theta[0] * theta[1]).abs() >= self.exclusion_band,
            _ => true,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self.spec {
            AngularSpec::Const { .. } | AngularSpec::Quadrant { .. } => true,
            AngularSpec::TwoPoint { plus, minus } => (plus - minus).abs() <= 1e-15 * (plus + minus),
        }
    }

    /// Range (min, max) of the weight over the valid set.
    pub fn bounds_on_valid(&self) -> (f64, f64) {
        let vals: Vec<f64> = match self.spec {
            AngularSpec::Const { value } => vec![value],
            AngularSpec::TwoPoint { plus, minus } => vec![plus, minus],
            AngularSpec::Quadrant { same, opposite } => vec![same, opposite],
        };
        let positive: Vec<f64> = vals.into_iter().filter(|v| *v > 0.0).collect();
        let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = positive.iter().copied().fold(0.0_f64, f64::max);
        (lo, hi)
    }
}

/// Fixed quadrature rule over the unit sphere: a list of (direction, weight)
/// pairs. Exact for piecewise-constant quadrant weights (the azimuthal count
/// is a multiple of four) and accurate to machine precision for smooth ones.
pub fn sphere_quadrature(dim: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    match dim {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let n = 2048;
            let w = 2.0 * PI / n as f64;
            (0..n)
                .map(|k| {
                    let phi = (k as f64 + 0.5) * w;
                    (vec![phi.cos(), phi.sin()], w)
                })
                .collect()
        }
        3 => {
            let rule = legendre_rule(64);
            let n_az = 128;
            let w_az = 2.0 * PI / n_az as f64;
            let mut out = Vec::with_capacity(64 * n_az);
            for (&u, &wu) in rule.0.iter().zip(rule.1.iter()) {
                let st = (1.0 - u * u).max(0.0).sqrt();
                for k in 0..n_az {
                    let phi = (k as f64 + 0.5) * w_az;
                    out.push((vec![st * phi.cos(), st * phi.sin(), u], wu * w_az));
                }
            }
            out
        }
        _ => panic!("dimension must be 1, 2 or 3"),
    }
}

/// Near-field shape of a radial profile on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaSpec {
    /// eta(s) = coeff * s^(-exponent)
    Power { coeff: f64, exponent: f64 },
    /// eta(s) = value
    Const { value: f64 },
}

impl EtaSpec {
    pub fn eval(&self, s: f64) -> f64 {
        self.log_eval(s).exp()
    }

    pub fn log_eval(&self, s: f64) -> f64 {
        match *self {
            EtaSpec::Power { coeff, exponent } => coeff.ln() - exponent * s.ln(),
            EtaSpec::Const { value } => value.ln(),
        }
    }

    fn scale(&mut self, c: f64) {
        match self {
            EtaSpec::Power { coeff, .. } => *coeff *= c,
            EtaSpec::Const { value } => *value *= c,
        }
    }
}

/// Far-field verdict of a radial profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileClass {
    /// Heavy polynomial tail (no exponential factor) with order above the
    /// dimension.
    Polynomial,
    /// Stretched-exponential far field, 0 < beta < 1.
    Stretched,
    /// Pure exponential far field (beta = 1) with polynomial damping above
    /// (dim + 1) / 2.
    Exponential,
    /// A far field for which the two-center convolution bound does not
    /// close; tail-ratio limits are not expected to exist.
    Inadmissible,
}

impl ProfileClass {
    pub fn admissible(self) -> bool {
        self != ProfileClass::Inadmissible
    }
}

impl std::fmt::Display for ProfileClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProfileClass::Polynomial => "polynomial",
            ProfileClass::Stretched => "stretched",
            ProfileClass::Exponential => "exponential",
            ProfileClass::Inadmissible => "inadmissible",
        };
        f.write_str(s)
    }
}

/// Classifies a far field c0 * s^(-delta) * exp(-m * s^beta) by the decay
/// parameters alone.
pub fn classify_profile(m: f64, beta: f64, delta: f64, dim: usize) -> ProfileClass {
    let d = dim as f64;
    if !(m.is_finite() && beta.is_finite() && delta.is_finite()) || m < 0.0 || beta < 0.0 {
        return ProfileClass::Inadmissible;
    }
    if m == 0.0 {
        if delta > d {
            ProfileClass::Polynomial
        } else {
            ProfileClass::Inadmissible
        }
    } else if beta > 0.0 && beta < 1.0 {
        ProfileClass::Stretched
    } else if beta == 1.0 {
        if delta > (d + 1.0) / 2.0 {
            ProfileClass::Exponential
        } else {
            ProfileClass::Inadmissible
        }
    } else {
        ProfileClass::Inadmissible
    }
}

/// Two-piece radial profile: a near-field shape eta on (0, 1) and a far
/// field c0 * s^(-delta) * exp(-m * s^beta) on [1, infinity).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    dim: usize,
    eta: EtaSpec,
    c0: f64,
    m: f64,
    beta: f64,
    delta: f64,
}

impl RadialProfile {
    pub fn new(dim: usize, eta: EtaSpec, c0: f64, m: f64, beta: f64, delta: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidModel(format!(
                "dimension must be 1, 2 or 3 (got {dim})"
            )));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::InvalidModel("c0 must be positive and finite".into()));
        }
        if !(m >= 0.0 && m.is_finite() && beta >= 0.0 && beta.is_finite() && delta.is_finite()) {
            return Err(Error::InvalidModel(
                "profile parameters must be finite, with m >= 0 and beta >= 0".into(),
            ));
        }
        match eta {
            EtaSpec::Power { coeff, exponent } => {
                if !(coeff > 0.0 && coeff.is_finite() && exponent.is_finite()) {
                    return Err(Error::InvalidModel(
                        "near-field power shape needs a positive coefficient".into(),
                    ));
                }
                if exponent >= dim as f64 + 2.0 {
                    return Err(Error::InvalidModel(format!(
                        "near-field exponent {exponent} makes the second moment near the origin \
                         diverge (needs exponent < dim + 2 = {})",
                        dim + 2
                    )));
                }
            }
            EtaSpec::Const { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::InvalidModel(
                        "near-field constant must be positive".into(),
                    ));
                }
            }
        }
        // Tail integrability: either a genuine exponential factor or a
        // polynomial order above the dimension.
        if !((m > 0.0 && beta > 0.0) || delta > dim as f64) {
            return Err(Error::InvalidModel(
                "far field is not integrable: need m > 0 with beta > 0, or delta > dim".into(),
            ));
        }
        // Monotone junction: the near field must dominate where the far
        // field starts.
        let far_at_one = c0 * (-m).exp();
        if eta.eval(1.0) < far_at_one * (1.0 - 1e-12) {
            return Err(Error::InvalidModel(format!(
                "near-field value at the junction ({:.6e}) must be at least the far-field start \
                 ({:.6e})",
                eta.eval(1.0),
                far_at_one
            )));
        }
        // Canonical form: without an exponential factor the stretch power is
        // meaningless, so store zero.
        let beta = if m == 0.0 { 0.0 } else { beta };
        Ok(Self {
            dim,
            eta,
            c0,
            m,
            beta,
            delta,
        })
    }

    /// Pure power profile s^(-dim-alpha), the radial factor of a stable
    /// intensity with unit coefficient.
    pub fn stable(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidModel(format!(
                "stability index must lie in (0, 2) (got {alpha})"
            )));
        }
        let exponent = dim as f64 + alpha;
        Self::new(
            dim,
            EtaSpec::Power {
                coeff: 1.0,
                exponent,
            },
            1.0,
            0.0,
            0.0,
            exponent,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta(&self) -> &EtaSpec {
        &self.eta
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn f(&self, s: f64) -> f64 {
        self.log_f(s).exp()
    }

    pub fn log_f(&self, s: f64) -> f64 {
        if s < 1.0 {
            self.eta.log_eval(s)
        } else {
            self.c0.ln() - self.delta * s.ln() - self.m * s.powf(self.beta)
        }
    }

    /// Log of the profile with the stretched-exponential factor removed,
    /// i.e. `log_f(s) + m s^beta` assembled without forming the large term.
    /// Exponentially weighted tail integrals near the critical rate need
    /// this split to avoid catastrophic cancellation at very large radii.
    pub fn log_f_detempered(&self, s: f64) -> f64 {
        if s < 1.0 {
            self.eta.log_eval(s) + self.m * s.powf(self.beta)
        } else {
            self.c0.ln() - self.delta * s.ln()
        }
    }

    pub fn classify(&self) -> ProfileClass {
        classify_profile(self.m, self.beta, self.delta, self.dim)
    }

    /// Exponential rate of the far field: m when the decay is exactly
    /// exponential, zero for subexponential tails.
    pub fn kappa(&self) -> f64 {
        if self.beta == 1.0 && self.m > 0.0 {
            self.m
        } else {
            0.0
        }
    }

    /// Whether the intensity built on this profile has finite total mass
    /// (the near field integrates against s^(dim-1)).
    pub fn near_field_mass_finite(&self) -> bool {
        match self.eta {
            EtaSpec::Power { exponent, .. } => exponent < self.dim as f64,
            EtaSpec::Const { .. } => true,
        }
    }

    fn scale(&mut self, c: f64) {
        self.c0 *= c;
        self.eta.scale(c);
    }
}

/// Descriptive family tag for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Stable,
    Relativistic,
    Tempered,
    CompoundPoisson,
    Gaussian,
}

/// Radial factor of the intensity.
#[derive(Debug, Clone)]
pub enum RadialLaw {
    /// f(s) = s^(-dim-alpha); constants live in the angular weight.
    Power { alpha: f64 },
    /// Bessel-type relativistic density with its normalization built in.
    Relativistic(RelativisticRadial),
    /// A two-piece profile evaluated literally.
    Profile(RadialProfile),
}

/// A jump model: angular weight times radial factor, with optional drift
/// and diffusion parts and an overall jump amplitude.
#[derive(Debug, Clone)]
pub struct LevyModel {
    dim: usize,
    family: Family,
    angular: SphericalDensity,
    radial: RadialLaw,
    profile: Option<RadialProfile>,
    profile_class: Option<ProfileClass>,
    drift: Vec<f64>,
    gaussian: Option<SymMatrix>,
    kappa: f64,
    alpha: Option<f64>,
    finite_mass: bool,
    amplitude: f64,
}

impl LevyModel {
    /// Stable model: radial factor s^(-dim-alpha), arbitrary angular weight.
    pub fn stable(dim: usize, alpha: f64, angular: SphericalDensity) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidModel(format!(
                "stability index must lie in (0, 2) (got {alpha})"
            )));
        }
        if angular.dim() != dim {
            return Err(Error::InvalidModel(
                "angular weight dimension does not match the model dimension".into(),
            ));
        }
        if angular.integral() <= 0.0 {
            return Err(Error::InvalidModel(
                "angular weight must have positive total mass".into(),
            ));
        }
        let profile = RadialProfile::stable(dim, alpha)?;
        Ok(Self {
            dim,
            family: Family::Stable,
            angular,
            radial: RadialLaw::Power { alpha },
            profile_class: Some(profile.classify()),
            profile: Some(profile),
            drift: vec![0.0; dim],
            gaussian: None,
            kappa: 0.0,
            alpha: Some(alpha),
            finite_mass: false,
            amplitude: 1.0,
        })
    }

    /// The one-dimensional model with symbol |xi| and heat kernel
    /// t / (pi (t^2 + x^2)): two-point angular masses 1/pi, radial factor
    /// s^(-2).
    pub fn cauchy() -> Self {
        let angular = SphericalDensity::new(
            1,
            AngularSpec::TwoPoint {
                plus: std::f64::consts::FRAC_1_PI,
                minus: std::f64::consts::FRAC_1_PI,
            },
        )
        .expect("valid by construction");
        Self::stable(1, 1.0, angular).expect("valid by construction")
    }

    /// Isotropic relativistic model with stability index alpha and mass
    /// parameter m; the symbol is (m^(2/alpha) + |xi|^2)^(alpha/2) - m.
    pub fn relativistic(dim: usize, alpha: f64, mass: f64) -> Result<Self> {
        let radial = RelativisticRadial::new(dim, alpha, mass)?;
        let profile = radial.profile()?;
        let kappa = radial.kappa();
        let angular = SphericalDensity::new(dim, AngularSpec::Const { value: 1.0 })?;
        Ok(Self {
            dim,
            family: Family::Relativistic,
            angular,
            radial: RadialLaw::Relativistic(radial),
            profile_class: Some(profile.classify()),
            profile: Some(profile),
            drift: vec![0.0; dim],
            gaussian: None,
            kappa,
            alpha: Some(alpha),
            finite_mass: false,
            amplitude: 1.0,
        })
    }

    /// Model whose radial factor is the given profile evaluated literally.
    /// Finite-mass profiles yield a compound-Poisson family tag.
    pub fn tempered(dim: usize, angular: SphericalDensity, profile: RadialProfile) -> Result<Self> {
        if angular.dim() != dim || profile.dim() != dim {
            return Err(Error::InvalidModel(
                "angular weight, profile and model dimensions must agree".into(),
            ));
        }
        if angular.integral() <= 0.0 {
            return Err(Error::InvalidModel(
                "angular weight must have positive total mass".into(),
            ));
        }
        let finite_mass = profile.near_field_mass_finite();
        let family = if finite_mass {
            Family::CompoundPoisson
        } else {
            Family::Tempered
        };
        let kappa = profile.kappa();
        Ok(Self {
            dim,
            family,
            angular,
            radial: RadialLaw::Profile(profile.clone()),
            profile_class: Some(profile.classify()),
            profile: Some(profile),
            drift: vec![0.0; dim],
            gaussian: None,
            kappa,
            alpha: None,
            finite_mass,
            amplitude: 1.0,
        })
    }

    /// Purely diffusive model: no jump part at all.
    pub fn pure_gaussian(dim: usize, a: SymMatrix) -> Result<Self> {
        if a.dim() != dim {
            return Err(Error::InvalidModel(
                "diffusion matrix dimension does not match the model dimension".into(),
            ));
        }
        if !a.is_elliptic() {
            return Err(Error::InvalidModel(
                "diffusion matrix must be positive definite".into(),
            ));
        }
        let angular = SphericalDensity::new(dim, AngularSpec::Const { value: 0.0 })?;
        Ok(Self {
            dim,
            family: Family::Gaussian,
            angular,
            radial: RadialLaw::Power { alpha: 1.0 },
            profile: None,
            profile_class: None,
            drift: vec![0.0; dim],
            gaussian: Some(a),
            kappa: 0.0,
            alpha: None,
            finite_mass: true,
            amplitude: 0.0,
        })
    }

    pub fn with_drift(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.dim {
            return Err(Error::InvalidModel(
                "drift vector length does not match the model dimension".into(),
            ));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("drift vector must be finite".into()));
        }
        self.drift = b;
        Ok(self)
    }

    pub fn with_gaussian(mut self, a: SymMatrix) -> Result<Self> {
        if a.dim() != self.dim {
            return Err(Error::InvalidModel(
                "diffusion matrix dimension does not match the model dimension".into(),
            ));
        }
        if !a.is_elliptic() {
            return Err(Error::InvalidModel(
                "diffusion matrix must be positive definite".into(),
            ));
        }
        self.gaussian = Some(a);
        Ok(self)
    }

    /// The same model with the jump intensity multiplied by c > 0.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidModel(
                "intensity scale must be positive and finite".into(),
            ));
        }
        let mut out = self.clone();
        out.amplitude *= c;
        if let Some(p) = out.profile.as_mut() {
            p.scale(c);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn angular(&self) -> &SphericalDensity {
        &self.angular
    }

    pub fn radial(&self) -> &RadialLaw {
        &self.radial
    }

    pub fn profile(&self) -> Option<&RadialProfile> {
        self.profile.as_ref()
    }

    pub fn profile_class(&self) -> Option<ProfileClass> {
        self.profile_class
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn gaussian(&self) -> Option<&SymMatrix> {
        self.gaussian.as_ref()
    }

    /// Exponential rate of the radial far field (zero for subexponential
    /// tails); the scale at which tail-ratio limits pick up exponential
    /// weights.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn finite_mass(&self) -> bool {
        self.finite_mass
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn has_jumps(&self) -> bool {
        self.amplitude > 0.0
    }

    pub fn is_symmetric(&self) -> bool {
        self.drift.iter().all(|b| *b == 0.0) && self.angular.is_symmetric()
    }

    /// Parameters (alpha, mass, kappa) when the jump part is exactly the
    /// relativistic density at unit amplitude, enabling closed-form symbol
    /// and kernel routes.
    pub fn relativistic_params(&self) -> Option<(f64, f64, f64)> {
        match &self.radial {
            RadialLaw::Relativistic(r) if self.amplitude == 1.0 => {
                Some((r.alpha(), r.mass(), r.kappa()))
            }
            _ => None,
        }
    }

    /// Radial factor including the amplitude.
    pub fn radial_factor(&self, s: f64) -> f64 {
        self.log_radial(s).exp()
    }

    pub fn log_radial(&self, s: f64) -> f64 {
        let base = match &self.radial {
            RadialLaw::Power { alpha } => -(self.dim as f64 + alpha) * s.ln(),
            RadialLaw::Relativistic(r) => r.log_density(s),
            RadialLaw::Profile(p) => p.log_f(s),
        };
        base + self.amplitude.ln()
    }

    /// Exactly linear exponential rate of the radial far field: the rate
    /// `c` such that `log_radial(s) = log_radial_detempered(s) - c s`.
    /// Nonzero only for relativistic densities and profiles with a plain
    /// exponential tail; stretched or superexponential tails report zero
    /// because no linear split applies.
    pub fn tempering_rate(&self) -> f64 {
        match &self.radial {
            RadialLaw::Power { .. } => 0.0,
            RadialLaw::Relativistic(r) => r.kappa(),
            RadialLaw::Profile(p) => {
                if p.beta() == 1.0 && p.m() > 0.0 {
                    p.m()
                } else {
                    0.0
                }
            }
        }
    }

    /// Radial log-factor with the linear exponential tail removed; see
    /// [`Self::tempering_rate`]. Weighted tail integrals evaluate
    /// `exp((u - rate) s + log_radial_detempered(s))` so that the critical
    /// weight `u = rate` cancels exactly instead of catastrophically.
    pub fn log_radial_detempered(&self, s: f64) -> f64 {
        let base = match &self.radial {
            RadialLaw::Power { alpha } => -(self.dim as f64 + alpha) * s.ln(),
            RadialLaw::Relativistic(r) => r.log_density_detempered(s),
            RadialLaw::Profile(p) => {
                if p.beta() == 1.0 && p.m() > 0.0 {
                    p.log_f_detempered(s)
                } else {
                    p.log_f(s)
                }
            }
        };
        base + self.amplitude.ln()
    }

    /// Jump intensity at a point away from the origin.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if !self.has_jumps() {
            return f64::NEG_INFINITY;
        }
        let s = norm(x);
        if s == 0.0 {
            return f64::INFINITY;
        }
        let theta: Vec<f64> = x.iter().map(|v| v / s).collect();
        self.angular.log_eval(&theta) + self.log_radial(s)
    }

    /// Mass of the intensity outside radius r.
    pub fn tail_mass(&self, r: f64) -> Result<f64> {
        if !self.has_jumps() {
            return Ok(0.0);
        }
        if !(r > 0.0) {
            return Err(Error::Precondition(
                "tail mass requires a positive radius".into(),
            ));
        }
        Ok(self.angular.integral() * self.radial_moment(r, None, self.dim as i32 - 1)?)
    }

    /// Total mass of the intensity; an error unless the model is of
    /// finite activity.
    pub fn total_mass(&self) -> Result<f64> {
        if !self.has_jumps() {
            return Ok(0.0);
        }
        if !self.finite_mass {
            return Err(Error::DivergentMoment {
                context: "total mass of an infinite-activity intensity".into(),
            });
        }
        Ok(self.angular.integral() * self.radial_moment(0.0, None, self.dim as i32 - 1)?)
    }

    /// Integral of exp(<xi, y>) against the intensity outside radius r.
    /// Diverges (as an error) when the exponential weight outruns the tail.
    pub fn exp_tail_integral(&self, xi: &[f64], r: f64) -> Result<f64> {
        if !self.has_jumps() {
            return Ok(0.0);
        }
        if xi.len() != self.dim {
            return Err(Error::Precondition(
                "weight vector length does not match the model dimension".into(),
            ));
        }
        if xi.iter().all(|v| *v == 0.0) {
            return self.tail_mass(r.max(f64::MIN_POSITIVE));
        }
        if r == 0.0 && !self.finite_mass {
            return Err(Error::DivergentMoment {
                context: "exponential moment down to the origin of an infinite-activity intensity"
                    .into(),
            });
        }
        let k = self.dim as i32 - 1;
        let mut total = 0.0;
        for (theta, w) in sphere_quadrature(self.dim) {
            let g = self.angular.eval(&theta);
            if g == 0.0 {
                continue;
            }
            let dot: f64 = theta.iter().zip(xi).map(|(a, b)| a * b).sum();
            total += g * w * self.weighted_radial_tail(dot, r, k)?;
        }
        Ok(total)
    }

    /// Integral of exp(<xi, y>) - 1 against the intensity outside radius r;
    /// r = 0 is allowed whenever the first moment near the origin exists.
    pub fn exp_tail_integral_m1(&self, xi: &[f64], r: f64) -> Result<f64> {
        if !self.has_jumps() || xi.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        if xi.len() != self.dim {
            return Err(Error::Precondition(
                "weight vector length does not match the model dimension".into(),
            ));
        }
        let k = self.dim as i32 - 1;
        let mut total = 0.0;
        for (theta, w) in sphere_quadrature(self.dim) {
            let g = self.angular.eval(&theta);
            if g == 0.0 {
                continue;
            }
            let dot: f64 = theta.iter().zip(xi).map(|(a, b)| a * b).sum();
            let rate = self.tempering_rate();
            let f = |s: f64| {
                let lw = self.log_radial(s) + radial_log_power(k, s);
                let u = dot * s;
                if u <= 500.0 {
                    lw.exp() * u.exp_m1()
                } else {
                    // The subtracted 1 is far below resolution here; keep the
                    // exponent split around the tempering rate.
                    ((dot - rate) * s + self.log_radial_detempered(s) + radial_log_power(k, s))
                        .exp()
                }
            };
            let inner = if r > 0.0 {
                match tail_integral(&f, r, 1e-11, 96) {
                    TailOutcome::Converged(q) if q.value.is_finite() => q.value,
                    _ => {
                        return Err(Error::DivergentMoment {
                            context: format!(
                                "exponential-moment tail at weight {dot:.6} outside radius {r:.6}"
                            ),
                        })
                    }
                }
            } else {
                let head = match head_integral(&f, 1.0, 1e-11, 200) {
                    TailOutcome::Converged(q) if q.value.is_finite() => q.value,
                    _ => {
                        return Err(Error::DivergentMoment {
                            context: "first moment of the intensity near the origin".into(),
                        })
                    }
                };
                let tail = match tail_integral(&f, 1.0, 1e-11, 96) {
                    TailOutcome::Converged(q) if q.value.is_finite() => q.value,
                    _ => {
                        return Err(Error::DivergentMoment {
                            context: format!("exponential-moment tail at weight {dot:.6}"),
                        })
                    }
                };
                head + tail
            };
            total += g * w * inner;
        }
        Ok(total)
    }

    /// Vector first moment of the intensity over the annulus lo < |y| < hi.
    pub fn annulus_vector_moment(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !self.has_jumps() {
            return Ok(vec![0.0; self.dim]);
        }
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::Precondition(
                "annulus bounds must satisfy 0 <= lo < hi".into(),
            ));
        }
        let mv = self.angular.moment_vector();
        if mv.iter().all(|v| *v == 0.0) {
            return Ok(vec![0.0; self.dim]);
        }
        let scalar = self.radial_moment(lo, Some(hi), self.dim as i32)?;
        Ok(mv.into_iter().map(|v| v * scalar).collect())
    }

    /// Vector first moment over the punctured ball 0 < |y| < r; an error
    /// when the moment near the origin does not exist.
    pub fn small_ball_vector_moment(&self, r: f64) -> Result<Vec<f64>> {
        self.annulus_vector_moment(0.0, r)
    }

    /// Drift adjusted for moving the compensation cutoff from 1 to r.
    pub fn effective_drift(&self, r: f64) -> Result<Vec<f64>> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Precondition(
                "compensation cutoff must be positive and finite".into(),
            ));
        }
        let mut b = self.drift.clone();
        if r < 1.0 {
            let sub = self.annulus_vector_moment(r, 1.0)?;
            for (bi, ai) in b.iter_mut().zip(sub) {
                *bi -= ai;
            }
        } else if r > 1.0 {
            let add = self.annulus_vector_moment(1.0, r)?;
            for (bi, ai) in b.iter_mut().zip(add) {
                *bi += ai;
            }
        }
        Ok(b)
    }

    /// Fully compensated drift b - integral of y over the unit ball; exists
    /// only when the intensity has a first moment at the origin.
    pub fn centered_drift(&self) -> Result<Vec<f64>> {
        let sub = self.small_ball_vector_moment(1.0)?;
        Ok(self
            .drift
            .iter()
            .zip(sub)
            .map(|(bi, ai)| bi - ai)
            .collect())
    }

    /// Integral of s^power * radial_factor(s) over (lo, hi), hi = None for
    /// infinity. Closed form for power laws, shell quadrature otherwise.
    fn radial_moment(&self, lo: f64, hi: Option<f64>, power: i32) -> Result<f64> {
        if let RadialLaw::Power { alpha } = &self.radial {
            let q = power as f64 - self.dim as f64 - alpha;
            let v = match hi {
                None => {
                    if q >= -1.0 {
                        return Err(Error::DivergentMoment {
                            context: format!("power-law radial moment of order {power} at infinity"),
                        });
                    }
                    -lo.powf(q + 1.0) / (q + 1.0)
                }
                Some(h) => {
                    if (q + 1.0).abs() < 1e-12 {
                        if lo == 0.0 {
                            return Err(Error::DivergentMoment {
                                context: "logarithmic radial moment down to the origin".into(),
                            });
                        }
                        (h / lo).ln()
                    } else {
                        if lo == 0.0 && q <= -1.0 {
                            return Err(Error::DivergentMoment {
                                context: format!(
                                    "power-law radial moment of order {power} at the origin"
                                ),
                            });
                        }
                        (h.powf(q + 1.0) - lo.powf(q + 1.0)) / (q + 1.0)
                    }
                }
            };
            return Ok(self.amplitude * v);
        }

        let f = |s: f64| (self.log_radial(s) + radial_log_power(power, s)).exp();
        let hi_val = hi.unwrap_or(f64::INFINITY);
        let split = 1.0_f64.max(lo).min(hi_val);
        let mut total = 0.0;
        if lo < split {
            if lo == 0.0 {
                total += match head_integral(&f, split, 1e-11, 200) {
                    TailOutcome::Converged(q) if q.value.is_finite() => q.value,
                    _ => {
                        return Err(Error::DivergentMoment {
                            context: format!("radial moment of order {power} at the origin"),
                        })
                    }
                };
            } else {
                let breaks = dyadic_breaks(lo, split);
                total += gk_adaptive_breaks(&f, &breaks, 0.0, 1e-11, 60_000).value;
            }
        }
        match hi {
            None => {
                total += match tail_integral(&f, split, 1e-11, 96) {
                    TailOutcome::Converged(q) if q.value.is_finite() => q.value,
                    _ => {
                        return Err(Error::DivergentMoment {
                            context: format!("radial moment of order {power} at infinity"),
                        })
                    }
                };
            }
            Some(h) => {
                if h > split {
                    let breaks = dyadic_breaks(split, h);
                    total += gk_adaptive_breaks(&f, &breaks, 0.0, 1e-11, 60_000).value;
                }
            }
        }
        Ok(total)
    }

    /// Tail integral of exp(dot * s) * s^k * radial_factor(s) from r.
    fn weighted_radial_tail(&self, dot: f64, r: f64, k: i32) -> Result<f64> {
        // Assemble the exponent around the tempering rate so that weights at
        // the critical rate cancel the linear tail term exactly.
        let rate = self.tempering_rate();
        let f = |s: f64| {
            let e = (dot - rate) * s + self.log_radial_detempered(s) + radial_log_power(k, s);
            if e > 700.0 {
                f64::INFINITY
            } else {
                e.exp()
            }
        };
        if r > 0.0 {
            match tail_integral(&f, r, 1e-11, 96) {
                TailOutcome::Converged(q) if q.value.is_finite() => Ok(q.value),
                _ => Err(Error::DivergentMoment {
                    context: format!(
                        "exponential-moment tail at weight {dot:.6} outside radius {r:.6}"
                    ),
                }),
            }
        } else {
            let head = match head_integral(&f, 1.0, 1e-11, 200) {
                TailOutcome::Converged(q) if q.value.is_finite() => q.value,
                _ => {
                    return Err(Error::DivergentMoment {
                        context: "mass of the intensity near the origin".into(),
                    })
                }
            };
            let tail = match tail_integral(&f, 1.0, 1e-11, 96) {
                TailOutcome::Converged(q) if q.value.is_finite() => q.value,
                _ => {
                    return Err(Error::DivergentMoment {
                        context: format!("exponential-moment tail at weight {dot:.6}"),
                    })
                }
            };
            Ok(head + tail)
        }
    }
}

/// power * ln(s) with the 0 * (-inf) corner pinned to zero.
fn radial_log_power(power: i32, s: f64) -> f64 {
    if power == 0 {
        0.0
    } else {
        power as f64 * s.ln()
    }
}

/// Euclidean norm of a small vector.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Geometric breakpoints between a and b (inclusive) for integrands whose
/// scale varies over decades.
fn dyadic_breaks(a: f64, b: f64) -> Vec<f64> {
    debug_assert!(a > 0.0 && b > a);
    let mut breaks = vec![a];
    let mut x = a * 2.0;
    while x < b {
        breaks.push(x);
        x *= 2.0;
    }
    breaks.push(b);
    breaks
}
