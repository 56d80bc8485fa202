//! Declarative model descriptions for configuration files.
//!
//! A `ModelConfig` is a flat, serde-friendly mirror of the model
//! constructors: one `kind` tag plus the optional fields that kind needs.
//! Building validates everything through the same paths as the programmatic
//! constructors, so a config can never produce a model that code could not.

use serde::{Deserialize, Serialize};

use super::{AngularSpec, EtaSpec, LevyModel, RadialProfile, SphericalDensity};
use crate::matrix::SymMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cauchy,
    Stable,
    Relativistic,
    Tempered,
    Gaussian,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Cauchy => "cauchy",
            ModelKind::Stable => "stable",
            ModelKind::Relativistic => "relativistic",
            ModelKind::Tempered => "tempered",
            ModelKind::Gaussian => "gaussian",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Mass parameter of the relativistic family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular: Option<AngularSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_band: Option<f64>,
    /// Near-field shape for tempered profiles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    /// Far-field decay strength of a tempered profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    /// Diagonal of the diffusion matrix; mutually exclusive with `gaussian`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian_diag: Option<Vec<f64>>,
    /// Full row-major diffusion matrix (dim * dim entries).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<Vec<f64>>,
    /// Overall multiplier on the jump intensity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

impl ModelConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<LevyModel> {
        let mut model = match self.kind {
            ModelKind::Cauchy => LevyModel::cauchy(),
            ModelKind::Stable => {
                let dim = self.req_dim()?;
                let alpha = self.req(self.alpha, "alpha")?;
                let angular = self.build_angular(dim)?;
                LevyModel::stable(dim, alpha, angular)?
            }
            ModelKind::Relativistic => {
                let dim = self.req_dim()?;
                let alpha = self.req(self.alpha, "alpha")?;
                let mass = self.req(self.mass, "mass")?;
                LevyModel::relativistic(dim, alpha, mass)?
            }
            ModelKind::Tempered => {
                let dim = self.req_dim()?;
                let eta = self.eta.ok_or_else(|| self.missing("eta"))?;
                let profile = RadialProfile::new(
                    dim,
                    eta,
                    self.req(self.c0, "c0")?,
                    self.req(self.m, "m")?,
                    self.req(self.beta, "beta")?,
                    self.req(self.delta, "delta")?,
                )?;
                let angular = self.build_angular(dim)?;
                LevyModel::tempered(dim, angular, profile)?
            }
            ModelKind::Gaussian => {
                let dim = self.req_dim()?;
                let a = self
                    .build_matrix(dim)?
                    .ok_or_else(|| self.missing("gaussian or gaussian_diag"))?;
                LevyModel::pure_gaussian(dim, a)?
            }
        };
        if let Some(b) = &self.drift {
            model = model.with_drift(b.clone())?;
        }
        if self.kind != ModelKind::Gaussian {
            if let Some(a) = self.build_matrix(model.dim())? {
                model = model.with_gaussian(a)?;
            }
        }
        if let Some(c) = self.amplitude {
            model = model.scaled(c)?;
        }
        Ok(model)
    }

    fn req_dim(&self) -> Result<usize> {
        self.dim.ok_or_else(|| self.missing("dim"))
    }

    fn req(&self, v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| self.missing(name))
    }

    fn missing(&self, name: &str) -> Error {
        Error::Config(format!("kind `{}` requires the field `{name}`", self.kind))
    }

    fn build_angular(&self, dim: usize) -> Result<SphericalDensity> {
        let spec = self.angular.ok_or_else(|| self.missing("angular"))?;
        let density = SphericalDensity::new(dim, spec)?;
        match self.exclusion_band {
            Some(band) => density.with_exclusion_band(band),
            None => Ok(density),
        }
    }

    fn build_matrix(&self, dim: usize) -> Result<Option<SymMatrix>> {
        match (&self.gaussian, &self.gaussian_diag) {
            (Some(_), Some(_)) => Err(Error::Config(
                "`gaussian` and `gaussian_diag` are mutually exclusive".into(),
            )),
            (Some(rows), None) => Ok(Some(SymMatrix::new(dim, rows.clone())?)),
            (None, Some(diag)) => {
                if diag.len() != dim {
                    return Err(Error::Config(
                        "diffusion diagonal length must match the model dimension".into(),
                    ));
                }
                Ok(Some(SymMatrix::diagonal(diag)))
            }
            (None, None) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stable_config_round_trips() {
        let text = r#"
            kind = "stable"
            dim = 1
            alpha = 0.7
            angular = { kind = "two_point", plus = 0.8, minus = 0.2 }
            drift = [0.1]
        "#;
        let config = ModelConfig::from_toml_str(text).unwrap();
        let model = config.build().unwrap();
        assert_eq!(model.dim(), 1);
        assert_eq!(model.alpha(), Some(0.7));
        assert_eq!(model.drift(), &[0.1]);
        let back = config.to_toml_string().unwrap();
        let reparsed = ModelConfig::from_toml_str(&back).unwrap();
        let rebuilt = reparsed.build().unwrap();
        assert_relative_eq!(
            rebuilt.density(&[1.7]),
            model.density(&[1.7]),
            max_relative = 1e-15
        );
    }

    #[test]
    fn tempered_config_builds_profile_and_diffusion() {
        let text = r#"
            kind = "tempered"
            dim = 2
            angular = { kind = "quadrant", same = 1.0, opposite = 2.0 }
            exclusion_band = 0.25
            eta = { kind = "power", coeff = 1.0, exponent = 2.5 }
            c0 = 1.0
            m = 1.0
            beta = 1.0
            delta = 2.0
            gaussian_diag = [0.5, 0.5]
            amplitude = 2.0
        "#;
        let config = ModelConfig::from_toml_str(text).unwrap();
        let model = config.build().unwrap();
        assert_eq!(model.dim(), 2);
        assert!(model.gaussian().is_some());
        assert_eq!(model.amplitude(), 2.0);
        assert_eq!(model.angular().exclusion_band(), 0.25);
        assert_eq!(model.kappa(), 1.0);
    }

    #[test]
    fn relativistic_and_gaussian_configs_build() {
        let rel = ModelConfig::from_toml_str(
            r#"
            kind = "relativistic"
            dim = 1
            alpha = 1.0
            mass = 1.0
        "#,
        )
        .unwrap()
        .build()
        .unwrap();
        assert_eq!(rel.kappa(), 1.0);

        let gauss = ModelConfig::from_toml_str(
            r#"
            kind = "gaussian"
            dim = 2
            gaussian = [1.0, 0.2, 0.2, 1.0]
        "#,
        )
        .unwrap()
        .build()
        .unwrap();
        assert!(!gauss.has_jumps());
    }

    #[test]
    fn missing_and_unknown_fields_are_rejected() {
        let missing = ModelConfig::from_toml_str(r#"kind = "stable""#).unwrap();
        assert!(matches!(missing.build(), Err(Error::Config(_))));
        let unknown = ModelConfig::from_toml_str(
            r#"
            kind = "cauchy"
            not_a_field = 3
        "#,
        );
        assert!(matches!(unknown, Err(Error::Config(_))));
    }
}
