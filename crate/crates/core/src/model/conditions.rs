//! Structural diagnostics on a jump model: directional tail ratios and the
//! two-center convolution bound.
//!
//! The directional check measures how fast nu(s theta - y) / nu(s theta)
//! approaches exp(kappa <theta, y>) along valid directions — the far-field
//! regularity that every tail limit downstream relies on. The convolution
//! check measures the comparability of the radial factor with its recorded
//! profile and evaluates the two-center functional K(r); profiles classified
//! as inadmissible are expected to show a diverging K, and the report keeps
//! that verdict explicit instead of papering over it.

use serde::Serialize;

use super::{norm, LevyModel, ProfileClass};
use crate::kfunc::{k_functional, KEstimate};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailRatioRow {
    pub s: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRatioReport {
    pub kappa: f64,
    pub rows: Vec<TailRatioRow>,
    pub skipped_directions: usize,
}

/// Measures max over valid directions theta and shifts y of
/// |nu(s theta - y) / nu(s theta) * exp(-kappa <theta, y>) - 1|
/// for each s in the grid.
pub fn directional_tail_ratio_check(
    model: &LevyModel,
    directions: &[Vec<f64>],
    shifts: &[Vec<f64>],
    s_grid: &[f64],
) -> Result<TailRatioReport> {
    if !model.has_jumps() {
        return Err(Error::Precondition(
            "directional tail ratios need a jump part".into(),
        ));
    }
    let dim = model.dim();
    for v in directions.iter().chain(shifts.iter()) {
        if v.len() != dim {
            return Err(Error::Precondition(
                "direction and shift vectors must match the model dimension".into(),
            ));
        }
    }
    for theta in directions {
        if (norm(theta) - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!(
                "directions must be unit vectors (got |theta| = {})",
                norm(theta)
            )));
        }
    }
    if directions.is_empty() || shifts.is_empty() || s_grid.is_empty() {
        return Err(Error::Precondition(
            "directions, shifts and the radius grid must be nonempty".into(),
        ));
    }
    let max_shift = shifts.iter().map(|y| norm(y)).fold(0.0_f64, f64::max);
    let s_min = s_grid.iter().copied().fold(f64::INFINITY, f64::min);
    if !(s_min >= 2.0 && s_min >= 2.0 * max_shift) {
        return Err(Error::Precondition(format!(
            "radius grid must start at max(2, 2 max|y|) = {:.3} (got {s_min})",
            2.0_f64.max(2.0 * max_shift)
        )));
    }

    let kappa = model.kappa();
    let valid: Vec<&Vec<f64>> = directions
        .iter()
        .filter(|theta| model.angular().is_valid_direction(theta))
        .collect();
    let skipped = directions.len() - valid.len();
    if valid.is_empty() {
        return Err(Error::Precondition(
            "no probe direction lies in the valid set of the angular weight".into(),
        ));
    }

    let mut rows = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let mut worst = 0.0_f64;
        for theta in &valid {
            let base = model.log_density(&theta.iter().map(|t| t * s).collect::<Vec<_>>());
            for y in shifts {
                let shifted: Vec<f64> = theta.iter().zip(y).map(|(t, yi)| t * s - yi).collect();
                let dot: f64 = theta.iter().zip(y).map(|(t, yi)| t * yi).sum();
                let dev = ((model.log_density(&shifted) - base - kappa * dot).exp() - 1.0).abs();
                worst = worst.max(dev);
            }
        }
        rows.push(TailRatioRow {
            s,
            max_deviation: worst,
        });
    }
    Ok(TailRatioReport {
        kappa,
        rows,
        skipped_directions: skipped,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparabilityRow {
    pub s: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionBoundReport {
    pub profile_class: ProfileClass,
    /// radial_factor(s) / profile.f(s) over the sample radii; bounded away
    /// from zero and infinity exactly when the profile describes the tail.
    pub comparability: Vec<ComparabilityRow>,
    /// max ratio / min ratio over the sample.
    pub ratio_spread: f64,
    pub k_rows: Vec<KEstimate>,
    pub k_diverged: bool,
}

/// Comparability of the radial factor with its recorded profile plus the
/// two-center functional at the requested restriction radii.
pub fn convolution_bound_check(
    model: &LevyModel,
    s_grid: &[f64],
    k_radii: &[f64],
    x_max: f64,
) -> Result<ConvolutionBoundReport> {
    let profile = model.profile().ok_or_else(|| {
        Error::Precondition("convolution bound needs a model with a recorded profile".into())
    })?;
    if s_grid.is_empty() || k_radii.is_empty() {
        return Err(Error::Precondition(
            "sample radii and restriction radii must be nonempty".into(),
        ));
    }
    if s_grid.iter().any(|&s| s < 1.0) {
        return Err(Error::Precondition(
            "comparability radii must be at least 1".into(),
        ));
    }

    let mut comparability = Vec::with_capacity(s_grid.len());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &s in s_grid {
        let ratio = (model.log_radial(s) - profile.log_f(s)).exp();
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        comparability.push(ComparabilityRow { s, ratio });
    }

    let mut k_rows = Vec::with_capacity(k_radii.len());
    let mut k_diverged = false;
    for &r in k_radii {
        let est = k_functional(profile, r, x_max)?;
        k_diverged |= est.diverged;
        k_rows.push(est);
    }

    Ok(ConvolutionBoundReport {
        profile_class: profile.classify(),
        comparability,
        ratio_spread: hi / lo,
        k_rows,
        k_diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AngularSpec, EtaSpec, LevyModel, RadialProfile, SphericalDensity};

    #[test]
    fn cauchy_ratio_deviation_shrinks_like_two_y_over_s() {
        let model = LevyModel::cauchy();
        let report = directional_tail_ratio_check(
            &model,
            &[vec![1.0], vec![-1.0]],
            &[vec![0.5], vec![-0.5]],
            &[10.0, 30.0, 100.0],
        )
        .unwrap();
        assert_eq!(report.kappa, 0.0);
        assert_eq!(report.skipped_directions, 0);
        let devs: Vec<f64> = report.rows.iter().map(|r| r.max_deviation).collect();
        // nu(s - y)/nu(s) = (1 - y/s)^(-2): max at y = +0.5.
        let expect = |s: f64| (1.0 - 0.5 / s).powi(-2) - 1.0;
        for (row, &d) in report.rows.iter().zip(&devs) {
            assert!((d - expect(row.s)).abs() < 1e-12);
        }
        assert!(devs[0] > devs[1] && devs[1] > devs[2]);
        assert!(devs[2] < 0.011);
    }

    #[test]
    fn one_sided_weight_skips_the_dead_direction() {
        let angular = SphericalDensity::new(
            1,
            AngularSpec::TwoPoint {
                plus: 1.0,
                minus: 0.0,
            },
        )
        .unwrap();
        let model = LevyModel::stable(1, 0.8, angular).unwrap();
        let report = directional_tail_ratio_check(
            &model,
            &[vec![1.0], vec![-1.0]],
            &[vec![0.25]],
            &[8.0, 32.0],
        )
        .unwrap();
        assert_eq!(report.skipped_directions, 1);
        assert!(report.rows[1].max_deviation < report.rows[0].max_deviation);
    }

    #[test]
    fn exponential_profile_ratio_uses_the_rate_weight() {
        // Pure exponential tail: the ratio limit carries exp(kappa <theta, y>)
        // and the residual deviation decays like delta * y / s.
        let profile = RadialProfile::new(
            1,
            EtaSpec::Power {
                coeff: 1.0,
                exponent: 2.0,
            },
            1.0,
            1.0,
            1.0,
            2.0,
        )
        .unwrap();
        let angular =
            SphericalDensity::new(1, AngularSpec::Const { value: 1.0 }).unwrap();
        let model = LevyModel::tempered(1, angular, profile).unwrap();
        assert_eq!(model.kappa(), 1.0);
        let report = directional_tail_ratio_check(
            &model,
            &[vec![1.0]],
            &[vec![0.5], vec![-0.5]],
            &[20.0, 80.0, 320.0],
        )
        .unwrap();
        // With the exponential factor divided out the ratio is
        // ((s - y)/s)^(-delta), so the deviation is about delta * y / s.
        for row in &report.rows {
            let expect = (1.0 - 0.5 / row.s).powi(-2) - 1.0;
            assert!(
                (row.max_deviation - expect).abs() < 1e-12,
                "s = {}: {} vs {}",
                row.s,
                row.max_deviation,
                expect
            );
        }
    }

    #[test]
    fn relativistic_deviation_snapshot() {
        let model = LevyModel::relativistic(1, 1.0, 1.0).unwrap();
        let report = directional_tail_ratio_check(
            &model,
            &[vec![1.0], vec![-1.0]],
            &[vec![0.5], vec![-0.5]],
            &[50.0, 200.0, 800.0],
        )
        .unwrap();
        assert_eq!(report.kappa, 1.0);
        // Frozen values; the deviation decays like delta * |y| / s with
        // delta = 1.5, so quadrupling s divides it by about four.
        let devs: Vec<f64> = report.rows.iter().map(|r| r.max_deviation).collect();
        assert!((devs[0] - 1.5265e-2).abs() < 2e-4, "dev(50) = {}", devs[0]);
        assert!((devs[1] - 3.7664e-3).abs() < 5e-5, "dev(200) = {}", devs[1]);
        assert!(devs[2] < 1.0e-3, "dev(800) = {}", devs[2]);
        let rate = devs[0] / devs[1];
        assert!((3.8..4.3).contains(&rate), "decay rate = {rate}");
    }

    #[test]
    fn deviation_report_requires_safe_radii() {
        let model = LevyModel::cauchy();
        let err = directional_tail_ratio_check(&model, &[vec![1.0]], &[vec![2.0]], &[3.0, 10.0]);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn convolution_report_for_a_power_tail() {
        let model = LevyModel::cauchy();
        let report =
            convolution_bound_check(&model, &[1.0, 3.0, 10.0, 100.0], &[1.0, 2.0], 64.0).unwrap();
        assert_eq!(report.profile_class, ProfileClass::Polynomial);
        assert!(!report.k_diverged);
        // The radial factor is exactly the profile here.
        assert!((report.ratio_spread - 1.0).abs() < 1e-12);
        assert!(report.k_rows[0].value > report.k_rows[1].value);
    }

    #[test]
    fn convolution_report_flags_critical_exponential_tail() {
        // delta exactly (dim + 1)/2: inadmissible, and K must diverge.
        let profile = RadialProfile::new(
            1,
            EtaSpec::Power {
                coeff: 1.0_f64 / std::f64::consts::E,
                exponent: 2.0,
            },
            1.0,
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let angular =
            SphericalDensity::new(1, AngularSpec::Const { value: 1.0 }).unwrap();
        let model = LevyModel::tempered(1, angular, profile).unwrap();
        let report = convolution_bound_check(&model, &[1.0, 4.0], &[2.0], 64.0).unwrap();
        assert_eq!(report.profile_class, ProfileClass::Inadmissible);
        assert!(report.k_diverged);
    }
}
