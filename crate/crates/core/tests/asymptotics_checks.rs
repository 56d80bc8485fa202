//! Far-field ratio checks across model families: plane anisotropy,
//! exponentially tempered tails with their weighted-moment limits, finite
//! activity, convolution powers, and a critical profile whose ratio
//! drifts without settling.

use levylab_core::asymptotics::{
    compound_ratio_series, convolution_ratio_series, diagnose, exp_moment_exponent,
    kernel_ratio_series, predicted_limit, sandwich_check,
};
use levylab_core::error::Error;
use levylab_core::model::{
    classify_profile, AngularSpec, EtaSpec, LevyModel, ProfileClass, RadialProfile,
    SphericalDensity,
};

/// Index-3/2 plane model with quadrant-dependent weights: 1 on matching
/// signs, 2 on opposite signs, and a small excluded band around the axes.
fn quadrant_plane_model() -> LevyModel {
    let angular = SphericalDensity::new(
        2,
        AngularSpec::Quadrant {
            same: 1.0,
            opposite: 2.0,
        },
    )
    .unwrap();
    LevyModel::stable(2, 1.5, angular).unwrap()
}

/// Exponential far field at the critical polynomial damping delta = 1 in
/// one dimension: the weight integral at the tempering rate diverges and
/// no ratio limit exists.
fn critical_exponential_model() -> LevyModel {
    let profile = RadialProfile::new(
        1,
        EtaSpec::Power {
            coeff: 1.0,
            exponent: 1.5,
        },
        1.0,
        1.0,
        1.0,
        1.0,
    )
    .unwrap();
    let angular =
        SphericalDensity::new(1, AngularSpec::TwoPoint { plus: 0.5, minus: 0.5 }).unwrap();
    LevyModel::tempered(1, angular, profile).unwrap()
}

/// Finite-activity pure-jump model: bounded intensity near the origin and
/// an exponential tail with cubic damping.
fn finite_activity_model() -> LevyModel {
    let profile =
        RadialProfile::new(1, EtaSpec::Const { value: 0.5 }, 1.0, 1.0, 1.0, 3.0).unwrap();
    let angular =
        SphericalDensity::new(1, AngularSpec::TwoPoint { plus: 0.5, minus: 0.5 }).unwrap();
    LevyModel::tempered(1, angular, profile).unwrap()
}

fn trapezoid(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n {
        acc += f(a + i as f64 * h);
    }
    acc * h
}

#[test]
fn plane_quadrant_directions_converge_with_certified_accuracy() {
    let model = quadrant_plane_model();
    let t = 0.25;
    let h = 0.5f64.sqrt();
    let s_list = [12.0, 22.0, 33.0, 44.0, 55.0];
    let mut finals = Vec::new();
    for theta in [[h, h], [h, -h]] {
        let series = kernel_ratio_series(&model, t, &theta, &[0.0, 0.0], &s_list).unwrap();
        assert_eq!(series.predicted(), Some(1.0));
        assert_eq!(
            series.points().len(),
            s_list.len(),
            "refusals: {:?}",
            series.refusals()
        );
        for p in series.points() {
            assert!(
                p.accuracy < 0.05,
                "s={}: accuracy {} too loose",
                p.radius,
                p.accuracy
            );
        }
        let verdict = diagnose(&series, 0.05).unwrap();
        assert!(
            verdict.pass,
            "theta={theta:?}: deviation {} trend {}",
            verdict.final_deviation, verdict.trend_ok
        );
        finals.push(series.points().last().unwrap().ratio);
    }
    // Both directions divide by an intensity that carries their own
    // quadrant weight, so the raw densities differ by exactly the weight
    // ratio once both normalized ratios agree.
    let anisotropy = 2.0 * finals[1] / finals[0];
    assert!(
        (anisotropy - 2.0).abs() / 2.0 < 0.05,
        "raw density anisotropy {anisotropy} strays from the weight ratio 2"
    );
}

#[test]
fn critical_exponential_profile_ratio_drifts_without_a_limit() {
    let model = critical_exponential_model();
    assert_eq!(classify_profile(1.0, 1.0, 1.0, 1), ProfileClass::Inadmissible);
    let kappa = model.kappa();
    assert_eq!(kappa, 1.0);
    // The weighted tail integral at the tempering rate diverges, so no
    // finite limit is predicted.
    assert!(matches!(
        exp_moment_exponent(&model, &[kappa]),
        Err(Error::DivergentMoment { .. })
    ));
    assert!(matches!(
        predicted_limit(&model, 0.5, &[1.0], &[0.0]),
        Err(Error::DivergentMoment { .. })
    ));

    let series =
        kernel_ratio_series(&model, 0.5, &[1.0], &[0.0], &[6.0, 9.0, 12.0, 15.0, 18.0]).unwrap();
    assert!(series.predicted().is_none());
    assert_eq!(series.points().len(), 5, "refusals: {:?}", series.refusals());
    let ratios: Vec<f64> = series.points().iter().map(|p| p.ratio).collect();
    assert!(
        ratios.windows(2).all(|w| w[0] < w[1]),
        "ratios should drift upward: {ratios:?}"
    );
    assert!(
        ratios[4] / ratios[0] > 1.25,
        "drift {} too small to distinguish from noise",
        ratios[4] / ratios[0]
    );
    let verdict = diagnose(&series, 1e-2).unwrap();
    assert!(verdict.self_referenced);
    assert!(
        !verdict.pass,
        "a drifting series must not be certified: deviation {}",
        verdict.final_deviation
    );
}

#[test]
fn relativistic_ratios_match_the_exponential_moment_prediction() {
    let model = LevyModel::relativistic(1, 1.0, 1.0).unwrap();
    let s_list = [10.0, 16.0, 25.0, 40.0];
    for t in [0.5, 1.0] {
        for y in [0.0, 0.5, -0.5] {
            let series = kernel_ratio_series(&model, t, &[1.0], &[y], &s_list).unwrap();
            // e^{t + y} for unit index at unit mass.
            let want = (t + y).exp();
            let predicted = series.predicted().unwrap();
            assert!(
                ((predicted - want) / want).abs() < 1e-6,
                "t={t} y={y}: predicted {predicted} vs {want}"
            );
            assert_eq!(series.points().len(), 4);
            for p in series.points() {
                assert!(p.accuracy <= 1e-8, "expected the closed-form route");
            }
            let last = series.points().last().unwrap();
            assert!(
                (last.ratio / predicted - 1.0).abs() <= 0.05,
                "t={t} y={y}: deviation {} at s=40",
                (last.ratio / predicted - 1.0).abs()
            );
            let verdict = diagnose(&series, 0.05).unwrap();
            assert!(verdict.pass, "t={t} y={y}: {verdict:?}");
        }
    }
}

#[test]
fn finite_activity_compound_ratio_approaches_the_weighted_jump_mass() {
    let model = finite_activity_model();
    assert!(model.finite_mass());
    // Beyond s of about 24 the cubic-damped exponential tail falls under
    // the lattice roundoff floor, so the ladder stops at 20; the offset
    // stays small because the leading finite-radius bias is delta*y/s.
    let t = 0.1;
    let y = 0.1;
    let series =
        compound_ratio_series(&model, t, &[1.0], &[y], &[8.0, 11.0, 14.0, 17.0, 20.0]).unwrap();
    assert_eq!(series.points().len(), 5, "refusals: {:?}", series.refusals());

    // Independent value of the predicted limit
    // e^{kappa y} exp(t integral of (e^{kappa z} - 1) nu(dz)): on (0, 1)
    // the intensity is the constant 1/4 per side, beyond it the weight
    // cancels the exponential factor leaving 0.5 z^{-3} (1 - e^{-z})^2.
    let near = 0.25 * (std::f64::consts::E - (-1.0f64).exp() - 2.0);
    let far = trapezoid(
        &|z: f64| 0.5 * z.powi(-3) * (1.0 - (-z).exp()).powi(2),
        1.0,
        60.0,
        120_000,
    ) + 0.25 / (60.0 * 60.0);
    let want = y.exp() * (t * (near + far)).exp();
    let predicted = series.predicted().unwrap();
    assert!(
        ((predicted - want) / want).abs() < 1e-5,
        "predicted {predicted} vs independent {want}"
    );

    let verdict = diagnose(&series, 0.05).unwrap();
    assert!(
        verdict.pass,
        "deviation {} trend {}",
        verdict.final_deviation, verdict.trend_ok
    );
    // The finite-radius bias decays like 1/s and is still visible at the
    // last probe, so a percent-level certificate must be refused.
    assert!(!diagnose(&series, 1e-2).unwrap().pass);
}

#[test]
fn two_fold_convolution_ratio_approaches_twice_the_weighted_tail_mass() {
    let angular =
        SphericalDensity::new(1, AngularSpec::TwoPoint { plus: 0.5, minus: 0.5 }).unwrap();
    let model = LevyModel::stable(1, 1.5, angular).unwrap();
    let series = convolution_ratio_series(
        &model,
        1.0,
        2,
        &[1.0],
        &[0.0],
        &[125.0, 250.0, 500.0, 1000.0],
    )
    .unwrap();
    // Without tempering the two-fold limit is twice the truncated mass.
    let want = 2.0 * model.tail_mass(1.0).unwrap();
    let predicted = series.predicted().unwrap();
    assert!(((predicted - want) / want).abs() < 1e-12);
    assert_eq!(series.points().len(), 4, "refusals: {:?}", series.refusals());
    let verdict = diagnose(&series, 0.01).unwrap();
    assert!(
        verdict.pass,
        "deviation {} trend {}",
        verdict.final_deviation, verdict.trend_ok
    );
    assert!(verdict.final_deviation < 1e-3);
    assert!(verdict.slope.unwrap() < -1.0, "slope {:?}", verdict.slope);
}

#[test]
fn relativistic_sandwich_locates_the_onset_radius() {
    let model = LevyModel::relativistic(1, 1.0, 1.0).unwrap();
    let t_set = [0.5];
    let y_list = [vec![0.0], vec![0.5], vec![-0.5]];
    let thetas = [vec![1.0], vec![-1.0]];
    let s_list = [10.0, 16.0, 25.0, 40.0];
    let report = sandwich_check(&model, &t_set, &y_list, &thetas, 0.1, &s_list).unwrap();
    assert!(report.excluded.is_empty(), "{:?}", report.excluded);
    assert_eq!(report.points.len(), 24);
    assert_eq!(report.threshold, Some(25.0));
    assert!(report
        .points
        .iter()
        .filter(|p| p.radius >= 25.0)
        .all(|p| p.ok));
    assert!(report
        .points
        .iter()
        .any(|p| p.radius == 16.0 && !p.ok));

    // A wide-open band is satisfied from the first probe on.
    let loose = sandwich_check(&model, &t_set, &y_list, &thetas, 5.0, &s_list).unwrap();
    assert_eq!(loose.threshold, Some(10.0));
    assert!(loose.points.iter().all(|p| p.ok));
}
