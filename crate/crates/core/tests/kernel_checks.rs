//! Cross-route consistency checks on production-size lattices: the
//! spectral kernel against the big-jump factorization, the semigroup
//! property under lattice convolution, quadrature convolution powers
//! against their lattice counterparts, and the far-field series against
//! the spectral kernel on the band where both routes are trustworthy.

use levylab_core::convolve::{self, Grid, RestrictedMeasure};
use levylab_core::kernel::{
    compound_far, decomposition_check, far_field, heat_kernel_spectral, nfold_far,
    pair_convolution, relativistic_oracle, semigroup_residual, FarFieldMethod,
};
use levylab_core::matrix::SymMatrix;
use levylab_core::model::{AngularSpec, EtaSpec, LevyModel, RadialProfile, SphericalDensity};

/// Symmetric tempered model with near-field singularity |y|^{-2.9} and
/// exponential taper at rate 1/2; steep enough that the far-field series
/// truncates well below the refusal cap.
fn steep_tempered_1d() -> LevyModel {
    let profile = RadialProfile::new(
        1,
        EtaSpec::Power {
            coeff: 1.0,
            exponent: 2.9,
        },
        1.0,
        0.5,
        1.0,
        2.0,
    )
    .unwrap();
    let angular =
        SphericalDensity::new(1, AngularSpec::TwoPoint { plus: 0.5, minus: 0.5 }).unwrap();
    LevyModel::tempered(1, angular, profile).unwrap()
}

fn jump_diffusion_1d() -> LevyModel {
    let profile = RadialProfile::new(
        1,
        EtaSpec::Const {
            value: (-1.0f64).exp(),
        },
        1.0,
        1.0,
        1.0,
        4.0,
    )
    .unwrap();
    let angular =
        SphericalDensity::new(1, AngularSpec::TwoPoint { plus: 0.6, minus: 0.4 }).unwrap();
    LevyModel::tempered(1, angular, profile)
        .unwrap()
        .with_drift(vec![0.3])
        .unwrap()
        .with_gaussian(SymMatrix::scaled_identity(1, 0.5))
        .unwrap()
}

#[test]
fn decomposition_matches_spectral_kernel_for_unit_index() {
    let model = LevyModel::cauchy();
    // The compound-Poisson side of the identity only sees jumps landing in the
    // window, while the spectral side folds the quadratic-tail images back in,
    // so the residual floor scales like t*nu(L); L = 384 puts it well under
    // the tolerance.
    let grid = Grid::new(1, 1 << 18, 384.0).unwrap();
    let report = decomposition_check(&model, 0.5, &grid).unwrap();
    assert!(
        (report.split_radius - 0.5).abs() <= grid.spacing(),
        "split radius {} strayed from the scale-function value",
        report.split_radius
    );
    assert!(report.series_terms >= 5);
    assert!(
        report.sup_relative_residual < 1e-5,
        "sup relative residual {}",
        report.sup_relative_residual
    );
    // The mass gap is the escaped big-jump intensity beyond the window,
    // about 2t/(pi * L) for the quadratic tail.
    assert!(
        report.mass_residual < 2e-3,
        "mass residual {}",
        report.mass_residual
    );
}

#[test]
fn decomposition_matches_spectral_kernel_for_jump_diffusion() {
    let model = jump_diffusion_1d();
    let grid = Grid::new(1, 1 << 13, 32.0).unwrap();
    let report = decomposition_check(&model, 0.5, &grid).unwrap();
    assert_eq!(report.split_radius, 0.0);
    assert!(
        report.sup_relative_residual < 1e-5,
        "sup relative residual {}",
        report.sup_relative_residual
    );
    assert!(
        report.mass_residual < 1e-6,
        "mass residual {}",
        report.mass_residual
    );
}

#[test]
fn semigroup_property_holds_for_unit_index() {
    // The residual floor is the window image p_{t+s}(2L - x) near the
    // edge, about (t+s)^2 / L^2 relative to the peak, so the power tail
    // needs a generous window.
    let model = LevyModel::cauchy();
    let grid = Grid::new(1, 1 << 18, 768.0).unwrap();
    for &(t, s) in &[(0.25, 0.25), (0.5, 1.0)] {
        let residual = semigroup_residual(&model, t, s, &grid).unwrap();
        assert!(
            residual < 1e-5,
            "semigroup residual {residual} at (t, s) = ({t}, {s})"
        );
    }
}

#[test]
fn semigroup_property_holds_for_tempered_family() {
    let model = steep_tempered_1d();
    let grid = Grid::new(1, 1 << 13, 32.0).unwrap();
    let residual = semigroup_residual(&model, 0.25, 0.25, &grid).unwrap();
    assert!(residual < 1e-5, "semigroup residual {residual}");
}

#[test]
fn far_field_series_agrees_with_spectral_kernel_on_overlap_band() {
    let model = steep_tempered_1d();
    let t = 0.02;
    let grid = Grid::new(1, 1 << 12, 48.0).unwrap();
    let field = heat_kernel_spectral(&model, t, &grid).unwrap();
    for &x in &[16.0, 20.0, 24.0] {
        let est = far_field(&model, t, &[x]).unwrap();
        assert_eq!(est.method, FarFieldMethod::Series);
        assert_eq!(est.series_terms, 3);
        assert!(
            est.relative_accuracy <= 0.05,
            "claimed accuracy {} at x = {x}",
            est.relative_accuracy
        );
        let reference = field.value_at(&[x]);
        let deviation = (est.value - reference).abs() / reference;
        assert!(
            deviation <= 1e-2,
            "far-field series off by {deviation:.2e} at x = {x} \
             (series {:.6e}, spectral {reference:.6e})",
            est.value
        );
    }
}

#[test]
fn far_field_respects_sign_symmetry() {
    let model = steep_tempered_1d();
    let plus = far_field(&model, 0.02, &[18.0]).unwrap();
    let minus = far_field(&model, 0.02, &[-18.0]).unwrap();
    assert!(plus.value > 0.0);
    let deviation = (plus.value - minus.value).abs() / plus.value;
    assert!(deviation <= 1e-6, "sign asymmetry {deviation:.2e}");
}

#[test]
fn quadrature_convolution_powers_match_lattice_powers() {
    let model = steep_tempered_1d();
    let grid = Grid::new(1, 1 << 13, 48.0).unwrap();
    let r = grid.snap_to_half_cell(0.5);
    let measure = RestrictedMeasure::new(model.clone(), r).unwrap();
    let base = measure.sample_on(&grid).unwrap();

    let two_lattice = convolve::nfold(&base, 2).unwrap();
    let two_direct = pair_convolution(&model, r, 5.0).unwrap();
    let dev2 = (two_lattice.value_at(&[5.0]) - two_direct).abs() / two_direct;
    assert!(dev2 <= 1e-3, "two-fold deviation {dev2:.2e}");

    let three_lattice = convolve::nfold(&base, 3).unwrap();
    let three_direct = nfold_far(&model, r, 3, 5.0).unwrap();
    let dev3 = (three_lattice.value_at(&[5.0]) - three_direct).abs() / three_direct;
    assert!(dev3 <= 5e-3, "three-fold deviation {dev3:.2e}");
}

#[test]
fn compound_far_value_matches_lattice_compound_poisson() {
    let model = steep_tempered_1d();
    let t = 0.02;
    let grid = Grid::new(1, 1 << 12, 48.0).unwrap();
    let r = grid.snap_to_half_cell(0.5);
    let (pbar, _terms) = convolve::compound_poisson_with_terms(&model, r, t, &grid, None).unwrap();
    let est = compound_far(&model, r, t, &[10.0]).unwrap();
    let reference = pbar.value_at(&[10.0]);
    let deviation = (est.value - reference).abs() / reference;
    assert!(
        deviation <= 3e-3,
        "compound far value off by {deviation:.2e} ({:.6e} vs {reference:.6e})",
        est.value
    );
}

#[test]
fn relativistic_kernel_matches_oracle_in_the_plane() {
    let model = LevyModel::relativistic(2, 1.0, 1.0).unwrap();
    let grid = Grid::new(2, 1 << 9, 24.0).unwrap();
    let field = heat_kernel_spectral(&model, 1.0, &grid).unwrap();
    // Probe exactly on lattice nodes so interpolation error cannot enter:
    // axis points, then diagonal nodes whose radius is sqrt(2) larger.
    for &c in &[0.0, 0.9375, 3.0, 7.5] {
        let oracle = relativistic_oracle(2, 1.0, 1.0, c).unwrap();
        let got = field.value_at(&[c, 0.0]);
        let dev = (got - oracle).abs() / oracle;
        assert!(dev <= 1e-6, "axis deviation {dev:.2e} at radius {c}");
    }
    for &c in &[0.9375, 3.0] {
        let radius = c * std::f64::consts::SQRT_2;
        let oracle = relativistic_oracle(2, 1.0, 1.0, radius).unwrap();
        let got = field.value_at(&[c, c]);
        let dev = (got - oracle).abs() / oracle;
        assert!(dev <= 1e-6, "diagonal deviation {dev:.2e} at radius {radius}");
    }
}

#[test]
fn relativistic_kernel_matches_oracle_in_three_dimensions() {
    let model = LevyModel::relativistic(3, 1.0, 1.0).unwrap();
    let grid = Grid::new(3, 1 << 8, 8.0).unwrap();
    let field = heat_kernel_spectral(&model, 1.0, &grid).unwrap();
    for &radius in &[0.0, 0.75, 1.5] {
        let oracle = relativistic_oracle(3, 1.0, 1.0, radius).unwrap();
        let got = field.value_at(&[radius, 0.0, 0.0]);
        let dev = (got - oracle).abs() / oracle;
        assert!(dev <= 1e-5, "deviation {dev:.2e} at radius {radius}");
    }
}
