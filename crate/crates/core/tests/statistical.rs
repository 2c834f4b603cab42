//! Larger Monte-Carlo checks of individual operations.

use hmc_core::integrator::LeapfrogParams;
use hmc_core::model::{BuiltinTarget, MassSpec};
use hmc_core::moments::{check_h4_scaling, estimate_alpha_variance, reversibility_identity_check, PhiKind};
use hmc_core::oracle::harmonic_constants;
use hmc_core::scaling::{grid_search_l, limit_dynamics_diagnostic, ScalingRunConfig, Scheme};
use hmc_core::tuning::normal_cdf;

fn harmonic() -> BuiltinTarget {
    BuiltinTarget::StdGaussian { dim: 1 }
}

#[test]
fn rwm_grid_search_lands_near_0_234() {
    let grid = [3.0, 4.0, 5.0, 5.66, 6.5, 8.0, 10.0];
    let (l, acc) = grid_search_l(&harmonic(), &MassSpec::identity(1), Scheme::Rwm, 1024, &grid, 20_000, 5).unwrap();
    assert!((acc - 0.234).abs() <= 0.05, "l = {l}, acceptance {acc}");
}

#[test]
fn mala_grid_search_lands_near_0_574() {
    let grid: Vec<f64> = (0..12).map(|i| 0.5 + 0.25 * i as f64).collect();
    let (l, acc) = grid_search_l(&harmonic(), &MassSpec::identity(1), Scheme::Mala, 1024, &grid, 20_000, 6).unwrap();
    assert!((acc - 0.574).abs() <= 0.05, "l = {l}, acceptance {acc}");
}

#[test]
fn quartic_moments_scale_like_h4() {
    let r = check_h4_scaling(
        &BuiltinTarget::Quartic { dim: 1 },
        &MassSpec::identity(1),
        1.0,
        &[0.4, 0.2, 0.1, 0.05],
        1_000_000,
        12,
    )
    .unwrap();
    assert!((r.slope_mu - 4.0).abs() <= 0.5, "{}", r.slope_mu);
    assert!((r.slope_sigma2 - 4.0).abs() <= 0.5, "{}", r.slope_sigma2);
}

#[test]
fn harmonic_identities_at_h_0_2() {
    let mass = MassSpec::identity(1);
    let params = LeapfrogParams::new(0.2, 1.0).unwrap();
    let odd = reversibility_identity_check(&harmonic(), &mass, &params, PhiKind::Odd, 1_000_000, 21).unwrap();
    let even = reversibility_identity_check(&harmonic(), &mass, &params, PhiKind::Even, 1_000_000, 22).unwrap();
    assert!(odd.discrepancy_in_se <= 4.0, "{odd:?}");
    assert!(even.discrepancy_in_se <= 4.0, "{even:?}");
    // Odd: E[Δ] = -E[Δ e^{-Δ}].
    assert!(odd.lhs > 0.0 && odd.rhs < 0.0);
}

#[test]
fn harmonic_alpha_variance() {
    let n = 1_000_000;
    let sigma = harmonic_constants().sigma;
    let est = estimate_alpha_variance(&harmonic(), &MassSpec::identity(1), 1.0, 0.05, n, 23).unwrap();
    // α = λ·2UV with U, V iid N(0,1), so Var[α²] = 8Σ².
    let se = (8.0 / n as f64).sqrt() * sigma;
    assert!((est - 0.044255).abs() <= 3.0 * se, "{est} vs {sigma} (se {se})");
}

#[test]
fn one_step_diagnostic_at_d_4096() {
    let mass = MassSpec::identity(1);
    let mut config = ScalingRunConfig::new(vec![4096], 1.0, 20_000, 24);
    config.replicates = 8;
    let same = limit_dynamics_diagnostic(&config, &harmonic(), &mass, 1.0).unwrap();
    assert!(same.n_accepted > 17_000);
    assert!(same.ks.statistic <= 0.02, "{same:?}");
    // The displacement is Gaussian, so a scale-2 mismatch has KS distance
    // max_t Φ(t) - Φ(t/2), attained at t² = 8 ln 2 / 3.
    let t = (8.0 * std::f64::consts::LN_2 / 3.0).sqrt();
    let expected = normal_cdf(t) - normal_cdf(t / 2.0);
    let doubled = limit_dynamics_diagnostic(&config, &harmonic(), &mass, 2.0).unwrap();
    assert!((doubled.ks.statistic - expected).abs() <= 0.02, "{} vs {expected}", doubled.ks.statistic);
}
