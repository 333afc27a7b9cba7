use approx::assert_abs_diff_eq;
use qpv_core::bounds::{
    helstrom_guess, locc_mixed_strategy, locc_xbasis_strategy, locc_ybasis_strategy, search_product_measurements,
    soundness_decoy, verify_ppt_certificates, SoundnessInput,
};
use qpv_core::experiments::attack_bench;
use qpv_core::quantum::parity_mixtures;

#[test]
fn certificates_hold_across_eta_grid() {
    for i in 0..=20 {
        let eta = if i == 0 { 0.01 } else { 0.05 * f64::from(i) };
        let report = verify_ppt_certificates(eta).unwrap();
        assert!(report.primal_feasible && report.dual_feasible, "{eta}");
        assert!(report.violations.is_empty());
        assert_abs_diff_eq!(report.primal_value, 0.75 * eta, epsilon = 1e-10);
        assert_abs_diff_eq!(report.dual_value, 0.75 * eta, epsilon = 1e-10);
    }
}

#[test]
fn bound_chain_is_tight_at_full_efficiency() {
    let (r0, r1) = parity_mixtures();
    let helstrom = helstrom_guess(&r0, &r1).unwrap();
    let ppt = verify_ppt_certificates(1.0).unwrap().guess_bound();
    let attack = locc_xbasis_strategy(1.0).unwrap().guessing_probability();
    assert!(helstrom >= ppt - 1e-12 && ppt >= attack - 1e-12);
    assert_abs_diff_eq!(helstrom, 0.75, epsilon = 1e-12);
    assert_abs_diff_eq!(attack, 0.75, epsilon = 1e-12);
}

#[test]
fn sampled_attacks_stay_at_three_quarters() {
    let strategies = vec![
        locc_xbasis_strategy(0.05).unwrap(),
        locc_xbasis_strategy(0.5).unwrap(),
        locc_ybasis_strategy(1.0).unwrap(),
        locc_mixed_strategy(1.0, 0.3).unwrap(),
    ];
    for row in attack_bench(&strategies, 200_000, 300).unwrap() {
        let g = row.guessing_probability;
        assert!((g.value - 0.75).abs() < 5.0 * g.std_error, "{row:?}");
        let d = row.detection_rate;
        assert!((d.value - row.eta).abs() < 5.0 * d.std_error.max(1e-9), "{row:?}");
    }
}

#[test]
fn product_search_never_beats_the_bound() {
    let result = search_product_measurements(8);
    assert!(result.best_value <= 0.75 + 1e-12);
    assert!(result.best_value >= 0.75 - 1e-12);
}

#[test]
fn decoy_soundness_monotonicity() {
    let at = |n_th, delta_th, nu| {
        soundness_decoy(&SoundnessInput { n_th, delta_th, nu })
            .unwrap()
            .eps_decoy
    };
    assert!(at(100, 0.1, 2.0) > at(100, 0.1, 3.0));
    assert!(at(100, 0.1, 2.0) > at(200, 0.1, 2.0));
    assert!(at(100, 0.1, 2.0) < at(100, 0.2, 2.0));
}
