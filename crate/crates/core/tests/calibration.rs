mod common;

use std::f64::consts::PI;

use biphoton::biphoton::solve;
use biphoton::calibration::{calibrate, default_anchors, Anchor, AnchorKind, CalibrationOptions};
use biphoton::config::vapor_density;
use biphoton::ratemodel::rate_budget;
use biphoton::Error;

#[test]
fn recovers_parameters_from_its_own_anchors() {
    let mut truth = common::uncalibrated();
    truth.cell.ground_decoherence_rate = 2.0 * PI * 0.8e6;
    truth.lasers.coupling_rabi_scale = 0.4;
    truth.noise.raman_background_as = 1.0e5;
    truth.noise.raman_coupling_exponent = 0.6;
    truth.model.rate_constant = 3000.0;
    let vapor = vapor_density(truth.cell.temperature, truth.species.isotopic_purity).unwrap();
    truth.density_override = Some(1e-3 * vapor);

    let at = |pp: f64, pc: f64| {
        let mut c = truth.clone();
        c.lasers.pump_power = pp * 1e-3;
        c.lasers.coupling_power = pc * 1e-3;
        let s = solve(&c).unwrap();
        let g2 = rate_budget(&c, &s.waveform, s.metrics.pair_rate, 1e-9).unwrap().g2_max;
        (s.metrics, g2)
    };
    let mut anchors = Vec::new();
    for pc in [27.0, 9.0, 1.0] {
        let (m, g2) = at(6.0, pc);
        anchors.push(Anchor::new(AnchorKind::OneOverETime, 6e-3, pc * 1e-3, m.one_over_e_time));
        anchors.push(Anchor::new(AnchorKind::G2Max, 6e-3, pc * 1e-3, g2));
    }
    anchors.push(Anchor::new(AnchorKind::PairRate, 7e-3, 27e-3, at(7.0, 27.0).0.pair_rate));

    let r = calibrate(&common::uncalibrated(), &anchors, &CalibrationOptions::default()).unwrap();
    let f = &r.fitted;
    let close = |got: f64, want: f64, what: &str| assert!((got / want - 1.0).abs() < 0.05, "{what}: {got} vs {want}");
    close(f.gamma12, truth.cell.ground_decoherence_rate, "gamma12");
    close(f.coupling_rabi_scale, truth.lasers.coupling_rabi_scale, "rabi scale");
    close(f.raman_background_as, truth.noise.raman_background_as, "raman");
    close(f.raman_coupling_exponent, truth.noise.raman_coupling_exponent, "raman exponent");
    close(f.rate_constant, truth.model.rate_constant, "rate constant");
    for res in &r.residuals {
        assert!(res.relative.abs() < 0.01, "{res:?}");
    }
}

#[test]
fn too_few_anchors_is_a_config_error() {
    let a = &default_anchors()[..2];
    let e = calibrate(&common::uncalibrated(), a, &CalibrationOptions::default()).unwrap_err();
    assert!(matches!(e, Error::ConfigInvalid { .. }));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn fitted_values_respect_bounds() {
    let opts = CalibrationOptions::default();
    let r = calibrate(&common::uncalibrated(), &default_anchors(), &opts).unwrap();
    let f = &r.fitted;
    assert!(r.converged);
    let within = |v: f64, (lo, hi): (f64, f64)| v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12);
    assert!(within(f.gamma12, opts.gamma12_bounds));
    assert!(within(f.coupling_rabi_scale, opts.rabi_scale_bounds));
    assert!(within(f.density_fraction_of_vapor, opts.density_fraction_bounds));
    assert!(within(f.raman_background_as, opts.raman_bounds));
    assert!(within(f.raman_coupling_exponent, opts.raman_coupling_exponent_bounds));
    assert_eq!(r.residuals.len(), default_anchors().len());
    // the overlay applied to the base reproduces the fitted configuration
    let overlay: toml::Value = toml::from_str(&r.overlay_toml()).unwrap();
    let base = include_str!("../../../configs/defaults.toml");
    let merged = biphoton::config::load_config_with_overlay(base, &overlay).unwrap();
    assert_eq!(merged.fingerprint(), r.config_fingerprint);
}
