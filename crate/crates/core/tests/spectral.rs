mod common;

use std::f64::consts::PI;

use biphoton::biphoton::{auto_grid, default_quadrature};
use biphoton::config::thermal_velocity;
use biphoton::spectral::{averaged_chi_as, averaged_chi_s, chi_eit, chi_stokes, MediumParams};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn params() -> MediumParams {
    MediumParams::from_config(&common::calibrated()).unwrap()
}

/// Real-axis trapezoid over the Maxwell-Boltzmann distribution.
fn trapezoid_average(p: &MediumParams, delta: f64, kernel: impl Fn(f64, f64, &MediumParams) -> C64) -> C64 {
    let sigma = thermal_velocity(p.temperature, p.mass);
    let h = 0.02;
    let n = (7.0 * sigma / h) as i64;
    let mut acc = C64::new(0.0, 0.0);
    for i in -n..=n {
        let v = i as f64 * h;
        let g = (-0.5 * (v / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
        acc += kernel(delta, v, p) * g * h;
    }
    acc
}

#[test]
fn doppler_average_matches_trapezoid() {
    let cfg = common::calibrated();
    let p = params();
    let grid = auto_grid(&cfg).unwrap();
    let quad = default_quadrature(&cfg).unwrap();
    let chi_as = averaged_chi_as(&p, &grid, &quad).unwrap();
    let chi_s = averaged_chi_s(&p, &grid, &quad).unwrap();
    let m = grid.half_points;
    for j in [m, m + 37, m - 211, m + 1500, 3] {
        let d = grid.value(j);
        let want = trapezoid_average(&p, d, chi_eit);
        let got = chi_as.values[j];
        assert!((got - want).norm() <= 1e-8 * want.norm().max(1e-30), "chi_as at {d}: {got} vs {want}");
        let want = trapezoid_average(&p, d, chi_stokes);
        let got = chi_s.values[j];
        assert!((got - want).norm() <= 1e-8 * want.norm().max(1e-30), "chi_s at {d}: {got} vs {want}");
    }
}

/// Re χ(δ) = (1/π) PV∫ Im χ(δ')/(δ' − δ) dδ', evaluated with Maclaurin's
/// odd/even rule on a uniform grid.
fn hilbert_real_part(im: &[f64], step: f64, i: usize) -> f64 {
    let mut s = 0.0;
    for (j, &v) in im.iter().enumerate() {
        if (j as i64 - i as i64).rem_euclid(2) == 1 {
            s += v / ((j as f64 - i as f64) * step);
        }
    }
    2.0 * step * s / PI
}

#[test]
fn single_velocity_class_obeys_kramers_kronig() {
    let p = params();
    let step = 2.0 * PI * 10e3;
    let half = 40_000usize;
    for v in [0.0, 35.0] {
        let chi: Vec<C64> = (0..=2 * half).map(|j| chi_eit((j as f64 - half as f64) * step, v, &p)).collect();
        let im: Vec<f64> = chi.iter().map(|c| c.im).collect();
        let scale = chi.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for off in [-3000i64, -400, -57, 0, 12, 250, 2800] {
            let i = (half as i64 + off) as usize;
            let re = hilbert_real_part(&im, step, i);
            assert!((re - chi[i].re).abs() < 2e-3 * scale, "v={v} off={off}: {re} vs {}", chi[i].re);
        }
    }
}

#[test]
fn averaged_absorption_is_nonnegative() {
    let cfg = common::calibrated();
    let p = params();
    let grid = auto_grid(&cfg).unwrap();
    let quad = default_quadrature(&cfg).unwrap();
    let chi = averaged_chi_as(&p, &grid, &quad).unwrap();
    let peak = chi.values.iter().map(|c| c.im).fold(0.0, f64::max);
    assert!(chi.values.iter().all(|c| c.im >= -1e-10 * peak));
}

proptest! {
    #[test]
    fn single_class_susceptibilities_are_passive(d in -2e10f64..2e10, v in -800.0f64..800.0) {
        let p = params();
        prop_assert!(chi_eit(d, v, &p).im >= 0.0);
        prop_assert!(chi_stokes(d, v, &p).im >= 0.0);
    }

    #[test]
    fn eit_response_is_mirror_symmetric_at_rest(d in 0.0f64..1e9) {
        // with resonant coupling and v = 0, χ(−δ) = −conj χ(δ)
        let mut cfg = common::calibrated();
        cfg.lasers.coupling_detuning = 0.0;
        let p = MediumParams::from_config(&cfg).unwrap();
        let a = chi_eit(d, 0.0, &p);
        let b = chi_eit(-d, 0.0, &p);
        prop_assert!((a + b.conj()).norm() <= 1e-12 * a.norm().max(1e-300));
    }
}
