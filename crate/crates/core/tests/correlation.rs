mod common;

use biphoton::correlation::{
    back_out_generation_rate, coincidence_histogram, conditional_g2, cs_violation, detected_pair_rate,
    fit_histogram_decay, normalize_g2, Measured, NormalizationMode, Verdict,
};
use biphoton::detection::{add_background, split_stream, ClickStream};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

/// All-pairs reference: bin k holds pairs with lo + k·bw ≤ t_a − t_s < lo + (k+1)·bw.
fn brute_force(s: &[u64], a: &[u64], bw: i64, lo: i64, n: usize) -> Vec<u64> {
    let mut h = vec![0u64; n];
    for &ts in s {
        for &ta in a {
            let d = ta as i64 - ts as i64 - lo;
            if d >= 0 && d < bw * n as i64 {
                h[(d / bw) as usize] += 1;
            }
        }
    }
    h
}

#[test]
fn histogram_matches_all_pairs_on_random_instances() {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let dur: u64 = r.random_range(1_000_000..50_000_000);
        let ns = r.random_range(0..5_000);
        let na = r.random_range(0..5_000);
        let mut s: Vec<u64> = (0..ns).map(|_| r.random_range(0..dur)).collect();
        let mut a: Vec<u64> = (0..na).map(|_| r.random_range(0..dur)).collect();
        s.sort_unstable();
        a.sort_unstable();
        let bw: i64 = r.random_range(1..2000);
        let n: usize = r.random_range(100..400);
        let lo: i64 = -r.random_range(0..(bw * n as i64));
        let hs = ClickStream::new(0, s.clone(), dur).unwrap();
        let ha = ClickStream::new(1, a.clone(), dur).unwrap();
        let h = coincidence_histogram(&hs, &ha, bw as f64 * 1e-12, (lo as f64 * 1e-12, (lo + bw * n as i64) as f64 * 1e-12))
            .unwrap();
        assert_eq!(h.counts, brute_force(&s, &a, bw, lo, n), "case {case}");
    }
}

#[test]
fn independent_streams_have_unit_floor() {
    let dur = 100_000_000_000_000u64; // 100 s
    let s = add_background(&ClickStream::empty(0, dur), 1e5, 0.0, 1).unwrap();
    let a = add_background(&ClickStream::empty(1, dur), 1e5, 0.0, 2).unwrap();
    let h = coincidence_histogram(&s, &a, 1e-9, (-1e-6, 1e-6)).unwrap();
    assert!(h.total() >= 1_000_000, "{}", h.total());
    for mode in [NormalizationMode::AnalyticFloor, NormalizationMode::MeasuredFloor] {
        let g = normalize_g2(&h, mode).unwrap();
        let mean = g.g2.iter().sum::<f64>() / g.g2.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mode:?}: {mean}");
    }
}

/// Stokes/anti-Stokes pairs with exponential delays on a Poisson floor.
fn correlated(rate: f64, tau: f64, noise: f64, secs: f64, seed: u64) -> (ClickStream, ClickStream) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let dur = (secs * 1e12) as u64;
    let gap = Exp::new(rate).unwrap();
    let delay = Exp::new(1.0 / tau).unwrap();
    let (mut s, mut a) = (Vec::new(), Vec::new());
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut r);
        if t >= secs {
            break;
        }
        s.push((t * 1e12) as u64);
        let ta = ((t + delay.sample(&mut r)) * 1e12) as u64;
        if ta < dur {
            a.push(ta);
        }
    }
    a.sort_unstable();
    let s = add_background(&ClickStream::new(0, s, dur).unwrap(), noise, 0.0, r.random()).unwrap();
    let a = add_background(&ClickStream::new(1, a, dur).unwrap(), noise, 0.0, r.random()).unwrap();
    (s, a)
}

#[test]
fn decay_fit_and_pair_rate_recover_the_source() {
    let (s, a) = correlated(200.0, 50e-9, 2e4, 300.0, 7);
    let h = coincidence_histogram(&s, &a, 1e-9, (-1e-6, 1e-6)).unwrap();
    let g = normalize_g2(&h, NormalizationMode::MeasuredFloor).unwrap();
    let fit = fit_histogram_decay(&h, &g, None).unwrap();
    assert!((fit.tau_b - 50e-9).abs() < 4.0 * fit.stderr + 0.5e-9, "{fit:?}");
    let d = detected_pair_rate(&h, &g).unwrap();
    assert!((d.value - 200.0).abs() < 4.0 * d.uncertainty, "{d:?}");
    // accidental floor N_s·N_as·Δt/T with N ≈ (200 + 2e4)·T
    let floor = (20_200.0f64).powi(2) * 1e-9 * 300.0;
    assert!((g.floor.value / floor - 1.0).abs() < 0.02, "{:?} vs {floor}", g.floor);
    assert!(g.g2_max.value > 5.0);
}

#[test]
fn heralded_single_photons_are_antibunched() {
    // every anti-Stokes photon goes to exactly one of the two detectors
    let (s, a) = correlated(2e4, 20e-9, 0.0, 20.0, 3);
    let (b1, b2) = split_stream(&a, 0.5, 4).unwrap();
    let widths = [10e-9, 50e-9, 200e-9];
    let r = conditional_g2(&s, &b1, &b2, &widths, 0.0).unwrap();
    for g in &r.g2c {
        assert!(g.value < 0.05, "{r:?}");
    }
}

#[test]
fn heralded_coherent_light_is_poissonian() {
    let dur = 100_000_000_000_000u64;
    let h = add_background(&ClickStream::empty(0, dur), 5e4, 0.0, 1).unwrap();
    let b1 = add_background(&ClickStream::empty(1, dur), 2e5, 0.0, 2).unwrap();
    let b2 = add_background(&ClickStream::empty(2, dur), 2e5, 0.0, 3).unwrap();
    let r = conditional_g2(&h, &b1, &b2, &[500e-9, 1e-6], 0.0).unwrap();
    for g in &r.g2c {
        assert!((g.value - 1.0).abs() < 0.05, "{r:?}");
    }
}

#[test]
fn back_out_inverts_the_detection_efficiencies() {
    let cfg = common::calibrated();
    use biphoton::config::Arm;
    let eta = cfg.efficiency(Arm::Stokes) * cfg.efficiency(Arm::AntiStokes);
    let r = back_out_generation_rate(123.0 * eta, &cfg).unwrap();
    assert!((r - 123.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn cs_factor_is_square_over_product(g in 1.0f64..100.0, a in 0.5f64..3.0, b in 0.5f64..3.0) {
        let m = |v| Measured::new(v, 0.1);
        let c = cs_violation(m(g), m(a), m(b)).unwrap();
        prop_assert!((c.violation_factor.value - g * g / (a * b)).abs() <= 1e-12 * g * g / (a * b));
        prop_assert_eq!(c.verdict == Verdict::Violated, g * g > a * b);
    }

    #[test]
    fn common_shift_leaves_histogram_unchanged(
        mut s in prop::collection::vec(0u64..10_000_000, 1..300),
        mut a in prop::collection::vec(0u64..10_000_000, 1..300),
        shift in 0u64..1_000_000_000,
    ) {
        s.sort_unstable();
        a.sort_unstable();
        let cs = ClickStream::new(0, s.clone(), 20_000_000).unwrap();
        let ca = ClickStream::new(1, a.clone(), 20_000_000).unwrap();
        let h0 = coincidence_histogram(&cs, &ca, 1e-9, (-1e-6, 1e-6)).unwrap();
        let h1 = coincidence_histogram(&cs.shifted(shift), &ca.shifted(shift), 1e-9, (-1e-6, 1e-6)).unwrap();
        prop_assert_eq!(h0.counts, h1.counts);
    }

    #[test]
    fn swapping_arms_mirrors_the_histogram(
        mut s in prop::collection::vec(0u64..10_000_000, 1..300),
        mut a in prop::collection::vec(0u64..10_000_000, 1..300),
    ) {
        s.sort_unstable();
        a.sort_unstable();
        let cs = ClickStream::new(0, s, 20_000_000).unwrap();
        let ca = ClickStream::new(1, a, 20_000_000).unwrap();
        // symmetric window with odd bin alignment: [-100 ns, 100 ns) in 1 ns bins
        let h = coincidence_histogram(&cs, &ca, 1e-9, (-100e-9, 100e-9)).unwrap();
        let m = coincidence_histogram(&ca, &cs, 1e-9, (-100e-9, 100e-9)).unwrap();
        // Δ in [k, k+1) ns maps to −Δ in (−k−1, −k]: equal except on exact bin edges
        let edge = |x: &ClickStream, y: &ClickStream| {
            x.timestamps.iter().any(|&p| y.timestamps.iter().any(|&q| (q as i64 - p as i64).rem_euclid(1000) == 0 && (q as i64 - p as i64).abs() <= 100_000))
        };
        if !edge(&cs, &ca) {
            let rev: Vec<u64> = m.counts.iter().rev().copied().collect();
            prop_assert_eq!(h.counts, rev);
        }
    }
}
