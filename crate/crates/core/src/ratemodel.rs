//! Rate-ratio model of the peak cross-correlation:
//! g2m ≈ 1 + S/(R_s·R_as·Δt), with S the true-coincidence rate landing in
//! the most populated bin and R_s, R_as the total singles rates.

use serde::{Deserialize, Serialize};

use crate::biphoton::BiphotonWaveform;
use crate::config::{Arm, ExperimentConfig};
use crate::detection::DelaySampler;
use crate::error::{Error, Result};
use crate::quadrature::VelocityQuadrature;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    pub pair_rate: f64,
    pub singles_s: f64,
    pub singles_as: f64,
    pub peak_bin_fraction: f64,
    pub bin_width: f64,
    pub g2_max: f64,
}

/// Largest probability mass of the delay distribution, smeared by the
/// two-detector timing jitter, in any histogram bin [kΔt, (k+1)Δt).
pub fn peak_bin_fraction(w: &BiphotonWaveform, bin_width: f64, jitter_sigma: f64) -> Result<f64> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidInput("bin width must be > 0".into()));
    }
    let sampler = DelaySampler::new(w)?;
    let sigma = std::f64::consts::SQRT_2 * jitter_sigma.max(0.0);
    let gh = VelocityQuadrature::gauss_hermite(24)?;
    let center = (w.tau(w.peak_index()) / bin_width).floor() as i64;
    let mut best = 0.0f64;
    for k in center - 30..=center + 30 {
        let (a, b) = (k as f64 * bin_width, (k + 1) as f64 * bin_width);
        let m = if sigma > 0.0 {
            gh.nodes
                .iter()
                .zip(&gh.weights)
                .map(|(x, wt)| wt.re * sampler.mass(a - sigma * x.re, b - sigma * x.re))
                .sum()
        } else {
            sampler.mass(a, b)
        };
        best = best.max(m);
    }
    Ok(best)
}

/// Singles rate of one arm summed over its two detectors.
pub fn singles_rate(cfg: &ExperimentConfig, arm: Arm, pair_rate: f64) -> f64 {
    cfg.efficiency(arm) * pair_rate + cfg.noise_rate(arm) + 2.0 * cfg.dark_rate(arm)
}

pub fn rate_budget(cfg: &ExperimentConfig, w: &BiphotonWaveform, pair_rate: f64, bin_width: f64) -> Result<RateBudget> {
    let p = peak_bin_fraction(w, bin_width, cfg.detectors.timing_jitter_sigma)?;
    let rs = singles_rate(cfg, Arm::Stokes, pair_rate);
    let ra = singles_rate(cfg, Arm::AntiStokes, pair_rate);
    let s = pair_rate * cfg.efficiency(Arm::Stokes) * cfg.efficiency(Arm::AntiStokes) * p;
    if !(rs > 0.0 && ra > 0.0) {
        return Err(Error::Statistics("zero singles rate".into()));
    }
    Ok(RateBudget {
        pair_rate,
        singles_s: rs,
        singles_as: ra,
        peak_bin_fraction: p,
        bin_width,
        g2_max: 1.0 + s / (rs * ra * bin_width),
    })
}

/// Raman background (at the reference powers, before suppression)
/// that makes the modeled g2m equal `target`; zero if even a noiseless
/// anti-Stokes arm falls short.
pub fn raman_for_g2_max(cfg: &ExperimentConfig, w: &BiphotonWaveform, pair_rate: f64, bin_width: f64, target: f64) -> Result<f64> {
    if !(target > 1.0) {
        return Err(Error::InvalidInput(format!("g2m target {target} must exceed 1")));
    }
    let b = rate_budget(cfg, w, pair_rate, bin_width)?;
    let s = pair_rate * cfg.efficiency(Arm::Stokes) * cfg.efficiency(Arm::AntiStokes) * b.peak_bin_fraction;
    let ra_needed = s / ((target - 1.0) * b.singles_s * bin_width);
    let fixed = cfg.efficiency(Arm::AntiStokes) * pair_rate + 2.0 * cfg.dark_rate(Arm::AntiStokes);
    let per_unit = cfg.raman_scale();
    if !(per_unit > 0.0) {
        return Err(Error::InvalidInput("laser power is zero; Raman background has no effect".into()));
    }
    Ok(((ra_needed - fixed) / per_unit).max(0.0))
}
