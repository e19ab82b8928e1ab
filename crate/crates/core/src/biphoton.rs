//! Joint spectral amplitude, temporal waveform and waveform metrics.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FilterChannel};
use crate::constants::{C, EPS0, TWO_PI};
use crate::error::{Error, Result};
use crate::quadrature::VelocityQuadrature;
use crate::spectral::{
    absorption, averaged_chi_as_chi3, averaged_chi_s, filter_power_transmission, longitudinal_profile,
    phase_mismatch, wavevector, ComplexSpectrum, DetuningGrid, MediumParams, SpectrumLabel,
};

/// Largest half grid size accepted by the auto-sizer.
const MAX_HALF_POINTS: usize = 1 << 20;

#[derive(Clone, Debug)]
pub struct JointSpectralAmplitude {
    pub grid: DetuningGrid,
    pub values: Vec<C64>,
    pub config_fingerprint: String,
    /// Pairs/s per unit of Σ|JSA|²Δδ/2π.
    pub rate_constant: f64,
}

impl JointSpectralAmplitude {
    /// Σ|JSA|²Δδ/(2π).
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.step / TWO_PI
    }

    pub fn as_spectrum(&self) -> ComplexSpectrum {
        ComplexSpectrum { grid: self.grid, values: self.values.clone(), label: SpectrumLabel::Jsa }
    }
}

/// Intermediate spectra used to build a joint spectrum.
#[derive(Clone, Debug)]
pub struct SpectralComponents {
    pub chi_as: ComplexSpectrum,
    pub chi_s: Option<ComplexSpectrum>,
    pub chi3: ComplexSpectrum,
    pub k_as: ComplexSpectrum,
    pub k_s: ComplexSpectrum,
    pub delta_k: ComplexSpectrum,
    pub phi: ComplexSpectrum,
}

#[derive(Clone, Debug)]
pub struct BiphotonWaveform {
    /// τ_m = (m − M)·tau_step, τ = t_as − t_s.
    pub half_points: usize,
    pub tau_step: f64,
    pub psi: Vec<C64>,
    /// |ψ|² scaled to pairs/s per s.
    pub rate_density: Vec<f64>,
    pub config_fingerprint: String,
}

impl BiphotonWaveform {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn tau(&self, m: usize) -> f64 {
        (m as f64 - self.half_points as f64) * self.tau_step
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.len()).map(|m| self.tau(m)).collect()
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.psi.iter().map(|p| p.norm_sqr()).collect()
    }

    pub fn peak_index(&self) -> usize {
        argmax(&self.intensity())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub tau_b: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformMetrics {
    pub decay_constant: f64,
    pub one_over_e_time: f64,
    pub bandwidth: f64,
    pub peak_time: f64,
    pub pair_rate: f64,
    pub fit_stderr: f64,
    /// FWHM of |JSA|² in Hz.
    pub spectral_fwhm: f64,
    /// one_over_e_time·spectral_fwhm·2π; equals 1 for a Lorentzian line.
    pub time_bandwidth_ratio: f64,
    pub config_fingerprint: String,
}

#[derive(Clone, Debug)]
pub struct BiphotonSolution {
    pub jsa: JointSpectralAmplitude,
    pub waveform: BiphotonWaveform,
    pub metrics: WaveformMetrics,
    pub components: SpectralComponents,
}

/// Rough EIT linewidth: γ₁₂ plus the Doppler-averaged power broadening.
pub fn eit_width_estimate(p: &MediumParams) -> f64 {
    p.gamma12 + p.omega_c * p.omega_c / (4.0 * (p.gamma13 + p.k_as * p.sigma_v()))
}

/// Chooses a detuning grid covering the EIT window and the filter passbands.
pub fn auto_grid(cfg: &ExperimentConfig) -> Result<DetuningGrid> {
    let p = MediumParams::from_config(cfg)?;
    if p.omega_c <= 0.0 {
        return Err(Error::Numerical("EIT window unresolvable: coupling Rabi frequency is zero".into()));
    }
    let w = eit_width_estimate(&p);
    let half = cfg.model.grid_half_span.unwrap_or_else(|| {
        (20.0 * w).max(5.0 * TWO_PI * cfg.filters.anti_stokes.bandwidth).max(TWO_PI * 400e6)
    });
    let m = match cfg.model.grid_half_points {
        Some(m) => m,
        None => {
            let need = (half / (0.1 * w)).ceil();
            if !(need.is_finite() && need <= MAX_HALF_POINTS as f64) {
                return Err(Error::Numerical(format!(
                    "EIT window unresolvable: width {:.3e} rad/s needs more than {MAX_HALF_POINTS} points",
                    w
                )));
            }
            (need as usize).next_power_of_two().max(cfg.model.min_half_points)
        }
    };
    DetuningGrid::from_half_span(half, m)
}

pub fn default_quadrature(cfg: &ExperimentConfig) -> Result<VelocityQuadrature> {
    VelocityQuadrature::shifted(cfg.model.quadrature_order, cfg.model.contour_shift)
}

fn filter_amplitude(delta: f64, ch: &FilterChannel) -> f64 {
    (filter_power_transmission(delta, ch) / ch.transmission).sqrt()
}

fn peak_field(power: f64, diameter: f64) -> f64 {
    let w = diameter / 2.0;
    (2.0 * 2.0 * power / (std::f64::consts::PI * w * w) / (C * EPS0)).sqrt()
}

/// Joint spectrum on the auto-sized grid.
pub fn joint_spectrum(cfg: &ExperimentConfig) -> Result<JointSpectralAmplitude> {
    let grid = auto_grid(cfg)?;
    Ok(joint_spectrum_on(cfg, &grid, &default_quadrature(cfg)?)?.0)
}

/// JSA(δ) = κ(δ)·Φ(δ)·a_as(δ)·a_s(−δ) with κ ∝ √(ω_sω_as)/(2c)·χ³·E_p·E_c.
/// Filter amplitudes are normalized to unit peak; their transmissions are
/// accounted as detection efficiency.
pub fn joint_spectrum_on(
    cfg: &ExperimentConfig,
    grid: &DetuningGrid,
    quad: &VelocityQuadrature,
) -> Result<(JointSpectralAmplitude, SpectralComponents)> {
    let p = MediumParams::from_config(cfg)?;
    let (pair, chi_s) = rayon::join(
        || averaged_chi_as_chi3(&p, grid, quad),
        || {
            if cfg.model.include_stokes_dispersion {
                averaged_chi_s(&p, grid, quad).map(Some)
            } else {
                Ok(None)
            }
        },
    );
    let ((chi_as, chi3), chi_s) = (pair?, chi_s?);
    let k_as = wavevector(&chi_as, p.omega_as0)?;
    let k_s = match &chi_s {
        Some(x) => wavevector(x, p.omega_s0)?,
        None => {
            let vac = ComplexSpectrum::new(*grid, vec![C64::new(0.0, 0.0); grid.len()], SpectrumLabel::ChiS)?;
            wavevector(&vac, p.omega_s0)?
        }
    };
    let delta_k = phase_mismatch(&k_as, &k_s, &p)?;
    let phi = longitudinal_profile(&delta_k, &absorption(&k_as), cfg.cell.length)?;

    let l = &cfg.lasers;
    let scale = (p.omega_s0 * p.omega_as0).sqrt() / (2.0 * C)
        * peak_field(l.pump_power, l.pump_diameter)
        * peak_field(l.coupling_power, l.coupling_diameter);
    let values = (0..grid.len())
        .map(|j| {
            let d = grid.value(j);
            let filt = filter_amplitude(d, &cfg.filters.anti_stokes) * filter_amplitude(-d, &cfg.filters.stokes);
            scale * chi3.values[j] * phi.values[j] * filt
        })
        .collect();
    let jsa = ComplexSpectrum::new(*grid, values, SpectrumLabel::Jsa)?;
    Ok((
        JointSpectralAmplitude {
            grid: *grid,
            values: jsa.values,
            config_fingerprint: cfg.fingerprint(),
            rate_constant: cfg.model.rate_constant,
        },
        SpectralComponents { chi_as, chi_s, chi3, k_as, k_s, delta_k, phi },
    ))
}

/// ψ(τ) = (1/2π)·Σ JSA(δ)·e^{−iδτ}·Δδ on τ_m = (m − M)·2π/(NΔδ).
pub fn waveform_from_spectrum(jsa: &JointSpectralAmplitude) -> Result<BiphotonWaveform> {
    if jsa.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("joint spectrum is not finite".into()));
    }
    let n = jsa.grid.len();
    let m = jsa.grid.half_points;
    let mut buf: Vec<C64> = (0..n).map(|k| jsa.values[(k + m) % n]).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let s = jsa.grid.step / TWO_PI;
    let psi: Vec<C64> = (0..n).map(|i| buf[(i + n - m) % n] * s).collect();
    let rate_density = psi.iter().map(|p| jsa.rate_constant * p.norm_sqr()).collect();
    Ok(BiphotonWaveform {
        half_points: m,
        tau_step: TWO_PI / (n as f64 * jsa.grid.step),
        psi,
        rate_density,
        config_fingerprint: jsa.config_fingerprint.clone(),
    })
}

/// Generated pair rate R = rate_constant·Σ|JSA|²Δδ/(2π).
pub fn pair_rate(jsa: &JointSpectralAmplitude, cfg: &ExperimentConfig) -> f64 {
    cfg.model.rate_constant * jsa.norm()
}

pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Outermost interpolated crossings of `level` around the maximum of `y`
/// sampled at x_i = x0 + i·dx.
pub(crate) fn outer_crossings(y: &[f64], x0: f64, dx: f64, level: f64) -> Option<(f64, f64)> {
    let first = y.iter().position(|&v| v >= level)?;
    let last = y.iter().rposition(|&v| v >= level)?;
    if first == 0 || last + 1 >= y.len() {
        return None;
    }
    let lo = (first - 1) as f64 + (level - y[first - 1]) / (y[first] - y[first - 1]);
    let hi = last as f64 + (y[last] - level) / (y[last] - y[last + 1]);
    Some((x0 + lo * dx, x0 + hi * dx))
}

/// Width between the first and last crossings of peak/e of |ψ|².
pub fn correlation_time_1e(w: &BiphotonWaveform) -> Result<f64> {
    let y = w.intensity();
    let peak = y[argmax(&y)];
    if !(peak > 0.0) {
        return Err(Error::Numerical("waveform is identically zero".into()));
    }
    let (a, b) = outer_crossings(&y, w.tau(0), w.tau_step, peak / std::f64::consts::E)
        .ok_or_else(|| Error::Numerical("no 1/e crossing inside the waveform grid".into()))?;
    Ok(b - a)
}

/// FWHM of |JSA|² in Hz.
pub fn spectral_fwhm(jsa: &JointSpectralAmplitude) -> Result<f64> {
    let y: Vec<f64> = jsa.values.iter().map(|v| v.norm_sqr()).collect();
    let peak = y[argmax(&y)];
    let (a, b) = outer_crossings(&y, jsa.grid.value(0), jsa.grid.step, 0.5 * peak)
        .ok_or_else(|| Error::Numerical("joint spectrum has no half-maximum crossing on the grid".into()))?;
    Ok((b - a) / TWO_PI)
}

/// Weighted least squares of ln y = a − t/τ_b with weights `w`.
pub fn fit_log_linear(t: &[f64], y: &[f64], w: &[f64]) -> Result<DecayFit> {
    let n = t.len();
    if n < 3 || y.len() != n || w.len() != n {
        return Err(Error::Numerical("degenerate fit window".into()));
    }
    if y.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numerical("log-linear fit needs positive samples".into()));
    }
    let sw: f64 = w.iter().sum();
    let tm = t.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let lm = ly.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = t.iter().zip(w).map(|(a, b)| b * (a - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&ly).zip(w).map(|((a, l), b)| b * (a - tm) * (l - lm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Numerical("degenerate fit window".into()));
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::Numerical(format!("non-decaying data (fitted slope {slope:.3e} per s)")));
    }
    let icpt = lm - slope * tm;
    let rss: f64 = t.iter().zip(&ly).zip(w).map(|((a, l), b)| b * (l - icpt - slope * a).powi(2)).sum();
    let s2 = rss / (n as f64 - 2.0);
    let slope_err = (s2 / sxx).sqrt();
    Ok(DecayFit { tau_b: -1.0 / slope, stderr: slope_err / (slope * slope), window: (t[0], t[n - 1]), points: n })
}

/// Decay constant of |ψ|² from a weighted log-linear fit. The default window
/// runs from peak + 5 ns to where the intensity falls below e⁻³ of peak.
pub fn fit_decay(w: &BiphotonWaveform, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let y = w.intensity();
    let ip = argmax(&y);
    let peak = y[ip];
    if !(peak > 0.0) {
        return Err(Error::Numerical("waveform is identically zero".into()));
    }
    let (lo, hi) = match window {
        Some(win) => win,
        None => {
            let lo = w.tau(ip) + 5e-9;
            let floor = peak * (-3.0f64).exp();
            let end = (ip..y.len()).find(|&m| y[m] < floor).unwrap_or(y.len() - 1);
            (lo, w.tau(end))
        }
    };
    if !(hi > lo) {
        return Err(Error::Numerical(format!("degenerate fit window ({lo:.3e}, {hi:.3e}) s")));
    }
    let idx: Vec<usize> = (ip..y.len()).filter(|&m| w.tau(m) >= lo && w.tau(m) <= hi).collect();
    if idx.len() < 10 {
        return Err(Error::Numerical(format!("fit window holds {} points past the peak; need 10", idx.len())));
    }
    let t: Vec<f64> = idx.iter().map(|&m| w.tau(m)).collect();
    let v: Vec<f64> = idx.iter().map(|&m| y[m]).collect();
    let wt: Vec<f64> = v.iter().map(|x| x / peak).collect();
    fit_log_linear(&t, &v, &wt)
}

/// Metrics of a computed waveform.
pub fn waveform_metrics(jsa: &JointSpectralAmplitude, w: &BiphotonWaveform, cfg: &ExperimentConfig) -> Result<WaveformMetrics> {
    let fit = fit_decay(w, None)?;
    let span = w.len() as f64 * w.tau_step;
    if span < 10.0 * fit.tau_b {
        return Err(Error::Numerical(format!(
            "insufficient grid span: τ span {:.3e} s is below 10× the decay constant {:.3e} s",
            span, fit.tau_b
        )));
    }
    let t1e = correlation_time_1e(w)?;
    let fwhm = spectral_fwhm(jsa)?;
    Ok(WaveformMetrics {
        decay_constant: fit.tau_b,
        one_over_e_time: t1e,
        bandwidth: 1.0 / (TWO_PI * fit.tau_b),
        peak_time: w.tau(w.peak_index()),
        pair_rate: pair_rate(jsa, cfg),
        fit_stderr: fit.stderr,
        spectral_fwhm: fwhm,
        time_bandwidth_ratio: t1e * fwhm * TWO_PI,
        config_fingerprint: cfg.fingerprint(),
    })
}

/// Full spectral and temporal solution on an explicit grid and quadrature.
pub fn solve_on(cfg: &ExperimentConfig, grid: &DetuningGrid, quad: &VelocityQuadrature) -> Result<BiphotonSolution> {
    let (jsa, components) = joint_spectrum_on(cfg, grid, quad)?;
    if !(jsa.norm() > 0.0) {
        return Err(Error::Numerical("joint spectrum vanishes (zero density or pump power)".into()));
    }
    let waveform = waveform_from_spectrum(&jsa)?;
    let metrics = waveform_metrics(&jsa, &waveform, cfg)?;
    Ok(BiphotonSolution { jsa, waveform, metrics, components })
}

/// Full solution with the auto-sized grid and the configured quadrature.
pub fn solve(cfg: &ExperimentConfig) -> Result<BiphotonSolution> {
    solve_on(cfg, &auto_grid(cfg)?, &default_quadrature(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentzian_jsa(gamma: f64, m: usize, step: f64) -> JointSpectralAmplitude {
        let grid = DetuningGrid::new(m, step).unwrap();
        let values = (0..grid.len()).map(|j| 1.0 / C64::new(grid.value(j), gamma)).collect();
        JointSpectralAmplitude { grid, values, config_fingerprint: String::new(), rate_constant: 1.0 }
    }

    #[test]
    fn parseval_holds() {
        let jsa = lorentzian_jsa(TWO_PI * 1e6, 2048, TWO_PI * 100e3);
        let w = waveform_from_spectrum(&jsa).unwrap();
        let lhs: f64 = w.intensity().iter().sum::<f64>() * w.tau_step;
        assert!((lhs / jsa.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lorentzian_decay_matches_analytic_pair() {
        let gamma = TWO_PI * 1e6;
        let jsa = lorentzian_jsa(gamma, 4096, TWO_PI * 50e3);
        let w = waveform_from_spectrum(&jsa).unwrap();
        let fit = fit_decay(&w, Some((20e-9, 500e-9))).unwrap();
        assert!((fit.tau_b * 2.0 * gamma - 1.0).abs() < 0.01, "{}", fit.tau_b);
        // causal: almost nothing before τ = 0
        let y = w.intensity();
        let early: f64 = (0..w.half_points - 2).map(|m| y[m]).sum();
        let total: f64 = y.iter().sum();
        assert!(early / total < 0.01);
    }

    #[test]
    fn flat_spectrum_gives_spike() {
        let grid = DetuningGrid::new(512, 1e6).unwrap();
        let jsa = JointSpectralAmplitude {
            grid,
            values: vec![C64::new(1.0, 0.0); grid.len()],
            config_fingerprint: String::new(),
            rate_constant: 1.0,
        };
        let w = waveform_from_spectrum(&jsa).unwrap();
        let y = w.intensity();
        let ip = argmax(&y);
        assert_eq!(ip, w.half_points);
        let total: f64 = y.iter().sum();
        assert!(y[ip] / total > 0.999);
    }

    #[test]
    fn noiseless_exponential_fit() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 1e-9).collect();
        let y: Vec<f64> = t.iter().map(|x| 3.0 * (-x / 50e-9).exp()).collect();
        let fit = fit_log_linear(&t, &y, &vec![1.0; t.len()]).unwrap();
        assert!((fit.tau_b / 50e-9 - 1.0).abs() < 1e-6);
        let up: Vec<f64> = t.iter().map(|x| (x / 50e-9).exp()).collect();
        assert!(fit_log_linear(&t, &up, &vec![1.0; t.len()]).is_err());
    }

    #[test]
    fn crossing_interpolation() {
        // triangle peak 1 at index 5, half level crossings at 2.5 and 7.5
        let y: Vec<f64> = (0..11).map(|i| 1.0 - (i as f64 - 5.0).abs() / 5.0).collect();
        let (a, b) = outer_crossings(&y, 0.0, 1.0, 0.5).unwrap();
        assert!((a - 2.5).abs() < 1e-12 && (b - 7.5).abs() < 1e-12);
    }
}
