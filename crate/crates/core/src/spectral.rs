//! Linear and third-order response of the Doppler-broadened Λ medium.
//!
//! Sign conventions: every beam has a signed wavevector along the cell axis
//! (anti-Stokes and coupling +z, pump and Stokes −z) and an atom moving with
//! axial velocity v sees the detuning Δ − k·v. Susceptibilities follow the
//! e^{−iωt} convention, so a passive medium has Im χ ≥ 0.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{thermal_velocity, ExperimentConfig, FilterChannel};
use crate::constants::{C, EPS0, HBAR, TWO_PI};
use crate::error::{Error, Result};
use crate::quadrature::VelocityQuadrature;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Uniform detuning grid with 2M+1 points δ_j = (j − M)·step, symmetric about 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetuningGrid {
    pub half_points: usize,
    pub step: f64,
}

impl DetuningGrid {
    pub fn new(half_points: usize, step: f64) -> Result<Self> {
        if half_points == 0 || !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid grid: M={half_points}, step={step}")));
        }
        Ok(Self { half_points, step })
    }

    pub fn from_half_span(half_span: f64, half_points: usize) -> Result<Self> {
        Self::new(half_points, half_span / half_points as f64)
    }

    pub fn len(&self) -> usize {
        2 * self.half_points + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_span(&self) -> f64 {
        self.half_points as f64 * self.step
    }

    pub fn value(&self, j: usize) -> f64 {
        (j as f64 - self.half_points as f64) * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.value(j)).collect()
    }

    /// Index of −δ_j.
    pub fn mirror(&self, j: usize) -> usize {
        self.len() - 1 - j
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumLabel {
    ChiAs,
    ChiS,
    Chi3,
    KAs,
    KS,
    DeltaK,
    Phi,
    Jsa,
}

impl SpectrumLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpectrumLabel::ChiAs => "chi_as",
            SpectrumLabel::ChiS => "chi_s",
            SpectrumLabel::Chi3 => "chi3",
            SpectrumLabel::KAs => "k_as",
            SpectrumLabel::KS => "k_s",
            SpectrumLabel::DeltaK => "delta_k",
            SpectrumLabel::Phi => "phi",
            SpectrumLabel::Jsa => "jsa",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComplexSpectrum {
    pub grid: DetuningGrid,
    pub values: Vec<C64>,
    pub label: SpectrumLabel,
}

impl ComplexSpectrum {
    pub fn new(grid: DetuningGrid, values: Vec<C64>, label: SpectrumLabel) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "spectrum has {} values for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "{} is not finite at detuning {} rad/s",
                label.as_str(),
                grid.value(j)
            )));
        }
        Ok(Self { grid, values, label })
    }

    pub fn at_center(&self) -> C64 {
        self.values[self.grid.half_points]
    }
}

#[derive(Clone, Debug)]
pub struct RealSpectrum {
    pub grid: DetuningGrid,
    pub values: Vec<f64>,
}

/// Parameters of the medium derived from an experiment configuration.
#[derive(Clone, Debug)]
pub struct MediumParams {
    pub density: f64,
    pub gamma13: f64,
    /// Excited-state decoherence on the Stokes (D2) leg.
    pub gamma13_s: f64,
    pub gamma12: f64,
    pub omega_c: f64,
    pub delta_c: f64,
    pub delta_p: f64,
    pub k_p: f64,
    pub k_c: f64,
    pub k_s: f64,
    pub k_as: f64,
    pub omega_as0: f64,
    pub omega_s0: f64,
    /// C = n·d₁²/(ε₀ħ).
    pub chi_prefactor: f64,
    /// C' = n·d₂²/(ε₀ħ).
    pub chi_prefactor_s: f64,
    /// C₃ = C·γ₁₃.
    pub chi3_prefactor: f64,
    /// Axial wavevector supplied by pump and coupling, chosen so the central
    /// frequencies are phase matched in vacuum at zero angle.
    pub pair_axis_reference: f64,
    pub temperature: f64,
    pub mass: f64,
}

impl MediumParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let density = cfg.density()?;
        let sp = &cfg.species;
        let omega_as0 = TWO_PI * C / sp.d1_wavelength;
        let omega_s0 = TWO_PI * C / sp.d2_wavelength;
        let whf = sp.ground_hyperfine_splitting;
        let gamma13 = cfg.gamma13();
        let chi_prefactor = density * sp.dipole_moment_d1.powi(2) / (EPS0 * HBAR);
        let p = Self {
            density,
            gamma13,
            gamma13_s: cfg.gamma13_d2(),
            gamma12: cfg.cell.ground_decoherence_rate,
            omega_c: cfg.coupling_rabi(),
            delta_c: cfg.lasers.coupling_detuning,
            delta_p: cfg.lasers.pump_detuning,
            k_p: -(omega_s0 + whf) / C,
            k_c: (omega_as0 - whf) / C,
            k_s: -omega_s0 / C,
            k_as: omega_as0 / C,
            omega_as0,
            omega_s0,
            chi_prefactor,
            chi_prefactor_s: density * sp.dipole_moment_d2.powi(2) / (EPS0 * HBAR),
            chi3_prefactor: chi_prefactor * gamma13,
            pair_axis_reference: (omega_as0 - omega_s0) / C * cfg.lasers.alignment_angle.cos(),
            temperature: cfg.cell.temperature,
            mass: sp.mass,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma13 > 0.0 && self.gamma13_s > 0.0) {
            return Err(Error::InvalidInput("gamma13 must be > 0".into()));
        }
        if self.k_p * self.k_c >= 0.0 {
            return Err(Error::InvalidInput("pump and coupling must counter-propagate".into()));
        }
        if self.k_s * self.k_as >= 0.0 {
            return Err(Error::InvalidInput("Stokes and anti-Stokes must counter-propagate".into()));
        }
        if self.k_as <= 0.0 {
            return Err(Error::InvalidInput("anti-Stokes defines the +z axis".into()));
        }
        Ok(())
    }

    pub fn sigma_v(&self) -> f64 {
        thermal_velocity(self.temperature, self.mass)
    }

    /// Shared Λ-system denominator (δ₁ + iγ₁₃)(δ₂ + iγ₁₂) − Ωc²/4.
    pub fn eit_denominator(&self, delta: f64, v: C64) -> C64 {
        let d1 = delta - self.k_as * v + I * self.gamma13;
        let d2 = self.two_photon(delta, v) + I * self.gamma12;
        d1 * d2 - 0.25 * self.omega_c * self.omega_c
    }

    fn two_photon(&self, delta: f64, v: C64) -> C64 {
        delta - self.delta_c - (self.k_as - self.k_c) * v
    }

    pub fn chi_eit_c(&self, delta: f64, v: C64) -> C64 {
        -self.chi_prefactor * (self.two_photon(delta, v) + I * self.gamma12) / self.eit_denominator(delta, v)
    }

    /// `delta_s` is the Stokes detuning from ω_s0.
    pub fn chi_stokes_c(&self, delta_s: f64, v: C64) -> C64 {
        -self.chi_prefactor_s / (delta_s + self.delta_p - self.k_s * v + I * self.gamma13_s)
    }

    fn pump_factor(&self, v: C64) -> C64 {
        self.delta_p - self.k_p * v + I * self.gamma13
    }

    pub fn chi3_c(&self, delta: f64, v: C64) -> C64 {
        self.chi3_prefactor / (self.pump_factor(v) * self.eit_denominator(delta, v))
    }

    /// Complex velocity class resonant with the pump leg.
    pub fn pump_pole(&self) -> C64 {
        (self.delta_p + I * self.gamma13) / self.k_p
    }
}

/// Anti-Stokes susceptibility of one velocity class.
pub fn chi_eit(delta: f64, velocity: f64, p: &MediumParams) -> C64 {
    p.chi_eit_c(delta, C64::new(velocity, 0.0))
}

/// Stokes susceptibility of one velocity class; `delta` is the Stokes detuning.
pub fn chi_stokes(delta: f64, velocity: f64, p: &MediumParams) -> C64 {
    p.chi_stokes_c(delta, C64::new(velocity, 0.0))
}

/// Third-order SFWM coupling of one velocity class.
pub fn chi3_sfwm(delta: f64, velocity: f64, p: &MediumParams) -> C64 {
    p.chi3_c(delta, C64::new(velocity, 0.0))
}

/// Σ wᵢ·kernel(δ, σ_v·xᵢ) on every grid point, with σ_v = √(k_B T/m).
///
/// The kernel receives a complex velocity when the quadrature contour is
/// shifted; it must be analytic between the real axis and the contour.
pub fn doppler_average<K>(
    kernel: K,
    temperature: f64,
    mass: f64,
    grid: &DetuningGrid,
    quad: &VelocityQuadrature,
    label: SpectrumLabel,
) -> Result<ComplexSpectrum>
where
    K: Fn(f64, C64) -> C64 + Sync,
{
    let sigma = thermal_velocity(temperature.max(0.0), mass);
    let velocities: Vec<C64> = quad.nodes.iter().map(|x| x * sigma).collect();
    let values: Vec<C64> = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let delta = grid.value(j);
            velocities
                .iter()
                .zip(&quad.weights)
                .map(|(&v, w)| w * kernel(delta, v))
                .sum()
        })
        .collect();
    ComplexSpectrum::new(*grid, values, label)
}

/// Doppler-averaged anti-Stokes susceptibility. EIT poles sit in the upper
/// half velocity plane, so the contour is shifted downward.
pub fn averaged_chi_as(p: &MediumParams, grid: &DetuningGrid, quad: &VelocityQuadrature) -> Result<ComplexSpectrum> {
    let q = downward(quad);
    doppler_average(|d, v| p.chi_eit_c(d, v), p.temperature, p.mass, grid, &q, SpectrumLabel::ChiAs)
}

/// Doppler-averaged Stokes susceptibility on the Stokes detuning grid. Its
/// only pole is in the lower half plane, so the contour is shifted upward.
pub fn averaged_chi_s(p: &MediumParams, grid: &DetuningGrid, quad: &VelocityQuadrature) -> Result<ComplexSpectrum> {
    let q = downward(quad).mirrored();
    doppler_average(|d, v| p.chi_stokes_c(d, v), p.temperature, p.mass, grid, &q, SpectrumLabel::ChiS)
}

/// Doppler-averaged χ³. A downward contour crosses the pump-leg pole, whose
/// residue is added back exactly.
pub fn averaged_chi3(p: &MediumParams, grid: &DetuningGrid, quad: &VelocityQuadrature) -> Result<ComplexSpectrum> {
    let q = downward(quad);
    let s = doppler_average(|d, v| p.chi3_c(d, v), p.temperature, p.mass, grid, &q, SpectrumLabel::Chi3)?;
    chi3_residue(p, s, q.shift)
}

/// χ_as and χ³ in one pass over the shared EIT denominator.
pub fn averaged_chi_as_chi3(
    p: &MediumParams,
    grid: &DetuningGrid,
    quad: &VelocityQuadrature,
) -> Result<(ComplexSpectrum, ComplexSpectrum)> {
    let q = downward(quad);
    let sigma = p.sigma_v();
    let nodes: Vec<(C64, C64, C64)> = q
        .nodes
        .iter()
        .zip(&q.weights)
        .map(|(x, w)| {
            let v = x * sigma;
            (v, *w, p.chi3_prefactor / p.pump_factor(v))
        })
        .collect();
    let (a, b): (Vec<C64>, Vec<C64>) = (0..grid.len())
        .into_par_iter()
        .map(|j| {
            let delta = grid.value(j);
            let mut sa = C64::new(0.0, 0.0);
            let mut s3 = C64::new(0.0, 0.0);
            for &(v, w, pf) in &nodes {
                let wd = w / p.eit_denominator(delta, v);
                sa -= wd * (p.two_photon(delta, v) + I * p.gamma12);
                s3 += wd * pf;
            }
            (sa * p.chi_prefactor, s3)
        })
        .unzip();
    let chi_as = ComplexSpectrum::new(*grid, a, SpectrumLabel::ChiAs)?;
    let chi3 = chi3_residue(p, ComplexSpectrum::new(*grid, b, SpectrumLabel::Chi3)?, q.shift)?;
    Ok((chi_as, chi3))
}

fn chi3_residue(p: &MediumParams, mut s: ComplexSpectrum, shift: f64) -> Result<ComplexSpectrum> {
    let grid = s.grid;
    let sigma = p.sigma_v();
    let vp = p.pump_pole();
    if sigma > 0.0 && vp.im < 0.0 && vp.im > -shift * sigma {
        let rho = (-vp * vp / (2.0 * sigma * sigma)).exp() / ((TWO_PI).sqrt() * sigma);
        for (j, val) in s.values.iter_mut().enumerate() {
            let res = rho * p.chi3_prefactor / (-p.k_p * p.eit_denominator(grid.value(j), vp));
            *val -= TWO_PI * I * res;
        }
        s = ComplexSpectrum::new(s.grid, s.values, s.label)?;
    }
    Ok(s)
}

fn downward(quad: &VelocityQuadrature) -> VelocityQuadrature {
    if quad.shift < 0.0 {
        quad.mirrored()
    } else {
        quad.clone()
    }
}

/// k(δ) = ((ω₀+δ)/c)·√(1+χ(δ)), principal branch.
pub fn wavevector(chi: &ComplexSpectrum, center_frequency: f64) -> Result<ComplexSpectrum> {
    let label = match chi.label {
        SpectrumLabel::ChiS => SpectrumLabel::KS,
        _ => SpectrumLabel::KAs,
    };
    let values = chi
        .values
        .iter()
        .enumerate()
        .map(|(j, x)| (center_frequency + chi.grid.value(j)) / C * (1.0 + x).sqrt())
        .collect();
    ComplexSpectrum::new(chi.grid, values, label)
}

/// Δk(δ) = Re k_as(δ) − Re k_s(−δ) − pair-axis reference. `k_s` is on the
/// Stokes detuning grid (ω_s = ω_s0 + δ_s) with positive real part.
pub fn phase_mismatch(k_as: &ComplexSpectrum, k_s: &ComplexSpectrum, p: &MediumParams) -> Result<ComplexSpectrum> {
    if k_as.grid != k_s.grid {
        return Err(Error::InvalidInput("phase_mismatch: k spectra on different grids".into()));
    }
    let g = k_as.grid;
    let values = (0..g.len())
        .map(|j| C64::new(k_as.values[j].re - k_s.values[g.mirror(j)].re - p.pair_axis_reference, 0.0))
        .collect();
    ComplexSpectrum::new(g, values, SpectrumLabel::DeltaK)
}

/// sin(x)/x with the removable singularity handled exactly.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Φ(δ) = sinc(ΔkL/2)·exp(iΔkL/2)·exp(−αL/2).
pub fn longitudinal_profile(delta_k: &ComplexSpectrum, absorption: &RealSpectrum, length: f64) -> Result<ComplexSpectrum> {
    if delta_k.grid != absorption.grid {
        return Err(Error::InvalidInput("longitudinal_profile: grid mismatch".into()));
    }
    let values = delta_k
        .values
        .iter()
        .zip(&absorption.values)
        .map(|(dk, a)| {
            let x = 0.5 * dk.re * length;
            sinc(x) * C64::from_polar(1.0, x) * (-0.5 * a * length).exp()
        })
        .collect();
    ComplexSpectrum::new(delta_k.grid, values, SpectrumLabel::Phi)
}

/// α(δ) = Im k(δ).
pub fn absorption(k: &ComplexSpectrum) -> RealSpectrum {
    RealSpectrum { grid: k.grid, values: k.values.iter().map(|v| v.im).collect() }
}

/// Intensity transmission exp(−2·Im k·L) of the anti-Stokes field.
pub fn eit_transmission(chi_as: &ComplexSpectrum, center_frequency: f64, length: f64) -> Result<RealSpectrum> {
    let k = wavevector(chi_as, center_frequency)?;
    Ok(RealSpectrum {
        grid: k.grid,
        values: k.values.iter().map(|v| (-2.0 * v.im * length).exp().min(1.0)).collect(),
    })
}

/// Power transmission of a Lorentzian-squared etalon line with the given FWHM
/// and peak transmission, periodic with the free spectral range.
/// `delta` is an angular detuning in rad/s.
pub fn filter_power_transmission(delta: f64, ch: &FilterChannel) -> f64 {
    let fsr = TWO_PI * ch.free_spectral_range;
    let d = delta - fsr * (delta / fsr).round();
    let x = 2.0 * d / (TWO_PI * ch.bandwidth) * (std::f64::consts::SQRT_2 - 1.0).sqrt();
    let l = 1.0 + x * x;
    ch.transmission / (l * l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_average_matches_separate() {
        let p = params(27e-3);
        let grid = DetuningGrid::new(256, TWO_PI * 2e5).unwrap();
        let q = VelocityQuadrature::shifted(64, 1.5).unwrap();
        let (a, b) = averaged_chi_as_chi3(&p, &grid, &q).unwrap();
        let a0 = averaged_chi_as(&p, &grid, &q).unwrap();
        let b0 = averaged_chi3(&p, &grid, &q).unwrap();
        for j in 0..grid.len() {
            assert!((a.values[j] - a0.values[j]).norm() <= 1e-12 * a0.values[j].norm().max(1e-30));
            assert!((b.values[j] - b0.values[j]).norm() <= 1e-12 * b0.values[j].norm().max(1e-30));
        }
    }

    fn params(pc: f64) -> MediumParams {
        MediumParams::from_config(&ExperimentConfig::with_powers(6e-3, pc)).unwrap()
    }

    #[test]
    fn passive_signs_and_geometry() {
        let p = params(27e-3);
        assert!(p.k_p * p.k_c < 0.0 && p.k_s * p.k_as < 0.0);
        for &d in &[-1e8, -1e6, 0.0, 3e6, 1e9] {
            for &v in &[-300.0, 0.0, 12.0, 400.0] {
                assert!(chi_eit(d, v, &p).im >= 0.0);
                assert!(chi_stokes(d, v, &p).im >= 0.0);
            }
        }
    }

    #[test]
    fn two_level_limit() {
        let mut p = params(27e-3);
        p.omega_c = 0.0;
        for &d in &[-5e7, 0.0, 1e6, 2e8] {
            for &v in &[-100.0, 0.0, 55.0] {
                let two = -p.chi_prefactor / (d - p.k_as * v + I * p.gamma13);
                let x = chi_eit(d, v, &p);
                assert!((x - two).norm() <= 1e-14 * two.norm());
            }
        }
    }

    #[test]
    fn perfect_transparency() {
        let mut p = params(27e-3);
        p.gamma12 = 0.0;
        assert_eq!(chi_eit(0.0, 0.0, &p), C64::new(0.0, 0.0));
    }

    #[test]
    fn stokes_far_detuned_ratio() {
        let p = params(27e-3);
        let ratio = chi_stokes(0.0, 0.0, &p).im / (p.chi_prefactor_s / p.gamma13_s);
        let expect = (p.gamma13_s / p.delta_p).powi(2);
        assert!((ratio / expect - 1.0).abs() < 1e-5);
        assert!(ratio < 1e-4);
    }

    #[test]
    fn chi3_pump_detuning_scaling() {
        let mut p = params(27e-3);
        let a = chi3_sfwm(1e5, 0.0, &p).norm();
        p.delta_p *= 2.0;
        let b = chi3_sfwm(1e5, 0.0, &p).norm();
        assert!((a / b - 2.0).abs() < 1e-5);
    }

    #[test]
    fn sinc_half_power() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(std::f64::consts::PI).abs() < 1e-15);
        assert!((sinc(1.391_557_378_251_51).powi(2) - 0.5).abs() < 1e-12);
        assert!((sinc(1e-5) - (1e-5f64).sin() / 1e-5).abs() < 1e-15);
    }

    #[test]
    fn filter_has_requested_fwhm() {
        let ch = FilterChannel { bandwidth: 80e6, transmission: 0.3, extinction: 40.0, free_spectral_range: 13.6e9 };
        assert_eq!(filter_power_transmission(0.0, &ch), 0.3);
        let half = filter_power_transmission(TWO_PI * 40e6, &ch);
        assert!((half / 0.3 - 0.5).abs() < 1e-12);
        let again = filter_power_transmission(TWO_PI * 13.6e9, &ch);
        assert!((again - 0.3).abs() < 1e-12);
    }
}
