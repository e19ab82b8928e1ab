//! Experiment configuration, physical constants of the species, and the
//! helper conversions (vapor density, Rabi frequency, Doppler width).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::{AMU, C, EPS0, HBAR, KB, TORR, TWO_PI};
use crate::error::{Error, Result};
use crate::units as u;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicSpecies {
    #[serde(default = "d::mass", deserialize_with = "u::mass")]
    pub mass: f64,
    #[serde(default = "d::d1_wavelength", deserialize_with = "u::length")]
    pub d1_wavelength: f64,
    #[serde(default = "d::d2_wavelength", deserialize_with = "u::length")]
    pub d2_wavelength: f64,
    /// Γ, full natural linewidth.
    #[serde(default = "d::natural_linewidth", deserialize_with = "u::angular")]
    pub natural_linewidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "u::angular_opt")]
    pub natural_linewidth_d1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "u::angular_opt")]
    pub natural_linewidth_d2: Option<f64>,
    #[serde(default = "d::dipole_d1", deserialize_with = "u::dipole")]
    pub dipole_moment_d1: f64,
    #[serde(default = "d::dipole_d2", deserialize_with = "u::dipole")]
    pub dipole_moment_d2: f64,
    #[serde(default = "d::purity", deserialize_with = "u::ratio")]
    pub isotopic_purity: f64,
    #[serde(default = "d::hyperfine", deserialize_with = "u::angular")]
    pub ground_hyperfine_splitting: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    #[serde(default = "d::length", deserialize_with = "u::length")]
    pub length: f64,
    #[serde(default = "d::inner_diameter", deserialize_with = "u::length")]
    pub inner_diameter: f64,
    #[serde(default = "d::temperature", deserialize_with = "u::temperature")]
    pub temperature: f64,
    #[serde(default = "d::temperature_uncertainty", deserialize_with = "u::temperature")]
    pub temperature_uncertainty: f64,
    /// γ₁₂.
    #[serde(default = "d::gamma12", deserialize_with = "u::angular")]
    pub ground_decoherence_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserConfig {
    #[serde(deserialize_with = "u::power")]
    pub pump_power: f64,
    #[serde(default = "d::pump_detuning", deserialize_with = "u::angular")]
    pub pump_detuning: f64,
    #[serde(default = "d::beam_diameter", deserialize_with = "u::length")]
    pub pump_diameter: f64,
    #[serde(deserialize_with = "u::power")]
    pub coupling_power: f64,
    #[serde(default, deserialize_with = "u::angular")]
    pub coupling_detuning: f64,
    #[serde(default = "d::beam_diameter", deserialize_with = "u::length")]
    pub coupling_diameter: f64,
    #[serde(default = "d::mode_waist", deserialize_with = "u::length")]
    pub mode_waist: f64,
    #[serde(default = "d::alignment_angle", deserialize_with = "u::angle")]
    pub alignment_angle: f64,
    /// Dimensionless factor on the coupling Rabi frequency computed from
    /// power and beam size (effective overlap / sublevel-averaged coupling).
    #[serde(default = "d::one", deserialize_with = "u::ratio")]
    pub coupling_rabi_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterChannel {
    #[serde(deserialize_with = "u::frequency")]
    pub bandwidth: f64,
    #[serde(deserialize_with = "u::ratio")]
    pub transmission: f64,
    #[serde(deserialize_with = "u::decibel")]
    pub extinction: f64,
    #[serde(default = "d::fsr", deserialize_with = "u::frequency")]
    pub free_spectral_range: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "d::filter_s")]
    pub stokes: FilterChannel,
    #[serde(default = "d::filter_as")]
    pub anti_stokes: FilterChannel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "d::qe", deserialize_with = "u::ratio")]
    pub quantum_efficiency: f64,
    #[serde(default = "d::fiber", deserialize_with = "u::ratio")]
    pub fiber_coupling: f64,
    #[serde(default = "d::dead_time", deserialize_with = "u::time")]
    pub dead_time: f64,
    #[serde(default = "d::jitter", deserialize_with = "u::time")]
    pub timing_jitter_sigma: f64,
    #[serde(default = "d::dark", deserialize_with = "u::frequency")]
    pub dark_count_rate: f64,
}

/// Uncorrelated click sources. Rates are detected clicks per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Raman background on the anti-Stokes channel at the reference coupling
    /// power, before optical-pumping suppression.
    #[serde(default = "d::raman", deserialize_with = "u::frequency")]
    pub raman_background_as: f64,
    #[serde(default = "d::raman_ref", deserialize_with = "u::power")]
    pub raman_reference_coupling_power: f64,
    #[serde(default = "d::leakage_ref", deserialize_with = "u::power")]
    pub raman_reference_pump_power: f64,
    /// Raman rate ∝ (P_c/P_c,ref)^raman_coupling_exponent.
    #[serde(default = "d::one")]
    pub raman_coupling_exponent: f64,
    /// Raman rate ∝ (P_p/P_p,ref)^raman_pump_exponent.
    #[serde(default = "d::raman_pump_exponent")]
    pub raman_pump_exponent: f64,
    /// Residual pump leakage on the Stokes channel at the reference pump power.
    #[serde(default = "d::leakage", deserialize_with = "u::frequency")]
    pub leakage_s: f64,
    #[serde(default = "d::leakage_ref", deserialize_with = "u::power")]
    pub leakage_reference_pump_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "u::frequency_opt")]
    pub dark_rate_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "u::frequency_opt")]
    pub dark_rate_as: Option<f64>,
    #[serde(default = "d::yes")]
    pub optical_pumping: bool,
    #[serde(default = "d::suppression", deserialize_with = "u::ratio")]
    pub optical_pumping_suppression: f64,
}

/// Numerical settings and the absolute rate scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "d::quad_order")]
    pub quadrature_order: usize,
    /// Imaginary contour shift of the velocity quadrature, in units of σ_v.
    #[serde(default = "d::contour_shift")]
    pub contour_shift: f64,
    /// Minimum number of grid points on each side of zero detuning.
    #[serde(default = "d::min_half_points")]
    pub min_half_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "u::angular_opt")]
    pub grid_half_span: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_half_points: Option<usize>,
    #[serde(default = "d::yes")]
    pub include_stokes_dispersion: bool,
    /// Pairs per second per unit of Σ|JSA|²Δδ/2π.
    #[serde(default = "d::rate_constant")]
    pub rate_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub species: AtomicSpecies,
    #[serde(default)]
    pub cell: CellConfig,
    pub lasers: LaserConfig,
    #[serde(default)]
    pub filters: FilterConfig,
    #[serde(default)]
    pub detectors: DetectorConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "u::density_opt")]
    pub density_override: Option<f64>,
}

mod d {
    use super::*;
    pub fn mass() -> f64 {
        86.909_180_527 * AMU
    }
    pub fn d1_wavelength() -> f64 {
        795e-9
    }
    pub fn d2_wavelength() -> f64 {
        780e-9
    }
    pub fn natural_linewidth() -> f64 {
        TWO_PI * 6e6
    }
    pub fn dipole_d1() -> f64 {
        1.465_142e-29
    }
    pub fn dipole_d2() -> f64 {
        2.069_339e-29
    }
    pub fn purity() -> f64 {
        0.99
    }
    pub fn hyperfine() -> f64 {
        TWO_PI * 6.834_682_611e9
    }
    pub fn length() -> f64 {
        0.0127
    }
    pub fn inner_diameter() -> f64 {
        0.010
    }
    pub fn temperature() -> f64 {
        336.15
    }
    pub fn temperature_uncertainty() -> f64 {
        0.2
    }
    pub fn gamma12() -> f64 {
        TWO_PI * 30e3
    }
    pub fn pump_detuning() -> f64 {
        -TWO_PI * 2.7e9
    }
    pub fn beam_diameter() -> f64 {
        1.4e-3
    }
    pub fn mode_waist() -> f64 {
        250e-6
    }
    pub fn alignment_angle() -> f64 {
        0.1_f64.to_radians()
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn fsr() -> f64 {
        13.6e9
    }
    pub fn filter_s() -> FilterChannel {
        FilterChannel { bandwidth: 350e6, transmission: 0.8, extinction: 60.0, free_spectral_range: fsr() }
    }
    pub fn filter_as() -> FilterChannel {
        FilterChannel { bandwidth: 80e6, transmission: 0.3, extinction: 40.0, free_spectral_range: fsr() }
    }
    pub fn qe() -> f64 {
        0.5
    }
    pub fn fiber() -> f64 {
        0.8
    }
    pub fn dead_time() -> f64 {
        22e-9
    }
    pub fn jitter() -> f64 {
        0.35e-9
    }
    pub fn dark() -> f64 {
        25.0
    }
    pub fn raman() -> f64 {
        150e3
    }
    pub fn raman_ref() -> f64 {
        27e-3
    }
    pub fn raman_pump_exponent() -> f64 {
        0.5
    }
    pub fn leakage() -> f64 {
        8e3
    }
    pub fn leakage_ref() -> f64 {
        6e-3
    }
    pub fn yes() -> bool {
        true
    }
    pub fn suppression() -> f64 {
        0.1
    }
    pub fn quad_order() -> usize {
        128
    }
    pub fn contour_shift() -> f64 {
        1.5
    }
    pub fn min_half_points() -> usize {
        2048
    }
    pub fn rate_constant() -> f64 {
        1.0
    }
}

impl Default for AtomicSpecies {
    fn default() -> Self {
        Self {
            mass: d::mass(),
            d1_wavelength: d::d1_wavelength(),
            d2_wavelength: d::d2_wavelength(),
            natural_linewidth: d::natural_linewidth(),
            natural_linewidth_d1: None,
            natural_linewidth_d2: None,
            dipole_moment_d1: d::dipole_d1(),
            dipole_moment_d2: d::dipole_d2(),
            isotopic_purity: d::purity(),
            ground_hyperfine_splitting: d::hyperfine(),
        }
    }
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            length: d::length(),
            inner_diameter: d::inner_diameter(),
            temperature: d::temperature(),
            temperature_uncertainty: d::temperature_uncertainty(),
            ground_decoherence_rate: d::gamma12(),
        }
    }
}

impl LaserConfig {
    pub fn new(pump_power: f64, coupling_power: f64) -> Self {
        Self {
            pump_power,
            pump_detuning: d::pump_detuning(),
            pump_diameter: d::beam_diameter(),
            coupling_power,
            coupling_detuning: 0.0,
            coupling_diameter: d::beam_diameter(),
            mode_waist: d::mode_waist(),
            alignment_angle: d::alignment_angle(),
            coupling_rabi_scale: 1.0,
        }
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { stokes: d::filter_s(), anti_stokes: d::filter_as() }
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            quantum_efficiency: d::qe(),
            fiber_coupling: d::fiber(),
            dead_time: d::dead_time(),
            timing_jitter_sigma: d::jitter(),
            dark_count_rate: d::dark(),
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            raman_background_as: d::raman(),
            raman_reference_coupling_power: d::raman_ref(),
            raman_reference_pump_power: d::leakage_ref(),
            raman_coupling_exponent: 1.0,
            raman_pump_exponent: d::raman_pump_exponent(),
            leakage_s: d::leakage(),
            leakage_reference_pump_power: d::leakage_ref(),
            dark_rate_s: None,
            dark_rate_as: None,
            optical_pumping: true,
            optical_pumping_suppression: d::suppression(),
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            quadrature_order: d::quad_order(),
            contour_shift: d::contour_shift(),
            min_half_points: d::min_half_points(),
            grid_half_span: None,
            grid_half_points: None,
            include_stokes_dispersion: true,
            rate_constant: d::rate_constant(),
        }
    }
}

/// Which arm of the pair a channel-level quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arm {
    Stokes,
    AntiStokes,
}

impl ExperimentConfig {
    /// Defaults everywhere except the two required powers.
    pub fn with_powers(pump_power: f64, coupling_power: f64) -> Self {
        Self {
            species: AtomicSpecies::default(),
            cell: CellConfig::default(),
            lasers: LaserConfig::new(pump_power, coupling_power),
            filters: FilterConfig::default(),
            detectors: DetectorConfig::default(),
            noise: NoiseModel::default(),
            model: ModelConfig::default(),
            density_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.species;
        check(s.mass > 0.0, "AtomicSpecies.mass", "must be > 0")?;
        for (name, w) in [("AtomicSpecies.d1_wavelength", s.d1_wavelength), ("AtomicSpecies.d2_wavelength", s.d2_wavelength)] {
            check(w > 700e-9 && w < 900e-9, name, "must lie in (700e-9, 900e-9) m")?;
        }
        check(s.natural_linewidth > 0.0, "AtomicSpecies.natural_linewidth", "must be > 0")?;
        for (name, g) in [("AtomicSpecies.natural_linewidth_d1", s.natural_linewidth_d1), ("AtomicSpecies.natural_linewidth_d2", s.natural_linewidth_d2)] {
            if let Some(g) = g {
                check(g > 0.0, name, "must be > 0")?;
            }
        }
        check(s.dipole_moment_d1 > 0.0, "AtomicSpecies.dipole_moment_d1", "must be > 0")?;
        check(s.dipole_moment_d2 > 0.0, "AtomicSpecies.dipole_moment_d2", "must be > 0")?;
        check(s.isotopic_purity > 0.0 && s.isotopic_purity <= 1.0, "AtomicSpecies.isotopic_purity", "must lie in (0, 1]")?;
        check(s.ground_hyperfine_splitting >= 0.0, "AtomicSpecies.ground_hyperfine_splitting", "must be >= 0")?;

        let c = &self.cell;
        check(c.length > 0.0, "CellConfig.length", "must be > 0")?;
        check(c.inner_diameter > 0.0, "CellConfig.inner_diameter", "must be > 0")?;
        check(c.temperature > 273.0, "CellConfig.temperature", "must be > 273 K")?;
        check(c.temperature_uncertainty >= 0.0, "CellConfig.temperature_uncertainty", "must be >= 0")?;
        check(c.ground_decoherence_rate >= 0.0, "CellConfig.ground_decoherence_rate", "must be >= 0")?;

        let l = &self.lasers;
        check(l.pump_power >= 0.0, "LaserConfig.pump_power", "must be >= 0")?;
        check(l.coupling_power >= 0.0, "LaserConfig.coupling_power", "must be >= 0")?;
        check(l.pump_detuning.is_finite(), "LaserConfig.pump_detuning", "must be finite")?;
        check(l.coupling_detuning.is_finite(), "LaserConfig.coupling_detuning", "must be finite")?;
        check(l.pump_diameter > 0.0, "LaserConfig.pump_diameter", "must be > 0")?;
        check(l.coupling_diameter > 0.0, "LaserConfig.coupling_diameter", "must be > 0")?;
        check(l.mode_waist > 0.0, "LaserConfig.mode_waist", "must be > 0")?;
        check(l.alignment_angle.abs() < std::f64::consts::FRAC_PI_2, "LaserConfig.alignment_angle", "must be below 90 degrees")?;
        check(l.coupling_rabi_scale > 0.0, "LaserConfig.coupling_rabi_scale", "must be > 0")?;

        for (tag, f) in [("stokes", &self.filters.stokes), ("anti_stokes", &self.filters.anti_stokes)] {
            check(f.bandwidth > 0.0, &format!("FilterConfig.{tag}.bandwidth"), "must be > 0")?;
            check(f.transmission > 0.0 && f.transmission <= 1.0, &format!("FilterConfig.{tag}.transmission"), "must lie in (0, 1]")?;
            check(f.extinction >= 0.0, &format!("FilterConfig.{tag}.extinction"), "must be >= 0 dB")?;
            check(f.free_spectral_range > 2.0 * f.bandwidth, &format!("FilterConfig.{tag}.free_spectral_range"), "must exceed twice the bandwidth")?;
        }

        let dc = &self.detectors;
        check(dc.quantum_efficiency > 0.0 && dc.quantum_efficiency <= 1.0, "DetectorConfig.quantum_efficiency", "must lie in (0, 1]")?;
        check(dc.fiber_coupling > 0.0 && dc.fiber_coupling <= 1.0, "DetectorConfig.fiber_coupling", "must lie in (0, 1]")?;
        check(dc.dead_time >= 0.0, "DetectorConfig.dead_time", "must be >= 0")?;
        check(dc.timing_jitter_sigma >= 0.0, "DetectorConfig.timing_jitter_sigma", "must be >= 0")?;
        check(dc.dark_count_rate >= 0.0, "DetectorConfig.dark_count_rate", "must be >= 0")?;

        let n = &self.noise;
        check(n.raman_background_as >= 0.0, "NoiseModel.raman_background_as", "must be >= 0")?;
        check(n.leakage_s >= 0.0, "NoiseModel.leakage_s", "must be >= 0")?;
        check(n.raman_reference_coupling_power > 0.0, "NoiseModel.raman_reference_coupling_power", "must be > 0")?;
        check(n.raman_reference_pump_power > 0.0, "NoiseModel.raman_reference_pump_power", "must be > 0")?;
        for (v, f) in [(n.raman_coupling_exponent, "raman_coupling_exponent"), (n.raman_pump_exponent, "raman_pump_exponent")] {
            check(v.is_finite() && (0.0..=4.0).contains(&v), &format!("NoiseModel.{f}"), "must lie in [0, 4]")?;
        }
        check(n.leakage_reference_pump_power > 0.0, "NoiseModel.leakage_reference_pump_power", "must be > 0")?;
        check(n.dark_rate_s.unwrap_or(0.0) >= 0.0, "NoiseModel.dark_rate_s", "must be >= 0")?;
        check(n.dark_rate_as.unwrap_or(0.0) >= 0.0, "NoiseModel.dark_rate_as", "must be >= 0")?;
        check(
            n.optical_pumping_suppression > 0.0 && n.optical_pumping_suppression <= 1.0,
            "NoiseModel.optical_pumping_suppression",
            "must lie in (0, 1]",
        )?;

        let m = &self.model;
        check(m.quadrature_order >= 2, "ModelConfig.quadrature_order", "must be >= 2")?;
        check(m.contour_shift.is_finite() && m.contour_shift >= 0.0 && m.contour_shift <= 4.0, "ModelConfig.contour_shift", "must lie in [0, 4]")?;
        check(m.min_half_points >= 8, "ModelConfig.min_half_points", "must be >= 8")?;
        if let Some(h) = m.grid_half_span {
            check(h > 0.0, "ModelConfig.grid_half_span", "must be > 0")?;
        }
        if let Some(p) = m.grid_half_points {
            check(p >= 8, "ModelConfig.grid_half_points", "must be >= 8")?;
        }
        check(m.rate_constant > 0.0 && m.rate_constant.is_finite(), "ModelConfig.rate_constant", "must be > 0")?;
        if let Some(n) = self.density_override {
            check(n >= 0.0 && n.is_finite(), "ExperimentConfig.density_override", "must be >= 0")?;
        }
        Ok(())
    }

    /// Canonical TOML serialization (SI numbers only).
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Effective atomic number density in m⁻³.
    pub fn density(&self) -> Result<f64> {
        match self.density_override {
            Some(n) => Ok(n),
            None => vapor_density(self.cell.temperature, self.species.isotopic_purity),
        }
    }

    pub fn gamma13(&self) -> f64 {
        self.species.natural_linewidth_d1.unwrap_or(self.species.natural_linewidth) / 2.0
    }

    pub fn gamma13_d2(&self) -> f64 {
        self.species.natural_linewidth_d2.unwrap_or(self.species.natural_linewidth) / 2.0
    }

    /// Effective coupling Rabi frequency in rad/s.
    pub fn coupling_rabi(&self) -> f64 {
        self.lasers.coupling_rabi_scale
            * power_to_rabi(self.lasers.coupling_power, self.lasers.coupling_diameter, self.species.dipole_moment_d1)
    }

    /// Total detection efficiency (fiber · filter · detector) of one arm.
    pub fn efficiency(&self, arm: Arm) -> f64 {
        let f = match arm {
            Arm::Stokes => &self.filters.stokes,
            Arm::AntiStokes => &self.filters.anti_stokes,
        };
        self.detectors.fiber_coupling * f.transmission * self.detectors.quantum_efficiency
    }

    /// Detected uncorrelated click rate of one arm (all detectors of that arm).
    pub fn noise_rate(&self, arm: Arm) -> f64 {
        let n = &self.noise;
        match arm {
            Arm::Stokes => n.leakage_s * self.lasers.pump_power / n.leakage_reference_pump_power,
            Arm::AntiStokes => n.raman_background_as * self.raman_scale(),
        }
    }

    /// Anti-Stokes noise rate per unit of `raman_background_as`: optical
    /// pumping suppression times the power-law scaling with both lasers.
    pub fn raman_scale(&self) -> f64 {
        let n = &self.noise;
        let s = if n.optical_pumping { n.optical_pumping_suppression } else { 1.0 };
        let l = &self.lasers;
        s * (l.coupling_power / n.raman_reference_coupling_power).powf(n.raman_coupling_exponent)
            * (l.pump_power / n.raman_reference_pump_power).powf(n.raman_pump_exponent)
    }

    /// Dark count rate of a single detector of the given arm.
    pub fn dark_rate(&self, arm: Arm) -> f64 {
        let o = match arm {
            Arm::Stokes => self.noise.dark_rate_s,
            Arm::AntiStokes => self.noise.dark_rate_as,
        };
        o.unwrap_or(self.detectors.dark_count_rate)
    }
}

fn check(ok: bool, field: &str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(field, reason))
    }
}

/// Parses and validates a TOML configuration document.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        if msg.contains("missing field `lasers`") {
            Error::invalid("LaserConfig.pump_power", "required")
        } else if let Some(f) = msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Error::invalid(format!("LaserConfig.{f}"), "required")
        } else {
            Error::ConfigParse(e.to_string())
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Recursively overlays `overlay` onto `base`: tables merge key by key,
/// anything else replaces.
pub fn merge_toml(base: &mut toml::Value, overlay: &toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_toml(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Parses a base document, applies an overlay table, then validates.
pub fn load_config_with_overlay(base: &str, overlay: &toml::Value) -> Result<ExperimentConfig> {
    let mut v: toml::Value = toml::from_str(base).map_err(|e| Error::ConfigParse(e.to_string()))?;
    merge_toml(&mut v, overlay);
    load_config(&toml::to_string(&v).map_err(|e| Error::ConfigParse(e.to_string()))?)
}

/// Reads a configuration file from disk.
pub fn load_config_file(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))?;
    load_config(&text)
}

/// Rubidium number density from the vapor-pressure correlation
/// log₁₀P[torr] (solid below 312.46 K, liquid above) times `purity`.
pub fn vapor_density(temperature: f64, purity: f64) -> Result<f64> {
    if !(temperature > 273.0 && temperature < 450.0) {
        return Err(Error::InvalidInput(format!(
            "temperature {temperature} K outside the validated range (273, 450) K"
        )));
    }
    if !(0.0..=1.0).contains(&purity) {
        return Err(Error::InvalidInput(format!("purity {purity} outside [0, 1]")));
    }
    let t = temperature;
    let log_p = if t < 312.46 {
        -94.048_26 - 1961.258 / t - 0.037_716_87 * t + 42.575_26 * t.log10()
    } else {
        15.882_53 - 4529.635 / t + 0.000_586_63 * t - 2.991_38 * t.log10()
    };
    Ok(purity * 10f64.powf(log_p) * TORR / (KB * t))
}

/// Peak Rabi frequency of a Gaussian beam with the given power and 1/e² diameter.
pub fn power_to_rabi(power: f64, beam_diameter: f64, dipole: f64) -> f64 {
    let w = beam_diameter / 2.0;
    let intensity = 2.0 * power / (std::f64::consts::PI * w * w);
    let field = (2.0 * intensity / (C * EPS0)).sqrt();
    dipole * field / HBAR
}

/// Doppler FWHM in Hz.
pub fn doppler_fwhm(temperature: f64, wavelength: f64, mass: f64) -> f64 {
    (8.0 * std::f64::consts::LN_2 * KB * temperature / mass).sqrt() / wavelength
}

/// One-dimensional thermal velocity spread √(k_B T/m).
pub fn thermal_velocity(temperature: f64, mass: f64) -> f64 {
    (KB * temperature / mass).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE_POINT: &str = r#"
[cell]
temperature = "336.15 K"
[lasers]
pump_power = "6 mW"
coupling_power = "27 mW"
"#;

    #[test]
    fn empty_document_requires_pump_power() {
        match load_config("") {
            Err(Error::ConfigInvalid { field, .. }) => assert_eq!(field, "LaserConfig.pump_power"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reference_point_loads_with_defaults() {
        let cfg = load_config(REFERENCE_POINT).unwrap();
        assert_eq!(cfg.lasers.pump_power, 6e-3);
        assert_eq!(cfg.lasers.coupling_power, 27e-3);
        assert_eq!(cfg, ExperimentConfig::with_powers(6e-3, 27e-3));
        assert_eq!(cfg.filters.anti_stokes.bandwidth, 80e6);
        assert_eq!(cfg.filters.stokes.extinction, 60.0);
        assert!((cfg.lasers.pump_detuning + TWO_PI * 2.7e9).abs() < 1e-3);
    }

    #[test]
    fn transmission_bound_is_named() {
        let doc = format!("{REFERENCE_POINT}\n[filters.stokes]\nbandwidth = \"350 MHz\"\ntransmission = 1.3\nextinction = \"60 dB\"\n");
        match load_config(&doc) {
            Err(Error::ConfigInvalid { field, .. }) => assert_eq!(field, "FilterConfig.stokes.transmission"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let doc = format!("{REFERENCE_POINT}\nbogus = 1\n");
        assert!(matches!(load_config(&doc), Err(Error::ConfigParse(_))));
        let doc = "[lasers]\npump_power = 0.006\ncoupling_power = 0.027\npump_colour = 1\n";
        assert!(matches!(load_config(doc), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = ExperimentConfig::with_powers(6e-3, 9e-3);
        cfg.density_override = Some(1.5e16);
        cfg.noise.dark_rate_as = Some(40.0);
        let back = load_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.fingerprint(), back.fingerprint());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = ExperimentConfig::with_powers(6e-3, 27e-3);
        let b = ExperimentConfig::with_powers(6e-3, 9e-3);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn vapor_density_oracle() {
        let n = vapor_density(336.15, 0.99).unwrap();
        assert!((n / 3.168_006e17 - 1.0).abs() < 1e-5, "{n}");
        let n = vapor_density(300.0, 1.0).unwrap();
        assert!((n / 1.177_422e16 - 1.0).abs() < 1e-5, "{n}");
        assert_eq!(vapor_density(336.15, 0.0).unwrap(), 0.0);
        assert!(vapor_density(250.0, 1.0).is_err());
    }

    #[test]
    fn rabi_oracle() {
        let w = power_to_rabi(27e-3, 1.4e-3, 1.465_142e-29);
        assert!((w / 7.142_622e8 - 1.0).abs() < 1e-6, "{w}");
        assert_eq!(power_to_rabi(0.0, 1.4e-3, 1e-29), 0.0);
        let a = power_to_rabi(1e-3, 1.4e-3, 1e-29);
        assert!((power_to_rabi(4e-3, 1.4e-3, 1e-29) / a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn doppler_oracle() {
        let f = doppler_fwhm(336.15, 795e-9, d::mass());
        assert!((f / 531.179_637e6 - 1.0).abs() < 1e-6, "{f}");
        assert_eq!(doppler_fwhm(0.0, 795e-9, d::mass()), 0.0);
        let r = doppler_fwhm(336.15, 780e-9, d::mass()) / f;
        assert!((r - 795.0 / 780.0).abs() < 1e-14);
    }

    #[test]
    fn efficiencies_match_caption() {
        let cfg = ExperimentConfig::with_powers(6e-3, 27e-3);
        assert!((cfg.efficiency(Arm::Stokes) - 0.32).abs() < 1e-15);
        assert!((cfg.efficiency(Arm::AntiStokes) - 0.12).abs() < 1e-15);
    }
}
