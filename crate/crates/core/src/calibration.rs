//! Fits the model's free parameters to published operating-point numbers.
//!
//! Shape anchors (1/e times, decay constants) fix the coupling Rabi scale,
//! γ₁₂ and the effective density by bounded Nelder–Mead in log space. The
//! rate constant then follows in closed form from pair-rate anchors, and the
//! anti-Stokes Raman background from the g2m anchor nearest the Raman
//! reference operating point through the rate-ratio model.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::{solve, BiphotonSolution};
use crate::config::{vapor_density, ExperimentConfig};
use crate::constants::TWO_PI;
use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::ratemodel::{raman_for_g2_max, rate_budget};
use crate::units::{parse_quantity, Dim};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    OneOverETime,
    DecayConstant,
    G2Max,
    PairRate,
}

impl AnchorKind {
    fn dim(self) -> Dim {
        match self {
            AnchorKind::OneOverETime | AnchorKind::DecayConstant => Dim::Time,
            AnchorKind::G2Max => Dim::Ratio,
            AnchorKind::PairRate => Dim::Frequency,
        }
    }

    fn is_shape(self) -> bool {
        matches!(self, AnchorKind::OneOverETime | AnchorKind::DecayConstant)
    }
}

/// A target value at one (pump, coupling) operating point, SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub kind: AnchorKind,
    pub pump_power: f64,
    pub coupling_power: f64,
    pub value: f64,
}

impl Anchor {
    pub fn new(kind: AnchorKind, pump_power: f64, coupling_power: f64, value: f64) -> Self {
        Self { kind, pump_power, coupling_power, value }
    }
}

/// Published numbers: 1/e times 47/60/94 ns and g2m 11/11/6 at pump 6 mW
/// with coupling 27/9/1 mW, and 2000 pairs/s at pump 7 mW, coupling 27 mW.
pub fn default_anchors() -> Vec<Anchor> {
    let mut a = Vec::new();
    for (pc, t, g) in [(27e-3, 47e-9, 11.0), (9e-3, 60e-9, 11.0), (1e-3, 94e-9, 6.0)] {
        a.push(Anchor::new(AnchorKind::OneOverETime, 6e-3, pc, t));
        a.push(Anchor::new(AnchorKind::G2Max, 6e-3, pc, g));
    }
    a.push(Anchor::new(AnchorKind::PairRate, 7e-3, 27e-3, 2000.0));
    a
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorFile {
    anchor: Vec<RawAnchor>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnchor {
    kind: AnchorKind,
    #[serde(deserialize_with = "crate::units::power")]
    pump_power: f64,
    #[serde(deserialize_with = "crate::units::power")]
    coupling_power: f64,
    value: toml::Value,
}

/// Reads `[[anchor]]` entries with `kind`, `pump_power`, `coupling_power`
/// and `value` (unit strings accepted).
pub fn load_anchors(text: &str) -> Result<Vec<Anchor>> {
    let f: AnchorFile = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    f.anchor
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let field = || format!("CalibrationAnchors.anchor[{i}].value");
            let value = match &r.value {
                toml::Value::Integer(v) => *v as f64,
                toml::Value::Float(v) => *v,
                toml::Value::String(s) => parse_quantity(s, r.kind.dim()).map_err(|e| Error::invalid(field(), e))?,
                _ => return Err(Error::invalid(field(), "must be a number or a unit string")),
            };
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(field(), "must be > 0"));
            }
            if !(r.pump_power > 0.0 && r.coupling_power > 0.0) {
                return Err(Error::invalid(format!("CalibrationAnchors.anchor[{i}]"), "powers must be > 0"));
            }
            Ok(Anchor::new(r.kind, r.pump_power, r.coupling_power, value))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct CalibrationOptions {
    pub density_fraction_bounds: (f64, f64),
    pub gamma12_bounds: (f64, f64),
    pub rabi_scale_bounds: (f64, f64),
    pub raman_bounds: (f64, f64),
    /// Range of the Raman coupling-power exponent, fitted when the g2m
    /// anchors span more than one coupling power.
    pub raman_coupling_exponent_bounds: (f64, f64),
    /// Coincidence bin used by the g2m model.
    pub bin_width: f64,
    pub optimizer: NelderMeadOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            density_fraction_bounds: (1e-3, 1.0),
            gamma12_bounds: (TWO_PI * 1e3, TWO_PI * 20e6),
            rabi_scale_bounds: (0.02, 5.0),
            raman_bounds: (0.0, 1e9),
            raman_coupling_exponent_bounds: (0.0, 2.0),
            bin_width: 1e-9,
            optimizer: NelderMeadOptions { initial_step: 0.25, max_evals: 300, f_tol: 1e-7, x_tol: 1e-2 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedParameters {
    pub effective_density: f64,
    pub density_fraction_of_vapor: f64,
    pub gamma12: f64,
    pub coupling_rabi_scale: f64,
    pub raman_background_as: f64,
    pub raman_coupling_exponent: f64,
    pub rate_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorResidual {
    pub kind: AnchorKind,
    pub pump_power: f64,
    pub coupling_power: f64,
    pub target: f64,
    pub model: f64,
    /// (model − target)/target.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub fitted: FittedParameters,
    pub residuals: Vec<AnchorResidual>,
    pub converged: bool,
    pub evaluations: usize,
    pub objective: f64,
    /// Best shape objective after each optimizer iteration.
    pub trace: Vec<f64>,
    /// Anchor used to set the Raman background, if any.
    pub raman_anchor: Option<usize>,
    pub config_fingerprint: String,
    #[serde(skip)]
    pub config: Option<ExperimentConfig>,
}

impl CalibrationResult {
    /// Partial configuration holding only the fitted fields.
    pub fn overlay_toml(&self) -> String {
        let f = &self.fitted;
        format!(
            "density_override = {:e}\n\n[cell]\nground_decoherence_rate = {:e}\n\n[lasers]\ncoupling_rabi_scale = {:e}\n\n[noise]\nraman_background_as = {:e}\nraman_coupling_exponent = {:e}\n\n[model]\nrate_constant = {:e}\n",
            f.effective_density, f.gamma12, f.coupling_rabi_scale, f.raman_background_as, f.raman_coupling_exponent, f.rate_constant
        )
    }
}

/// Which parameters the shape fit varies, in order of identifiability.
#[derive(Clone, Copy)]
enum Param {
    RabiScale,
    Gamma12,
    Density,
}

fn apply(cfg: &mut ExperimentConfig, params: &[Param], x: &[f64], vapor: f64) {
    for (p, v) in params.iter().zip(x) {
        let v = v.exp();
        match p {
            Param::RabiScale => cfg.lasers.coupling_rabi_scale = v,
            Param::Gamma12 => cfg.cell.ground_decoherence_rate = v,
            Param::Density => cfg.density_override = Some(v * vapor),
        }
    }
}

fn point_key(a: &Anchor) -> (u64, u64) {
    (a.pump_power.to_bits(), a.coupling_power.to_bits())
}

fn solve_points(cfg: &ExperimentConfig, points: &[(u64, u64)]) -> Result<BTreeMap<(u64, u64), BiphotonSolution>> {
    let sols: Vec<_> = points
        .par_iter()
        .map(|&(pp, pc)| {
            let mut c = cfg.clone();
            c.lasers.pump_power = f64::from_bits(pp);
            c.lasers.coupling_power = f64::from_bits(pc);
            solve(&c).map(|s| ((pp, pc), s))
        })
        .collect();
    sols.into_iter().collect()
}

fn shape_value(kind: AnchorKind, s: &BiphotonSolution) -> f64 {
    match kind {
        AnchorKind::DecayConstant => s.metrics.decay_constant,
        _ => s.metrics.one_over_e_time,
    }
}

/// Starting point from the optically thin limit, where the correlation time
/// is about 1/(2w) with EIT width w = γ₁₂ + Ωc²/(4(γ₁₃ + k_as·σ_v)) and
/// Ωc² ∝ coupling power: a relative least-squares line through
/// (P_c, 1/(2τ)) gives γ₁₂ and the Rabi scale.
fn thin_medium_guess(base: &ExperimentConfig, shape: &[&Anchor]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = shape.iter().map(|a| (a.coupling_power, 0.5 / a.value)).collect();
    let distinct = pts.iter().any(|p| p.0 != pts[0].0);
    if !distinct {
        return None;
    }
    // weights 1/y² turn absolute into relative residuals
    let (mut s0, mut s1, mut s2, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        let w = 1.0 / (y * y);
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        sy += w * y;
        sxy += w * x * y;
    }
    let det = s0 * s2 - s1 * s1;
    let slope = (s0 * sxy - s1 * sy) / det;
    let icpt = (sy - slope * s1) / s0;
    if !(slope > 0.0) {
        return None;
    }
    let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let gamma12 = icpt.max(0.1 * ymin);
    let sigma_v = crate::config::thermal_velocity(base.cell.temperature, base.species.mass);
    let k_as = TWO_PI / base.species.d1_wavelength;
    let unit = crate::config::power_to_rabi(1.0, base.lasers.coupling_diameter, base.species.dipole_moment_d1);
    let scale = (slope * 4.0 * (base.gamma13() + k_as * sigma_v)).sqrt() / unit;
    Some((scale, gamma12))
}

pub fn calibrate(base: &ExperimentConfig, anchors: &[Anchor], opts: &CalibrationOptions) -> Result<CalibrationResult> {
    if anchors.len() < 3 {
        return Err(Error::invalid(
            "CalibrationAnchors",
            format!("underdetermined: {} anchor(s) given, at least 3 required", anchors.len()),
        ));
    }
    base.validate()?;
    let vapor = vapor_density(base.cell.temperature, base.species.isotopic_purity)?;
    let shape: Vec<&Anchor> = anchors.iter().filter(|a| a.kind.is_shape()).collect();
    let params: Vec<Param> = [Param::RabiScale, Param::Gamma12, Param::Density].into_iter().take(shape.len().min(3)).collect();
    let bounds: Vec<(f64, f64)> = params
        .iter()
        .map(|p| {
            let (lo, hi) = match p {
                Param::RabiScale => opts.rabi_scale_bounds,
                Param::Gamma12 => opts.gamma12_bounds,
                Param::Density => opts.density_fraction_bounds,
            };
            (lo.ln(), hi.ln())
        })
        .collect();
    let (scale0, gamma0) = thin_medium_guess(base, &shape).unwrap_or((base.lasers.coupling_rabi_scale, base.cell.ground_decoherence_rate));
    let x0: Vec<f64> = params
        .iter()
        .map(|p| match p {
            Param::RabiScale => scale0.ln(),
            Param::Gamma12 => gamma0.ln(),
            Param::Density => opts.density_fraction_bounds.0.ln(),
        })
        .zip(&bounds)
        .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
        .collect();

    let mut shape_points: Vec<(u64, u64)> = shape.iter().map(|a| point_key(a)).collect();
    shape_points.sort_unstable();
    shape_points.dedup();

    let objective = |x: &[f64]| -> Result<f64> {
        let mut c = base.clone();
        apply(&mut c, &params, x, vapor);
        match solve_points(&c, &shape_points) {
            Ok(sols) => Ok(shape
                .iter()
                .map(|a| (shape_value(a.kind, &sols[&point_key(a)]) / a.value - 1.0).powi(2))
                .sum()),
            // parameter combinations the engine cannot resolve are simply bad
            Err(Error::Numerical(_)) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let (x, converged, evals, obj, trace) = if params.is_empty() {
        (Vec::new(), true, 0, 0.0, Vec::new())
    } else {
        let m = nelder_mead(objective, &x0, &bounds, &opts.optimizer)?;
        (m.x, m.converged, m.evals, m.f, m.trace)
    };
    if !converged {
        let tail: Vec<String> = trace.iter().rev().take(8).rev().map(|v| format!("{v:.3e}")).collect();
        return Err(Error::Numerical(format!(
            "calibration did not converge after {evals} evaluations; objective trace [{}]",
            tail.join(", ")
        )));
    }
    if !obj.is_finite() {
        return Err(Error::Numerical("calibration found no parameters the model can resolve".into()));
    }

    let mut cfg = base.clone();
    apply(&mut cfg, &params, &x, vapor);
    let mut all_points: Vec<(u64, u64)> = anchors.iter().map(point_key).collect();
    all_points.sort_unstable();
    all_points.dedup();
    let sols = solve_points(&cfg, &all_points)?;
    let at = |cfg: &ExperimentConfig, a: &Anchor| -> (ExperimentConfig, &BiphotonSolution) {
        let mut c = cfg.clone();
        c.lasers.pump_power = a.pump_power;
        c.lasers.coupling_power = a.coupling_power;
        (c, &sols[&point_key(a)])
    };

    // rate constant: geometric mean of target/model over pair-rate anchors
    let ratios: Vec<f64> = anchors
        .iter()
        .filter(|a| a.kind == AnchorKind::PairRate)
        .map(|a| (a.value / at(&cfg, a).1.metrics.pair_rate).ln())
        .collect();
    if !ratios.is_empty() {
        let f = (ratios.iter().sum::<f64>() / ratios.len() as f64).exp();
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::Numerical("pair-rate anchors give a non-finite rate constant".into()));
        }
        cfg.model.rate_constant *= f;
    }
    let rate_of = |s: &BiphotonSolution, c: &ExperimentConfig| s.metrics.pair_rate / s.jsa.rate_constant * c.model.rate_constant;

    // Raman background from the g2m anchor closest to the reference point
    let raman_anchor = anchors
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == AnchorKind::G2Max)
        .min_by(|(_, a), (_, b)| {
            let d = |x: &Anchor| {
                (x.coupling_power / cfg.noise.raman_reference_coupling_power).ln().abs()
                    + (x.pump_power / cfg.noise.raman_reference_pump_power).ln().abs()
            };
            d(a).total_cmp(&d(b))
        })
        .map(|(i, _)| i);
    let g2_anchors: Vec<&Anchor> = anchors.iter().filter(|a| a.kind == AnchorKind::G2Max).collect();
    // sets the Raman magnitude for exponent `b`; returns the g2m misfit
    let raman_fit = |cfg: &mut ExperimentConfig, b: f64| -> Result<f64> {
        cfg.noise.raman_coupling_exponent = b;
        let Some(i) = raman_anchor else { return Ok(0.0) };
        let a = &anchors[i];
        let (mut c, s) = at(cfg, a);
        c.model.rate_constant = cfg.model.rate_constant;
        let r = raman_for_g2_max(&c, &s.waveform, rate_of(s, &c), opts.bin_width, a.value)?;
        cfg.noise.raman_background_as = r.clamp(opts.raman_bounds.0, opts.raman_bounds.1);
        g2_anchors.iter().try_fold(0.0, |acc, a| {
            let (mut c, s) = at(cfg, a);
            c.model.rate_constant = cfg.model.rate_constant;
            c.noise = cfg.noise.clone();
            let g = rate_budget(&c, &s.waveform, rate_of(s, &c), opts.bin_width)?.g2_max;
            Ok(acc + (g / a.value - 1.0).powi(2))
        })
    };
    let couplings_differ = g2_anchors.iter().any(|a| a.coupling_power != g2_anchors[0].coupling_power);
    if raman_anchor.is_some() && couplings_differ {
        let (lo, hi) = opts.raman_coupling_exponent_bounds;
        let x0 = cfg.noise.raman_coupling_exponent.clamp(lo, hi);
        let mut trial = cfg.clone();
        let m = nelder_mead(
            |x: &[f64]| raman_fit(&mut trial, x[0]),
            &[x0],
            &[(lo, hi)],
            &NelderMeadOptions { initial_step: 0.2, max_evals: 200, f_tol: 1e-10, x_tol: 1e-4 },
        )?;
        raman_fit(&mut cfg, m.x[0])?;
    } else {
        let b = cfg.noise.raman_coupling_exponent;
        raman_fit(&mut cfg, b)?;
    }

    let residuals = anchors
        .iter()
        .map(|a| {
            let (mut c, s) = at(&cfg, a);
            c.model.rate_constant = cfg.model.rate_constant;
            c.noise = cfg.noise.clone();
            let model = match a.kind {
                AnchorKind::OneOverETime | AnchorKind::DecayConstant => shape_value(a.kind, s),
                AnchorKind::PairRate => rate_of(s, &c),
                AnchorKind::G2Max => rate_budget(&c, &s.waveform, rate_of(s, &c), opts.bin_width)?.g2_max,
            };
            Ok(AnchorResidual {
                kind: a.kind,
                pump_power: a.pump_power,
                coupling_power: a.coupling_power,
                target: a.value,
                model,
                relative: model / a.value - 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    cfg.validate()?;
    let density = cfg.density()?;
    Ok(CalibrationResult {
        fitted: FittedParameters {
            effective_density: density,
            density_fraction_of_vapor: density / vapor,
            gamma12: cfg.cell.ground_decoherence_rate,
            coupling_rabi_scale: cfg.lasers.coupling_rabi_scale,
            raman_background_as: cfg.noise.raman_background_as,
            raman_coupling_exponent: cfg.noise.raman_coupling_exponent,
            rate_constant: cfg.model.rate_constant,
        },
        residuals,
        converged,
        evaluations: evals,
        objective: obj,
        trace,
        raman_anchor,
        config_fingerprint: cfg.fingerprint(),
        config: Some(cfg),
    })
}
