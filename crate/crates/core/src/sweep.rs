//! Parameter sweeps over coupling or pump power.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::solve;
use crate::config::{load_config_with_overlay, ExperimentConfig};
use crate::detection::derive_seed;
use crate::error::{Error, Result};
use crate::pipeline::{analyze_streams, simulate_streams, AnalysisOptions};
use crate::ratemodel::rate_budget;
use crate::units::{parse_quantity, Dim};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    CouplingPower,
    PumpPower,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::CouplingPower => "coupling_power",
            SweepParameter::PumpPower => "pump_power",
        }
    }
}

/// Sweep output columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutput {
    OneOverETime,
    DecayConstant,
    Bandwidth,
    PairRate,
    SpectralFwhm,
    TimeBandwidthRatio,
    PeakTime,
    /// Rate-ratio model of the peak cross-correlation.
    G2Max,
    /// Peak cross-correlation from a simulated run of `duration`.
    G2MaxSimulated,
    G2MaxSimulatedStderr,
}

impl SweepOutput {
    pub fn column(self) -> &'static str {
        match self {
            SweepOutput::OneOverETime => "one_over_e_time_s",
            SweepOutput::DecayConstant => "decay_constant_s",
            SweepOutput::Bandwidth => "bandwidth_Hz",
            SweepOutput::PairRate => "pair_rate_per_s",
            SweepOutput::SpectralFwhm => "spectral_fwhm_Hz",
            SweepOutput::TimeBandwidthRatio => "time_bandwidth_ratio",
            SweepOutput::PeakTime => "peak_time_s",
            SweepOutput::G2Max => "g2_max_model",
            SweepOutput::G2MaxSimulated => "g2_max_simulated",
            SweepOutput::G2MaxSimulatedStderr => "g2_max_simulated_stderr",
        }
    }

    fn simulated(self) -> bool {
        matches!(self, SweepOutput::G2MaxSimulated | SweepOutput::G2MaxSimulatedStderr)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    /// Watts.
    pub values: Vec<f64>,
    pub outputs: Vec<SweepOutput>,
    pub seed: u64,
    /// Simulated run length per point, seconds.
    pub duration: f64,
    pub bin_width: f64,
    pub base: ExperimentConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    parameter: SweepParameter,
    values: Vec<toml::Value>,
    #[serde(default)]
    outputs: Option<Vec<SweepOutput>>,
    #[serde(default)]
    seed: u64,
    #[serde(default, deserialize_with = "crate::units::time_opt")]
    duration: Option<f64>,
    #[serde(default, deserialize_with = "crate::units::time_opt")]
    bin_width: Option<f64>,
    #[serde(default)]
    base_config: Option<String>,
    #[serde(default)]
    overrides: Option<toml::Value>,
}

fn default_outputs(p: SweepParameter) -> Vec<SweepOutput> {
    use SweepOutput::*;
    match p {
        SweepParameter::CouplingPower => vec![OneOverETime, DecayConstant, Bandwidth, PairRate, TimeBandwidthRatio],
        SweepParameter::PumpPower => {
            vec![PairRate, DecayConstant, Bandwidth, G2Max, G2MaxSimulated, G2MaxSimulatedStderr]
        }
    }
}

/// Parses a sweep spec. `base_config` is resolved relative to `dir`;
/// `[overrides]` is overlaid on it (or stands alone without a base file).
pub fn load_sweep_spec(text: &str, dir: &Path) -> Result<SweepSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let field = |i: usize| format!("SweepSpec.values[{i}]");
    let values = raw
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            toml::Value::Integer(x) => Ok(*x as f64),
            toml::Value::Float(x) => Ok(*x),
            toml::Value::String(s) => parse_quantity(s, Dim::Power).map_err(|e| Error::invalid(field(i), e)),
            _ => Err(Error::invalid(field(i), "must be a number or a unit string")),
        })
        .collect::<Result<Vec<f64>>>()?;
    let base_text = match &raw.base_config {
        Some(p) => std::fs::read_to_string(dir.join(p)).map_err(|e| Error::ConfigParse(format!("{p}: {e}")))?,
        None => String::new(),
    };
    let overlay = raw.overrides.unwrap_or_else(|| toml::Value::Table(Default::default()));
    let mut overlay = overlay;
    // the swept power is supplied per row; a placeholder satisfies validation
    if let toml::Value::Table(t) = &mut overlay {
        let lasers = t.entry("lasers").or_insert_with(|| toml::Value::Table(Default::default()));
        if let toml::Value::Table(l) = lasers {
            if !l.contains_key(raw.parameter.as_str()) && !base_text.contains(raw.parameter.as_str()) {
                l.insert(raw.parameter.as_str().into(), toml::Value::Float(values.first().copied().unwrap_or(1e-3)));
            }
        }
    }
    let base = load_config_with_overlay(&base_text, &overlay)?;
    let spec = SweepSpec {
        parameter: raw.parameter,
        values,
        outputs: raw.outputs.unwrap_or_else(|| default_outputs(raw.parameter)),
        seed: raw.seed,
        duration: raw.duration.unwrap_or(60.0),
        bin_width: raw.bin_width.unwrap_or(1e-9),
        base,
    };
    spec.validate()?;
    Ok(spec)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::invalid("SweepSpec.values", "at least 2 points required"));
        }
        if let Some(i) = self.values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!("SweepSpec.values[{i}]"), "must be > 0"));
        }
        if self.outputs.is_empty() {
            return Err(Error::invalid("SweepSpec.outputs", "at least one output required"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("SweepSpec.duration", "must be > 0"));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::invalid("SweepSpec.bin_width", "must be > 0"));
        }
        self.base.validate()
    }

    pub fn config_at(&self, value: f64) -> ExperimentConfig {
        let mut c = self.base.clone();
        match self.parameter {
            SweepParameter::CouplingPower => c.lasers.coupling_power = value,
            SweepParameter::PumpPower => c.lasers.pump_power = value,
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub outputs: Vec<f64>,
    pub config_fingerprint: String,
}

/// Evaluates every point in parallel; rows keep the order of `values`.
/// Each row's seed depends only on its value, so permuting the values
/// permutes the rows.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.values
        .par_iter()
        .map(|&v| {
            let cfg = spec.config_at(v);
            let sol = solve(&cfg)?;
            let m = &sol.metrics;
            let model = if spec.outputs.contains(&SweepOutput::G2Max) {
                Some(rate_budget(&cfg, &sol.waveform, m.pair_rate, spec.bin_width)?.g2_max)
            } else {
                None
            };
            let sim = if !spec.outputs.iter().any(|o| o.simulated()) {
                None
            } else {
                let seed = derive_seed(spec.seed, &format!("sweep-{:016x}", v.to_bits()));
                let streams = simulate_streams(&cfg, &sol, spec.duration, seed)?;
                let opts = AnalysisOptions { bin_width: spec.bin_width, ..Default::default() };
                // a point too short to show a peak reports NaN instead of failing the sweep
                match analyze_streams(&streams, Some((&cfg, m.pair_rate)), &opts) {
                    Ok(r) => Some(r.summary.g2_max),
                    Err(Error::Statistics(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            let outputs = spec
                .outputs
                .iter()
                .map(|o| match o {
                    SweepOutput::OneOverETime => m.one_over_e_time,
                    SweepOutput::DecayConstant => m.decay_constant,
                    SweepOutput::Bandwidth => m.bandwidth,
                    SweepOutput::PairRate => m.pair_rate,
                    SweepOutput::SpectralFwhm => m.spectral_fwhm,
                    SweepOutput::TimeBandwidthRatio => m.time_bandwidth_ratio,
                    SweepOutput::PeakTime => m.peak_time,
                    SweepOutput::G2Max => model.unwrap_or(f64::NAN),
                    SweepOutput::G2MaxSimulated => sim.map_or(f64::NAN, |g| g.value),
                    SweepOutput::G2MaxSimulatedStderr => sim.map_or(f64::NAN, |g| g.uncertainty),
                })
                .collect();
            Ok(SweepRow { value: v, outputs, config_fingerprint: cfg.fingerprint() })
        })
        .collect()
}

pub fn sweep_csv(spec: &SweepSpec, rows: &[SweepRow]) -> String {
    let mut out = format!(
        "# label=sweep parameter={} fingerprint={}\n{}_W",
        spec.parameter.as_str(),
        spec.base.fingerprint(),
        spec.parameter.as_str()
    );
    for o in &spec.outputs {
        out.push(',');
        out.push_str(o.column());
    }
    out.push_str(",config_fingerprint\n");
    for r in rows {
        let _ = write!(out, "{:e}", r.value);
        for v in &r.outputs {
            let _ = write!(out, ",{v:e}");
        }
        let _ = writeln!(out, ",{}", r.config_fingerprint);
    }
    out
}
