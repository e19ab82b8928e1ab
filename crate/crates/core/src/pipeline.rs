//! Simulate → detect → analyze. The analysis half is shared by in-process
//! runs and by files read back from disk, so both produce identical reports.
//!
//! Channel layout: 0 Stokes A, 1 anti-Stokes A, 2 anti-Stokes B,
//! 3 Stokes B. Each arm is split 50/50 onto its two detectors; the
//! cross-correlation uses the merged arms.

use serde::{Deserialize, Serialize};

use crate::biphoton::{BiphotonSolution, DecayFit};
use crate::config::{Arm, ExperimentConfig};
use crate::constants::TWO_PI;
use crate::correlation::{
    auto_g2_zero, back_out_generation_rate, coincidence_histogram, conditional_g2, cs_violation,
    detected_pair_rate, fit_histogram_decay, normalize_g2_with, CSCheck, CoincidenceHistogram,
    ConditionalG2Result, G2Result, Measured, NormalizationMode,
};
use crate::detection::{
    add_background, apply_channel, derive_seed, generate_pairs, merge_streams, split_stream, ClickStream,
};
use crate::error::{Error, Result};

pub const STOKES_A: u8 = 0;
pub const ANTI_STOKES_A: u8 = 1;
pub const ANTI_STOKES_B: u8 = 2;
pub const STOKES_B: u8 = 3;

/// Autocorrelations used when an arm has no measured value.
pub const REFERENCE_G_SS0: Measured = Measured { value: 2.0, uncertainty: 0.2 };
pub const REFERENCE_G_ASAS0: Measured = Measured { value: 1.6, uncertainty: 0.2 };

/// Detected click streams of all four detectors for one run.
pub fn simulate_streams(cfg: &ExperimentConfig, sol: &BiphotonSolution, duration: f64, seed: u64) -> Result<Vec<ClickStream>> {
    let rate = sol.metrics.pair_rate;
    let pairs = generate_pairs(rate, &sol.waveform, duration, seed)?;
    let det = &cfg.detectors;
    let arm = |events: Vec<i64>, ch: u8, which: Arm| -> Result<(ClickStream, ClickStream)> {
        let photons = apply_channel(&events, ch, cfg.efficiency(which), det.timing_jitter_sigma, 0.0, duration, seed)?;
        let photons = add_background(&photons, cfg.noise_rate(which), 0.0, derive_seed(seed, "arm-noise"))?;
        split_stream(&photons, 0.5, derive_seed(seed, "beamsplitter"))
    };
    let (s_arm, as_arm) = rayon::join(
        || arm(pairs.stokes_times(), STOKES_A, Arm::Stokes),
        || arm(pairs.anti_stokes_times(), ANTI_STOKES_A, Arm::AntiStokes),
    );
    let (sa, sb) = s_arm?;
    let (aa, ab) = as_arm?;
    let detector = |s: ClickStream, ch: u8, which: Arm| {
        add_background(&s.with_channel(ch), cfg.dark_rate(which), det.dead_time, derive_seed(seed, "dark"))
    };
    Ok(vec![
        detector(sa, STOKES_A, Arm::Stokes)?,
        detector(aa, ANTI_STOKES_A, Arm::AntiStokes)?,
        detector(ab, ANTI_STOKES_B, Arm::AntiStokes)?,
        detector(sb, STOKES_B, Arm::Stokes)?,
    ])
}

#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    pub bin_width: f64,
    pub window: (f64, f64),
    pub mode: NormalizationMode,
    pub smooth_peak: bool,
    pub g2c_widths: Vec<f64>,
    pub g2c_offset: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bin_width: 1e-9,
            window: (-1e-6, 1e-6),
            mode: NormalizationMode::MeasuredFloor,
            smooth_peak: false,
            g2c_widths: [2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0].iter().map(|w| w * 1e-9).collect(),
            g2c_offset: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoSource {
    Measured,
    /// The arm's second detector is absent.
    Reference,
    /// Both detectors are present but the zero-delay bin is too sparse.
    ReferenceInsufficientStatistics,
}

fn autocorrelation(a: &ClickStream, b: Option<&ClickStream>, bin_width: f64, reference: Measured) -> Result<(Measured, AutoSource)> {
    match b {
        None => Ok((reference, AutoSource::Reference)),
        Some(b) => match auto_g2_zero(a, b, bin_width) {
            Ok(m) => Ok((m, AutoSource::Measured)),
            Err(Error::Statistics(_)) => Ok((reference, AutoSource::ReferenceInsufficientStatistics)),
            Err(e) => Err(e),
        },
    }
}

/// Contents of g2.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Summary {
    pub config_fingerprint: Option<String>,
    pub channels: Vec<u8>,
    pub duration_s: f64,
    pub bin_width_s: f64,
    pub window_s: (f64, f64),
    pub singles_stokes: u64,
    pub singles_anti_stokes: u64,
    pub total_coincidences: u64,
    pub normalization_mode: NormalizationMode,
    pub floor_counts_per_bin: Measured,
    pub g2_max: Measured,
    pub g2_max_tau_s: f64,
    pub tail_decay_estimate_s: Option<f64>,
    pub detected_pair_rate: Measured,
    pub back_out_generation_rate: Option<Measured>,
    pub configured_generation_rate: Option<f64>,
    pub decay_fit: Option<DecayFit>,
    pub bandwidth_hz: Option<f64>,
    pub decay_fit_error: Option<String>,
}

/// Contents of cs.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsSummary {
    pub config_fingerprint: Option<String>,
    pub check: CSCheck,
    pub g_ss0_source: AutoSource,
    pub g_asas0_source: AutoSource,
}

/// Contents of g2c.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2cSummary {
    pub config_fingerprint: Option<String>,
    pub result: ConditionalG2Result,
}

#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub histogram: CoincidenceHistogram,
    pub g2: G2Result,
    pub summary: G2Summary,
    pub cs: CsSummary,
    pub g2c: Option<G2cSummary>,
}

fn channel<'a>(streams: &'a [ClickStream], ch: u8) -> Option<&'a ClickStream> {
    streams.iter().find(|s| s.channel == ch)
}

/// Full analysis of a set of channels. `model` supplies the configuration
/// (for efficiency back-out and fingerprints) and the modeled pair rate.
pub fn analyze_streams(
    streams: &[ClickStream],
    model: Option<(&ExperimentConfig, f64)>,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    if let Some(s) = streams.iter().find(|s| s.channel > STOKES_B) {
        return Err(Error::InvalidInput(format!("unknown channel {} (expected 0-3)", s.channel)));
    }
    let s_a = channel(streams, STOKES_A).ok_or_else(|| Error::InvalidInput("missing Stokes channel 0".into()))?;
    let a_a = channel(streams, ANTI_STOKES_A).ok_or_else(|| Error::InvalidInput("missing anti-Stokes channel 1".into()))?;
    let a_b = channel(streams, ANTI_STOKES_B);
    let s_b = channel(streams, STOKES_B);
    let stokes = match s_b {
        Some(b) => merge_streams(s_a, b, STOKES_A),
        None => s_a.clone(),
    };
    let anti = match a_b {
        Some(b) => merge_streams(a_a, b, ANTI_STOKES_A),
        None => a_a.clone(),
    };
    let fingerprint = model.map(|(c, _)| c.fingerprint());

    let hist = coincidence_histogram(&stokes, &anti, opts.bin_width, opts.window)?;
    let g2 = normalize_g2_with(&hist, opts.mode, opts.smooth_peak)?;
    let detected = detected_pair_rate(&hist, &g2)?;
    let back_out = match model {
        Some((cfg, _)) => {
            let eta = cfg.efficiency(Arm::Stokes) * cfg.efficiency(Arm::AntiStokes);
            Some(Measured::new(back_out_generation_rate(detected.value, cfg)?, detected.uncertainty / eta))
        }
        None => None,
    };
    let (decay_fit, decay_fit_error) = match fit_histogram_decay(&hist, &g2, None) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let (g_ss, ss_src) = autocorrelation(s_a, s_b, opts.bin_width, REFERENCE_G_SS0)?;
    let (g_aa, aa_src) = autocorrelation(a_a, a_b, opts.bin_width, REFERENCE_G_ASAS0)?;
    let cs = CsSummary {
        config_fingerprint: fingerprint.clone(),
        check: cs_violation(g2.g2_max, g_ss, g_aa)?,
        g_ss0_source: ss_src,
        g_asas0_source: aa_src,
    };
    let g2c = match a_b {
        Some(b) => Some(G2cSummary {
            config_fingerprint: fingerprint.clone(),
            result: conditional_g2(&stokes, a_a, b, &opts.g2c_widths, opts.g2c_offset)?,
        }),
        None => None,
    };

    let summary = G2Summary {
        config_fingerprint: fingerprint,
        channels: streams.iter().map(|s| s.channel).collect(),
        duration_s: hist.duration(),
        bin_width_s: hist.bin_width(),
        window_s: (hist.window_ps.0 as f64 * 1e-12, hist.window_ps.1 as f64 * 1e-12),
        singles_stokes: hist.total_singles.0,
        singles_anti_stokes: hist.total_singles.1,
        total_coincidences: hist.total(),
        normalization_mode: g2.normalization_mode,
        floor_counts_per_bin: g2.floor,
        g2_max: g2.g2_max,
        g2_max_tau_s: g2.g2_max_tau,
        tail_decay_estimate_s: g2.tail_decay_estimate,
        detected_pair_rate: detected,
        back_out_generation_rate: back_out,
        configured_generation_rate: model.map(|(_, r)| r),
        bandwidth_hz: decay_fit.map(|f| 1.0 / (TWO_PI * f.tau_b)),
        decay_fit,
        decay_fit_error,
    };
    Ok(AnalysisReport { histogram: hist, g2, summary, cs, g2c })
}
