//! Seeded Monte Carlo of pair emission, detector channels and background.
//!
//! All times are integer picoseconds. Every operation is a pure function of
//! its inputs and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::biphoton::BiphotonWaveform;
use crate::error::{Error, Result};

pub const PS_PER_S: f64 = 1e12;

pub fn seconds_to_ps(t: f64) -> i64 {
    (t * PS_PER_S).round() as i64
}

/// Seed and the chain of operations that produced a stream.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub lineage: Vec<String>,
}

impl SeedRecord {
    fn then(&self, step: String) -> Self {
        let mut lineage = self.lineage.clone();
        lineage.push(step);
        Self { seed: self.seed, lineage }
    }
}

/// One detector channel: sorted timestamps in [0, duration) picoseconds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClickStream {
    pub channel: u8,
    pub timestamps: Vec<u64>,
    pub duration: u64,
    pub seed_record: SeedRecord,
}

impl ClickStream {
    pub fn new(channel: u8, timestamps: Vec<u64>, duration: u64) -> Result<Self> {
        let s = Self { channel, timestamps, duration, seed_record: SeedRecord::default() };
        s.check()?;
        Ok(s)
    }

    pub fn empty(channel: u8, duration: u64) -> Self {
        Self { channel, timestamps: Vec::new(), duration, seed_record: SeedRecord::default() }
    }

    pub fn check(&self) -> Result<()> {
        if let Some(i) = self.timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput(format!("channel {} is unsorted at click {}", self.channel, i + 1)));
        }
        if let Some(&last) = self.timestamps.last() {
            if last >= self.duration {
                return Err(Error::InvalidInput(format!(
                    "channel {} has a click at {last} ps beyond the duration {} ps",
                    self.channel, self.duration
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration as f64 / PS_PER_S
    }

    pub fn timestamps_s(&self) -> Vec<f64> {
        self.timestamps.iter().map(|&t| t as f64 / PS_PER_S).collect()
    }

    pub fn rate(&self) -> f64 {
        if self.duration == 0 {
            0.0
        } else {
            self.len() as f64 / self.duration_s()
        }
    }

    /// Smallest gap between consecutive clicks, if any.
    pub fn min_gap(&self) -> Option<u64> {
        self.timestamps.windows(2).map(|w| w[1] - w[0]).min()
    }

    /// Every timestamp moved by `shift` ps (duration grows by the same amount).
    pub fn shifted(&self, shift: u64) -> Self {
        Self {
            channel: self.channel,
            timestamps: self.timestamps.iter().map(|t| t + shift).collect(),
            duration: self.duration + shift,
            seed_record: self.seed_record.clone(),
        }
    }

    pub fn with_channel(mut self, channel: u8) -> Self {
        self.channel = channel;
        self
    }
}

/// Signal pairs (t_s, t_as) in picoseconds; t_as may fall outside the run.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEventList {
    pub events: Vec<(i64, i64)>,
    pub rate: f64,
    pub duration: u64,
    pub waveform_fingerprint: String,
    pub seed_record: SeedRecord,
}

impl PairEventList {
    pub fn stokes_times(&self) -> Vec<i64> {
        self.events.iter().map(|e| e.0).collect()
    }

    pub fn anti_stokes_times(&self) -> Vec<i64> {
        self.events.iter().map(|e| e.1).collect()
    }
}

/// Deterministic child seed for a named sub-stream.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(seed ^ splitmix(h))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rng(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag))
}

fn duration_ps(duration: f64) -> Result<u64> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidInput(format!("duration {duration} s must be finite and >= 0")));
    }
    Ok((duration * PS_PER_S).round() as u64)
}

/// Homogeneous Poisson arrival times in [0, duration_ps), sorted.
fn poisson_times(rate: f64, duration_ps: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidInput(format!("rate {rate} must be finite and >= 0")));
    }
    let mut out = Vec::new();
    if rate == 0.0 || duration_ps == 0 {
        return Ok(out);
    }
    let gap = Exp::new(rate / PS_PER_S).map_err(|e| Error::InvalidInput(e.to_string()))?;
    out.reserve((rate * duration_ps as f64 / PS_PER_S * 1.01) as usize + 16);
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        let ti = t.floor();
        if ti >= duration_ps as f64 {
            break;
        }
        out.push(ti as u64);
    }
    Ok(out)
}

/// Piecewise-linear inverse-CDF sampler over a waveform grid.
pub struct DelaySampler {
    tau0: f64,
    step: f64,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

impl DelaySampler {
    pub fn new(w: &BiphotonWaveform) -> Result<Self> {
        let density = w.intensity();
        if density.len() < 2 || density.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Numerical("waveform is not normalizable".into()));
        }
        let mut cdf = Vec::with_capacity(density.len());
        cdf.push(0.0);
        for k in 1..density.len() {
            let c = cdf[k - 1] + 0.5 * (density[k - 1] + density[k]) * w.tau_step;
            cdf.push(c);
        }
        let total = *cdf.last().unwrap();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical("waveform is not normalizable".into()));
        }
        Ok(Self { tau0: w.tau(0), step: w.tau_step, density, cdf })
    }

    /// Maps u ∈ [0,1) to a delay distributed per the interpolated |ψ|².
    pub fn delay(&self, u: f64) -> f64 {
        let target = u * self.cdf.last().unwrap();
        let k = self.cdf.partition_point(|&c| c <= target).clamp(1, self.cdf.len() - 1) - 1;
        let r = target - self.cdf[k];
        let a = self.density[k];
        let b = self.density[k + 1];
        let disc = (a * a + 2.0 * (b - a) * r / self.step).max(0.0);
        let denom = a + disc.sqrt();
        let s = if denom > 0.0 { (2.0 * r / denom).min(self.step) } else { 0.0 };
        self.tau0 + k as f64 * self.step + s
    }

    /// Probability mass of the interpolated density in [lo, hi).
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf_at(hi) - self.cdf_at(lo)) / self.cdf.last().unwrap()
    }

    fn cdf_at(&self, tau: f64) -> f64 {
        let x = (tau - self.tau0) / self.step;
        if x <= 0.0 {
            return 0.0;
        }
        let k = x.floor() as usize;
        if k + 1 >= self.cdf.len() {
            return *self.cdf.last().unwrap();
        }
        let s = (x - k as f64) * self.step;
        let a = self.density[k];
        let b = self.density[k + 1];
        self.cdf[k] + a * s + 0.5 * (b - a) * s * s / self.step
    }
}

/// Pairs with Poisson Stokes arrivals and delays drawn from |ψ(τ)|².
pub fn generate_pairs(rate: f64, waveform: &BiphotonWaveform, duration: f64, seed: u64) -> Result<PairEventList> {
    let dur = duration_ps(duration)?;
    let sampler = DelaySampler::new(waveform)?;
    let mut r = rng(seed, "pairs");
    let stokes = poisson_times(rate, dur, &mut r)?;
    let events = stokes
        .into_iter()
        .map(|ts| {
            let tau = sampler.delay(r.random::<f64>());
            (ts as i64, ts as i64 + seconds_to_ps(tau))
        })
        .collect();
    Ok(PairEventList {
        events,
        rate,
        duration: dur,
        waveform_fingerprint: waveform.config_fingerprint.clone(),
        seed_record: SeedRecord { seed, lineage: vec![format!("generate_pairs(rate={rate})")] },
    })
}

/// Non-paralyzable dead time on sorted timestamps.
pub fn apply_dead_time(ts: &[u64], dead_time_ps: u64) -> Vec<u64> {
    if dead_time_ps == 0 {
        return ts.to_vec();
    }
    let mut out = Vec::with_capacity(ts.len());
    let mut last: Option<u64> = None;
    for &t in ts {
        if last.is_none_or(|l| t - l >= dead_time_ps) {
            out.push(t);
            last = Some(t);
        }
    }
    out
}

/// Bernoulli thinning, Gaussian jitter, then dead time on one side of a pair list.
pub fn apply_channel(
    events: &[i64],
    channel: u8,
    efficiency: f64,
    jitter_sigma: f64,
    dead_time: f64,
    duration: f64,
    seed: u64,
) -> Result<ClickStream> {
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::InvalidInput(format!("efficiency {efficiency} outside [0, 1]")));
    }
    if !(jitter_sigma >= 0.0 && dead_time >= 0.0) {
        return Err(Error::InvalidInput("jitter and dead time must be >= 0".into()));
    }
    let dur = duration_ps(duration)?;
    let mut r = rng(seed, &format!("channel-{channel}"));
    let jitter = Normal::new(0.0, jitter_sigma * PS_PER_S).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut ts: Vec<u64> = Vec::with_capacity((events.len() as f64 * efficiency) as usize + 16);
    for &t in events {
        if efficiency < 1.0 && !r.random_bool(efficiency) {
            continue;
        }
        let t = if jitter_sigma > 0.0 { t + jitter.sample(&mut r).round() as i64 } else { t };
        if t >= 0 && (t as u64) < dur {
            ts.push(t as u64);
        }
    }
    ts.sort_unstable();
    let ts = apply_dead_time(&ts, (dead_time * PS_PER_S).round() as u64);
    Ok(ClickStream {
        channel,
        timestamps: ts,
        duration: dur,
        seed_record: SeedRecord {
            seed,
            lineage: vec![format!("apply_channel(eff={efficiency}, jitter={jitter_sigma}, dead={dead_time})")],
        },
    })
}

/// Merges an independent Poisson stream of the given rate; dead time is
/// re-applied to the merged stream when positive.
pub fn add_background(stream: &ClickStream, rate: f64, dead_time: f64, seed: u64) -> Result<ClickStream> {
    let mut r = rng(seed, &format!("background-{}", stream.channel));
    let bg = poisson_times(rate, stream.duration, &mut r)?;
    let merged = merge_sorted(&stream.timestamps, &bg);
    let ts = apply_dead_time(&merged, (dead_time.max(0.0) * PS_PER_S).round() as u64);
    Ok(ClickStream {
        channel: stream.channel,
        timestamps: ts,
        duration: stream.duration,
        seed_record: stream.seed_record.then(format!("add_background(rate={rate}, seed={seed})")),
    })
}

/// Routes each click to the first output with probability `ratio`.
pub fn split_stream(stream: &ClickStream, ratio: f64, seed: u64) -> Result<(ClickStream, ClickStream)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidInput(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut r = rng(seed, &format!("split-{}", stream.channel));
    let mut a = Vec::with_capacity((stream.len() as f64 * ratio) as usize + 16);
    let mut b = Vec::with_capacity((stream.len() as f64 * (1.0 - ratio)) as usize + 16);
    for &t in &stream.timestamps {
        if r.random_bool(ratio) {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    let rec = stream.seed_record.then(format!("split_stream(ratio={ratio}, seed={seed})"));
    Ok((
        ClickStream { channel: stream.channel, timestamps: a, duration: stream.duration, seed_record: rec.clone() },
        ClickStream { channel: stream.channel, timestamps: b, duration: stream.duration, seed_record: rec },
    ))
}

/// Union of two channels as one stream.
pub fn merge_streams(a: &ClickStream, b: &ClickStream, channel: u8) -> ClickStream {
    ClickStream {
        channel,
        timestamps: merge_sorted(&a.timestamps, &b.timestamps),
        duration: a.duration.max(b.duration),
        seed_record: SeedRecord {
            seed: a.seed_record.seed,
            lineage: vec![format!("merge({}, {})", a.channel, b.channel)],
        },
    }
}

pub fn merge_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_separates_tags() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(7, "x"), derive_seed(7, "x"));
    }

    #[test]
    fn dead_time_is_non_paralyzable() {
        let ts = [0, 5, 10, 12, 30];
        assert_eq!(apply_dead_time(&ts, 10), vec![0, 10, 30]);
        assert_eq!(apply_dead_time(&ts, 0), ts.to_vec());
    }

    #[test]
    fn identity_channel() {
        let ev: Vec<i64> = vec![3, 10, 10, 400, 999];
        let s = apply_channel(&ev, 1, 1.0, 0.0, 0.0, 1e-9, 5).unwrap();
        assert_eq!(s.timestamps, vec![3, 10, 10, 400, 999]);
    }

    #[test]
    fn background_zero_rate_is_identity() {
        let s = ClickStream::new(0, vec![1, 2, 3], 10).unwrap();
        let b = add_background(&s, 0.0, 0.0, 9).unwrap();
        assert_eq!(b.timestamps, s.timestamps);
    }

    #[test]
    fn split_ratio_extremes() {
        let s = ClickStream::new(0, (0..100).collect(), 1000).unwrap();
        let (a, b) = split_stream(&s, 1.0, 3).unwrap();
        assert_eq!(a.timestamps, s.timestamps);
        assert!(b.is_empty());
    }
}
