//! Coincidence histograms, normalized correlation functions and the
//! nonclassicality tests built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::{fit_log_linear, DecayFit};
use crate::config::{Arm, ExperimentConfig};
use crate::detection::{ClickStream, PS_PER_S};
use crate::error::{Error, Result};

/// A value with its one-sigma uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub uncertainty: f64,
}

impl Measured {
    pub fn new(value: f64, uncertainty: f64) -> Self {
        Self { value, uncertainty }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: u64,
    /// [τ_min, τ_max) in ps, τ = t_as − t_s.
    pub window_ps: (i64, i64),
    pub counts: Vec<u64>,
    /// (N_s, N_as).
    pub total_singles: (u64, u64),
    pub duration_ps: u64,
}

impl CoincidenceHistogram {
    pub fn bin_width(&self) -> f64 {
        self.bin_width_ps as f64 / PS_PER_S
    }

    pub fn duration(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_S
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Left edge of bin k in seconds.
    pub fn bin_start(&self, k: usize) -> f64 {
        (self.window_ps.0 + k as i64 * self.bin_width_ps as i64) as f64 / PS_PER_S
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.bin_start(k) + 0.5 * self.bin_width()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn to_ps(t: f64) -> i64 {
    (t * PS_PER_S).round() as i64
}

fn ensure_sorted(s: &ClickStream) -> Result<()> {
    if let Some(i) = s.timestamps.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(format!("channel {} is unsorted at click {}", s.channel, i + 1)));
    }
    Ok(())
}

/// Counts every ordered pair with t_as − t_s inside the window with a
/// two-pointer sweep. Stokes clicks are processed in parallel segments
/// whose partial histograms are summed exactly.
pub fn coincidence_histogram(
    s: &ClickStream,
    a: &ClickStream,
    bin_width: f64,
    window: (f64, f64),
) -> Result<CoincidenceHistogram> {
    ensure_sorted(s)?;
    ensure_sorted(a)?;
    let bw = to_ps(bin_width);
    if bw <= 0 {
        return Err(Error::InvalidInput(format!("bin width {bin_width} s must be at least 1 ps")));
    }
    let lo = to_ps(window.0);
    let hi = to_ps(window.1);
    if hi <= lo {
        return Err(Error::InvalidInput(format!("empty correlation window ({}, {}) s", window.0, window.1)));
    }
    let n_bins = ((hi - lo) as f64 / bw as f64).round() as usize;
    if n_bins < 100 {
        return Err(Error::InvalidInput(format!("window spans {n_bins} bins; at least 100 are required")));
    }
    let hi = lo + n_bins as i64 * bw;
    let ts = &s.timestamps;
    let ta = &a.timestamps;
    let chunk = (ts.len() / (4 * rayon::current_num_threads()).max(1)).max(4096);
    let counts = ts
        .par_chunks(chunk)
        .map(|seg| {
            let mut h = vec![0u64; n_bins];
            let first = seg[0] as i64 + lo;
            let mut j = ta.partition_point(|&t| (t as i64) < first);
            for &t in seg {
                let t = t as i64;
                while j < ta.len() && (ta[j] as i64) < t + lo {
                    j += 1;
                }
                let mut k = j;
                while k < ta.len() && (ta[k] as i64) < t + hi {
                    h[((ta[k] as i64 - t - lo) / bw) as usize] += 1;
                    k += 1;
                }
            }
            h
        })
        .reduce(
            || vec![0u64; n_bins],
            |mut x, y| {
                for (a, b) in x.iter_mut().zip(y) {
                    *a += b;
                }
                x
            },
        );
    Ok(CoincidenceHistogram {
        bin_width_ps: bw as u64,
        window_ps: (lo, hi),
        counts,
        total_singles: (s.len() as u64, a.len() as u64),
        duration_ps: s.duration.max(a.duration),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// N_s·N_as·Δτ/T.
    AnalyticFloor,
    /// Mean of the bins more than five decay constants from the peak.
    MeasuredFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Result {
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub normalization_mode: NormalizationMode,
    /// Accidental coincidences per bin.
    pub floor: Measured,
    pub g2_max: Measured,
    pub g2_max_tau: f64,
    /// Decay estimate used to locate the floor region (measured mode).
    pub tail_decay_estimate: Option<f64>,
    /// Bins treated as floor (measured mode); everything else is signal.
    #[serde(skip)]
    pub floor_bins: Vec<bool>,
    pub smoothed_peak: bool,
}

fn median(x: &[u64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

fn smooth3(c: &[u64]) -> Vec<f64> {
    (0..c.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(c.len() - 1);
            c[lo..=hi].iter().sum::<u64>() as f64 / (hi - lo + 1) as f64
        })
        .collect()
}

fn argmax_f(x: &[f64]) -> usize {
    let mut b = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[b] {
            b = i;
        }
    }
    b
}

/// Bins at least `reach` bins away from the peak.
fn mask_beyond(n: usize, ip: usize, reach: usize) -> Vec<bool> {
    (0..n).map(|i| i.abs_diff(ip) >= reach).collect()
}

fn masked_mean(h: &CoincidenceHistogram, mask: &[bool]) -> Result<Measured> {
    let (sum, cnt) = h
        .counts
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0u64, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    if cnt == 0 {
        return Err(Error::Statistics("zero floor: no bins beyond five decay constants".into()));
    }
    if sum == 0 {
        return Err(Error::Statistics("zero floor: tail bins are empty".into()));
    }
    Ok(Measured::new(sum as f64 / cnt as f64, (sum as f64).sqrt() / cnt as f64))
}

/// Floor from the bins farther than five decay constants from the peak.
/// The decay constant starts as the 1/e point of the excess over the median
/// and is replaced by the fitted value when that is longer.
fn measured_floor(h: &CoincidenceHistogram) -> Result<(Measured, Vec<bool>, Option<f64>)> {
    let n = h.n_bins();
    let f0 = median(&h.counts);
    let sm = smooth3(&h.counts);
    let ip = argmax_f(&sm);
    let amp = sm[ip] - f0;
    if !(amp > 5.0 * f0.max(1.0).sqrt() / 3f64.sqrt()) {
        let mask = vec![true; n];
        return Ok((masked_mean(h, &mask)?, mask, None));
    }
    let level = f0 + amp / std::f64::consts::E;
    let k = (ip..n).find(|&k| sm[k] <= level).unwrap_or(n - 1);
    let mut tau_bins = (k - ip).max(1) as f64;
    let mut mask = mask_beyond(n, ip, (5.0 * tau_bins).ceil() as usize);
    let mut floor = masked_mean(h, &mask)?;
    if let Ok(fit) = fit_decay_fixed_floor(h, floor.value, None) {
        let fitted = fit.tau_b / h.bin_width();
        if fitted > tau_bins {
            let wider = mask_beyond(n, ip, (5.0 * fitted).ceil() as usize);
            if let Ok(f) = masked_mean(h, &wider) {
                tau_bins = fitted;
                mask = wider;
                floor = f;
            }
        }
    }
    Ok((floor, mask, Some(tau_bins * h.bin_width())))
}

pub fn normalize_g2(h: &CoincidenceHistogram, mode: NormalizationMode) -> Result<G2Result> {
    normalize_g2_with(h, mode, false)
}

/// g2 = counts/floor with Poisson errors; `smooth_peak` reports g2_max as
/// the largest 3-bin average instead of the largest single bin.
pub fn normalize_g2_with(h: &CoincidenceHistogram, mode: NormalizationMode, smooth_peak: bool) -> Result<G2Result> {
    if h.counts.is_empty() {
        return Err(Error::Statistics("empty histogram".into()));
    }
    let (floor, floor_bins, tail) = match mode {
        NormalizationMode::AnalyticFloor => {
            let (ns, na) = h.total_singles;
            if ns == 0 || na == 0 || h.duration_ps == 0 {
                return Err(Error::Statistics("zero floor: no singles".into()));
            }
            let f = ns as f64 * na as f64 * h.bin_width() / h.duration();
            let rel = (1.0 / ns as f64 + 1.0 / na as f64).sqrt();
            (Measured::new(f, f * rel), vec![true; h.n_bins()], None)
        }
        NormalizationMode::MeasuredFloor => measured_floor(h)?,
    };
    let g2: Vec<f64> = h.counts.iter().map(|&c| c as f64 / floor.value).collect();
    let stderr: Vec<f64> = h.counts.iter().map(|&c| (c as f64).sqrt() / floor.value).collect();
    let (ip, peak_counts, peak_var) = if smooth_peak {
        let sm = smooth3(&h.counts);
        let ip = argmax_f(&sm);
        let lo = ip.saturating_sub(1);
        let hi = (ip + 1).min(h.n_bins() - 1);
        let width = (hi - lo + 1) as f64;
        (ip, sm[ip], sm[ip] / width)
    } else {
        let ip = argmax_f(&h.counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        (ip, h.counts[ip] as f64, h.counts[ip] as f64)
    };
    let gm = peak_counts / floor.value;
    let rel2 = if peak_counts > 0.0 { peak_var / peak_counts.powi(2) } else { 0.0 } + (floor.uncertainty / floor.value).powi(2);
    Ok(G2Result {
        tau: (0..h.n_bins()).map(|k| h.bin_center(k)).collect(),
        g2,
        stderr,
        normalization_mode: mode,
        floor,
        g2_max: Measured::new(gm, gm * rel2.sqrt()),
        g2_max_tau: h.bin_center(ip),
        tail_decay_estimate: tail,
        floor_bins,
        smoothed_peak: smooth_peak,
    })
}

/// Zero-delay autocorrelation from the two outputs of a beamsplitter:
/// coincidences with |t_b − t_a| < bin_width/2 over the analytic floor.
pub fn auto_g2_zero(arm_a: &ClickStream, arm_b: &ClickStream, bin_width: f64) -> Result<Measured> {
    ensure_sorted(arm_a)?;
    ensure_sorted(arm_b)?;
    let bw = to_ps(bin_width);
    if bw <= 0 {
        return Err(Error::InvalidInput("bin width must be at least 1 ps".into()));
    }
    let duration = arm_a.duration.max(arm_b.duration);
    let (na, nb) = (arm_a.len() as f64, arm_b.len() as f64);
    if na == 0.0 || nb == 0.0 || duration == 0 {
        return Err(Error::Statistics("autocorrelation needs clicks in both arms".into()));
    }
    let half = bw / 2;
    let tb = &arm_b.timestamps;
    let mut j = 0usize;
    let mut c = 0u64;
    for &t in &arm_a.timestamps {
        let t = t as i64;
        while j < tb.len() && (tb[j] as i64) <= t - half - (bw & 1) {
            j += 1;
        }
        let mut k = j;
        // |Δ| < bw/2 for even bw; |Δ| <= bw/2 − 1/2 in integer ps otherwise
        while k < tb.len() && 2 * ((tb[k] as i64) - t) < bw {
            if 2 * ((tb[k] as i64) - t) > -bw {
                c += 1;
            }
            k += 1;
        }
    }
    let floor = na * nb * (bw as f64 / PS_PER_S) / (duration as f64 / PS_PER_S);
    let value = c as f64 / floor;
    let unc = (c.max(1) as f64).sqrt() / floor;
    if unc > value {
        return Err(Error::Statistics(format!("g2(0) undetermined: {c} coincidences at zero delay")));
    }
    Ok(Measured::new(value, unc))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Violated,
    NotViolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CSCheck {
    pub g2m: Measured,
    pub g_ss0: Measured,
    pub g_asas0: Measured,
    pub violation_factor: Measured,
    pub verdict: Verdict,
}

/// [g2m]²/(g_ss(0)·g_asas(0)) with first-order error propagation.
pub fn cs_violation(g2m: Measured, g_ss0: Measured, g_asas0: Measured) -> Result<CSCheck> {
    for (name, m) in [("g2m", g2m), ("g_ss0", g_ss0), ("g_asas0", g_asas0)] {
        if !(m.value > 0.0) || !(m.uncertainty >= 0.0) {
            return Err(Error::InvalidInput(format!("{name} must be positive with a nonnegative uncertainty")));
        }
    }
    let f = g2m.value * g2m.value / (g_ss0.value * g_asas0.value);
    let rel = ((2.0 * g2m.uncertainty / g2m.value).powi(2)
        + (g_ss0.uncertainty / g_ss0.value).powi(2)
        + (g_asas0.uncertainty / g_asas0.value).powi(2))
    .sqrt();
    let u = f * rel;
    Ok(CSCheck {
        g2m,
        g_ss0,
        g_asas0,
        violation_factor: Measured::new(f, u),
        verdict: if f - u > 1.0 { Verdict::Violated } else { Verdict::NotViolated },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalG2Result {
    pub window_widths: Vec<f64>,
    pub offset: f64,
    pub g2c: Vec<Measured>,
    pub n1: u64,
    pub n12: Vec<u64>,
    pub n13: Vec<u64>,
    pub n123: Vec<u64>,
}

/// Heralded autocorrelation g2c = N₁·N₁₂₃/(N₁₂·N₁₃) for each window width;
/// the window of a herald at t is [t + offset, t + offset + Δτ).
pub fn conditional_g2(
    trigger: &ClickStream,
    arm_a: &ClickStream,
    arm_b: &ClickStream,
    window_widths: &[f64],
    offset: f64,
) -> Result<ConditionalG2Result> {
    ensure_sorted(trigger)?;
    ensure_sorted(arm_a)?;
    ensure_sorted(arm_b)?;
    if window_widths.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidInput("window widths must be > 0".into()));
    }
    let off = to_ps(offset);
    let first_after = |arm: &[u64]| -> Vec<u64> {
        let mut j = 0usize;
        trigger
            .timestamps
            .iter()
            .map(|&t| {
                let start = t as i64 + off;
                while j < arm.len() && (arm[j] as i64) < start {
                    j += 1;
                }
                if j < arm.len() {
                    (arm[j] as i64 - start) as u64
                } else {
                    u64::MAX
                }
            })
            .collect()
    };
    let (da, db) = rayon::join(|| first_after(&arm_a.timestamps), || first_after(&arm_b.timestamps));
    let n1 = trigger.len() as u64;
    let mut out = ConditionalG2Result {
        window_widths: window_widths.to_vec(),
        offset,
        g2c: Vec::new(),
        n1,
        n12: Vec::new(),
        n13: Vec::new(),
        n123: Vec::new(),
    };
    for &w in window_widths {
        let wp = to_ps(w).max(1) as u64;
        let (mut n12, mut n13, mut n123) = (0u64, 0u64, 0u64);
        for (&a, &b) in da.iter().zip(&db) {
            let (ha, hb) = (a < wp, b < wp);
            n12 += ha as u64;
            n13 += hb as u64;
            n123 += (ha && hb) as u64;
        }
        if n12 == 0 || n13 == 0 {
            return Err(Error::Statistics(format!("no heralded clicks in one arm for window {w} s")));
        }
        let g = n1 as f64 * n123 as f64 / (n12 as f64 * n13 as f64);
        let u = if n123 > 0 {
            g * (1.0 / n123 as f64 + 1.0 / n12 as f64 + 1.0 / n13 as f64 + 1.0 / n1 as f64).sqrt()
        } else {
            n1 as f64 / (n12 as f64 * n13 as f64)
        };
        out.g2c.push(Measured::new(g, u));
        out.n12.push(n12);
        out.n13.push(n13);
        out.n123.push(n123);
    }
    Ok(out)
}

/// Generated pair rate from a detected one: detected/(η_s·η_as).
pub fn back_out_generation_rate(detected_pair_rate: f64, cfg: &ExperimentConfig) -> Result<f64> {
    let eta = cfg.efficiency(Arm::Stokes) * cfg.efficiency(Arm::AntiStokes);
    if !(eta > 0.0) {
        return Err(Error::InvalidInput("zero detection efficiency".into()));
    }
    Ok(detected_pair_rate / eta)
}

/// Floor-subtracted coincidences outside the floor region, per second.
pub fn detected_pair_rate(h: &CoincidenceHistogram, g2: &G2Result) -> Result<Measured> {
    if h.duration_ps == 0 {
        return Err(Error::Statistics("zero duration".into()));
    }
    let mut sum = 0.0;
    let mut raw = 0u64;
    let mut nb = 0usize;
    for (c, &f) in h.counts.iter().zip(&g2.floor_bins) {
        if !f {
            sum += *c as f64 - g2.floor.value;
            raw += c;
            nb += 1;
        }
    }
    if nb == 0 {
        return Err(Error::Statistics("no signal region in histogram".into()));
    }
    let var = raw as f64 + (nb as f64 * g2.floor.uncertainty).powi(2);
    let t = h.duration();
    Ok(Measured::new(sum / t, var.sqrt() / t))
}

/// Poisson maximum-likelihood fit of counts = floor + A·exp(−τ/τ_b) with
/// the floor held fixed. The default window runs from peak + 5 ns to where
/// the counts fall to twice the floor.
pub fn fit_histogram_decay(h: &CoincidenceHistogram, g2: &G2Result, window: Option<(f64, f64)>) -> Result<DecayFit> {
    fit_decay_fixed_floor(h, g2.floor.value, window)
}

fn fit_decay_fixed_floor(h: &CoincidenceHistogram, b: f64, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let sm = smooth3(&h.counts);
    let ip = argmax_f(&sm);
    if !(sm[ip] - b > 5.0 * b.max(1.0).sqrt()) {
        return Err(Error::Numerical("fit failure: no significant correlation peak above the floor".into()));
    }
    let (lo, hi) = match window {
        Some(w) => w,
        None => {
            let wide: Vec<f64> = (0..h.n_bins())
                .map(|i| {
                    let lo = i.saturating_sub(2);
                    let hi = (i + 2).min(h.n_bins() - 1);
                    h.counts[lo..=hi].iter().sum::<u64>() as f64 / (hi - lo + 1) as f64
                })
                .collect();
            let end = (ip..h.n_bins()).find(|&k| wide[k] <= 2.0 * b).unwrap_or(h.n_bins() - 1);
            (h.bin_center(ip) + 5e-9, h.bin_center(end))
        }
    };
    let idx: Vec<usize> = (ip..h.n_bins()).filter(|&k| h.bin_center(k) >= lo && h.bin_center(k) <= hi).collect();
    if idx.len() < 10 {
        return Err(Error::Numerical(format!("fit window holds {} bins past the peak; need 10", idx.len())));
    }
    let t0 = h.bin_center(idx[0]);
    let t: Vec<f64> = idx.iter().map(|&k| h.bin_center(k) - t0).collect();
    let n: Vec<f64> = idx.iter().map(|&k| h.counts[k] as f64).collect();

    // start from a log-linear fit of the excess
    let (mut la, mut lam) = {
        let pos: Vec<(f64, f64)> = t.iter().zip(&n).filter(|(_, &c)| c - b > 0.0).map(|(&x, &c)| (x, c - b)).collect();
        let tt: Vec<f64> = pos.iter().map(|p| p.0).collect();
        let yy: Vec<f64> = pos.iter().map(|p| p.1).collect();
        let f = fit_log_linear(&tt, &yy, &yy)?;
        let a0 = yy.iter().zip(&tt).map(|(y, x)| y * (x / f.tau_b).exp()).sum::<f64>() / yy.len() as f64;
        (a0.max(1e-300).ln(), 1.0 / f.tau_b)
    };
    let loglik = |la: f64, lam: f64| -> f64 {
        let a = la.exp();
        t.iter().zip(&n).map(|(&x, &c)| {
            let mu = b + a * (-lam * x).exp();
            c * mu.ln() - mu
        }).sum()
    };
    let fisher = |la: f64, lam: f64| -> ([f64; 2], [[f64; 2]; 2]) {
        let a = la.exp();
        let mut g = [0.0; 2];
        let mut f = [[0.0; 2]; 2];
        for (&x, &c) in t.iter().zip(&n) {
            let s = a * (-lam * x).exp();
            let mu = b + s;
            let d = [s, -x * s];
            let r = c / mu - 1.0;
            for i in 0..2 {
                g[i] += r * d[i];
                for j in 0..2 {
                    f[i][j] += d[i] * d[j] / mu;
                }
            }
        }
        (g, f)
    };
    let mut ll = loglik(la, lam);
    let mut converged = false;
    for _ in 0..200 {
        let (g, f) = fisher(la, lam);
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        if !(det > 0.0) {
            break;
        }
        let step = [(f[1][1] * g[0] - f[0][1] * g[1]) / det, (f[0][0] * g[1] - f[1][0] * g[0]) / det];
        let mut h_ = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (na, nl) = (la + h_ * step[0], lam + h_ * step[1]);
            let nll = loglik(na, nl);
            if nll.is_finite() && nll >= ll - 1e-12 * ll.abs() {
                la = na;
                lam = nl;
                ll = nll;
                accepted = true;
                break;
            }
            h_ *= 0.5;
        }
        if !accepted || (step[1] * h_).abs() <= 1e-10 * lam.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("decay fit did not converge".into()));
    }
    if !(lam > 0.0) {
        return Err(Error::Numerical(format!("non-decaying data (rate {lam:.3e} per s)")));
    }
    let (_, f) = fisher(la, lam);
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    let var_lam = f[0][0] / det;
    Ok(DecayFit { tau_b: 1.0 / lam, stderr: var_lam.sqrt() / (lam * lam), window: (lo, hi), points: idx.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(ch: u8, ts: Vec<u64>, d: u64) -> ClickStream {
        ClickStream::new(ch, ts, d).unwrap()
    }

    #[test]
    fn single_pair_lands_in_zero_bin() {
        let s = stream(0, vec![5_000], 1_000_000);
        let a = stream(1, vec![5_000], 1_000_000);
        let h = coincidence_histogram(&s, &a, 1e-9, (-50e-9, 50e-9)).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[50], 1);
        assert!((h.bin_start(50)).abs() < 1e-15);
    }

    #[test]
    fn window_preconditions() {
        let s = stream(0, vec![1], 10);
        assert!(coincidence_histogram(&s, &s, 1e-9, (1e-9, 1e-9)).is_err());
        assert!(coincidence_histogram(&s, &s, 1e-9, (0.0, 50e-9)).is_err());
        let bad = ClickStream { channel: 0, timestamps: vec![5, 3], duration: 10, seed_record: Default::default() };
        assert!(coincidence_histogram(&bad, &s, 1e-9, (-1e-7, 1e-7)).is_err());
    }

    #[test]
    fn cs_arithmetic() {
        let m = |v| Measured::new(v, 0.0);
        let c = cs_violation(m(11.0), m(2.0), m(1.6)).unwrap();
        assert!((c.violation_factor.value - 37.8125).abs() < 1e-12);
        let c = cs_violation(m(6.0), m(2.0), m(1.6)).unwrap();
        assert!((c.violation_factor.value - 11.25).abs() < 1e-12);
        let c = cs_violation(m(1.0), m(1.0), m(1.0)).unwrap();
        assert_eq!(c.verdict, Verdict::NotViolated);
        assert!(cs_violation(m(0.0), m(1.0), m(1.0)).is_err());
    }

    #[test]
    fn back_out_arithmetic() {
        let cfg = ExperimentConfig::with_powers(6e-3, 27e-3);
        let r = back_out_generation_rate(76.8, &cfg).unwrap();
        assert!((r - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn auto_g2_counts_zero_bin_only() {
        let a = stream(0, vec![1000, 5000], 1_000_000);
        let b = stream(1, vec![1400, 5600, 9000], 1_000_000);
        // bin 1 ns: |Δ| < 500 ps → only the pair at 1000/1400
        let g = auto_g2_zero(&a, &b, 1e-9).unwrap();
        let floor = 2.0 * 3.0 * 1e-9 / 1e-6;
        assert!((g.value - 1.0 / floor).abs() < 1e-9);
    }
}
