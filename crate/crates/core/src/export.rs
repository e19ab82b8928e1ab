//! CSV and JSON artifacts. Every file carries the configuration fingerprint
//! and is written atomically.
//!
//! Column contracts:
//! - spectra: `detuning_Hz,re,im` (detuning δ/2π)
//! - waveforms: `tau_ns,re_psi,im_psi,intensity` (intensity in pairs/s²)
//! - histograms: `tau_ns,counts,g2,stderr` (bin centers)

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::biphoton::BiphotonWaveform;
use crate::constants::TWO_PI;
use crate::correlation::{CoincidenceHistogram, G2Result};
use crate::error::{Error, Result};
use crate::spectral::ComplexSpectrum;

pub fn spectrum_csv(s: &ComplexSpectrum, fingerprint: &str) -> String {
    let mut out = format!("# label={} fingerprint={}\ndetuning_Hz,re,im\n", s.label.as_str(), fingerprint);
    for (j, v) in s.values.iter().enumerate() {
        let _ = writeln!(out, "{:e},{:e},{:e}", s.grid.value(j) / TWO_PI, v.re, v.im);
    }
    out
}

pub fn waveform_csv(w: &BiphotonWaveform) -> String {
    let mut out = format!("# label=waveform fingerprint={}\ntau_ns,re_psi,im_psi,intensity\n", w.config_fingerprint);
    for (m, (p, r)) in w.psi.iter().zip(&w.rate_density).enumerate() {
        let _ = writeln!(out, "{:e},{:e},{:e},{:e}", w.tau(m) * 1e9, p.re, p.im, r);
    }
    out
}

pub fn histogram_csv(h: &CoincidenceHistogram, g2: &G2Result, fingerprint: Option<&str>) -> String {
    let mut out = format!(
        "# label=histogram fingerprint={}\ntau_ns,counts,g2,stderr\n",
        fingerprint.unwrap_or("none")
    );
    for k in 0..h.n_bins() {
        let _ = writeln!(out, "{:e},{},{:e},{:e}", h.bin_center(k) * 1e9, h.counts[k], g2.g2[k], g2.stderr[k]);
    }
    out
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `bytes` to a sibling temp file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let written = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if written.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(written?)
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_atomic(path, to_json(v)?.as_bytes())
}
