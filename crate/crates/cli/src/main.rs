//! `biphoton` command-line front end.
//!
//! Exit status: 0 ok, 1 i/o or malformed input, 2 config error,
//! 3 numerical error, 4 insufficient statistics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biphoton::biphoton::solve;
use biphoton::calibration::{calibrate, default_anchors, load_anchors, CalibrationOptions};
use biphoton::config::{load_config_file, ExperimentConfig};
use biphoton::export::{histogram_csv, spectrum_csv, waveform_csv, write_atomic, write_json};
use biphoton::pipeline::{analyze_streams, simulate_streams, AnalysisOptions, AnalysisReport};
use biphoton::sweep::{load_sweep_spec, run_sweep, sweep_csv};
use biphoton::timestamps::{read_timestamps, write_bpht};
use biphoton::units::{parse_quantity, Dim};
use biphoton::{Error, Result};

#[derive(Parser)]
#[command(name = "biphoton", version, about = "EIT-assisted SFWM biphoton simulator and time-tag analyzer")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, env = "BIPHOTON_WORKERS", default_value_t = 0, global = true)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Joint spectrum, temporal waveform and metrics for one configuration.
    Waveform {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coupling- or pump-power sweep described by a TOML spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate detection for a configuration and analyze the result.
    Endtoend {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run length, e.g. `600 s`.
        #[arg(long, default_value = "600 s")]
        duration: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Analyze a BPHT or `channel,picoseconds` CSV timestamp file.
    Analyze {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run length; defaults to the last timestamp + 1 ps.
        #[arg(long)]
        duration: Option<String>,
        /// Configuration used for rate back-out and fingerprints.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Fit model parameters to measured anchors.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Anchor file; the built-in anchor set when omitted.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long, default_value = "1 ns")]
    bin_width: String,
    /// Delay window: `1 us` for ±1 µs, or `lo,hi`.
    #[arg(long, default_value = "1 us", allow_hyphen_values = true)]
    window: String,
}

fn time_arg(name: &str, text: &str) -> Result<f64> {
    parse_quantity(text, Dim::Time).map_err(|e| Error::invalid(name, e))
}

impl AnalysisArgs {
    fn options(&self) -> Result<AnalysisOptions> {
        let bin_width = time_arg("--bin-width", &self.bin_width)?;
        let window = match self.window.split_once(',') {
            Some((lo, hi)) => (time_arg("--window", lo)?, time_arg("--window", hi)?),
            None => {
                let w = time_arg("--window", &self.window)?;
                (-w.abs(), w.abs())
            }
        };
        Ok(AnalysisOptions { bin_width, window, ..Default::default() })
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_report(out: &Path, r: &AnalysisReport) -> Result<()> {
    let fp = r.summary.config_fingerprint.as_deref();
    write_atomic(&out.join("histogram.csv"), histogram_csv(&r.histogram, &r.g2, fp).as_bytes())?;
    write_json(&out.join("g2.json"), &r.summary)?;
    write_json(&out.join("cs.json"), &r.cs)?;
    if let Some(g) = &r.g2c {
        write_json(&out.join("g2c.json"), g)?;
    }
    Ok(())
}

fn print_summary(r: &AnalysisReport) {
    let s = &r.summary;
    println!(
        "g2_max = {:.3} ± {:.3}, floor = {:.3} counts/bin, detected pairs = {:.2} /s",
        s.g2_max.value, s.g2_max.uncertainty, s.floor_counts_per_bin.value, s.detected_pair_rate.value
    );
    if let (Some(b), Some(c)) = (s.back_out_generation_rate, s.configured_generation_rate) {
        println!("generation rate: backed out {:.1} ± {:.1} /s, configured {:.1} /s", b.value, b.uncertainty, c);
    }
    println!(
        "Cauchy-Schwarz factor = {:.2} ± {:.2} ({:?})",
        r.cs.check.violation_factor.value, r.cs.check.violation_factor.uncertainty, r.cs.check.verdict
    );
}

fn cmd_waveform(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config_file(config)?;
    let sol = solve(&cfg)?;
    prepare_dir(out)?;
    let fp = cfg.fingerprint();
    write_atomic(&out.join("jsa.csv"), spectrum_csv(&sol.jsa.as_spectrum(), &fp).as_bytes())?;
    write_atomic(&out.join("waveform.csv"), waveform_csv(&sol.waveform).as_bytes())?;
    write_json(&out.join("metrics.json"), &sol.metrics)?;
    let m = &sol.metrics;
    println!(
        "tau_b = {:.2} ns, 1/e time = {:.2} ns, bandwidth = {:.3} MHz, pair rate = {:.1} /s",
        m.decay_constant * 1e9,
        m.one_over_e_time * 1e9,
        m.bandwidth * 1e-6,
        m.pair_rate
    );
    Ok(())
}

fn cmd_sweep(spec_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", spec_path.display())))?;
    let dir = spec_path.parent().unwrap_or(Path::new("."));
    let spec = load_sweep_spec(&text, dir)?;
    let rows = run_sweep(&spec)?;
    prepare_dir(out)?;
    write_atomic(&out.join("sweep.csv"), sweep_csv(&spec, &rows).as_bytes())?;
    println!("{} rows written to {}", rows.len(), out.join("sweep.csv").display());
    Ok(())
}

fn cmd_endtoend(config: &Path, out: &Path, duration: &str, seed: u64, a: &AnalysisArgs) -> Result<()> {
    let cfg = load_config_file(config)?;
    let duration = time_arg("--duration", duration)?;
    let opts = a.options()?;
    let sol = solve(&cfg)?;
    let streams = simulate_streams(&cfg, &sol, duration, seed)?;
    prepare_dir(out)?;
    write_bpht(&out.join("streams.bpht"), &streams)?;
    let report = analyze_streams(&streams, Some((&cfg, sol.metrics.pair_rate)), &opts)?;
    write_report(out, &report)?;
    print_summary(&report);
    Ok(())
}

fn cmd_analyze(
    input: &Path,
    out: &Path,
    duration: Option<&str>,
    config: Option<&Path>,
    a: &AnalysisArgs,
) -> Result<()> {
    let opts = a.options()?;
    let duration = duration
        .map(|d| time_arg("--duration", d).map(biphoton::detection::seconds_to_ps))
        .transpose()?;
    if let Some(d) = duration {
        if d < 0 {
            return Err(Error::invalid("--duration", "must be ≥ 0"));
        }
    }
    let cfg: Option<ExperimentConfig> = config.map(load_config_file).transpose()?;
    let model = match &cfg {
        Some(c) => Some((c, solve(c)?.metrics.pair_rate)),
        None => None,
    };
    let streams = read_timestamps(input, duration.map(|d| d as u64))?;
    let report = analyze_streams(&streams, model, &opts)?;
    prepare_dir(out)?;
    write_report(out, &report)?;
    print_summary(&report);
    Ok(())
}

fn cmd_calibrate(config: &Path, anchors: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config_file(config)?;
    let anchors = match anchors {
        Some(p) => load_anchors(
            &std::fs::read_to_string(p).map_err(|e| Error::ConfigParse(format!("{}: {e}", p.display())))?,
        )?,
        None => default_anchors(),
    };
    let result = calibrate(&cfg, &anchors, &CalibrationOptions::default())?;
    prepare_dir(out)?;
    write_json(&out.join("calibration.json"), &result)?;
    write_atomic(&out.join("overlay.toml"), result.overlay_toml().as_bytes())?;
    if let Some(c) = &result.config {
        write_atomic(&out.join("calibrated.toml"), c.to_toml().as_bytes())?;
    }
    for r in &result.residuals {
        println!(
            "{:<16} pump {:>5.1} mW coupling {:>5.1} mW: target {:.4e} model {:.4e} ({:+.1}%)",
            format!("{:?}", r.kind),
            r.pump_power * 1e3,
            r.coupling_power * 1e3,
            r.target,
            r.model,
            r.relative * 100.0
        );
    }
    println!("converged after {} evaluations; fingerprint {}", result.evaluations, result.config_fingerprint);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| Error::invalid("BIPHOTON_WORKERS", e.to_string()))?;
    }
    match &cli.command {
        Command::Waveform { config, out } => cmd_waveform(config, out),
        Command::Sweep { spec, out } => cmd_sweep(spec, out),
        Command::Endtoend { config, out, duration, seed, analysis } => {
            cmd_endtoend(config, out, duration, *seed, analysis)
        }
        Command::Analyze { input, out, duration, config, analysis } => {
            cmd_analyze(input, out, duration.as_deref(), config.as_deref(), analysis)
        }
        Command::Calibrate { config, anchors, out } => cmd_calibrate(config, anchors.as_deref(), out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
