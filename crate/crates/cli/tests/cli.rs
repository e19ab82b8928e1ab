use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn biphoton(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .args(args)
        .env("BIPHOTON_WORKERS", "1")
        .output()
        .expect("run biphoton")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn calibrated() -> PathBuf {
    configs().join("calibrated.toml")
}

/// calibrated.toml with one `key = value` line replaced.
fn patched(dir: &Path, key: &str, value: &str) -> PathBuf {
    let text = std::fs::read_to_string(calibrated()).unwrap();
    let out: Vec<String> = text
        .lines()
        .map(|l| if l.starts_with(&format!("{key} =")) { format!("{key} = {value}") } else { l.to_string() })
        .collect();
    let path = dir.join(format!("{key}.toml"));
    std::fs::write(&path, out.join("\n")).unwrap();
    path
}

#[test]
fn waveform_is_deterministic_and_fingerprinted() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = biphoton(&["waveform", "--config", p(&calibrated()), "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let fp = json(&a.join("metrics.json"))["config_fingerprint"].as_str().unwrap().to_string();
    assert_eq!(fp.len(), 16);
    for f in ["jsa.csv", "waveform.csv", "metrics.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs between runs");
        assert!(String::from_utf8_lossy(&x).contains(&fp), "{f} lacks fingerprint");
    }
    let csv = std::fs::read_to_string(a.join("waveform.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "tau_ns,re_psi,im_psi,intensity");
}

#[test]
fn zero_coupling_is_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), "coupling_power", "0.0");
    let o = biphoton(&["waveform", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("EIT window unresolvable"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), "coupling_power", "-1.0");
    let o = biphoton(&["waveform", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let junk = dir.path().join("junk.toml");
    std::fs::write(&junk, "[lasers\npump_power = ").unwrap();
    let o = biphoton(&["waveform", "--config", p(&junk), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn endtoend_then_analyze_agree() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e");
    let o = biphoton(&["endtoend", "--config", p(&calibrated()), "--out", p(&e), "--duration", "60 s", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let a = dir.path().join("a");
    let o = biphoton(&[
        "analyze",
        p(&e.join("streams.bpht")),
        "--out",
        p(&a),
        "--duration",
        "60 s",
        "--config",
        p(&calibrated()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["g2.json", "cs.json", "histogram.csv"] {
        assert_eq!(std::fs::read(e.join(f)).unwrap(), std::fs::read(a.join(f)).unwrap(), "{f} differs");
    }
    let g = json(&e.join("g2.json"));
    assert!(g["g2_max"]["value"].as_f64().unwrap() > 2.0);
    assert!(g["config_fingerprint"].is_string());
}

#[test]
fn endtoend_zero_duration_is_statistics_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = biphoton(&["endtoend", "--config", p(&calibrated()), "--out", p(dir.path()), "--duration", "0 s"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn truncated_bpht_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e");
    let o = biphoton(&["endtoend", "--config", p(&calibrated()), "--out", p(&e), "--duration", "20 s"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut bytes = std::fs::read(e.join("streams.bpht")).unwrap();
    bytes.truncate(bytes.len() - 3);
    let bad = dir.path().join("bad.bpht");
    std::fs::write(&bad, &bytes).unwrap();
    let o = biphoton(&["analyze", p(&bad), "--out", p(&dir.path().join("a"))]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("at byte") && msg.contains("truncated"), "{msg}");
}

/// Heralds every 2 µs; each partner lands 20 ns later on channel 1 or 2,
/// over a flat background on both.
fn three_channel_csv() -> String {
    let mut s = String::from("channel,picoseconds\n");
    let mut x: u64 = 12345;
    let mut next = move || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        x >> 33
    };
    let mut rows = Vec::new();
    for k in 0..200_000u64 {
        let t = k * 2_000_000 + 1000;
        rows.push((t, 0u8));
        let ch = 1 + (next() % 2) as u8;
        rows.push((t + 20_000 + next() % 4000, ch));
        for ch in [1u8, 2] {
            if next() % 4 == 0 {
                rows.push((k * 2_000_000 + next() % 2_000_000, ch));
            }
        }
    }
    rows.sort();
    let mut last = [None::<u64>; 3];
    for (t, ch) in rows {
        if last[ch as usize] == Some(t) {
            continue;
        }
        last[ch as usize] = Some(t);
        let _ = writeln!(s, "{ch},{t}");
    }
    s
}

#[test]
fn three_channel_csv_yields_g2c() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tags.csv");
    std::fs::write(&input, three_channel_csv()).unwrap();
    let out = dir.path().join("o");
    let o = biphoton(&["analyze", p(&input), "--out", p(&out), "--window", "-200 ns,800 ns"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g = json(&out.join("g2c.json"));
    let first = g["result"]["g2c"][0]["value"].as_f64().unwrap();
    assert!(first < 0.1, "g2c {first}");
}

#[test]
fn single_anchor_calibration_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let anchors = dir.path().join("a.toml");
    std::fs::write(
        &anchors,
        "[[anchor]]\nkind = \"one_over_e_time\"\npump_power = \"6 mW\"\ncoupling_power = \"27 mW\"\nvalue = \"47 ns\"\n",
    )
    .unwrap();
    let o = biphoton(&[
        "calibrate",
        "--config",
        p(&configs().join("defaults.toml")),
        "--anchors",
        p(&anchors),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn sweep_csv_carries_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let o = biphoton(&["sweep", "--spec", p(&configs().join("sweep_coupling.toml")), "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("# label=sweep"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 5);
    for row in csv.lines().skip(2) {
        let fp = row.rsplit(',').next().unwrap();
        assert!(fp.len() == 16 && fp.chars().all(|c| c.is_ascii_hexdigit()), "{row}");
    }
}
