#![allow(dead_code)]

use biphoton::config::{load_config, ExperimentConfig};

pub fn calibrated() -> ExperimentConfig {
    load_config(include_str!("../../../../configs/calibrated.toml")).expect("calibrated config")
}

pub fn calibrated_at(pump_mw: f64, coupling_mw: f64) -> ExperimentConfig {
    let mut c = calibrated();
    c.lasers.pump_power = pump_mw * 1e-3;
    c.lasers.coupling_power = coupling_mw * 1e-3;
    c
}

pub fn uncalibrated() -> ExperimentConfig {
    load_config(include_str!("../../../../configs/defaults.toml")).expect("default config")
}
