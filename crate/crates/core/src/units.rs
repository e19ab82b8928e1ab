//! Explicit unit-suffix parsing for configuration values.
//!
//! A bare number is taken as SI. A string carries a unit suffix, e.g.
//! `"6 mW"`, `"-2.7 GHz"`, `"63 degC"`. Angular-frequency fields accept
//! either `rad/s` or a cyclic unit (`Hz`, `MHz`, ...) which is multiplied by 2π.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer};

use crate::constants::{AMU, TWO_PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Power,
    Length,
    Temperature,
    Time,
    Frequency,
    AngularFrequency,
    Angle,
    Mass,
    Dipole,
    Density,
    Ratio,
    Decibel,
}

fn scale(dim: Dim, unit: &str) -> Option<(f64, f64)> {
    // (multiplier, offset)
    let m = |x: f64| Some((x, 0.0));
    let hz = |u: &str| match u {
        "Hz" => Some(1.0),
        "kHz" => Some(1e3),
        "MHz" => Some(1e6),
        "GHz" => Some(1e9),
        _ => None,
    };
    match dim {
        Dim::Power => match unit {
            "W" => m(1.0),
            "mW" => m(1e-3),
            "uW" | "µW" => m(1e-6),
            "nW" => m(1e-9),
            _ => None,
        },
        Dim::Length => match unit {
            "m" => m(1.0),
            "cm" => m(1e-2),
            "mm" => m(1e-3),
            "um" | "µm" => m(1e-6),
            "nm" => m(1e-9),
            "in" | "inch" => m(0.0254),
            _ => None,
        },
        Dim::Temperature => match unit {
            "K" => m(1.0),
            "degC" | "C" | "°C" => Some((1.0, 273.15)),
            _ => None,
        },
        Dim::Time => match unit {
            "s" => m(1.0),
            "ms" => m(1e-3),
            "us" | "µs" => m(1e-6),
            "ns" => m(1e-9),
            "ps" => m(1e-12),
            _ => None,
        },
        Dim::Frequency => hz(unit).map(|x| (x, 0.0)),
        Dim::AngularFrequency => match unit {
            "rad/s" => m(1.0),
            "krad/s" => m(1e3),
            "Mrad/s" => m(1e6),
            "Grad/s" => m(1e9),
            _ => hz(unit).map(|x| (x * TWO_PI, 0.0)),
        },
        Dim::Angle => match unit {
            "rad" => m(1.0),
            "mrad" => m(1e-3),
            "deg" | "°" => m(std::f64::consts::PI / 180.0),
            _ => None,
        },
        Dim::Mass => match unit {
            "kg" => m(1.0),
            "u" | "amu" => m(AMU),
            _ => None,
        },
        Dim::Dipole => match unit {
            "C*m" | "C·m" | "C m" | "Cm" => m(1.0),
            _ => None,
        },
        Dim::Density => match unit {
            "m^-3" | "/m^3" => m(1.0),
            "cm^-3" | "/cm^3" => m(1e6),
            _ => None,
        },
        Dim::Ratio => match unit {
            "%" => m(1e-2),
            _ => None,
        },
        Dim::Decibel => match unit {
            "dB" => m(1.0),
            _ => None,
        },
    }
}

/// Parses `"<number> <unit>"` (whitespace optional) into an SI value.
pub fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, ch)| {
            !(ch.is_ascii_digit() || ch == '.' || ch == '+' || ch == '-' || ch == '−')
                && !((ch == 'e' || ch == 'E')
                    && t[i + 1..].starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+'))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .replace('−', "-")
        .parse()
        .map_err(|_| format!("cannot parse number in {text:?}"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    let (mult, offset) =
        scale(dim, unit).ok_or_else(|| format!("unknown unit {unit:?} for {dim:?} in {text:?}"))?;
    Ok(value * mult + offset)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Int(i64),
    Float(f64),
    Str(String),
}

impl NumOrStr {
    fn resolve(self, dim: Dim) -> Result<f64, String> {
        match self {
            NumOrStr::Int(i) => Ok(i as f64),
            NumOrStr::Float(f) => Ok(f),
            NumOrStr::Str(s) => parse_quantity(&s, dim),
        }
    }
}

macro_rules! unit_de {
    ($name:ident, $opt:ident, $dim:expr) => {
        pub fn $name<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            NumOrStr::deserialize(d)?.resolve($dim).map_err(D::Error::custom)
        }
        #[allow(dead_code)]
        pub fn $opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Option::<NumOrStr>::deserialize(d)?
                .map(|v| v.resolve($dim))
                .transpose()
                .map_err(D::Error::custom)
        }
    };
}

unit_de!(power, power_opt, Dim::Power);
unit_de!(length, length_opt, Dim::Length);
unit_de!(temperature, temperature_opt, Dim::Temperature);
unit_de!(time, time_opt, Dim::Time);
unit_de!(frequency, frequency_opt, Dim::Frequency);
unit_de!(angular, angular_opt, Dim::AngularFrequency);
unit_de!(angle, angle_opt, Dim::Angle);
unit_de!(mass, mass_opt, Dim::Mass);
unit_de!(dipole, dipole_opt, Dim::Dipole);
unit_de!(density, density_opt, Dim::Density);
unit_de!(ratio, ratio_opt, Dim::Ratio);
unit_de!(decibel, decibel_opt, Dim::Decibel);
