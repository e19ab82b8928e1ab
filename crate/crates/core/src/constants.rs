//! CODATA 2018 constants in SI units.

pub const C: f64 = 299_792_458.0;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const EPS0: f64 = 8.854_187_812_8e-12;
pub const KB: f64 = 1.380_649e-23;
pub const AMU: f64 = 1.660_539_066_60e-27;
pub const TORR: f64 = 101_325.0 / 760.0;
pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
