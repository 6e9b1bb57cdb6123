//! Physical constants and default ⁴⁰Ca⁺ parameters.

use std::f64::consts::PI;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity (F/m).
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
/// Unified atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Electron mass (kg).
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

/// Mass of a singly ionised ⁴⁰Ca atom (kg).
pub const CA40_ION_MASS: f64 = 39.962_590_863 * ATOMIC_MASS_UNIT - ELECTRON_MASS;
/// Wavelength of the S1/2 → P3/2 line used for the kicks (m).
pub const CA40_KICK_WAVELENGTH: f64 = 393.366e-9;

/// Default axial trap frequency, 2π × 1.2 MHz (rad/s).
pub const DEFAULT_TRAP_FREQUENCY: f64 = 2.0 * PI * 1.2e6;
/// Default Lamb-Dicke parameter.
pub const DEFAULT_LAMB_DICKE: f64 = 0.16;
/// Default mean thermal occupation of every mode.
pub const DEFAULT_MEAN_OCCUPATION: f64 = 0.1;

/// Converts a duration in trap periods to seconds.
pub fn periods_to_seconds(periods: f64, trap_frequency: f64) -> f64 {
    periods * 2.0 * PI / trap_frequency
}

/// Converts a duration in seconds to trap periods.
pub fn seconds_to_periods(seconds: f64, trap_frequency: f64) -> f64 {
    seconds * trap_frequency / (2.0 * PI)
}

/// Expresses a rate (Hz) in units of the trap frequency ω_t/2π.
pub fn rate_in_trap_units(rate: f64, trap_frequency: f64) -> f64 {
    rate * 2.0 * PI / trap_frequency
}
