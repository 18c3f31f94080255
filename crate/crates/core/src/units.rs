//! Physical constants and unit conversions.
//!
//! Frequencies are angular (rad/s) everywhere inside the crate. The helpers
//! here are the only place where cyclic units (Hz, GHz/T) are converted.

use std::f64::consts::PI;

/// Vacuum permeability (T·m/A).
pub const MU_0: f64 = 4.0e-7 * PI;

/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274e-24;

/// NV electron gyromagnetic ratio, cyclic (Hz/T).
pub const NV_GAMMA_HZ_PER_T: f64 = 28.0345e9;

/// NV ground-state zero-field splitting, cyclic (Hz).
pub const NV_ZFS_HZ: f64 = 2.87e9;

/// Cyclic frequency (Hz) to angular frequency (rad/s).
pub fn hz_to_angular(f: f64) -> f64 {
    2.0 * PI * f
}

/// Angular frequency (rad/s) to cyclic frequency (Hz).
pub fn angular_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Surface magnetization in µ_B/nm² to amperes (magnetic moment per area).
pub fn bohr_per_nm2_to_amperes(m: f64) -> f64 {
    m * MU_B / 1e-18
}

pub fn deg_to_rad(d: f64) -> f64 {
    d.to_radians()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_magnetization_conversion() {
        let a = bohr_per_nm2_to_amperes(25.0);
        assert!((a - 2.3185e-4).abs() < 1e-12);
        assert!((bohr_per_nm2_to_amperes(1.0) - 9.274e-6).abs() < 1e-15);
    }

    #[test]
    fn angular_round_trip() {
        let f = 1.8608e9;
        assert!((angular_to_hz(hz_to_angular(f)) - f).abs() < 1e-3);
    }
}
