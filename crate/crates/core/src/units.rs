//! Unit conversions and physical conventions.
//!
//! Internal solver units: time µs, position mm, angular frequency rad/µs.
//! Interfaces (configs, CLI flags, CSV headers) use kHz for frequencies and
//! volts for the gradient drive; conversions live here so the factors appear
//! exactly once.

use std::f64::consts::PI;

/// 1 kHz expressed in rad/µs: 2π × 10³ cycles/s × 10⁻⁶ s/µs.
pub const KHZ_TO_RAD_PER_US: f64 = 2.0 * PI * 1.0e-3;

/// Convert an ordinary frequency in kHz to angular frequency in rad/µs.
#[inline]
pub fn khz_to_ang(f_khz: f64) -> f64 {
    f_khz * KHZ_TO_RAD_PER_US
}

/// Convert an angular frequency in rad/µs back to kHz.
#[inline]
pub fn ang_to_khz(w: f64) -> f64 {
    w / KHZ_TO_RAD_PER_US
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn khz_round_trip() {
        for f in [0.0, 25.0, -1050.0, 4.2e3] {
            let w = khz_to_ang(f);
            assert!((ang_to_khz(w) - f).abs() <= 1e-12 * f.abs().max(1.0));
        }
    }

    #[test]
    fn a_25_khz_feature_dephases_in_40_us() {
        // The Fourier transform of a unit top-hat of full width W has its
        // first zero at t = 2π / W_angular = 1 / W_ordinary.
        let w = khz_to_ang(25.0);
        let t_zero = 2.0 * PI / w;
        assert!((t_zero - 40.0).abs() < 1e-9);
    }
}
