//! Deep-water acoustic path loss.
//!
//! The multiplicative Urick form `A0 * a(f)^d * d^zeta` is evaluated in the
//! dB domain, where it becomes a sum:
//!
//! ```text
//! A_b [dB] = A0 [dB] + 10 * zeta * log10(d [m]) + alpha(f) [dB/km] * d [km]
//! ```
//!
//! with `alpha(f)` given by Thorp's empirical absorption formula.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Physical constants of the acoustic path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Reference attenuation in dB.
    pub a0_db: f64,
    /// Spreading factor: 1.0 cylindrical, 2.0 spherical.
    pub zeta: f64,
    /// Carrier frequency in kHz.
    pub freq_khz: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            a0_db: 0.0,
            zeta: 1.5,
            freq_khz: 10.0,
        }
    }
}

impl ChannelParams {
    pub fn new(a0_db: f64, zeta: f64, freq_khz: f64) -> Result<Self> {
        let params = Self {
            a0_db,
            zeta,
            freq_khz,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.freq_khz.is_finite() && self.freq_khz > 0.0) {
            return Err(domain(format!(
                "freq_khz must be > 0, got {}",
                self.freq_khz
            )));
        }
        if !(1.0..=2.0).contains(&self.zeta) {
            return Err(domain(format!("zeta must lie in [1, 2], got {}", self.zeta)));
        }
        if !(self.a0_db.is_finite() && self.a0_db >= 0.0) {
            return Err(domain(format!("a0_db must be >= 0, got {}", self.a0_db)));
        }
        Ok(())
    }
}

/// Thorp's absorption coefficient in dB/km for a frequency in kHz.
pub fn thorp_absorption(freq_khz: f64) -> Result<f64> {
    if !(freq_khz.is_finite() && freq_khz > 0.0) {
        return Err(domain(format!("frequency must be > 0 kHz, got {freq_khz}")));
    }
    let f2 = freq_khz * freq_khz;
    Ok(0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 + 0.003)
}

/// Path attenuation in dB over `distance_m` meters.
pub fn attenuation_db(params: &ChannelParams, distance_m: f64) -> Result<f64> {
    params.validate()?;
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(domain(format!("distance must be > 0 m, got {distance_m}")));
    }
    let absorption = thorp_absorption(params.freq_khz)?;
    Ok(params.a0_db + 10.0 * params.zeta * distance_m.log10() + absorption * distance_m / 1000.0)
}
