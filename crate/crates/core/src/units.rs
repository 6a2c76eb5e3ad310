//! Conversion between laboratory units (MHz, µs) and the internal
//! Γ-normalised system.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Cs D₁ natural linewidth Γ/2π in MHz.
pub const CS_D1_LINEWIDTH_MHZ: f64 = 4.56;

/// Reference decay rate used to normalise times and frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Γ/2π in MHz.
    pub gamma_mhz: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            gamma_mhz: CS_D1_LINEWIDTH_MHZ,
        }
    }
}

impl UnitSystem {
    pub fn new(gamma_mhz: f64) -> Self {
        Self { gamma_mhz }
    }

    /// Γ in rad/µs.
    pub fn gamma_rad_per_us(&self) -> f64 {
        TAU * self.gamma_mhz
    }

    /// Microseconds to units of 1/Γ.
    pub fn time_from_us(&self, t_us: f64) -> f64 {
        t_us * self.gamma_rad_per_us()
    }

    pub fn time_to_us(&self, t: f64) -> f64 {
        t / self.gamma_rad_per_us()
    }

    /// An angular frequency given as f/2π in MHz, to units of Γ.
    pub fn rate_from_mhz(&self, f_mhz: f64) -> f64 {
        f_mhz / self.gamma_mhz
    }

    pub fn rate_to_mhz(&self, rate: f64) -> f64 {
        rate * self.gamma_mhz
    }
}
