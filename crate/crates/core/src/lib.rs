//! Coherent optical conversion through EIT memories in atoms with degenerate
//! Zeeman structure.
//!
//! A weak probe pulse is written into a ground-state spin wave through one
//! Λ channel and read out through a second channel, producing a converted
//! pulse. The crate provides four independent routes to that process:
//!
//! * [`analytic`]: closed-form group delay, EIT bandwidth, broadening
//!   factors and the efficiency factors ξ₁ (finite bandwidth) and ξ₂
//!   (coherence mismatch);
//! * [`spectral`]: exact frequency-domain transfer functions evaluated on an
//!   FFT grid, with switchable Taylor truncations;
//! * [`mb`]: a time-domain Maxwell–Bloch integrator for the full
//!   write/store/read protocol;
//! * [`pumping`]: a 14-level optical-pumping model producing the Zeeman
//!   population distributions fed to the other three.
//!
//! Internal units: angular frequencies in units of the write-channel decay
//! rate Γ_w, times in 1/Γ_w, lengths in units of the medium length L.
//! Field envelopes are normalised so that the probe coupling is
//! `g_p = sqrt(α_p Γ_w / 2)` and pulse energy is `∫|E|² dt`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod atomic;
pub mod cg;
pub mod error;
pub mod field;
pub mod fourier;
pub mod io;
pub mod mb;
pub mod pulse;
pub mod pumping;
pub mod spectral;
pub mod sum;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use analytic::EfficiencyReport;
pub use atomic::{ConversionScheme, Direction, PopulationDistribution};
