//! Unitary continuous-Fourier transforms sampled on an FFT grid.
//!
//! Convention: E(ω) = (2π)^{-1/2} ∫ e^{iωt} E(t) dt, inverse with e^{-iωt}.
//! With samples t_k = t0 + k dt and ω_j = j dω (FFT order, negative
//! frequencies in the upper half) the discrete pair is exactly unitary, so
//! Σ|E_k|² dt = Σ|E_j|² dω.

use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::sum::compensated_sum;
use crate::Complex64;

/// Fraction of spectral energy tolerated in the outer 10% of the band.
pub const ALIASING_LIMIT: f64 = 1e-3;

#[derive(Clone)]
pub struct FourierGrid {
    n: usize,
    dt: f64,
    t0: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierGrid")
            .field("n", &self.n)
            .field("dt", &self.dt)
            .field("t0", &self.t0)
            .finish()
    }
}

impl FourierGrid {
    pub fn new(n: usize, dt: f64, t0: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(invalid("n_omega", format!("must be a power of two >= 2, got {n}")));
        }
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(invalid("dt", format!("need finite dt > 0, got {dt}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            dt,
            t0,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    /// Grid with `n` points whose frequency span is ±`omega_max`, centred on
    /// `t_center`.
    pub fn with_bandwidth(n: usize, omega_max: f64, t_center: f64) -> Result<Self> {
        if !(omega_max > 0.0) {
            return Err(invalid("omega_max", format!("must be positive, got {omega_max}")));
        }
        let dt = PI / omega_max;
        Self::new(n, dt, t_center - dt * (n / 2) as f64)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn d_omega(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dt)
    }

    /// Nyquist frequency π/dt.
    pub fn omega_max(&self) -> f64 {
        PI / self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.time(k)).collect()
    }

    /// Angular frequency of bin `j` in FFT order.
    pub fn omega(&self, j: usize) -> f64 {
        let j = j as i64;
        let n = self.n as i64;
        let s = if j < n / 2 { j } else { j - n };
        s as f64 * self.d_omega()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.omega(j)).collect()
    }

    /// Samples E(t_k) → E(ω_j).
    pub fn forward(&self, field: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(field.len(), self.n, "field length does not match grid");
        let mut buf = field.to_vec();
        self.inv.process(&mut buf);
        let scale = self.dt / (2.0 * PI).sqrt();
        for (j, x) in buf.iter_mut().enumerate() {
            *x *= Complex64::from_polar(scale, self.omega(j) * self.t0);
        }
        buf
    }

    /// Samples E(ω_j) → E(t_k).
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(spectrum.len(), self.n, "spectrum length does not match grid");
        let scale = self.d_omega() / (2.0 * PI).sqrt();
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .enumerate()
            .map(|(j, x)| x * Complex64::from_polar(scale, -self.omega(j) * self.t0))
            .collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn energy_time(&self, field: &[Complex64]) -> f64 {
        compensated_sum(field.iter().map(|x| x.norm_sqr())) * self.dt
    }

    pub fn energy_freq(&self, spectrum: &[Complex64]) -> f64 {
        compensated_sum(spectrum.iter().map(|x| x.norm_sqr())) * self.d_omega()
    }

    /// Fraction of spectral energy with |ω| above 90% of the band edge.
    pub fn edge_fraction(&self, spectrum: &[Complex64]) -> f64 {
        let total = compensated_sum(spectrum.iter().map(|x| x.norm_sqr()));
        if total == 0.0 {
            return 0.0;
        }
        let cut = 0.9 * self.omega_max();
        let edge = compensated_sum(
            spectrum
                .iter()
                .enumerate()
                .filter(|(j, _)| self.omega(*j).abs() > cut)
                .map(|(_, x)| x.norm_sqr()),
        );
        edge / total
    }

    /// Fails when more than [`ALIASING_LIMIT`] of the spectral energy sits
    /// near the band edge.
    pub fn check_aliasing(&self, spectrum: &[Complex64]) -> Result<f64> {
        let fraction = self.edge_fraction(spectrum);
        if fraction > ALIASING_LIMIT {
            Err(Error::Aliasing { fraction })
        } else {
            Ok(fraction)
        }
    }

    /// Reorders an FFT-ordered array to ascending frequency.
    pub fn shifted<T: Copy>(&self, data: &[T]) -> Vec<T> {
        let h = self.n / 2;
        data[h..].iter().chain(data[..h].iter()).copied().collect()
    }
}
