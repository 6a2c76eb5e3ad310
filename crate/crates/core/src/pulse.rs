//! Gaussian probe pulses and waveform measurements.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::sum::compensated_sum;
use crate::Complex64;

/// E(t) = e0 · exp(−2 ln2 (t − t_peak)² / t_p²); t_p is the intensity FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulse {
    pub t_p: f64,
    pub e0: f64,
    pub t_peak: f64,
}

impl GaussianPulse {
    pub fn new(t_p: f64, e0: f64, t_peak: f64) -> Self {
        Self { t_p, e0, t_peak }
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        self.e0 * (-2.0 * LN_2 * ((t - self.t_peak) / self.t_p).powi(2)).exp()
    }

    /// (2π)^{-1/2} ∫ e^{iωt} E(t) dt.
    pub fn spectrum(&self, omega: f64) -> Complex64 {
        let mag = self.e0 * self.t_p / (4.0 * LN_2).sqrt() * (-(omega * self.t_p).powi(2) / (8.0 * LN_2)).exp();
        Complex64::from_polar(mag, omega * self.t_peak)
    }

    pub fn energy(&self) -> f64 {
        self.e0 * self.e0 * self.t_p * (PI / (4.0 * LN_2)).sqrt()
    }

    /// Intensity FWHM bandwidth 4 ln2 / t_p.
    pub fn bandwidth(&self) -> f64 {
        4.0 * LN_2 / self.t_p
    }
}

/// Full width at half maximum of a sampled non-negative profile, with linear
/// interpolation of both crossings around the global maximum.
pub fn fwhm(x: &[f64], y: &[f64]) -> Option<f64> {
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(ymax > 0.0) {
        return None;
    }
    let half = ymax / 2.0;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let left = (1..=imax).rev().find(|&i| y[i - 1] < half).map(|i| cross(i - 1, i))?;
    let right = (imax..y.len() - 1)
        .find(|&i| y[i + 1] < half)
        .map(|i| cross(i, i + 1))?;
    Some(right - left)
}

/// Position and value of the maximum, refined by a parabola through the
/// three samples around it.
pub fn peak(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let (i, &yi) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if i == 0 || i + 1 == y.len() {
        return Some((x[i], yi));
    }
    let (ym, yp) = (y[i - 1], y[i + 1]);
    let denom = ym - 2.0 * yi + yp;
    if denom == 0.0 {
        return Some((x[i], yi));
    }
    let d = 0.5 * (ym - yp) / denom;
    let h = x[i + 1] - x[i];
    Some((x[i] + d * h, yi - 0.25 * (ym - yp) * d))
}

/// Weighted centroid Σ w x / Σ w.
pub fn centroid(x: &[f64], w: &[f64]) -> Option<f64> {
    let total = compensated_sum(w.iter().copied());
    if !(total > 0.0) {
        return None;
    }
    Some(compensated_sum(x.iter().zip(w).map(|(a, b)| a * b)) / total)
}
