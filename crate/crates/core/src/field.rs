//! Sampled field envelopes and atomic coherences.

use serde::{Deserialize, Serialize};

use crate::analytic::StoredProfile;
use crate::sum::compensated_sum;
use crate::Complex64;

/// Complex envelope E(z, τ) on a rectangular grid, stored row-major with one
/// row per z sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub z: Vec<f64>,
    pub t: Vec<f64>,
    pub data: Vec<Complex64>,
}

impl FieldGrid {
    pub fn zeros(z: Vec<f64>, t: Vec<f64>) -> Self {
        let n = z.len() * t.len();
        Self {
            z,
            t,
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn row(&self, iz: usize) -> &[Complex64] {
        let nt = self.t.len();
        &self.data[iz * nt..(iz + 1) * nt]
    }

    pub fn row_mut(&mut self, iz: usize) -> &mut [Complex64] {
        let nt = self.t.len();
        &mut self.data[iz * nt..(iz + 1) * nt]
    }

    pub fn last_row(&self) -> &[Complex64] {
        self.row(self.z.len() - 1)
    }
}

/// Ground (σ_sg) and optical (σ_eg) coherences of every subsystem along z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceField {
    pub z: Vec<f64>,
    pub m: Vec<i32>,
    pub populations: Vec<f64>,
    /// `spin[j][iz]`.
    pub spin: Vec<Vec<Complex64>>,
    /// `optical[j][iz]`; zero when not tracked.
    pub optical: Vec<Vec<Complex64>>,
}

impl CoherenceField {
    pub fn zeros(z: Vec<f64>, m: Vec<i32>, populations: Vec<f64>) -> Self {
        let nz = z.len();
        let nj = m.len();
        Self {
            z,
            m,
            populations,
            spin: vec![vec![Complex64::new(0.0, 0.0); nz]; nj],
            optical: vec![vec![Complex64::new(0.0, 0.0); nz]; nj],
        }
    }

    /// Samples a Gaussian stored profile on `n_z` uniform intervals of [0, 1].
    pub fn from_profile(profile: &StoredProfile, populations: &[f64], n_z: usize) -> Self {
        let z: Vec<f64> = (0..=n_z).map(|k| k as f64 / n_z as f64).collect();
        let mut field = Self::zeros(
            z,
            profile.subsystems.iter().map(|g| g.m).collect(),
            populations.to_vec(),
        );
        for (j, g) in profile.subsystems.iter().enumerate() {
            for (iz, &zz) in field.z.iter().enumerate() {
                field.spin[j][iz] = Complex64::new(g.value_at(zz), 0.0);
            }
        }
        field
    }

    /// Stored-excitation energy 2 ∫ Σ_j |σ_sg,j|² / p_j dz in field-energy
    /// units (trapezoid rule); unpopulated subsystems are skipped.
    pub fn excitation_energy(&self) -> f64 {
        let nz = self.z.len();
        if nz < 2 {
            return 0.0;
        }
        let density: Vec<f64> = (0..nz)
            .map(|iz| {
                compensated_sum(
                    self.spin
                        .iter()
                        .zip(&self.populations)
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(s, &p)| s[iz].norm_sqr() / p),
                )
            })
            .collect();
        2.0 * trapezoid(&self.z, &density)
    }

    /// Every other z sample, for quadrature convergence checks.
    pub fn coarsened(&self) -> Self {
        let pick = |v: &Vec<Complex64>| v.iter().step_by(2).copied().collect::<Vec<_>>();
        Self {
            z: self.z.iter().step_by(2).copied().collect(),
            m: self.m.clone(),
            populations: self.populations.clone(),
            spin: self.spin.iter().map(pick).collect(),
            optical: self.optical.iter().map(pick).collect(),
        }
    }
}

/// Composite trapezoid rule on arbitrary abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    compensated_sum(
        x.windows(2)
            .zip(y.windows(2))
            .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])),
    )
}
