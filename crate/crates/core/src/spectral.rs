//! Exact frequency-domain write and read propagators.
//!
//! The probe obeys ∂_z E = −f(ω) E with
//! f(ω) = −iω/c + iω (α Γ/|Ω|²) Σ_j p_j R_j² A_j(ω) and
//! A_j(ω) = −[1 − (2iΓω + 4ω²)/|a_j Ω|²]⁻¹.
//! Storage freezes σ_sg = (p g R / Ω) A E at the write cutoff; the read
//! phase re-radiates it through the converted transition.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::analytic::pulse_bandwidth;
use crate::atomic::{Branch, ConversionScheme};
use crate::error::{invalid, Error, Result};
use crate::field::CoherenceField;
use crate::fourier::FourierGrid;
use crate::pulse::GaussianPulse;
use crate::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative energy change between n_z and n_z/2 that still counts as a
/// converged z quadrature.
pub const QUADRATURE_TOL: f64 = 5e-3;

/// Treatment of the per-subsystem factor A_j(ω).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ATruncation {
    #[default]
    Full,
    /// A_j ≡ −1.
    Adiabatic,
}

/// Treatment of the propagation exponent f(ω).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FTruncation {
    #[default]
    Full,
    /// Taylor series through ω².
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Truncation {
    pub a: ATruncation,
    pub f: FTruncation,
}

impl Truncation {
    pub const EXACT: Self = Self {
        a: ATruncation::Full,
        f: FTruncation::Full,
    };
    pub const SECOND_ORDER: Self = Self {
        a: ATruncation::Adiabatic,
        f: FTruncation::SecondOrder,
    };
}

/// Frequency and z sampling for the exact propagators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub n_omega: usize,
    pub omega_max: f64,
    /// Number of z intervals on [0, L]; even.
    pub n_z: usize,
    /// Start of the periodic time window.
    pub t_start: f64,
    /// 1/c in normalised units; 0 for the retarded-frame default.
    pub inv_c: f64,
}

impl SpectralGrid {
    pub const DEFAULT_N_OMEGA: usize = 1024;
    pub const DEFAULT_N_Z: usize = 512;
    /// ω_max over the fastest rate in the problem.
    pub const BAND_FACTOR: f64 = 8.0;

    pub fn new(n_omega: usize, omega_max: f64, n_z: usize, t_start: f64) -> Result<Self> {
        if n_omega < 2 || !n_omega.is_power_of_two() {
            return Err(invalid("n_omega", format!("must be a power of two, got {n_omega}")));
        }
        if !(omega_max > 0.0) || !omega_max.is_finite() {
            return Err(invalid("omega_max", format!("must be positive, got {omega_max}")));
        }
        if n_z < 2 || !n_z.is_multiple_of(2) {
            return Err(invalid("n_z", format!("must be even and >= 2, got {n_z}")));
        }
        Ok(Self {
            n_omega,
            omega_max,
            n_z,
            t_start,
            inv_c: 0.0,
        })
    }

    /// Smallest grid meeting ω_max ≥ 8 max{Δω₀, |aΩ|²/Γ} whose time
    /// window covers [t_start, t_end].
    pub fn auto(
        scheme: &ConversionScheme,
        controls: &[(Branch, f64)],
        t_p: f64,
        t_start: f64,
        t_end: f64,
    ) -> Result<Self> {
        if !(t_end > t_start) {
            return Err(invalid("t_end", "time window is empty"));
        }
        let mut rate = pulse_bandwidth(t_p);
        for &(branch, omega) in controls {
            let gamma = scheme.gamma(branch);
            for s in scheme.populated() {
                let a = s.branch_cg(branch).1;
                rate = rate.max((a * omega).powi(2) / gamma);
            }
        }
        let omega_max = Self::BAND_FACTOR * rate;
        let dt = PI / omega_max;
        let needed = ((t_end - t_start) / dt).ceil() as usize;
        let n = needed.max(Self::DEFAULT_N_OMEGA).next_power_of_two();
        Self::new(n, omega_max, Self::DEFAULT_N_Z, t_start)
    }

    /// Halved frequency and z spacing over the same band.
    pub fn refined(&self) -> Self {
        Self {
            n_omega: 2 * self.n_omega,
            n_z: 2 * self.n_z,
            ..*self
        }
    }

    pub fn with_n_z(self, n_z: usize) -> Result<Self> {
        Self::new(self.n_omega, self.omega_max, n_z, self.t_start).map(|g| Self { inv_c: self.inv_c, ..g })
    }

    pub fn fourier(&self) -> Result<FourierGrid> {
        let dt = PI / self.omega_max;
        FourierGrid::new(self.n_omega, dt, self.t_start)
    }

    pub fn z(&self) -> Vec<f64> {
        (0..=self.n_z).map(|k| k as f64 / self.n_z as f64).collect()
    }
}

/// A_j(ω) and f(ω) of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunctions {
    pub branch: Branch,
    pub omega: Vec<f64>,
    /// `a[j][bin]`; zero for unpopulated subsystems.
    pub a: Vec<Vec<Complex64>>,
    pub f: Vec<Complex64>,
}

impl TransferFunctions {
    /// Power transmission |e^{−f L}|² through the medium.
    pub fn transmission(&self) -> Vec<f64> {
        self.f.iter().map(|f| (-2.0 * f.re).exp()).collect()
    }
}

fn transfer(
    scheme: &ConversionScheme,
    branch: Branch,
    omega_ctrl: f64,
    omegas: &[f64],
    trunc: Truncation,
    inv_c: f64,
) -> Result<TransferFunctions> {
    if !(omega_ctrl > 0.0) || !omega_ctrl.is_finite() {
        return Err(invalid(
            "omega",
            format!("control Rabi frequency must be positive, got {omega_ctrl}"),
        ));
    }
    let gamma = scheme.gamma(branch);
    let k = scheme.alpha(branch) * gamma / (omega_ctrl * omega_ctrl);
    let subs: Vec<_> = scheme
        .subsystems
        .iter()
        .map(|s| {
            let (a, c) = s.branch_cg(branch);
            (s.population, a, c)
        })
        .collect();
    let a_full = |w: f64, c: f64| -> Complex64 {
        let rabi_sq = (c * omega_ctrl).powi(2);
        -(Complex64::new(1.0, 0.0) - Complex64::new(4.0 * w * w, 2.0 * gamma * w) / rabi_sq).inv()
    };
    let a: Vec<Vec<Complex64>> = subs
        .iter()
        .map(|&(p, _, c)| {
            omegas
                .iter()
                .map(|&w| {
                    if p == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        match trunc.a {
                            ATruncation::Full => a_full(w, c),
                            ATruncation::Adiabatic => Complex64::new(-1.0, 0.0),
                        }
                    }
                })
                .collect()
        })
        .collect();
    let f = omegas
        .iter()
        .map(|&w| {
            let vacuum = -I * w * inv_c;
            match trunc.f {
                FTruncation::Full => {
                    let sum: Complex64 = subs
                        .iter()
                        .filter(|s| s.0 > 0.0 && s.1 != 0.0)
                        .map(|&(p, a, c)| a_full(w, c) * (p * (a / c).powi(2)))
                        .sum();
                    vacuum + I * w * k * sum
                }
                FTruncation::SecondOrder => {
                    let (mut first, mut second) = (0.0, 0.0);
                    for &(p, a, c) in subs.iter().filter(|s| s.0 > 0.0 && s.1 != 0.0) {
                        let r2 = p * (a / c).powi(2);
                        first += r2;
                        second += r2 / (c * omega_ctrl).powi(2);
                    }
                    vacuum - I * w * k * first + 2.0 * gamma * w * w * k * second
                }
            }
        })
        .collect();
    Ok(TransferFunctions {
        branch,
        omega: omegas.to_vec(),
        a,
        f,
    })
}

/// Write-channel transfer functions on the grid's frequency samples.
pub fn probe_transfer(
    scheme: &ConversionScheme,
    omega_w: f64,
    grid: &SpectralGrid,
    trunc: Truncation,
) -> Result<TransferFunctions> {
    let omegas = grid.fourier()?.omegas();
    transfer(scheme, Branch::Probe, omega_w, &omegas, trunc, grid.inv_c)
}

/// Read-channel transfer functions on the grid's frequency samples.
pub fn read_transfer(
    scheme: &ConversionScheme,
    omega_r: f64,
    grid: &SpectralGrid,
    trunc: Truncation,
) -> Result<TransferFunctions> {
    let omegas = grid.fourier()?.omegas();
    transfer(scheme, Branch::Converted, omega_r, &omegas, trunc, grid.inv_c)
}

/// Transfer functions of either branch at arbitrary frequencies.
pub fn transfer_at(
    scheme: &ConversionScheme,
    branch: Branch,
    omega_ctrl: f64,
    omegas: &[f64],
    trunc: Truncation,
) -> Result<TransferFunctions> {
    transfer(scheme, branch, omega_ctrl, omegas, trunc, 0.0)
}

/// Slow-light transmission of a pulse under a constant control field.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub times: Vec<f64>,
    pub input: Vec<Complex64>,
    pub output: Vec<Complex64>,
    pub energy_in: f64,
    pub energy_out: f64,
}

pub fn transmit(
    scheme: &ConversionScheme,
    branch: Branch,
    omega_ctrl: f64,
    pulse: &GaussianPulse,
    grid: &SpectralGrid,
) -> Result<Transmission> {
    let fg = grid.fourier()?;
    let omegas = fg.omegas();
    let tf = transfer(scheme, branch, omega_ctrl, &omegas, Truncation::EXACT, grid.inv_c)?;
    let spectrum: Vec<Complex64> = omegas.iter().map(|&w| pulse.spectrum(w)).collect();
    fg.check_aliasing(&spectrum)?;
    let out_spec: Vec<Complex64> = spectrum.iter().zip(&tf.f).map(|(e, f)| e * (-f).exp()).collect();
    let output = fg.inverse(&out_spec);
    let input: Vec<Complex64> = fg
        .times()
        .iter()
        .map(|&t| Complex64::new(pulse.amplitude(t), 0.0))
        .collect();
    Ok(Transmission {
        times: fg.times(),
        energy_in: fg.energy_time(&input),
        energy_out: fg.energy_freq(&out_spec),
        input,
        output,
    })
}

/// Ground and optical coherences at the write cutoff `t_w` for a Gaussian
/// probe, with the control switched off instantaneously.
pub fn stored_coherence_exact(
    scheme: &ConversionScheme,
    omega_w: f64,
    pulse: &GaussianPulse,
    t_w: f64,
    grid: &SpectralGrid,
    trunc: Truncation,
) -> Result<CoherenceField> {
    let fg = grid.fourier()?;
    let omegas = fg.omegas();
    let spectrum: Vec<Complex64> = omegas.iter().map(|&w| pulse.spectrum(w)).collect();
    fg.check_aliasing(&spectrum)?;
    let tf = transfer(scheme, Branch::Probe, omega_w, &omegas, trunc, grid.inv_c)?;

    let z = grid.z();
    let dz = 1.0 / grid.n_z as f64;
    let mut field = CoherenceField::zeros(
        z,
        scheme.subsystems.iter().map(|s| s.m).collect(),
        scheme.subsystems.iter().map(|s| s.population).collect(),
    );
    let g = scheme.g_p();
    let norm = fg.d_omega() / (2.0 * PI).sqrt();
    let peak = spectrum.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let active: Vec<usize> = (0..scheme.subsystems.len())
        .filter(|&j| scheme.subsystems[j].population > 0.0 && scheme.subsystems[j].a_p != 0.0)
        .collect();

    for (bin, &w) in omegas.iter().enumerate() {
        if spectrum[bin].norm() <= 1e-18 * peak {
            continue;
        }
        let step = (-tf.f[bin] * dz).exp();
        let mut carrier = spectrum[bin] * Complex64::from_polar(norm, -w * t_w);
        for iz in 0..=grid.n_z {
            if iz > 0 {
                carrier *= step;
            }
            for &j in &active {
                let s = &scheme.subsystems[j];
                let a = tf.a[j][bin];
                let rabi_sq = (s.a_w * omega_w).powi(2);
                field.spin[j][iz] += a * carrier * (s.population * g * s.r_p() / omega_w);
                field.optical[j][iz] += a * carrier * (-2.0 * w * s.a_p * s.population * g / rabi_sq);
            }
        }
    }
    Ok(field)
}

/// Converted pulse at the medium exit, times measured from the read
/// switch-on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertedField {
    pub times: Vec<f64>,
    pub field: Vec<Complex64>,
    /// FFT-ordered frequencies and spectrum.
    pub omegas: Vec<f64>,
    pub spectrum: Vec<Complex64>,
    pub energy_time: f64,
    pub energy_freq: f64,
    /// Relative energy change when the stored coherence is sampled at
    /// half the z resolution.
    pub quadrature_change: f64,
    pub quadrature_converged: bool,
}

fn converted_spectrum_on(
    scheme: &ConversionScheme,
    stored: &CoherenceField,
    tf: &TransferFunctions,
    omega_r: f64,
) -> Vec<Complex64> {
    let nz = stored.z.len();
    let length = *stored.z.last().unwrap_or(&1.0);
    let dz = if nz > 1 { length / (nz - 1) as f64 } else { 0.0 };
    let pref = 2.0 * scheme.g_c() / (omega_r * (2.0 * PI).sqrt());
    let active: Vec<usize> = (0..scheme.subsystems.len())
        .filter(|&j| {
            let s = &scheme.subsystems[j];
            s.population > 0.0 && s.a_c != 0.0 && stored.spin[j].iter().any(|x| x.norm_sqr() > 0.0)
        })
        .collect();
    tf.f.iter()
        .enumerate()
        .map(|(bin, f)| {
            // march from z = L back to 0 so the kernel is a running product
            let step = (-f * dz).exp();
            let mut total = Complex64::new(0.0, 0.0);
            for &j in &active {
                let s = &stored.spin[j];
                let mut kernel = Complex64::new(1.0, 0.0);
                let mut integral = Complex64::new(0.0, 0.0);
                for iz in (0..nz).rev() {
                    let w = if iz == 0 || iz == nz - 1 { 0.5 } else { 1.0 };
                    integral += s[iz] * kernel * w;
                    kernel *= step;
                }
                total += tf.a[j][bin] * integral * (dz * scheme.subsystems[j].r_c());
            }
            total * pref
        })
        .collect()
}

/// Re-radiates a stored coherence through the converted transition.
pub fn converted_field_exact(
    scheme: &ConversionScheme,
    stored: &CoherenceField,
    omega_r: f64,
    grid: &SpectralGrid,
    trunc: Truncation,
) -> Result<ConvertedField> {
    if stored.spin.len() != scheme.subsystems.len() {
        return Err(invalid("stored", "coherence field does not match the scheme"));
    }
    if stored.z.len() < 3 || stored.z.len().is_multiple_of(2) {
        return Err(invalid("stored", "z sampling needs an even number of intervals"));
    }
    let fg = grid.fourier()?;
    let omegas = fg.omegas();
    let tf = transfer(scheme, Branch::Converted, omega_r, &omegas, trunc, grid.inv_c)?;
    let spectrum = converted_spectrum_on(scheme, stored, &tf, omega_r);
    fg.check_aliasing(&spectrum)?;
    let coarse = converted_spectrum_on(scheme, &stored.coarsened(), &tf, omega_r);
    let energy_freq = fg.energy_freq(&spectrum);
    let energy_coarse = fg.energy_freq(&coarse);
    let quadrature_change = if energy_freq > 0.0 {
        (energy_coarse - energy_freq).abs() / energy_freq
    } else {
        0.0
    };
    if quadrature_change > QUADRATURE_TOL {
        log::warn!("z quadrature not converged: relative energy change {quadrature_change:.2e}");
    }
    let field = fg.inverse(&spectrum);
    Ok(ConvertedField {
        times: fg.times(),
        energy_time: fg.energy_time(&field),
        field,
        omegas,
        spectrum,
        energy_freq,
        quadrature_change,
        quadrature_converged: quadrature_change <= QUADRATURE_TOL,
    })
}

/// Write and read grids for one conversion, sized from the analytic
/// delays: the write window covers the probe transit, the read window the
/// converted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConversionGrids {
    pub write: SpectralGrid,
    pub read: SpectralGrid,
}

impl ConversionGrids {
    pub fn auto(scheme: &ConversionScheme, omega_w: f64, omega_r: f64, t_p: f64) -> Result<Self> {
        let t_d = delay(scheme, Branch::Probe, omega_w);
        let t_r = delay(scheme, Branch::Converted, omega_r);
        let stretch = (t_r / t_d.max(f64::MIN_POSITIVE)).max(1.0);
        let write = SpectralGrid::auto(
            scheme,
            &[(Branch::Probe, omega_w)],
            t_p,
            -6.0 * t_p,
            2.0 * t_d + 8.0 * t_p,
        )?;
        // converted duration scales with T_r / T_d; leave room for broadening
        let read_span = 1.5 * t_r + 8.0 * t_p * stretch;
        let read = SpectralGrid::auto(
            scheme,
            &[(Branch::Converted, omega_r)],
            t_p * (t_d / t_r.max(f64::MIN_POSITIVE)).min(1.0),
            -0.1 * read_span,
            read_span,
        )?;
        Ok(Self { write, read })
    }

    pub fn refined(&self) -> Self {
        Self {
            write: self.write.refined(),
            read: self.read.refined(),
        }
    }
}

fn delay(scheme: &ConversionScheme, branch: Branch, omega: f64) -> f64 {
    scheme.alpha(branch) * scheme.gamma(branch) * scheme.moments(branch).ratio_sq / (omega * omega)
}

/// Full write, store, read pipeline with the exact propagators.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactConversion {
    pub stored: CoherenceField,
    pub converted: ConvertedField,
    pub input_energy: f64,
}

pub fn convert_exact(
    scheme: &ConversionScheme,
    pulse: &GaussianPulse,
    omega_w: f64,
    t_w: f64,
    omega_r: f64,
    grids: &ConversionGrids,
    trunc: Truncation,
) -> Result<ExactConversion> {
    let stored = stored_coherence_exact(scheme, omega_w, pulse, t_w, &grids.write, trunc)?;
    let converted = converted_field_exact(scheme, &stored, omega_r, &grids.read, trunc)?;
    if !converted.energy_time.is_finite() {
        return Err(Error::Convergence("non-finite converted energy".into()));
    }
    Ok(ExactConversion {
        stored,
        converted,
        input_energy: pulse.energy(),
    })
}
