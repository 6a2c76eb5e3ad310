//! Closed-form slow-light, storage and conversion formulas.
//!
//! Everything here follows from truncating the EIT transfer function at
//! second order in frequency and treating the write cutoff as instantaneous.
//! Normalised units: Γ_w = 1 is not assumed, but L = 1 and c = ∞.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::atomic::{coherence_mismatch, Branch, ConversionScheme};
use crate::error::{invalid, Error, Result};
use crate::sum::compensated_sum;
use crate::Complex64;

/// Lower edge of the (η, κ) region where the storage formulas are trusted.
pub const ETA_VALIDITY_MIN: f64 = 2.5;
pub const KAPPA_VALIDITY_MIN: f64 = 1.1;

/// Non-fatal diagnostics attached to channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidityWarning {
    /// T_p δω ≤ 1: the EIT window is narrower than the pulse spectrum.
    NarrowEitWindow {
        time_bandwidth: f64,
    },
    /// Δω₀ is not small against min{|aΩ|²/Γ, Γ}.
    BroadPulse {
        delta_omega_0: f64,
        limit: f64,
    },
    EtaBelowRange {
        eta: f64,
    },
    KappaBelowRange {
        kappa: f64,
    },
    /// The compressed pulse does not fit into the medium.
    NotCompressed {
        l_w: f64,
    },
}

impl std::fmt::Display for ValidityWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NarrowEitWindow { time_bandwidth } => {
                write!(f, "T_p*delta_omega = {time_bandwidth:.3} is not >> 1")
            }
            Self::BroadPulse { delta_omega_0, limit } => write!(
                f,
                "pulse bandwidth {delta_omega_0:.3} is not << min(|a Omega|^2/Gamma, Gamma) = {limit:.3}"
            ),
            Self::EtaBelowRange { eta } => write!(f, "eta = {eta:.3} below {ETA_VALIDITY_MIN}"),
            Self::KappaBelowRange { kappa } => write!(f, "kappa = {kappa:.3} below {KAPPA_VALIDITY_MIN}"),
            Self::NotCompressed { l_w } => write!(f, "pulse length in the medium L_w = {l_w:.3} >= L"),
        }
    }
}

/// Transform-limited intensity FWHM bandwidth Δω₀ = 4 ln2 / T_p of a
/// Gaussian pulse with intensity FWHM T_p.
pub fn pulse_bandwidth(t_p: f64) -> f64 {
    4.0 * LN_2 / t_p
}

/// Write-channel slow-light quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteChannelParams {
    pub omega_w: f64,
    pub t_p: f64,
    pub kappa: f64,
    /// Group velocity in medium lengths per unit time.
    pub v_w: f64,
    /// Intensity-FWHM EIT transparency window.
    pub delta_omega_w: f64,
    pub t_d: f64,
    pub eta: f64,
    /// Spatial length of the compressed pulse, v_w T_p.
    pub l_w: f64,
    /// Position of the stored peak, v_w t_w.
    pub z_c: f64,
    /// Write broadening factor at z_c.
    pub beta_w_mid: f64,
    pub warnings: Vec<ValidityWarning>,
}

impl WriteChannelParams {
    /// β_w(z) = [1 + (4 ln2 / (T_p δω_w))² z]^{1/2}.
    pub fn beta_w_at(&self, z: f64) -> f64 {
        if self.delta_omega_w.is_infinite() {
            return 1.0;
        }
        (1.0 + (4.0 * LN_2 / (self.t_p * self.delta_omega_w)).powi(2) * z).sqrt()
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn channel_delay(scheme: &ConversionScheme, branch: Branch, omega: f64) -> f64 {
    let m = scheme.moments(branch);
    scheme.alpha(branch) * scheme.gamma(branch) * m.ratio_sq / (omega * omega)
}

fn channel_window(scheme: &ConversionScheme, branch: Branch, omega: f64) -> f64 {
    let m = scheme.moments(branch);
    let gamma = scheme.gamma(branch);
    let inv_sq = scheme.alpha(branch) * gamma * gamma * m.quartic / (LN_2 * omega.powi(4));
    if inv_sq > 0.0 {
        inv_sq.powf(-0.5)
    } else {
        f64::INFINITY
    }
}

fn bandwidth_warnings(
    scheme: &ConversionScheme,
    branch: Branch,
    omega: f64,
    t_p: f64,
    window: f64,
    out: &mut Vec<ValidityWarning>,
) {
    let tb = t_p * window;
    if tb <= 1.0 {
        out.push(ValidityWarning::NarrowEitWindow { time_bandwidth: tb });
    }
    let gamma = scheme.gamma(branch);
    let rabi_sq = scheme.moments(branch).min_control_sq * omega * omega;
    let limit = (rabi_sq / gamma).min(gamma);
    let d0 = pulse_bandwidth(t_p);
    if d0 >= limit {
        out.push(ValidityWarning::BroadPulse {
            delta_omega_0: d0,
            limit,
        });
    }
}

/// Group delay, EIT window and write broadening from the population-weighted
/// sums of the probe branch.
pub fn write_channel(scheme: &ConversionScheme, omega_w: f64, t_p: f64, kappa: f64) -> Result<WriteChannelParams> {
    check_positive("omega_w", omega_w)?;
    check_positive("t_p", t_p)?;
    check_positive("kappa", kappa)?;
    let t_d = channel_delay(scheme, Branch::Probe, omega_w);
    let delta_omega_w = channel_window(scheme, Branch::Probe, omega_w);
    let v_w = if t_d > 0.0 { 1.0 / t_d } else { f64::INFINITY };
    let eta = t_d / t_p;
    let l_w = v_w * t_p;
    let z_c = v_w * kappa * t_p;
    let mut warnings = Vec::new();
    bandwidth_warnings(scheme, Branch::Probe, omega_w, t_p, delta_omega_w, &mut warnings);
    if eta < ETA_VALIDITY_MIN {
        warnings.push(ValidityWarning::EtaBelowRange { eta });
    }
    if kappa < KAPPA_VALIDITY_MIN {
        warnings.push(ValidityWarning::KappaBelowRange { kappa });
    }
    if l_w >= 1.0 {
        warnings.push(ValidityWarning::NotCompressed { l_w });
    }
    let mut params = WriteChannelParams {
        omega_w,
        t_p,
        kappa,
        v_w,
        delta_omega_w,
        t_d,
        eta,
        l_w,
        z_c,
        beta_w_mid: 1.0,
        warnings,
    };
    params.beta_w_mid = if t_d > 0.0 { params.beta_w_at(z_c.min(1.0)) } else { 1.0 };
    Ok(params)
}

/// Writing Rabi frequency that produces the delay ratio η = T_d/T_p.
pub fn omega_w_for_eta(scheme: &ConversionScheme, eta: f64, t_p: f64) -> Result<f64> {
    check_positive("eta", eta)?;
    check_positive("t_p", t_p)?;
    let m = scheme.moments(Branch::Probe);
    let num = scheme.alpha_p * scheme.gamma_w * m.ratio_sq;
    if !(num > 0.0) {
        return Err(Error::DegenerateScheme("probe branch has no optical depth".into()));
    }
    Ok((num / (eta * t_p)).sqrt())
}

/// Reading Rabi frequency giving the converted channel the same
/// per-depth delay as the write channel: |a_r Ω_r|²/D_c = |a_w Ω_w|²/D_p
/// for a single state, and T_r = T_d · (Σ-weighted) in general.
pub fn omega_r_delay_matched(scheme: &ConversionScheme, omega_w: f64, ratio: f64) -> Result<f64> {
    check_positive("omega_w", omega_w)?;
    check_positive("control_ratio", ratio)?;
    let p = scheme.moments(Branch::Probe);
    let c = scheme.moments(Branch::Converted);
    let (dp, dc) = (scheme.alpha_p * p.ratio_sq, scheme.alpha_c * c.ratio_sq);
    if !(dp > 0.0) || !(dc > 0.0) {
        return Err(Error::DegenerateScheme("vanishing branch depth".into()));
    }
    Ok(ratio * omega_w * (dc * scheme.gamma_r / (dp * scheme.gamma_w)).sqrt())
}

/// Reading Rabi frequency from a CG-weighted amplitude ratio
/// |a_r Ω_r| / |a_w Ω_w| with a_eff² = Σ p a².
pub fn omega_r_from_control_ratio(scheme: &ConversionScheme, omega_w: f64, ratio: f64) -> Result<f64> {
    check_positive("omega_w", omega_w)?;
    check_positive("control_ratio", ratio)?;
    let a_w = effective_control(scheme, Branch::Probe);
    let a_r = effective_control(scheme, Branch::Converted);
    if !(a_w > 0.0) || !(a_r > 0.0) {
        return Err(Error::DegenerateScheme("vanishing control coefficient".into()));
    }
    Ok(ratio * omega_w * a_w / a_r)
}

fn effective_control(scheme: &ConversionScheme, branch: Branch) -> f64 {
    compensated_sum(scheme.populated().map(|s| {
        let c = s.branch_cg(branch).1;
        s.population * c * c
    }))
    .sqrt()
}

/// Read-channel slow-light quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadChannelParams {
    pub omega_r: f64,
    pub v_r: f64,
    /// Transit time of the converted field through the full medium.
    pub t_r: f64,
    pub delta_omega_r: f64,
    pub beta_r_l: f64,
    pub warnings: Vec<ValidityWarning>,
}

/// Converted-channel quantities; β_r accumulates over the remaining length
/// L − z_c and starts from the write-broadened spin wave.
pub fn read_channel(scheme: &ConversionScheme, write: &WriteChannelParams, omega_r: f64) -> Result<ReadChannelParams> {
    check_positive("omega_r", omega_r)?;
    if write.z_c >= 1.0 {
        return Err(Error::Domain(format!(
            "stored peak z_c = {:.3} lies outside the medium (kappa >= eta)",
            write.z_c
        )));
    }
    let t_r = channel_delay(scheme, Branch::Converted, omega_r);
    let delta_omega_r = channel_window(scheme, Branch::Converted, omega_r);
    let v_r = if t_r > 0.0 { 1.0 / t_r } else { f64::INFINITY };
    let beta_r_l = if delta_omega_r.is_infinite() || write.t_d == 0.0 {
        1.0
    } else {
        let k = 4.0 * LN_2 / (delta_omega_r * write.beta_w_mid * write.t_p);
        (1.0 + k * k * (v_r / write.v_w).powi(2) * (1.0 - write.z_c)).sqrt()
    };
    let mut warnings = Vec::new();
    bandwidth_warnings(
        scheme,
        Branch::Converted,
        omega_r,
        write.t_p,
        delta_omega_r,
        &mut warnings,
    );
    Ok(ReadChannelParams {
        omega_r,
        v_r,
        t_r,
        delta_omega_r,
        beta_r_l,
        warnings,
    })
}

fn check_eta_kappa(eta: f64, kappa: f64) -> Result<()> {
    if !(kappa > 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!(
            "need eta > kappa > 0, got eta={eta}, kappa={kappa}"
        )));
    }
    if eta <= kappa {
        return Err(Error::Domain(format!("eta = {eta} must exceed kappa = {kappa}")));
    }
    Ok(())
}

/// Logs the validity window of the (η, κ) formulas.
fn note_validity(eta: f64, kappa: f64) {
    if eta < ETA_VALIDITY_MIN || kappa < KAPPA_VALIDITY_MIN {
        log::debug!("eta={eta}, kappa={kappa} outside the calibrated storage window");
    }
}

/// β_w = [1 + 16 ln2 η κ / D_p]^{1/2} for a single Λ system.
pub fn beta_w_simple(eta: f64, kappa: f64, d_p: f64) -> Result<f64> {
    check_eta_kappa(eta, kappa)?;
    check_positive("D_p", d_p)?;
    note_validity(eta, kappa);
    Ok((1.0 + 16.0 * LN_2 * eta * kappa / d_p).sqrt())
}

/// β_r = [1 + 16 ln2 η (η − κ) / D_c]^{1/2}.
///
/// This is the reduced form that drops the write broadening of the spin
/// wave; [`beta_r_consistent`] keeps it.
pub fn beta_r_simple(eta: f64, kappa: f64, d_c: f64) -> Result<f64> {
    check_eta_kappa(eta, kappa)?;
    check_positive("D_c", d_c)?;
    note_validity(eta, kappa);
    Ok((1.0 + 16.0 * LN_2 * eta * (eta - kappa) / d_c).sqrt())
}

/// β_r = [1 + 16 ln2 η (η − κ) / (D_c β_w²)]^{1/2}, identical to
/// [`read_channel`] for a single state with a delay-independent reading field.
pub fn beta_r_consistent(eta: f64, kappa: f64, d_p: f64, d_c: f64) -> Result<f64> {
    let bw = beta_w_simple(eta, kappa, d_p)?;
    check_positive("D_c", d_c)?;
    Ok((1.0 + 16.0 * LN_2 * eta * (eta - kappa) / (d_c * bw * bw)).sqrt())
}

/// Gaussian spin-wave descriptor of one subsystem at the write cutoff:
/// σ_sg(z) = amplitude · exp(−2 ln2 (z − center)² / fwhm²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredGaussian {
    pub m: i32,
    pub amplitude: f64,
    pub center: f64,
    /// FWHM of |σ_sg|².
    pub fwhm: f64,
}

impl StoredGaussian {
    pub fn value_at(&self, z: f64) -> f64 {
        self.amplitude * (-2.0 * LN_2 * ((z - self.center) / self.fwhm).powi(2)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredProfile {
    pub subsystems: Vec<StoredGaussian>,
    pub warnings: Vec<ValidityWarning>,
}

/// Stored ground coherence after an instantaneous write cutoff, from the
/// adiabatic dark-state relation with the mid-medium broadening factor.
pub fn stored_coherence_profile(scheme: &ConversionScheme, write: &WriteChannelParams, e0: f64) -> StoredProfile {
    let g_p = scheme.g_p();
    let beta = write.beta_w_mid;
    let fwhm = write.l_w * beta;
    let subsystems = scheme
        .subsystems
        .iter()
        .map(|s| StoredGaussian {
            m: s.m,
            amplitude: if s.population > 0.0 {
                -e0 * s.population * g_p * s.r_p() / (write.omega_w * beta)
            } else {
                0.0
            },
            center: write.z_c,
            fwhm,
        })
        .collect();
    let warnings = write
        .warnings
        .iter()
        .filter(|w| matches!(w, ValidityWarning::NotCompressed { .. }))
        .cloned()
        .collect::<Vec<_>>();
    for w in &warnings {
        log::warn!("stored profile: {w}");
    }
    StoredProfile { subsystems, warnings }
}

/// Gaussian converted pulse at the medium exit:
/// E_c(t) = peak · exp(−2 ln2 (t − delay)² / fwhm²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvertedSpectrum {
    /// Peak field amplitude (signed: carries the sign of Σ p R^p R^c).
    pub peak: f64,
    /// Exit time of the peak, measured from the read switch-on.
    pub delay: f64,
    /// Intensity FWHM duration.
    pub fwhm: f64,
    /// Intensity FWHM bandwidth.
    pub bandwidth: f64,
    pub energy: f64,
}

impl ConvertedSpectrum {
    pub fn time_domain(&self, t: f64) -> f64 {
        self.peak * (-2.0 * LN_2 * ((t - self.delay) / self.fwhm).powi(2)).exp()
    }

    /// E_c(ω) = (2π)^{-1/2} ∫ e^{iωt} E_c(t) dt.
    pub fn spectrum(&self, omega: f64) -> Complex64 {
        let scale = self.peak * self.fwhm / (4.0 * LN_2).sqrt();
        let mag = scale * (-omega * omega * self.fwhm * self.fwhm / (8.0 * LN_2)).exp();
        Complex64::from_polar(1.0, omega * self.delay) * mag
    }
}

/// Energy ∫|E|²dt of a Gaussian with peak amplitude `peak` and intensity
/// FWHM `fwhm`.
pub fn gaussian_energy(peak: f64, fwhm: f64) -> f64 {
    peak * peak * fwhm * (PI / (4.0 * LN_2)).sqrt()
}

/// Second-order converted-field spectrum at the medium exit for a Gaussian
/// probe of peak amplitude `e0`.
pub fn converted_spectrum(
    scheme: &ConversionScheme,
    write: &WriteChannelParams,
    read: &ReadChannelParams,
    e0: f64,
) -> Result<ConvertedSpectrum> {
    if !(write.t_d > 0.0) || !(read.t_r > 0.0) {
        return Err(Error::DegenerateScheme(
            "converted spectrum needs nonzero delays".into(),
        ));
    }
    let cross = scheme.cross_moment();
    let (bw, br) = (write.beta_w_mid, read.beta_r_l);
    let peak = 2.0 * scheme.g_c() * scheme.g_p() * cross * e0 / (read.omega_r * write.omega_w * bw * br * read.t_r);
    let fwhm = write.l_w * bw * br * read.t_r;
    Ok(ConvertedSpectrum {
        peak,
        delay: (1.0 - write.z_c) * read.t_r,
        fwhm,
        bandwidth: 4.0 * LN_2 / fwhm,
        energy: gaussian_energy(peak, fwhm),
    })
}

/// Δω_c = [1/(β_w β_r)] |Ω_r/Ω_w|² (Σ g_p² p (R^p)² / Σ g_c² p (R^c)²) Δω₀.
pub fn converted_bandwidth(
    scheme: &ConversionScheme,
    write: &WriteChannelParams,
    read: &ReadChannelParams,
    delta_omega_0: f64,
) -> f64 {
    let sp = scheme.g_p().powi(2) * scheme.moments(Branch::Probe).ratio_sq;
    let sc = scheme.g_c().powi(2) * scheme.moments(Branch::Converted).ratio_sq;
    (read.omega_r / write.omega_w).powi(2) * (sp / sc) * delta_omega_0 / (write.beta_w_mid * read.beta_r_l)
}

/// Energies accompanying an efficiency report, in units of ∫|E|²dt.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub input: f64,
    pub leaked: f64,
    pub stored: f64,
    pub retrieved_original: Option<f64>,
    pub converted: f64,
}

/// Conversion efficiency factors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub xi1: f64,
    pub xi2: f64,
    pub xi_total: f64,
    pub xi_relative: Option<f64>,
    pub delta_omega_c: f64,
    pub energies: Option<EnergyBudget>,
    /// Set when the report could not be formed from nonzero energies.
    #[serde(default)]
    pub degenerate: bool,
}

/// ξᵀ = ξ₁ ξ₂ with ξ₁ = 1/(β_w β_r), plus ξᴿ when (η, κ) admits it.
pub fn total_efficiency(
    scheme: &ConversionScheme,
    write: &WriteChannelParams,
    read: &ReadChannelParams,
) -> Result<EfficiencyReport> {
    let xi2 = coherence_mismatch(scheme)?;
    let xi1 = 1.0 / (write.beta_w_mid * read.beta_r_l);
    let xi_relative = if write.eta > write.kappa {
        Some(relative_efficiency_multi(scheme, write.eta, write.kappa)?)
    } else {
        None
    };
    Ok(EfficiencyReport {
        xi1,
        xi2,
        xi_total: xi1 * xi2,
        xi_relative,
        delta_omega_c: converted_bandwidth(scheme, write, read, pulse_bandwidth(write.t_p)),
        energies: None,
        degenerate: false,
    })
}

/// Single-state ξᴿ = {(1 + X/D_p)/(1 + X/D_c)}^{1/2}, X = 16 ln2 (1 − κ/η) η² / β_w².
pub fn relative_efficiency_single(eta: f64, kappa: f64, d_p: f64, d_c: f64) -> Result<f64> {
    let bw = beta_w_simple(eta, kappa, d_p)?;
    check_positive("D_c", d_c)?;
    let x = 16.0 * LN_2 * (1.0 - kappa / eta) * eta * eta / (bw * bw);
    Ok(((1.0 + x / d_p) / (1.0 + x / d_c)).sqrt())
}

/// Σ p (R)⁴/(a² α) / (Σ p R²)² of one branch; reduces to 1/D for one state.
fn broadening_moment(scheme: &ConversionScheme, branch: Branch) -> Result<f64> {
    let m = scheme.moments(branch);
    let alpha = scheme.alpha(branch);
    if !(m.ratio_sq > 0.0) || !(alpha > 0.0) {
        return Err(Error::DegenerateScheme(format!(
            "{branch:?} branch has no optical depth"
        )));
    }
    Ok(m.quartic / (alpha * m.ratio_sq * m.ratio_sq))
}

/// Multi-Zeeman ξᴿ = ξ₂ {(1 + Y S_p)/(1 + Y S_c)}^{1/2} with
/// Y = 16 ln2 η (η − κ)/β_w² and S the branch broadening moments.
pub fn relative_efficiency_multi(scheme: &ConversionScheme, eta: f64, kappa: f64) -> Result<f64> {
    check_eta_kappa(eta, kappa)?;
    note_validity(eta, kappa);
    let xi2 = coherence_mismatch(scheme)?;
    let s_p = broadening_moment(scheme, Branch::Probe)?;
    let s_c = broadening_moment(scheme, Branch::Converted)?;
    let beta_w_sq = 1.0 + 16.0 * LN_2 * eta * kappa * s_p;
    let y = 16.0 * LN_2 * eta * (eta - kappa) / beta_w_sq;
    Ok(xi2 * ((1.0 + y * s_p) / (1.0 + y * s_c)).sqrt())
}

/// One row of the sweep CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub eta: f64,
    pub kappa: f64,
    #[serde(rename = "D_p")]
    pub d_p: f64,
    #[serde(rename = "D_c")]
    pub d_c: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub xi_total: f64,
    pub xi_relative: Option<f64>,
    pub delta_omega_c: f64,
}

impl EfficiencyRow {
    pub const HEADER: [&'static str; 9] = [
        "eta",
        "kappa",
        "D_p",
        "D_c",
        "xi1",
        "xi2",
        "xi_total",
        "xi_relative",
        "delta_omega_c",
    ];

    pub fn new(scheme: &ConversionScheme, write: &WriteChannelParams, report: &EfficiencyReport) -> Self {
        Self {
            eta: write.eta,
            kappa: write.kappa,
            d_p: scheme.effective_depth(Branch::Probe),
            d_c: scheme.effective_depth(Branch::Converted),
            xi1: report.xi1,
            xi2: report.xi2,
            xi_total: report.xi_total,
            xi_relative: report.xi_relative,
            delta_omega_c: report.delta_omega_c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::{build_cesium_d1_scheme, Direction, PopulationDistribution};

    fn single(d_p: f64, d_c: f64) -> ConversionScheme {
        ConversionScheme::single_state_with_depths(d_p, d_c).unwrap()
    }

    #[test]
    fn vacuum_limit() {
        let s = ConversionScheme::single_state(1.0, 1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let w = write_channel(&s, 1.0, 5.0, 1.35).unwrap();
        assert_eq!(w.t_d, 0.0);
        assert_eq!(w.beta_w_mid, 1.0);
    }

    #[test]
    fn eta_recovered_from_control() {
        let s = single(500.0, 500.0);
        let t_p = 5.73;
        let om = omega_w_for_eta(&s, 4.0, t_p).unwrap();
        // |a_w Ω_w|² = D_p Γ / T_d
        assert!((om * om - 500.0 / (4.0 * t_p)).abs() < 1e-12);
        let w = write_channel(&s, om, t_p, 1.35).unwrap();
        assert!((w.eta - 4.0).abs() < 1e-12);
        assert!((w.t_d - 500.0 / (om * om)).abs() < 1e-9);
    }

    #[test]
    fn channel_beta_matches_simple_form() {
        let s = single(500.0, 500.0);
        let t_p = 5.73;
        let om = omega_w_for_eta(&s, 4.0, t_p).unwrap();
        let w = write_channel(&s, om, t_p, 1.35).unwrap();
        let bw = beta_w_simple(4.0, 1.35, 500.0).unwrap();
        assert!((w.beta_w_mid - bw).abs() < 1e-12);
        assert!((bw - 1.0582).abs() < 5e-5);
        for ratio in [0.5, 1.0, 3.0] {
            let r = read_channel(&s, &w, ratio * om).unwrap();
            let br = beta_r_consistent(4.0, 1.35, 500.0, 500.0).unwrap();
            assert!((r.beta_r_l - br).abs() < 1e-12);
        }
    }

    #[test]
    fn simple_betas() {
        assert!((beta_r_simple(4.0, 1.35, 500.0).unwrap() - 1.1114).abs() < 5e-5);
        assert!((beta_r_simple(4.0, 1.35, 5000.0).unwrap() - 1.011687).abs() < 1e-6);
        assert!((beta_r_simple(4.0, 1.35, 5000.0).unwrap() - 1.0116).abs() < 1e-4);
        let xi1 = 1.0 / (beta_w_simple(4.0, 1.35, 500.0).unwrap() * beta_r_simple(4.0, 1.35, 500.0).unwrap());
        assert!((xi1 - 0.8503).abs() < 5e-5);
        assert!((beta_w_simple(4.0, 1.35, 1e15).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(beta_r_simple(1.0, 1.35, 500.0), Err(Error::Domain(_))));
        assert!(matches!(beta_w_simple(1.35, 1.35, 500.0), Err(Error::Domain(_))));
    }

    #[test]
    fn relative_single_values() {
        assert!((relative_efficiency_single(4.0, 1.35, 500.0, 500.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((relative_efficiency_single(4.0, 1.35, 500.0, 5000.0).unwrap() - 1.0886).abs() < 5e-4);
        assert!((relative_efficiency_single(4.0, 1.35, 500.0, 50.0).unwrap() - 0.6248).abs() < 5e-4);
    }

    #[test]
    fn multi_reduces_to_single() {
        let dp = 500.0;
        for dc in [50.0, 500.0, 5000.0] {
            let s = single(dp, dc);
            let a = relative_efficiency_multi(&s, 4.0, 1.35).unwrap();
            let b = relative_efficiency_single(4.0, 1.35, dp, dc).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_population_cancels() {
        let p = PopulationDistribution::isotropic();
        let s = build_cesium_d1_scheme(Direction::SigmaPlusToMinus, &p, 100.0, 100.0).unwrap();
        let xi2 = coherence_mismatch(&s).unwrap();
        for eta in [2.0, 4.0, 8.0] {
            assert!((relative_efficiency_multi(&s, eta, 1.35).unwrap() - xi2).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_conversion_bandwidth() {
        let s = single(500.0, 500.0);
        let t_p = 5.73;
        let om = omega_w_for_eta(&s, 4.0, t_p).unwrap();
        let w = write_channel(&s, om, t_p, 1.35).unwrap();
        let d0 = pulse_bandwidth(t_p);
        for ratio in [1.0, 2.0] {
            let r = read_channel(&s, &w, ratio * om).unwrap();
            let adiabatic = converted_bandwidth(&s, &w, &r, d0) * w.beta_w_mid * r.beta_r_l;
            assert!((adiabatic - ratio * ratio * d0).abs() < 1e-10 * d0);
            let spec = converted_spectrum(&s, &w, &r, 1.0).unwrap();
            assert!((spec.bandwidth - converted_bandwidth(&s, &w, &r, d0)).abs() < 1e-10);
        }
    }

    #[test]
    fn converted_energy_equals_efficiency() {
        let p = PopulationDistribution::new(&[0.05, 0.05, 0.1, 0.1, 0.2, 0.2, 0.3]).unwrap();
        let s = build_cesium_d1_scheme(Direction::SigmaMinusToPlus, &p, 800.0, 800.0).unwrap();
        let t_p = 5.73;
        let om = omega_w_for_eta(&s, 4.0, t_p).unwrap();
        let w = write_channel(&s, om, t_p, 1.35).unwrap();
        let r = read_channel(&s, &w, 1.7 * om).unwrap();
        let spec = converted_spectrum(&s, &w, &r, 0.3).unwrap();
        let rep = total_efficiency(&s, &w, &r).unwrap();
        let e_in = gaussian_energy(0.3, t_p);
        assert!((spec.energy / e_in - rep.xi_total).abs() < 1e-12);
        // spectrum is the Fourier transform of the time-domain pulse
        let dt = spec.fwhm / 200.0;
        let omega = 0.7 * spec.bandwidth;
        let ft: Complex64 = (-4000..4000)
            .map(|k| {
                let t = spec.delay + k as f64 * dt;
                Complex64::from_polar(spec.time_domain(t), omega * t)
            })
            .sum::<Complex64>()
            * (dt / (2.0 * PI).sqrt());
        assert!((ft - spec.spectrum(omega)).norm() < 1e-10 * spec.spectrum(0.0).norm());
    }

    #[test]
    fn stored_profile_unpopulated_is_zero() {
        let s = build_cesium_d1_scheme(
            Direction::SigmaPlusToMinus,
            &PopulationDistribution::single(2).unwrap(),
            500.0,
            500.0,
        )
        .unwrap();
        let om = omega_w_for_eta(&s, 4.0, 5.73).unwrap();
        let w = write_channel(&s, om, 5.73, 1.35).unwrap();
        let prof = stored_coherence_profile(&s, &w, 1.0);
        for g in &prof.subsystems {
            if g.m != 2 {
                assert_eq!(g.amplitude, 0.0);
            } else {
                assert!(g.amplitude != 0.0);
            }
        }
    }

    #[test]
    fn warnings_raised() {
        let s = single(20.0, 20.0);
        let om = omega_w_for_eta(&s, 0.8, 5.73).unwrap();
        let w = write_channel(&s, om, 5.73, 0.5).unwrap();
        assert!(w
            .warnings
            .iter()
            .any(|x| matches!(x, ValidityWarning::EtaBelowRange { .. })));
        assert!(w
            .warnings
            .iter()
            .any(|x| matches!(x, ValidityWarning::NotCompressed { .. })));
        assert!(write_channel(&s, -1.0, 5.73, 1.0).is_err());
    }
}
