//! Time-domain Maxwell–Bloch integration of the write, store and read
//! protocol in the retarded frame.
//!
//! Per subsystem j, with populations frozen (weak probe):
//!
//! ```text
//! ds/dτ  = (i/2)(a_w Ω_w pw + a_r Ω_r pr) − γ_sg s
//! dpw/dτ = (i/2)(a_w Ω_w s + a_p p_j g_p E_p) − (Γ_w/2) pw
//! dpr/dτ = (i/2)(a_r Ω_r s + a_c p_j g_c E_c) − (Γ_r/2) pr
//! ∂_z E_p = i g_p Σ_j a_p pw,   ∂_z E_c = i g_c Σ_j a_c pr
//! ```
//!
//! The fields are marched in z with the trapezoid rule. Its implicit half is
//! eliminated by substitution, E(z+dz) = u + (i g dz/2) Σ a p(z+dz) with u
//! known from the previous slice, which leaves a closed linear ODE in τ for
//! the atoms of the new slice; that ODE is advanced with classical RK4.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::path::Path;

use crate::analytic::{pulse_bandwidth, read_channel, write_channel};
use crate::analytic::{EfficiencyReport, EnergyBudget};
use crate::atomic::{coherence_mismatch, Branch, ConversionScheme, SchemeSummary};
use crate::error::{invalid, Error, Result};
use crate::field::{CoherenceField, FieldGrid};
use crate::fourier::FourierGrid;
use crate::io::write_binary;
use crate::pulse::{centroid, fwhm, GaussianPulse};
use crate::sum::compensated_sum;
use crate::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest admissible dt · (fastest rate).
pub const STABILITY_LIMIT: f64 = 0.1;
/// Relative readout-energy change beyond which a grid check fails.
pub const GRID_CHECK_TOL: f64 = 0.01;

/// Which transition the reading control drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadMode {
    /// Read on the r transition, radiating the converted field.
    #[default]
    Conversion,
    /// Read on the writing transition, radiating back into the probe mode.
    Original,
}

/// Smooth step 6x⁵ − 15x⁴ + 10x³ clamped to [0, 1].
pub fn smootherstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// Control envelopes: the writing field switches off around `t_w`, the
/// reading field switches on around `t_r = t_w + t_s`; each ramp is centred
/// on its switch time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlTimeline {
    pub omega_w: f64,
    pub omega_r: f64,
    /// Write cutoff; `None` keeps the writing field on throughout.
    pub t_w: Option<f64>,
    pub t_s: f64,
    pub ramp_w: f64,
    pub ramp_r: f64,
    #[serde(default)]
    pub mode: ReadMode,
}

impl ControlTimeline {
    /// Constant writing field, no storage.
    pub fn slow_light(omega_w: f64) -> Self {
        Self {
            omega_w,
            omega_r: 0.0,
            t_w: None,
            t_s: 0.0,
            ramp_w: 0.0,
            ramp_r: 0.0,
            mode: ReadMode::Conversion,
        }
    }

    /// Storage protocol with ramps of 0.1 T_p.
    pub fn protocol(omega_w: f64, omega_r: f64, t_p: f64, kappa: f64, t_s: f64) -> Self {
        Self {
            omega_w,
            omega_r,
            t_w: Some(kappa * t_p),
            t_s,
            ramp_w: 0.1 * t_p,
            ramp_r: 0.1 * t_p,
            mode: ReadMode::Conversion,
        }
    }

    pub fn with_mode(self, mode: ReadMode) -> Self {
        Self { mode, ..self }
    }

    pub fn t_r(&self) -> Option<f64> {
        self.t_w.map(|t| t + self.t_s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_w > 0.0) || !self.omega_w.is_finite() {
            return Err(invalid("omega_w", format!("must be positive, got {}", self.omega_w)));
        }
        if self.t_w.is_some() && (!(self.omega_r > 0.0) || !self.omega_r.is_finite()) {
            return Err(invalid("omega_r", format!("must be positive, got {}", self.omega_r)));
        }
        for (name, v) in [("t_s", self.t_s), ("ramp_w", self.ramp_w), ("ramp_r", self.ramp_r)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.t_w.is_some() && self.t_s < 0.5 * (self.ramp_w + self.ramp_r) {
            return Err(invalid("t_s", "storage time shorter than the overlapping ramps"));
        }
        Ok(())
    }

    fn write_envelope(&self, t: f64) -> f64 {
        match self.t_w {
            None => self.omega_w,
            Some(tw) => self.omega_w * (1.0 - ramp(t, tw, self.ramp_w)),
        }
    }

    fn read_envelope(&self, t: f64) -> f64 {
        match self.t_r() {
            None => 0.0,
            Some(tr) => self.omega_r * ramp(t, tr, self.ramp_r),
        }
    }

    /// Rabi frequencies (writing transition, reading transition) at τ.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let (w, r) = (self.write_envelope(t), self.read_envelope(t));
        match self.mode {
            ReadMode::Conversion => (w, r),
            ReadMode::Original => (w + r, 0.0),
        }
    }

    /// End of the write ramp.
    pub fn write_off(&self) -> Option<f64> {
        self.t_w.map(|t| t + 0.5 * self.ramp_w)
    }

    /// Start of the read ramp.
    pub fn read_on(&self) -> Option<f64> {
        self.t_r().map(|t| t - 0.5 * self.ramp_r)
    }
}

fn ramp(t: f64, center: f64, width: f64) -> f64 {
    if width == 0.0 {
        if t >= center {
            1.0
        } else {
            0.0
        }
    } else {
        smootherstep((t - center + 0.5 * width) / width)
    }
}

/// Space–time sampling of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbGrid {
    /// z intervals on [0, 1].
    pub n_z: usize,
    pub dt: f64,
    pub t_start: f64,
    pub n_t: usize,
    /// Keep every `z_stride`-th slice in the field record.
    pub z_stride: usize,
    /// Keep every `t_stride`-th time sample in the field record.
    pub t_stride: usize,
}

impl MbGrid {
    pub const DEFAULT_N_Z: usize = 200;

    pub fn t_end(&self) -> f64 {
        self.t_start + (self.n_t - 1) as f64 * self.dt
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t_start + n as f64 * self.dt
    }

    /// dt and dz halved over the same window.
    pub fn refined(&self) -> Self {
        Self {
            n_z: 2 * self.n_z,
            dt: 0.5 * self.dt,
            n_t: 2 * self.n_t - 1,
            z_stride: 2 * self.z_stride,
            t_stride: 2 * self.t_stride,
            ..*self
        }
    }

    /// Default grid: n_z = max(200, D_max/10), dt at the stability limit,
    /// window from −4 T_p to the end of the expected readout.
    pub fn auto(scheme: &ConversionScheme, timeline: &ControlTimeline, pulse: &GaussianPulse) -> Result<Self> {
        timeline.validate()?;
        let d_max = [Branch::Probe, Branch::Converted]
            .iter()
            .flat_map(|&b| scheme.populated().map(move |s| (b, s.branch_cg(b).0)))
            .map(|(b, a)| scheme.alpha(b) * a * a)
            .fold(0.0, f64::max);
        let mut n_z = Self::DEFAULT_N_Z.max((d_max / 10.0).ceil() as usize);
        n_z += n_z % 2;
        let rate = max_rate(scheme, timeline, pulse, n_z);
        let dt = STABILITY_LIMIT / rate;
        let t_start = pulse.t_peak - 4.0 * pulse.t_p;
        let t_end = expected_end(scheme, timeline, pulse)?;
        let n_t = ((t_end - t_start) / dt).ceil() as usize + 1;
        Ok(Self {
            n_z,
            dt,
            t_start,
            n_t,
            z_stride: (n_z / 20).max(1),
            t_stride: 1,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n_z < 1 {
            return Err(invalid("n_z", "need at least one z interval"));
        }
        if self.n_t < 4 {
            return Err(invalid("n_t", "need at least four time samples"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.z_stride == 0 || self.t_stride == 0 {
            return Err(invalid("stride", "strides must be >= 1"));
        }
        Ok(())
    }
}

fn read_branch_rabi(scheme: &ConversionScheme, timeline: &ControlTimeline) -> f64 {
    scheme
        .populated()
        .map(|s| match timeline.mode {
            ReadMode::Conversion => (s.a_r * timeline.omega_r).abs(),
            ReadMode::Original => (s.a_w * timeline.omega_r).abs(),
        })
        .fold(0.0, f64::max)
}

/// max{Γ, |aΩ|, Δω₀, slice coupling rate}.
fn max_rate(scheme: &ConversionScheme, timeline: &ControlTimeline, pulse: &GaussianPulse, n_z: usize) -> f64 {
    let write_rabi = scheme
        .populated()
        .map(|s| (s.a_w * timeline.omega_w).abs())
        .fold(0.0, f64::max);
    let read_rabi = if timeline.t_w.is_some() {
        read_branch_rabi(scheme, timeline)
    } else {
        0.0
    };
    let dz = 1.0 / n_z as f64;
    let coupling = [Branch::Probe, Branch::Converted]
        .iter()
        .map(|&b| {
            let g2 = scheme.alpha(b) * scheme.gamma(b) / 2.0;
            0.25 * g2 * dz * scheme.moments(b).depth_factor
        })
        .fold(0.0, f64::max);
    [
        scheme.gamma_w,
        scheme.gamma_r,
        write_rabi,
        read_rabi,
        pulse_bandwidth(pulse.t_p),
        coupling,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn expected_end(scheme: &ConversionScheme, timeline: &ControlTimeline, pulse: &GaussianPulse) -> Result<f64> {
    let t_p = pulse.t_p;
    let t_d = scheme.alpha_p * scheme.gamma_w * scheme.moments(Branch::Probe).ratio_sq / timeline.omega_w.powi(2);
    let Some(t_w) = timeline.t_w else {
        return Ok(pulse.t_peak + 2.0 * t_d + 6.0 * t_p);
    };
    let read_scheme = match timeline.mode {
        ReadMode::Conversion => scheme.clone(),
        ReadMode::Original => scheme.original_channel(),
    };
    let kappa = ((t_w - pulse.t_peak) / t_p).max(1e-3);
    let write = write_channel(&read_scheme, timeline.omega_w, t_p, kappa)?;
    let (t_read, beta_r, z_c) = if write.z_c < 1.0 {
        let read = read_channel(&read_scheme, &write, timeline.omega_r)?;
        (read.t_r, read.beta_r_l, write.z_c)
    } else {
        let t = scheme.alpha_c * scheme.gamma_r * read_scheme.moments(Branch::Converted).ratio_sq
            / timeline.omega_r.powi(2);
        (t, 1.0, 0.0)
    };
    let t_out = write.l_w * write.beta_w_mid * beta_r * t_read;
    let tail = (1.2 * t_read)
        .max((1.0 - z_c) * t_read + 4.0 * t_out)
        .max(10.0 / scheme.gamma_r);
    Ok(t_w + timeline.t_s + 0.5 * timeline.ramp_r + tail)
}

/// Energies of one run, in units of ∫|E|² dτ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MbEnergies {
    pub input: f64,
    /// Probe energy leaving z = L before the write field is off.
    pub leaked: f64,
    /// Energy read out after the read ramp starts, in the readout channel.
    pub readout: f64,
    /// Stored excitation 2∫Σ|s|²/p dz at the write-off snapshot.
    pub stored_write: f64,
    /// The same at the read-on snapshot.
    pub stored_read: f64,
    /// input − leaked − readout.
    pub dissipated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub readout_coarse: f64,
    pub readout_fine: f64,
    pub relative_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbDiagnostics {
    pub n_z: usize,
    pub n_t: usize,
    pub dt: f64,
    pub max_rate: f64,
    pub stability_ratio: f64,
    pub grid_check: Option<GridCheck>,
}

/// Parameters needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    pub scheme: SchemeSummary,
    pub pulse: GaussianPulse,
    pub timeline: ControlTimeline,
    pub grid: MbGrid,
}

/// Output of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub params: RunParameters,
    pub times: Vec<f64>,
    pub input: Vec<Complex64>,
    /// Probe envelope at z = L.
    pub probe_out: Vec<Complex64>,
    /// Converted envelope at z = L.
    pub converted_out: Vec<Complex64>,
    pub probe_field: FieldGrid,
    pub converted_field: FieldGrid,
    pub snapshot_write: Option<CoherenceField>,
    pub snapshot_read: Option<CoherenceField>,
    pub energies: MbEnergies,
    /// Coherence-mismatch factor of the scheme that was run.
    pub xi2: f64,
    pub diagnostics: MbDiagnostics,
}

impl SimulationRecord {
    /// Output waveform of the channel the read field drives.
    pub fn readout(&self) -> &[Complex64] {
        match self.params.timeline.mode {
            ReadMode::Conversion => &self.converted_out,
            ReadMode::Original => &self.probe_out,
        }
    }

    /// Index of the first sample at or after the read ramp start.
    pub fn readout_start(&self) -> usize {
        match self.params.timeline.read_on() {
            None => self.times.len(),
            Some(t) => self.times.partition_point(|&x| x < t),
        }
    }

    /// Readout waveform after the read ramp start, with times measured from
    /// the read switch time t_r.
    pub fn readout_window(&self) -> (Vec<f64>, Vec<Complex64>) {
        let k = self.readout_start();
        let t_r = self.params.timeline.t_r().unwrap_or(0.0);
        (
            self.times[k..].iter().map(|t| t - t_r).collect(),
            self.readout()[k..].to_vec(),
        )
    }

    /// Writes `manifest.json`, `waveforms.csv`, the two field grids and the
    /// coherence snapshots into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = serde_json::json!({
            "params": self.params,
            "energies": self.energies,
            "xi2": self.xi2,
            "diagnostics": self.diagnostics,
            "files": {
                "waveforms": "waveforms.csv",
                "probe_field": "probe_field.bin",
                "converted_field": "converted_field.bin",
                "snapshots": "snapshots.json",
            },
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        self.write_waveforms_csv(&dir.join("waveforms.csv"))?;
        for (name, grid) in [
            ("probe_field.bin", &self.probe_field),
            ("converted_field.bin", &self.converted_field),
        ] {
            let flat: Vec<f64> = grid.data.iter().flat_map(|c| [c.re, c.im]).collect();
            write_binary(
                &dir.join(name),
                &["re", "im"],
                &flat,
                serde_json::json!({ "z": grid.z, "t": grid.t, "order": "z-major" }),
            )?;
        }
        let snaps = serde_json::json!({ "write_off": self.snapshot_write, "read_on": self.snapshot_read });
        std::fs::write(dir.join("snapshots.json"), serde_json::to_string(&snaps)?)?;
        Ok(())
    }

    /// Columns t, input, probe_out, converted_out as (re, im) pairs.
    pub fn write_waveforms_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "t,input_re,input_im,probe_out_re,probe_out_im,converted_re,converted_im"
        )?;
        for k in 0..self.times.len() {
            let (a, b, c) = (self.input[k], self.probe_out[k], self.converted_out[k]);
            writeln!(
                w,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                self.times[k], a.re, a.im, b.re, b.im, c.re, c.im
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Atom {
    p: f64,
    a_p: f64,
    a_w: f64,
    a_c: f64,
    a_r: f64,
}

struct Slice<'a> {
    atoms: &'a [Atom],
    g_p: f64,
    g_c: f64,
    gamma_w: f64,
    gamma_r: f64,
    gamma_sg: f64,
}

impl Slice<'_> {
    /// Fills `dy` for state `y` = [s, pw, pr] per atom; `hp`, `hc` are the
    /// implicit trapezoid weights i g dz / 2.
    #[allow(clippy::too_many_arguments)]
    fn deriv(
        &self,
        y: &[Complex64],
        dy: &mut [Complex64],
        om_w: f64,
        om_r: f64,
        u_p: Complex64,
        u_c: Complex64,
        hp: Complex64,
        hc: Complex64,
    ) {
        let mut sum_p = ZERO;
        let mut sum_c = ZERO;
        for (j, a) in self.atoms.iter().enumerate() {
            sum_p += y[3 * j + 1] * a.a_p;
            sum_c += y[3 * j + 2] * a.a_c;
        }
        let e_p = u_p + hp * sum_p;
        let e_c = u_c + hc * sum_c;
        let half_i = 0.5 * I;
        for (j, a) in self.atoms.iter().enumerate() {
            let (s, pw, pr) = (y[3 * j], y[3 * j + 1], y[3 * j + 2]);
            dy[3 * j] = half_i * (pw * (a.a_w * om_w) + pr * (a.a_r * om_r)) - s * self.gamma_sg;
            dy[3 * j + 1] = half_i * (s * (a.a_w * om_w) + e_p * (a.a_p * a.p * self.g_p)) - pw * (0.5 * self.gamma_w);
            dy[3 * j + 2] = half_i * (s * (a.a_r * om_r) + e_c * (a.a_c * a.p * self.g_c)) - pr * (0.5 * self.gamma_r);
        }
    }
}

/// Midpoint values of a uniformly sampled signal: cubic interpolation in the
/// interior, quadratic at the ends.
fn midpoints(u: &[Complex64]) -> Vec<Complex64> {
    let n = u.len();
    (0..n - 1)
        .map(|k| {
            if k == 0 {
                (u[0] * 3.0 + u[1] * 6.0 - u[2]) / 8.0
            } else if k == n - 2 {
                (-u[n - 3] + u[n - 2] * 6.0 + u[n - 1] * 3.0) / 8.0
            } else {
                (-u[k - 1] + (u[k] + u[k + 1]) * 9.0 - u[k + 2]) / 16.0
            }
        })
        .collect()
}

fn energy(samples: &[Complex64], dt: f64) -> f64 {
    compensated_sum(samples.iter().map(|x| x.norm_sqr())) * dt
}

/// Integrates the full protocol.
pub fn run_protocol(
    scheme: &ConversionScheme,
    pulse: &GaussianPulse,
    timeline: &ControlTimeline,
    grid: &MbGrid,
) -> Result<SimulationRecord> {
    scheme.validate()?;
    timeline.validate()?;
    grid.validate()?;
    if !(pulse.t_p > 0.0) || !pulse.e0.is_finite() {
        return Err(invalid("pulse", "need T_p > 0 and a finite amplitude"));
    }
    let rate = max_rate(scheme, timeline, pulse, grid.n_z);
    let ratio = grid.dt * rate;
    if ratio > STABILITY_LIMIT * (1.0 + 1e-9) {
        return Err(Error::Stability {
            ratio,
            limit: STABILITY_LIMIT,
        });
    }

    let n_t = grid.n_t;
    let dt = grid.dt;
    let times: Vec<f64> = (0..n_t).map(|n| grid.time(n)).collect();
    let half_times: Vec<f64> = times.iter().map(|t| t + 0.5 * dt).collect();
    let ctrl: Vec<(f64, f64)> = times.iter().map(|&t| timeline.at(t)).collect();
    let ctrl_half: Vec<(f64, f64)> = half_times.iter().map(|&t| timeline.at(t)).collect();

    let active: Vec<usize> = (0..scheme.subsystems.len())
        .filter(|&j| scheme.subsystems[j].population > 0.0)
        .collect();
    let atoms: Vec<Atom> = active
        .iter()
        .map(|&j| {
            let s = &scheme.subsystems[j];
            Atom {
                p: s.population,
                a_p: s.a_p,
                a_w: s.a_w,
                a_c: s.a_c,
                a_r: s.a_r,
            }
        })
        .collect();
    let slice = Slice {
        atoms: &atoms,
        g_p: scheme.g_p(),
        g_c: scheme.g_c(),
        gamma_w: scheme.gamma_w,
        gamma_r: scheme.gamma_r,
        gamma_sg: scheme.gamma_sg,
    };
    let dz = 1.0 / grid.n_z as f64;
    let z: Vec<f64> = (0..=grid.n_z).map(|k| k as f64 * dz).collect();

    let snap_index = |t: Option<f64>| t.map(|t| (((t - grid.t_start) / dt).round().max(0.0) as usize).min(n_t - 1));
    let snap_w = snap_index(timeline.write_off());
    let snap_r = snap_index(timeline.read_on());
    let m: Vec<i32> = scheme.subsystems.iter().map(|s| s.m).collect();
    let pops: Vec<f64> = scheme.subsystems.iter().map(|s| s.population).collect();
    let mut snapshot_write = snap_w.map(|_| CoherenceField::zeros(z.clone(), m.clone(), pops.clone()));
    let mut snapshot_read = snap_r.map(|_| CoherenceField::zeros(z.clone(), m.clone(), pops.clone()));

    let kept_z: Vec<usize> = (0..=grid.n_z)
        .filter(|k| k % grid.z_stride == 0 || *k == grid.n_z)
        .collect();
    let kept_t: Vec<usize> = (0..n_t).step_by(grid.t_stride).collect();
    let kept_times: Vec<f64> = kept_t.iter().map(|&n| times[n]).collect();
    let mut probe_field = FieldGrid::zeros(kept_z.iter().map(|&k| z[k]).collect(), kept_times.clone());
    let mut converted_field = FieldGrid::zeros(kept_z.iter().map(|&k| z[k]).collect(), kept_times);

    let input: Vec<Complex64> = times.iter().map(|&t| Complex64::new(pulse.amplitude(t), 0.0)).collect();
    let mut e_p = input.clone();
    let mut e_c = vec![ZERO; n_t];
    let mut pol_p = vec![ZERO; n_t];
    let mut pol_c = vec![ZERO; n_t];

    let ns = atoms.len();
    let mut y = vec![ZERO; 3 * ns];
    let mut tmp = vec![ZERO; 3 * ns];
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![ZERO; 3 * ns],
        vec![ZERO; 3 * ns],
        vec![ZERO; 3 * ns],
        vec![ZERO; 3 * ns],
    );
    let mut row = 0usize;

    for k in 0..=grid.n_z {
        // u = E(z_{k−1}) + (i g dz/2) P(z_{k−1}); slice 0 is driven directly.
        let (hp, hc) = if k == 0 {
            (ZERO, ZERO)
        } else {
            (I * (0.5 * slice.g_p * dz), I * (0.5 * slice.g_c * dz))
        };
        let u_p: Vec<Complex64> = e_p.iter().zip(&pol_p).map(|(e, p)| e + hp * p).collect();
        let u_c: Vec<Complex64> = e_c.iter().zip(&pol_c).map(|(e, p)| e + hc * p).collect();
        let u_p_half = midpoints(&u_p);
        let u_c_half = midpoints(&u_c);

        y.iter_mut().for_each(|v| *v = ZERO);
        let record_snap = |y: &[Complex64], snap: &mut Option<CoherenceField>| {
            if let Some(f) = snap.as_mut() {
                for (jj, &j) in active.iter().enumerate() {
                    f.spin[j][k] = y[3 * jj];
                    f.optical[j][k] = y[3 * jj + 1] + y[3 * jj + 2];
                }
            }
        };
        let store_fields = |n: usize,
                            y: &[Complex64],
                            e_p: &mut [Complex64],
                            e_c: &mut [Complex64],
                            pol_p: &mut [Complex64],
                            pol_c: &mut [Complex64]| {
            let (mut sp, mut sc) = (ZERO, ZERO);
            for (j, a) in atoms.iter().enumerate() {
                sp += y[3 * j + 1] * a.a_p;
                sc += y[3 * j + 2] * a.a_c;
            }
            pol_p[n] = sp;
            pol_c[n] = sc;
            e_p[n] = u_p[n] + hp * sp;
            e_c[n] = u_c[n] + hc * sc;
        };
        store_fields(0, &y, &mut e_p, &mut e_c, &mut pol_p, &mut pol_c);
        if snap_w == Some(0) {
            record_snap(&y, &mut snapshot_write);
        }
        if snap_r == Some(0) {
            record_snap(&y, &mut snapshot_read);
        }
        for n in 0..n_t - 1 {
            let (w0, r0) = ctrl[n];
            let (wh, rh) = ctrl_half[n];
            let (w1, r1) = ctrl[n + 1];
            slice.deriv(&y, &mut k1, w0, r0, u_p[n], u_c[n], hp, hc);
            for i in 0..3 * ns {
                tmp[i] = y[i] + k1[i] * (0.5 * dt);
            }
            slice.deriv(&tmp, &mut k2, wh, rh, u_p_half[n], u_c_half[n], hp, hc);
            for i in 0..3 * ns {
                tmp[i] = y[i] + k2[i] * (0.5 * dt);
            }
            slice.deriv(&tmp, &mut k3, wh, rh, u_p_half[n], u_c_half[n], hp, hc);
            for i in 0..3 * ns {
                tmp[i] = y[i] + k3[i] * dt;
            }
            slice.deriv(&tmp, &mut k4, w1, r1, u_p[n + 1], u_c[n + 1], hp, hc);
            for i in 0..3 * ns {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
            }
            store_fields(n + 1, &y, &mut e_p, &mut e_c, &mut pol_p, &mut pol_c);
            if snap_w == Some(n + 1) {
                record_snap(&y, &mut snapshot_write);
            }
            if snap_r == Some(n + 1) {
                record_snap(&y, &mut snapshot_read);
            }
        }
        if !e_p[n_t - 1].is_finite() || !e_c[n_t - 1].is_finite() {
            return Err(Error::Convergence(format!("non-finite field at slice {k}")));
        }
        if row < kept_z.len() && kept_z[row] == k {
            for (dst, &n) in probe_field.row_mut(row).iter_mut().zip(&kept_t) {
                *dst = e_p[n];
            }
            for (dst, &n) in converted_field.row_mut(row).iter_mut().zip(&kept_t) {
                *dst = e_c[n];
            }
            row += 1;
        }
    }

    let input_energy = energy(&input, dt);
    let write_end = timeline.write_off().map_or(n_t, |t| times.partition_point(|&x| x < t));
    let read_start = timeline.read_on().map_or(n_t, |t| times.partition_point(|&x| x < t));
    let leaked = energy(&e_p[..write_end], dt);
    let readout = match timeline.mode {
        ReadMode::Conversion => energy(&e_c[read_start..], dt),
        ReadMode::Original => energy(&e_p[read_start..], dt),
    };
    let energies = MbEnergies {
        input: input_energy,
        leaked,
        readout,
        stored_write: snapshot_write.as_ref().map_or(0.0, |s| s.excitation_energy()),
        stored_read: snapshot_read.as_ref().map_or(0.0, |s| s.excitation_energy()),
        dissipated: input_energy - leaked - readout,
    };
    let xi2 = match timeline.mode {
        ReadMode::Conversion => coherence_mismatch(scheme).unwrap_or(0.0),
        ReadMode::Original => 1.0,
    };
    Ok(SimulationRecord {
        params: RunParameters {
            scheme: scheme.summary(),
            pulse: *pulse,
            timeline: *timeline,
            grid: *grid,
        },
        probe_out: e_p,
        converted_out: e_c,
        times,
        input,
        probe_field,
        converted_field,
        snapshot_write,
        snapshot_read,
        energies,
        xi2,
        diagnostics: MbDiagnostics {
            n_z: grid.n_z,
            n_t,
            dt,
            max_rate: rate,
            stability_ratio: ratio,
            grid_check: None,
        },
    })
}

/// Runs on `grid` and on its refinement; the coarse record carries the
/// comparison and fails with a convergence error beyond 1%.
pub fn run_protocol_checked(
    scheme: &ConversionScheme,
    pulse: &GaussianPulse,
    timeline: &ControlTimeline,
    grid: &MbGrid,
) -> Result<SimulationRecord> {
    let mut coarse = run_protocol(scheme, pulse, timeline, grid)?;
    let fine = run_protocol(scheme, pulse, timeline, &grid.refined())?;
    let (a, b) = (coarse.energies.readout, fine.energies.readout);
    let relative_change = if b > 0.0 { (a - b).abs() / b } else { (a - b).abs() };
    let check = GridCheck {
        readout_coarse: a,
        readout_fine: b,
        relative_change,
        converged: relative_change <= GRID_CHECK_TOL,
    };
    coarse.diagnostics.grid_check = Some(check);
    if !check.converged {
        return Err(Error::Convergence(format!(
            "grid doubling changed the readout energy by {:.2}%",
            100.0 * relative_change
        )));
    }
    Ok(coarse)
}

/// Normalisation of an efficiency.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Input,
    /// Readout of a companion run that reads through the writing channel.
    OriginalChannel(Option<&'a SimulationRecord>),
}

/// Intensity-FWHM bandwidth of a sampled waveform, from a zero-padded FFT.
pub fn measured_bandwidth(times: &[f64], field: &[Complex64]) -> Option<f64> {
    if times.len() < 4 {
        return None;
    }
    let dt = times[1] - times[0];
    let n = (4 * times.len()).next_power_of_two();
    let fg = FourierGrid::new(n, dt, times[0]).ok()?;
    let mut padded = field.to_vec();
    padded.resize(n, ZERO);
    let spec = fg.forward(&padded);
    let omegas = fg.shifted(&fg.omegas());
    let power: Vec<f64> = fg.shifted(&spec).iter().map(|x| x.norm_sqr()).collect();
    fwhm(&omegas, &power)
}

/// ξᵀ = readout / input and, with a companion, ξᴿ = readout / companion
/// readout.
pub fn efficiency_from_record(record: &SimulationRecord, reference: Reference<'_>) -> Result<EfficiencyReport> {
    let companion = match reference {
        Reference::Input => None,
        Reference::OriginalChannel(None) => return Err(Error::MissingCompanion),
        Reference::OriginalChannel(Some(c)) => Some(c),
    };
    let e = &record.energies;
    let budget = EnergyBudget {
        input: e.input,
        leaked: e.leaked,
        stored: e.stored_write,
        retrieved_original: companion.map(|c| c.energies.readout),
        converted: e.readout,
    };
    if !(e.input > 0.0) {
        return Ok(EfficiencyReport {
            energies: Some(budget),
            degenerate: true,
            ..EfficiencyReport::default()
        });
    }
    let xi_total = e.readout / e.input;
    let xi_relative = match companion {
        None => None,
        Some(c) if c.energies.readout > 0.0 => Some(e.readout / c.energies.readout),
        Some(_) => {
            return Ok(EfficiencyReport {
                xi_total,
                xi2: record.xi2,
                energies: Some(budget),
                degenerate: true,
                ..EfficiencyReport::default()
            })
        }
    };
    let (t, f) = record.readout_window();
    Ok(EfficiencyReport {
        xi1: if record.xi2 > 0.0 { xi_total / record.xi2 } else { 0.0 },
        xi2: record.xi2,
        xi_total,
        xi_relative,
        delta_omega_c: measured_bandwidth(&t, &f).unwrap_or(0.0),
        energies: Some(budget),
        degenerate: false,
    })
}

/// Probe energy leaving the medium before the write field is off, as a
/// fraction of the input.
pub fn leakage_energy(record: &SimulationRecord) -> f64 {
    if record.energies.input > 0.0 {
        record.energies.leaked / record.energies.input
    } else {
        0.0
    }
}

/// Group delay from the shift of the amplitude centroid between the medium
/// entrance and exit. For a linear medium this equals −i d ln H/dω at ω = 0.
pub fn probe_delay(record: &SimulationRecord) -> Option<f64> {
    let win: Vec<f64> = record.input.iter().map(|x| x.re).collect();
    let wout: Vec<f64> = record.probe_out.iter().map(|x| x.re).collect();
    Some(centroid(&record.times, &wout)? - centroid(&record.times, &win)?)
}

/// Peak (time, |E|) and intensity FWHM of a sampled pulse.
pub fn pulse_shape(times: &[f64], field: &[Complex64]) -> Option<(f64, f64, f64)> {
    let inten: Vec<f64> = field.iter().map(|x| x.norm_sqr()).collect();
    let (tp, peak) = crate::pulse::peak(times, &inten)?;
    Some((tp, peak.max(0.0).sqrt(), fwhm(times, &inten)?))
}

/// Intensity-FWHM duration implied by a spectral bandwidth for a
/// transform-limited Gaussian.
pub fn gaussian_duration(bandwidth: f64) -> f64 {
    4.0 * LN_2 / bandwidth
}

/// Converts the unitary spectrum density normalisation to the sampled one.
pub fn spectral_norm(dt: f64) -> f64 {
    dt / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::omega_w_for_eta;

    #[test]
    fn ramps_reach_plateaus_exactly() {
        let tl = ControlTimeline::protocol(2.0, 3.0, 5.0, 1.35, 10.0);
        let tw = tl.t_w.unwrap();
        assert_eq!(tl.at(tw - 0.26).0, 2.0);
        assert_eq!(tl.at(tw + 0.26).0, 0.0);
        assert_eq!(tl.at(tl.t_r().unwrap() + 0.26).1, 3.0);
        assert_eq!(tl.at(tl.t_r().unwrap() - 0.26).1, 0.0);
        let orig = tl.with_mode(ReadMode::Original);
        assert_eq!(orig.at(tl.t_r().unwrap() + 1.0), (3.0, 0.0));
        // continuity
        let mut prev = tl.at(tw - 1.0).0;
        for k in 1..2000 {
            let v = tl.at(tw - 1.0 + k as f64 * 1e-3).0;
            assert!((v - prev).abs() < 0.02);
            prev = v;
        }
    }

    #[test]
    fn midpoint_interpolation_is_exact_for_cubics() {
        let u: Vec<Complex64> = (0..8)
            .map(|k| Complex64::new((k as f64).powi(3) - 2.0 * k as f64, 0.0))
            .collect();
        let m = midpoints(&u);
        for (k, v) in m.iter().enumerate().skip(1).take(5) {
            let x = k as f64 + 0.5;
            assert!((v.re - (x.powi(3) - 2.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn stability_violation_rejected() {
        let s = ConversionScheme::single_state_with_depths(100.0, 100.0).unwrap();
        let pulse = GaussianPulse::new(5.73, 1.0, 0.0);
        let om = omega_w_for_eta(&s, 4.0, 5.73).unwrap();
        let tl = ControlTimeline::slow_light(om);
        let mut g = MbGrid::auto(&s, &tl, &pulse).unwrap();
        g.dt *= 3.0;
        assert!(matches!(
            run_protocol(&s, &pulse, &tl, &g),
            Err(Error::Stability { .. })
        ));
    }

    #[test]
    fn zero_input_is_degenerate() {
        let s = ConversionScheme::single_state_with_depths(50.0, 50.0).unwrap();
        let pulse = GaussianPulse::new(5.73, 0.0, 0.0);
        let om = omega_w_for_eta(&s, 3.0, 5.73).unwrap();
        let tl = ControlTimeline::protocol(om, om, 5.73, 1.35, 11.0);
        let mut g = MbGrid::auto(&s, &tl, &pulse).unwrap();
        g.n_z = 20;
        let rec = run_protocol(&s, &pulse, &tl, &g).unwrap();
        let rep = efficiency_from_record(&rec, Reference::Input).unwrap();
        assert!(rep.degenerate);
        assert_eq!(rep.xi_total, 0.0);
        assert!(matches!(
            efficiency_from_record(&rec, Reference::OriginalChannel(None)),
            Err(Error::MissingCompanion)
        ));
    }
}
