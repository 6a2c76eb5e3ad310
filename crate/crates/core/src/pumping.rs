//! Zeeman optical pumping on an F=3 → F′=3 line.
//!
//! Seven ground and seven excited sublevels, a resonant pump with σ⁺, π and
//! σ⁻ components, and spontaneous decay that returns every excited state to
//! the F=3 manifold with branching ratios b². Decay is written in Lindblad
//! form with jump operators L_q = √Γ Σ_m b_{q,m} |g_m⟩⟨e_{m+q}|, so the
//! repopulation terms and the trace conservation come out together.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::atomic::{PopulationDistribution, ZEEMAN_M, ZEEMAN_STATES};
use crate::cg::clebsch_gordan;
use crate::error::{invalid, Error, Result};
use crate::sum::compensated_sum;
use crate::Complex64;

pub const LEVELS: usize = 2 * ZEEMAN_STATES;

/// Trace drift that aborts an integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Pump polarisation component, labelled by Δm = q.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpPolarization {
    SigmaPlus,
    Pi,
    SigmaMinus,
}

impl PumpPolarization {
    pub const ALL: [Self; 3] = [Self::SigmaPlus, Self::Pi, Self::SigmaMinus];

    pub fn q(self) -> i32 {
        match self {
            Self::SigmaPlus => 1,
            Self::Pi => 0,
            Self::SigmaMinus => -1,
        }
    }
}

/// Pump-line coefficient b_{q,m} = ⟨3 m; 1 q | 3 m+q⟩ for the transition
/// |F=3,m⟩ → |F′=3,m+q⟩; zero when m+q leaves the manifold.
pub fn pump_cg(pol: PumpPolarization, m: i32) -> f64 {
    let mp = m + pol.q();
    if mp.abs() > 3 || m.abs() > 3 {
        return 0.0;
    }
    clebsch_gordan(6, 2 * m, 2, 2 * pol.q(), 6, 2 * mp)
}

fn default_gamma() -> f64 {
    1.0
}

/// Pump parameters in units of the excited-state decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    /// σ⁺ Rabi frequency.
    #[serde(alias = "Omega_r_pump", default)]
    pub omega_r: f64,
    /// π Rabi frequency.
    #[serde(alias = "Omega_pi_pump", default)]
    pub omega_pi: f64,
    /// σ⁻ Rabi frequency.
    #[serde(alias = "Omega_l_pump", default)]
    pub omega_l: f64,
    pub duration: f64,
    #[serde(alias = "Gamma", default = "default_gamma")]
    pub gamma: f64,
    /// Decay of ground–ground coherences; zero for a closed system.
    #[serde(default)]
    pub ground_dephasing: f64,
    /// RK4 step; derived from the fastest rate when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Trajectory sampling interval; 1/Γ when absent.
    #[serde(default)]
    pub sample_interval: Option<f64>,
}

impl PumpConfig {
    pub fn sigma_plus(omega: f64, duration: f64) -> Self {
        Self {
            omega_r: omega,
            omega_pi: 0.0,
            omega_l: 0.0,
            duration,
            gamma: 1.0,
            ground_dephasing: 0.0,
            dt: None,
            sample_interval: None,
        }
    }

    pub fn pi(omega: f64, duration: f64) -> Self {
        Self {
            omega_r: 0.0,
            omega_pi: omega,
            ..Self::sigma_plus(0.0, duration)
        }
    }

    pub fn sigma_minus(omega: f64, duration: f64) -> Self {
        Self {
            omega_r: 0.0,
            omega_l: omega,
            ..Self::sigma_plus(0.0, duration)
        }
    }

    pub fn omega(&self, pol: PumpPolarization) -> f64 {
        match pol {
            PumpPolarization::SigmaPlus => self.omega_r,
            PumpPolarization::Pi => self.omega_pi,
            PumpPolarization::SigmaMinus => self.omega_l,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_r", self.omega_r),
            ("omega_pi", self.omega_pi),
            ("omega_l", self.omega_l),
            ("ground_dephasing", self.ground_dephasing),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(invalid("duration", format!("must be positive, got {}", self.duration)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(invalid("dt", format!("must be positive, got {dt}")));
            }
        }
        if let Some(s) = self.sample_interval {
            if !(s > 0.0) {
                return Err(invalid("sample_interval", format!("must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.dt.unwrap_or_else(|| {
            let rate = self.gamma.max(self.omega_r).max(self.omega_pi).max(self.omega_l);
            0.02 / rate
        })
    }
}

fn ground(m: i32) -> usize {
    (m + 3) as usize
}

fn excited(m: i32) -> usize {
    ZEEMAN_STATES + (m + 3) as usize
}

/// 14×14 density matrix; indices 0..7 are |F=3,m⟩, 7..14 are |F′=3,m′⟩,
/// both in ascending m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix14 {
    pub rho: Vec<Complex64>,
}

impl DensityMatrix14 {
    pub fn zeros() -> Self {
        Self {
            rho: vec![Complex64::new(0.0, 0.0); LEVELS * LEVELS],
        }
    }

    pub fn from_ground(p: &PopulationDistribution) -> Self {
        let mut d = Self::zeros();
        for (i, &x) in p.as_slice().iter().enumerate() {
            d.rho[i * LEVELS + i] = Complex64::new(x, 0.0);
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rho[i * LEVELS + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.rho[i * LEVELS + j] = v;
    }

    pub fn trace(&self) -> f64 {
        compensated_sum((0..LEVELS).map(|i| self.get(i, i).re))
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..LEVELS {
            for j in i..LEVELS {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn min_diagonal(&self) -> f64 {
        (0..LEVELS).map(|i| self.get(i, i).re).fold(f64::INFINITY, f64::min)
    }

    pub fn ground_populations(&self) -> [f64; ZEEMAN_STATES] {
        std::array::from_fn(|i| self.get(i, i).re)
    }

    pub fn excited_fraction(&self) -> f64 {
        compensated_sum((ZEEMAN_STATES..LEVELS).map(|i| self.get(i, i).re))
    }

    /// Ground populations renormalised to unit sum.
    pub fn ground_distribution(&self) -> Result<PopulationDistribution> {
        let g = self.ground_populations();
        let clipped: Vec<f64> = g.iter().map(|&x| x.max(0.0)).collect();
        PopulationDistribution::normalized(&clipped)
    }

    fn axpy(&self, a: f64, other: &Self) -> Self {
        Self {
            rho: self.rho.iter().zip(&other.rho).map(|(x, y)| x + y * a).collect(),
        }
    }
}

/// dρ/dt = −i[H, ρ] + Σ_q (L_q ρ L_q† − ½{L_q†L_q, ρ}) − γ_g (ground off-diagonals).
#[derive(Debug, Clone)]
pub struct PumpGenerator {
    /// Non-zero Hamiltonian entries (row, col, value).
    hamiltonian: Vec<(usize, usize, Complex64)>,
    /// Jump operators as (ground row, excited col, amplitude).
    jumps: Vec<Vec<(usize, usize, f64)>>,
    gamma: f64,
    ground_dephasing: f64,
}

pub fn build_pump_generator(config: &PumpConfig) -> Result<PumpGenerator> {
    config.validate()?;
    let mut hamiltonian = Vec::new();
    let mut jumps = Vec::new();
    for pol in PumpPolarization::ALL {
        let omega = config.omega(pol);
        let mut jump = Vec::new();
        for m in ZEEMAN_M {
            let b = pump_cg(pol, m);
            if b == 0.0 {
                continue;
            }
            let (g, e) = (ground(m), excited(m + pol.q()));
            if omega != 0.0 {
                let h = Complex64::new(-0.5 * omega * b, 0.0);
                hamiltonian.push((e, g, h));
                hamiltonian.push((g, e, h.conj()));
            }
            jump.push((g, e, config.gamma.sqrt() * b));
        }
        jumps.push(jump);
    }
    Ok(PumpGenerator {
        hamiltonian,
        jumps,
        gamma: config.gamma,
        ground_dephasing: config.ground_dephasing,
    })
}

impl PumpGenerator {
    pub fn apply(&self, rho: &DensityMatrix14) -> DensityMatrix14 {
        let mut out = DensityMatrix14::zeros();
        let i = Complex64::new(0.0, 1.0);
        // −i(Hρ − ρH)
        for &(r, c, h) in &self.hamiltonian {
            for k in 0..LEVELS {
                out.rho[r * LEVELS + k] -= i * h * rho.get(c, k);
                out.rho[k * LEVELS + c] += i * rho.get(k, r) * h;
            }
        }
        // L ρ L†
        for jump in &self.jumps {
            for &(a, k, la) in jump {
                for &(b, n, lb) in jump {
                    out.rho[a * LEVELS + b] += rho.get(k, n) * (la * lb);
                }
            }
        }
        // Σ L†L = Γ on every excited state
        for r in 0..LEVELS {
            for c in 0..LEVELS {
                let mut w = 0.0;
                if r >= ZEEMAN_STATES {
                    w += 0.5 * self.gamma;
                }
                if c >= ZEEMAN_STATES {
                    w += 0.5 * self.gamma;
                }
                if r < ZEEMAN_STATES && c < ZEEMAN_STATES && r != c {
                    w += self.ground_dephasing;
                }
                if w != 0.0 {
                    out.rho[r * LEVELS + c] -= rho.get(r, c) * w;
                }
            }
        }
        out
    }

    pub fn rk4(&self, rho: &DensityMatrix14, dt: f64) -> DensityMatrix14 {
        let k1 = self.apply(rho);
        let k2 = self.apply(&rho.axpy(0.5 * dt, &k1));
        let k3 = self.apply(&rho.axpy(0.5 * dt, &k2));
        let k4 = self.apply(&rho.axpy(dt, &k3));
        let mut next = rho.clone();
        for idx in 0..next.rho.len() {
            next.rho[idx] += (k1.rho[idx] + (k2.rho[idx] + k3.rho[idx]) * 2.0 + k4.rho[idx]) * (dt / 6.0);
        }
        next
    }
}

/// Ground populations and excited fraction at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSample {
    pub t: f64,
    pub ground: [f64; ZEEMAN_STATES],
    pub excited_fraction: f64,
    pub trace: f64,
}

impl PumpSample {
    fn of(t: f64, rho: &DensityMatrix14) -> Self {
        Self {
            t,
            ground: rho.ground_populations(),
            excited_fraction: rho.excited_fraction(),
            trace: rho.trace(),
        }
    }

    /// Ground populations renormalised to unit sum.
    pub fn distribution(&self) -> Result<PopulationDistribution> {
        let clipped: Vec<f64> = self.ground.iter().map(|&x| x.max(0.0)).collect();
        PopulationDistribution::normalized(&clipped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpTrajectory {
    pub samples: Vec<PumpSample>,
    pub max_trace_drift: f64,
    pub min_population: f64,
    pub final_state: DensityMatrix14,
}

impl PumpTrajectory {
    /// Linear interpolation of the renormalised ground distribution.
    pub fn distribution_at(&self, t: f64) -> Result<PopulationDistribution> {
        let s = &self.samples;
        if s.is_empty() {
            return Err(invalid("t", "empty trajectory"));
        }
        if t <= s[0].t {
            return s[0].distribution();
        }
        let last = s.len() - 1;
        if t >= s[last].t {
            if t > s[last].t * (1.0 + 1e-9) + 1e-12 {
                return Err(invalid(
                    "t",
                    format!("{t} lies beyond the trajectory end {}", s[last].t),
                ));
            }
            return s[last].distribution();
        }
        let k = s.partition_point(|x| x.t <= t) - 1;
        let (a, b) = (&s[k], &s[k + 1]);
        let w = (t - a.t) / (b.t - a.t);
        let mixed: Vec<f64> = (0..ZEEMAN_STATES)
            .map(|i| ((1.0 - w) * a.ground[i] + w * b.ground[i]).max(0.0))
            .collect();
        PopulationDistribution::normalized(&mixed)
    }

    /// CSV with columns t, p_-3 … p_3, excited_fraction.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "t,p_m3,p_m2,p_m1,p_0,p_1,p_2,p_3,excited_fraction")?;
        for s in &self.samples {
            write!(w, "{:.10e}", s.t)?;
            for p in s.ground {
                write!(w, ",{p:.12e}")?;
            }
            writeln!(w, ",{:.12e}", s.excited_fraction)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn integrate(
    gen: &PumpGenerator,
    rho: &mut DensityMatrix14,
    t0: f64,
    duration: f64,
    dt_max: f64,
    mut on_step: impl FnMut(f64, &DensityMatrix14),
) -> Result<(f64, f64)> {
    let n = (duration / dt_max).ceil().max(1.0) as usize;
    let dt = duration / n as f64;
    let trace0 = rho.trace();
    let mut drift: f64 = 0.0;
    let mut min_pop = rho.min_diagonal();
    for k in 1..=n {
        *rho = gen.rk4(rho, dt);
        let tr = rho.trace();
        drift = drift.max((tr - trace0).abs());
        if !(drift <= TRACE_DRIFT_LIMIT) {
            return Err(Error::Convergence(format!(
                "trace drifted by {drift:.3e} at t = {:.4}; reduce the step",
                t0 + k as f64 * dt
            )));
        }
        min_pop = min_pop.min(rho.min_diagonal());
        on_step(t0 + k as f64 * dt, rho);
    }
    Ok((drift, min_pop))
}

/// RK4 evolution from a ground-state distribution, sampled uniformly.
pub fn evolve_pumping(config: &PumpConfig, initial: &PopulationDistribution) -> Result<PumpTrajectory> {
    let gen = build_pump_generator(config)?;
    let interval = config.sample_interval.unwrap_or(1.0 / config.gamma);
    let n_samples = (config.duration / interval).round().max(1.0) as usize;
    let interval = config.duration / n_samples as f64;
    let mut rho = DensityMatrix14::from_ground(initial);
    let mut samples = vec![PumpSample::of(0.0, &rho)];
    let mut drift: f64 = 0.0;
    let mut min_pop = rho.min_diagonal();
    for k in 0..n_samples {
        let t0 = k as f64 * interval;
        let (d, m) = integrate(&gen, &mut rho, t0, interval, config.step(), |_, _| {})?;
        drift = drift.max(d);
        min_pop = min_pop.min(m);
        samples.push(PumpSample::of(t0 + interval, &rho));
    }
    Ok(PumpTrajectory {
        samples,
        max_trace_drift: drift,
        min_population: min_pop,
        final_state: rho,
    })
}

/// Converged ground distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub populations: PopulationDistribution,
    pub excited_fraction: f64,
    pub time: f64,
    pub last_change_rate: f64,
}

/// Evolves until the largest population change over 1/Γ falls below
/// 1e-8, giving up after `max_time`.
pub fn steady_state(config: &PumpConfig, initial: &PopulationDistribution, max_time: f64) -> Result<SteadyState> {
    const TOL: f64 = 1e-8;
    let gen = build_pump_generator(config)?;
    let chunk = 1.0 / config.gamma;
    let mut rho = DensityMatrix14::from_ground(initial);
    let mut t = 0.0;
    let mut change = f64::INFINITY;
    while t < max_time {
        let before: Vec<f64> = (0..LEVELS).map(|i| rho.get(i, i).re).collect();
        integrate(&gen, &mut rho, t, chunk, config.step(), |_, _| {})?;
        t += chunk;
        change = (0..LEVELS)
            .map(|i| (rho.get(i, i).re - before[i]).abs())
            .fold(0.0, f64::max)
            * config.gamma;
        if change < TOL {
            return Ok(SteadyState {
                populations: rho.ground_distribution()?,
                excited_fraction: rho.excited_fraction(),
                time: t,
                last_change_rate: change,
            });
        }
    }
    Err(Error::Convergence(format!(
        "pumping not stationary after t = {t:.1}: population change rate {change:.2e} per unit time"
    )))
}
