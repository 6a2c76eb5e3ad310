//! Plot data for the reference figures, one CSV per curve.
//!
//! Column conventions: `t_us` in µs, `t` in 1/Γ, field magnitudes in the
//! normalised units of the core crate (input peak 1), efficiencies as plain
//! ratios.

use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

use eitconv::analytic::{
    converted_spectrum, read_channel, relative_efficiency_multi, relative_efficiency_single, write_channel,
    ConvertedSpectrum,
};
use eitconv::atomic::{build_cesium_d1_scheme, coherence_mismatch, effective_depth_factor, Branch};
use eitconv::mb::{
    efficiency_from_record, pulse_shape, run_protocol, run_protocol_checked, Reference, SimulationRecord,
};
use eitconv::pumping::{evolve_pumping, PumpConfig, PumpTrajectory};
use eitconv::spectral::{convert_exact, ConversionGrids, ConvertedField, Truncation};
use eitconv::units::{UnitSystem, CS_D1_LINEWIDTH_MHZ};
use eitconv::{ConversionScheme, Direction, PopulationDistribution};

use crate::config::{Engine, RatioMode, Scenario};
use crate::engine::{mb_grid, run_mb_pair, RunOptions};
use crate::CliError;

pub const T_P_US: f64 = 0.2;
pub const ETA: f64 = 4.0;
pub const KAPPA: f64 = 1.35;
pub const PUMP_OMEGA: f64 = 1.2;
pub const SIGMA_PUMP_US: f64 = 1.6;
pub const PI_PUMP_US: f64 = 8.0;
pub const PUMP_SAMPLE_US: f64 = 0.02;
pub const FIG2_RATIOS: [f64; 3] = [0.5, 1.0, 2.0];
pub const FIG3_DEPTHS: [f64; 2] = [100.0, 500.0];
pub const FIG3_COUPLING_RATIOS: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const FIG4_COUPLING_RATIOS: [f64; 4] = [0.1, 0.5, 2.0, 10.0];
pub const FIG8_DEPTHS: [f64; 2] = [100.0, 500.0];
/// Pump snapshot times of the four population cases, (a) to (d).
pub const FIG9_SNAPSHOTS_US: [(&str, f64); 4] = [("a", 1.6), ("b", 1.2), ("c", 0.6), ("d", 0.0)];
pub const ETA_RANGE: (f64, f64) = (2.5, 8.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig2,
    Fig3,
    Fig4,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
}

#[derive(Debug, Clone)]
pub struct FigureOptions {
    pub out: PathBuf,
    /// `None` runs every engine the figure supports.
    pub engines: Option<Vec<Engine>>,
    pub grid_check: bool,
}

impl FigureOptions {
    fn uses(&self, e: Engine) -> bool {
        self.engines.as_ref().is_none_or(|v| v.contains(&e))
    }
}

pub fn units() -> UnitSystem {
    UnitSystem::new(CS_D1_LINEWIDTH_MHZ)
}

pub fn t_p() -> f64 {
    units().time_from_us(T_P_US)
}

/// Columns of f64 with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// NaN cells are written empty.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(
                r.iter()
                    .map(|v| if v.is_nan() { String::new() } else { format!("{v:.9e}") }),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn single_state_scenario(d_p: f64, d_c: f64, eta: f64, ratio: f64, mode: RatioMode) -> Result<Scenario, CliError> {
    let scheme = ConversionScheme::single_state_with_depths(d_p, d_c)?;
    Ok(Scenario::new(units(), scheme, t_p(), eta, KAPPA, ratio, mode)?)
}

fn run_mb(sc: &Scenario, grid_check: bool) -> Result<SimulationRecord, CliError> {
    let g = mb_grid(sc, &sc.timeline, &sc.grid)?;
    Ok(if grid_check {
        run_protocol_checked(&sc.scheme, &sc.pulse, &sc.timeline, &g)?
    } else {
        run_protocol(&sc.scheme, &sc.pulse, &sc.timeline, &g)?
    })
}

/// One control ratio of the waveform demonstration at D = 500.
#[derive(Debug, Clone)]
pub struct Fig2Case {
    pub ratio: f64,
    pub scenario: Scenario,
    pub analytic: ConvertedSpectrum,
    pub mb: Option<SimulationRecord>,
    pub spectral: Option<ConvertedField>,
}

/// Peak |E| and intensity FWHM of a converted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shape {
    pub peak: f64,
    pub fwhm: f64,
}

impl Fig2Case {
    pub fn analytic_shape(&self) -> Shape {
        Shape {
            peak: self.analytic.peak.abs(),
            fwhm: self.analytic.fwhm,
        }
    }

    pub fn mb_shape(&self) -> Option<Shape> {
        let (t, f) = self.mb.as_ref()?.readout_window();
        pulse_shape(&t, &f).map(|(_, peak, fwhm)| Shape { peak, fwhm })
    }

    pub fn spectral_shape(&self) -> Option<Shape> {
        let s = self.spectral.as_ref()?;
        pulse_shape(&s.times, &s.field).map(|(_, peak, fwhm)| Shape { peak, fwhm })
    }
}

/// `ratio` is |a_r Ω_r| / |a_w Ω_w|.
pub fn fig2_case(ratio: f64, mb: bool, spectral: bool, grid_check: bool) -> Result<Fig2Case, CliError> {
    let sc = single_state_scenario(500.0, 500.0, ETA, ratio, RatioMode::Rabi)?;
    let w = write_channel(&sc.scheme, sc.omega_w, sc.pulse.t_p, sc.kappa)?;
    let r = read_channel(&sc.scheme, &w, sc.omega_r)?;
    let analytic = converted_spectrum(&sc.scheme, &w, &r, sc.pulse.e0)?;
    let (mb, spectral) = rayon::join(
        || mb.then(|| run_mb(&sc, grid_check)).transpose(),
        || {
            spectral
                .then(|| -> Result<ConvertedField, CliError> {
                    let grids = ConversionGrids::auto(&sc.scheme, sc.omega_w, sc.omega_r, sc.pulse.t_p)?;
                    let t_w = sc.kappa * sc.pulse.t_p;
                    let ex = convert_exact(
                        &sc.scheme,
                        &sc.pulse,
                        sc.omega_w,
                        t_w,
                        sc.omega_r,
                        &grids,
                        Truncation::EXACT,
                    )?;
                    Ok(ex.converted)
                })
                .transpose()
        },
    );
    Ok(Fig2Case {
        ratio,
        analytic,
        mb: mb?,
        spectral: spectral?,
        scenario: sc,
    })
}

fn fig2_tables(c: &Fig2Case) -> Table {
    let u = units();
    let t_r = c.scenario.timeline.t_r().unwrap_or(0.0);
    match &c.mb {
        Some(rec) => {
            let mut t = Table::new(&["t_us", "t", "input", "leaked", "converted_mb", "converted_analytic"]);
            for (k, &time) in rec.times.iter().enumerate() {
                let an = if time >= t_r {
                    c.analytic.time_domain(time - t_r).abs()
                } else {
                    0.0
                };
                t.push(vec![
                    u.time_to_us(time),
                    time,
                    rec.input[k].norm(),
                    rec.probe_out[k].norm(),
                    rec.converted_out[k].norm(),
                    an,
                ]);
            }
            t
        }
        None => {
            let sc = &c.scenario;
            let end = t_r + c.analytic.delay + 4.0 * c.analytic.fwhm;
            let start = -4.0 * sc.pulse.t_p;
            let n = 4001;
            let mut t = Table::new(&["t_us", "t", "input", "converted_analytic"]);
            for k in 0..n {
                let time = start + (end - start) * k as f64 / (n - 1) as f64;
                let an = if time >= t_r {
                    c.analytic.time_domain(time - t_r).abs()
                } else {
                    0.0
                };
                t.push(vec![u.time_to_us(time), time, sc.pulse.amplitude(time), an]);
            }
            t
        }
    }
}

/// ξᴿ at one (D_p, |c_cp|²) point; `mb` is present when the MB engine ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fig3Point {
    pub d_p: f64,
    pub coupling_ratio: f64,
    pub analytic: f64,
    pub mb: Option<f64>,
}

impl Fig3Point {
    pub fn relative_deviation(&self) -> Option<f64> {
        self.mb.map(|m| (m - self.analytic).abs() / self.analytic)
    }
}

/// |c_cp|² = D_c / D_p at delay-matched read.
pub fn fig3_point(d_p: f64, coupling_ratio: f64, mb: bool, grid_check: bool) -> Result<Fig3Point, CliError> {
    let d_c = coupling_ratio * d_p;
    let analytic = relative_efficiency_single(ETA, KAPPA, d_p, d_c)?;
    let mb = if mb {
        let sc = single_state_scenario(d_p, d_c, ETA, 1.0, RatioMode::DelayMatched)?;
        let (conv, orig) = run_mb_pair(
            &sc,
            RunOptions {
                grid_check,
                keep_record: false,
            },
        )?;
        let report = efficiency_from_record(&conv, Reference::OriginalChannel(Some(&orig)))?;
        report.xi_relative
    } else {
        None
    };
    Ok(Fig3Point {
        d_p,
        coupling_ratio,
        analytic,
        mb,
    })
}

/// All MB points of the cross-validation figure, in parallel.
pub fn fig3_points(mb: bool, grid_check: bool) -> Result<Vec<Fig3Point>, CliError> {
    let jobs: Vec<(f64, f64)> = FIG3_DEPTHS
        .iter()
        .flat_map(|&d| FIG3_COUPLING_RATIOS.iter().map(move |&c| (d, c)))
        .collect();
    let n = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    jobs.par_iter()
        .map(|&(d, c)| {
            let p = fig3_point(d, c, mb, grid_check);
            if mb {
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                eprintln!("fig3: D={d} |c_cp|²={c} done ({k}/{n})");
            }
            p
        })
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}

/// ξᴿ(η) for a single state at D_p = 500, D_c = |c_cp|² D_p.
pub fn fig4_curve(coupling_ratio: f64, etas: &[f64]) -> Result<Vec<f64>, CliError> {
    etas.iter()
        .map(|&eta| Ok(relative_efficiency_single(eta, KAPPA, 500.0, coupling_ratio * 500.0)?))
        .collect()
}

pub fn fig4_etas() -> Vec<f64> {
    linspace(ETA_RANGE.0, ETA_RANGE.1, 111)
}

fn pump_trajectory(cfg: PumpConfig) -> Result<PumpTrajectory, CliError> {
    let cfg = PumpConfig {
        sample_interval: Some(units().time_from_us(PUMP_SAMPLE_US)),
        ..cfg
    };
    Ok(evolve_pumping(&cfg, &PopulationDistribution::isotropic())?)
}

/// σ⁺ pumping at Ω = 1.2Γ from an isotropic start.
pub fn sigma_pump_trajectory() -> Result<PumpTrajectory, CliError> {
    pump_trajectory(PumpConfig::sigma_plus(PUMP_OMEGA, units().time_from_us(SIGMA_PUMP_US)))
}

/// π pumping towards m = 0.
pub fn pi_pump_trajectory() -> Result<PumpTrajectory, CliError> {
    pump_trajectory(PumpConfig::pi(PUMP_OMEGA, units().time_from_us(PI_PUMP_US)))
}

fn population_table(traj: &PumpTrajectory) -> Table {
    let u = units();
    let mut t = Table::new(&[
        "t_us",
        "p_m3",
        "p_m2",
        "p_m1",
        "p_0",
        "p_1",
        "p_2",
        "p_3",
        "excited_fraction",
    ]);
    for s in &traj.samples {
        let mut row = vec![u.time_to_us(s.t)];
        row.extend(s.ground);
        row.push(s.excited_fraction);
        t.push(row);
    }
    t
}

fn cs_scheme(dir: Direction, pop: &PopulationDistribution, depth: f64) -> Result<ConversionScheme, CliError> {
    Ok(build_cesium_d1_scheme(dir, pop, depth, depth)?)
}

/// Effective depth factors Σ p a² of the σ⁺ and σ⁻ transitions.
pub fn depth_factor_table(traj: &PumpTrajectory) -> Result<Table, CliError> {
    let u = units();
    let mut t = Table::new(&["t_us", "sigma_plus", "sigma_minus"]);
    for s in &traj.samples {
        let sc = cs_scheme(Direction::SigmaPlusToMinus, &s.distribution()?, 1.0)?;
        t.push(vec![
            u.time_to_us(s.t),
            effective_depth_factor(&sc, Branch::Probe),
            effective_depth_factor(&sc, Branch::Converted),
        ]);
    }
    Ok(t)
}

/// ξ₂ and ξᴿ in both directions along a pumping trajectory, α_p = α_c =
/// `depth`.
pub fn efficiency_along(traj: &PumpTrajectory, depth: f64) -> Result<Table, CliError> {
    let u = units();
    let mut t = Table::new(&["t_us", "xi2", "xi_relative_plus_to_minus", "xi_relative_minus_to_plus"]);
    for s in &traj.samples {
        let pop = s.distribution()?;
        let pm = cs_scheme(Direction::SigmaPlusToMinus, &pop, depth)?;
        let mp = cs_scheme(Direction::SigmaMinusToPlus, &pop, depth)?;
        t.push(vec![
            u.time_to_us(s.t),
            coherence_mismatch(&pm)?,
            relative_efficiency_multi(&pm, ETA, KAPPA)?,
            relative_efficiency_multi(&mp, ETA, KAPPA)?,
        ]);
    }
    Ok(t)
}

/// ξᴿ(η) in both directions for the population at one pump time.
pub fn fig9_case(traj: &PumpTrajectory, time_us: f64, etas: &[f64]) -> Result<Table, CliError> {
    let pop = traj.distribution_at(units().time_from_us(time_us))?;
    let pm = cs_scheme(Direction::SigmaPlusToMinus, &pop, 500.0)?;
    let mp = cs_scheme(Direction::SigmaMinusToPlus, &pop, 500.0)?;
    let mut t = Table::new(&["eta", "xi_relative_plus_to_minus", "xi_relative_minus_to_plus"]);
    for &eta in etas {
        t.push(vec![
            eta,
            relative_efficiency_multi(&pm, eta, KAPPA)?,
            relative_efficiency_multi(&mp, eta, KAPPA)?,
        ]);
    }
    Ok(t)
}

fn fmt_num(x: f64) -> String {
    format!("{x}").replace('.', "p")
}

/// Writes the figure's CSVs into `opts.out` and returns their paths.
pub fn run_figure(id: FigureId, opts: &FigureOptions) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(&opts.out)?;
    let mut files = Vec::new();
    let mut emit = |name: String, table: &Table| -> Result<(), CliError> {
        let path = opts.out.join(name);
        table.write(&path)?;
        files.push(path);
        Ok(())
    };
    match id {
        FigureId::Fig2 => {
            let mb = opts.uses(Engine::Mb);
            let spectral = opts.uses(Engine::Spectral);
            let cases = FIG2_RATIOS
                .par_iter()
                .map(|&r| {
                    let c = fig2_case(r, mb, spectral, opts.grid_check);
                    eprintln!("fig2: ratio {r} done");
                    c
                })
                .collect::<Result<Vec<_>, _>>()?;
            let nan = f64::NAN;
            let mut summary = Table::new(&[
                "ratio",
                "peak_analytic",
                "fwhm_analytic",
                "peak_mb",
                "fwhm_mb",
                "peak_spectral",
                "fwhm_spectral",
            ]);
            for c in &cases {
                emit(format!("fig2_ratio_{}.csv", fmt_num(c.ratio)), &fig2_tables(c))?;
                let a = c.analytic_shape();
                let m = c.mb_shape();
                let s = c.spectral_shape();
                summary.push(vec![
                    c.ratio,
                    a.peak,
                    a.fwhm,
                    m.map_or(nan, |x| x.peak),
                    m.map_or(nan, |x| x.fwhm),
                    s.map_or(nan, |x| x.peak),
                    s.map_or(nan, |x| x.fwhm),
                ]);
            }
            emit("fig2_summary.csv".into(), &summary)?;
        }
        FigureId::Fig3 => {
            for &d in &FIG3_DEPTHS {
                let mut t = Table::new(&["coupling_ratio", "xi_relative"]);
                for c in logspace(0.05, 20.0, 121) {
                    t.push(vec![c, relative_efficiency_single(ETA, KAPPA, d, c * d)?]);
                }
                emit(format!("fig3_D{d}_analytic.csv"), &t)?;
            }
            if opts.uses(Engine::Mb) {
                let points = fig3_points(true, opts.grid_check)?;
                for &d in &FIG3_DEPTHS {
                    let mut t = Table::new(&[
                        "coupling_ratio",
                        "xi_relative_mb",
                        "xi_relative_analytic",
                        "relative_deviation",
                    ]);
                    for p in points.iter().filter(|p| p.d_p == d) {
                        t.push(vec![
                            p.coupling_ratio,
                            p.mb.unwrap_or(f64::NAN),
                            p.analytic,
                            p.relative_deviation().unwrap_or(f64::NAN),
                        ]);
                    }
                    emit(format!("fig3_D{d}_mb.csv"), &t)?;
                }
            }
        }
        FigureId::Fig4 => {
            let etas = fig4_etas();
            for &c in &FIG4_COUPLING_RATIOS {
                let xs = fig4_curve(c, &etas)?;
                let mut t = Table::new(&["eta", "xi_relative"]);
                for (e, x) in etas.iter().zip(xs) {
                    t.push(vec![*e, x]);
                }
                emit(format!("fig4_c{}.csv", fmt_num(c)), &t)?;
            }
        }
        FigureId::Fig6 => {
            let traj = sigma_pump_trajectory()?;
            emit("fig6a_populations.csv".into(), &population_table(&traj))?;
            emit("fig6b_depth_factor.csv".into(), &depth_factor_table(&traj)?)?;
        }
        FigureId::Fig7 => {
            let traj = sigma_pump_trajectory()?;
            let t = efficiency_along(&traj, 500.0)?;
            let mut out = Table::new(&["t_us", "xi2"]);
            for r in &t.rows {
                out.push(vec![r[0], r[1]]);
            }
            emit("fig7_xi2.csv".into(), &out)?;
        }
        FigureId::Fig8 => {
            let traj = sigma_pump_trajectory()?;
            for &d in &FIG8_DEPTHS {
                emit(format!("fig8_D{d}.csv"), &efficiency_along(&traj, d)?)?;
            }
        }
        FigureId::Fig9 => {
            let traj = sigma_pump_trajectory()?;
            let etas = fig4_etas();
            for (case, t_us) in FIG9_SNAPSHOTS_US {
                emit(format!("fig9_{case}.csv"), &fig9_case(&traj, t_us, &etas)?)?;
            }
        }
        FigureId::Fig10 => {
            let traj = pi_pump_trajectory()?;
            emit("fig10a_populations.csv".into(), &population_table(&traj))?;
            emit("fig10b_efficiency.csv".into(), &efficiency_along(&traj, 500.0)?)?;
        }
    }
    Ok(files)
}
