//! Runs a validated scenario through one or more engines.

use serde::Serialize;
use std::path::Path;

use eitconv::analytic::{converted_spectrum, read_channel, total_efficiency, write_channel, EfficiencyRow};
use eitconv::atomic::coherence_mismatch;
use eitconv::mb::{
    efficiency_from_record, measured_bandwidth, run_protocol, run_protocol_checked, ControlTimeline, MbGrid, ReadMode,
    Reference, SimulationRecord,
};
use eitconv::spectral::{convert_exact, ConversionGrids, SpectralGrid, Truncation};
use eitconv::{Complex64, EfficiencyReport};

use crate::config::{Engine, GridConfig, Scenario};
use crate::CliError;

/// Converted pulse at the medium exit, time measured from the read switch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waveform {
    pub times: Vec<f64>,
    pub field: Vec<Complex64>,
}

impl Waveform {
    fn magnitude_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 || k >= self.times.len() {
            return 0.0;
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * self.field[k - 1].norm() + w * self.field[k].norm()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineOutput {
    pub engine: Engine,
    pub report: EfficiencyReport,
    pub waveform: Waveform,
    #[serde(skip)]
    pub mb_record: Option<Box<SimulationRecord>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub grid_check: bool,
    pub keep_record: bool,
}

pub fn run_engine(sc: &Scenario, engine: Engine, opts: RunOptions) -> Result<EngineOutput, CliError> {
    match engine {
        Engine::Analytic => run_analytic(sc),
        Engine::Spectral => run_spectral(sc, opts),
        Engine::Mb => run_mb(sc, opts),
    }
}

fn run_analytic(sc: &Scenario) -> Result<EngineOutput, CliError> {
    let t_p = sc.pulse.t_p;
    let w = write_channel(&sc.scheme, sc.omega_w, t_p, sc.kappa)?;
    let r = read_channel(&sc.scheme, &w, sc.omega_r)?;
    let mut report = total_efficiency(&sc.scheme, &w, &r)?;
    let spec = converted_spectrum(&sc.scheme, &w, &r, sc.pulse.e0)?;
    report.energies = None;
    let span = spec.delay + 4.0 * spec.fwhm;
    let n = 4001;
    let times: Vec<f64> = (0..n).map(|k| span * k as f64 / (n - 1) as f64).collect();
    let field = times
        .iter()
        .map(|&t| Complex64::new(spec.time_domain(t), 0.0))
        .collect();
    Ok(EngineOutput {
        engine: Engine::Analytic,
        report,
        waveform: Waveform { times, field },
        mb_record: None,
    })
}

fn spectral_grids(sc: &Scenario, omega_r: f64, grid: &GridConfig) -> Result<ConversionGrids, CliError> {
    let mut g = ConversionGrids::auto(&sc.scheme, sc.omega_w, omega_r, sc.pulse.t_p)?;
    if let Some(n) = grid.n_omega {
        g.write = SpectralGrid::new(n, g.write.omega_max, g.write.n_z, g.write.t_start)?;
        g.read = SpectralGrid::new(n, g.read.omega_max, g.read.n_z, g.read.t_start)?;
    }
    if let Some(n) = grid.n_z {
        let n = n + n % 2;
        g.write = g.write.with_n_z(n)?;
        g.read = g.read.with_n_z(n)?;
    }
    Ok(g)
}

fn run_spectral(sc: &Scenario, opts: RunOptions) -> Result<EngineOutput, CliError> {
    let t_w = sc.kappa * sc.pulse.t_p;
    let conv_grids = spectral_grids(sc, sc.omega_r, &sc.grid)?;
    let orig_scheme = sc.scheme.original_channel();
    let orig_sc = Scenario {
        scheme: orig_scheme.clone(),
        ..sc.clone()
    };
    let orig_grids = spectral_grids(&orig_sc, sc.omega_w, &sc.grid)?;
    let (conv, orig) = rayon::join(
        || {
            convert_exact(
                &sc.scheme,
                &sc.pulse,
                sc.omega_w,
                t_w,
                sc.omega_r,
                &conv_grids,
                Truncation::EXACT,
            )
        },
        || {
            convert_exact(
                &orig_scheme,
                &sc.pulse,
                sc.omega_w,
                t_w,
                sc.omega_w,
                &orig_grids,
                Truncation::EXACT,
            )
        },
    );
    let (conv, orig) = (conv?, orig?);
    if opts.grid_check {
        let fine = convert_exact(
            &sc.scheme,
            &sc.pulse,
            sc.omega_w,
            t_w,
            sc.omega_r,
            &conv_grids.refined(),
            Truncation::EXACT,
        )?;
        let (a, b) = (conv.converted.energy_time, fine.converted.energy_time);
        let change = (a - b).abs() / b.max(f64::MIN_POSITIVE);
        if change > eitconv::mb::GRID_CHECK_TOL {
            return Err(eitconv::Error::Convergence(format!(
                "spectral grid doubling changed the converted energy by {:.2}%",
                100.0 * change
            ))
            .into());
        }
    }
    let xi2 = coherence_mismatch(&sc.scheme)?;
    let e_in = conv.input_energy;
    let xi_total = conv.converted.energy_time / e_in;
    let waveform = Waveform {
        times: conv.converted.times.clone(),
        field: conv.converted.field.clone(),
    };
    let report = EfficiencyReport {
        xi1: xi_total / xi2,
        xi2,
        xi_total,
        xi_relative: Some(conv.converted.energy_time / orig.converted.energy_time),
        delta_omega_c: measured_bandwidth(&waveform.times, &waveform.field).unwrap_or(0.0),
        energies: Some(eitconv::analytic::EnergyBudget {
            input: e_in,
            leaked: 0.0,
            stored: conv.stored.excitation_energy(),
            retrieved_original: Some(orig.converted.energy_time),
            converted: conv.converted.energy_time,
        }),
        degenerate: false,
    };
    Ok(EngineOutput {
        engine: Engine::Spectral,
        report,
        waveform,
        mb_record: None,
    })
}

/// MB grid from the automatic sizing plus overrides.
pub fn mb_grid(sc: &Scenario, timeline: &ControlTimeline, grid: &GridConfig) -> Result<MbGrid, CliError> {
    let mut g = MbGrid::auto(&sc.scheme, timeline, &sc.pulse)?;
    if let Some(n) = grid.n_z {
        g.n_z = n;
        g.z_stride = (n / 20).max(1);
    }
    if let Some(dt) = grid.dt {
        let t_end = g.t_end();
        g.dt = dt;
        g.n_t = ((t_end - g.t_start) / dt).ceil() as usize + 1;
    }
    Ok(g)
}

/// Conversion run plus the original-channel companion, in parallel.
pub fn run_mb_pair(sc: &Scenario, opts: RunOptions) -> Result<(SimulationRecord, SimulationRecord), CliError> {
    let conv_tl = sc.timeline;
    let orig_tl = ControlTimeline {
        omega_r: sc.omega_w,
        ..sc.timeline
    }
    .with_mode(ReadMode::Original);
    let run = |tl: &ControlTimeline| -> Result<SimulationRecord, CliError> {
        let g = mb_grid(sc, tl, &sc.grid)?;
        Ok(if opts.grid_check {
            run_protocol_checked(&sc.scheme, &sc.pulse, tl, &g)?
        } else {
            run_protocol(&sc.scheme, &sc.pulse, tl, &g)?
        })
    };
    let (conv, orig) = rayon::join(|| run(&conv_tl), || run(&orig_tl));
    Ok((conv?, orig?))
}

fn run_mb(sc: &Scenario, opts: RunOptions) -> Result<EngineOutput, CliError> {
    let (conv, orig) = run_mb_pair(sc, opts)?;
    let report = efficiency_from_record(&conv, Reference::OriginalChannel(Some(&orig)))?;
    let (times, field) = conv.readout_window();
    Ok(EngineOutput {
        engine: Engine::Mb,
        report,
        waveform: Waveform { times, field },
        mb_record: opts.keep_record.then(|| Box::new(conv)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairComparison {
    pub reference: Engine,
    pub other: Engine,
    /// RMS of the |E| difference over the reference window, relative to the
    /// reference peak.
    pub waveform_rms: f64,
    pub xi_total_delta: f64,
    pub xi_relative_delta: Option<f64>,
}

pub fn compare(outputs: &[EngineOutput]) -> Vec<PairComparison> {
    let mut out = Vec::new();
    for (i, a) in outputs.iter().enumerate() {
        for b in &outputs[i + 1..] {
            let peak = a.waveform.field.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let n = a.waveform.times.len().max(1);
            let sq: f64 = a
                .waveform
                .times
                .iter()
                .zip(&a.waveform.field)
                .map(|(&t, x)| (x.norm() - b.waveform.magnitude_at(t)).powi(2))
                .sum();
            let rel = |x: f64, y: f64| if x != 0.0 { (y - x) / x } else { y - x };
            out.push(PairComparison {
                reference: a.engine,
                other: b.engine,
                waveform_rms: if peak > 0.0 { (sq / n as f64).sqrt() / peak } else { 0.0 },
                xi_total_delta: rel(a.report.xi_total, b.report.xi_total),
                xi_relative_delta: match (a.report.xi_relative, b.report.xi_relative) {
                    (Some(x), Some(y)) => Some(rel(x, y)),
                    _ => None,
                },
            });
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct ScenarioResult {
    pub eta: f64,
    pub kappa: f64,
    pub omega_w: f64,
    pub omega_r: f64,
    pub t_p: f64,
    pub outputs: Vec<EngineOutput>,
    pub comparison: Vec<PairComparison>,
}

pub fn run_scenario(sc: &Scenario, opts: RunOptions) -> Result<ScenarioResult, CliError> {
    let outputs = sc
        .engines
        .iter()
        .map(|&e| {
            log::info!("running {} engine", e.name());
            run_engine(sc, e, opts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = compare(&outputs);
    Ok(ScenarioResult {
        eta: sc.eta,
        kappa: sc.kappa,
        omega_w: sc.omega_w,
        omega_r: sc.omega_r,
        t_p: sc.pulse.t_p,
        outputs,
        comparison,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `manifest.json`, per-engine waveforms and the efficiency summary.
pub fn write_result(sc: &Scenario, res: &ScenarioResult, out: &Path, format: Format) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    let w = write_channel(&sc.scheme, sc.omega_w, sc.pulse.t_p, sc.kappa)?;
    let manifest = serde_json::json!({
        "units": sc.units,
        "scheme": sc.scheme.summary(),
        "pulse": sc.pulse,
        "timeline": sc.timeline,
        "eta": res.eta,
        "kappa": res.kappa,
        "engines": sc.engines,
        "comparison": res.comparison,
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    for o in &res.outputs {
        let mut wtr = csv::Writer::from_path(out.join(format!("waveform_{}.csv", o.engine.name())))?;
        wtr.write_record(["t_us", "t", "re", "im"])?;
        for (t, e) in o.waveform.times.iter().zip(&o.waveform.field) {
            wtr.write_record([
                format!("{:.9e}", sc.units.time_to_us(*t)),
                format!("{t:.9e}"),
                format!("{:.9e}", e.re),
                format!("{:.9e}", e.im),
            ])?;
        }
        wtr.flush()?;
        if let Some(rec) = &o.mb_record {
            rec.save(&out.join("mb"))?;
        }
    }
    match format {
        Format::Json => {
            let reports: Vec<_> = res
                .outputs
                .iter()
                .map(|o| serde_json::json!({ "engine": o.engine, "report": o.report }))
                .collect();
            std::fs::write(out.join("efficiency.json"), serde_json::to_string_pretty(&reports)?)?;
        }
        Format::Csv => {
            let mut wtr = csv::Writer::from_path(out.join("efficiency.csv"))?;
            let mut header = vec!["engine"];
            header.extend(EfficiencyRow::HEADER);
            wtr.write_record(&header)?;
            for o in &res.outputs {
                let row = EfficiencyRow::new(&sc.scheme, &w, &o.report);
                let mut rec = vec![o.engine.name().to_string()];
                rec.extend(row_values(&row));
                wtr.write_record(&rec)?;
            }
            wtr.flush()?;
        }
    }
    Ok(())
}

pub fn row_values(r: &EfficiencyRow) -> Vec<String> {
    let f = |v: f64| format!("{v:.12e}");
    vec![
        f(r.eta),
        f(r.kappa),
        f(r.d_p),
        f(r.d_c),
        f(r.xi1),
        f(r.xi2),
        f(r.xi_total),
        r.xi_relative.map(f).unwrap_or_default(),
        f(r.delta_omega_c),
    ]
}
