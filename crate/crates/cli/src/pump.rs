//! `pump` subcommand input and trajectory tables.

use serde::{Deserialize, Serialize};
use std::path::Path;

use eitconv::pumping::{evolve_pumping, steady_state, PumpConfig, PumpTrajectory, SteadyState};
use eitconv::units::UnitSystem;
use eitconv::PopulationDistribution;

use crate::config::{parse_named_population, FieldError};
use crate::CliError;

/// Pump file in laboratory units; Rabi frequencies in units of Γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpFile {
    #[serde(default = "default_gamma_mhz")]
    pub gamma_mhz: f64,
    #[serde(default, alias = "Omega_r_pump")]
    pub omega_r: f64,
    #[serde(default, alias = "Omega_pi_pump")]
    pub omega_pi: f64,
    #[serde(default, alias = "Omega_l_pump")]
    pub omega_l: f64,
    pub duration_us: f64,
    /// "isotropic" or "m=<k>".
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default)]
    pub ground_dephasing: f64,
    pub sample_us: Option<f64>,
    /// Also evolve to the stationary state (bounded by this many µs).
    pub steady_state_max_us: Option<f64>,
}

fn default_gamma_mhz() -> f64 {
    eitconv::units::CS_D1_LINEWIDTH_MHZ
}

fn default_initial() -> String {
    "isotropic".into()
}

impl PumpFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            CliError::Validation(vec![FieldError {
                path: "<file>".into(),
                message: e.message().to_string(),
            }])
        })
    }

    pub fn resolve(&self) -> Result<(PumpConfig, PopulationDistribution, UnitSystem), CliError> {
        let units = UnitSystem::new(self.gamma_mhz);
        let initial = parse_named_population(&self.initial).ok_or_else(|| {
            CliError::Validation(vec![FieldError {
                path: "initial".into(),
                message: format!("expected \"isotropic\" or \"m=<-3..3>\", got {:?}", self.initial),
            }])
        })?;
        let cfg = PumpConfig {
            omega_r: self.omega_r,
            omega_pi: self.omega_pi,
            omega_l: self.omega_l,
            duration: units.time_from_us(self.duration_us),
            gamma: 1.0,
            ground_dephasing: self.ground_dephasing,
            dt: None,
            sample_interval: self.sample_us.map(|s| units.time_from_us(s)),
        };
        cfg.validate()?;
        Ok((cfg, initial, units))
    }
}

#[derive(Debug, Serialize)]
pub struct PumpOutcome {
    pub final_distribution: PopulationDistribution,
    pub max_trace_drift: f64,
    pub min_population: f64,
    pub steady_state: Option<SteadyState>,
}

pub fn run_pump(file: &PumpFile, out: &Path) -> Result<PumpOutcome, CliError> {
    let (cfg, initial, units) = file.resolve()?;
    std::fs::create_dir_all(out)?;
    let traj = evolve_pumping(&cfg, &initial)?;
    traj.write_csv(&out.join("trajectory.csv"))?;
    let steady = match file.steady_state_max_us {
        Some(t) => Some(steady_state(&cfg, &initial, units.time_from_us(t))?),
        None => None,
    };
    let outcome = PumpOutcome {
        final_distribution: traj.samples.last().expect("trajectory has samples").distribution()?,
        max_trace_drift: traj.max_trace_drift,
        min_population: traj.min_population,
        steady_state: steady,
    };
    let report = serde_json::json!({ "input": file, "outcome": outcome });
    std::fs::write(out.join("pump.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(outcome)
}

/// Ground populations against time, read back from a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpTable {
    pub times: Vec<f64>,
    pub ground: Vec<[f64; 7]>,
}

#[derive(Debug, Deserialize)]
struct Row {
    t: f64,
    p_m3: f64,
    p_m2: f64,
    p_m1: f64,
    p_0: f64,
    p_1: f64,
    p_2: f64,
    p_3: f64,
}

impl PumpTable {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut ground = Vec::new();
        for row in rdr.deserialize() {
            let r: Row = row?;
            times.push(r.t);
            ground.push([r.p_m3, r.p_m2, r.p_m1, r.p_0, r.p_1, r.p_2, r.p_3]);
        }
        if times.is_empty() {
            return Err(CliError::Message(format!("{}: empty trajectory", path.display())));
        }
        Ok(Self { times, ground })
    }

    pub fn from_trajectory(t: &PumpTrajectory) -> Self {
        Self {
            times: t.samples.iter().map(|s| s.t).collect(),
            ground: t.samples.iter().map(|s| s.ground).collect(),
        }
    }

    /// Linearly interpolated, renormalised ground distribution at `t`.
    pub fn distribution_at(&self, t: f64) -> Result<PopulationDistribution, CliError> {
        let last = *self.times.last().unwrap();
        if t < self.times[0] - 1e-9 || t > last * (1.0 + 1e-9) + 1e-9 {
            return Err(CliError::Message(format!(
                "time {t:.4} outside the trajectory [{:.4}, {last:.4}]",
                self.times[0]
            )));
        }
        let k = self
            .times
            .partition_point(|&x| x <= t)
            .clamp(1, self.times.len().max(2) - 1);
        let p = if self.times.len() == 1 {
            self.ground[0]
        } else {
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            std::array::from_fn(|i| ((1.0 - w) * self.ground[k - 1][i] + w * self.ground[k][i]).max(0.0))
        };
        Ok(PopulationDistribution::normalized(&p)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_round_trip() {
        let file = PumpFile {
            gamma_mhz: 4.56,
            omega_r: 1.2,
            omega_pi: 0.0,
            omega_l: 0.0,
            duration_us: 0.2,
            initial: "isotropic".into(),
            ground_dephasing: 0.0,
            sample_us: Some(0.02),
            steady_state_max_us: None,
        };
        let dir = tempfile::tempdir().unwrap();
        run_pump(&file, dir.path()).unwrap();
        let table = PumpTable::load(&dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(table.times.len(), 11);
        let start = table.distribution_at(0.0).unwrap();
        assert!((start.get(0) - 1.0 / 7.0).abs() < 1e-12);
        let mid = table.distribution_at(0.5 * (table.times[3] + table.times[4])).unwrap();
        assert!(mid.get(3) > start.get(3));
        assert!(table.distribution_at(1e6).is_err());
    }
}
