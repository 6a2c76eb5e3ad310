//! Parameter sweeps over a scenario template.
//!
//! ```toml
//! parallelism = 4
//!
//! [template]           # any scenario file body
//! [template.units]
//! gamma_mhz = 4.56
//! t_p_us = 0.2
//! # ...
//!
//! [[axis]]
//! path = "protocol.eta"
//! start = 2.5
//! stop = 8.0
//! n = 12
//! scale = "lin"        # or "log"
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use eitconv::analytic::{write_channel, EfficiencyRow};

use crate::config::{Engine, FieldError, ScenarioConfig};
use crate::engine::{row_values, run_scenario, Format, RunOptions};
use crate::figures::{linspace, logspace};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Lin,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Dotted path into the template, e.g. `scheme.d_c`.
    pub path: String,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub n: Option<usize>,
    #[serde(default)]
    pub scale: Scale,
    /// Explicit values instead of start/stop/n.
    pub values: Option<Vec<f64>>,
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        if let Some(v) = &self.values {
            return v.clone();
        }
        let (a, b, n) = (self.start.unwrap_or(0.0), self.stop.unwrap_or(0.0), self.n.unwrap_or(0));
        match self.scale {
            Scale::Lin => linspace(a, b, n),
            Scale::Log => logspace(a, b, n),
        }
    }

    fn validate(&self, k: usize, errs: &mut Vec<FieldError>) {
        let mut push = |field: &str, message: String| {
            errs.push(FieldError {
                path: format!("axis[{k}].{field}"),
                message,
            })
        };
        if self.path.trim().is_empty() {
            push("path", "empty".into());
        }
        match (&self.values, self.start, self.stop, self.n) {
            (Some(v), None, None, None) => {
                if v.is_empty() {
                    push("values", "empty".into());
                }
                if v.iter().any(|x| !x.is_finite()) {
                    push("values", "must be finite".into());
                }
            }
            (None, Some(a), Some(b), Some(n)) => {
                if !a.is_finite() || !b.is_finite() {
                    push("start", "range must be finite".into());
                }
                if n == 0 {
                    push("n", "must be at least 1".into());
                }
                if self.scale == Scale::Log && !(a > 0.0 && b > 0.0) {
                    push("scale", "log axes need positive start and stop".into());
                }
            }
            _ => push("values", "give either `values` or all of `start`, `stop`, `n`".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub output: Option<std::path::PathBuf>,
    pub template: toml::Table,
    #[serde(rename = "axis")]
    pub axes: Vec<Axis>,
}

fn default_parallelism() -> usize {
    1
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let spec: Self = toml::from_str(text).map_err(|e| {
            CliError::Validation(vec![FieldError {
                path: "<file>".into(),
                message: e.message().to_string(),
            }])
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        if self.axes.is_empty() {
            errs.push(FieldError {
                path: "axis".into(),
                message: "at least one axis is required".into(),
            });
        }
        if self.parallelism == 0 {
            errs.push(FieldError {
                path: "parallelism".into(),
                message: "must be at least 1".into(),
            });
        }
        for (k, a) in self.axes.iter().enumerate() {
            a.validate(k, &mut errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }

    /// Grid points in axis-major order: the first axis varies slowest.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            let pts = axis.points();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    pts.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Template with the axis values substituted.
    pub fn config_at(&self, point: &[f64]) -> Result<ScenarioConfig, CliError> {
        let mut table = self.template.clone();
        for (axis, &v) in self.axes.iter().zip(point) {
            set_path(&mut table, &axis.path, v).map_err(|message| {
                CliError::Validation(vec![FieldError {
                    path: axis.path.clone(),
                    message,
                }])
            })?;
        }
        let text = toml::to_string(&table).map_err(|e| CliError::Message(e.to_string()))?;
        ScenarioConfig::from_toml(&text).map_err(CliError::Validation)
    }
}

fn set_path(table: &mut toml::Table, path: &str, v: f64) -> Result<(), String> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().ok_or("empty path")?;
    let mut cur = table;
    for k in keys {
        cur = cur
            .entry(k)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("`{k}` is not a table"))?;
    }
    let integer = matches!(cur.get(last), Some(toml::Value::Integer(_))) || matches!(last, "n_z" | "n_omega");
    let value = if integer {
        toml::Value::Integer(v.round() as i64)
    } else {
        toml::Value::Float(v)
    };
    cur.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub index: usize,
    pub point: Vec<f64>,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub point: Vec<f64>,
    pub engine: Engine,
    pub values: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub header: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepOutcome {
    pub fn column(&self, name: &str) -> Option<Vec<String>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| self.cells(r)[k].clone()).collect())
    }

    fn cells(&self, r: &SweepRow) -> Vec<String> {
        let mut c: Vec<String> = r.point.iter().map(|v| format!("{v:.12e}")).collect();
        c.push(r.engine.name().into());
        c.extend(r.values.iter().cloned());
        c
    }
}

fn run_point(
    spec: &SweepSpec,
    base: &Path,
    point: &[f64],
    engines: Option<&[Engine]>,
    opts: RunOptions,
) -> Result<Vec<(Engine, Vec<String>)>, CliError> {
    let cfg = spec.config_at(point)?;
    let mut sc = cfg.validate(base).map_err(CliError::Validation)?;
    if let Some(e) = engines {
        sc.engines = e.to_vec();
    }
    let res = run_scenario(&sc, opts)?;
    let w = write_channel(&sc.scheme, sc.omega_w, sc.pulse.t_p, sc.kappa)?;
    Ok(res
        .outputs
        .iter()
        .map(|o| (o.engine, row_values(&EfficiencyRow::new(&sc.scheme, &w, &o.report))))
        .collect())
}

/// Runs every grid point; failed points are reported, the rest kept.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &Path,
    engines: Option<&[Engine]>,
    opts: RunOptions,
) -> Result<SweepOutcome, CliError> {
    spec.validate()?;
    let grid = spec.grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| CliError::Message(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        grid.par_iter()
            .map(|p| run_point(spec, base, p, engines, opts))
            .collect()
    });
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.path.clone()).collect();
    header.push("engine".into());
    header.extend(EfficiencyRow::HEADER.iter().map(|s| s.to_string()));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (index, (point, res)) in grid.into_iter().zip(results).enumerate() {
        match res {
            Ok(per_engine) => {
                for (engine, values) in per_engine {
                    rows.push(SweepRow {
                        index,
                        point: point.clone(),
                        engine,
                        values,
                    });
                }
            }
            Err(e) => failures.push(SweepFailure {
                index,
                point,
                error: e.to_string(),
            }),
        }
    }
    Ok(SweepOutcome { header, rows, failures })
}

/// `sweep.csv` (or `sweep.json`), `manifest.json` and, when any point
/// failed, `failures.json`.
pub fn write_sweep(spec: &SweepSpec, outcome: &SweepOutcome, out: &Path, format: Format) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
            w.write_record(&outcome.header)?;
            for r in &outcome.rows {
                w.write_record(outcome.cells(r))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<serde_json::Map<String, serde_json::Value>> = outcome
                .rows
                .iter()
                .map(|r| {
                    outcome
                        .header
                        .iter()
                        .cloned()
                        .zip(outcome.cells(r).into_iter().map(serde_json::Value::String))
                        .collect()
                })
                .collect();
            std::fs::write(out.join("sweep.json"), serde_json::to_string_pretty(&rows)?)?;
        }
    }
    let manifest = serde_json::json!({
        "axes": spec.axes,
        "parallelism": spec.parallelism,
        "points": outcome.rows.iter().map(|r| r.index).collect::<std::collections::BTreeSet<_>>().len() + outcome.failures.len(),
        "failed": outcome.failures.len(),
        "template": spec.template,
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let failures = out.join("failures.json");
    if outcome.failures.is_empty() {
        if failures.exists() {
            std::fs::remove_file(&failures)?;
        }
    } else {
        std::fs::write(failures, serde_json::to_string_pretty(&outcome.failures)?)?;
    }
    Ok(())
}
