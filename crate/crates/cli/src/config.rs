//! Scenario files: TOML in laboratory units, validated into a [`Scenario`]
//! in Γ-normalised units.
//!
//! ```toml
//! output = "out/fig3_point"
//! engines = ["analytic", "mb"]
//!
//! [units]
//! gamma_mhz = 4.56
//! t_p_us = 0.2
//!
//! [scheme]
//! kind = "single_state"   # or "cesium_d1"
//! d_p = 500.0
//! d_c = 5000.0
//!
//! [protocol]
//! eta = 4.0               # or omega_w (units of Γ)
//! kappa = 1.35
//! control_ratio = 1.0     # or omega_r (units of Γ)
//! ```

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

use eitconv::analytic::{omega_r_delay_matched, omega_r_from_control_ratio, omega_w_for_eta};
use eitconv::atomic::build_cesium_d1_scheme;
use eitconv::mb::ControlTimeline;
use eitconv::pulse::GaussianPulse;
use eitconv::units::UnitSystem;
use eitconv::{ConversionScheme, Direction, PopulationDistribution};

use crate::pump::PumpTable;

/// One failed check, addressed by its dotted path in the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(FieldError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn positive(&mut self, path: &str, v: Option<f64>) {
        if let Some(v) = v {
            if !(v > 0.0) || !v.is_finite() {
                self.push(path, format!("must be a positive finite number, got {v}"));
            }
        }
    }

    fn required<T>(&mut self, path: &str, v: &Option<T>) {
        if v.is_none() {
            self.push(path, "missing");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    Spectral,
    Mb,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Spectral => "spectral",
            Engine::Mb => "mb",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsConfig {
    pub gamma_mhz: Option<f64>,
    pub t_p_us: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    SingleState,
    CesiumD1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpReference {
    /// Trajectory CSV written by the `pump` subcommand.
    pub file: PathBuf,
    pub time_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub kind: Option<SchemeKind>,
    // single state
    pub d_p: Option<f64>,
    pub d_c: Option<f64>,
    // Cs D₁
    pub direction: Option<Direction>,
    pub alpha_p: Option<f64>,
    pub alpha_c: Option<f64>,
    /// "isotropic" or a single m as "m=3".
    pub population: Option<String>,
    pub populations: Option<Vec<f64>>,
    pub pump: Option<PumpReference>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// |a_r Ω_r|²/D_c = ratio² |a_w Ω_w|²/D_p: equal per-depth delay at 1.
    #[default]
    DelayMatched,
    /// |a_r Ω_r| / |a_w Ω_w| with population-weighted CG coefficients.
    Rabi,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub eta: Option<f64>,
    /// Units of Γ.
    pub omega_w: Option<f64>,
    pub kappa: Option<f64>,
    pub omega_r: Option<f64>,
    pub control_ratio: Option<f64>,
    #[serde(default)]
    pub ratio_mode: RatioMode,
    pub t_s_us: Option<f64>,
    pub ramp_us: Option<f64>,
    /// Ground-coherence decay, units of Γ.
    pub gamma_sg: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_z: Option<usize>,
    /// Units of 1/Γ.
    pub dt: Option<f64>,
    pub n_omega: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub engines: Vec<Engine>,
    #[serde(default)]
    pub units: UnitsConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub grid: GridConfig,
}

/// A validated scenario in normalised units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub units: UnitSystem,
    pub scheme: ConversionScheme,
    pub pulse: GaussianPulse,
    pub eta: f64,
    pub kappa: f64,
    pub omega_w: f64,
    pub omega_r: f64,
    pub timeline: ControlTimeline,
    pub engines: Vec<Engine>,
    pub grid: GridConfig,
    pub output: Option<PathBuf>,
}

impl Scenario {
    /// Scenario at delay ratio `eta` with default storage time and ramps,
    /// analytic engine only.
    pub fn new(
        units: UnitSystem,
        scheme: ConversionScheme,
        t_p: f64,
        eta: f64,
        kappa: f64,
        ratio: f64,
        mode: RatioMode,
    ) -> eitconv::Result<Self> {
        let omega_w = omega_w_for_eta(&scheme, eta, t_p)?;
        let omega_r = match mode {
            RatioMode::DelayMatched => omega_r_delay_matched(&scheme, omega_w, ratio)?,
            RatioMode::Rabi => omega_r_from_control_ratio(&scheme, omega_w, ratio)?,
        };
        let timeline = ControlTimeline::protocol(omega_w, omega_r, t_p, kappa, 2.0 * t_p);
        timeline.validate()?;
        Ok(Self {
            units,
            scheme,
            pulse: GaussianPulse::new(t_p, 1.0, 0.0),
            eta,
            kappa,
            omega_w,
            omega_r,
            timeline,
            engines: vec![Engine::Analytic],
            grid: GridConfig::default(),
            output: None,
        })
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, Vec<FieldError>> {
        toml::from_str(text).map_err(|e| {
            vec![FieldError {
                path: "<file>".into(),
                message: e.message().to_string(),
            }]
        })
    }

    pub fn load(path: &Path) -> Result<Self, Vec<FieldError>> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![FieldError {
                path: path.display().to_string(),
                message: e.to_string(),
            }]
        })?;
        Self::from_toml(&text)
    }

    /// Checks every field and resolves the derived quantities; all problems
    /// are reported together.
    pub fn validate(&self, base: &Path) -> Result<Scenario, Vec<FieldError>> {
        let mut err = Errors::default();
        err.required("units.gamma_mhz", &self.units.gamma_mhz);
        err.required("units.t_p_us", &self.units.t_p_us);
        err.positive("units.gamma_mhz", self.units.gamma_mhz);
        err.positive("units.t_p_us", self.units.t_p_us);

        let p = &self.protocol;
        match (p.eta, p.omega_w) {
            (None, None) => err.push("protocol", "one of `eta` or `omega_w` is required"),
            (Some(_), Some(_)) => err.push("protocol", "give exactly one of `eta` and `omega_w`"),
            _ => {}
        }
        if p.omega_r.is_some() && p.control_ratio.is_some() {
            err.push("protocol", "give at most one of `omega_r` and `control_ratio`");
        }
        err.positive("protocol.eta", p.eta);
        err.positive("protocol.omega_w", p.omega_w);
        err.positive("protocol.kappa", p.kappa);
        err.positive("protocol.omega_r", p.omega_r);
        err.positive("protocol.control_ratio", p.control_ratio);
        err.positive("protocol.t_s_us", p.t_s_us);
        if let Some(r) = p.ramp_us {
            if !(r >= 0.0) || !r.is_finite() {
                err.push("protocol.ramp_us", format!("must be finite and >= 0, got {r}"));
            }
        }
        if let Some(g) = p.gamma_sg {
            if !(g >= 0.0) || !g.is_finite() {
                err.push("protocol.gamma_sg", format!("must be finite and >= 0, got {g}"));
            }
        }
        if let Some(n) = self.grid.n_z {
            if n < 2 {
                err.push("grid.n_z", "need at least 2 intervals");
            }
        }
        err.positive("grid.dt", self.grid.dt);
        if let Some(n) = self.grid.n_omega {
            if !n.is_power_of_two() || n < 64 {
                err.push("grid.n_omega", "must be a power of two >= 64");
            }
        }
        let scheme = self.build_scheme(base, &mut err);
        if !err.0.is_empty() {
            return Err(err.0);
        }
        let mut scheme = scheme.expect("scheme present when no errors");
        if let Some(g) = p.gamma_sg {
            scheme = scheme
                .with_ground_decay(g)
                .map_err(|e| vec![field("protocol.gamma_sg", e)])?;
        }

        let units = UnitSystem::new(self.units.gamma_mhz.unwrap());
        let t_p = units.time_from_us(self.units.t_p_us.unwrap());
        let kappa = p.kappa.unwrap_or(1.35);
        let (eta, omega_w) = match (p.eta, p.omega_w) {
            (Some(eta), _) => (
                eta,
                omega_w_for_eta(&scheme, eta, t_p).map_err(|e| vec![field("protocol.eta", e)])?,
            ),
            (_, Some(om)) => {
                let t_d = scheme.alpha_p * scheme.gamma_w * scheme.moments(eitconv::atomic::Branch::Probe).ratio_sq
                    / (om * om);
                (t_d / t_p, om)
            }
            _ => unreachable!(),
        };
        let omega_r = match (p.omega_r, p.control_ratio) {
            (Some(om), _) => om,
            (None, ratio) => {
                let ratio = ratio.unwrap_or(1.0);
                let r = match p.ratio_mode {
                    RatioMode::DelayMatched => omega_r_delay_matched(&scheme, omega_w, ratio),
                    RatioMode::Rabi => omega_r_from_control_ratio(&scheme, omega_w, ratio),
                };
                r.map_err(|e| vec![field("protocol.control_ratio", e)])?
            }
        };
        let t_s = p.t_s_us.map_or(2.0 * t_p, |t| units.time_from_us(t));
        let mut timeline = ControlTimeline::protocol(omega_w, omega_r, t_p, kappa, t_s);
        if let Some(r) = p.ramp_us {
            timeline.ramp_w = units.time_from_us(r);
            timeline.ramp_r = timeline.ramp_w;
        }
        timeline.validate().map_err(|e| vec![field("protocol", e)])?;
        let engines = if self.engines.is_empty() {
            vec![Engine::Analytic]
        } else {
            self.engines.clone()
        };
        Ok(Scenario {
            units,
            scheme,
            pulse: GaussianPulse::new(t_p, 1.0, 0.0),
            eta,
            kappa,
            omega_w,
            omega_r,
            timeline,
            engines,
            grid: self.grid.clone(),
            output: self.output.as_ref().map(|o| base.join(o)),
        })
    }

    fn build_scheme(&self, base: &Path, err: &mut Errors) -> Option<ConversionScheme> {
        let s = &self.scheme;
        let Some(kind) = s.kind else {
            err.push("scheme.kind", "missing (single_state or cesium_d1)");
            return None;
        };
        match kind {
            SchemeKind::SingleState => {
                err.required("scheme.d_p", &s.d_p);
                err.required("scheme.d_c", &s.d_c);
                err.positive("scheme.d_p", s.d_p);
                err.positive("scheme.d_c", s.d_c);
                for (name, present) in [
                    ("direction", s.direction.is_some()),
                    ("population", s.population.is_some()),
                    ("populations", s.populations.is_some()),
                    ("pump", s.pump.is_some()),
                ] {
                    if present {
                        err.push(&format!("scheme.{name}"), "only valid for kind = \"cesium_d1\"");
                    }
                }
                let (d_p, d_c) = (s.d_p?, s.d_c?);
                ConversionScheme::single_state_with_depths(d_p, d_c)
                    .map_err(|e| err.push("scheme", e.to_string()))
                    .ok()
            }
            SchemeKind::CesiumD1 => {
                err.required("scheme.direction", &s.direction);
                err.required("scheme.alpha_p", &s.alpha_p);
                err.positive("scheme.alpha_p", s.alpha_p);
                err.positive("scheme.alpha_c", s.alpha_c);
                let sources = [s.population.is_some(), s.populations.is_some(), s.pump.is_some()];
                if sources.iter().filter(|&&x| x).count() != 1 {
                    err.push("scheme", "give exactly one of `population`, `populations` or `pump`");
                    return None;
                }
                let pop = self.resolve_population(base, err)?;
                let (dir, a_p) = (s.direction?, s.alpha_p?);
                build_cesium_d1_scheme(dir, &pop, a_p, s.alpha_c.unwrap_or(a_p))
                    .map_err(|e| err.push("scheme", e.to_string()))
                    .ok()
            }
        }
    }

    fn resolve_population(&self, base: &Path, err: &mut Errors) -> Option<PopulationDistribution> {
        let s = &self.scheme;
        if let Some(name) = &s.population {
            return match parse_named_population(name) {
                Some(p) => Some(p),
                None => {
                    err.push(
                        "scheme.population",
                        format!("expected \"isotropic\" or \"m=<-3..3>\", got {name:?}"),
                    );
                    None
                }
            };
        }
        if let Some(v) = &s.populations {
            return PopulationDistribution::new(v)
                .map_err(|e| err.push("scheme.populations", e.to_string()))
                .ok();
        }
        let pump = s.pump.as_ref()?;
        let Some(gamma) = self.units.gamma_mhz else {
            err.push("scheme.pump", "needs units.gamma_mhz to convert time_us");
            return None;
        };
        let table = match PumpTable::load(&base.join(&pump.file)) {
            Ok(t) => t,
            Err(e) => {
                err.push("scheme.pump.file", e.to_string());
                return None;
            }
        };
        table
            .distribution_at(UnitSystem::new(gamma).time_from_us(pump.time_us))
            .map_err(|e| err.push("scheme.pump.time_us", e.to_string()))
            .ok()
    }
}

fn field(path: &str, e: eitconv::Error) -> FieldError {
    FieldError {
        path: path.into(),
        message: e.to_string(),
    }
}

pub fn parse_named_population(name: &str) -> Option<PopulationDistribution> {
    if name == "isotropic" {
        return Some(PopulationDistribution::isotropic());
    }
    let m: i32 = name.strip_prefix("m=")?.trim().parse().ok()?;
    PopulationDistribution::single(m).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [units]
        gamma_mhz = 4.56
        t_p_us = 0.2
        [scheme]
        kind = "single_state"
        d_p = 500.0
        d_c = 500.0
        [protocol]
        eta = 4.0
    "#;

    #[test]
    fn minimal_config_resolves() {
        let s = ScenarioConfig::from_toml(MINIMAL)
            .unwrap()
            .validate(Path::new("."))
            .unwrap();
        assert!((s.pulse.t_p - 5.730).abs() < 1e-3);
        assert_eq!(s.kappa, 1.35);
        assert_eq!(s.engines, vec![Engine::Analytic]);
        assert!((s.timeline.t_s - 2.0 * s.pulse.t_p).abs() < 1e-12);
        assert!((s.omega_r - s.omega_w).abs() < 1e-12);
    }

    #[test]
    fn omega_w_and_eta_are_exclusive() {
        let text = MINIMAL.replace("eta = 4.0", "eta = 4.0\nomega_w = 3.0");
        let errs = ScenarioConfig::from_toml(&text)
            .unwrap()
            .validate(Path::new("."))
            .unwrap_err();
        assert!(errs.iter().any(|e| e.path == "protocol"));
        let text = MINIMAL.replace("eta = 4.0", "omega_w = 4.67057");
        let s = ScenarioConfig::from_toml(&text)
            .unwrap()
            .validate(Path::new("."))
            .unwrap();
        assert!((s.eta - 4.0).abs() < 1e-4);
    }

    #[test]
    fn missing_units_listed() {
        let text = MINIMAL.replace("gamma_mhz = 4.56\n", "").replace("t_p_us = 0.2", "");
        let errs = ScenarioConfig::from_toml(&text)
            .unwrap()
            .validate(Path::new("."))
            .unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"units.gamma_mhz"));
        assert!(paths.contains(&"units.t_p_us"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("eta = 4.0", "eta = 4.0\netta = 3.0");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn named_populations() {
        assert_eq!(parse_named_population("m=3").unwrap().get(3), 1.0);
        assert!(parse_named_population("m=4").is_none());
        assert!(parse_named_population("flat").is_none());
    }
}
