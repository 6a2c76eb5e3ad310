//! Multi-Λ level structure: Clebsch–Gordan data, Zeeman populations and the
//! population-weighted sums every efficiency formula is built from.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::cg::hyperfine_dipole;
use crate::error::{invalid, Error, Result};
use crate::sum::compensated_sum;

/// Number of Zeeman sublevels in the F=3 ground manifold.
pub const ZEEMAN_STATES: usize = 7;

/// Magnetic quantum numbers of the F=3 ground manifold, in storage order.
pub const ZEEMAN_M: [i32; ZEEMAN_STATES] = [-3, -2, -1, 0, 1, 2, 3];

const POPULATION_TOL: f64 = 1e-12;

fn m_index(m: i32) -> Option<usize> {
    (-3..=3).contains(&m).then(|| (m + 3) as usize)
}

/// Polarisation pair of a conversion: write channel first, read second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Store a σ⁺ probe, retrieve σ⁻.
    SigmaPlusToMinus,
    /// Store a σ⁻ probe, retrieve σ⁺.
    SigmaMinusToPlus,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::SigmaPlusToMinus, Direction::SigmaMinusToPlus];

    pub fn reversed(self) -> Self {
        match self {
            Direction::SigmaPlusToMinus => Direction::SigmaMinusToPlus,
            Direction::SigmaMinusToPlus => Direction::SigmaPlusToMinus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::SigmaPlusToMinus => "sigma_plus_to_minus",
            Direction::SigmaMinusToPlus => "sigma_minus_to_plus",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigma_plus_to_minus" | "s+s-" | "plus_to_minus" | "+-" => Ok(Direction::SigmaPlusToMinus),
            "sigma_minus_to_plus" | "s-s+" | "minus_to_plus" | "-+" => Ok(Direction::SigmaMinusToPlus),
            other => Err(invalid(
                "direction",
                format!("`{other}` is not one of sigma_plus_to_minus, sigma_minus_to_plus"),
            )),
        }
    }
}

/// Which optical transition of a Λ pair a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// The stored probe transition (write channel).
    Probe,
    /// The retrieved, converted transition (read channel).
    Converted,
}

/// Ground Zeeman populations p_m, m = -3..=3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PopulationDistribution([f64; ZEEMAN_STATES]);

impl PopulationDistribution {
    pub fn new(p: &[f64]) -> Result<Self> {
        if p.len() != ZEEMAN_STATES {
            return Err(Error::InvalidPopulation(format!(
                "expected {ZEEMAN_STATES} entries (m = -3..=3), got {}",
                p.len()
            )));
        }
        if let Some((i, x)) = p.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidPopulation(format!(
                "p[m={}] = {x} is negative or not finite",
                ZEEMAN_M[i]
            )));
        }
        let total = compensated_sum(p.iter().copied());
        if (total - 1.0).abs() > POPULATION_TOL {
            return Err(Error::InvalidPopulation(format!("populations sum to {total}, not 1")));
        }
        let mut arr = [0.0; ZEEMAN_STATES];
        arr.copy_from_slice(p);
        Ok(Self(arr))
    }

    /// Rescales non-negative weights to unit sum.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        if weights.len() != ZEEMAN_STATES {
            return Self::new(weights);
        }
        let clipped: Vec<f64> = weights.iter().map(|&w| if w.abs() < 1e-13 { 0.0 } else { w }).collect();
        let total = compensated_sum(clipped.iter().copied());
        if !(total > 0.0) {
            return Err(Error::InvalidPopulation("weights sum to zero".into()));
        }
        let p: Vec<f64> = clipped.iter().map(|w| w / total).collect();
        let residual = 1.0 - compensated_sum(p.iter().copied());
        let mut p = p;
        // fold the last rounding ulp into the largest entry
        let imax = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        p[imax] += residual;
        Self::new(&p)
    }

    pub fn isotropic() -> Self {
        Self([1.0 / ZEEMAN_STATES as f64; ZEEMAN_STATES])
    }

    pub fn single(m: i32) -> Result<Self> {
        let i = m_index(m).ok_or_else(|| Error::InvalidPopulation(format!("m = {m} outside -3..=3")))?;
        let mut p = [0.0; ZEEMAN_STATES];
        p[i] = 1.0;
        Ok(Self(p))
    }

    pub fn get(&self, m: i32) -> f64 {
        m_index(m).map_or(0.0, |i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The distribution reflected through m → -m.
    pub fn mirrored(&self) -> Self {
        let mut p = self.0;
        p.reverse();
        Self(p)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..ZEEMAN_STATES).all(|i| (self.0[i] - self.0[ZEEMAN_STATES - 1 - i]).abs() <= tol)
    }

    /// Mean magnetic quantum number Σ m p_m.
    pub fn mean_m(&self) -> f64 {
        compensated_sum(ZEEMAN_M.iter().zip(self.0.iter()).map(|(&m, &p)| m as f64 * p))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Vec<f64> = serde_json::from_str(text)?;
        Self::new(&v)
    }
}

impl TryFrom<Vec<f64>> for PopulationDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(&v)
    }
}

impl From<PopulationDistribution> for Vec<f64> {
    fn from(p: PopulationDistribution) -> Self {
        p.0.to_vec()
    }
}

/// Clebsch–Gordan coefficients for one ground sublevel |F=3, m⟩ of the Cs D₁
/// converter: probe-type transitions from F=3 and control-type transitions
/// from F=4, both into the F′=4 manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgEntry {
    pub m: i32,
    /// |3,m⟩ → |4′,m+1⟩ (σ⁺ probe-type).
    pub a_plus: f64,
    /// |3,m⟩ → |4′,m−1⟩ (σ⁻ probe-type).
    pub a_minus: f64,
    /// |4,m⟩ → |4′,m+1⟩ (σ⁺ control-type).
    pub w_plus: f64,
    /// |4,m⟩ → |4′,m−1⟩ (σ⁻ control-type).
    pub w_minus: f64,
}

impl CgEntry {
    pub fn r_plus(&self) -> f64 {
        self.a_plus / self.w_plus
    }

    pub fn r_minus(&self) -> f64 {
        self.a_minus / self.w_minus
    }
}

/// Reference CG ratios of the Cs D₁ converter: (R⁻ squared, R⁻ sign,
/// R⁺ squared, R⁺ sign) for m = -3..=3.
pub const CESIUM_D1_RATIO_TABLE: [(f64, f64, f64, f64); ZEEMAN_STATES] = [
    (7.0, 1.0, 1.0 / 7.0, -1.0),
    (3.0, 1.0, 1.0 / 3.0, -1.0),
    (5.0 / 3.0, 1.0, 3.0 / 5.0, -1.0),
    (1.0, 1.0, 1.0, -1.0),
    (3.0 / 5.0, 1.0, 5.0 / 3.0, -1.0),
    (1.0 / 3.0, 1.0, 3.0, -1.0),
    (1.0 / 7.0, 1.0, 7.0, -1.0),
];

/// Per-sublevel CG table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgTable {
    pub entries: [CgEntry; ZEEMAN_STATES],
}

impl CgTable {
    /// Cs D₁ (I = 7/2, J = J′ = 1/2) table with excited manifold F′ = 4.
    pub fn cesium_d1() -> Self {
        const I: i32 = 7;
        const J: i32 = 1;
        const F_G: i32 = 6;
        const F_S: i32 = 8;
        const F_E: i32 = 8;
        let entries = ZEEMAN_M.map(|m| {
            let m2 = 2 * m;
            let element = |f: i32, mp2: i32| {
                if mp2.abs() > F_E {
                    0.0
                } else {
                    hyperfine_dipole(I, J, J, f, m2, F_E, mp2)
                }
            };
            CgEntry {
                m,
                a_plus: element(F_G, m2 + 2),
                a_minus: element(F_G, m2 - 2),
                w_plus: element(F_S, m2 + 2),
                w_minus: element(F_S, m2 - 2),
            }
        });
        let table = Self { entries };
        debug_assert!(table.max_deviation_from_reference() < 1e-12);
        table
    }

    pub fn entry(&self, m: i32) -> Option<&CgEntry> {
        m_index(m).map(|i| &self.entries[i])
    }

    /// Largest deviation of the generated ratios from
    /// [`CESIUM_D1_RATIO_TABLE`].
    pub fn max_deviation_from_reference(&self) -> f64 {
        self.entries
            .iter()
            .zip(CESIUM_D1_RATIO_TABLE.iter())
            .map(|(e, &(rm2, sm, rp2, sp))| {
                let dm = (e.r_minus() - sm * rm2.sqrt()).abs();
                let dp = (e.r_plus() - sp * rp2.sqrt()).abs();
                dm.max(dp)
            })
            .fold(0.0, f64::max)
    }
}

/// One Λ-pair subsystem sharing the ground sublevel |g, m⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subsystem {
    pub m: i32,
    /// Probe transition CG coefficient.
    pub a_p: f64,
    /// Writing-control CG coefficient.
    pub a_w: f64,
    /// Converted transition CG coefficient.
    pub a_c: f64,
    /// Reading-control CG coefficient.
    pub a_r: f64,
    pub population: f64,
}

impl Subsystem {
    /// R^p = a_p / a_w.
    pub fn r_p(&self) -> f64 {
        self.a_p / self.a_w
    }

    /// R^c = a_c / a_r.
    pub fn r_c(&self) -> f64 {
        self.a_c / self.a_r
    }

    pub fn branch_cg(&self, branch: Branch) -> (f64, f64) {
        match branch {
            Branch::Probe => (self.a_p, self.a_w),
            Branch::Converted => (self.a_c, self.a_r),
        }
    }
}

/// A set of Λ subsystems with their depths and relaxation rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionScheme {
    pub subsystems: Vec<Subsystem>,
    /// Resonant optical depth scale of the probe line.
    pub alpha_p: f64,
    /// Resonant optical depth scale of the converted line.
    pub alpha_c: f64,
    /// Excited-state decay rate of the write channel.
    pub gamma_w: f64,
    /// Excited-state decay rate of the read channel.
    pub gamma_r: f64,
    /// Ground-coherence decay rate.
    pub gamma_sg: f64,
}

/// Population-weighted CG moments of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchMoments {
    /// Σ p a² (effective depth factor).
    pub depth_factor: f64,
    /// Σ p R².
    pub ratio_sq: f64,
    /// Σ p R⁴ / a² = Σ p a² / a_ctrl⁴.
    pub quartic: f64,
    /// Smallest control a² among populated subsystems with a nonzero
    /// transition coefficient.
    pub min_control_sq: f64,
}

impl ConversionScheme {
    pub fn new(subsystems: Vec<Subsystem>, alpha_p: f64, alpha_c: f64, gamma_w: f64, gamma_r: f64) -> Result<Self> {
        let scheme = Self {
            subsystems,
            alpha_p,
            alpha_c,
            gamma_w,
            gamma_r,
            gamma_sg: 0.0,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// A single Λ pair holding the whole population, Γ_w = Γ_r = 1.
    pub fn single_state(a_p: f64, a_w: f64, a_c: f64, a_r: f64, alpha_p: f64, alpha_c: f64) -> Result<Self> {
        Self::new(
            vec![Subsystem {
                m: 0,
                a_p,
                a_w,
                a_c,
                a_r,
                population: 1.0,
            }],
            alpha_p,
            alpha_c,
            1.0,
            1.0,
        )
    }

    /// Single Λ pair parameterised by effective depths: a_p = a_w = a_r = 1,
    /// α_p = D_p, α_c = D_p and a_c = sqrt(D_c / D_p).
    pub fn single_state_with_depths(d_p: f64, d_c: f64) -> Result<Self> {
        if !(d_p > 0.0) || !(d_c > 0.0) {
            return Err(invalid("depth", "optical depths must be positive"));
        }
        Self::single_state(1.0, 1.0, (d_c / d_p).sqrt(), 1.0, d_p, d_p)
    }

    pub fn with_ground_decay(mut self, gamma_sg: f64) -> Result<Self> {
        self.gamma_sg = gamma_sg;
        self.validate()?;
        Ok(self)
    }

    pub fn with_decay_rates(mut self, gamma_w: f64, gamma_r: f64) -> Result<Self> {
        self.gamma_w = gamma_w;
        self.gamma_r = gamma_r;
        self.validate()?;
        Ok(self)
    }

    /// The same medium read back through the write channel: converted and
    /// reading transitions replaced by the probe and writing ones.
    pub fn original_channel(&self) -> Self {
        let mut s = self.clone();
        for sub in &mut s.subsystems {
            sub.a_c = sub.a_p;
            sub.a_r = sub.a_w;
        }
        s.alpha_c = s.alpha_p;
        s.gamma_r = s.gamma_w;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.subsystems.is_empty() {
            return Err(Error::DegenerateScheme("no subsystems".into()));
        }
        for (name, v) in [("alpha_p", self.alpha_p), ("alpha_c", self.alpha_c)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("optical depth must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("gamma_w", self.gamma_w), ("gamma_r", self.gamma_r)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("decay rate must be positive, got {v}")));
            }
        }
        if !(self.gamma_sg >= 0.0) || !self.gamma_sg.is_finite() {
            return Err(invalid("gamma_sg", format!("must be >= 0, got {}", self.gamma_sg)));
        }
        let mut total = Vec::with_capacity(self.subsystems.len());
        for s in &self.subsystems {
            if !(s.population >= 0.0) {
                return Err(Error::InvalidPopulation(format!(
                    "p[m={}] = {} is negative",
                    s.m, s.population
                )));
            }
            if s.population > 0.0 && (s.a_w == 0.0 || s.a_r == 0.0) {
                return Err(Error::DegenerateScheme(format!(
                    "populated subsystem m={} has a vanishing control coefficient (a_w={}, a_r={})",
                    s.m, s.a_w, s.a_r
                )));
            }
            total.push(s.population);
        }
        let total = compensated_sum(total);
        if (total - 1.0).abs() > POPULATION_TOL {
            return Err(Error::InvalidPopulation(format!("populations sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Subsystems with non-zero population.
    pub fn populated(&self) -> impl Iterator<Item = &Subsystem> {
        self.subsystems.iter().filter(|s| s.population > 0.0)
    }

    /// Probe coupling g_p = sqrt(α_p Γ_w / 2) in the normalised units.
    pub fn g_p(&self) -> f64 {
        (self.alpha_p * self.gamma_w / 2.0).sqrt()
    }

    /// Converted-line coupling g_c = sqrt(α_c Γ_r / 2).
    pub fn g_c(&self) -> f64 {
        (self.alpha_c * self.gamma_r / 2.0).sqrt()
    }

    pub fn alpha(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Probe => self.alpha_p,
            Branch::Converted => self.alpha_c,
        }
    }

    pub fn gamma(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Probe => self.gamma_w,
            Branch::Converted => self.gamma_r,
        }
    }

    pub fn moments(&self, branch: Branch) -> BranchMoments {
        let populated: Vec<_> = self.populated().map(|s| (s.population, s.branch_cg(branch))).collect();
        let depth_factor = compensated_sum(populated.iter().map(|(p, (a, _))| p * a * a));
        let ratio_sq = compensated_sum(populated.iter().map(|(p, (a, c))| p * (a / c).powi(2)));
        let quartic = compensated_sum(populated.iter().map(|(p, (a, c))| p * a * a / c.powi(4)));
        let min_control_sq = populated
            .iter()
            .filter(|(_, (a, _))| *a != 0.0)
            .map(|(_, (_, c))| c * c)
            .fold(f64::INFINITY, f64::min);
        BranchMoments {
            depth_factor,
            ratio_sq,
            quartic,
            min_control_sq,
        }
    }

    /// Σ p R^p R^c.
    pub fn cross_moment(&self) -> f64 {
        compensated_sum(self.populated().map(|s| s.population * s.r_p() * s.r_c()))
    }

    /// Effective resonant optical depth Σ p a² α of a branch.
    pub fn effective_depth(&self, branch: Branch) -> f64 {
        self.alpha(branch) * effective_depth_factor(self, branch)
    }

    pub fn summary(&self) -> SchemeSummary {
        SchemeSummary {
            alpha_p: self.alpha_p,
            alpha_c: self.alpha_c,
            gamma_w: self.gamma_w,
            gamma_r: self.gamma_r,
            gamma_sg: self.gamma_sg,
            subsystems: self
                .subsystems
                .iter()
                .map(|s| SubsystemSummary {
                    m: s.m,
                    population: s.population,
                    a_p: s.a_p,
                    a_w: s.a_w,
                    a_c: s.a_c,
                    a_r: s.a_r,
                    r_p: if s.a_w != 0.0 { Some(s.r_p()) } else { None },
                    r_c: if s.a_r != 0.0 { Some(s.r_c()) } else { None },
                })
                .collect(),
            depth_factor_probe: effective_depth_factor(self, Branch::Probe),
            depth_factor_converted: effective_depth_factor(self, Branch::Converted),
            coherence_mismatch: coherence_mismatch(self).ok(),
        }
    }
}

/// JSON export of a scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub alpha_p: f64,
    pub alpha_c: f64,
    pub gamma_w: f64,
    pub gamma_r: f64,
    pub gamma_sg: f64,
    pub subsystems: Vec<SubsystemSummary>,
    pub depth_factor_probe: f64,
    pub depth_factor_converted: f64,
    pub coherence_mismatch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSummary {
    pub m: i32,
    pub population: f64,
    pub a_p: f64,
    pub a_w: f64,
    pub a_c: f64,
    pub a_r: f64,
    pub r_p: Option<f64>,
    pub r_c: Option<f64>,
}

/// Builds the Cs D₁ polarisation converter: one subsystem per ground
/// sublevel |F=3,m⟩ paired with |F=4,m⟩, all seven kept in m order.
pub fn build_cesium_d1_scheme(
    direction: Direction,
    populations: &PopulationDistribution,
    alpha_p: f64,
    alpha_c: f64,
) -> Result<ConversionScheme> {
    if !(alpha_p > 0.0) {
        return Err(invalid("alpha_p", format!("must be positive, got {alpha_p}")));
    }
    if !(alpha_c > 0.0) {
        return Err(invalid("alpha_c", format!("must be positive, got {alpha_c}")));
    }
    let table = CgTable::cesium_d1();
    let subsystems = table
        .entries
        .iter()
        .map(|e| {
            let (a_p, a_w, a_c, a_r) = match direction {
                Direction::SigmaPlusToMinus => (e.a_plus, e.w_plus, e.a_minus, e.w_minus),
                Direction::SigmaMinusToPlus => (e.a_minus, e.w_minus, e.a_plus, e.w_plus),
            };
            Subsystem {
                m: e.m,
                a_p,
                a_w,
                a_c,
                a_r,
                population: populations.get(e.m),
            }
        })
        .collect();
    ConversionScheme::new(subsystems, alpha_p, alpha_c, 1.0, 1.0)
}

/// Σ_j p_j a_j² for the requested branch.
pub fn effective_depth_factor(scheme: &ConversionScheme, branch: Branch) -> f64 {
    scheme.moments(branch).depth_factor
}

/// Ground-coherence mismatch factor
/// ξ₂ = |Σ p R^p R^c|² / (Σ p (R^p)² · Σ p (R^c)²).
pub fn coherence_mismatch(scheme: &ConversionScheme) -> Result<f64> {
    let sp = scheme.moments(Branch::Probe).ratio_sq;
    let sc = scheme.moments(Branch::Converted).ratio_sq;
    if !(sp > 0.0) || !(sc > 0.0) {
        return Err(Error::DegenerateScheme(format!(
            "Σ p R² vanishes (probe {sp}, converted {sc})"
        )));
    }
    let cross = scheme.cross_moment();
    // Cauchy–Schwarz holds exactly; clamp the last ulp of rounding.
    Ok((cross * cross / (sp * sc)).min(1.0))
}
