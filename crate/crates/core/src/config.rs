//! Scenario description: OFDM numerology, coherence geometry, pilot layout,
//! deployment geometry and the two reference presets.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Complex64, Error, Result};

/// Thermal noise density used when no explicit noise power is given.
pub const NOISE_DENSITY_DBM_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmGrid {
    /// Number of subcarriers N.
    pub n: usize,
    /// Cyclic-prefix length in samples.
    pub n_cp: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Carrier frequency in Hz.
    pub f_c: f64,
}

impl OfdmGrid {
    pub fn new(n: usize, n_cp: usize, delta_f: f64, f_c: f64) -> Result<Self> {
        let g = OfdmGrid {
            n,
            n_cp,
            delta_f,
            f_c,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("number of subcarriers must be positive"));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::config("subcarrier spacing must be positive"));
        }
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::config("carrier frequency must be positive"));
        }
        Ok(())
    }

    /// Bandwidth W = N·Δf.
    pub fn bandwidth(&self) -> f64 {
        self.n as f64 * self.delta_f
    }

    /// Sampling period T_s = 1/W.
    pub fn sample_time(&self) -> f64 {
        1.0 / self.bandwidth()
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn stride(&self) -> usize {
        self.n + self.n_cp
    }

    pub fn symbol_duration(&self) -> f64 {
        self.stride() as f64 * self.sample_time()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceGeometry {
    /// Subcarriers per coherence block.
    pub n_c: usize,
    /// OFDM symbols per coherence block.
    pub tau_c: usize,
    /// Pilot length (pilot cells per coherence block).
    pub tau_p: usize,
}

impl CoherenceGeometry {
    pub fn new(n_c: usize, tau_c: usize, tau_p: usize) -> Result<Self> {
        let g = CoherenceGeometry { n_c, tau_c, tau_p };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 || self.tau_c == 0 || self.tau_p == 0 {
            return Err(Error::config(
                "coherence block dimensions and pilot length must be positive",
            ));
        }
        if self.tau_p > self.n_c * self.tau_c {
            return Err(Error::config(format!(
                "pilot length {} exceeds the {} cells of a coherence block",
                self.tau_p,
                self.n_c * self.tau_c
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.n_c * self.tau_c
    }

    /// Number of frequency blocks covering `n` subcarriers (last one may be partial).
    pub fn num_blocks(&self, n: usize) -> usize {
        n.div_ceil(self.n_c)
    }

    pub fn block_of(&self, subcarrier: usize) -> usize {
        subcarrier / self.n_c
    }

    pub fn block_range(&self, r: usize, n: usize) -> std::ops::Range<usize> {
        (r * self.n_c).min(n)..((r + 1) * self.n_c).min(n)
    }

    /// Fraction of the block left for data.
    pub fn prelog(&self) -> f64 {
        (self.cells() - self.tau_p) as f64 / self.cells() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotPattern {
    /// One pilot per OFDM symbol, spread in time.
    Pp1,
    /// Pilots packed into the first symbols of the block.
    Pp2,
}

impl std::str::FromStr for PilotPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pp1" | "1" => Ok(PilotPattern::Pp1),
            "pp2" | "2" => Ok(PilotPattern::Pp2),
            _ => Err(Error::config(format!("unknown pilot pattern '{s}'"))),
        }
    }
}

impl std::fmt::Display for PilotPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PilotPattern::Pp1 => write!(f, "pp1"),
            PilotPattern::Pp2 => write!(f, "pp2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PilotCell {
    pub symbol: usize,
    pub subcarrier: usize,
}

/// Pilot cells of coherence block 0, the orthogonal pilot book and the
/// UE-to-pilot assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pub pattern: PilotPattern,
    /// Pilot cells in observation order (by symbol, then subcarrier).
    pub cells: Vec<PilotCell>,
    /// `book[t][a]` is entry `a` of pilot sequence `t`.
    pub book: Vec<Vec<Complex64>>,
    /// Pilot index used by each UE.
    pub assignment: Vec<usize>,
    pub tau_c: usize,
    pub n_c: usize,
}

impl PilotPlan {
    pub fn build(geom: &CoherenceGeometry, pattern: PilotPattern, num_ues: usize) -> Result<Self> {
        geom.validate()?;
        let (tau_p, tau_c, n_c) = (geom.tau_p, geom.tau_c, geom.n_c);
        let cells: Vec<PilotCell> = match pattern {
            PilotPattern::Pp1 => {
                if tau_p > tau_c {
                    return Err(Error::config(format!(
                        "pattern pp1 needs tau_p <= tau_c (got {tau_p} > {tau_c})"
                    )));
                }
                (0..tau_p)
                    .map(|i| {
                        let p = i % (2 * n_c);
                        let subcarrier = if p < n_c { n_c - 1 - p } else { p - n_c };
                        PilotCell {
                            symbol: i * tau_c / tau_p,
                            subcarrier,
                        }
                    })
                    .collect()
            }
            PilotPattern::Pp2 => {
                let mut cells = Vec::with_capacity(tau_p);
                let mut left = tau_p;
                let mut symbol = 0;
                while left > 0 {
                    let m = left.min(n_c);
                    for subcarrier in n_c - m..n_c {
                        cells.push(PilotCell { symbol, subcarrier });
                    }
                    left -= m;
                    symbol += 1;
                }
                cells
            }
        };
        let book = (0..tau_p)
            .map(|t| {
                (0..tau_p)
                    .map(|a| Complex64::from_polar(1.0, -2.0 * PI * (t * a) as f64 / tau_p as f64))
                    .collect()
            })
            .collect();
        let assignment = (0..num_ues).map(|k| k % tau_p).collect();
        Ok(PilotPlan {
            pattern,
            cells,
            book,
            assignment,
            tau_c,
            n_c,
        })
    }

    pub fn tau_p(&self) -> usize {
        self.cells.len()
    }

    pub fn sequence(&self, ue: usize) -> &[Complex64] {
        &self.book[self.assignment[ue]]
    }

    /// Indices (into `cells`) of the pilots carried by `symbol`.
    pub fn pilots_in_symbol(&self, symbol: usize) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&a| self.cells[a].symbol == symbol)
            .collect()
    }

    pub fn pilot_at(&self, symbol: usize, subcarrier: usize) -> Option<usize> {
        self.cells
            .iter()
            .position(|c| c.symbol == symbol && c.subcarrier == subcarrier)
    }

    /// Distinct symbols carrying at least one pilot, ascending.
    pub fn pilot_symbols(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.cells.iter().map(|c| c.symbol).collect();
        s.dedup();
        s
    }

    /// Data subcarriers of block 0 in `symbol`.
    pub fn data_subcarriers(&self, symbol: usize) -> Vec<usize> {
        (0..self.n_c)
            .filter(|&n| self.pilot_at(symbol, n).is_none())
            .collect()
    }

    /// Distinct pilot indices in use, ascending.
    pub fn used_pilots(&self) -> Vec<usize> {
        let mut t = self.assignment.clone();
        t.sort_unstable();
        t.dedup();
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoMode {
    /// Each AP has its own oscillator.
    Separate,
    /// All APs share one oscillator (e.g. along a radio stripe).
    Shared,
}

impl std::str::FromStr for LoMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "separate" => Ok(LoMode::Separate),
            "shared" => Ok(LoMode::Shared),
            _ => Err(Error::config(format!("unknown LO mode '{s}'"))),
        }
    }
}

/// Whether the cyclic prefix enters the sample lag between OFDM symbols in
/// the closed-form phase-noise statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LagConvention {
    /// Autocorrelation and separate-oscillator terms use N+N_cp per symbol,
    /// shared-oscillator cross terms and the drift mean use N.
    #[default]
    PerEquation,
    /// Always N+N_cp (matches the generator).
    Always,
    /// Always N.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ApLayout {
    /// Uniform in a square of the given side.
    UniformSquare { side_m: f64 },
    /// Equidistant on the perimeter of a square of the given side.
    Perimeter { side_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeLayout {
    /// Side of the square the UEs are dropped in, centred on the AP area.
    pub side_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaModel {
    /// beta[dB] = ref_gain_db - 10·exponent·log10(d) + N(0, shadow_db²).
    LogDistance {
        ref_gain_db: f64,
        exponent: f64,
        shadow_db: f64,
        min_distance_m: f64,
    },
    /// Every UE-AP pair gets the same gain.
    Uniform { value: f64 },
}

impl BetaModel {
    pub fn paper_default() -> Self {
        BetaModel::LogDistance {
            ref_gain_db: -30.5,
            exponent: 3.67,
            shadow_db: 4.0,
            min_distance_m: 1.0,
        }
    }
}

impl std::str::FromStr for BetaModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(v) = s.strip_prefix("uniform:") {
            let value: f64 = v
                .parse()
                .map_err(|_| Error::config(format!("bad uniform gain '{v}'")))?;
            return Ok(BetaModel::Uniform { value });
        }
        if s == "log-distance" || s == "default" {
            return Ok(BetaModel::paper_default());
        }
        Err(Error::config(format!(
            "unknown gain model '{s}' (use log-distance or uniform:<value>)"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataModulation {
    #[default]
    Gaussian,
    Qpsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Scenario1,
    Scenario2,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scenario1" | "1" => Ok(Preset::Scenario1),
            "scenario2" | "2" => Ok(Preset::Scenario2),
            _ => Err(Error::config(format!("unknown preset '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub grid: OfdmGrid,
    pub coherence: CoherenceGeometry,
    pub pattern: PilotPattern,
    pub num_aps: usize,
    pub num_ues: usize,
    pub lo_mode: LoMode,
    /// Oscillator quality constants (gamma) of the APs and UEs.
    pub gamma_ap: f64,
    pub gamma_ue: f64,
    /// Transmit power per UE in watts.
    pub power_w: f64,
    pub noise_figure_db: f64,
    /// Explicit noise power per sample; derived from the bandwidth when absent.
    pub noise_power: Option<f64>,
    pub ap_layout: ApLayout,
    pub ue_layout: UeLayout,
    pub beta_model: BetaModel,
    pub cp_in_lag: LagConvention,
    pub data_modulation: DataModulation,
    /// Subcarrier of block 0 at which SE is evaluated.
    pub eval_subcarrier: usize,
    pub trials: usize,
    pub realizations: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Full-size reference scenarios.
    pub fn preset(p: Preset) -> Self {
        let grid = OfdmGrid {
            n: 667,
            n_cp: 0,
            delta_f: 15e3,
            f_c: 2e9,
        };
        let coherence = CoherenceGeometry {
            n_c: 12,
            tau_c: 20,
            tau_p: 20,
        };
        let common = ScenarioConfig {
            grid,
            coherence,
            pattern: PilotPattern::Pp1,
            num_aps: 200,
            num_ues: 5,
            lo_mode: LoMode::Separate,
            gamma_ap: 1e-17,
            gamma_ue: 1e-17,
            power_w: 0.1,
            noise_figure_db: 7.0,
            noise_power: None,
            ap_layout: ApLayout::UniformSquare { side_m: 1000.0 },
            ue_layout: UeLayout { side_m: 1000.0 },
            beta_model: BetaModel::paper_default(),
            cp_in_lag: LagConvention::PerEquation,
            data_modulation: DataModulation::Gaussian,
            eval_subcarrier: 6,
            trials: 100,
            realizations: 20,
            seed: 1,
        };
        match p {
            Preset::Scenario1 => common,
            Preset::Scenario2 => ScenarioConfig {
                num_aps: 50,
                num_ues: 2,
                lo_mode: LoMode::Shared,
                ap_layout: ApLayout::Perimeter { side_m: 500.0 },
                ue_layout: UeLayout { side_m: 400.0 },
                ..common
            },
        }
    }

    /// Laptop-sized variant of a preset: N = 64, tau_c = tau_p = 10, L <= 20, K <= 4.
    pub fn desk(p: Preset) -> Self {
        let full = Self::preset(p);
        ScenarioConfig {
            grid: OfdmGrid { n: 64, ..full.grid },
            coherence: CoherenceGeometry {
                n_c: 12,
                tau_c: 10,
                tau_p: 10,
            },
            num_aps: full.num_aps.min(20),
            num_ues: full.num_ues.min(4),
            ..full
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.coherence.validate()?;
        if self.coherence.n_c > self.grid.n {
            return Err(Error::config("coherence block is wider than the grid"));
        }
        if self.num_aps == 0 || self.num_ues == 0 {
            return Err(Error::config("need at least one AP and one UE"));
        }
        for (name, g) in [("gamma_ap", self.gamma_ap), ("gamma_ue", self.gamma_ue)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if !(self.power_w > 0.0 && self.power_w.is_finite()) {
            return Err(Error::config("transmit power must be positive"));
        }
        if let Some(s) = self.noise_power {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("noise power must be positive"));
            }
        }
        if self.eval_subcarrier >= self.coherence.n_c {
            return Err(Error::config(
                "evaluation subcarrier must lie in coherence block 0",
            ));
        }
        if let BetaModel::Uniform { value } = self.beta_model {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config("uniform gain must be positive"));
            }
        }
        if self.trials == 0 || self.realizations == 0 {
            return Err(Error::config("trials and realizations must be positive"));
        }
        PilotPlan::build(&self.coherence, self.pattern, self.num_ues)?;
        Ok(())
    }

    /// Noise power per sample: -174 dBm/Hz + 10 log10(W) + noise figure, in watts.
    pub fn sigma2(&self) -> f64 {
        self.noise_power.unwrap_or_else(|| {
            let dbm =
                NOISE_DENSITY_DBM_HZ + 10.0 * self.grid.bandwidth().log10() + self.noise_figure_db;
            10f64.powf((dbm - 30.0) / 10.0)
        })
    }

    pub fn power(&self, _ue: usize) -> f64 {
        self.power_w
    }

    pub fn pilot_plan(&self) -> Result<PilotPlan> {
        PilotPlan::build(&self.coherence, self.pattern, self.num_ues)
    }

    pub fn num_blocks(&self) -> usize {
        self.coherence.num_blocks(self.grid.n)
    }

    /// Number of distinct AP oscillators.
    pub fn num_ap_oscillators(&self) -> usize {
        match self.lo_mode {
            LoMode::Separate => self.num_aps,
            LoMode::Shared => 1,
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(s)?;
        file.resolve()
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }
}

/// On-disk configuration. Every field is optional and overrides the chosen
/// preset (scenario1 at desk size when nothing is given).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    /// Use the full-size preset instead of the desk-size one.
    pub full: Option<bool>,
    pub grid: Option<GridSection>,
    pub coherence: Option<CoherenceSection>,
    pub pilots: Option<PilotSection>,
    pub scenario: Option<ScenarioSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<usize>,
    pub n_cp: Option<usize>,
    pub delta_f: Option<f64>,
    pub f_c: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSection {
    pub n_c: Option<usize>,
    pub tau_c: Option<usize>,
    pub tau_p: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSection {
    pub pattern: Option<PilotPattern>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub num_aps: Option<usize>,
    pub num_ues: Option<usize>,
    pub lo_mode: Option<LoMode>,
    pub gamma_ap: Option<f64>,
    pub gamma_ue: Option<f64>,
    pub power_w: Option<f64>,
    pub noise_figure_db: Option<f64>,
    pub noise_power: Option<f64>,
    pub ap_layout: Option<ApLayout>,
    pub ue_layout: Option<UeLayout>,
    pub beta_model: Option<BetaModel>,
    pub cp_in_lag: Option<LagConvention>,
    pub data_modulation: Option<DataModulation>,
    pub eval_subcarrier: Option<usize>,
    pub trials: Option<usize>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let preset: Preset = self.preset.as_deref().unwrap_or("scenario1").parse()?;
        let mut c = if self.full.unwrap_or(false) {
            ScenarioConfig::preset(preset)
        } else {
            ScenarioConfig::desk(preset)
        };
        if let Some(g) = &self.grid {
            set(&mut c.grid.n, g.n);
            set(&mut c.grid.n_cp, g.n_cp);
            set(&mut c.grid.delta_f, g.delta_f);
            set(&mut c.grid.f_c, g.f_c);
        }
        if let Some(g) = &self.coherence {
            set(&mut c.coherence.n_c, g.n_c);
            set(&mut c.coherence.tau_c, g.tau_c);
            set(&mut c.coherence.tau_p, g.tau_p);
        }
        if let Some(p) = &self.pilots {
            set(&mut c.pattern, p.pattern);
        }
        if let Some(s) = &self.scenario {
            set(&mut c.num_aps, s.num_aps);
            set(&mut c.num_ues, s.num_ues);
            set(&mut c.lo_mode, s.lo_mode);
            set(&mut c.gamma_ap, s.gamma_ap);
            set(&mut c.gamma_ue, s.gamma_ue);
            set(&mut c.power_w, s.power_w);
            set(&mut c.noise_figure_db, s.noise_figure_db);
            if s.noise_power.is_some() {
                c.noise_power = s.noise_power;
            }
            set(&mut c.ap_layout, s.ap_layout);
            set(&mut c.ue_layout, s.ue_layout);
            set(&mut c.beta_model, s.beta_model);
            set(&mut c.cp_in_lag, s.cp_in_lag);
            set(&mut c.data_modulation, s.data_modulation);
            set(&mut c.eval_subcarrier, s.eval_subcarrier);
            set(&mut c.trials, s.trials);
            set(&mut c.realizations, s.realizations);
            set(&mut c.seed, s.seed);
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}
