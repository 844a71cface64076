//! Experiment configuration: a TOML tree with `include = [...]` for shared
//! blocks. Included files are merged first (in order), then the including
//! file overrides them key by key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::SweepAxis;
use crate::circuit::TrotterOrder;
use crate::error::{Error, Result};
use crate::experiment::{leading_ones, NoiseProtocol, NoisySites, ShockNoise, ShockPlan};
use crate::hilbert::{SiteSubset, SubsetRole};
use crate::metrology::MetricKind;
use crate::spinmodel::{CouplingParams, ThermalMode, XxTerm};

const MAX_INCLUDE_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    SectorExact,
    Circuit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub length: usize,
    pub up_count: usize,
}

impl Default for Lattice {
    fn default() -> Self {
        Self { length: 24, up_count: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Couplings {
    pub j: f64,
    pub j_perp: f64,
    pub j_prime: f64,
    pub j_prime_perp: f64,
    pub xx_term: XxTerm,
}

impl Default for Couplings {
    fn default() -> Self {
        let p = CouplingParams::default();
        Self {
            j: p.j,
            j_perp: p.j_perp,
            j_prime: p.j_prime,
            j_prime_perp: p.j_prime_perp,
            xx_term: p.xx_term,
        }
    }
}

impl Couplings {
    pub fn params(&self) -> CouplingParams {
        CouplingParams {
            j: self.j,
            j_perp: self.j_perp,
            j_prime: self.j_prime,
            j_prime_perp: self.j_prime_perp,
            xx_term: self.xx_term,
        }
    }
}

/// Bitmask written as an integer or a `"0b..."` / `"0x..."` string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pattern {
    Int(u64),
    Text(String),
}

impl Pattern {
    pub fn mask(&self) -> Result<u64> {
        match self {
            Pattern::Int(v) => Ok(*v),
            Pattern::Text(s) => {
                let t = s.trim().replace('_', "");
                let parsed = if let Some(b) = t.strip_prefix("0b") {
                    u64::from_str_radix(b, 2)
                } else if let Some(h) = t.strip_prefix("0x") {
                    u64::from_str_radix(h, 16)
                } else {
                    t.parse()
                };
                parsed.map_err(|_| Error::Config(format!("bad bit pattern {s:?}")))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub pattern: Option<Pattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub t_max: f64,
    pub n_steps: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            t_max: 20.0,
            n_steps: crate::dynamics::DEFAULT_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindName {
    #[default]
    Haar,
    PhaseFlip,
    Pauli,
}

/// One noise protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise {
    pub kind: NoiseKindName,
    /// Phase-flip probability.
    pub p: Option<f64>,
    pub strings: Vec<String>,
    pub probs: Vec<f64>,
    /// Fixed noisy sites; when absent, `random_sites` are drawn per seed.
    pub sites: Option<Vec<usize>>,
    pub random_sites: usize,
    pub first_step: usize,
    pub count: usize,
    pub label: Option<String>,
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            kind: NoiseKindName::Haar,
            p: None,
            strings: Vec::new(),
            probs: Vec::new(),
            sites: None,
            random_sites: 3,
            first_step: crate::dynamics::DEFAULT_SHOCK_STEP,
            count: 1,
            label: None,
        }
    }
}

impl Noise {
    pub fn shock_noise(&self) -> Result<ShockNoise> {
        Ok(match self.kind {
            NoiseKindName::Haar => ShockNoise::Haar,
            NoiseKindName::PhaseFlip => ShockNoise::PhaseFlip {
                p: self.p.ok_or_else(|| Error::Config("phase_flip noise needs p".into()))?,
            },
            NoiseKindName::Pauli => ShockNoise::Pauli {
                strings: self.strings.clone(),
                probs: self.probs.clone(),
            },
        })
    }

    pub fn protocol(&self) -> Result<NoiseProtocol> {
        let sites = match &self.sites {
            Some(s) => NoisySites::Fixed { sites: s.clone() },
            None => NoisySites::Random { count: self.random_sites },
        };
        Ok(NoiseProtocol::new(
            self.shock_noise()?,
            sites,
            ShockPlan {
                first_step: self.first_step,
                count: self.count,
            },
        ))
    }

    pub fn label(&self) -> Result<String> {
        if let Some(l) = &self.label {
            return Ok(l.clone());
        }
        let kind = if self.count > 1 { "cascade" } else { "shock" };
        Ok(format!("{kind}:{}", self.shock_noise()?.label()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiPair {
    pub label: String,
    pub n: Vec<usize>,
    pub t: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Subsets {
    /// Test subset; default: the last three sites.
    pub test: Option<Vec<usize>>,
    pub mi: Vec<MiPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Metrics {
    pub list: Vec<MetricKind>,
    /// Metric whose series is fitted.
    pub fit: MetricKind,
    pub thermal_mode: ThermalModeName,
}

impl Default for Metrics {
    fn default() -> Self {
        Self {
            list: vec![MetricKind::TraceDist, MetricKind::RelEntropy, MetricKind::OneMinusFidelity],
            fit: MetricKind::TraceDist,
            thermal_mode: ThermalModeName::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalModeName {
    #[default]
    Exact,
    Local,
}

impl From<ThermalModeName> for ThermalMode {
    fn from(m: ThermalModeName) -> Self {
        match m {
            ThermalModeName::Exact => ThermalMode::Exact,
            ThermalModeName::Local => ThermalMode::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub master: u64,
    pub count: usize,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { master: 0, count: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/default") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitConfig {
    pub qubits: usize,
    /// Default: smallest count with every angle at most 0.5 rad.
    pub n_steps: Option<usize>,
    pub noise_p: f64,
    pub n_traj: usize,
    pub order: TrotterOrder,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            qubits: 12,
            n_steps: None,
            noise_p: 0.01,
            n_traj: 500,
            order: TrotterOrder::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub dos_points: usize,
    pub bandwidth: Option<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { dos_points: 400, bandwidth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    pub lattice: Lattice,
    pub couplings: Couplings,
    pub initial: Initial,
    pub schedule: Schedule,
    pub noise: Noise,
    /// Further protocols compared against the same plain run.
    pub extra_noise: Vec<Noise>,
    pub subsets: Subsets,
    pub metrics: Metrics,
    pub seeds: Seeds,
    pub output: Output,
    pub circuit: CircuitConfig,
    pub sweep: Option<SweepConfig>,
    pub spectrum: SpectrumConfig,
}

impl ExperimentConfig {
    /// Reads `path`, resolves includes and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let table = load_table(path, 0)?;
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        if table.remove("include").is_some() {
            return Err(Error::Config("include needs a file path to resolve against".into()));
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> CouplingParams {
        self.couplings.params()
    }

    pub fn length(&self) -> usize {
        match self.mode {
            Mode::SectorExact => self.lattice.length,
            Mode::Circuit => self.circuit.qubits,
        }
    }

    pub fn pattern(&self) -> Result<u64> {
        match &self.initial.pattern {
            Some(p) => p.mask(),
            None => Ok(leading_ones(self.lattice.up_count)),
        }
    }

    pub fn test_subset(&self) -> Result<SiteSubset> {
        let l = self.length();
        match &self.subsets.test {
            Some(sites) => SiteSubset::new(sites.clone(), SubsetRole::Test, l),
            None => SiteSubset::tail(3.min(l), SubsetRole::Test, l),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seeds.count as u64).map(|i| self.seeds.master.wrapping_add(i)).collect()
    }

    pub fn noise_variants(&self) -> Vec<&Noise> {
        std::iter::once(&self.noise).chain(&self.extra_noise).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let l = self.length();
        if self.lattice.up_count > self.lattice.length {
            return bad(format!(
                "lattice.up_count = {} exceeds lattice.length = {}",
                self.lattice.up_count, self.lattice.length
            ));
        }
        if !(2..=crate::hilbert::MAX_LENGTH).contains(&self.lattice.length) {
            return bad(format!("lattice.length = {} outside [2, 63]", self.lattice.length));
        }
        self.params().validate()?;
        let mask = self.pattern()?;
        if l < 64 && mask >> l != 0 {
            return bad(format!("initial.pattern {mask:#b} wider than {l} sites"));
        }
        if self.mode == Mode::SectorExact && mask.count_ones() as usize != self.lattice.up_count {
            return bad(format!(
                "initial.pattern {mask:#b} has {} up spins, lattice.up_count = {}",
                mask.count_ones(),
                self.lattice.up_count
            ));
        }
        if !(self.schedule.t_max.is_finite() && self.schedule.t_max > 0.0) {
            return bad(format!("schedule.t_max = {} must be positive", self.schedule.t_max));
        }
        if self.schedule.n_steps == 0 {
            return bad("schedule.n_steps must be at least 1".into());
        }
        for (i, n) in self.noise_variants().into_iter().enumerate() {
            let at = if i == 0 { "noise".to_string() } else { format!("extra_noise[{}]", i - 1) };
            if n.count > 0 && n.first_step + n.count > self.schedule.n_steps {
                return bad(format!(
                    "{at}: {} shocks from step {} do not fit in {} steps",
                    n.count, n.first_step, self.schedule.n_steps
                ));
            }
            if let Some(p) = n.p {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("{at}.p = {p} outside [0, 1]"));
                }
            }
            match &n.sites {
                Some(s) => {
                    SiteSubset::new(s.clone(), SubsetRole::Noisy, l).map_err(|e| Error::Config(format!("{at}.sites: {e}")))?;
                }
                None if n.random_sites == 0 || n.random_sites > l => {
                    return bad(format!("{at}.random_sites = {} outside [1, {l}]", n.random_sites));
                }
                None => {}
            }
            n.shock_noise().map_err(|e| Error::Config(format!("{at}: {e}")))?;
        }
        self.test_subset().map_err(|e| Error::Config(format!("subsets.test: {e}")))?;
        for pair in &self.subsets.mi {
            SiteSubset::new(pair.n.clone(), SubsetRole::Noisy, l).map_err(|e| Error::Config(format!("mi {}: {e}", pair.label)))?;
            SiteSubset::new(pair.t.clone(), SubsetRole::Test, l).map_err(|e| Error::Config(format!("mi {}: {e}", pair.label)))?;
        }
        if self.seeds.count == 0 {
            return bad("seeds.count must be at least 1".into());
        }
        if self.mode == Mode::Circuit {
            let c = &self.circuit;
            if !(2..=20).contains(&c.qubits) {
                return bad(format!("circuit.qubits = {} outside [2, 20]", c.qubits));
            }
            if !(0.0..=1.0).contains(&c.noise_p) {
                return bad(format!("circuit.noise_p = {} outside [0, 1]", c.noise_p));
            }
            if c.n_traj == 0 || c.n_steps == Some(0) {
                return bad("circuit.n_traj and circuit.n_steps must be positive".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.grid.is_empty() {
                return bad("sweep.grid is empty".into());
            }
        }
        if self.spectrum.dos_points < 2 {
            return bad("spectrum.dos_points must be at least 2".into());
        }
        Ok(())
    }
}

fn load_table(path: &Path, depth: usize) -> Result<toml::Table> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(Error::Config(format!("include depth exceeds {MAX_INCLUDE_DEPTH} at {}", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(toml::Value::String(s)) => vec![s],
        Some(toml::Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(Error::Config(format!("include entries must be strings, got {other}"))),
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(Error::Config(format!("include must be a string or list, got {other}"))),
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut merged = toml::Table::new();
    for inc in includes {
        merge(&mut merged, load_table(&dir.join(inc), depth + 1)?);
    }
    merge(&mut merged, table);
    Ok(merged)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_reference_experiment() {
        let c = ExperimentConfig::from_toml_str("name = \"x\"").unwrap();
        assert_eq!(c.lattice.length, 24);
        assert_eq!(c.pattern().unwrap(), 0b111);
        assert_eq!(c.test_subset().unwrap().sites(), &[23, 22, 21]);
        assert_eq!(c.seeds().len(), 10);
        assert_eq!(c.schedule.n_steps, 50);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "[lattice]\nlength = 4\nup_count = 5",
            "[schedule]\nt_max = -1.0",
            "[noise]\nkind = \"phase_flip\"",
            "[noise]\nkind = \"phase_flip\"\np = 1.5",
            "[noise]\nsites = [1, 1]",
            "[noise]\nfirst_step = 49\ncount = 3",
            "bogus = 1",
            "[initial]\npattern = \"0b1111\"",
            "[metrics]\nlist = [\"nope\"]",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn patterns_parse() {
        assert_eq!(Pattern::Text("0b1_01".into()).mask().unwrap(), 5);
        assert_eq!(Pattern::Text("0x7".into()).mask().unwrap(), 7);
        assert_eq!(Pattern::Int(3).mask().unwrap(), 3);
        assert!(Pattern::Text("0bz".into()).mask().is_err());
    }

    #[test]
    fn includes_merge_with_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("shared")).unwrap();
        std::fs::write(
            dir.path().join("shared/lattice.toml"),
            "[lattice]\nlength = 10\nup_count = 2\n[couplings]\nj_perp = 0.25\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("run.toml"),
            "include = [\"shared/lattice.toml\"]\nname = \"r\"\n[couplings]\nj = 2.0\n",
        )
        .unwrap();
        let c = ExperimentConfig::load(&dir.path().join("run.toml")).unwrap();
        assert_eq!(c.lattice.length, 10);
        assert_eq!(c.couplings.j, 2.0);
        assert_eq!(c.couplings.j_perp, 0.25);
        assert_eq!(c.pattern().unwrap(), 0b11);
        let again = ExperimentConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn include_cycles_are_caught() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.toml"), "include = \"b.toml\"").unwrap();
        std::fs::write(dir.path().join("b.toml"), "include = \"a.toml\"").unwrap();
        assert!(ExperimentConfig::load(&dir.path().join("a.toml")).is_err());
    }
}
