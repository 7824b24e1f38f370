//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 42
//!
//! [kernel]
//! kind = "lsr"      # or "lse"
//! b = 3.41          # fixed b = N·beta_net across the grid (LSR only)
//! # beta_net = 1.0  # or a fixed beta_net
//!
//! [schedule]
//! alphas = { start = 0.01, stop = 0.55, step = 0.01 }
//! temps = [0.25, 0.5, 1.0]
//! m_cap = 20000
//!
//! [trial]
//! n_eq = 4096
//! n_samp = 1024
//! ```
//!
//! Every section and key is optional except `[kernel]`; unknown keys are
//! rejected. A run manifest written by the CLI embeds the effective
//! configuration under `[config]` and is accepted wherever a configuration
//! file is.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{KernelKind, KernelSpec};
use crate::error::{Error, Result};
use crate::oracle::DensityOfStates;
use crate::sampler::TrialProtocol;
use crate::scan::{grid_by_step, GridKernel, ScanOptions, ScanSchedule, Sharpness, DEFAULT_MEMORY_BUDGET, DEFAULT_THRESHOLD_FRACTION};

fn config_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {msg}"))
}

/// An explicit list of values or an inclusive `start..=stop` range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        GridSpec::Range(RangeSpec { start, stop, step })
    }

    pub fn values(&self, key: &str) -> Result<Vec<f64>> {
        let v = match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Range(r) => grid_by_step(r.start, r.stop, r.step).map_err(|e| config_err(key, e))?,
        };
        if v.is_empty() {
            return Err(config_err(key, "grid is empty"));
        }
        if v.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(config_err(key, "grid must be strictly increasing"));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_net: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    KernelSpec::DEFAULT_EPSILON
}

impl KernelSection {
    pub fn grid_kernel(&self) -> Result<GridKernel> {
        let sharpness = match (self.kind, self.beta_net, self.b) {
            (_, Some(_), Some(_)) => return Err(config_err("kernel", "set either `beta_net` or `b`, not both")),
            (KernelKind::Lse, _, Some(_)) => return Err(config_err("kernel.b", "fixed b applies to LSR kernels only")),
            (KernelKind::Lse, beta, None) => Sharpness::BetaNet(beta.unwrap_or(1.0)),
            (KernelKind::Lsr, Some(beta), None) => Sharpness::BetaNet(beta),
            (KernelKind::Lsr, None, Some(b)) => Sharpness::B(b),
            (KernelKind::Lsr, None, None) => return Err(config_err("kernel", "LSR needs `beta_net` or `b`")),
        };
        let (key, value) = match sharpness {
            Sharpness::BetaNet(v) => ("kernel.beta_net", v),
            Sharpness::B(v) => ("kernel.b", v),
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(config_err(key, format!("must be positive and finite, got {value}")));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(config_err("kernel.epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        Ok(GridKernel { kind: self.kind, sharpness, epsilon: self.epsilon })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub alphas: GridSpec,
    pub temps: GridSpec,
    pub m_min: usize,
    pub m_max: usize,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_cap: Option<usize>,
    pub ntr_max: usize,
    pub ntr_min: usize,
    pub share_patterns: bool,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = ScanSchedule::default();
        Self {
            alphas: GridSpec::range(0.01, 0.55, 0.01),
            temps: GridSpec::range(0.025, 2.0, 0.05),
            m_min: s.m_min,
            m_max: s.m_max,
            gamma: s.gamma,
            m_cap: None,
            ntr_max: s.ntr_max,
            ntr_min: s.ntr_min,
            share_patterns: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSection {
    pub n_eq: usize,
    pub n_samp: usize,
    pub phi_init_min: f64,
    pub phi_init_max: f64,
}

impl Default for TrialSection {
    fn default() -> Self {
        let p = TrialProtocol::default();
        Self { n_eq: p.n_eq, n_samp: p.n_samp, phi_init_min: p.phi_init_range.0, phi_init_max: p.phi_init_range.1 }
    }
}

impl TrialSection {
    pub fn protocol(&self) -> Result<TrialProtocol> {
        let p = TrialProtocol { n_eq: self.n_eq, n_samp: self.n_samp, phi_init_range: (self.phi_init_min, self.phi_init_max) };
        if self.n_samp == 0 {
            return Err(config_err("trial.n_samp", "must be at least 1"));
        }
        p.validate().map_err(|e| config_err("trial.phi_init_min/phi_init_max", e))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Byte count with an optional unit, e.g. `"8GB"` or `"512 MiB"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memory_budget: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub threshold_fraction: f64,
    pub density_of_states: DensityOfStates,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self { threshold_fraction: DEFAULT_THRESHOLD_FRACTION, density_of_states: DensityOfStates::default() }
    }
}

/// Parameters of the `trial` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleSection {
    pub n: usize,
    pub m: usize,
    pub temperature: f64,
}

/// Parameters of the `oracle` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temps: Option<GridSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub kernel: KernelSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub trial: TrialSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single: Option<SingleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
}

/// Parses `"8GB"`, `"512 MiB"`, `"1000000"` and the like.
pub fn parse_byte_size(s: &str) -> Result<u64> {
    let bytes = s
        .trim()
        .parse::<bytesize::ByteSize>()
        .map_err(|e| Error::Config(format!("bad memory budget `{s}`: {e}")))?
        .as_u64();
    if bytes == 0 {
        return Err(Error::Config(format!("memory budget `{s}` must be positive")));
    }
    Ok(bytes)
}

impl Config {
    /// A configuration with every section at its default and the given kernel.
    pub fn with_kernel(kernel: KernelSection) -> Self {
        Self {
            seed: 0,
            kernel,
            schedule: ScheduleSection::default(),
            trial: TrialSection::default(),
            run: RunSection::default(),
            classify: ClassifySection::default(),
            single: None,
            oracle: None,
        }
    }

    /// Parses a configuration, or the `[config]` table of a run manifest.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let config: Config = if table.contains_key("manifest_version") {
            let inner = table
                .get("config")
                .and_then(|v| v.as_table())
                .ok_or_else(|| Error::Config("manifest has no [config] table".into()))?;
            let text = toml::to_string(inner).map_err(|e| Error::Config(e.to_string()))?;
            toml::from_str(&text).map_err(|e: toml::de::Error| Error::Config(format!("in manifest [config]: {e}")))?
        } else {
            toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.grid_kernel()?;
        self.schedule()?;
        self.trial.protocol()?;
        self.memory_budget()?;
        if self.run.workers == Some(0) {
            return Err(config_err("run.workers", "must be at least 1"));
        }
        let t = self.classify.threshold_fraction;
        if !(t > 0.0) || !t.is_finite() {
            return Err(config_err("classify.threshold_fraction", format!("must be positive, got {t}")));
        }
        if let Some(s) = &self.single {
            if s.n < 2 {
                return Err(config_err("single.n", "must be at least 2"));
            }
            if s.m < 1 {
                return Err(config_err("single.m", "must be at least 1"));
            }
            if !(s.temperature > 0.0) || !s.temperature.is_finite() {
                return Err(config_err("single.temperature", "must be positive"));
            }
        }
        if let Some(o) = &self.oracle {
            if o.n < 2 {
                return Err(config_err("oracle.n", "must be at least 2"));
            }
            self.oracle_temps()?;
        }
        Ok(())
    }

    pub fn grid_kernel(&self) -> Result<GridKernel> {
        self.kernel.grid_kernel()
    }

    pub fn memory_budget(&self) -> Result<u64> {
        self.run
            .memory_budget
            .as_deref()
            .map_or(Ok(DEFAULT_MEMORY_BUDGET), |s| parse_byte_size(s).map_err(|e| config_err("run.memory_budget", e)))
    }

    pub fn schedule(&self) -> Result<ScanSchedule> {
        let s = &self.schedule;
        let alpha_grid = s.alphas.values("schedule.alphas")?;
        if alpha_grid.iter().any(|&a| !(a > 0.0)) {
            return Err(config_err("schedule.alphas", "loads must be positive"));
        }
        let temp_grid = s.temps.values("schedule.temps")?;
        if temp_grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(config_err("schedule.temps", "temperatures must be positive and finite"));
        }
        if s.m_min < 2 {
            return Err(config_err("schedule.m_min", "must be at least 2"));
        }
        if s.m_max < s.m_min {
            return Err(config_err("schedule.m_max", format!("must be >= m_min = {}", s.m_min)));
        }
        if !(s.gamma > 0.0) || !s.gamma.is_finite() {
            return Err(config_err("schedule.gamma", format!("must be positive, got {}", s.gamma)));
        }
        if s.m_cap.is_some_and(|c| c < 2) {
            return Err(config_err("schedule.m_cap", "must be at least 2"));
        }
        if s.ntr_min < 1 {
            return Err(config_err("schedule.ntr_min", "must be at least 1"));
        }
        if s.ntr_max < s.ntr_min {
            return Err(config_err("schedule.ntr_max", format!("must be >= ntr_min = {}", s.ntr_min)));
        }
        let schedule = ScanSchedule {
            alpha_grid,
            temp_grid,
            m_min: s.m_min,
            m_max: s.m_max,
            gamma: s.gamma,
            m_cap: s.m_cap,
            ntr_max: s.ntr_max,
            ntr_min: s.ntr_min,
            memory_budget: self.memory_budget()?,
        };
        schedule.plan().map_err(|e| config_err("schedule", e))?;
        Ok(schedule)
    }

    pub fn scan_options(&self) -> Result<ScanOptions> {
        Ok(ScanOptions { protocol: self.trial.protocol()?, share_patterns: self.schedule.share_patterns })
    }

    /// Oracle temperatures: `[oracle] temps`, falling back to the schedule's.
    pub fn oracle_temps(&self) -> Result<Vec<f64>> {
        let values = match self.oracle.as_ref().and_then(|o| o.temps.as_ref()) {
            Some(g) => g.values("oracle.temps")?,
            None => self.schedule.temps.values("schedule.temps")?,
        };
        if values.iter().any(|&t| !(t > 0.0)) {
            return Err(config_err("oracle.temps", "temperatures must be positive"));
        }
        Ok(values)
    }
}
