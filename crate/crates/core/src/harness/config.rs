use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::TrainConfig;
use crate::analytics::{check_feasibility, Formulas};
use crate::channel::{ChannelError, ChannelParams};
use crate::env::{ActionSpace, EnvConfig, RewardSign};
use crate::model::{ModelError, Source, SystemModel};
use crate::units::{dbm_to_watts, Dimension, Quantity, UnitError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("field `{field}`: {source}")]
    Unit { field: &'static str, source: UnitError },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Analytics(#[from] crate::analytics::AnalyticsError),
}

fn q(s: &str) -> Quantity {
    s.parse().expect("valid default quantity")
}

/// Physical scenario. Every dimensional field carries its unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub devices: usize,
    /// Per-device update rate.
    pub arrival_rate: Quantity,
    /// Traffic scenario value; the packet size is `traffic * bits_per_traffic_unit`.
    pub traffic: f64,
    pub bits_per_traffic_unit: f64,
    pub bandwidth: Quantity,
    pub noise_density: Quantity,
    pub tx_power: Quantity,
    pub uplink_distance: Quantity,
    pub downlink_distance: Quantity,
    pub path_loss_exponent: f64,
    pub fade_floor: f64,
    pub edge_capacity: Quantity,
    pub fog_capacity: Quantity,
    pub processed_ratio: f64,
    pub slots: u32,
    pub slot_duration: Quantity,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            devices: 2,
            arrival_rate: q("1 /s"),
            traffic: 40.0,
            bits_per_traffic_unit: 250.0,
            bandwidth: q("100 kHz"),
            noise_density: q("-174 dBm/Hz"),
            tx_power: q("1 W"),
            uplink_distance: q("3 km"),
            downlink_distance: q("10 km"),
            path_loss_exponent: 3.0,
            fade_floor: crate::channel::DEFAULT_FADE_FLOOR,
            edge_capacity: q("300 kbps"),
            fog_capacity: q("150 kbps"),
            processed_ratio: 0.2,
            slots: 10,
            slot_duration: q("1 s"),
        }
    }
}

fn si(field: &'static str, value: &Quantity, dim: Dimension) -> Result<f64, ConfigError> {
    value
        .expect(&[dim])
        .map_err(|source| ConfigError::Unit { field, source })
}

impl SystemConfig {
    pub fn packet_bits(&self) -> f64 {
        self.traffic * self.bits_per_traffic_unit
    }

    fn check_units(&self) -> Result<(), ConfigError> {
        use Dimension::*;
        si("arrival_rate", &self.arrival_rate, EventRate)?;
        si("bandwidth", &self.bandwidth, Frequency)?;
        si("noise_density", &self.noise_density, PowerDensity)?;
        si("tx_power", &self.tx_power, Power)?;
        si("uplink_distance", &self.uplink_distance, Length)?;
        si("downlink_distance", &self.downlink_distance, Length)?;
        si("edge_capacity", &self.edge_capacity, BitRate)?;
        si("fog_capacity", &self.fog_capacity, BitRate)?;
        si("slot_duration", &self.slot_duration, Time)?;
        Ok(())
    }

    pub fn build(&self) -> Result<SystemModel, ConfigError> {
        self.check_units()?;
        if self.devices == 0 {
            return Err(ConfigError::Invalid("devices must be at least 1".into()));
        }
        if !(self.traffic > 0.0 && self.bits_per_traffic_unit > 0.0) {
            return Err(ConfigError::Invalid(
                "traffic and bits_per_traffic_unit must be positive".into(),
            ));
        }
        let bits = self.packet_bits();
        let bw = self.bandwidth.value;
        let noise = self.noise_density.value * bw;
        let link = |d: &Quantity| -> Result<ChannelParams, ConfigError> {
            Ok(ChannelParams::new(bw, self.tx_power.value, noise, d.value, self.path_loss_exponent)?
                .with_fade_floor(self.fade_floor)?)
        };
        let uplink = link(&self.uplink_distance)?;
        let m = SystemModel {
            sources: (0..self.devices)
                .map(|_| Source {
                    arrival_rate: self.arrival_rate.value,
                    packet_bits: bits,
                    uplink,
                })
                .collect(),
            edge_rate: self.edge_capacity.value / bits,
            fog_rate: self.fog_capacity.value / bits,
            downlink: link(&self.downlink_distance)?,
            processed_ratio: self.processed_ratio,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    Dueling,
    Plain,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Dueling => "dueling",
            Method::Plain => "plain",
            Method::Random => "random",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Method::Dueling | Method::Plain)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    Devices,
    Slots,
    Traffic,
    TxPowerDbm,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Devices => "devices",
            SweepParameter::Slots => "slots",
            SweepParameter::Traffic => "traffic",
            SweepParameter::TxPowerDbm => "tx-power-dbm",
        }
    }

    pub fn figure_file(self) -> &'static str {
        match self {
            SweepParameter::Devices => "fig6_devices.csv",
            SweepParameter::Slots => "fig7_slots.csv",
            SweepParameter::Traffic => "fig8_packets.csv",
            SweepParameter::TxPowerDbm => "fig9_power.csv",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParameter::Devices => (2..=10).map(f64::from).collect(),
            SweepParameter::Slots => (1..=10).map(f64::from).collect(),
            SweepParameter::Traffic => vec![10.0, 20.0, 40.0, 60.0, 80.0],
            SweepParameter::TxPowerDbm => (1..=8).map(|k| f64::from(10 * k)).collect(),
        }
    }

    /// Expected direction of the analytic curve: `1` nondecreasing, `-1` nonincreasing.
    pub fn expected_trend(self) -> i8 {
        match self {
            SweepParameter::TxPowerDbm => -1,
            _ => 1,
        }
    }

    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig, ConfigError> {
        let mut s = base.clone();
        let whole = |v: f64| -> Result<u64, ConfigError> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(ConfigError::Invalid(format!(
                    "{} sweep needs positive integers, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            SweepParameter::Devices => s.devices = whole(value)? as usize,
            SweepParameter::Slots => {
                s.slots = u32::try_from(whole(value)?)
                    .map_err(|_| ConfigError::Invalid(format!("slot count {value} too large")))?
            }
            SweepParameter::Traffic => s.traffic = value,
            SweepParameter::TxPowerDbm => s.tx_power = Quantity::new(dbm_to_watts(value), Dimension::Power),
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaMode {
    #[default]
    Normative,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub episodes: u32,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { episodes: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub monte_carlo_samples: u64,
    pub des_packets: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            monte_carlo_samples: 1_000_000,
            des_packets: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    /// Independent runs per seed.
    pub replications: u32,
    pub methods: Vec<Method>,
    pub formulas: FormulaMode,
    pub reward_sign: RewardSign,
    pub action_space: ActionSpace,
    pub system: SystemConfig,
    pub sweep: Option<SweepConfig>,
    pub agent: TrainConfig,
    pub evaluation: EvaluationConfig,
    pub validation: ValidationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seeds: vec![1],
            replications: 1,
            methods: vec![Method::Analytic],
            formulas: FormulaMode::Normative,
            reward_sign: RewardSign::Negative,
            action_space: ActionSpace::Shared,
            system: SystemConfig::default(),
            sweep: None,
            agent: TrainConfig::default(),
            evaluation: EvaluationConfig::default(),
            validation: ValidationConfig::default(),
        }
    }
}

/// A validated experiment together with non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub warnings: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<LoadedConfig, ConfigError> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse {
                path: origin.to_path_buf(),
                source: Box::new(e),
            })?;
        if let Some(sweep) = &mut config.sweep {
            if sweep.values.is_empty() {
                sweep.values = sweep.parameter.default_values();
            }
        }
        let warnings = config.validate()?;
        Ok(LoadedConfig { config, warnings })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Structural checks; stability problems are returned as warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("at least one method is required".into()));
        }
        if self.replications == 0 || self.evaluation.episodes == 0 {
            return Err(ConfigError::Invalid(
                "replications and evaluation episodes must be positive".into(),
            ));
        }
        self.agent
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let model = self.system.build()?;
        let mut warnings = Vec::new();
        for c in check_feasibility(&model, &crate::quadrature::QuadratureSettings::default())? {
            if !c.satisfied {
                warnings.push(format!(
                    "base scenario violates {} (slack {:.4})",
                    c.constraint, c.slack
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            for &v in &sweep.values {
                sweep.parameter.apply(&self.system, v)?;
            }
        }
        Ok(warnings)
    }

    pub fn formulas(&self) -> Formulas {
        match self.formulas {
            FormulaMode::Normative => Formulas::default(),
            FormulaMode::Literal => Formulas::literal(),
        }
    }

    pub fn env_config(&self, system: &SystemConfig) -> Result<EnvConfig, ConfigError> {
        let mut cfg = EnvConfig::new(system.build()?, system.slots);
        cfg.slot_duration = system.slot_duration.value;
        cfg.reward_sign = self.reward_sign;
        cfg.action_space = self.action_space;
        Ok(cfg)
    }

    /// Seeds actually run: each configured seed expanded by the replication count.
    pub fn run_seeds(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for &s in &self.seeds {
            out.push(s);
            for r in 1..self.replications {
                out.push(crate::seed::derive(s, crate::seed::streams::REPLICATION, u64::from(r)));
            }
        }
        out
    }

    /// Short SHA-256 digest of the normalized configuration.
    pub fn spec_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml(&text, path)
}
