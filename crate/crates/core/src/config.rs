//! Experiment configuration, loaded from TOML.
//!
//! ```toml
//! scheme = "shared_axon_routing"
//! dt_ms = 0.1
//! duration_ms = 1000.0
//! trials = 10
//! seed = 1
//!
//! [paths]
//! connectome = "graph.csv"
//! machine = "machine.bin"
//! out_dir = "out"
//!
//! [stimulus]
//! targets = [0, 1, 2]
//! rate_hz = 150.0
//! ```
//!
//! Every section and key is optional. Command-line flags override values
//! read from the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compiler::{CapacitySpec, CompressionScheme};
use crate::connectome::{DEFAULT_DELAY_MS, DEFAULT_WEIGHT_SCALE_MV};
use crate::hw::HardwareConfig;
use crate::reference::{NeuronParams, StimulusSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub connectome: Option<PathBuf>,
    pub machine: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub scheme: CompressionScheme,
    pub capacities: CapacitySpec,
    pub hardware: HardwareConfig,
    pub neuron: NeuronParams,
    pub stimulus: StimulusSpec,
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub trials: usize,
    /// Trial `k` runs with seed `seed + k`.
    pub seed: u64,
    pub delay_ms: f64,
    pub weight_scale_mv: f64,
    pub weight_bits: u32,
    /// Sampling cap on per-neuron fan-in applied before compilation.
    pub fan_in_cap: Option<usize>,
    pub active_threshold_hz: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            scheme: CompressionScheme::SharedAxonRouting,
            capacities: CapacitySpec::default(),
            hardware: HardwareConfig::default(),
            neuron: NeuronParams::default(),
            stimulus: StimulusSpec::none(),
            dt_ms: 0.1,
            duration_ms: 1000.0,
            trials: 10,
            seed: 0,
            delay_ms: DEFAULT_DELAY_MS,
            weight_scale_mv: DEFAULT_WEIGHT_SCALE_MV,
            weight_bits: 9,
            fan_in_cap: None,
            active_threshold_hz: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: String| ConfigError::Invalid(e);
        self.capacities.validate().map_err(|e| inv(e.to_string()))?;
        self.hardware.validate().map_err(|e| inv(e.to_string()))?;
        self.neuron.validate().map_err(|e| inv(e.to_string()))?;
        if !(self.dt_ms > 0.0 && self.duration_ms >= 0.0) {
            return Err(inv(format!("bad timing: dt {} ms, duration {} ms", self.dt_ms, self.duration_ms)));
        }
        if self.trials == 0 {
            return Err(inv("trials must be at least 1".into()));
        }
        if !(self.active_threshold_hz >= 0.0) {
            return Err(inv("active_threshold_hz must be non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml_string().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::StimulusMode;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::from_toml_str(
            "scheme = \"shared_synaptic_delivery\"\ntrials = 3\n[stimulus]\ntargets = [1, 2]\nrate_hz = 150.0\nmode = \"conductance_only\"\n[capacities]\nmax_neurons_per_core = 100\n",
        )
        .unwrap();
        assert_eq!(c.scheme, CompressionScheme::SharedSynapticDelivery);
        assert_eq!(c.trials, 3);
        assert_eq!(c.stimulus.mode, StimulusMode::ConductanceOnly);
        assert_eq!(c.stimulus.amplitude_mv, 8.0);
        assert_eq!(c.capacities.max_neurons_per_core, 100);
        assert_eq!(c.capacities.full_threshold_fraction, 0.02);
        assert_eq!(c.neuron, NeuronParams::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ExperimentConfig::from_toml_str("speed = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("trials = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[neuron]\nvth = -1.0\n").is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let mut c = ExperimentConfig { seed: 9, ..Default::default() };
        c.paths.connectome = Some("g.csv".into());
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(ExperimentConfig::default().hash(), c.hash());
    }
}
