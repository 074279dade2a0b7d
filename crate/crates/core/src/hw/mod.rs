//! The virtual neuromorphic machine: resource limits, fixed-point
//! arithmetic, per-core random number generation and the memory cost model.

mod fixed;
mod lfsr;
mod memory;
mod neuron;

pub use fixed::{FixedPointSpec, Rounding};
pub use lfsr::{core_seed, LfsrState, Probability, LFSR_TAPS};
pub use memory::{memory_cost, write_memory_csv, CoreContents, MemoryReport, AXON_IN_BYTES, ROUTE_BYTES, SYNAPSE_BYTES};
pub use neuron::{FixedState, NeuronProgram};

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum HwError {
    #[error("invalid hardware configuration: {0}")]
    Config(String),
    #[error("parameter {name} = {value} does not fit the fixed-point format")]
    Overflow { name: &'static str, value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

/// Limits of the virtual machine. Every field is configurable; the axon
/// program cap and byte reserve are stand-ins for unpublished values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    pub cores_per_chip: usize,
    pub syn_mem_bytes: usize,
    pub axon_prog_max_entries: usize,
    pub spike_buffer_reserve_bytes: usize,
    pub counters_per_chip: usize,
    pub payload_counters_per_chip: usize,
    /// Dendritic accumulator ring length in timesteps.
    pub accum_depth: usize,
    /// Signed width of each accumulator slot.
    pub accum_bits: u32,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            cores_per_chip: 120,
            syn_mem_bytes: 128 * 1024,
            axon_prog_max_entries: 65536,
            spike_buffer_reserve_bytes: 8192,
            counters_per_chip: 992,
            payload_counters_per_chip: 224,
            accum_depth: 32,
            accum_bits: 24,
        }
    }
}

impl HardwareConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HwError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HwError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HwError> {
        let fields = [
            ("cores_per_chip", self.cores_per_chip),
            ("syn_mem_bytes", self.syn_mem_bytes),
            ("axon_prog_max_entries", self.axon_prog_max_entries),
            ("spike_buffer_reserve_bytes", self.spike_buffer_reserve_bytes),
            ("counters_per_chip", self.counters_per_chip),
            ("payload_counters_per_chip", self.payload_counters_per_chip),
            ("accum_depth", self.accum_depth),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(HwError::Config(format!("{name} must be positive")));
        }
        if !(2..=32).contains(&self.accum_bits) {
            return Err(HwError::Config(format!("accum_bits must be in [2, 32], got {}", self.accum_bits)));
        }
        if self.payload_counters_per_chip > self.counters_per_chip {
            return Err(HwError::Config("more payload counters than counters".into()));
        }
        if self.payload_counters_per_chip < self.cores_per_chip {
            return Err(HwError::Config(format!(
                "one payload counter per core needs {} payload counters per chip, have {}",
                self.cores_per_chip, self.payload_counters_per_chip
            )));
        }
        Ok(())
    }

    /// The accumulator ring must hold a spike for its full delay.
    pub fn check_delay(&self, delay_steps: u32) -> Result<(), HwError> {
        if self.accum_depth < delay_steps as usize + 1 {
            return Err(HwError::Config(format!(
                "accum_depth {} too short for a {delay_steps}-step delay",
                self.accum_depth
            )));
        }
        Ok(())
    }

    pub fn accum_max(&self) -> i32 {
        ((1i64 << (self.accum_bits - 1)) - 1) as i32
    }

    pub fn accum_min(&self) -> i32 {
        (-(1i64 << (self.accum_bits - 1))) as i32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = HardwareConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.syn_mem_bytes, 131072);
        assert_eq!(cfg.accum_max(), (1 << 23) - 1);
        assert_eq!(cfg.accum_min(), -(1 << 23));
    }

    #[test]
    fn parses_partial_toml() {
        let cfg = HardwareConfig::from_toml_str("cores_per_chip = 4\npayload_counters_per_chip = 8\n").unwrap();
        assert_eq!(cfg.cores_per_chip, 4);
        assert_eq!(cfg.syn_mem_bytes, 131072);
    }

    #[test]
    fn rejects_unknown_and_zero() {
        assert!(HardwareConfig::from_toml_str("cores = 4").is_err());
        assert!(HardwareConfig::from_toml_str("syn_mem_bytes = 0").is_err());
    }

    #[test]
    fn delay_needs_depth() {
        let cfg = HardwareConfig { accum_depth: 18, ..Default::default() };
        assert!(cfg.check_delay(18).is_err());
        assert!(HardwareConfig { accum_depth: 19, ..cfg }.check_delay(18).is_ok());
    }
}
