//! Maps a connectome onto the cores of the virtual machine and builds the
//! per-core synaptic delivery and axon routing tables.

mod build;
mod container;
mod partition;

pub use build::{build_routing, flatten, memory_reports, validate_machine, AxonAddr, CompiledMachine, CoreTable, Synapse, ValidationReport};
pub use container::{load_machine, read_machine, save_machine, write_machine, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use partition::{partition_greedy, CapacitySpec, Partitioning};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::connectome::{Connectome, ConnectomeError};
use crate::hw::{HwError, MemoryReport};

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("neuron {neuron} does not fit an empty core: {condition} needs {needed}, capacity {capacity}")]
    Infeasible { neuron: u32, condition: &'static str, needed: usize, capacity: usize },
    #[error("{} core(s) exceed memory limits, first at chip {} core {}", .0.len(), .0[0].chip, .0[0].core)]
    Memory(Vec<MemoryReport>),
    #[error("weight {weight} on edge {src}->{dst} does not fit {bits} bits")]
    WeightRange { src: u32, dst: u32, weight: i32, bits: u32 },
    #[error("invalid capacities: {0}")]
    Capacity(String),
    #[error("partitioning does not match the connectome: {0}")]
    Partition(String),
    #[error("machine container: {0}")]
    Container(String),
    #[error(transparent)]
    Hw(#[from] HwError),
    #[error(transparent)]
    Connectome(#[from] ConnectomeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionScheme {
    /// One axon per unique source on each receiving core; an inbound spike
    /// fans out to all of that source's local targets.
    SharedSynapticDelivery,
    /// One axon per (local target, weight); sources sharing a weight onto
    /// a target share the axon, and each sender emits its full fan-out.
    SharedAxonRouting,
}

impl CompressionScheme {
    pub const ALL: [Self; 2] = [Self::SharedSynapticDelivery, Self::SharedAxonRouting];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::SharedSynapticDelivery => "shared_synaptic_delivery",
            Self::SharedAxonRouting => "shared_axon_routing",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            Self::SharedSynapticDelivery => 0,
            Self::SharedAxonRouting => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Self::SharedSynapticDelivery),
            1 => Some(Self::SharedAxonRouting),
            _ => None,
        }
    }
}

impl fmt::Display for CompressionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompressionScheme {
    type Err = CompileError;
    fn from_str(s: &str) -> Result<Self, CompileError> {
        match s {
            "delivery" | "shared_synaptic_delivery" => Ok(Self::SharedSynapticDelivery),
            "routing" | "shared_axon_routing" => Ok(Self::SharedAxonRouting),
            _ => Err(CompileError::Capacity(format!("unknown scheme '{s}' (expected delivery or routing)"))),
        }
    }
}

/// In-connections that occupy memory on the neuron's core: every in-edge
/// under delivery sharing, distinct in-weights under routing sharing.
pub fn effective_fan_in(neuron: usize, c: &Connectome, scheme: CompressionScheme) -> usize {
    let (_, w) = c.in_edges(neuron);
    match scheme {
        CompressionScheme::SharedSynapticDelivery => w.len(),
        CompressionScheme::SharedAxonRouting => distinct_count(w),
    }
}

/// [`effective_fan_in`] for every neuron.
pub fn effective_fan_ins(c: &Connectome, scheme: CompressionScheme) -> Vec<u32> {
    (0..c.n_neurons()).map(|i| effective_fan_in(i, c, scheme) as u32).collect()
}

/// Messages one spike of `neuron` sends: distinct receiving cores under
/// delivery sharing, raw fan-out under routing sharing.
pub fn effective_fan_out(neuron: usize, c: &Connectome, p: &Partitioning, scheme: CompressionScheme) -> usize {
    let targets: Vec<u32> = c.edges().filter(|e| e.src as usize == neuron).map(|e| e.dst).collect();
    fan_out_of(&targets, p, scheme)
}

/// [`effective_fan_out`] for every neuron.
pub fn effective_fan_outs(c: &Connectome, p: &Partitioning, scheme: CompressionScheme) -> Vec<u32> {
    let out = c.out_adjacency();
    (0..c.n_neurons()).map(|i| fan_out_of(out.targets(i).0, p, scheme) as u32).collect()
}

fn fan_out_of(targets: &[u32], p: &Partitioning, scheme: CompressionScheme) -> usize {
    match scheme {
        CompressionScheme::SharedSynapticDelivery => {
            targets.iter().map(|&t| p.core_of(t as usize)).collect::<HashSet<_>>().len()
        }
        CompressionScheme::SharedAxonRouting => targets.len(),
    }
}

fn distinct_count(w: &[i32]) -> usize {
    let mut v = w.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectome::Edge;

    #[test]
    fn fan_in_counts_distinct_weights() {
        let w = [1, 1, -2, 1, -2];
        let edges = w.iter().enumerate().map(|(i, &w)| Edge::new(i as u32 + 1, 0, w));
        let c = Connectome::from_edges(6, edges).unwrap();
        assert_eq!(effective_fan_in(0, &c, CompressionScheme::SharedAxonRouting), 2);
        assert_eq!(effective_fan_in(0, &c, CompressionScheme::SharedSynapticDelivery), 5);
    }

    #[test]
    fn fan_out_counts_cores() {
        let c = Connectome::from_edges(11, (1..=10).map(|t| Edge::new(0, t, 1))).unwrap();
        let p = Partitioning::from_groups(11, &[vec![0], (1..=10).collect()], 120).unwrap();
        assert_eq!(effective_fan_out(0, &c, &p, CompressionScheme::SharedSynapticDelivery), 1);
        assert_eq!(effective_fan_out(0, &c, &p, CompressionScheme::SharedAxonRouting), 10);
        assert_eq!(effective_fan_outs(&c, &p, CompressionScheme::SharedSynapticDelivery)[0], 1);
    }

    #[test]
    fn scheme_names_parse() {
        for s in CompressionScheme::ALL {
            assert_eq!(s.as_str().parse::<CompressionScheme>().unwrap(), s);
        }
        assert_eq!("routing".parse::<CompressionScheme>().unwrap(), CompressionScheme::SharedAxonRouting);
        assert!("both".parse::<CompressionScheme>().is_err());
    }
}
