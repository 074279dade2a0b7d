use serde::{Deserialize, Serialize};

use super::{effective_fan_ins, CompileError, CompressionScheme};
use crate::connectome::Connectome;
use crate::hw::{HardwareConfig, AXON_IN_BYTES, ROUTE_BYTES, SYNAPSE_BYTES};

/// Per-core capacity conditions of the greedy partitioner. In and out
/// units are effective connection counts under the chosen scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitySpec {
    pub max_neurons_per_core: usize,
    pub max_in_units_per_core: usize,
    pub max_out_units_per_core: usize,
    /// A core is closed once any condition has less than this fraction of
    /// its capacity left.
    pub full_threshold_fraction: f64,
}

impl Default for CapacitySpec {
    fn default() -> Self {
        Self {
            // 12-bit local target index
            max_neurons_per_core: 4096,
            max_in_units_per_core: 30720,
            max_out_units_per_core: 65536,
            full_threshold_fraction: 0.02,
        }
    }
}

impl CapacitySpec {
    pub fn validate(&self) -> Result<(), CompileError> {
        if self.max_neurons_per_core == 0 || self.max_in_units_per_core == 0 || self.max_out_units_per_core == 0 {
            return Err(CompileError::Capacity("all capacities must be positive".into()));
        }
        if !(self.full_threshold_fraction > 0.0 && self.full_threshold_fraction < 1.0) {
            return Err(CompileError::Capacity(format!(
                "full_threshold_fraction must be in (0, 1), got {}",
                self.full_threshold_fraction
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, CompileError> {
        let cap: Self = toml::from_str(s).map_err(|e| CompileError::Capacity(e.to_string()))?;
        cap.validate()?;
        Ok(cap)
    }
}

/// Assignment of neurons to cores. Core `k` is core `k % cores_per_chip`
/// of chip `k / cores_per_chip`; within a core neurons keep ascending
/// global order, and the partition order lists cores one after another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitioning {
    core_of: Vec<u32>,
    local_of: Vec<u32>,
    order: Vec<u32>,
    offsets: Vec<usize>,
    cores_per_chip: usize,
}

impl Partitioning {
    /// Builds from explicit per-core neuron lists, padding the core count
    /// to whole chips.
    pub fn from_groups(n_neurons: usize, groups: &[Vec<u32>], cores_per_chip: usize) -> Result<Self, CompileError> {
        if cores_per_chip == 0 {
            return Err(CompileError::Partition("cores_per_chip must be positive".into()));
        }
        let n_cores = groups.len().div_ceil(cores_per_chip).max(1) * cores_per_chip;
        let mut core_of = vec![u32::MAX; n_neurons];
        let mut local_of = vec![0u32; n_neurons];
        let mut order = Vec::with_capacity(n_neurons);
        let mut offsets = Vec::with_capacity(n_cores + 1);
        offsets.push(0);
        for (k, g) in groups.iter().enumerate() {
            let mut sorted = g.clone();
            sorted.sort_unstable();
            for (l, &nid) in sorted.iter().enumerate() {
                let slot = core_of
                    .get_mut(nid as usize)
                    .ok_or_else(|| CompileError::Partition(format!("neuron {nid} out of range")))?;
                if *slot != u32::MAX {
                    return Err(CompileError::Partition(format!("neuron {nid} assigned twice")));
                }
                *slot = k as u32;
                local_of[nid as usize] = l as u32;
            }
            order.extend_from_slice(&sorted);
            offsets.push(order.len());
        }
        if let Some(i) = core_of.iter().position(|&k| k == u32::MAX) {
            return Err(CompileError::Partition(format!("neuron {i} is unassigned")));
        }
        offsets.resize(n_cores + 1, order.len());
        Ok(Self { core_of, local_of, order, offsets, cores_per_chip })
    }

    pub fn n_neurons(&self) -> usize {
        self.core_of.len()
    }

    /// Cores including the empty padding of the last chip.
    pub fn n_cores(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_used_cores(&self) -> usize {
        (0..self.n_cores()).rev().find(|&k| !self.core_neurons(k).is_empty()).map_or(0, |k| k + 1)
    }

    pub fn n_chips(&self) -> usize {
        self.n_cores() / self.cores_per_chip
    }

    pub fn cores_per_chip(&self) -> usize {
        self.cores_per_chip
    }

    /// Flat core index of a neuron.
    pub fn core_of(&self, neuron: usize) -> usize {
        self.core_of[neuron] as usize
    }

    pub fn local_of(&self, neuron: usize) -> usize {
        self.local_of[neuron] as usize
    }

    pub fn chip_core(&self, neuron: usize) -> (usize, usize) {
        self.split(self.core_of(neuron))
    }

    pub fn split(&self, flat_core: usize) -> (usize, usize) {
        (flat_core / self.cores_per_chip, flat_core % self.cores_per_chip)
    }

    /// Global ids on core `k`, ascending.
    pub fn core_neurons(&self, k: usize) -> &[u32] {
        &self.order[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Index of a neuron in partition order.
    pub fn position(&self, neuron: usize) -> usize {
        self.offsets[self.core_of(neuron)] + self.local_of(neuron)
    }

    /// Neurons in partition order.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Cumulative neuron count per core, starting at 0.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn groups(&self) -> Vec<Vec<u32>> {
        (0..self.n_cores()).map(|k| self.core_neurons(k).to_vec()).collect()
    }
}

/// Estimated load of one neuron. The in and out estimates are upper bounds
/// of what the built tables need, so a partition that fits here also fits
/// once compiled.
#[derive(Debug, Clone, Copy, Default)]
struct Load {
    neurons: usize,
    in_units: usize,
    out_units: usize,
    bytes: usize,
}

impl Load {
    fn add(&mut self, o: &Load) {
        self.neurons += o.neurons;
        self.in_units += o.in_units;
        self.out_units += o.out_units;
        self.bytes += o.bytes;
    }
}

struct Limits([(&'static str, usize); 4]);

impl Limits {
    fn values(l: &Load) -> [usize; 4] {
        [l.neurons, l.in_units, l.out_units, l.bytes]
    }

    fn first_violation(&self, l: &Load) -> Option<(&'static str, usize, usize)> {
        Self::values(l).iter().zip(&self.0).find(|(v, (_, cap))| *v > cap).map(|(&v, &(name, cap))| (name, v, cap))
    }

    fn exhausted(&self, l: &Load, fraction: f64) -> bool {
        Self::values(l).iter().zip(&self.0).any(|(&v, &(_, cap))| ((cap - v) as f64) < fraction * cap as f64)
    }
}

/// Greedy sweep in ascending neuron order: each neuron goes to the first
/// open core that can take it, or opens a new one.
pub fn partition_greedy(
    c: &Connectome,
    cap: &CapacitySpec,
    scheme: CompressionScheme,
    cfg: &HardwareConfig,
) -> Result<Partitioning, CompileError> {
    cap.validate()?;
    cfg.validate()?;
    let byte_cap = cfg.syn_mem_bytes.checked_sub(cfg.spike_buffer_reserve_bytes).filter(|&b| b > 0).ok_or_else(|| {
        CompileError::Capacity("spike buffer reserve leaves no synaptic memory".into())
    })?;
    let limits = Limits([
        ("neurons", cap.max_neurons_per_core),
        ("in units", cap.max_in_units_per_core),
        ("out units", cap.max_out_units_per_core.min(cfg.axon_prog_max_entries)),
        ("bytes", byte_cap),
    ]);

    let fan_in = effective_fan_ins(c, scheme);
    let out = c.out_adjacency();
    let mut groups: Vec<Vec<u32>> = Vec::new();
    let mut loads: Vec<Load> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for i in 0..c.n_neurons() {
        let need = Load {
            neurons: 1,
            in_units: fan_in[i] as usize,
            out_units: out.fan_out(i),
            bytes: fan_in[i] as usize * (SYNAPSE_BYTES + AXON_IN_BYTES) + out.fan_out(i) * ROUTE_BYTES,
        };
        if let Some((condition, needed, capacity)) = limits.first_violation(&need) {
            return Err(CompileError::Infeasible { neuron: i as u32, condition, needed, capacity });
        }
        let slot = open.iter().position(|&k| {
            let mut l = loads[k];
            l.add(&need);
            limits.first_violation(&l).is_none()
        });
        let k = match slot {
            Some(s) => open[s],
            None => {
                groups.push(Vec::new());
                loads.push(Load::default());
                open.push(groups.len() - 1);
                groups.len() - 1
            }
        };
        groups[k].push(i as u32);
        loads[k].add(&need);
        if limits.exhausted(&loads[k], cap.full_threshold_fraction) {
            open.retain(|&o| o != k);
        }
    }
    Partitioning::from_groups(c.n_neurons(), &groups, cfg.cores_per_chip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::effective_fan_in;
    use crate::connectome::{generate_synthetic, Edge, SynthSpec, WeightDist};

    #[test]
    fn neuron_cap_splits_in_order() {
        let c = Connectome::empty(4);
        let cap = CapacitySpec { max_neurons_per_core: 2, ..Default::default() };
        let p = partition_greedy(&c, &cap, CompressionScheme::SharedAxonRouting, &HardwareConfig::default()).unwrap();
        assert_eq!(p.core_neurons(0), &[0, 1]);
        assert_eq!(p.core_neurons(1), &[2, 3]);
        assert_eq!(p.n_cores(), 120);
        assert_eq!(p.n_used_cores(), 2);
        assert_eq!(p.chip_core(3), (0, 1));
    }

    #[test]
    fn rounds_up_to_whole_chips() {
        let c = Connectome::empty(9);
        let cap = CapacitySpec { max_neurons_per_core: 1, ..Default::default() };
        let cfg = HardwareConfig { cores_per_chip: 4, payload_counters_per_chip: 4, ..Default::default() };
        let p = partition_greedy(&c, &cap, CompressionScheme::SharedAxonRouting, &cfg).unwrap();
        assert_eq!((p.n_used_cores(), p.n_cores(), p.n_chips()), (9, 12, 3));
        assert_eq!(p.chip_core(5), (1, 1));
    }

    #[test]
    fn oversized_neuron_is_named() {
        let c = Connectome::from_edges(40, (1..40).map(|s| Edge::new(s, 0, 1))).unwrap();
        let cap = CapacitySpec { max_in_units_per_core: 10, ..Default::default() };
        match partition_greedy(&c, &cap, CompressionScheme::SharedSynapticDelivery, &HardwareConfig::default()) {
            Err(CompileError::Infeasible { neuron: 0, condition: "in units", needed: 39, capacity: 10 }) => {}
            other => panic!("{other:?}"),
        }
        // Under routing sharing the 39 equal weights collapse to one unit.
        assert!(partition_greedy(&c, &cap, CompressionScheme::SharedAxonRouting, &HardwareConfig::default()).is_ok());
    }

    #[test]
    fn first_fit_reuses_open_cores() {
        // Neuron 1 is too big to join core 0 next to neuron 0; neuron 2 is
        // small and goes back to core 0.
        let mut edges: Vec<Edge> = (3..13).map(|s| Edge::new(s, 0, 1)).collect();
        edges.extend((3..13).map(|s| Edge::new(s, 1, 1)));
        let c = Connectome::from_edges(13, edges).unwrap();
        let cap = CapacitySpec { max_in_units_per_core: 15, ..Default::default() };
        let p = partition_greedy(&c, &cap, CompressionScheme::SharedSynapticDelivery, &HardwareConfig::default()).unwrap();
        assert_eq!(p.core_of(0), 0);
        assert_eq!(p.core_of(1), 1);
        assert_eq!(p.core_of(2), 0);
        assert_eq!(p.position(2), 1);
        assert_eq!(p.position(1), p.offsets()[1]);
    }

    #[test]
    fn capacities_hold_on_every_core() {
        let c = generate_synthetic(&SynthSpec {
            n: 3000,
            mean_degree: 40,
            tail_exponent: 2.0,
            weights: WeightDist::Uniform { lo: -40, hi: 40 },
            seed: 3,
        })
        .unwrap();
        let cfg = HardwareConfig { syn_mem_bytes: 64 * 1024, ..Default::default() };
        let cap = CapacitySpec { max_neurons_per_core: 200, max_in_units_per_core: 5000, max_out_units_per_core: 4000, ..Default::default() };
        let out = c.out_adjacency();
        for scheme in CompressionScheme::ALL {
            let p = partition_greedy(&c, &cap, scheme, &cfg).unwrap();
            let mut seen = vec![false; c.n_neurons()];
            for k in 0..p.n_cores() {
                let ns = p.core_neurons(k);
                let fin: usize = ns.iter().map(|&i| effective_fan_in(i as usize, &c, scheme)).sum();
                let fout: usize = ns.iter().map(|&i| out.fan_out(i as usize)).sum();
                assert!(ns.len() <= 200 && fin <= 5000 && fout <= 4000);
                assert!(fin * 8 + fout * 8 + 8192 <= cfg.syn_mem_bytes);
                for &i in ns {
                    assert!(!std::mem::replace(&mut seen[i as usize], true));
                }
            }
            assert!(seen.iter().all(|&s| s));
            assert!(p.n_used_cores() > 1);
        }
    }

    #[test]
    fn groups_validated() {
        assert!(Partitioning::from_groups(3, &[vec![0, 1], vec![1, 2]], 4).is_err());
        assert!(Partitioning::from_groups(3, &[vec![0, 1]], 4).is_err());
        let p = Partitioning::from_groups(3, &[vec![2, 0], vec![1]], 4).unwrap();
        assert_eq!(p.order(), &[0, 2, 1]);
        assert_eq!(p.local_of(2), 1);
    }

    #[test]
    fn capacity_spec_validation() {
        assert!(CapacitySpec { full_threshold_fraction: 1.0, ..Default::default() }.validate().is_err());
        assert!(CapacitySpec { max_neurons_per_core: 0, ..Default::default() }.validate().is_err());
        let cap = CapacitySpec::from_toml_str("max_neurons_per_core = 512\n").unwrap();
        assert_eq!(cap.max_neurons_per_core, 512);
        assert!(CapacitySpec::from_toml_str("max_axons = 1\n").is_err());
    }
}
