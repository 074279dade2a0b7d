use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CompileError, CompressionScheme, Partitioning};
use crate::connectome::{Connectome, Edge};
use crate::hw::{memory_cost, CoreContents, HardwareConfig, MemoryReport, NeuronProgram};

/// Width of a stored weight, sign included.
pub const WEIGHT_BITS: u32 = 9;

/// One synaptic delivery entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Synapse {
    pub weight: i32,
    pub delay: u32,
    /// Local index of the target on the receiving core.
    pub target: u32,
}

/// Destination of one spike message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AxonAddr {
    pub chip: u32,
    pub core: u32,
    pub axon: u32,
}

/// Tables resident on one core.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoreTable {
    /// Global ids of the local neurons, by local index.
    pub neurons: Vec<u32>,
    /// Delivery list of axon `a` is `synapses[axon_offsets[a]..axon_offsets[a + 1]]`.
    pub axon_offsets: Vec<u32>,
    pub synapses: Vec<Synapse>,
    /// Out-routing of local neuron `l` is `routes[route_offsets[l]..route_offsets[l + 1]]`.
    pub route_offsets: Vec<u32>,
    pub routes: Vec<AxonAddr>,
}

impl CoreTable {
    pub fn n_axons(&self) -> usize {
        self.axon_offsets.len().saturating_sub(1)
    }

    pub fn delivery(&self, axon: usize) -> &[Synapse] {
        &self.synapses[self.axon_offsets[axon] as usize..self.axon_offsets[axon + 1] as usize]
    }

    pub fn routes_of(&self, local: usize) -> &[AxonAddr] {
        &self.routes[self.route_offsets[local] as usize..self.route_offsets[local + 1] as usize]
    }

    pub fn contents(&self) -> CoreContents {
        CoreContents {
            neurons: self.neurons.len(),
            synaptic_entries: self.synapses.len(),
            axons_in: self.n_axons(),
            routing_entries: self.routes.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledMachine {
    pub scheme: CompressionScheme,
    pub hw: HardwareConfig,
    /// Shared by every neuron; initial state is its rest state.
    pub program: NeuronProgram,
    pub partitioning: Partitioning,
    /// Indexed by flat core number.
    pub cores: Vec<CoreTable>,
}

impl CompiledMachine {
    pub fn n_neurons(&self) -> usize {
        self.partitioning.n_neurons()
    }

    pub fn flat_core(&self, chip: u32, core: u32) -> usize {
        chip as usize * self.hw.cores_per_chip + core as usize
    }

    pub fn n_routing_entries(&self) -> usize {
        self.cores.iter().map(|t| t.routes.len()).sum()
    }

    pub fn n_synapses(&self) -> usize {
        self.cores.iter().map(|t| t.synapses.len()).sum()
    }
}

/// Per-core memory accounting of a built machine.
pub fn memory_reports(m: &CompiledMachine) -> Vec<MemoryReport> {
    m.cores
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (chip, core) = m.partitioning.split(k);
            memory_cost(chip, core, t.contents(), &m.hw)
        })
        .collect()
}

/// Builds the tables of every core. Axon indices are dense per core, in
/// ascending source order under delivery sharing and ascending
/// (local target, weight) under routing sharing. Each neuron's routes are
/// sorted by destination.
pub fn build_routing(
    c: &Connectome,
    p: &Partitioning,
    scheme: CompressionScheme,
    cfg: &HardwareConfig,
    program: NeuronProgram,
) -> Result<CompiledMachine, CompileError> {
    cfg.validate()?;
    cfg.check_delay(program.delay_steps)?;
    if p.n_neurons() != c.n_neurons() {
        return Err(CompileError::Partition(format!(
            "partitioning covers {} neurons, connectome has {}",
            p.n_neurons(),
            c.n_neurons()
        )));
    }
    if p.cores_per_chip() != cfg.cores_per_chip {
        return Err(CompileError::Partition(format!(
            "partitioning uses {} cores per chip, hardware has {}",
            p.cores_per_chip(),
            cfg.cores_per_chip
        )));
    }
    let (lo, hi) = (-(1i32 << (WEIGHT_BITS - 1)), (1i32 << (WEIGHT_BITS - 1)) - 1);
    if let Some(e) = c.edges().find(|e| e.weight < lo || e.weight > hi) {
        return Err(CompileError::WeightRange { src: e.src, dst: e.dst, weight: e.weight, bits: WEIGHT_BITS });
    }
    let delay = program.delay_steps;

    // Receiving side, one core at a time. Each core also reports the
    // (source, axon) pairs that senders must route to.
    let receivers: Vec<(CoreTable, Vec<(u32, u32)>)> = (0..p.n_cores())
        .into_par_iter()
        .map(|k| {
            let neurons = p.core_neurons(k).to_vec();
            let mut incoming: Vec<(u32, u32, i32)> = Vec::new();
            for (l, &dst) in neurons.iter().enumerate() {
                let (s, w) = c.in_edges(dst as usize);
                incoming.extend(s.iter().zip(w).map(|(&src, &wt)| (src, l as u32, wt)));
            }
            let mut t = CoreTable { neurons, axon_offsets: vec![0], ..Default::default() };
            let mut senders = Vec::with_capacity(incoming.len());
            match scheme {
                CompressionScheme::SharedSynapticDelivery => {
                    incoming.sort_unstable_by_key(|&(src, l, _)| (src, l));
                    for (i, &(src, l, w)) in incoming.iter().enumerate() {
                        if i > 0 && incoming[i - 1].0 != src {
                            t.axon_offsets.push(t.synapses.len() as u32);
                        }
                        if i == 0 || incoming[i - 1].0 != src {
                            senders.push((src, t.axon_offsets.len() as u32 - 1));
                        }
                        t.synapses.push(Synapse { weight: w, delay, target: l });
                    }
                    if !incoming.is_empty() {
                        t.axon_offsets.push(t.synapses.len() as u32);
                    }
                }
                CompressionScheme::SharedAxonRouting => {
                    incoming.sort_unstable_by_key(|&(src, l, w)| (l, w, src));
                    for (i, &(src, l, w)) in incoming.iter().enumerate() {
                        let new_axon = i == 0 || (incoming[i - 1].1, incoming[i - 1].2) != (l, w);
                        if new_axon {
                            t.synapses.push(Synapse { weight: w, delay, target: l });
                            t.axon_offsets.push(t.synapses.len() as u32);
                        }
                        senders.push((src, t.axon_offsets.len() as u32 - 2));
                    }
                }
            }
            (t, senders)
        })
        .collect();

    // Sending side: gather every neuron's destinations.
    let mut routes_of: Vec<Vec<AxonAddr>> = vec![Vec::new(); c.n_neurons()];
    for (k, (_, senders)) in receivers.iter().enumerate() {
        let (chip, core) = p.split(k);
        for &(src, axon) in senders {
            routes_of[src as usize].push(AxonAddr { chip: chip as u32, core: core as u32, axon });
        }
    }
    let mut cores: Vec<CoreTable> = receivers.into_iter().map(|(t, _)| t).collect();
    for t in cores.iter_mut() {
        t.route_offsets = Vec::with_capacity(t.neurons.len() + 1);
        t.route_offsets.push(0);
        for &nid in &t.neurons {
            let r = &mut routes_of[nid as usize];
            r.sort_unstable();
            t.routes.extend_from_slice(r);
            t.route_offsets.push(t.routes.len() as u32);
        }
    }

    let m = CompiledMachine { scheme, hw: cfg.clone(), program, partitioning: p.clone(), cores };
    let over: Vec<MemoryReport> = memory_reports(&m).into_iter().filter(|r| !r.is_valid()).collect();
    if !over.is_empty() {
        return Err(CompileError::Memory(over));
    }
    Ok(m)
}

/// Every (source, target, weight) realized by a route entry and the
/// delivery list it addresses, sorted by (target, source).
pub fn flatten(m: &CompiledMachine) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(m.n_synapses());
    for t in &m.cores {
        for (l, &src) in t.neurons.iter().enumerate() {
            for r in t.routes_of(l) {
                let Some(dest) = m.cores.get(m.flat_core(r.chip, r.core)) else { continue };
                if r.axon as usize >= dest.n_axons() {
                    continue;
                }
                for s in dest.delivery(r.axon as usize) {
                    if let Some(&dst) = dest.neurons.get(s.target as usize) {
                        edges.push(Edge::new(src, dst, s.weight));
                    }
                }
            }
        }
    }
    edges.sort_unstable_by_key(|e| (e.dst, e.src, e.weight));
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    /// Edges of the connectome the machine does not realize, as (src, dst).
    pub missing: Vec<(u32, u32)>,
    /// Realized edges absent from the connectome or realized more than once.
    pub unexpected: Vec<(u32, u32)>,
    /// Edges realized with the wrong weight, as (src, dst, expected, found).
    pub weight_mismatch: Vec<(u32, u32, i32, i32)>,
    /// Route entries pointing at nonexistent cores or axons.
    pub dangling_routes: usize,
    /// Axons no route entry addresses, as (flat core, axon).
    pub unused_axons: Vec<(usize, u32)>,
    pub over_limit: Vec<MemoryReport>,
    pub mean_utilization: f64,
}

impl ValidationReport {
    /// One line per problem class, for diagnostics.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(&(s, d)) = self.missing.first() {
            out.push(format!("{} missing edge(s), first {s}->{d}", self.missing.len()));
        }
        if let Some(&(s, d)) = self.unexpected.first() {
            out.push(format!("{} unexpected edge(s), first {s}->{d}", self.unexpected.len()));
        }
        if let Some(&(s, d, a, b)) = self.weight_mismatch.first() {
            out.push(format!("{} weight mismatch(es), first {s}->{d} expected {a} found {b}", self.weight_mismatch.len()));
        }
        if self.dangling_routes > 0 {
            out.push(format!("{} dangling route entries", self.dangling_routes));
        }
        if let Some(&(k, a)) = self.unused_axons.first() {
            out.push(format!("{} unaddressed axon(s), first core {k} axon {a}", self.unused_axons.len()));
        }
        if let Some(r) = self.over_limit.first() {
            out.push(format!("{} core(s) over limits, first chip {} core {}", self.over_limit.len(), r.chip, r.core));
        }
        out
    }
}

/// Recomputes everything the builder promises: each edge realized exactly
/// once with its weight, dense addressed axons, and per-core limits.
pub fn validate_machine(m: &CompiledMachine, c: &Connectome) -> ValidationReport {
    let mut dangling_routes = 0;
    let mut addressed: Vec<Vec<bool>> = m.cores.iter().map(|t| vec![false; t.n_axons()]).collect();
    for t in &m.cores {
        for r in &t.routes {
            let k = m.flat_core(r.chip, r.core);
            match addressed.get_mut(k).and_then(|a| a.get_mut(r.axon as usize)) {
                Some(flag) => *flag = true,
                None => dangling_routes += 1,
            }
        }
    }
    let unused_axons = addressed
        .iter()
        .enumerate()
        .flat_map(|(k, a)| a.iter().enumerate().filter(|(_, &f)| !f).map(move |(i, _)| (k, i as u32)))
        .collect();

    let mut expected: HashMap<(u32, u32), i32> = c.edges().map(|e| ((e.src, e.dst), e.weight)).collect();
    let mut unexpected = Vec::new();
    let mut weight_mismatch = Vec::new();
    for e in flatten(m) {
        match expected.remove(&(e.src, e.dst)) {
            Some(w) if w == e.weight => {}
            Some(w) => weight_mismatch.push((e.src, e.dst, w, e.weight)),
            None => unexpected.push((e.src, e.dst)),
        }
    }
    let mut missing: Vec<(u32, u32)> = expected.into_keys().collect();
    missing.sort_unstable();

    let reports = memory_reports(m);
    let used = m.partitioning.n_used_cores().max(1);
    let mean_utilization = reports[..used].iter().map(|r| r.utilization).sum::<f64>() / used as f64;
    let over_limit: Vec<MemoryReport> = reports.into_iter().filter(|r| !r.is_valid()).collect();
    let passed = missing.is_empty()
        && unexpected.is_empty()
        && weight_mismatch.is_empty()
        && dangling_routes == 0
        && over_limit.is_empty();
    ValidationReport {
        passed: passed && addressed.iter().all(|a| a.iter().all(|&f| f)),
        missing,
        unexpected,
        weight_mismatch,
        dangling_routes,
        unused_axons,
        over_limit,
        mean_utilization,
    }
}
