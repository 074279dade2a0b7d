use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::HardwareConfig;

/// 9-bit weight, 6-bit delay, 12-bit local target index, 5 bits padding.
pub const SYNAPSE_BYTES: usize = 4;
/// Offset and length of one axon's delivery list.
pub const AXON_IN_BYTES: usize = 4;
/// Destination chip (8), core (8), axon index (16) and flags.
pub const ROUTE_BYTES: usize = 8;

/// Table sizes of one core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CoreContents {
    pub neurons: usize,
    pub synaptic_entries: usize,
    pub axons_in: usize,
    pub routing_entries: usize,
}

impl std::ops::Add for CoreContents {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            neurons: self.neurons + o.neurons,
            synaptic_entries: self.synaptic_entries + o.synaptic_entries,
            axons_in: self.axons_in + o.axons_in,
            routing_entries: self.routing_entries + o.routing_entries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub chip: usize,
    pub core: usize,
    pub contents: CoreContents,
    pub bytes_syn: usize,
    pub bytes_axon_in: usize,
    pub bytes_axon_out: usize,
    pub bytes_reserve: usize,
    pub total_bytes: usize,
    pub utilization: f64,
    pub over_memory: bool,
    pub over_axon_program: bool,
}

impl MemoryReport {
    pub fn is_valid(&self) -> bool {
        !self.over_memory && !self.over_axon_program
    }
}

/// Byte accounting for one core. Never fails; limit violations are flagged.
pub fn memory_cost(chip: usize, core: usize, contents: CoreContents, cfg: &HardwareConfig) -> MemoryReport {
    let bytes_syn = contents.synaptic_entries * SYNAPSE_BYTES;
    let bytes_axon_in = contents.axons_in * AXON_IN_BYTES;
    let bytes_axon_out = contents.routing_entries * ROUTE_BYTES;
    let bytes_reserve = cfg.spike_buffer_reserve_bytes;
    let total_bytes = bytes_syn + bytes_axon_in + bytes_axon_out + bytes_reserve;
    MemoryReport {
        chip,
        core,
        contents,
        bytes_syn,
        bytes_axon_in,
        bytes_axon_out,
        bytes_reserve,
        total_bytes,
        utilization: total_bytes as f64 / cfg.syn_mem_bytes as f64,
        over_memory: total_bytes > cfg.syn_mem_bytes,
        over_axon_program: contents.routing_entries > cfg.axon_prog_max_entries,
    }
}

/// `chip,core,bytes_syn,bytes_axon_in,bytes_axon_out,utilization`
pub fn write_memory_csv(reports: &[MemoryReport], path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "chip,core,bytes_syn,bytes_axon_in,bytes_axon_out,utilization")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            r.chip, r.core, r.bytes_syn, r.bytes_axon_in, r.bytes_axon_out, r.utilization
        )?;
    }
    out.flush()
}
