//! Binary machine container, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "NMAPMACH"
//! version      u32
//! scheme       u8       0 = shared_synaptic_delivery, 1 = shared_axon_routing
//! config_hash  32 bytes SHA-256 of scheme byte + metadata
//! meta_len     u32
//! metadata     JSON {hw, program, n_neurons}
//! n_cores      u32
//! per core:
//!   n_neurons u32, neuron ids [u32]
//!   n_axons u32, axon offsets [u32; n_axons + 1]
//!   n_synapses u32, synapses [(weight i32, delay u32, target u32)]
//!   route offsets [u32; n_neurons + 1]
//!   n_routes u32, routes [(chip u32, core u32, axon u32)]
//! checksum     32 bytes SHA-256 of everything above
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AxonAddr, CompileError, CompiledMachine, CompressionScheme, CoreTable, Partitioning, Synapse};
use crate::hw::{HardwareConfig, NeuronProgram};

pub const CONTAINER_MAGIC: &[u8; 8] = b"NMAPMACH";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    hw: HardwareConfig,
    program: NeuronProgram,
    n_neurons: usize,
}

fn config_hash(scheme: CompressionScheme, meta: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update([scheme.code()]);
    h.update(meta);
    h.finalize().into()
}

impl CompiledMachine {
    /// Hash of the scheme, hardware limits and neuron program.
    pub fn config_hash(&self) -> [u8; 32] {
        let meta = serde_json::to_vec(&Meta { hw: self.hw.clone(), program: self.program, n_neurons: self.n_neurons() })
            .expect("metadata serializes");
        config_hash(self.scheme, &meta)
    }

    pub fn config_hash_hex(&self) -> String {
        self.config_hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn put(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_len(buf: &mut Vec<u8>, n: usize) -> Result<(), CompileError> {
    let n = u32::try_from(n).map_err(|_| CompileError::Container(format!("table of {n} entries too large")))?;
    put(buf, n);
    Ok(())
}

pub fn write_machine<W: Write>(m: &CompiledMachine, out: &mut W) -> Result<(), CompileError> {
    let meta = serde_json::to_vec(&Meta { hw: m.hw.clone(), program: m.program, n_neurons: m.n_neurons() })
        .map_err(|e| CompileError::Container(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CONTAINER_MAGIC);
    put(&mut buf, CONTAINER_VERSION);
    buf.push(m.scheme.code());
    buf.extend_from_slice(&config_hash(m.scheme, &meta));
    put_len(&mut buf, meta.len())?;
    buf.extend_from_slice(&meta);
    put_len(&mut buf, m.cores.len())?;
    for t in &m.cores {
        put_len(&mut buf, t.neurons.len())?;
        t.neurons.iter().for_each(|&v| put(&mut buf, v));
        put_len(&mut buf, t.n_axons())?;
        let axon_offsets: &[u32] = if t.axon_offsets.is_empty() { &[0] } else { &t.axon_offsets };
        axon_offsets.iter().for_each(|&v| put(&mut buf, v));
        put_len(&mut buf, t.synapses.len())?;
        for s in &t.synapses {
            buf.extend_from_slice(&s.weight.to_le_bytes());
            put(&mut buf, s.delay);
            put(&mut buf, s.target);
        }
        t.route_offsets.iter().for_each(|&v| put(&mut buf, v));
        put_len(&mut buf, t.routes.len())?;
        for r in &t.routes {
            put(&mut buf, r.chip);
            put(&mut buf, r.core);
            put(&mut buf, r.axon);
        }
    }
    let sum: [u8; 32] = Sha256::digest(&buf).into();
    out.write_all(&buf)?;
    out.write_all(&sum)?;
    Ok(())
}

pub fn save_machine(m: &CompiledMachine, path: impl AsRef<Path>) -> Result<(), CompileError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_machine(m, &mut out)?;
    out.flush()?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CompileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| CompileError::Container(format!("truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CompileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, CompileError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// A length whose `width`-byte elements must still fit in the input.
    fn len(&mut self, width: usize) -> Result<usize, CompileError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(width) > self.data.len() - self.pos {
            return Err(CompileError::Container(format!("length {n} at byte {} exceeds input", self.pos - 4)));
        }
        Ok(n)
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, CompileError> {
        (0..n).map(|_| self.u32()).collect()
    }
}

pub fn read_machine<R: Read>(input: &mut R) -> Result<CompiledMachine, CompileError> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    if data.len() < 32 + CONTAINER_MAGIC.len() {
        return Err(CompileError::Container("file too short".into()));
    }
    let (body, sum) = data.split_at(data.len() - 32);
    if &body[..8] != CONTAINER_MAGIC {
        return Err(CompileError::Container("not a machine container".into()));
    }
    let actual: [u8; 32] = Sha256::digest(body).into();
    if actual != sum {
        return Err(CompileError::Container("checksum mismatch".into()));
    }
    let mut c = Cursor { data: body, pos: 8 };
    let version = c.u32()?;
    if version != CONTAINER_VERSION {
        return Err(CompileError::Container(format!("unsupported version {version}")));
    }
    let code = c.take(1)?[0];
    let scheme = CompressionScheme::from_code(code).ok_or_else(|| CompileError::Container(format!("unknown scheme {code}")))?;
    let hash = c.take(32)?;
    let meta_len = c.len(1)?;
    let meta_bytes = c.take(meta_len)?;
    if config_hash(scheme, meta_bytes) != hash {
        return Err(CompileError::Container("config hash mismatch".into()));
    }
    let meta: Meta = serde_json::from_slice(meta_bytes).map_err(|e| CompileError::Container(e.to_string()))?;
    meta.hw.validate()?;

    let n_cores = c.len(16)?;
    let mut cores = Vec::with_capacity(n_cores);
    for k in 0..n_cores {
        let bad = |what: &str| CompileError::Container(format!("core {k}: {what}"));
        let n = c.len(8)?;
        let neurons = c.u32s(n)?;
        let n_axons = c.len(4)?;
        let axon_offsets = c.u32s(n_axons + 1)?;
        let n_syn = c.len(12)?;
        let mut synapses = Vec::with_capacity(n_syn);
        for _ in 0..n_syn {
            synapses.push(Synapse { weight: c.i32()?, delay: c.u32()?, target: c.u32()? });
        }
        let route_offsets = c.u32s(n + 1)?;
        let n_routes = c.len(12)?;
        let mut routes = Vec::with_capacity(n_routes);
        for _ in 0..n_routes {
            routes.push(AxonAddr { chip: c.u32()?, core: c.u32()?, axon: c.u32()? });
        }
        let monotone = |o: &[u32], end: usize| o[0] == 0 && o.windows(2).all(|w| w[0] <= w[1]) && *o.last().unwrap() as usize == end;
        if !monotone(&axon_offsets, n_syn) {
            return Err(bad("axon offsets inconsistent"));
        }
        if !monotone(&route_offsets, n_routes) {
            return Err(bad("route offsets inconsistent"));
        }
        if synapses.iter().any(|s| s.target as usize >= n) {
            return Err(bad("synapse target out of range"));
        }
        cores.push(CoreTable { neurons, axon_offsets, synapses, route_offsets, routes });
    }
    if c.pos != body.len() {
        return Err(CompileError::Container("trailing bytes".into()));
    }
    let groups: Vec<Vec<u32>> = cores.iter().map(|t| t.neurons.clone()).collect();
    let partitioning = Partitioning::from_groups(meta.n_neurons, &groups, meta.hw.cores_per_chip)?;
    if partitioning.n_cores() != cores.len() {
        return Err(CompileError::Container("core count is not a whole number of chips".into()));
    }
    for (k, t) in cores.iter().enumerate() {
        if partitioning.core_neurons(k) != t.neurons.as_slice() {
            return Err(CompileError::Container(format!("core {k}: neurons not in ascending order")));
        }
    }
    Ok(CompiledMachine { scheme, hw: meta.hw, program: meta.program, partitioning, cores })
}

pub fn load_machine(path: impl AsRef<Path>) -> Result<CompiledMachine, CompileError> {
    read_machine(&mut File::open(path)?)
}
