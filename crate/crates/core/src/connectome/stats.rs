use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{Connectome, Result};

/// Exact per-neuron fan-in and fan-out counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeStats {
    pub fan_in: Vec<u32>,
    pub fan_out: Vec<u32>,
    pub max_fan_in: u32,
    pub max_fan_out: u32,
    pub n_edges: usize,
    pub n_autapses: usize,
}

impl DegreeStats {
    pub fn compute(c: &Connectome) -> Self {
        let n = c.n_neurons();
        let mut fan_in = vec![0u32; n];
        let mut fan_out = vec![0u32; n];
        let mut n_autapses = 0;
        for e in c.edges() {
            fan_in[e.dst as usize] += 1;
            fan_out[e.src as usize] += 1;
            n_autapses += (e.src == e.dst) as usize;
        }
        Self {
            max_fan_in: fan_in.iter().copied().max().unwrap_or(0),
            max_fan_out: fan_out.iter().copied().max().unwrap_or(0),
            n_edges: c.n_edges(),
            fan_in,
            fan_out,
            n_autapses,
        }
    }

    pub fn median_fan_in(&self) -> u32 {
        median(&self.fan_in)
    }

    pub fn median_fan_out(&self) -> u32 {
        median(&self.fan_out)
    }

    pub fn cumulative_fan_in(&self) -> Vec<u32> {
        cumulative_sorted(&self.fan_in)
    }

    pub fn cumulative_fan_out(&self) -> Vec<u32> {
        cumulative_sorted(&self.fan_out)
    }

    /// `neuron_id,fan_in,fan_out`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "neuron_id,fan_in,fan_out")?;
        for (i, (a, b)) in self.fan_in.iter().zip(&self.fan_out).enumerate() {
            writeln!(out, "{i},{a},{b}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// `rank,fan_in,fan_out`, each column sorted ascending independently.
    pub fn write_cumulative_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "rank,fan_in,fan_out")?;
        for (i, (a, b)) in self.cumulative_fan_in().iter().zip(self.cumulative_fan_out()).enumerate() {
            writeln!(out, "{i},{a},{b}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Values sorted ascending, the plotting convention for heavy-tailed counts.
pub fn cumulative_sorted<T: Copy + Ord>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v
}

fn median(values: &[u32]) -> u32 {
    if values.is_empty() {
        return 0;
    }
    let v = cumulative_sorted(values);
    v[v.len() / 2]
}
