//! Spike event streams, the unit of all validation.
//!
//! CSV layout:
//!
//! ```text
//! # dt_ms=0.1
//! # duration_ms=1000
//! # seed=7
//! # n_neurons=3
//! timestep,neuron_id
//! 52,1
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub step: u32,
    pub neuron: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    /// Sorted by `(step, neuron)`.
    pub events: Vec<SpikeEvent>,
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub seed: u64,
    pub n_neurons: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing header field {0}")]
    MissingField(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SpikeRecord {
    pub fn new(n_neurons: usize, dt_ms: f64, duration_ms: f64, seed: u64) -> Self {
        Self { events: Vec::new(), dt_ms, duration_ms, seed, n_neurons }
    }

    pub fn n_steps(&self) -> u32 {
        (self.duration_ms / self.dt_ms).round() as u32
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn spike_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_neurons];
        for e in &self.events {
            counts[e.neuron as usize] += 1;
        }
        counts
    }

    /// Smallest gap in steps between consecutive spikes of any one neuron,
    /// skipping neurons rejected by `include`.
    pub fn min_isi_steps(&self, include: impl Fn(u32) -> bool) -> Option<u32> {
        let mut last: Vec<Option<u32>> = vec![None; self.n_neurons];
        let mut min: Option<u32> = None;
        for e in &self.events {
            if !include(e.neuron) {
                continue;
            }
            if let Some(prev) = last[e.neuron as usize] {
                let gap = e.step - prev;
                min = Some(min.map_or(gap, |m| m.min(gap)));
            }
            last[e.neuron as usize] = Some(e.step);
        }
        min
    }

    pub fn is_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0] < w[1])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# dt_ms={}", self.dt_ms)?;
        writeln!(out, "# duration_ms={}", self.duration_ms)?;
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# n_neurons={}", self.n_neurons)?;
        writeln!(out, "timestep,neuron_id")?;
        for e in &self.events {
            writeln!(out, "{},{}", e.step, e.neuron)?;
        }
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, RecordError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, RecordError> {
        let (mut dt, mut dur, mut seed, mut n) = (None, None, None, None);
        let mut events = Vec::new();
        let mut seen_header = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = i + 1;
            let bad = |msg: String| RecordError::Parse { line: lineno, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "dt_ms" => dt = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                        "duration_ms" => dur = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                        "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                        "n_neurons" => n = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                        _ => {}
                    }
                }
                continue;
            }
            if !seen_header {
                if line != "timestep,neuron_id" {
                    return Err(bad(format!("expected header timestep,neuron_id, got '{line}'")));
                }
                seen_header = true;
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| bad("expected two columns".into()))?;
            let step = a.trim().parse::<u32>().map_err(|e| bad(e.to_string()))?;
            let neuron = b.trim().parse::<u32>().map_err(|e| bad(e.to_string()))?;
            events.push(SpikeEvent { step, neuron });
        }
        let n_neurons = n.ok_or(RecordError::MissingField("n_neurons"))?;
        if let Some(e) = events.iter().find(|e| e.neuron as usize >= n_neurons) {
            return Err(RecordError::Parse { line: 0, msg: format!("neuron {} out of range", e.neuron) });
        }
        events.sort_unstable();
        Ok(Self {
            events,
            dt_ms: dt.ok_or(RecordError::MissingField("dt_ms"))?,
            duration_ms: dur.ok_or(RecordError::MissingField("duration_ms"))?,
            seed: seed.ok_or(RecordError::MissingField("seed"))?,
            n_neurons,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_record_is_header_only() {
        let r = SpikeRecord::new(4, 0.1, 10.0, 3);
        let mut buf = Vec::new();
        r.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(), ["timestep,neuron_id"]);
    }

    #[test]
    fn isi_skips_excluded() {
        let mut r = SpikeRecord::new(2, 0.1, 10.0, 0);
        r.events = vec![
            SpikeEvent { step: 1, neuron: 0 },
            SpikeEvent { step: 2, neuron: 1 },
            SpikeEvent { step: 3, neuron: 1 },
            SpikeEvent { step: 30, neuron: 0 },
        ];
        assert_eq!(r.min_isi_steps(|_| true), Some(1));
        assert_eq!(r.min_isi_steps(|n| n != 1), Some(29));
    }

    proptest! {
        #[test]
        fn csv_round_trip(mut ev in prop::collection::btree_set((0u32..1000, 0u32..50), 0..100), seed in any::<u64>()) {
            let mut r = SpikeRecord::new(50, 0.1, 100.0, seed);
            r.events = std::mem::take(&mut ev).into_iter().map(|(step, neuron)| SpikeEvent { step, neuron }).collect();
            let mut buf = Vec::new();
            r.write_to(&mut buf).unwrap();
            let back = SpikeRecord::read_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
