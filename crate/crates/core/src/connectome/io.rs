//! CSV edge tables.
//!
//! ```text
//! # n_neurons=5
//! src,dst,weight
//! 0,1,2
//! ```
//!
//! The optional leading `# n_neurons=N` comment fixes the neuron count;
//! without it the count is one past the largest index seen.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Connectome, ConnectomeError, Edge, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeFormat {
    #[default]
    Csv,
}

pub fn load_edge_table(path: impl AsRef<Path>, format: EdgeFormat) -> Result<Connectome> {
    let EdgeFormat::Csv = format;
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    read_edge_table(&text)
}

pub fn read_edge_table(text: &str) -> Result<Connectome> {
    let mut declared: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        let Some(comment) = line.strip_prefix('#') else { break };
        if let Some(v) = comment.trim().strip_prefix("n_neurons=") {
            let n = v.trim().parse::<usize>().map_err(|e| ConnectomeError::Parse {
                line: i as u64 + 1,
                msg: format!("bad n_neurons header: {e}"),
            })?;
            declared = Some(n);
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() > 0 && headers.iter().collect::<Vec<_>>() != ["src", "dst", "weight"] {
        return Err(ConnectomeError::Parse {
            line: 1,
            msg: format!("expected header src,dst,weight, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut edges = Vec::new();
    let mut max_index: Option<u32> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(ConnectomeError::Parse { line, msg: format!("expected 3 columns, got {}", rec.len()) });
        }
        let field = |k: usize| -> Result<i64> {
            rec[k].parse::<i64>().map_err(|e| ConnectomeError::Parse {
                line,
                msg: format!("column {}: {e}", ["src", "dst", "weight"][k]),
            })
        };
        let (src, dst, weight) = (field(0)?, field(1)?, field(2)?);
        for value in [src, dst] {
            if value < 0 {
                return Err(ConnectomeError::NegativeIndex { line, value });
            }
            if value > u32::MAX as i64 - 1 {
                return Err(ConnectomeError::Parse { line, msg: format!("index {value} too large") });
            }
        }
        let weight = i32::try_from(weight)
            .map_err(|_| ConnectomeError::Parse { line, msg: format!("weight {weight} overflows 32 bits") })?;
        let (src, dst) = (src as u32, dst as u32);
        max_index = Some(max_index.map_or(src.max(dst), |m| m.max(src).max(dst)));
        edges.push(Edge::new(src, dst, weight));
    }

    let inferred = max_index.map_or(0, |m| m as usize + 1);
    let n = match declared {
        Some(n) if n < inferred => {
            return Err(ConnectomeError::IndexOutOfRange { index: inferred as u64 - 1, n_neurons: n })
        }
        Some(n) => n,
        None => inferred,
    };
    Connectome::from_edges(n, edges)
}

/// Writes the condensed table in target-major order with an explicit
/// neuron-count header, so isolated trailing neurons survive a round trip.
pub fn write_edge_table(c: &Connectome, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# n_neurons={}", c.n_neurons())?;
    writeln!(out, "src,dst,weight")?;
    for e in c.edges() {
        writeln!(out, "{},{},{}", e.src, e.dst, e.weight)?;
    }
    out.flush()?;
    Ok(())
}
