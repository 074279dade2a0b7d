//! Rate tables, index-matched parity statistics and plot-ready exports.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectome::Connectome;
use crate::record::SpikeRecord;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("records disagree: {0}")]
    Mismatch(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-neuron mean firing rate over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rates_hz: Vec<f64>,
    pub trials: usize,
    pub duration_ms: f64,
}

impl RateTable {
    pub fn n_neurons(&self) -> usize {
        self.rates_hz.len()
    }

    pub fn n_active(&self, threshold_hz: f64) -> usize {
        self.rates_hz.iter().filter(|&&r| r >= threshold_hz).count()
    }

    pub fn mean_hz(&self) -> f64 {
        if self.rates_hz.is_empty() {
            0.0
        } else {
            self.rates_hz.iter().sum::<f64>() / self.rates_hz.len() as f64
        }
    }
}

/// spikes / (trials * duration) for every neuron.
pub fn mean_rates(records: &[SpikeRecord], n_neurons: usize) -> Result<RateTable, AnalysisError> {
    let Some(first) = records.first() else {
        return Ok(RateTable { rates_hz: vec![0.0; n_neurons], trials: 0, duration_ms: 0.0 });
    };
    let mut counts = vec![0u64; n_neurons];
    for (i, r) in records.iter().enumerate() {
        if r.duration_ms != first.duration_ms || r.dt_ms != first.dt_ms {
            return Err(AnalysisError::Mismatch(format!(
                "trial {i} has duration {} ms at dt {} ms, trial 0 has {} ms at dt {} ms",
                r.duration_ms, r.dt_ms, first.duration_ms, first.dt_ms
            )));
        }
        if r.n_neurons != n_neurons {
            return Err(AnalysisError::Mismatch(format!("trial {i} has {} neurons, expected {n_neurons}", r.n_neurons)));
        }
        for e in &r.events {
            counts[e.neuron as usize] += 1;
        }
    }
    let denom = records.len() as f64 * first.duration_ms / 1000.0;
    let rates_hz = counts.iter().map(|&c| if denom > 0.0 { c as f64 / denom } else { 0.0 }).collect();
    Ok(RateTable { rates_hz, trials: records.len(), duration_ms: first.duration_ms })
}

/// Index-matched comparison of two rate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityStats {
    /// `(rate_a, rate_b)` for every neuron, by index.
    pub pairs: Vec<(f64, f64)>,
    pub active_threshold_hz: f64,
    /// Neurons with `max(rate_a, rate_b) >= threshold`.
    pub active: Vec<u32>,
    /// `None` with fewer than two active pairs or zero variance.
    pub pearson_r: Option<f64>,
    pub max_abs_diff_hz: f64,
    /// Active pairs with `rate_b > rate_a`.
    pub above: usize,
    pub below: usize,
}

impl ParityStats {
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Active neurons with `rate_b / rate_a` above `ratio`; a zero
    /// `rate_a` counts as an infinite ratio.
    pub fn ratio_above(&self, ratio: f64) -> Vec<u32> {
        self.active.iter().copied().filter(|&i| {
            let (a, b) = self.pairs[i as usize];
            b > ratio * a
        }).collect()
    }

    /// Active neurons with `rate_b / rate_a` below `ratio`.
    pub fn ratio_below(&self, ratio: f64) -> Vec<u32> {
        self.active.iter().copied().filter(|&i| {
            let (a, b) = self.pairs[i as usize];
            b < ratio * a
        }).collect()
    }
}

pub fn parity(a: &RateTable, b: &RateTable, active_threshold_hz: f64) -> Result<ParityStats, AnalysisError> {
    if a.n_neurons() != b.n_neurons() {
        return Err(AnalysisError::Mismatch(format!("{} vs {} neurons", a.n_neurons(), b.n_neurons())));
    }
    let pairs: Vec<(f64, f64)> = a.rates_hz.iter().copied().zip(b.rates_hz.iter().copied()).collect();
    let active: Vec<u32> = (0..pairs.len() as u32)
        .filter(|&i| {
            let (x, y) = pairs[i as usize];
            x.max(y) >= active_threshold_hz
        })
        .collect();
    let act: Vec<(f64, f64)> = active.iter().map(|&i| pairs[i as usize]).collect();
    let max_abs_diff_hz = act.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let above = act.iter().filter(|(x, y)| y > x).count();
    let below = act.iter().filter(|(x, y)| y < x).count();
    Ok(ParityStats { pearson_r: pearson(&act), pairs, active_threshold_hz, active, max_abs_diff_hz, above, below })
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return pairs.iter().all(|(x, y)| x == y).then_some(1.0);
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `timestep,neuron_id` CSV of every spike.
pub fn export_raster(r: &SpikeRecord, path: impl AsRef<Path>) -> Result<(), AnalysisError> {
    r.write_csv(path)?;
    Ok(())
}

/// `index,value` rows, or `rank,value` rows in ascending value order when
/// `cumulative_sorted` is set.
pub fn export_distribution<T: Copy + PartialOrd + Display>(
    values: &[T],
    path: impl AsRef<Path>,
    cumulative_sorted: bool,
) -> Result<(), AnalysisError> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut v = values.to_vec();
    if cumulative_sorted {
        v.sort_by(|a, b| a.partial_cmp(b).expect("comparable values"));
        writeln!(out, "rank,value")?;
    } else {
        writeln!(out, "index,value")?;
    }
    for (i, x) in v.iter().enumerate() {
        writeln!(out, "{i},{x}")?;
    }
    out.flush()?;
    Ok(())
}

/// Values of a file written by [`export_distribution`], in file order.
pub fn read_distribution(path: impl AsRef<Path>) -> Result<Vec<f64>, AnalysisError> {
    let mut values = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if i == 0 {
            continue;
        }
        let bad = |msg: String| AnalysisError::Parse { line: i + 1, msg };
        let (_, v) = line.split_once(',').ok_or_else(|| bad("expected two columns".into()))?;
        values.push(v.trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?);
    }
    Ok(values)
}

/// `neuron_id,rate_a,rate_b,active`
pub fn export_parity(stats: &ParityStats, path: impl AsRef<Path>) -> Result<(), AnalysisError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "neuron_id,rate_a,rate_b,active")?;
    let mut active = stats.active.iter().peekable();
    for (i, (a, b)) in stats.pairs.iter().enumerate() {
        let is_active = active.next_if(|&&j| j as usize == i).is_some();
        writeln!(out, "{i},{a},{b},{}", is_active as u8)?;
    }
    out.flush()?;
    Ok(())
}

/// Scalar summary bundled next to the parity CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub experiment: String,
    pub engine_a: String,
    pub engine_b: String,
    pub n_neurons: usize,
    pub trials: usize,
    pub duration_ms: f64,
    pub active_threshold_hz: f64,
    pub n_active: usize,
    pub pearson_r: Option<f64>,
    pub max_abs_diff_hz: f64,
    pub above: usize,
    pub below: usize,
    pub mean_rate_a_hz: f64,
    pub mean_rate_b_hz: f64,
    pub config_hash: String,
}

impl ReportSummary {
    pub fn new(experiment: &str, engines: (&str, &str), a: &RateTable, b: &RateTable, stats: &ParityStats, config_hash: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            engine_a: engines.0.to_string(),
            engine_b: engines.1.to_string(),
            n_neurons: a.n_neurons(),
            trials: a.trials.min(b.trials),
            duration_ms: a.duration_ms,
            active_threshold_hz: stats.active_threshold_hz,
            n_active: stats.n_active(),
            pearson_r: stats.pearson_r,
            max_abs_diff_hz: stats.max_abs_diff_hz,
            above: stats.above,
            below: stats.below,
            mean_rate_a_hz: a.mean_hz(),
            mean_rate_b_hz: b.mean_hz(),
            config_hash: config_hash.to_string(),
        }
    }
}

/// Writes `<name>_parity.csv` and `<name>_summary.json` into `dir`.
pub fn write_report(dir: impl AsRef<Path>, name: &str, stats: &ParityStats, summary: &ReportSummary) -> Result<(PathBuf, PathBuf), AnalysisError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{name}_parity.csv"));
    let json = dir.join(format!("{name}_summary.json"));
    export_parity(stats, &csv)?;
    fs::write(&json, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok((csv, json))
}

/// Input population for a sugar-style experiment: `count` distinct
/// neurons drawn uniformly from those with a net excitatory output.
pub fn select_stimulus_targets(c: &Connectome, count: usize, seed: u64) -> Vec<u32> {
    let out = c.out_adjacency();
    let candidates: Vec<u32> = (0..c.n_neurons())
        .filter(|&i| out.targets(i).1.iter().map(|&w| w as i64).sum::<i64>() > 0)
        .map(|i| i as u32)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = count.min(candidates.len());
    let mut picked: Vec<u32> = index::sample(&mut rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
    picked.sort_unstable();
    picked
}
