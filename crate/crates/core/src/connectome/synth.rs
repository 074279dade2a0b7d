//! Heavy-tailed synthetic connectomes.
//!
//! Per-neuron in- and out-degree propensities are drawn independently from a
//! lognormal body, with a small fraction replaced by Pareto-tailed outliers.
//! The propensities are scaled to the requested mean degree and realized with
//! the configuration model: stub lists are shuffled and paired, self-loops and
//! repeated pairs are rejected and their stubs re-paired for a few rounds.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto};
use serde::{Deserialize, Serialize};

use super::{Connectome, ConnectomeError, Edge, Result};

const BODY_SIGMA: f64 = 0.5;
const TAIL_FRACTION: f64 = 0.05;
/// Tail outliers start at this multiple of the body median.
const TAIL_SCALE: f64 = 3.0;
const REPAIR_ROUNDS: usize = 8;

/// Synaptic weight distribution. Zero is never produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDist {
    /// Uniform integers in `[lo, hi]`, redrawn on zero.
    Uniform { lo: i32, hi: i32 },
    /// Lognormal magnitude (rounded, at least one) with a random sign.
    SignedLogNormal { inhibitory_fraction: f64, median: f64, sigma: f64 },
}

impl WeightDist {
    /// Mostly small magnitudes with many ±1 and rare outliers in the hundreds.
    pub fn flywire_like() -> Self {
        WeightDist::SignedLogNormal { inhibitory_fraction: 0.3, median: 2.0, sigma: 1.3 }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            WeightDist::Uniform { lo, hi } if lo > hi || (lo == 0 && hi == 0) => {
                Err(ConnectomeError::InvalidArgument(format!("empty weight range [{lo}, {hi}]")))
            }
            WeightDist::SignedLogNormal { inhibitory_fraction, median, sigma }
                if !(0.0..=1.0).contains(&inhibitory_fraction) || !(median > 0.0) || !(sigma >= 0.0) =>
            {
                Err(ConnectomeError::InvalidArgument(format!("bad lognormal weight parameters {self}")))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> i32 {
        match *self {
            WeightDist::Uniform { lo, hi } => loop {
                let w = rng.random_range(lo..=hi);
                if w != 0 {
                    return w;
                }
            },
            WeightDist::SignedLogNormal { inhibitory_fraction, median, sigma } => {
                let mag = LogNormal::new(median.ln(), sigma).expect("validated").sample(rng);
                let mag = mag.round().clamp(1.0, i32::MAX as f64) as i32;
                if rng.random_bool(inhibitory_fraction) {
                    -mag
                } else {
                    mag
                }
            }
        }
    }
}

impl fmt::Display for WeightDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightDist::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            WeightDist::SignedLogNormal { inhibitory_fraction, median, sigma } => {
                write!(f, "lognormal:{inhibitory_fraction},{median},{sigma}")
            }
        }
    }
}

/// `uniform:LO,HI` or `lognormal:INHIBITORY_FRACTION,MEDIAN,SIGMA`.
impl FromStr for WeightDist {
    type Err = ConnectomeError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || ConnectomeError::InvalidArgument(format!("bad weight distribution '{s}'"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let d = match (kind.trim(), args.as_slice()) {
            ("uniform", [lo, hi]) => WeightDist::Uniform {
                lo: lo.parse().map_err(|_| bad())?,
                hi: hi.parse().map_err(|_| bad())?,
            },
            ("lognormal", [p, m, sd]) => WeightDist::SignedLogNormal {
                inhibitory_fraction: p.parse().map_err(|_| bad())?,
                median: m.parse().map_err(|_| bad())?,
                sigma: sd.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub mean_degree: usize,
    /// Pareto shape of the outlier tail; smaller means heavier.
    pub tail_exponent: f64,
    pub weights: WeightDist,
    pub seed: u64,
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Connectome> {
    let SynthSpec { n, mean_degree, tail_exponent, weights, seed } = *spec;
    if n == 0 {
        return Err(ConnectomeError::InvalidArgument("n must be at least 1".into()));
    }
    if !(tail_exponent > 0.0) {
        return Err(ConnectomeError::InvalidArgument(format!(
            "tail exponent must be positive, got {tail_exponent}"
        )));
    }
    weights.validate()?;
    if mean_degree == 0 {
        return Ok(Connectome::empty(n));
    }
    if mean_degree > n - 1 {
        return Err(ConnectomeError::Generation(format!(
            "mean degree {mean_degree} exceeds {} distinct partners available per neuron",
            n - 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n * mean_degree;
    let out_deg = degree_sequence(&mut rng, n, total, tail_exponent);
    let in_deg = degree_sequence(&mut rng, n, total, tail_exponent);

    let mut out_stubs = stubs(&out_deg);
    let mut in_stubs = stubs(&in_deg);
    let m = out_stubs.len().min(in_stubs.len());
    out_stubs.shuffle(&mut rng);
    in_stubs.shuffle(&mut rng);
    out_stubs.truncate(m);
    in_stubs.truncate(m);

    let mut seen: HashSet<(u32, u32)> = HashSet::with_capacity(m);
    let mut pairs = Vec::with_capacity(m);
    for _ in 0..REPAIR_ROUNDS {
        let mut left_out = Vec::new();
        let mut left_in = Vec::new();
        for (&s, &d) in out_stubs.iter().zip(&in_stubs) {
            if s != d && seen.insert((s, d)) {
                pairs.push((s, d));
            } else {
                left_out.push(s);
                left_in.push(d);
            }
        }
        if left_out.is_empty() {
            break;
        }
        left_in.shuffle(&mut rng);
        out_stubs = left_out;
        in_stubs = left_in;
    }

    // Pairs are drawn in stub order; sort before sampling weights so the
    // weight draw order does not depend on hash iteration.
    pairs.sort_unstable();
    let edges: Vec<Edge> = pairs
        .into_iter()
        .map(|(s, d)| Edge::new(s, d, weights.sample(&mut rng)))
        .collect();
    Connectome::from_edges(n, edges)
}

fn degree_sequence<R: Rng>(rng: &mut R, n: usize, total: usize, tail_exponent: f64) -> Vec<usize> {
    let body = LogNormal::new(0.0, BODY_SIGMA).expect("constant parameters");
    let tail = Pareto::new(TAIL_SCALE, tail_exponent).expect("positive shape");
    let raw: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(TAIL_FRACTION) { tail.sample(rng) } else { body.sample(rng) })
        .collect();
    let sum: f64 = raw.iter().sum();
    let cap = (n - 1) as f64;

    // Largest-remainder rounding keeps the total exact before capping.
    let scaled: Vec<f64> = raw.iter().map(|r| (r * total as f64 / sum).min(cap)).collect();
    let mut deg: Vec<usize> = scaled.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = deg.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &i in order.iter() {
        if remaining == 0 {
            break;
        }
        if deg[i] < n - 1 {
            deg[i] += 1;
            remaining -= 1;
        }
    }
    deg
}

fn stubs(deg: &[usize]) -> Vec<u32> {
    deg.iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i as u32, d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, mean_degree: usize, seed: u64) -> SynthSpec {
        SynthSpec { n, mean_degree, tail_exponent: 2.0, weights: WeightDist::flywire_like(), seed }
    }

    #[test]
    fn zero_mean_degree_is_empty() {
        let c = generate_synthetic(&spec(1000, 0, 1)).unwrap();
        assert_eq!(c.n_neurons(), 1000);
        assert_eq!(c.n_edges(), 0);
    }

    #[test]
    fn infeasible_degree_rejected() {
        assert!(matches!(generate_synthetic(&spec(5, 5, 1)), Err(ConnectomeError::Generation(_))));
        assert!(matches!(generate_synthetic(&spec(1, 1, 1)), Err(ConnectomeError::Generation(_))));
    }

    #[test]
    fn heavy_tail_outliers() {
        let c = generate_synthetic(&spec(10_000, 100, 7)).unwrap();
        let s = c.degree_stats();
        assert!(s.max_fan_in >= 10 * s.median_fan_in(), "{} vs {}", s.max_fan_in, s.median_fan_in());
        assert!(s.max_fan_out >= 10 * s.median_fan_out());
        assert_eq!(s.fan_in.iter().map(|&x| x as usize).sum::<usize>(), c.n_edges());
        assert_eq!(s.fan_out.iter().map(|&x| x as usize).sum::<usize>(), c.n_edges());
        // Rejections lose at most a sliver of the requested edges.
        assert!(c.n_edges() as f64 > 0.97 * 1_000_000.0, "{}", c.n_edges());
    }

    #[test]
    fn deterministic_under_seed() {
        let a: Vec<Edge> = generate_synthetic(&spec(2000, 20, 11)).unwrap().edges().collect();
        let b: Vec<Edge> = generate_synthetic(&spec(2000, 20, 11)).unwrap().edges().collect();
        assert_eq!(a, b);
        let c: Vec<Edge> = generate_synthetic(&spec(2000, 20, 12)).unwrap().edges().collect();
        assert_ne!(a, c);
    }

    #[test]
    fn both_signs_and_no_zero_weights() {
        let c = generate_synthetic(&spec(500, 10, 3)).unwrap();
        assert!(c.edges().any(|e| e.weight < 0));
        assert!(c.edges().any(|e| e.weight > 0));
        assert!(c.edges().all(|e| e.weight != 0 && e.src != e.dst));
    }

    #[test]
    fn weight_dist_parses() {
        assert_eq!(
            "uniform:-5,5".parse::<WeightDist>().unwrap(),
            WeightDist::Uniform { lo: -5, hi: 5 }
        );
        let d: WeightDist = "lognormal:0.3,2,1.3".parse().unwrap();
        assert_eq!(d.to_string().parse::<WeightDist>().unwrap(), d);
        assert!("uniform:0,0".parse::<WeightDist>().is_err());
        assert!("gauss:1".parse::<WeightDist>().is_err());
    }
}
