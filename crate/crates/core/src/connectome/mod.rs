//! Connectome graphs: ingestion, condensation, weight quantization, fan-in
//! capping and synthetic generation.
//!
//! A [`Connectome`] is stored target-major in compressed sparse form: for every
//! target neuron the incoming `(source, weight)` pairs are kept sorted by
//! source index, with at most one entry per `(source, target)` pair and no
//! zero weights. Every constructor condenses its input, so these invariants
//! hold for every value of the type.

mod io;
mod stats;
mod synth;

pub use io::{load_edge_table, read_edge_table, write_edge_table, EdgeFormat};
pub use stats::{cumulative_sorted, DegreeStats};
pub use synth::{generate_synthetic, SynthSpec, WeightDist};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Uniform synaptic delay used when none is given.
pub const DEFAULT_DELAY_MS: f64 = 1.8;
/// Scale applied to integer weights on delivery into `g`.
pub const DEFAULT_WEIGHT_SCALE_MV: f64 = 0.275;

#[derive(Debug, thiserror::Error)]
pub enum ConnectomeError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: negative neuron index {value}")]
    NegativeIndex { line: u64, value: i64 },
    #[error("neuron index {index} out of range for {n_neurons} neurons")]
    IndexOutOfRange { index: u64, n_neurons: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible degree sequence: {0}")]
    Generation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ConnectomeError>;

/// A single directed synapse between two neurons. Autapses are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub weight: i32,
}

impl Edge {
    pub fn new(src: u32, dst: u32, weight: i32) -> Self {
        Self { src, dst, weight }
    }
}

/// Flat directed weighted graph with a uniform delay, stored target-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Connectome {
    n_neurons: usize,
    offsets: Vec<usize>,
    sources: Vec<u32>,
    weights: Vec<i32>,
    delay_ms: f64,
    weight_scale_mv: f64,
}

/// Source-major view of a connectome, built on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutAdjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<i32>,
}

impl OutAdjacency {
    /// Targets of `src`, ascending, with their weights.
    pub fn targets(&self, src: usize) -> (&[u32], &[i32]) {
        let r = self.offsets[src]..self.offsets[src + 1];
        (&self.targets[r.clone()], &self.weights[r])
    }

    pub fn fan_out(&self, src: usize) -> usize {
        self.offsets[src + 1] - self.offsets[src]
    }
}

impl Connectome {
    /// Builds a condensed connectome from an arbitrary edge list. Multi-edges
    /// are summed and pairs whose weights cancel to zero are dropped.
    pub fn from_edges<I>(n_neurons: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = Edge>,
    {
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        for e in &edges {
            let idx = e.src.max(e.dst) as u64;
            if idx as usize >= n_neurons {
                return Err(ConnectomeError::IndexOutOfRange { index: idx, n_neurons });
            }
        }
        edges.sort_unstable_by_key(|e| (e.dst, e.src));

        let mut offsets = vec![0usize; n_neurons + 1];
        let mut sources = Vec::with_capacity(edges.len());
        let mut weights = Vec::with_capacity(edges.len());
        let mut i = 0;
        while i < edges.len() {
            let (src, dst) = (edges[i].src, edges[i].dst);
            let mut sum: i64 = 0;
            while i < edges.len() && edges[i].src == src && edges[i].dst == dst {
                sum += edges[i].weight as i64;
                i += 1;
            }
            if sum != 0 {
                let w = i32::try_from(sum).map_err(|_| {
                    ConnectomeError::InvalidArgument(format!(
                        "condensed weight {sum} for ({src}, {dst}) overflows 32 bits"
                    ))
                })?;
                sources.push(src);
                weights.push(w);
                offsets[dst as usize + 1] += 1;
            }
        }
        for k in 0..n_neurons {
            offsets[k + 1] += offsets[k];
        }
        Ok(Self {
            n_neurons,
            offsets,
            sources,
            weights,
            delay_ms: DEFAULT_DELAY_MS,
            weight_scale_mv: DEFAULT_WEIGHT_SCALE_MV,
        })
    }

    pub fn empty(n_neurons: usize) -> Self {
        Self::from_edges(n_neurons, std::iter::empty()).expect("empty graph is valid")
    }

    pub fn with_delay_ms(mut self, delay_ms: f64) -> Result<Self> {
        if !(delay_ms > 0.0) || !delay_ms.is_finite() {
            return Err(ConnectomeError::InvalidArgument(format!(
                "delay must be positive, got {delay_ms}"
            )));
        }
        self.delay_ms = delay_ms;
        Ok(self)
    }

    pub fn with_weight_scale_mv(mut self, scale: f64) -> Self {
        self.weight_scale_mv = scale;
        self
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn delay_ms(&self) -> f64 {
        self.delay_ms
    }

    pub fn weight_scale_mv(&self) -> f64 {
        self.weight_scale_mv
    }

    /// Incoming `(sources, weights)` of `dst`, sorted by source.
    pub fn in_edges(&self, dst: usize) -> (&[u32], &[i32]) {
        let r = self.offsets[dst]..self.offsets[dst + 1];
        (&self.sources[r.clone()], &self.weights[r])
    }

    pub fn fan_in(&self, dst: usize) -> usize {
        self.offsets[dst + 1] - self.offsets[dst]
    }

    /// All edges in target-major order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.n_neurons).flat_map(move |dst| {
            let (s, w) = self.in_edges(dst);
            s.iter()
                .zip(w)
                .map(move |(&src, &weight)| Edge::new(src, dst as u32, weight))
        })
    }

    pub fn out_adjacency(&self) -> OutAdjacency {
        let mut offsets = vec![0usize; self.n_neurons + 1];
        for &s in &self.sources {
            offsets[s as usize + 1] += 1;
        }
        for k in 0..self.n_neurons {
            offsets[k + 1] += offsets[k];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0u32; self.sources.len()];
        let mut weights = vec![0i32; self.sources.len()];
        // Walking targets in ascending order keeps every source row sorted.
        for dst in 0..self.n_neurons {
            let (s, w) = self.in_edges(dst);
            for (&src, &wt) in s.iter().zip(w) {
                let slot = &mut cursor[src as usize];
                targets[*slot] = dst as u32;
                weights[*slot] = wt;
                *slot += 1;
            }
        }
        OutAdjacency { offsets, targets, weights }
    }

    /// Re-runs condensation. The result always equals `self`; kept as an
    /// explicit operation so pipelines can state the step.
    pub fn condense(&self) -> Self {
        let mut c = Self::from_edges(self.n_neurons, self.edges()).expect("valid graph");
        c.delay_ms = self.delay_ms;
        c.weight_scale_mv = self.weight_scale_mv;
        c
    }

    fn map_weights(&self, weights: Vec<i32>) -> Self {
        Self { weights, ..self.clone() }
    }

    /// Clamps every weight to the signed range of `bits` bits.
    pub fn quantize_weights(&self, bits: u32) -> Result<(Self, QuantReport)> {
        if !(2..=16).contains(&bits) {
            return Err(ConnectomeError::InvalidArgument(format!(
                "weight bit width must be in [2, 16], got {bits}"
            )));
        }
        let cap_hi = (1i32 << (bits - 1)) - 1;
        let cap_lo = -(1i32 << (bits - 1));
        let mut report = QuantReport { bits, cap_hi, cap_lo, n_capped_pos: 0, n_capped_neg: 0 };
        let weights = self
            .weights
            .iter()
            .map(|&w| {
                if w > cap_hi {
                    report.n_capped_pos += 1;
                    cap_hi
                } else if w < cap_lo {
                    report.n_capped_neg += 1;
                    cap_lo
                } else {
                    w
                }
            })
            .collect();
        Ok((self.map_weights(weights), report))
    }

    /// Limits every neuron's fan-in to `max_in` by uniform sampling of the
    /// retained in-edges, rescaling each retained weight by `k / max_in`.
    pub fn cap_fan_in(&self, max_in: usize, seed: u64) -> Result<Self> {
        if max_in == 0 {
            return Err(ConnectomeError::InvalidArgument("max_in must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::with_capacity(self.n_edges());
        for dst in 0..self.n_neurons {
            let (s, w) = self.in_edges(dst);
            let k = s.len();
            if k <= max_in {
                edges.extend(s.iter().zip(w).map(|(&src, &wt)| Edge::new(src, dst as u32, wt)));
                continue;
            }
            let mut keep = index::sample(&mut rng, k, max_in).into_vec();
            keep.sort_unstable();
            for i in keep {
                let scaled = rescale_weight(w[i], k as i64, max_in as i64);
                edges.push(Edge::new(s[i], dst as u32, scaled));
            }
        }
        let mut c = Self::from_edges(self.n_neurons, edges)?;
        c.delay_ms = self.delay_ms;
        c.weight_scale_mv = self.weight_scale_mv;
        Ok(c)
    }

    /// Degree statistics computed by direct counting.
    pub fn degree_stats(&self) -> DegreeStats {
        DegreeStats::compute(self)
    }
}

/// `w * num / den` rounded to nearest, ties away from zero, never zero.
fn rescale_weight(w: i32, num: i64, den: i64) -> i32 {
    let p = (w as i64).abs() * num;
    let mag = ((2 * p + den) / (2 * den)).max(1);
    let mag = mag.min(i32::MAX as i64) as i32;
    if w < 0 {
        -mag
    } else {
        mag
    }
}

/// Saturation counts from [`Connectome::quantize_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantReport {
    pub bits: u32,
    pub cap_hi: i32,
    pub cap_lo: i32,
    pub n_capped_pos: usize,
    pub n_capped_neg: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain3() -> Connectome {
        Connectome::from_edges(3, [Edge::new(0, 1, 1), Edge::new(1, 2, 1)]).unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let c = Connectome::from_edges(
            3,
            [Edge::new(0, 1, 2), Edge::new(0, 1, 3), Edge::new(2, 1, -1)],
        )
        .unwrap();
        assert_eq!(c.n_neurons(), 3);
        assert_eq!(c.in_edges(1), (&[0u32, 2][..], &[5i32, -1][..]));
        assert_eq!(c.n_edges(), 2);
    }

    #[test]
    fn cancelling_weights_drop_the_edge() {
        let c = Connectome::from_edges(2, [Edge::new(0, 1, 2), Edge::new(0, 1, -2)]).unwrap();
        assert_eq!(c.n_edges(), 0);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = Connectome::from_edges(2, [Edge::new(0, 2, 1)]).unwrap_err();
        assert!(matches!(err, ConnectomeError::IndexOutOfRange { index: 2, .. }));
    }

    #[test]
    fn quantize_caps_by_sign() {
        let c = Connectome::from_edges(
            4,
            [Edge::new(0, 1, 300), Edge::new(2, 1, 17), Edge::new(3, 1, -1000), Edge::new(0, 2, -256)],
        )
        .unwrap();
        let (q, rep) = c.quantize_weights(9).unwrap();
        assert_eq!(rep.cap_hi, 255);
        assert_eq!(rep.cap_lo, -256);
        assert_eq!(rep.n_capped_pos, 1);
        assert_eq!(rep.n_capped_neg, 1);
        assert_eq!(q.in_edges(1).1, &[255, 17, -256]);
        assert_eq!(q.in_edges(2).1, &[-256]);
    }

    #[test]
    fn quantize_rejects_bad_width() {
        assert!(chain3().quantize_weights(1).is_err());
        assert!(chain3().quantize_weights(17).is_err());
    }

    #[test]
    fn cap_at_limit_is_identity() {
        let edges = (0..10).map(|s| Edge::new(s, 10, 3));
        let c = Connectome::from_edges(11, edges).unwrap();
        assert_eq!(c.cap_fan_in(10, 1).unwrap(), c);
    }

    #[test]
    fn cap_halves_fan_in_and_doubles_weights() {
        let edges = (0..8192).map(|s| Edge::new(s, 8192, 1));
        let c = Connectome::from_edges(8193, edges).unwrap();
        let capped = c.cap_fan_in(4096, 3).unwrap();
        assert_eq!(capped.fan_in(8192), 4096);
        assert!(capped.in_edges(8192).1.iter().all(|&w| w == 2));
        let before: i64 = c.in_edges(8192).1.iter().map(|&w| w as i64).sum();
        let after: i64 = capped.in_edges(8192).1.iter().map(|&w| w as i64).sum();
        assert!(((after - before) as f64).abs() <= 0.01 * before as f64);
    }

    #[test]
    fn cap_is_seed_reproducible() {
        let edges = (0..100).map(|s| Edge::new(s, 100, (s as i32 % 7) - 3)).filter(|e| e.weight != 0);
        let c = Connectome::from_edges(101, edges).unwrap();
        assert_eq!(c.cap_fan_in(10, 9).unwrap(), c.cap_fan_in(10, 9).unwrap());
        assert_ne!(
            c.cap_fan_in(10, 9).unwrap().in_edges(100).0,
            c.cap_fan_in(10, 10).unwrap().in_edges(100).0
        );
    }

    #[test]
    fn rescale_rounds_away_from_zero() {
        assert_eq!(rescale_weight(1, 3, 2), 2); // 1.5
        assert_eq!(rescale_weight(-1, 3, 2), -2);
        assert_eq!(rescale_weight(1, 5, 4), 1); // 1.25
        assert_eq!(rescale_weight(3, 7, 4), 5); // 5.25
    }

    #[test]
    fn out_adjacency_matches_edges() {
        let c = chain3();
        let out = c.out_adjacency();
        assert_eq!(out.targets(0), (&[1u32][..], &[1i32][..]));
        assert_eq!(out.fan_out(2), 0);
    }

    fn arb_edges() -> impl Strategy<Value = (usize, Vec<Edge>)> {
        (1usize..40).prop_flat_map(|n| {
            let e = (0..n as u32, 0..n as u32, -600i32..600).prop_map(|(s, d, w)| Edge::new(s, d, w));
            (Just(n), prop::collection::vec(e, 0..200))
        })
    }

    proptest! {
        #[test]
        fn condensation_is_idempotent((n, edges) in arb_edges()) {
            let c = Connectome::from_edges(n, edges).unwrap();
            prop_assert_eq!(c.condense(), c.clone());
            prop_assert!(c.edges().all(|e| e.weight != 0));
        }

        #[test]
        fn quantization_keeps_sign_and_shrinks((n, edges) in arb_edges(), bits in 2u32..=16) {
            let c = Connectome::from_edges(n, edges).unwrap();
            let (q, _) = c.quantize_weights(bits).unwrap();
            for (a, b) in c.edges().zip(q.edges()) {
                prop_assert_eq!(a.weight.signum(), b.weight.signum());
                prop_assert!(b.weight.abs() <= a.weight.abs());
            }
        }

        #[test]
        fn capping_bounds_fan_in_and_weight_sum(
            k in 2usize..200, max_in in 1usize..100, seed in any::<u64>(), w in 1i32..20
        ) {
            let edges = (0..k as u32).map(|s| Edge::new(s, k as u32, if s % 3 == 0 { -w } else { w }));
            let c = Connectome::from_edges(k + 1, edges).unwrap();
            let capped = c.cap_fan_in(max_in, seed).unwrap();
            prop_assert!(capped.fan_in(k) <= max_in);
            if k <= 2 * max_in && k > max_in {
                // Same-magnitude weights: the retained magnitude total stays
                // within a factor of two of the original.
                let before: i64 = c.in_edges(k).1.iter().map(|&x| x.abs() as i64).sum();
                let after: i64 = capped.in_edges(k).1.iter().map(|&x| x.abs() as i64).sum();
                prop_assert!(after * 2 >= before && after <= 2 * before);
            }
        }
    }
}
