//! Flat fixed-point simulator written against the connectome directly.
//!
//! Shares only the random stream discipline with the machine simulator:
//! one LFSR per core, drawn in ascending local order, stimulus draw before
//! background draw. Neuron arithmetic, delays and delivery are implemented
//! here from scratch without the routing tables.

use neuromap::compiler::Partitioning;
use neuromap::connectome::Connectome;
use neuromap::hw::{core_seed, LfsrState, Probability};
use neuromap::record::{SpikeEvent, SpikeRecord};
use neuromap::reference::NeuronParams;

const FRAC: u32 = 12;
const ACC_BITS: u32 = 24;

fn q(x: f64) -> i32 {
    (x * (1u64 << FRAC) as f64).round_ties_even() as i32
}

fn sat32(x: i64) -> i32 {
    x.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

fn sat_acc(x: i64) -> i32 {
    x.clamp(-(1i64 << (ACC_BITS - 1)), (1i64 << (ACC_BITS - 1)) - 1) as i32
}

/// Truncating Q-format product.
fn qmul(a: i32, b: i32) -> i32 {
    sat32((a as i64 * b as i64) / (1i64 << FRAC))
}

pub struct OracleSetup<'a> {
    pub c: &'a Connectome,
    pub p: &'a Partitioning,
    pub params: NeuronParams,
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub seed: u64,
    pub stim_targets: &'a [u32],
    pub stim_rate_hz: f64,
    pub stim_amplitude_mv: f64,
    pub depth: usize,
}

pub fn run_oracle(s: &OracleSetup) -> SpikeRecord {
    let n = s.c.n_neurons();
    let dt = s.dt_ms;
    let v0 = q(s.params.v0);
    let vr = q(s.params.vr);
    let vth = q(s.params.vth);
    let km = q(dt / s.params.tau_m);
    let kg = q(dt / s.params.tau_g);
    let ws = q(s.c.weight_scale_mv());
    let amp = q(s.stim_amplitude_mv);
    let ref_steps = (s.params.tau_ref / dt).round() as u32;
    let delay = (s.c.delay_ms() / dt).round() as usize;
    let n_steps = (s.duration_ms / dt).round() as u32;
    let p_stim = Probability::from_rate(s.stim_rate_hz, dt);

    let mut stimulated = vec![false; n];
    for &t in s.stim_targets {
        stimulated[t as usize] = true;
    }
    let mut out: Vec<Vec<(u32, i32)>> = vec![Vec::new(); n];
    for e in s.c.edges() {
        out[e.src as usize].push((e.dst, e.weight));
    }
    let cpc = s.p.cores_per_chip();
    let mut lfsr: Vec<LfsrState> =
        (0..s.p.n_cores()).map(|k| LfsrState::new(core_seed(s.seed, k / cpc, k % cpc, cpc))).collect();

    let mut v = vec![v0; n];
    let mut g = vec![0i32; n];
    let mut frozen = vec![0u32; n];
    let mut ring = vec![vec![0i32; n]; s.depth];
    let mut rec = SpikeRecord::new(n, dt, s.duration_ms, s.seed);
    let mut fired = Vec::new();
    for t in 0..n_steps {
        fired.clear();
        let slot = t as usize % s.depth;
        for (k, rng) in lfsr.iter_mut().enumerate() {
            for &i in s.p.core_neurons(k) {
                let i = i as usize;
                let mut acc = std::mem::take(&mut ring[slot][i]);
                if stimulated[i] && rng.bernoulli(p_stim) {
                    acc = sat_acc(acc as i64 + amp as i64);
                }
                if frozen[i] > 0 {
                    frozen[i] -= 1;
                    continue;
                }
                let gi = sat32(g[i] as i64 + acc as i64);
                let dv = qmul(sat32(v0 as i64 - v[i] as i64 + gi as i64), km);
                let dg = qmul(gi, kg);
                v[i] = sat32(v[i] as i64 + dv as i64);
                g[i] = sat32(gi as i64 - dg as i64);
                if v[i] > vth {
                    v[i] = vr;
                    g[i] = 0;
                    frozen[i] = ref_steps.saturating_sub(1);
                    fired.push(i as u32);
                }
            }
        }
        let target = (t as usize + delay) % s.depth;
        for &src in &fired {
            for &(dst, w) in &out[src as usize] {
                let cell = &mut ring[target][dst as usize];
                *cell = sat_acc(*cell as i64 + w as i64 * ws as i64);
            }
        }
        let mut ev: Vec<SpikeEvent> = fired.iter().map(|&neuron| SpikeEvent { step: t, neuron }).collect();
        ev.sort_unstable();
        rec.events.extend(ev);
    }
    rec
}
