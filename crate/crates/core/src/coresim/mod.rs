//! Fixed-point execution of a compiled machine.
//!
//! Every step runs in three barrier-separated phases: all cores update
//! their neurons, spike messages are routed into per-core inboxes in
//! ascending (source chip, core, local neuron, route entry) order, and all
//! cores apply their inboxes to the dendritic accumulators. Cores are
//! processed in parallel; the result does not depend on the thread count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{CompiledMachine, CoreTable};
use crate::hw::{core_seed, FixedState, LfsrState, NeuronProgram, Probability};
use crate::record::{SpikeEvent, SpikeRecord};
use crate::reference::{check_timing, SimError, StimulusSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    /// Keep the spike record and read payload counters.
    #[default]
    Counters,
    /// Performance counters only.
    None,
}

impl FromStr for RecordMode {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "counters" => Ok(Self::Counters),
            "none" => Ok(Self::None),
            _ => Err(SimError::Config(format!("unknown record mode '{s}'"))),
        }
    }
}

impl fmt::Display for RecordMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Counters => "counters",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub duration_ms: f64,
    /// Must equal the timestep the machine was compiled for.
    pub dt_ms: f64,
    pub seed: u64,
    /// Always delivered into `g`; the stimulus mode is ignored.
    pub stimulus: StimulusSpec,
    pub background_rate_hz: f64,
    pub record: RecordMode,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration_ms: 1000.0,
            dt_ms: 0.1,
            seed: 0,
            stimulus: StimulusSpec::none(),
            background_rate_hz: 0.0,
            record: RecordMode::Counters,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn new(duration_ms: f64, dt_ms: f64, seed: u64) -> Self {
        Self { duration_ms, dt_ms, seed, ..Default::default() }
    }
}

/// Event totals of one run. `messages_routed` counts fired route entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerfCounters {
    pub steps: u64,
    pub neuron_updates: u64,
    pub spikes: u64,
    pub messages_routed: u64,
    pub accumulator_additions: u64,
    pub accumulator_saturations: u64,
    pub stimulus_events: u64,
    pub background_spikes: u64,
}

impl PerfCounters {
    fn merge(&mut self, o: &PerfCounters) {
        self.neuron_updates += o.neuron_updates;
        self.spikes += o.spikes;
        self.messages_routed += o.messages_routed;
        self.accumulator_additions += o.accumulator_additions;
        self.accumulator_saturations += o.accumulator_saturations;
        self.stimulus_events += o.stimulus_events;
        self.background_spikes += o.background_spikes;
    }
}

/// Readout of the per-core payload counters. Each step a counter adds every
/// spike of its core but keeps a single payload: the last one processed in
/// descending local order, which is the lowest local index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterReport {
    /// Total count per flat core.
    pub counts: Vec<u64>,
    /// Spikes recoverable from the recorded payloads.
    pub payloads: SpikeRecord,
    pub true_spikes: u64,
    pub recorded_payloads: u64,
}

impl CounterReport {
    /// Fraction of spikes whose identity was lost.
    pub fn loss(&self) -> f64 {
        if self.true_spikes == 0 {
            0.0
        } else {
            1.0 - self.recorded_payloads as f64 / self.true_spikes as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Every spike; empty when recording is off.
    pub record: SpikeRecord,
    pub perf: PerfCounters,
    pub counters: Option<CounterReport>,
}

struct CoreRuntime {
    n: usize,
    state: Vec<FixedState>,
    /// `depth` slots of `n` accumulators, slot-major.
    ring: Vec<i32>,
    lfsr: LfsrState,
    stimulated: Vec<bool>,
    spikes: Vec<u32>,
    perf: PerfCounters,
    count: u64,
    payloads: Vec<SpikeEvent>,
}

struct Drive {
    p_stim: Probability,
    amp: i32,
    p_bg: Probability,
    acc_min: i32,
    acc_max: i32,
    depth: usize,
    keep_payloads: bool,
}

impl CoreRuntime {
    fn update(&mut self, t: u32, table: &CoreTable, prog: &NeuronProgram, d: &Drive) {
        let slot = &mut self.ring[(t as usize % d.depth) * self.n..][..self.n];
        self.spikes.clear();
        for l in 0..self.n {
            let mut acc = std::mem::take(&mut slot[l]);
            if self.stimulated[l] && self.lfsr.bernoulli(d.p_stim) {
                let sum = acc as i64 + d.amp as i64;
                acc = sum.clamp(d.acc_min as i64, d.acc_max as i64) as i32;
                self.perf.accumulator_saturations += (acc as i64 != sum) as u64;
                self.perf.accumulator_additions += 1;
                self.perf.stimulus_events += 1;
            }
            let background = !d.p_bg.is_zero() && self.lfsr.bernoulli(d.p_bg);
            let st = &mut self.state[l];
            let mut fired = prog.step(st, acc);
            if background && !fired {
                prog.fire(st);
                fired = true;
                self.perf.background_spikes += 1;
            }
            if fired {
                self.spikes.push(l as u32);
            }
        }
        self.perf.neuron_updates += self.n as u64;
        self.perf.spikes += self.spikes.len() as u64;
        self.count += self.spikes.len() as u64;
        if d.keep_payloads {
            if let Some(&first) = self.spikes.first() {
                self.payloads.push(SpikeEvent { step: t, neuron: table.neurons[first as usize] });
            }
        }
    }

    fn deliver(&mut self, t: u32, inbox: &[u32], table: &CoreTable, prog: &NeuronProgram, d: &Drive) {
        for &axon in inbox {
            for s in table.delivery(axon as usize) {
                let i = ((t + s.delay) as usize % d.depth) * self.n + s.target as usize;
                let sum = self.ring[i] as i64 + s.weight as i64 * prog.weight_scale as i64;
                let v = sum.clamp(d.acc_min as i64, d.acc_max as i64) as i32;
                self.perf.accumulator_saturations += (v as i64 != sum) as u64;
                self.ring[i] = v;
            }
            self.perf.accumulator_additions += table.delivery(axon as usize).len() as u64;
        }
    }
}

pub fn run_compiled(m: &CompiledMachine, rc: &RunConfig) -> Result<RunOutput, SimError> {
    run_with_program(m, &m.program, rc)
}

/// Runs with counters on and returns the payload readout.
pub fn record_spikes_via_counters(m: &CompiledMachine, rc: &RunConfig) -> Result<(SpikeRecord, CounterReport), SimError> {
    let rc = RunConfig { record: RecordMode::Counters, ..rc.clone() };
    let out = run_compiled(m, &rc)?;
    Ok((out.record, out.counters.expect("counters enabled")))
}

fn run_with_program(m: &CompiledMachine, prog: &NeuronProgram, rc: &RunConfig) -> Result<RunOutput, SimError> {
    match rc.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| SimError::Config(e.to_string()))?;
            pool.install(|| run_inner(m, prog, rc))
        }
        None => run_inner(m, prog, rc),
    }
}

fn run_inner(m: &CompiledMachine, prog: &NeuronProgram, rc: &RunConfig) -> Result<RunOutput, SimError> {
    if (rc.dt_ms - prog.dt_ms()).abs() > 1e-9 {
        return Err(SimError::Config(format!("machine was compiled for dt = {} ms, run requests {} ms", prog.dt_ms(), rc.dt_ms)));
    }
    let (n_steps, _) = check_timing(rc.duration_ms, rc.dt_ms, prog.delay_steps as f64 * rc.dt_ms)?;
    if !(rc.background_rate_hz >= 0.0) || !rc.background_rate_hz.is_finite() {
        return Err(SimError::Config(format!("background rate must be non-negative, got {}", rc.background_rate_hz)));
    }
    let n = m.n_neurons();
    rc.stimulus.validate(n)?;
    let (amp, saturated) = prog.spec.to_fixed(rc.stimulus.amplitude_mv);
    if saturated && !rc.stimulus.targets.is_empty() {
        return Err(SimError::Config(format!("stimulus amplitude {} mV overflows the fixed-point format", rc.stimulus.amplitude_mv)));
    }
    let d = Drive {
        p_stim: Probability::from_rate(rc.stimulus.rate_hz, rc.dt_ms),
        amp,
        p_bg: Probability::from_rate(rc.background_rate_hz, rc.dt_ms),
        acc_min: m.hw.accum_min(),
        acc_max: m.hw.accum_max(),
        depth: m.hw.accum_depth,
        keep_payloads: rc.record == RecordMode::Counters,
    };
    let stim_mask = rc.stimulus.mask(n);
    let p = &m.partitioning;
    let mut cores: Vec<CoreRuntime> = m
        .cores
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (chip, core) = p.split(k);
            let nl = t.neurons.len();
            CoreRuntime {
                n: nl,
                state: vec![prog.rest(); nl],
                ring: vec![0; d.depth * nl],
                lfsr: LfsrState::new(core_seed(rc.seed, chip, core, m.hw.cores_per_chip)),
                stimulated: t.neurons.iter().map(|&g| stim_mask[g as usize]).collect(),
                spikes: Vec::new(),
                perf: PerfCounters::default(),
                count: 0,
                payloads: Vec::new(),
            }
        })
        .collect();
    let mut inboxes: Vec<Vec<u32>> = vec![Vec::new(); m.cores.len()];
    let mut record = SpikeRecord::new(n, rc.dt_ms, rc.duration_ms, rc.seed);
    let mut messages = 0u64;
    let mut step_spikes: Vec<u32> = Vec::new();
    let parallel = rayon::current_num_threads() > 1 && cores.len() > 1;

    for t in 0..n_steps {
        if parallel {
            cores.par_iter_mut().zip(&m.cores).for_each(|(rt, table)| rt.update(t, table, prog, &d));
        } else {
            cores.iter_mut().zip(&m.cores).for_each(|(rt, table)| rt.update(t, table, prog, &d));
        }

        for inbox in inboxes.iter_mut() {
            inbox.clear();
        }
        step_spikes.clear();
        for (rt, table) in cores.iter().zip(&m.cores) {
            for &l in &rt.spikes {
                let routes = table.routes_of(l as usize);
                messages += routes.len() as u64;
                for r in routes {
                    inboxes[m.flat_core(r.chip, r.core)].push(r.axon);
                }
                if d.keep_payloads {
                    step_spikes.push(table.neurons[l as usize]);
                }
            }
        }
        if d.keep_payloads {
            step_spikes.sort_unstable();
            record.events.extend(step_spikes.iter().map(|&neuron| SpikeEvent { step: t, neuron }));
        }

        let work = cores.iter_mut().zip(&m.cores).zip(&inboxes).filter(|(_, inbox)| !inbox.is_empty());
        if parallel {
            work.par_bridge().for_each(|((rt, table), inbox)| rt.deliver(t, inbox, table, prog, &d));
        } else {
            work.for_each(|((rt, table), inbox)| rt.deliver(t, inbox, table, prog, &d));
        }
    }

    let mut perf = PerfCounters { steps: n_steps as u64, messages_routed: messages, ..Default::default() };
    for rt in &cores {
        perf.merge(&rt.perf);
    }
    let counters = d.keep_payloads.then(|| {
        let mut payloads = SpikeRecord::new(n, rc.dt_ms, rc.duration_ms, rc.seed);
        payloads.events = cores.iter().flat_map(|rt| rt.payloads.iter().copied()).collect();
        payloads.events.sort_unstable();
        CounterReport {
            counts: cores.iter().map(|rt| rt.count).collect(),
            recorded_payloads: payloads.len() as u64,
            payloads,
            true_spikes: perf.spikes,
        }
    });
    Ok(RunOutput { record, perf, counters })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rate_hz: f64,
    pub perf: PerfCounters,
    /// Fastest of the timed repeats.
    pub wall_ms: f64,
}

/// One background-driven run per rate with synaptic input disabled, so
/// every spike comes from the background process. Recording is off.
pub fn run_background_sweep(
    m: &CompiledMachine,
    rates: &[f64],
    template: &RunConfig,
    repeats: usize,
) -> Result<Vec<SweepPoint>, SimError> {
    let prog = NeuronProgram { weight_scale: 0, ..m.program };
    rates
        .iter()
        .map(|&rate| {
            let rc = RunConfig { background_rate_hz: rate, record: RecordMode::None, ..template.clone() };
            let mut best = f64::INFINITY;
            let mut perf = PerfCounters::default();
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                perf = run_with_program(m, &prog, &rc)?.perf;
                best = best.min(start.elapsed().as_secs_f64() * 1000.0);
            }
            Ok(SweepPoint { rate_hz: rate, perf, wall_ms: best })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{build_routing, effective_fan_outs, partition_greedy, CapacitySpec, CompressionScheme, Partitioning};
    use crate::connectome::{generate_synthetic, Connectome, Edge, SynthSpec, WeightDist};
    use crate::hw::{FixedPointSpec, HardwareConfig};
    use crate::reference::NeuronParams;

    fn program(dt: f64) -> NeuronProgram {
        NeuronProgram::compile(&NeuronParams::default(), dt, 0.275, 1.8, FixedPointSpec::default()).unwrap()
    }

    fn compile(c: &Connectome, scheme: CompressionScheme, per_core: usize, dt: f64) -> CompiledMachine {
        let cfg = HardwareConfig { cores_per_chip: 8, payload_counters_per_chip: 8, ..Default::default() };
        let cap = CapacitySpec { max_neurons_per_core: per_core, ..Default::default() };
        let p = partition_greedy(c, &cap, scheme, &cfg).unwrap();
        build_routing(c, &p, scheme, &cfg, program(dt)).unwrap()
    }

    fn network(seed: u64) -> Connectome {
        generate_synthetic(&SynthSpec {
            n: 600,
            mean_degree: 30,
            tail_exponent: 2.0,
            weights: WeightDist::Uniform { lo: -60, hi: 200 },
            seed,
        })
        .unwrap()
    }

    fn driven(seed: u64) -> RunConfig {
        let p = NeuronParams::default();
        RunConfig {
            stimulus: StimulusSpec::poisson((0..20).collect(), 150.0, &p).with_amplitude(150.0),
            ..RunConfig::new(300.0, 0.1, seed)
        }
    }

    #[test]
    fn silent_without_input() {
        let m = compile(&network(1), CompressionScheme::SharedAxonRouting, 100, 0.1);
        let out = run_compiled(&m, &RunConfig::new(200.0, 0.1, 3)).unwrap();
        assert!(out.record.is_empty());
        assert_eq!(out.perf.spikes, 0);
        assert_eq!(out.perf.neuron_updates, 600 * 2000);
    }

    #[test]
    fn schemes_agree_and_counters_add_up() {
        let c = network(2);
        let a = compile(&c, CompressionScheme::SharedSynapticDelivery, 100, 0.1);
        let b = compile(&c, CompressionScheme::SharedAxonRouting, 100, 0.1);
        assert_eq!(a.partitioning, b.partitioning);
        let rc = driven(7);
        let ra = run_compiled(&a, &rc).unwrap();
        let rb = run_compiled(&b, &rc).unwrap();
        assert!(ra.record.len() > 200, "{}", ra.record.len());
        assert_eq!(ra.record, rb.record);
        for (m, out) in [(&a, &ra), (&b, &rb)] {
            let counters = out.counters.as_ref().unwrap();
            assert_eq!(counters.counts.iter().sum::<u64>(), out.perf.spikes);
            assert_eq!(out.perf.spikes, out.record.len() as u64);
            let fo = effective_fan_outs(&c, &m.partitioning, m.scheme);
            let expected: u64 = out.record.events.iter().map(|e| fo[e.neuron as usize] as u64).sum();
            assert_eq!(out.perf.messages_routed, expected);
        }
        assert!(rb.perf.messages_routed > ra.perf.messages_routed);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let m = compile(&network(3), CompressionScheme::SharedSynapticDelivery, 50, 0.1);
        let one = run_compiled(&m, &RunConfig { threads: Some(1), ..driven(5) }).unwrap();
        let four = run_compiled(&m, &RunConfig { threads: Some(4), ..driven(5) }).unwrap();
        assert_eq!(one, four);
        assert!(!one.record.is_empty());
    }

    #[test]
    fn refractory_holds_at_both_timesteps() {
        let c = network(4);
        for (dt, min) in [(0.1, 22), (1.0, 2)] {
            let m = compile(&c, CompressionScheme::SharedAxonRouting, 100, dt);
            let rc = RunConfig { dt_ms: dt, ..driven(9) };
            let out = run_compiled(&m, &rc).unwrap();
            assert!(out.record.len() > 50);
            assert!(out.record.min_isi_steps(|_| true).unwrap() >= min);
        }
    }

    /// A fires from a forcing stimulus and B fires on the very step A's
    /// input matures.
    #[test]
    fn delay_is_exact() {
        let c = Connectome::from_edges(2, [Edge::new(0, 1, 255)]).unwrap();
        let p = Partitioning::from_groups(2, &[vec![0], vec![1]], 120).unwrap();
        // 255 * 6 mV into g moves v past threshold in one step.
        let prog = NeuronProgram::compile(&NeuronParams::default(), 0.1, 6.0, 1.8, FixedPointSpec::default()).unwrap();
        let m = build_routing(&c, &p, CompressionScheme::SharedAxonRouting, &HardwareConfig::default(), prog).unwrap();
        let rc = RunConfig {
            stimulus: StimulusSpec { targets: vec![0], rate_hz: 10_000.0, amplitude_mv: 2000.0, ..StimulusSpec::none() },
            ..RunConfig::new(5.1, 0.1, 1)
        };
        let out = run_compiled(&m, &rc).unwrap();
        let steps = |n: u32| out.record.events.iter().filter(|e| e.neuron == n).map(|e| e.step).collect::<Vec<_>>();
        assert_eq!(steps(0), [0, 22, 44]);
        assert_eq!(steps(1), [18, 40]);
        assert_eq!(out.perf.accumulator_additions, out.perf.stimulus_events + 3);
        assert_eq!(out.perf.accumulator_saturations, 0);
    }

    #[test]
    fn two_spikes_one_counter_one_payload() {
        let c = Connectome::empty(3);
        let p = Partitioning::from_groups(3, &[vec![0, 1, 2]], 120).unwrap();
        let m = build_routing(&c, &p, CompressionScheme::SharedSynapticDelivery, &HardwareConfig::default(), program(0.1)).unwrap();
        let rc = RunConfig {
            stimulus: StimulusSpec { targets: vec![1, 2], rate_hz: 10_000.0, amplitude_mv: 2000.0, ..StimulusSpec::none() },
            ..RunConfig::new(0.1, 0.1, 1)
        };
        let (record, counters) = record_spikes_via_counters(&m, &rc).unwrap();
        assert_eq!(record.len(), 2);
        assert_eq!(counters.counts[0], 2);
        assert_eq!(counters.payloads.events, vec![SpikeEvent { step: 0, neuron: 1 }]);
        assert!((counters.loss() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_timestep() {
        let m = compile(&network(1), CompressionScheme::SharedAxonRouting, 100, 0.1);
        assert!(run_compiled(&m, &RunConfig::new(100.0, 1.0, 0)).is_err());
    }

    #[test]
    fn sweep_counts_background_spikes() {
        let m = compile(&network(5), CompressionScheme::SharedAxonRouting, 200, 1.0);
        let rc = RunConfig::new(1000.0, 1.0, 2);
        let pts = run_background_sweep(&m, &[0.0, 20.0], &rc, 1).unwrap();
        assert_eq!(pts[0].perf.spikes, 0);
        let expected = 600.0 * 1000.0 * 0.02;
        let sd = (expected * 0.98f64).sqrt();
        assert!((pts[1].perf.spikes as f64 - expected).abs() < 3.0 * sd);
        assert_eq!(pts[1].perf.spikes, pts[1].perf.background_spikes);
    }
}
