#![allow(dead_code)]

pub mod oracle;

use neuromap::compiler::{build_routing, partition_greedy, CapacitySpec, CompiledMachine, CompressionScheme, Partitioning};
use neuromap::connectome::{generate_synthetic, Connectome, SynthSpec, WeightDist};
use neuromap::hw::{FixedPointSpec, HardwareConfig, NeuronProgram};
use neuromap::reference::{NeuronParams, StimulusMode, StimulusSpec};

/// Prints the verdict line for one criterion.
pub fn verdict(id: &str, pass: bool, detail: impl AsRef<str>) -> bool {
    println!("acceptance {id}: {} - {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    pass
}

pub fn skipped(id: &str, why: &str) {
    println!("acceptance {id}: SKIP - {why}");
}

pub fn program(dt_ms: f64, weight_scale_mv: f64, delay_ms: f64) -> NeuronProgram {
    NeuronProgram::compile(&NeuronParams::default(), dt_ms, weight_scale_mv, delay_ms, FixedPointSpec::default()).unwrap()
}

/// Partitions once with the delivery-scheme estimates, which bound both
/// schemes, and builds both machines on that partitioning.
pub fn compile_both(c: &Connectome, cap: &CapacitySpec, cfg: &HardwareConfig, prog: NeuronProgram) -> (Partitioning, [CompiledMachine; 2]) {
    let p = partition_greedy(c, cap, CompressionScheme::SharedSynapticDelivery, cfg).unwrap();
    let build = |s| build_routing(c, &p, s, cfg, prog).unwrap();
    let m = [build(CompressionScheme::SharedSynapticDelivery), build(CompressionScheme::SharedAxonRouting)];
    (p, m)
}

/// The desk-scale sugar experiment: a heavy-tailed 10K-neuron graph with
/// 9-bit weights and 20 Poisson inputs at 150 Hz.
pub struct Sugar {
    pub c: Connectome,
    pub params: NeuronParams,
    pub stimulus: StimulusSpec,
}

pub const SUGAR_NEURONS: usize = 10_000;
pub const SUGAR_INPUTS: usize = 20;
pub const SUGAR_RATE_HZ: f64 = 150.0;
/// Conductance increment per input spike.
pub const SUGAR_AMPLITUDE_MV: f64 = 60.0;
/// Neurons per core at the density of a 138K-neuron, 1440-core build.
pub const SUGAR_NEURONS_PER_CORE: usize = 96;

pub fn sugar() -> Sugar {
    let raw = generate_synthetic(&SynthSpec {
        n: SUGAR_NEURONS,
        mean_degree: 20,
        tail_exponent: 2.0,
        weights: WeightDist::flywire_like(),
        seed: 2024,
    })
    .unwrap();
    let c = raw.quantize_weights(9).unwrap().0;
    let targets = neuromap::analysis::select_stimulus_targets(&c, SUGAR_INPUTS, 99);
    let params = NeuronParams::default();
    let stimulus = StimulusSpec::poisson(targets, SUGAR_RATE_HZ, &params)
        .with_mode(StimulusMode::ConductanceOnly)
        .with_amplitude(SUGAR_AMPLITUDE_MV);
    Sugar { c, params, stimulus }
}

pub fn sugar_machine(s: &Sugar) -> CompiledMachine {
    let cfg = HardwareConfig::default();
    let cap = CapacitySpec { max_neurons_per_core: SUGAR_NEURONS_PER_CORE, ..Default::default() };
    let scheme = CompressionScheme::SharedAxonRouting;
    let p = partition_greedy(&s.c, &cap, scheme, &cfg).unwrap();
    build_routing(&s.c, &p, scheme, &cfg, program(0.1, s.c.weight_scale_mv(), s.c.delay_ms())).unwrap()
}
