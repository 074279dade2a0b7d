//! Flat floating-point reference simulator.
//!
//! Two-state current-based LIF neurons integrated with forward Euler, a
//! uniform synaptic delay realized by a ring of per-neuron input slots, and
//! Poisson stimulus drawn from a counter-based generator keyed by
//! `(seed, neuron, step)`.
//!
//! Within a step every neuron, in ascending index order, consumes its matured
//! input slot, integrates, applies stimulus and checks threshold; the spikes
//! of the step are then enqueued for delivery `delay` steps later.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::connectome::{Connectome, ConnectomeError};
use crate::record::{SpikeEvent, SpikeRecord};
use crate::rng::counter_uniform;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Connectome(#[from] ConnectomeError),
}

/// Whole number of steps closest to `ms`.
pub fn duration_steps(ms: f64, dt_ms: f64) -> u32 {
    (ms / dt_ms).round() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronParams {
    /// Resting potential (mV).
    pub v0: f64,
    /// Reset potential (mV).
    pub vr: f64,
    /// Threshold (mV).
    pub vth: f64,
    /// Membrane time constant (ms).
    pub tau_m: f64,
    /// Input decay time constant (ms).
    pub tau_g: f64,
    /// Refractory period (ms).
    pub tau_ref: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self { v0: 0.0, vr: 0.0, vth: 7.0, tau_m: 20.0, tau_g: 5.0, tau_ref: 2.2 }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.tau_m > 0.0 && self.tau_g > 0.0) {
            return Err(SimError::Config("time constants must be positive".into()));
        }
        if !(self.tau_ref >= 0.0) {
            return Err(SimError::Config("refractory period must be non-negative".into()));
        }
        if !(self.vth > self.vr) {
            return Err(SimError::Config(format!("threshold {} must exceed reset {}", self.vth, self.vr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState {
    pub v: f64,
    pub g: f64,
    /// Remaining frozen steps.
    pub refractory: u32,
}

impl NeuronState {
    pub fn rest(params: &NeuronParams) -> Self {
        Self { v: params.v0, g: 0.0, refractory: 0 }
    }
}

/// One forward Euler step with `input_acc` mV added to `g`. Returns true on
/// a spike, after which `v` and `g` are reset and the neuron is frozen for
/// the refractory period; inputs arriving while frozen are discarded.
pub fn euler_step(st: &mut NeuronState, params: &NeuronParams, dt: f64, input_acc: f64) -> bool {
    step_with(st, params, dt, input_acc, 0.0, duration_steps(params.tau_ref, dt))
}

#[inline]
fn step_with(
    st: &mut NeuronState,
    p: &NeuronParams,
    dt: f64,
    g_input: f64,
    v_kick: f64,
    refractory_steps: u32,
) -> bool {
    if st.refractory > 0 {
        st.refractory -= 1;
        return false;
    }
    let g = st.g + g_input;
    st.v += dt * (p.v0 - st.v + g) / p.tau_m;
    st.g = g - dt * g / p.tau_g;
    st.v += v_kick;
    if st.v > p.vth {
        st.v = p.vr;
        st.g = 0.0;
        st.refractory = refractory_steps.saturating_sub(1);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusMode {
    /// Adds the amplitude to `v` before the threshold check; stimulated
    /// neurons have no refractory period in this mode.
    #[default]
    DirectVoltage,
    /// Adds the amplitude to `g`, like any synaptic input.
    ConductanceOnly,
}

impl FromStr for StimulusMode {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "direct_voltage" | "direct" => Ok(Self::DirectVoltage),
            "conductance_only" | "conductance" => Ok(Self::ConductanceOnly),
            _ => Err(SimError::Config(format!("unknown stimulus mode '{s}'"))),
        }
    }
}

/// Poisson drive of a set of neurons, one independent source per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusSpec {
    pub targets: Vec<u32>,
    pub rate_hz: f64,
    pub mode: StimulusMode,
    /// mV added per input spike.
    pub amplitude_mv: f64,
}

impl Default for StimulusSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl StimulusSpec {
    pub fn none() -> Self {
        Self {
            targets: Vec::new(),
            rate_hz: 0.0,
            mode: StimulusMode::DirectVoltage,
            amplitude_mv: Self::default_amplitude(&NeuronParams::default()),
        }
    }

    /// Direct-voltage Poisson drive whose every input spike forces a spike.
    pub fn poisson(targets: Vec<u32>, rate_hz: f64, params: &NeuronParams) -> Self {
        Self { targets, rate_hz, mode: StimulusMode::DirectVoltage, amplitude_mv: Self::default_amplitude(params) }
    }

    pub fn default_amplitude(params: &NeuronParams) -> f64 {
        params.vth - params.vr + 1.0
    }

    pub fn with_mode(mut self, mode: StimulusMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_amplitude(mut self, amplitude_mv: f64) -> Self {
        self.amplitude_mv = amplitude_mv;
        self
    }

    pub fn validate(&self, n_neurons: usize) -> Result<(), SimError> {
        if !(self.rate_hz >= 0.0) || !self.rate_hz.is_finite() {
            return Err(SimError::Config(format!("stimulus rate must be non-negative, got {}", self.rate_hz)));
        }
        if let Some(t) = self.targets.iter().find(|&&t| t as usize >= n_neurons) {
            return Err(SimError::Config(format!("stimulus target {t} out of range for {n_neurons} neurons")));
        }
        Ok(())
    }

    /// Per-neuron membership mask.
    pub fn mask(&self, n_neurons: usize) -> Vec<bool> {
        let mut m = vec![false; n_neurons];
        for &t in &self.targets {
            m[t as usize] = true;
        }
        m
    }
}

/// Checks that `dt` tiles `duration` and the delay spans at least one step.
pub fn check_timing(duration_ms: f64, dt_ms: f64, delay_ms: f64) -> Result<(u32, u32), SimError> {
    if !(dt_ms > 0.0) || !(duration_ms >= 0.0) {
        return Err(SimError::Config(format!("bad timing: duration {duration_ms} ms, dt {dt_ms} ms")));
    }
    let steps = duration_ms / dt_ms;
    if (steps - steps.round()).abs() > 1e-6 {
        return Err(SimError::Config(format!("dt {dt_ms} ms does not divide duration {duration_ms} ms")));
    }
    let delay_steps = duration_steps(delay_ms, dt_ms);
    if delay_steps == 0 {
        return Err(SimError::Config(format!("delay {delay_ms} ms is shorter than one {dt_ms} ms step")));
    }
    Ok((steps.round() as u32, delay_steps))
}

pub fn run_reference(
    c: &Connectome,
    params: &NeuronParams,
    stim: &StimulusSpec,
    duration_ms: f64,
    dt_ms: f64,
    seed: u64,
) -> Result<SpikeRecord, SimError> {
    params.validate()?;
    stim.validate(c.n_neurons())?;
    let (n_steps, delay_steps) = check_timing(duration_ms, dt_ms, c.delay_ms())?;

    let n = c.n_neurons();
    let out = c.out_adjacency();
    let depth = delay_steps as usize + 1;
    // Integer weight sums per (slot, neuron); summation order cannot matter.
    let mut ring = vec![0i64; depth * n];
    let mut state = vec![NeuronState::rest(params); n];
    let stimulated = stim.mask(n);
    let p_stim = stim.rate_hz * dt_ms / 1000.0;
    let ref_steps = duration_steps(params.tau_ref, dt_ms);
    let direct = stim.mode == StimulusMode::DirectVoltage;
    let scale = c.weight_scale_mv();

    let mut record = SpikeRecord::new(n, dt_ms, duration_ms, seed);
    let mut fired: Vec<u32> = Vec::new();
    for t in 0..n_steps {
        let slot = &mut ring[(t as usize % depth) * n..][..n];
        fired.clear();
        for i in 0..n {
            let acc = std::mem::take(&mut slot[i]);
            let kick = stimulated[i] && p_stim > 0.0 && counter_uniform(seed, i as u64, t as u64) < p_stim;
            let (g_in, v_in, refr) = match (kick, direct && stimulated[i]) {
                (true, true) => (0.0, stim.amplitude_mv, 0),
                (false, true) => (0.0, 0.0, 0),
                (true, false) => (stim.amplitude_mv, 0.0, ref_steps),
                (false, false) => (0.0, 0.0, ref_steps),
            };
            let input = acc as f64 * scale + g_in;
            if step_with(&mut state[i], params, dt_ms, input, v_in, refr) {
                fired.push(i as u32);
            }
        }
        let target_slot = ((t + delay_steps) as usize % depth) * n;
        for &src in &fired {
            record.events.push(SpikeEvent { step: t, neuron: src });
            let (targets, weights) = out.targets(src as usize);
            for (&dst, &w) in targets.iter().zip(weights) {
                ring[target_slot + dst as usize] += w as i64;
            }
        }
    }
    Ok(record)
}

/// Independent switches for the hardware approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelToggles {
    pub conductance_only_input: bool,
    pub capped_weights: bool,
}

impl ModelToggles {
    pub const NONE: Self = Self { conductance_only_input: false, capped_weights: false };
    pub const HARDWARE: Self = Self { conductance_only_input: true, capped_weights: true };
}

impl fmt::Display for ModelToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.conductance_only_input, self.capped_weights) {
            (false, false) => write!(f, "none"),
            (true, false) => write!(f, "conductance_only"),
            (false, true) => write!(f, "capped"),
            (true, true) => write!(f, "conductance_only,capped"),
        }
    }
}

/// Comma-separated `conductance_only`, `capped`; `none` or `toggled`
/// (both) are also accepted.
impl FromStr for ModelToggles {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        let mut t = Self::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" | "base" => {}
                "toggled" | "hardware" | "all" => t = Self::HARDWARE,
                "conductance_only" | "conductance" => t.conductance_only_input = true,
                "capped" | "capped_weights" => t.capped_weights = true,
                other => return Err(SimError::Config(format!("unknown model toggle '{other}'"))),
            }
        }
        Ok(t)
    }
}

/// A complete reference-simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub connectome: Connectome,
    pub params: NeuronParams,
    pub stimulus: StimulusSpec,
    /// Width used when weights are capped.
    pub weight_bits: u32,
}

impl ReferenceModel {
    pub fn new(connectome: Connectome, params: NeuronParams, stimulus: StimulusSpec) -> Self {
        Self { connectome, params, stimulus, weight_bits: 9 }
    }

    pub fn run(&self, duration_ms: f64, dt_ms: f64, seed: u64) -> Result<SpikeRecord, SimError> {
        run_reference(&self.connectome, &self.params, &self.stimulus, duration_ms, dt_ms, seed)
    }
}

/// Derives the ablation variant of `base`. Both toggles off returns an
/// identical model; both on is the behavioral model of the compiled machine.
pub fn apply_model_toggles(base: &ReferenceModel, toggles: ModelToggles) -> Result<ReferenceModel, SimError> {
    let mut m = base.clone();
    if toggles.conductance_only_input {
        m.stimulus.mode = StimulusMode::ConductanceOnly;
    }
    if toggles.capped_weights {
        m.connectome = base.connectome.quantize_weights(base.weight_bits)?.0;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectome::Edge;

    #[test]
    fn rest_is_fixed_point() {
        let p = NeuronParams::default();
        let mut st = NeuronState::rest(&p);
        assert!(!euler_step(&mut st, &p, 0.1, 0.0));
        assert_eq!((st.v, st.g), (0.0, 0.0));
    }

    #[test]
    fn single_step_arithmetic() {
        let p = NeuronParams::default();
        let mut st = NeuronState { v: 0.0, g: 1.0, refractory: 0 };
        euler_step(&mut st, &p, 0.1, 0.0);
        assert!((st.v - 0.005).abs() < 1e-15);
        assert!((st.g - 0.98).abs() < 1e-15);
    }

    /// Closed form of dv/dt = (g - v)/tau_m with g held constant.
    fn closed_form(g: f64, t: f64, tau_m: f64) -> f64 {
        g * (1.0 - (-t / tau_m).exp())
    }

    #[test]
    fn euler_tracks_closed_form() {
        let p = NeuronParams { tau_g: 1e12, vth: 1e9, ..Default::default() };
        let mut st = NeuronState { v: 0.0, g: 10.0, refractory: 0 };
        for step in 1..=1000 {
            euler_step(&mut st, &p, 0.1, 0.0);
            let t = step as f64 * 0.1;
            if step == 200 {
                let exact = closed_form(10.0, t, 20.0);
                assert!((st.v - exact).abs() / exact < 0.005, "{} vs {exact}", st.v);
            }
        }
        let exact = closed_form(10.0, 100.0, 20.0);
        assert!((st.v - exact).abs() / exact < 0.01);
    }

    #[test]
    fn spike_resets_and_freezes() {
        let p = NeuronParams::default();
        let mut st = NeuronState { v: 6.99, g: 100.0, refractory: 0 };
        assert!(euler_step(&mut st, &p, 0.1, 0.0));
        assert_eq!((st.v, st.g, st.refractory), (0.0, 0.0, 21));
        for _ in 0..21 {
            assert!(!euler_step(&mut st, &p, 0.1, 50.0));
        }
        assert_eq!(st.g, 0.0);
    }

    #[test]
    fn no_input_is_silent() {
        let c = crate::connectome::generate_synthetic(&crate::connectome::SynthSpec {
            n: 300,
            mean_degree: 20,
            tail_exponent: 2.0,
            weights: crate::connectome::WeightDist::Uniform { lo: -50, hi: 80 },
            seed: 1,
        })
        .unwrap();
        let r = run_reference(&c, &NeuronParams::default(), &StimulusSpec::none(), 200.0, 0.1, 5).unwrap();
        assert!(r.is_empty());
    }

    /// A (stimulated) drives B over one synapse; B's input appears exactly
    /// 18 steps after A's spike.
    #[test]
    fn delay_is_exact() {
        let c = Connectome::from_edges(2, [Edge::new(0, 1, 6000)]).unwrap();
        let p = NeuronParams::default();
        let stim = StimulusSpec::poisson(vec![0], 150.0, &p);
        let r = run_reference(&c, &p, &stim, 1000.0, 0.1, 11).unwrap();
        let a: Vec<u32> = r.events.iter().filter(|e| e.neuron == 0).map(|e| e.step).collect();
        let b: Vec<u32> = r.events.iter().filter(|e| e.neuron == 1).map(|e| e.step).collect();
        assert!(!a.is_empty());
        // 1650 mV into g crosses 7 mV on the very step it lands.
        for &sb in &b {
            assert!(a.contains(&(sb - 18)), "B spiked at {sb} without an A spike at {}", sb - 18);
        }
        let first = a[0];
        assert_eq!(b[0], first + 18);
    }

    #[test]
    fn rejects_sub_step_delay_and_ragged_duration() {
        let c = Connectome::empty(2).with_delay_ms(0.04).unwrap();
        let p = NeuronParams::default();
        assert!(run_reference(&c, &p, &StimulusSpec::none(), 10.0, 0.1, 0).is_err());
        let c = Connectome::empty(2);
        assert!(run_reference(&c, &p, &StimulusSpec::none(), 10.05, 0.1, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let c = crate::connectome::generate_synthetic(&crate::connectome::SynthSpec {
            n: 400,
            mean_degree: 30,
            tail_exponent: 2.0,
            weights: crate::connectome::WeightDist::Uniform { lo: -20, hi: 60 },
            seed: 2,
        })
        .unwrap();
        let p = NeuronParams::default();
        let stim = StimulusSpec::poisson((0..20).collect(), 150.0, &p);
        let a = run_reference(&c, &p, &stim, 300.0, 0.1, 9).unwrap();
        let b = run_reference(&c, &p, &stim, 300.0, 0.1, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.is_sorted());
        assert!(!a.is_empty());
    }

    #[test]
    fn refractory_separates_spikes() {
        let c = crate::connectome::generate_synthetic(&crate::connectome::SynthSpec {
            n: 400,
            mean_degree: 30,
            tail_exponent: 2.0,
            weights: crate::connectome::WeightDist::Uniform { lo: -10, hi: 120 },
            seed: 4,
        })
        .unwrap();
        let p = NeuronParams::default();
        let stim = StimulusSpec::poisson((0..30).collect(), 150.0, &p).with_mode(StimulusMode::ConductanceOnly).with_amplitude(40.0);
        for dt in [0.1, 1.0] {
            let r = run_reference(&c, &p, &stim, 500.0, dt, 1).unwrap();
            assert!(r.len() > 100);
            let min = r.min_isi_steps(|_| true).unwrap();
            assert!(min >= duration_steps(2.2, dt), "dt {dt}: {min}");
        }
    }

    #[test]
    fn direct_drive_bypasses_refractory() {
        let c = Connectome::empty(1);
        let p = NeuronParams::default();
        let stim = StimulusSpec::poisson(vec![0], 2000.0, &p);
        let r = run_reference(&c, &p, &stim, 1000.0, 0.1, 3).unwrap();
        assert_eq!(r.min_isi_steps(|_| true), Some(1));
        // Every input spike forces an output spike.
        let expected = 10_000.0 * 0.2;
        assert!((r.len() as f64 - expected).abs() < 4.0 * (expected * 0.8f64).sqrt());
    }

    #[test]
    fn toggles_parse_and_apply() {
        assert_eq!("toggled".parse::<ModelToggles>().unwrap(), ModelToggles::HARDWARE);
        assert_eq!("capped".parse::<ModelToggles>().unwrap().to_string(), "capped");
        assert!("fast".parse::<ModelToggles>().is_err());

        let c = Connectome::from_edges(2, [Edge::new(0, 1, 900)]).unwrap();
        let p = NeuronParams::default();
        let base = ReferenceModel::new(c, p, StimulusSpec::poisson(vec![0], 150.0, &p));
        assert_eq!(apply_model_toggles(&base, ModelToggles::NONE).unwrap(), base);
        let hw = apply_model_toggles(&base, ModelToggles::HARDWARE).unwrap();
        assert_eq!(hw.stimulus.mode, StimulusMode::ConductanceOnly);
        assert_eq!(hw.connectome.in_edges(1).1, &[255]);
    }
}
