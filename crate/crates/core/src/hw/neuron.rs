use serde::{Deserialize, Serialize};

use super::{FixedPointSpec, HwError};
use crate::reference::{duration_steps, NeuronParams};

/// Fixed-point neuron program: the LIF constants pre-quantized for one
/// timestep size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeuronProgram {
    pub spec: FixedPointSpec,
    /// Timestep in microseconds, kept integral so the program hashes.
    pub dt_us: u32,
    pub v0: i32,
    pub vr: i32,
    pub vth: i32,
    /// dt / tau_m
    pub k_m: i32,
    /// dt / tau_g
    pub k_g: i32,
    /// mV delivered per unit of integer weight.
    pub weight_scale: i32,
    pub refractory_steps: u32,
    pub delay_steps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FixedState {
    pub v: i32,
    pub g: i32,
    /// Remaining frozen steps.
    pub refractory: u32,
}

impl NeuronProgram {
    pub fn compile(
        params: &NeuronParams,
        dt_ms: f64,
        weight_scale_mv: f64,
        delay_ms: f64,
        spec: FixedPointSpec,
    ) -> Result<Self, HwError> {
        if !spec.is_valid() {
            return Err(HwError::Config(format!("invalid fixed-point format {spec:?}")));
        }
        params.validate().map_err(|e| HwError::Config(e.to_string()))?;
        if !(dt_ms > 0.0) {
            return Err(HwError::Config(format!("timestep must be positive, got {dt_ms}")));
        }
        let dt_us = (dt_ms * 1000.0).round();
        if (dt_us / 1000.0 - dt_ms).abs() > 1e-9 || dt_us > u32::MAX as f64 {
            return Err(HwError::Config(format!("timestep {dt_ms} ms is not a whole number of microseconds")));
        }
        let q = |name: &'static str, value: f64| -> Result<i32, HwError> {
            match spec.to_fixed(value) {
                (v, false) => Ok(v),
                (_, true) => Err(HwError::Overflow { name, value }),
            }
        };
        let delay_steps = duration_steps(delay_ms, dt_ms);
        if delay_steps == 0 {
            return Err(HwError::Config(format!("delay {delay_ms} ms is shorter than one {dt_ms} ms step")));
        }
        Ok(Self {
            spec,
            dt_us: dt_us as u32,
            v0: q("v0", params.v0)?,
            vr: q("vr", params.vr)?,
            vth: q("vth", params.vth)?,
            k_m: q("dt/tau_m", dt_ms / params.tau_m)?,
            k_g: q("dt/tau_g", dt_ms / params.tau_g)?,
            weight_scale: q("weight_scale", weight_scale_mv)?,
            refractory_steps: duration_steps(params.tau_ref, dt_ms),
            delay_steps,
        })
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_us as f64 / 1000.0
    }

    pub fn rest(&self) -> FixedState {
        FixedState { v: self.v0, g: 0, refractory: 0 }
    }

    /// One timestep with `input` from the accumulator. Returns true on a
    /// threshold crossing; inputs arriving while refractory are discarded.
    #[inline]
    pub fn step(&self, st: &mut FixedState, input: i32) -> bool {
        if st.refractory > 0 {
            st.refractory -= 1;
            return false;
        }
        if input == 0 && st.g == 0 && st.v == self.v0 && self.v0 <= self.vth {
            return false;
        }
        let s = &self.spec;
        let g = s.add(st.g, input);
        let drive = s.saturate(self.v0 as i64 - st.v as i64 + g as i64);
        let dv = s.mul(drive, self.k_m);
        let dg = s.mul(g, self.k_g);
        st.v = s.add(st.v, dv);
        st.g = s.add(g, -dg);
        if st.v > self.vth {
            self.fire(st);
            true
        } else {
            false
        }
    }

    /// Reset after a spike, whatever caused it.
    #[inline]
    pub fn fire(&self, st: &mut FixedState) {
        st.v = self.vr;
        st.g = 0;
        st.refractory = self.refractory_steps.saturating_sub(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{euler_step, NeuronState};

    fn program(dt: f64) -> NeuronProgram {
        NeuronProgram::compile(&NeuronParams::default(), dt, 0.275, 1.8, FixedPointSpec::default()).unwrap()
    }

    #[test]
    fn step_counts_follow_timestep() {
        let p = program(0.1);
        assert_eq!((p.refractory_steps, p.delay_steps), (22, 18));
        assert_eq!((p.k_m, p.k_g, p.weight_scale, p.vth), (20, 82, 1126, 7 * 4096));
        let p = program(1.0);
        assert_eq!((p.refractory_steps, p.delay_steps), (2, 2));
        assert_eq!((p.k_m, p.k_g), (205, 819));
    }

    #[test]
    fn delay_shorter_than_step_rejected() {
        let r = NeuronProgram::compile(&NeuronParams::default(), 1.0, 0.275, 0.2, FixedPointSpec::default());
        assert!(r.is_err());
    }

    #[test]
    fn rest_is_fixed_point() {
        let p = program(0.1);
        let mut st = p.rest();
        for _ in 0..100 {
            assert!(!p.step(&mut st, 0));
        }
        assert_eq!(st, p.rest());
    }

    #[test]
    fn refractory_freezes_and_discards() {
        let p = program(0.1);
        let mut st = p.rest();
        p.fire(&mut st);
        assert_eq!(st.refractory, 21);
        for _ in 0..21 {
            assert!(!p.step(&mut st, 1 << 20));
            assert_eq!((st.v, st.g), (0, 0));
        }
        p.step(&mut st, 4096);
        assert!(st.g > 0);
    }

    /// Against a float step that uses the same quantized constants, the
    /// fixed-point step differs only by product truncation.
    #[test]
    fn tracks_float_step_within_resolution() {
        let p = NeuronProgram { vth: i32::MAX, ..program(0.1) };
        let spec = p.spec;
        let params = NeuronParams {
            tau_m: 0.1 / spec.from_fixed(p.k_m),
            tau_g: 0.1 / spec.from_fixed(p.k_g),
            vth: 1e9,
            ..Default::default()
        };
        let mut worst = 0.0f64;
        for i in 0..=300 {
            for j in 0..=300 {
                let v = -64.0 + 128.0 * i as f64 / 300.0;
                let g = -64.0 + 128.0 * j as f64 / 300.0;
                let mut fx = FixedState { v: spec.to_fixed(v).0, g: spec.to_fixed(g).0, refractory: 0 };
                let mut fl = NeuronState { v: spec.from_fixed(fx.v), g: spec.from_fixed(fx.g), refractory: 0 };
                p.step(&mut fx, 0);
                euler_step(&mut fl, &params, 0.1, 0.0);
                worst = worst
                    .max((spec.from_fixed(fx.v) - fl.v).abs())
                    .max((spec.from_fixed(fx.g) - fl.g).abs());
            }
        }
        assert!(worst < 2f64.powi(-10), "worst deviation {worst}");
    }
}
