//! Connectome compiler for memory-limited neuromorphic machines, with a
//! floating-point reference simulator and a fixed-point simulator of the
//! compiled machine.

pub mod analysis;
pub mod compiler;
pub mod config;
pub mod connectome;
pub mod coresim;
pub mod hw;
pub mod record;
pub mod reference;
pub mod rng;
