//! `neuromap` command-line driver.
//!
//! Every subcommand reads an optional `--config` TOML file first; flags
//! given on the command line override its values. Exit status is 0 on
//! success, 1 on runtime errors and 2 on invalid input or an infeasible
//! mapping.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "neuromap", version, about = "Compile connectomes onto a neuromorphic machine model and simulate them")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Condense, cap and quantize a raw edge table.
    Ingest(IngestArgs),
    /// Generate a synthetic heavy-tailed connectome.
    Synth(SynthArgs),
    /// Partition a connectome and build the routing tables.
    Compile(CompileArgs),
    /// Run the floating-point reference simulator.
    RunRef(RunRefArgs),
    /// Run the fixed-point machine simulator on a compiled machine.
    RunHw(RunHwArgs),
    /// Run two engines for N trials and compare per-neuron rates.
    Compare(CompareArgs),
    /// Degree distributions of a connectome, rate statistics of spike records.
    Stats(StatsArgs),
    /// Background-rate performance sweep on a compiled machine.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Raw `src,dst,weight` CSV; duplicate pairs are summed.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Canonical edge table to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Signed weight width; 0 keeps the raw sums.
    #[arg(long)]
    pub weight_bits: Option<u32>,
    /// Keep at most this many in-edges per neuron, sampled without replacement.
    #[arg(long)]
    pub fan_in_cap: Option<usize>,
    /// Seed for fan-in sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub mean_degree: usize,
    /// Pareto shape of the degree tail; smaller is heavier.
    #[arg(long, default_value_t = 2.0)]
    pub tail_exponent: f64,
    /// `flywire`, `uniform:LO,HI` or `lognormal:INHIBITORY_FRACTION,MEDIAN,SIGMA`.
    #[arg(long, default_value = "flywire")]
    pub weights: String,
    #[arg(long)]
    pub seed: u64,
    /// Signed weight width; 0 keeps the generated weights.
    #[arg(long, default_value_t = 9)]
    pub weight_bits: u32,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompileArgs {
    #[arg(long, value_name = "FILE")]
    pub connectome: Option<PathBuf>,
    /// `delivery` (shared synaptic delivery) or `routing` (shared axon routing).
    #[arg(long)]
    pub scheme: Option<String>,
    /// Per-core capacity limits (TOML).
    #[arg(long, value_name = "FILE")]
    pub capacities: Option<PathBuf>,
    /// Hardware limits (TOML).
    #[arg(long, value_name = "FILE")]
    pub hardware: Option<PathBuf>,
    /// Timestep the neuron program is compiled for.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-core memory accounting CSV.
    #[arg(long, value_name = "FILE")]
    pub memory_csv: Option<PathBuf>,
}

#[derive(Args, Default)]
pub struct TimingArgs {
    /// Simulated time in ms.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Timestep in ms.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Trial k uses seed + k.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Args, Default)]
pub struct StimulusArgs {
    /// Target list: one neuron id per line under a `neuron_id` header.
    #[arg(long, value_name = "FILE", conflicts_with = "stim_count")]
    pub stimulus: Option<PathBuf>,
    /// Pick this many net-excitatory neurons as targets instead.
    #[arg(long)]
    pub stim_count: Option<usize>,
    #[arg(long, default_value_t = 0, requires = "stim_count")]
    pub stim_seed: u64,
    #[arg(long)]
    pub stim_rate: Option<f64>,
    /// `direct_voltage` or `conductance_only` (reference only).
    #[arg(long)]
    pub stim_mode: Option<String>,
    /// mV per input spike.
    #[arg(long)]
    pub stim_amplitude: Option<f64>,
}

#[derive(Args)]
pub struct RunRefArgs {
    #[arg(long, value_name = "FILE")]
    pub connectome: Option<PathBuf>,
    #[command(flatten)]
    pub timing: TimingArgs,
    #[command(flatten)]
    pub stim: StimulusArgs,
    /// Model toggles: `none`, `toggled`, or a `+`-joined subset of `conductance_only`, `capped`.
    #[arg(long, default_value = "none")]
    pub model: String,
    /// Spike record; with several trials, trial k goes to `<stem>_k.csv`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunHwArgs {
    #[arg(long, value_name = "FILE")]
    pub machine: Option<PathBuf>,
    #[command(flatten)]
    pub timing: TimingArgs,
    #[command(flatten)]
    pub stim: StimulusArgs,
    /// Per-neuron background spike rate in Hz.
    #[arg(long, default_value_t = 0.0)]
    pub background_rate: f64,
    /// `counters` or `none`.
    #[arg(long, default_value = "counters")]
    pub record: String,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Performance counters as JSON.
    #[arg(long, value_name = "FILE")]
    pub perf: Option<PathBuf>,
    /// Spikes recoverable from the payload counters.
    #[arg(long, value_name = "FILE")]
    pub payloads: Option<PathBuf>,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Two engines, e.g. `ref:toggled,hw` or `ref:none,ref:conductance_only`.
    #[arg(long, default_value = "ref:toggled,hw")]
    pub engines: String,
    #[arg(long, value_name = "FILE")]
    pub connectome: Option<PathBuf>,
    /// Compiled machine for the `hw` engine; compiled on the fly if absent.
    #[arg(long, value_name = "FILE")]
    pub machine: Option<PathBuf>,
    #[command(flatten)]
    pub timing: TimingArgs,
    #[command(flatten)]
    pub stim: StimulusArgs,
    /// Minimum rate in either engine for a neuron to count as active.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Output file prefix.
    #[arg(long, default_value = "compare")]
    pub name: String,
    /// Also write every trial's spike record.
    #[arg(long)]
    pub rasters: bool,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "FILE")]
    pub connectome: Option<PathBuf>,
    /// Spike records to summarize as per-neuron rates.
    #[arg(long, value_name = "FILE", num_args = 1..)]
    pub spikes: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "FILE")]
    pub machine: Option<PathBuf>,
    /// Comma-separated background rates in Hz.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,5,10,20,40")]
    pub rates: Vec<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Timed repeats per rate; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Table as CSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::load_config(cli.config.as_deref()).and_then(|cfg| {
        let explicit = cli.config.is_some();
        match cli.command {
            Command::Ingest(a) => commands::ingest(cfg, a),
            Command::Synth(a) => commands::synth(a),
            Command::Compile(a) => commands::compile(cfg, a),
            Command::RunRef(a) => commands::run_ref(cfg, a),
            Command::RunHw(a) => commands::run_hw(cfg, a),
            Command::Compare(a) => commands::compare(cfg, explicit, a),
            Command::Stats(a) => commands::stats(cfg, a),
            Command::Sweep(a) => commands::sweep(cfg, a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
