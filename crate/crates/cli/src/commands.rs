use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use neuromap::analysis::{export_distribution, mean_rates, parity, select_stimulus_targets, write_report, ReportSummary};
use neuromap::compiler::{
    build_routing, effective_fan_ins, flatten, load_machine, memory_reports, partition_greedy, save_machine,
    validate_machine, CapacitySpec, CompiledMachine, CompressionScheme,
};
use neuromap::config::ExperimentConfig;
use neuromap::connectome::{generate_synthetic, load_edge_table, write_edge_table, Connectome, EdgeFormat, SynthSpec, WeightDist};
use neuromap::coresim::{run_background_sweep, run_compiled, PerfCounters, RecordMode, RunConfig};
use neuromap::hw::{write_memory_csv, FixedPointSpec, HardwareConfig, NeuronProgram};
use neuromap::record::SpikeRecord;
use neuromap::reference::{apply_model_toggles, ModelToggles, ReferenceModel};

use crate::exit::invalid;
use crate::{
    CompareArgs, CompileArgs, IngestArgs, RunHwArgs, RunRefArgs, StatsArgs, StimulusArgs, SweepArgs, SynthArgs, TimingArgs,
};

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// Provenance sidecar `<path>.meta.json`. Holds no timestamps, so reruns
/// with the same inputs leave every file byte-identical.
fn write_meta(path: &Path, v: serde_json::Value) -> Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    fs::write(&name, serde_json::to_string_pretty(&v)? + "\n").with_context(|| format!("writing {}", Path::new(&name).display()))
}

fn trial_path(out: &Path, k: usize, trials: usize) -> PathBuf {
    if trials == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{k}"),
    };
    out.with_file_name(name)
}

fn apply_timing(cfg: &mut ExperimentConfig, t: &TimingArgs) -> Result<()> {
    if let Some(d) = t.duration {
        cfg.duration_ms = d;
    }
    if let Some(dt) = t.dt {
        cfg.dt_ms = dt;
    }
    if let Some(s) = t.seed {
        cfg.seed = s;
    }
    if let Some(n) = t.trials {
        cfg.trials = n;
    }
    cfg.validate()?;
    Ok(())
}

fn read_targets(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut targets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "neuron_id" {
            continue;
        }
        let id = line.split(',').next().unwrap_or("").trim();
        targets.push(id.parse().map_err(|_| invalid(format!("{}:{}: bad neuron id '{id}'", path.display(), i + 1)))?);
    }
    targets.sort_unstable();
    targets.dedup();
    Ok(targets)
}

/// `pool` is only needed for `--stim-count`.
fn apply_stimulus(cfg: &mut ExperimentConfig, a: &StimulusArgs, pool: Option<&Connectome>) -> Result<()> {
    if let Some(p) = &a.stimulus {
        cfg.stimulus.targets = read_targets(p)?;
    }
    if let Some(k) = a.stim_count {
        let c = pool.ok_or_else(|| invalid("--stim-count needs a connectome"))?;
        cfg.stimulus.targets = select_stimulus_targets(c, k, a.stim_seed);
    }
    if let Some(r) = a.stim_rate {
        cfg.stimulus.rate_hz = r;
    }
    if let Some(m) = &a.stim_mode {
        cfg.stimulus.mode = m.parse()?;
    }
    if let Some(x) = a.stim_amplitude {
        cfg.stimulus.amplitude_mv = x;
    }
    Ok(())
}

fn connectome(cfg: &ExperimentConfig, flag: Option<&PathBuf>) -> Result<Connectome> {
    let path = flag
        .or(cfg.paths.connectome.as_ref())
        .ok_or_else(|| invalid("no connectome: pass --connectome or set paths.connectome"))?;
    let c = load_edge_table(path, EdgeFormat::Csv).with_context(|| format!("reading {}", path.display()))?;
    let c = c.with_delay_ms(cfg.delay_ms)?.with_weight_scale_mv(cfg.weight_scale_mv);
    Ok(match cfg.fan_in_cap {
        Some(cap) => c.cap_fan_in(cap, cfg.seed)?,
        None => c,
    })
}

fn machine(cfg: &ExperimentConfig, flag: Option<&PathBuf>) -> Result<CompiledMachine> {
    let path = flag.or(cfg.paths.machine.as_ref()).ok_or_else(|| invalid("no machine: pass --machine or set paths.machine"))?;
    load_machine(path).with_context(|| format!("reading {}", path.display()))
}

fn build_machine(cfg: &ExperimentConfig, c: &Connectome) -> Result<CompiledMachine> {
    let prog = NeuronProgram::compile(&cfg.neuron, cfg.dt_ms, c.weight_scale_mv(), c.delay_ms(), FixedPointSpec::default())?;
    let p = partition_greedy(c, &cfg.capacities, cfg.scheme, &cfg.hardware)?;
    Ok(build_routing(c, &p, cfg.scheme, &cfg.hardware, prog)?)
}

/// The connectome a machine implements, recovered from its tables.
fn machine_connectome(m: &CompiledMachine) -> Result<Connectome> {
    Ok(Connectome::from_edges(m.n_neurons(), flatten(m))?)
}

fn record_summary(r: &SpikeRecord) -> serde_json::Value {
    let secs = r.duration_ms / 1000.0;
    let mean = if secs > 0.0 && r.n_neurons > 0 { r.len() as f64 / secs / r.n_neurons as f64 } else { 0.0 };
    json!({ "seed": r.seed, "spikes": r.len(), "mean_rate_hz": mean })
}

pub fn ingest(mut cfg: ExperimentConfig, a: IngestArgs) -> Result<()> {
    if let Some(b) = a.weight_bits {
        cfg.weight_bits = b;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut c = load_edge_table(&a.input, EdgeFormat::Csv).with_context(|| format!("reading {}", a.input.display()))?;
    let raw_edges = c.n_edges();
    if let Some(cap) = a.fan_in_cap.or(cfg.fan_in_cap) {
        c = c.cap_fan_in(cap, cfg.seed)?;
    }
    let mut quant = None;
    if cfg.weight_bits > 0 {
        let (q, report) = c.quantize_weights(cfg.weight_bits)?;
        c = q;
        quant = Some(report);
    }
    write_edge_table(&c, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let s = c.degree_stats();
    let summary = json!({
        "n_neurons": c.n_neurons(),
        "condensed_edges": raw_edges,
        "n_edges": c.n_edges(),
        "max_fan_in": s.max_fan_in,
        "max_fan_out": s.max_fan_out,
        "quantization": quant,
        "config_hash": cfg.hash(),
    });
    write_meta(&a.out, json!({ "command": "ingest", "input": a.input, "summary": summary.clone() }))?;
    print_json(&summary)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let weights = match a.weights.as_str() {
        "flywire" => WeightDist::flywire_like(),
        s => s.parse()?,
    };
    let spec = SynthSpec { n: a.n, mean_degree: a.mean_degree, tail_exponent: a.tail_exponent, weights, seed: a.seed };
    let mut c = generate_synthetic(&spec)?;
    if a.weight_bits > 0 {
        c = c.quantize_weights(a.weight_bits)?.0;
    }
    write_edge_table(&c, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let s = c.degree_stats();
    let summary = json!({
        "n_neurons": c.n_neurons(),
        "n_edges": c.n_edges(),
        "max_fan_in": s.max_fan_in,
        "max_fan_out": s.max_fan_out,
        "median_fan_in": s.median_fan_in(),
    });
    write_meta(&a.out, json!({ "command": "synth", "spec": spec, "weight_bits": a.weight_bits }))?;
    print_json(&summary)
}

pub fn compile(mut cfg: ExperimentConfig, a: CompileArgs) -> Result<()> {
    if let Some(s) = &a.scheme {
        cfg.scheme = s.parse()?;
    }
    if let Some(p) = &a.capacities {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.capacities = CapacitySpec::from_toml_str(&text)?;
    }
    if let Some(p) = &a.hardware {
        cfg.hardware = HardwareConfig::load(p).with_context(|| format!("reading {}", p.display()))?;
    }
    if let Some(dt) = a.dt {
        cfg.dt_ms = dt;
    }
    cfg.validate()?;
    let out = a.out.clone().or(cfg.paths.machine.clone()).ok_or_else(|| invalid("no output: pass --out or set paths.machine"))?;
    let c = connectome(&cfg, a.connectome.as_ref())?;
    let m = build_machine(&cfg, &c)?;
    let report = validate_machine(&m, &c);
    if !report.passed {
        bail!("compiled machine failed validation: {}", report.problems().join("; "));
    }
    let memory = memory_reports(&m);
    if let Some(p) = &a.memory_csv {
        write_memory_csv(&memory, p).with_context(|| format!("writing {}", p.display()))?;
    }
    save_machine(&m, &out).with_context(|| format!("writing {}", out.display()))?;
    let p = &m.partitioning;
    let summary = json!({
        "scheme": m.scheme,
        "n_neurons": m.n_neurons(),
        "n_chips": p.n_chips(),
        "n_cores": p.n_cores(),
        "n_used_cores": p.n_used_cores(),
        "routing_entries": m.n_routing_entries(),
        "synapses": m.n_synapses(),
        "mean_utilization": report.mean_utilization,
        "max_utilization": memory.iter().map(|r| r.utilization).fold(0.0, f64::max),
        "machine_hash": m.config_hash_hex(),
        "config_hash": cfg.hash(),
    });
    write_meta(&out, json!({ "command": "compile", "summary": summary.clone() }))?;
    print_json(&summary)
}

fn parse_toggles(s: &str) -> Result<ModelToggles> {
    Ok(s.replace('+', ",").parse()?)
}

pub fn run_ref(mut cfg: ExperimentConfig, a: RunRefArgs) -> Result<()> {
    cfg.trials = 1;
    apply_timing(&mut cfg, &a.timing)?;
    let c = connectome(&cfg, a.connectome.as_ref())?;
    apply_stimulus(&mut cfg, &a.stim, Some(&c))?;
    let toggles = parse_toggles(&a.model)?;
    let model = apply_model_toggles(&ReferenceModel::new(c, cfg.neuron, cfg.stimulus.clone()), toggles)?;
    let mut trials = Vec::new();
    for k in 0..cfg.trials {
        let r = model.run(cfg.duration_ms, cfg.dt_ms, cfg.trial_seed(k))?;
        let path = trial_path(&a.out, k, cfg.trials);
        r.write_csv(&path).with_context(|| format!("writing {}", path.display()))?;
        trials.push(record_summary(&r));
    }
    let summary = json!({ "engine": format!("ref:{toggles}"), "trials": trials, "config_hash": cfg.hash() });
    write_meta(&a.out, json!({ "command": "run-ref", "summary": summary.clone() }))?;
    print_json(&summary)
}

#[derive(Serialize)]
struct PerfFile {
    seed: u64,
    perf: PerfCounters,
    /// Present with `--record counters`.
    counters: Option<serde_json::Value>,
    machine_hash: String,
    config_hash: String,
}

pub fn run_hw(mut cfg: ExperimentConfig, a: RunHwArgs) -> Result<()> {
    let m = machine(&cfg, a.machine.as_ref())?;
    // The machine fixes the timestep unless a flag asks for another one.
    cfg.dt_ms = m.program.dt_ms();
    cfg.trials = 1;
    apply_timing(&mut cfg, &a.timing)?;
    let pool = if a.stim.stim_count.is_some() { Some(machine_connectome(&m)?) } else { None };
    apply_stimulus(&mut cfg, &a.stim, pool.as_ref())?;
    let record: RecordMode = a.record.parse()?;
    if record == RecordMode::None && (a.out.is_some() || a.payloads.is_some()) {
        return Err(invalid("--out and --payloads need --record counters"));
    }
    let mut trials = Vec::new();
    for k in 0..cfg.trials {
        let rc = RunConfig {
            duration_ms: cfg.duration_ms,
            dt_ms: cfg.dt_ms,
            seed: cfg.trial_seed(k),
            stimulus: cfg.stimulus.clone(),
            background_rate_hz: a.background_rate,
            record,
            threads: None,
        };
        let out = run_compiled(&m, &rc)?;
        if let Some(p) = &a.out {
            let path = trial_path(p, k, cfg.trials);
            out.record.write_csv(&path).with_context(|| format!("writing {}", path.display()))?;
        }
        if let (Some(p), Some(c)) = (&a.payloads, &out.counters) {
            let path = trial_path(p, k, cfg.trials);
            c.payloads.write_csv(&path).with_context(|| format!("writing {}", path.display()))?;
        }
        let counters = out.counters.as_ref().map(|c| {
            json!({ "true_spikes": c.true_spikes, "recorded_payloads": c.recorded_payloads, "loss": c.loss() })
        });
        let perf = PerfFile { seed: rc.seed, perf: out.perf, counters, machine_hash: m.config_hash_hex(), config_hash: cfg.hash() };
        if let Some(p) = &a.perf {
            let path = trial_path(p, k, cfg.trials);
            fs::write(&path, serde_json::to_string_pretty(&perf)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        }
        trials.push(perf);
    }
    if let Some(p) = &a.out {
        write_meta(p, json!({ "command": "run-hw", "machine_hash": m.config_hash_hex(), "config_hash": cfg.hash() }))?;
    }
    print_json(&trials)
}

enum Engine {
    Ref(ModelToggles),
    Hw,
}

impl Engine {
    fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "hw" => Ok(Engine::Hw),
            "ref" => Ok(Engine::Ref(ModelToggles::NONE)),
            other => match other.strip_prefix("ref:") {
                Some(t) => Ok(Engine::Ref(parse_toggles(t)?)),
                None => Err(invalid(format!("unknown engine '{other}' (expected hw or ref[:TOGGLES])"))),
            },
        }
    }

    fn label(&self) -> String {
        match self {
            Engine::Ref(t) => format!("ref:{}", t.to_string().replace(',', "+")),
            Engine::Hw => "hw".into(),
        }
    }
}

pub fn compare(mut cfg: ExperimentConfig, config_given: bool, a: CompareArgs) -> Result<()> {
    if a.timing.seed.is_none() && !config_given {
        return Err(invalid("compare needs an explicit seed: pass --seed or a config file"));
    }
    let engines: Vec<Engine> = a.engines.split(',').map(Engine::parse).collect::<Result<_>>()?;
    let [ea, eb] = engines.as_slice() else {
        return Err(invalid(format!("--engines takes exactly two engines, got '{}'", a.engines)));
    };
    if let Some(t) = a.threshold {
        cfg.active_threshold_hz = t;
    }
    apply_timing(&mut cfg, &a.timing)?;
    let needs_hw = matches!(ea, Engine::Hw) || matches!(eb, Engine::Hw);
    let m = match (needs_hw, a.machine.as_ref().or(cfg.paths.machine.as_ref())) {
        (true, Some(p)) => Some(machine(&cfg, Some(p))?),
        _ => None,
    };
    let needs_graph = !matches!((ea, eb), (Engine::Hw, Engine::Hw)) || (needs_hw && m.is_none()) || a.stim.stim_count.is_some();
    let c = if needs_graph { Some(connectome(&cfg, a.connectome.as_ref())?) } else { None };
    apply_stimulus(&mut cfg, &a.stim, c.as_ref())?;
    let m = match (needs_hw, m, &c) {
        (true, Some(m), _) => Some(m),
        (true, None, Some(c)) => Some(build_machine(&cfg, c)?),
        _ => None,
    };

    let out_dir = a.out_dir.clone().or(cfg.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut tables = Vec::new();
    for e in [ea, eb] {
        let mut records = Vec::with_capacity(cfg.trials);
        match e {
            Engine::Ref(t) => {
                let base = ReferenceModel::new(c.clone().expect("loaded above"), cfg.neuron, cfg.stimulus.clone());
                let model = apply_model_toggles(&base, *t)?;
                for k in 0..cfg.trials {
                    records.push(model.run(cfg.duration_ms, cfg.dt_ms, cfg.trial_seed(k))?);
                }
            }
            Engine::Hw => {
                let m = m.as_ref().expect("built above");
                for k in 0..cfg.trials {
                    let rc = RunConfig { stimulus: cfg.stimulus.clone(), ..RunConfig::new(cfg.duration_ms, cfg.dt_ms, cfg.trial_seed(k)) };
                    records.push(run_compiled(m, &rc)?.record);
                }
            }
        }
        if a.rasters {
            let label = e.label().replace([':', '+'], "_");
            for (k, r) in records.iter().enumerate() {
                let path = out_dir.join(format!("{}_{label}_trial{k}.csv", a.name));
                r.write_csv(&path).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        let n = records.first().map_or(0, |r| r.n_neurons);
        tables.push(mean_rates(&records, n)?);
    }
    let stats = parity(&tables[0], &tables[1], cfg.active_threshold_hz)?;
    let summary = ReportSummary::new(&a.name, (&ea.label(), &eb.label()), &tables[0], &tables[1], &stats, &cfg.hash());
    let (csv, json_path) = write_report(&out_dir, &a.name, &stats, &summary)?;
    match stats.pearson_r {
        Some(r) => println!("r = {r:.4} over {} active neurons (>= {} Hz)", stats.n_active(), cfg.active_threshold_hz),
        None => println!("r undefined: {} active neurons (>= {} Hz)", stats.n_active(), cfg.active_threshold_hz),
    }
    println!("max |diff| {:.3} Hz, {} above / {} below parity", stats.max_abs_diff_hz, stats.above, stats.below);
    println!("wrote {} and {}", csv.display(), json_path.display());
    Ok(())
}

pub fn stats(cfg: ExperimentConfig, a: StatsArgs) -> Result<()> {
    let have_graph = a.connectome.is_some() || (a.spikes.is_empty() && cfg.paths.connectome.is_some());
    if !have_graph && a.spikes.is_empty() {
        return Err(invalid("nothing to summarize: pass --connectome and/or --spikes"));
    }
    let out_dir = a.out_dir.clone().or(cfg.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut summary = serde_json::Map::new();
    if have_graph {
        let c = connectome(&cfg, a.connectome.as_ref())?;
        let s = c.degree_stats();
        s.write_csv(out_dir.join("degrees.csv"))?;
        s.write_cumulative_csv(out_dir.join("degrees_cumulative.csv"))?;
        let mut effective = serde_json::Map::new();
        for scheme in CompressionScheme::ALL {
            let f = effective_fan_ins(&c, scheme);
            let short = match scheme {
                CompressionScheme::SharedSynapticDelivery => "delivery",
                CompressionScheme::SharedAxonRouting => "routing",
            };
            export_distribution(&f, out_dir.join(format!("effective_fan_in_{short}.csv")), true)?;
            effective.insert(scheme.to_string(), json!(f.iter().copied().max().unwrap_or(0)));
        }
        summary.insert(
            "connectome".into(),
            json!({
                "n_neurons": c.n_neurons(),
                "n_edges": s.n_edges,
                "n_autapses": s.n_autapses,
                "max_fan_in": s.max_fan_in,
                "max_fan_out": s.max_fan_out,
                "median_fan_in": s.median_fan_in(),
                "median_fan_out": s.median_fan_out(),
                "max_effective_fan_in": effective,
            }),
        );
    }
    if !a.spikes.is_empty() {
        let records: Vec<SpikeRecord> = a
            .spikes
            .iter()
            .map(|p| SpikeRecord::read_csv(p).with_context(|| format!("reading {}", p.display())))
            .collect::<Result<_>>()?;
        let t = mean_rates(&records, records[0].n_neurons)?;
        export_distribution(&t.rates_hz, out_dir.join("rates.csv"), false)?;
        summary.insert(
            "rates".into(),
            json!({
                "trials": t.trials,
                "mean_rate_hz": t.mean_hz(),
                "max_rate_hz": t.rates_hz.iter().copied().fold(0.0, f64::max),
                "active": t.n_active(cfg.active_threshold_hz),
                "active_threshold_hz": cfg.active_threshold_hz,
            }),
        );
    }
    print_json(&summary)
}

pub fn sweep(mut cfg: ExperimentConfig, a: SweepArgs) -> Result<()> {
    if a.rates.is_empty() {
        return Err(invalid("--rates is empty"));
    }
    let m = machine(&cfg, a.machine.as_ref())?;
    if let Some(d) = a.duration {
        cfg.duration_ms = d;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let template = RunConfig { threads: a.threads, ..RunConfig::new(cfg.duration_ms, m.program.dt_ms(), cfg.seed) };
    let points = run_background_sweep(&m, &a.rates, &template, a.repeats)?;
    let header = "rate_hz,wall_ms,steps,neuron_updates,spikes,messages_routed,accumulator_additions,accumulator_saturations,background_spikes";
    let rows: Vec<String> = points
        .iter()
        .map(|p| {
            let f = &p.perf;
            format!(
                "{},{:.3},{},{},{},{},{},{},{}",
                p.rate_hz,
                p.wall_ms,
                f.steps,
                f.neuron_updates,
                f.spikes,
                f.messages_routed,
                f.accumulator_additions,
                f.accumulator_saturations,
                f.background_spikes
            )
        })
        .collect();
    if let Some(p) = &a.out {
        fs::write(p, format!("{header}\n{}\n", rows.join("\n"))).with_context(|| format!("writing {}", p.display()))?;
        write_meta(p, json!({ "command": "sweep", "repeats": a.repeats, "machine_hash": m.config_hash_hex(), "config_hash": cfg.hash() }))?;
    }
    println!("{:>8} {:>12} {:>12} {:>14}", "rate_hz", "wall_ms", "spikes", "messages");
    for p in &points {
        println!("{:>8} {:>12.2} {:>12} {:>14}", p.rate_hz, p.wall_ms, p.perf.spikes, p.perf.messages_routed);
    }
    Ok(())
}
