//! Python bindings: connectomes, compiled machines, both simulators and
//! the rate-parity analysis.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use neuromap::analysis;
use neuromap::compiler::{self, CapacitySpec, CompileError, CompressionScheme};
use neuromap::connectome::{self as conn, ConnectomeError, EdgeFormat, SynthSpec, WeightDist};
use neuromap::coresim::{self, PerfCounters, RunConfig};
use neuromap::hw::{FixedPointSpec, HardwareConfig, NeuronProgram};
use neuromap::record;
use neuromap::reference::{self, ModelToggles, NeuronParams, StimulusMode, StimulusSpec};

create_exception!(pyneuromap, MappingError, PyValueError, "The connectome does not fit the requested capacities.");

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn compile_err(e: CompileError) -> PyErr {
    match e {
        CompileError::Infeasible { .. } | CompileError::Memory(_) => MappingError::new_err(e.to_string()),
        CompileError::Io(io) => PyOSError::new_err(io.to_string()),
        e => value_err(e),
    }
}

fn conn_err(e: ConnectomeError) -> PyErr {
    match e {
        ConnectomeError::Io(io) => PyOSError::new_err(io.to_string()),
        e => value_err(e),
    }
}

fn parse_scheme(s: &str) -> PyResult<CompressionScheme> {
    s.parse().map_err(compile_err)
}

#[pyclass(module = "pyneuromap", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Connectome {
    inner: conn::Connectome,
}

#[pymethods]
impl Connectome {
    /// `edges` is a list of `(src, dst, weight)`; duplicate pairs are summed.
    #[new]
    #[pyo3(signature = (n_neurons, edges, delay_ms = conn::DEFAULT_DELAY_MS, weight_scale_mv = conn::DEFAULT_WEIGHT_SCALE_MV))]
    fn new(n_neurons: usize, edges: Vec<(u32, u32, i32)>, delay_ms: f64, weight_scale_mv: f64) -> PyResult<Self> {
        let c = conn::Connectome::from_edges(n_neurons, edges.into_iter().map(|(s, d, w)| conn::Edge::new(s, d, w)))
            .and_then(|c| c.with_delay_ms(delay_ms))
            .map_err(conn_err)?;
        Ok(Self { inner: c.with_weight_scale_mv(weight_scale_mv) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: conn::load_edge_table(path, EdgeFormat::Csv).map_err(conn_err)? })
    }

    /// Heavy-tailed random graph; `weights` is `flywire`, `uniform:LO,HI`
    /// or `lognormal:P_INH,MEDIAN,SIGMA`.
    #[staticmethod]
    #[pyo3(signature = (n, mean_degree = 20, tail_exponent = 2.0, weights = "flywire", seed = 0))]
    fn synthetic(n: usize, mean_degree: usize, tail_exponent: f64, weights: &str, seed: u64) -> PyResult<Self> {
        let weights = match weights {
            "flywire" => WeightDist::flywire_like(),
            s => s.parse().map_err(conn_err)?,
        };
        let inner = conn::generate_synthetic(&SynthSpec { n, mean_degree, tail_exponent, weights, seed }).map_err(conn_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        conn::write_edge_table(&self.inner, path).map_err(conn_err)
    }

    #[getter]
    fn n_neurons(&self) -> usize {
        self.inner.n_neurons()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.inner.n_edges()
    }

    #[getter]
    fn delay_ms(&self) -> f64 {
        self.inner.delay_ms()
    }

    #[getter]
    fn weight_scale_mv(&self) -> f64 {
        self.inner.weight_scale_mv()
    }

    fn edges(&self) -> Vec<(u32, u32, i32)> {
        self.inner.edges().map(|e| (e.src, e.dst, e.weight)).collect()
    }

    fn fan_in(&self) -> Vec<u32> {
        self.inner.degree_stats().fan_in
    }

    fn fan_out(&self) -> Vec<u32> {
        self.inner.degree_stats().fan_out
    }

    #[pyo3(signature = (scheme = "routing"))]
    fn effective_fan_in(&self, scheme: &str) -> PyResult<Vec<u32>> {
        Ok(compiler::effective_fan_ins(&self.inner, parse_scheme(scheme)?))
    }

    /// Returns the quantized graph and `(n_capped_pos, n_capped_neg)`.
    #[pyo3(signature = (bits = 9))]
    fn quantize(&self, bits: u32) -> PyResult<(Connectome, (usize, usize))> {
        let (c, r) = self.inner.quantize_weights(bits).map_err(conn_err)?;
        Ok((Self { inner: c }, (r.n_capped_pos, r.n_capped_neg)))
    }

    #[pyo3(signature = (max_in, seed = 0))]
    fn cap_fan_in(&self, max_in: usize, seed: u64) -> PyResult<Connectome> {
        Ok(Self { inner: self.inner.cap_fan_in(max_in, seed).map_err(conn_err)? })
    }

    #[pyo3(signature = (count, seed = 0))]
    fn select_stimulus_targets(&self, count: usize, seed: u64) -> Vec<u32> {
        analysis::select_stimulus_targets(&self.inner, count, seed)
    }

    fn __repr__(&self) -> String {
        format!("Connectome(n_neurons={}, n_edges={})", self.inner.n_neurons(), self.inner.n_edges())
    }
}

#[pyclass(module = "pyneuromap", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct SpikeRecord {
    inner: record::SpikeRecord,
}

#[pymethods]
impl SpikeRecord {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: record::SpikeRecord::read_csv(path).map_err(value_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn n_neurons(&self) -> usize {
        self.inner.n_neurons
    }

    #[getter]
    fn dt_ms(&self) -> f64 {
        self.inner.dt_ms
    }

    #[getter]
    fn duration_ms(&self) -> f64 {
        self.inner.duration_ms
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// `(timestep, neuron_id)` pairs in time order.
    fn events(&self) -> Vec<(u32, u32)> {
        self.inner.events.iter().map(|e| (e.step, e.neuron)).collect()
    }

    fn spike_counts(&self) -> Vec<u64> {
        self.inner.spike_counts()
    }

    /// Smallest same-neuron interspike interval in steps, `None` without repeats.
    #[pyo3(signature = (exclude = Vec::new()))]
    fn min_isi_steps(&self, exclude: Vec<u32>) -> Option<u32> {
        self.inner.min_isi_steps(|i| !exclude.contains(&i))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("SpikeRecord(n_neurons={}, spikes={}, duration_ms={})", self.inner.n_neurons, self.inner.len(), self.inner.duration_ms)
    }
}

fn perf_dict<'py>(py: Python<'py>, p: &PerfCounters) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("steps", p.steps)?;
    d.set_item("neuron_updates", p.neuron_updates)?;
    d.set_item("spikes", p.spikes)?;
    d.set_item("messages_routed", p.messages_routed)?;
    d.set_item("accumulator_additions", p.accumulator_additions)?;
    d.set_item("accumulator_saturations", p.accumulator_saturations)?;
    d.set_item("stimulus_events", p.stimulus_events)?;
    d.set_item("background_spikes", p.background_spikes)?;
    Ok(d)
}

fn stimulus(targets: Vec<u32>, rate_hz: f64, mode: &str, amplitude_mv: Option<f64>) -> PyResult<StimulusSpec> {
    let params = NeuronParams::default();
    let mode: StimulusMode = mode.parse().map_err(value_err)?;
    let mut s = StimulusSpec::poisson(targets, rate_hz, &params).with_mode(mode);
    if let Some(a) = amplitude_mv {
        s = s.with_amplitude(a);
    }
    Ok(s)
}

#[pyclass(module = "pyneuromap", frozen)]
pub struct Machine {
    inner: compiler::CompiledMachine,
}

#[pymethods]
impl Machine {
    /// Greedy partitioning and table construction. Raises `MappingError`
    /// when a neuron cannot fit an empty core.
    #[staticmethod]
    #[pyo3(signature = (connectome, scheme = "routing", dt_ms = 0.1, max_neurons_per_core = None, cores_per_chip = None))]
    fn compile(
        py: Python<'_>,
        connectome: &Connectome,
        scheme: &str,
        dt_ms: f64,
        max_neurons_per_core: Option<usize>,
        cores_per_chip: Option<usize>,
    ) -> PyResult<Self> {
        let scheme = parse_scheme(scheme)?;
        let c = &connectome.inner;
        let mut cap = CapacitySpec::default();
        if let Some(n) = max_neurons_per_core {
            cap.max_neurons_per_core = n;
        }
        let mut hw = HardwareConfig::default();
        if let Some(k) = cores_per_chip {
            hw.cores_per_chip = k;
            hw.payload_counters_per_chip = k;
        }
        let prog = NeuronProgram::compile(&NeuronParams::default(), dt_ms, c.weight_scale_mv(), c.delay_ms(), FixedPointSpec::default())
            .map_err(value_err)?;
        let m = py
            .detach(|| {
                let p = compiler::partition_greedy(c, &cap, scheme, &hw)?;
                compiler::build_routing(c, &p, scheme, &hw, prog)
            })
            .map_err(compile_err)?;
        Ok(Self { inner: m })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: compiler::load_machine(path).map_err(compile_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        compiler::save_machine(&self.inner, path).map_err(compile_err)
    }

    #[getter]
    fn scheme(&self) -> &'static str {
        self.inner.scheme.as_str()
    }

    #[getter]
    fn n_neurons(&self) -> usize {
        self.inner.n_neurons()
    }

    #[getter]
    fn n_chips(&self) -> usize {
        self.inner.partitioning.n_chips()
    }

    #[getter]
    fn n_used_cores(&self) -> usize {
        self.inner.partitioning.n_used_cores()
    }

    #[getter]
    fn n_routing_entries(&self) -> usize {
        self.inner.n_routing_entries()
    }

    #[getter]
    fn n_synapses(&self) -> usize {
        self.inner.n_synapses()
    }

    #[getter]
    fn dt_ms(&self) -> f64 {
        self.inner.program.dt_ms()
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash_hex()
    }

    /// Per-core `(chip, core, utilization)`.
    fn utilization(&self) -> Vec<(usize, usize, f64)> {
        compiler::memory_reports(&self.inner).iter().map(|r| (r.chip, r.core, r.utilization)).collect()
    }

    /// The edge multiset encoded in the tables.
    fn flatten(&self) -> Connectome {
        let edges = compiler::flatten(&self.inner);
        let inner = conn::Connectome::from_edges(self.inner.n_neurons(), edges).expect("machine edges are in range");
        Connectome { inner }
    }

    /// `(passed, problems, mean_utilization)` against the source connectome.
    fn validate(&self, connectome: &Connectome) -> (bool, Vec<String>, f64) {
        let r = compiler::validate_machine(&self.inner, &connectome.inner);
        (r.passed, r.problems(), r.mean_utilization)
    }

    /// Returns the spike record and the performance counters. Stimulus is
    /// always delivered as conductance.
    #[pyo3(signature = (duration_ms = 1000.0, seed = 0, targets = Vec::new(), rate_hz = 0.0, amplitude_mv = None, background_rate_hz = 0.0))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        duration_ms: f64,
        seed: u64,
        targets: Vec<u32>,
        rate_hz: f64,
        amplitude_mv: Option<f64>,
        background_rate_hz: f64,
    ) -> PyResult<(SpikeRecord, Bound<'py, PyDict>)> {
        let rc = RunConfig {
            stimulus: stimulus(targets, rate_hz, "conductance_only", amplitude_mv)?,
            background_rate_hz,
            ..RunConfig::new(duration_ms, self.inner.program.dt_ms(), seed)
        };
        let out = py.detach(|| coresim::run_compiled(&self.inner, &rc)).map_err(value_err)?;
        Ok((SpikeRecord { inner: out.record }, perf_dict(py, &out.perf)?))
    }

    /// One row per rate: `rate_hz`, `wall_ms` and the performance counters.
    #[pyo3(signature = (rates, duration_ms = 1000.0, seed = 0, repeats = 1))]
    fn sweep<'py>(&self, py: Python<'py>, rates: Vec<f64>, duration_ms: f64, seed: u64, repeats: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let template = RunConfig::new(duration_ms, self.inner.program.dt_ms(), seed);
        let points = py.detach(|| coresim::run_background_sweep(&self.inner, &rates, &template, repeats)).map_err(value_err)?;
        points
            .iter()
            .map(|p| {
                let d = perf_dict(py, &p.perf)?;
                d.set_item("rate_hz", p.rate_hz)?;
                d.set_item("wall_ms", p.wall_ms)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Machine(scheme={}, n_neurons={}, n_chips={}, n_used_cores={})",
            self.inner.scheme,
            self.inner.n_neurons(),
            self.inner.partitioning.n_chips(),
            self.inner.partitioning.n_used_cores()
        )
    }
}

/// Floating-point reference run. `model` selects toggles: `none`,
/// `toggled`, or a comma list of `conductance_only`, `capped`.
#[pyfunction]
#[pyo3(signature = (connectome, duration_ms = 1000.0, dt_ms = 0.1, seed = 0, targets = Vec::new(), rate_hz = 0.0, mode = "direct_voltage", amplitude_mv = None, model = "none"))]
#[allow(clippy::too_many_arguments)]
fn run_reference(
    py: Python<'_>,
    connectome: &Connectome,
    duration_ms: f64,
    dt_ms: f64,
    seed: u64,
    targets: Vec<u32>,
    rate_hz: f64,
    mode: &str,
    amplitude_mv: Option<f64>,
    model: &str,
) -> PyResult<SpikeRecord> {
    let toggles: ModelToggles = model.parse().map_err(value_err)?;
    let base = reference::ReferenceModel::new(connectome.inner.clone(), NeuronParams::default(), stimulus(targets, rate_hz, mode, amplitude_mv)?);
    let m = reference::apply_model_toggles(&base, toggles).map_err(value_err)?;
    let r = py.detach(|| m.run(duration_ms, dt_ms, seed)).map_err(value_err)?;
    Ok(SpikeRecord { inner: r })
}

/// Per-neuron mean rate in Hz over a list of trials.
#[pyfunction]
fn mean_rates(records: Vec<PyRef<'_, SpikeRecord>>) -> PyResult<Vec<f64>> {
    let recs: Vec<record::SpikeRecord> = records.iter().map(|r| r.inner.clone()).collect();
    let n = recs.first().map_or(0, |r| r.n_neurons);
    Ok(analysis::mean_rates(&recs, n).map_err(value_err)?.rates_hz)
}

/// Index-matched rate comparison; `pearson_r` is over active neurons.
#[pyfunction]
#[pyo3(signature = (rates_a, rates_b, active_threshold_hz = 1.0))]
fn parity<'py>(py: Python<'py>, rates_a: Vec<f64>, rates_b: Vec<f64>, active_threshold_hz: f64) -> PyResult<Bound<'py, PyDict>> {
    let table = |r: Vec<f64>| analysis::RateTable { rates_hz: r, trials: 1, duration_ms: 0.0 };
    let s = analysis::parity(&table(rates_a), &table(rates_b), active_threshold_hz).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("pearson_r", s.pearson_r)?;
    d.set_item("n_active", s.n_active())?;
    d.set_item("active", s.active.clone())?;
    d.set_item("max_abs_diff_hz", s.max_abs_diff_hz)?;
    d.set_item("above", s.above)?;
    d.set_item("below", s.below)?;
    Ok(d)
}

#[pymodule]
fn pyneuromap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Connectome>()?;
    m.add_class::<SpikeRecord>()?;
    m.add_class::<Machine>()?;
    m.add_function(wrap_pyfunction!(run_reference, m)?)?;
    m.add_function(wrap_pyfunction!(mean_rates, m)?)?;
    m.add_function(wrap_pyfunction!(parity, m)?)?;
    m.add("MappingError", m.py().get_type::<MappingError>())?;
    Ok(())
}
