"""Smoke test for the pyneuromap extension.

Build and run:
    maturin develop -m crates/py/Cargo.toml
    python python/smoke_test.py
"""

import os
import tempfile

import pyneuromap as nm


def main():
    graph, (capped_pos, capped_neg) = nm.Connectome.synthetic(2000, mean_degree=20, seed=7).quantize(9)
    print(graph, "capped", capped_pos, capped_neg)
    assert graph.n_neurons == 2000
    assert max(graph.effective_fan_in("routing")) <= 512

    machine = nm.Machine.compile(graph, scheme="routing", max_neurons_per_core=96)
    passed, problems, mean_util = machine.validate(graph)
    assert passed, problems
    assert sorted(machine.flatten().edges()) == sorted(graph.edges())
    print(machine, f"mean utilization {mean_util:.3f}")

    targets = graph.select_stimulus_targets(20, seed=1)
    refs, hws = [], []
    for k in range(3):
        refs.append(nm.run_reference(graph, 1000.0, 0.1, k, targets, 150.0, mode="conductance_only", amplitude_mv=60.0, model="toggled"))
        rec, perf = machine.run(1000.0, 100 + k, targets, 150.0, amplitude_mv=60.0)
        hws.append(rec)
    assert perf["steps"] == 10000 and perf["spikes"] == len(rec)
    for r in refs + hws:
        isi = r.min_isi_steps(targets)
        assert isi is None or isi >= 22, isi

    stats = nm.parity(nm.mean_rates(refs), nm.mean_rates(hws), 1.0)
    print(f"parity r {stats['pearson_r']:.4f} over {stats['n_active']} active neurons")
    assert stats["pearson_r"] > 0.9

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "machine.bin")
        machine.save(path)
        again = nm.Machine.load(path)
        assert again.config_hash == machine.config_hash
        rec_path = os.path.join(d, "spikes.csv")
        hws[0].save(rec_path)
        assert nm.SpikeRecord.load(rec_path) == hws[0]

    try:
        nm.Machine.compile(graph, max_neurons_per_core=1, scheme="delivery", dt_ms=0.1, cores_per_chip=0)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("bad hardware config accepted")

    rows = machine.sweep([1.0, 10.0], duration_ms=100.0)
    assert [r["rate_hz"] for r in rows] == [1.0, 10.0]
    print("ok")


if __name__ == "__main__":
    main()
