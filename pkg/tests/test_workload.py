import numpy as np
import pytest
from scipy import stats

from contractchecker.harness.workload import (WorkloadSpec, Zipfian, generate, key_name, load_trace,
                                              recent_write_hits, save_trace)

SMALL = dict(ops_per_epoch=50, epochs=12, load_epochs=2, key_space=40)


def test_read_fraction_zero_gives_only_writes():
    trace = generate(WorkloadSpec(kind="custom", read_fraction=0.0, **SMALL), 1)
    assert trace and all(op.kind == "w" for op in trace)


def test_profiles():
    for kind, rf in (("A", 0.5), ("B", 0.95), ("D", 0.95)):
        spec = WorkloadSpec(kind=kind, **SMALL)
        assert spec.resolved_read_fraction == rf
    assert WorkloadSpec(kind="D").resolved_distribution == "latest"
    assert WorkloadSpec().ops_per_epoch == 140 and WorkloadSpec().epochs == 81


def test_zipf_theta_zero_is_uniform():
    n = 50
    z = Zipfian(n, 0.0)
    draws = z.sample(np.random.default_rng(7), 100_000)
    counts = np.bincount(draws, minlength=n)
    assert len(counts) == n
    _, p = stats.chisquare(counts)
    assert p > 0.001


def test_zipf_skew_orders_ranks():
    z = Zipfian(100, 0.99)
    counts = np.bincount(z.sample(np.random.default_rng(3), 50_000), minlength=100)
    assert counts[0] > counts[1] > counts[10] > counts[90]


def test_workload_d_reads_recent_writes():
    trace = generate(WorkloadSpec(kind="D", ops_per_epoch=140, epochs=30, load_epochs=10), 0)
    assert recent_write_hits(trace, 10) >= 0.90


def test_deterministic_per_seed():
    spec = WorkloadSpec(kind="A", **SMALL)
    assert generate(spec, 5) == generate(spec, 5)
    assert generate(spec, 5) != generate(spec, 6)


def test_load_phase_writes_every_key_once():
    spec = WorkloadSpec(kind="B", **SMALL)
    trace = generate(spec, 2)
    load = [op for op in trace if op.epoch < spec.load_epochs]
    assert all(op.kind == "w" for op in load)
    assert sorted(op.key for op in load) == sorted(key_name(i) for i in range(40))


def test_ops_per_epoch():
    spec = WorkloadSpec(kind="A", **SMALL)
    trace = generate(spec, 0)
    for e in range(spec.load_epochs, spec.epochs):
        assert sum(op.epoch == e for op in trace) == spec.ops_per_epoch


def test_inactive_fraction_idles_clients():
    spec = WorkloadSpec(kind="A", clients=10, inactive_fraction=0.3, **SMALL)
    trace = generate(spec, 4)
    for e in range(spec.epochs):
        assert len({op.client for op in trace if op.epoch == e}) <= 7


def test_save_load_round_trip(tmp_path):
    trace = generate(WorkloadSpec(kind="D", **SMALL), 9)
    path = tmp_path / "trace.jsonl"
    save_trace(path, trace)
    assert load_trace(path) == trace


@pytest.mark.parametrize("bad", [dict(read_fraction=1.5), dict(distribution="pareto"), dict(kind="Z"),
                                 dict(clients=0), dict(inactive_fraction=1.0)])
def test_invalid_spec_rejected(bad):
    with pytest.raises(ValueError):
        WorkloadSpec(**bad)
