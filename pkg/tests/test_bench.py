import csv
import io
import json
import math

import numpy as np
import pytest

from dynet.bench import (BenchmarkConfig, aggregate, ct_smoke_benchmark, default_lambda,
                         network_from_groups, reconstruct, run_benchmark, run_trial,
                         structure_metrics)
from dynet.netgen import GenConfig, generate_case, random_boolean_structure
from dynet.network import BooleanNetwork

SMALL = dict(methods=("girl1", "gsbl"), trials=2, nodes=(4,), density=0.25, n_samples=120)


def net(p, arcs, m=0, inputs=()):
    return BooleanNetwork(p, m, frozenset(arcs), frozenset(inputs))


def strip_timing(report):
    d = report.to_dict()
    d.pop("wall_clock_s")
    d.pop("started")
    for r in d["trials"]:
        r.pop("runtime_s", None)
    return json.dumps(d, sort_keys=True)


class TestStructureMetrics:
    def test_identical(self):
        truth = random_boolean_structure(10, 0.2, 3, np.random.default_rng(0))
        m = structure_metrics(truth, truth)
        assert (m.prec, m.tpr, m.tp) == (1.0, 1.0, 20)
        assert m.tn == 90 - 20

    def test_counts(self):
        truth = net(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
        est = net(5, [(0, 1), (1, 2), (2, 3), (4, 0)])
        m = structure_metrics(est, truth)
        assert (m.tp, m.fp, m.fn) == (3, 1, 1)
        assert (m.prec, m.tpr) == (0.75, 0.75)

    def test_empty_estimate(self):
        truth = random_boolean_structure(10, 0.2, 3, np.random.default_rng(1))
        m = structure_metrics(net(10, []), truth)
        assert m.degenerate_prec
        assert m.tpr == 0.0 and m.prec == 0.0

    def test_both_empty(self):
        m = structure_metrics(net(3, []), net(3, []))
        assert m.degenerate_prec and m.prec == 1.0 and m.tpr == 1.0

    def test_inputs_optional(self):
        truth = net(2, [(0, 1)], m=2, inputs=[(0, 0), (1, 1)])
        est = net(2, [(0, 1)], m=2, inputs=[(0, 0)])
        assert structure_metrics(est, truth).tpr == 1.0
        assert structure_metrics(est, truth, include_inputs=True).tpr == pytest.approx(2 / 3)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            structure_metrics(net(3, []), net(4, []))


class TestReconstruct:
    def test_groups_to_network(self):
        labels = {0: [("y", 0), ("y", 1), ("u", 0)], 1: [("y", 0), ("y", 1), ("u", 0)]}
        flags = {0: np.array([True, True, False]), 1: np.array([False, True, True])}
        n = network_from_groups(2, 1, flags, labels)
        assert n.yy == {(1, 0)}
        assert n.uy == {(0, 1)}

    def test_per_experiment_networks_agree(self):
        case = generate_case(GenConfig(p=5, n_samples=200), seed=2)
        for method, opts in (("girl1", {"lam": 0.1}), ("gsbl", {}),
                             ("gsmc", {"n_iter": 2000, "burn_in": 500})):
            rec = reconstruct(case.data, method, opts)
            assert rec.consistent
            assert all(n == rec.network for n in rec.per_experiment)

    def test_unknown_method(self):
        case = generate_case(GenConfig(p=3, density=0.3, n_samples=60), seed=3)
        with pytest.raises(ValueError, match="unknown method"):
            reconstruct(case.data, "lasso")

    def test_output_subset(self):
        case = generate_case(GenConfig(p=4, density=0.25, n_samples=100), seed=4)
        rec = reconstruct(case.data, "girl1", {"lam": 0.1}, outputs=[1])
        assert set(rec.results) == {1}
        assert all(i == 1 for _, i in rec.network.yy)


class TestConfig:
    def test_default_lambda(self):
        assert default_lambda(10.0) == 0.1
        assert default_lambda(20.0) == 0.01
        assert default_lambda(40.0) == 0.001
        assert default_lambda(10.0, p=5) == 0.05
        assert default_lambda(math.inf) == 1e-4

    def test_round_trip(self):
        cfg = BenchmarkConfig(snr_db=(10.0, math.inf), nodes=(5, 10))
        back = BenchmarkConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg
        assert back.scenarios() == [(5, 10.0), (10, 10.0), (5, math.inf), (10, math.inf)]

    def test_unknown_field(self):
        with pytest.raises(ValueError, match="unknown"):
            BenchmarkConfig.from_dict({"trails": 3})

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            BenchmarkConfig(methods=("ridge",))


class TestRunBenchmark:
    def test_noise_free_single_trial(self):
        report = run_benchmark(BenchmarkConfig(methods=("girl1",), trials=1, nodes=(5,),
                                               snr_db=(math.inf,), n_samples=200))
        row = report.rows[0]
        assert row["status"] == "ok"
        assert (row["prec"], row["tpr"]) == (1.0, 1.0)

    def test_aggregates_match_rows(self):
        report = run_benchmark(BenchmarkConfig(**SMALL))
        again = aggregate(report.rows)
        assert report.aggregates == again
        for method in SMALL["methods"]:
            prec = [r["prec"] for r in report.rows if r["method"] == method]
            a = report.aggregates["p=4,snr=10.0"][method]
            assert a["prec_mean"] == pytest.approx(np.mean(prec))
            assert a["prec_sd"] == pytest.approx(np.std(prec, ddof=1))
            assert a["all_consistent"]

    def test_deterministic(self):
        a = run_benchmark(BenchmarkConfig(**SMALL))
        b = run_benchmark(BenchmarkConfig(**SMALL))
        assert strip_timing(a) == strip_timing(b)

    def test_parallel_matches_serial(self):
        serial = run_benchmark(BenchmarkConfig(**SMALL))
        parallel = run_benchmark(BenchmarkConfig(**SMALL, jobs=2))
        for r in serial.rows + parallel.rows:
            r.pop("runtime_s")
        assert serial.rows == parallel.rows

    def test_trial_rows(self):
        rows = run_trial(BenchmarkConfig(**SMALL), 4, 10.0, 0)
        assert [r["method"] for r in rows] == ["girl1", "gsbl"]
        assert all(r["consistent"] for r in rows)

    def test_report_serialization(self):
        report = run_benchmark(BenchmarkConfig(**{**SMALL, "trials": 1}))
        doc = json.loads(report.to_json())
        assert doc["schema"] == "dynet/v1" and doc["type"] == "benchmark_report"
        rows = list(csv.DictReader(io.StringIO(report.rows_csv())))
        assert len(rows) == 2 and rows[0]["status"] == "ok"
        assert "girl1" in report.summary()


@pytest.mark.slow
def test_continuous_time_smoke_runs():
    out = ct_smoke_benchmark(n_samples=200)
    assert out["consistent"]
    assert 0.0 <= out["metrics"]["prec"] <= 1.0
    assert out["n_true"] > 0
