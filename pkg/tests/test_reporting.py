import csv
import math

import numpy as np
import pytest

from hemsdr import reporting as rp
from hemsdr import simulation as sim
from hemsdr.core import SystemParams
from hemsdr.errors import DataError, MetricError

from _util import random_day

P = SystemParams()


def test_effectiveness_examples():
    b, m = [1.0, 1.0], [0.5, 0.5]
    assert rp.effectiveness(m, m, b) == 100.0
    assert rp.effectiveness(b, m, b) == 0.0
    assert rp.effectiveness([0.75, 0.75], m, b) == pytest.approx(50.0)


@pytest.mark.parametrize("s, m, b", [
    ([], [], []),
    ([1.0], [1.0], [1.0]),          # optimum saves nothing
    ([1.0], [0.5], [0.0]),          # zero baseline
    ([1.0], [1.5], [1.0]),          # optimum above baseline
    ([1.0, 2.0], [0.5], [1.0]),     # length mismatch
])
def test_effectiveness_undefined(s, m, b):
    with pytest.raises(MetricError):
        rp.effectiveness(s, m, b)


@pytest.fixture(scope="module")
def report():
    rng = np.random.default_rng(0)
    days = [random_day(rng, price=(0.01, 0.4)) for _ in range(3)]
    return rp.evaluate_month([sim.IdleStrategy(), sim.GridOnlyStrategy()], days, None, P)


def test_month_endpoints_exact(report):
    assert report.effectiveness("milp") == 100.0
    assert report.effectiveness("grid-only") == 0.0
    assert 0.0 < report.effectiveness("idle") < 100.0
    assert np.array_equal(report.costs["milp"], report.milp)
    assert report.slot_time["idle"] > 0


def test_emit_is_deterministic(tmp_path, report):
    a = rp.emit_report(report, tmp_path / "a")
    b = rp.emit_report(report, tmp_path / "b")
    assert sorted(a) == ["costs.csv", "costs.svg", "effectiveness.svg", "summary.csv", "waste.svg"]
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes()


def test_summary_contents(tmp_path, report):
    rp.emit_report(report, tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    by = {r["strategy"]: r for r in rows}
    assert float(by["milp"]["effectiveness_pct"]) == 100.0
    assert float(by["grid-only"]["effectiveness_pct"]) == 0.0
    costs = list(csv.reader(open(tmp_path / "costs.csv")))
    assert costs[0][:3] == ["day", "baseline", "milp_optimum"] and len(costs) == 4
    assert float(costs[1][1]) == report.baseline[0]


def test_empty_report(tmp_path):
    paths = rp.emit_report(rp.EvaluationReport(), tmp_path)
    assert (tmp_path / "costs.csv").read_text() == "day,baseline,milp_optimum\n"
    assert (tmp_path / "summary.csv").read_text().count("\n") == 1
    assert paths["costs.svg"].read_text().startswith("<svg")


def test_json_round_trip(report):
    back = rp.EvaluationReport.from_json(report.to_json())
    assert back.strategies == report.strategies
    assert np.array_equal(back.costs["idle"], report.costs["idle"])
    assert back.effectiveness("idle") == report.effectiveness("idle")
    with pytest.raises(DataError):
        rp.EvaluationReport.from_json("{}")


def test_undefined_effectiveness_is_nan():
    rep = rp.EvaluationReport(np.ones(1), np.ones(1), {"x": np.ones(1)})
    assert math.isnan(rep.effectiveness("x"))


def test_duplicate_names_rejected():
    with pytest.raises(DataError):
        rp.evaluate_month([sim.IdleStrategy(), sim.IdleStrategy()],
                          [random_day(np.random.default_rng(1))], None, P)
