import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hemsdr import imitation as im
from hemsdr import simulation as sim
from hemsdr.core import DayProfile, SystemParams, check_dispatch, ess_level_update, res_energy
from hemsdr.errors import DataError
from hemsdr.forecasting import FixedForecast, SeasonalNaive
from hemsdr.milp import brute_force_oracle, solve_day

from _util import random_day

P = SystemParams()


class ConstantHead:
    """Stand-in network returning a fixed value."""

    def __init__(self, value):
        self.value = value

    def predict(self, x):
        return np.full((len(x), 1), self.value)


def scripted(values, forecast=1.0):
    heads = {h: ConstantHead(v) for h, v in zip(im.HEADS, values)}
    return im.ImitationController(heads, FixedForecast([forecast]), P)


def test_dataset_shape_and_labels():
    rng = np.random.default_rng(0)
    days = [random_day(rng) for _ in range(3)]
    ds = im.generate_dataset(days, P)
    assert len(ds) == 72 and ds.x.shape == (72, 5) and ds.y.shape == (72, 4)
    sol = solve_day(days[1], P)
    assert ds.x[24, 2] == P.level_initial
    assert ds.x[25, 2] == pytest.approx(sol.levels[0])
    assert ds.y[24 + 5, 1] == pytest.approx(sol.dispatch[5].grid_to_ess)
    assert np.array_equal(ds.x[24:48, 4], np.arange(1, 25))


def test_dark_day_has_zero_pv_labels():
    day = random_day(np.random.default_rng(1), ghi=(0, 0))
    assert np.all(im.generate_dataset([day], P).head("res_load") == 0)


def test_toy_day_labels_reach_oracle_cost():
    day = random_day(np.random.default_rng(2), T=4, price=(0.01, 0.5))
    ds = im.generate_dataset([day], P)
    oracle = brute_force_oracle(day, P)
    cost = 0.0
    for (e_ec, _, _, price, _), (res_load, grid_charge, ess_load, ess_sell) in zip(ds.x, ds.y):
        cost += (e_ec - res_load - ess_load + grid_charge) * price - ess_sell * price
    assert oracle.objective - 4 * 0.05 * day.price.max() <= cost <= oracle.objective + 1e-6


def test_dataset_csv_round_trip(tmp_path):
    ds = im.generate_dataset([random_day(np.random.default_rng(3), T=6)], P)
    im.save_dataset(ds, tmp_path / "d.csv")
    back = im.load_dataset(tmp_path / "d.csv")
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)


def test_empty_dataset_rejected():
    with pytest.raises(DataError):
        im.train_controller(im.ImitationDataset(np.zeros((0, 5)), np.zeros((0, 4))),
                            SeasonalNaive(), P)


def test_zero_pv_head_routes_all_pv_to_storage():
    # PV charge is the PV left after the PV-to-load head, so a zero head stores it all
    d = im.control_step(scripted([0, 0, 0, 0]), np.ones(168), 0.5, 2.0, 0.1, 3, e_ec=0.2)
    assert d.mode == 1
    assert d.res_to_ess == pytest.approx(res_energy(0.5, P))
    assert d.res_to_load == 0.0


def test_all_zero_heads_at_night_are_idle():
    d = im.control_step(scripted([0, 0, 0, 0]), np.ones(168), 0.0, 2.0, 0.1, 3, e_ec=0.7)
    assert d.as_tuple()[:5] == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_charge_request_clamped_to_rate():
    d = im.control_step(scripted([0, 2.0, 0, 0]), np.ones(168), 0.0, 2.0, 0.1, 3)
    assert d.mode == 1 and d.charge_total == pytest.approx(P.charge_cap)


def test_discharge_branch_sends_pv_to_load():
    d = im.control_step(scripted([0, 0, 0.4, 0.3]), np.ones(168), 0.5, 5.0, 0.3, 18, e_ec=1.0)
    assert d.mode == 0
    assert d.res_to_load == pytest.approx(res_energy(0.5, P))
    assert d.discharge_total == pytest.approx(0.7)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0, 1.2), st.floats(0.5, 10),
       st.floats(0, 3), st.integers(1, 24))
@settings(max_examples=300)
def test_control_step_always_feasible(heads, ghi, level, e_ec, t):
    d = im.control_step(scripted(heads, forecast=e_ec), np.ones(168), ghi, level, 0.1, t, e_ec=e_ec)
    check_dispatch(d, P, e_res=res_energy(ghi, P), e_ec=e_ec)
    new = ess_level_update(level, d, P)
    assert P.level_min - 1e-9 <= new <= P.level_max + 1e-9


def test_bundle_round_trip_and_determinism(tmp_path):
    day = random_day(np.random.default_rng(4), T=24)
    ds = im.generate_dataset([day], P)
    a = im.train_controller(ds, SeasonalNaive(), P, seed=1, hidden=(8,), epochs=3)
    b = im.train_controller(ds, SeasonalNaive(), P, seed=1, hidden=(8,), epochs=3)
    for h in im.HEADS:
        assert all(np.array_equal(p, q) for p, q in zip(a.heads[h].params, b.heads[h].params))
    im.save_controller(a, tmp_path / "ctl")
    c = im.load_controller(tmp_path / "ctl")
    w = np.linspace(0.2, 1.0, 168)
    assert im.control_step(c, w, 0.3, 1.0, 0.1, 5) == im.control_step(a, w, 0.3, 1.0, 0.1, 5)


def test_load_rejects_other_directory(tmp_path):
    with pytest.raises(DataError):
        im.load_controller(tmp_path)


def test_strategy_uses_actual_load_for_realization():
    # the forecast says 5 kWh but the slot only draws 0.3
    c = scripted([0.5, 0, 0, 0], forecast=5.0)
    day = DayProfile([0.3] * 3, [0.5] * 3, [0.1] * 3)
    r = sim.simulate_day(im.ImitationStrategy(c), day, sim.History.from_days([day] * 56), P)
    assert all(d.res_to_load == pytest.approx(0.3) for d in r.dispatch)
