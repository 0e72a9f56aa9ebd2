"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Soft targets (the imitation effectiveness band, MADDPG single-day
memorisation, MAPE calibration bands) are measured and reported in the
verdict line but only the hard parts decide PASS/FAIL.
"""
import time

import numpy as np
import pytest

from hemsdr import data, forecasting as fc, imitation as im, maddpg as md, nn
from hemsdr import reporting as rp, simulation as sim
from hemsdr.core import (
    DayProfile, SlotDispatch, SystemParams, check_dispatch, slot_cost,
    slot_cost_signed, to_signed,
)
from hemsdr.forecast_milp import ForecastMilpStrategy
from hemsdr.forecasting import FixedForecast, SeasonalNaive
from hemsdr.milp import brute_force_oracle, solve_day, verify_optimal_dispatch

from _util import random_day, verdict

P = SystemParams()
GRU = dict(hidden=16, layers=2, epochs=20, stride=1)


def stable_home(seed):
    c = data.synth_home("stable", 2, seed=seed)
    g = data.synth_irradiation(2, seed=seed + 1)
    pr = data.synth_price(2, seed=seed + 2)
    parts = {k: data.split(s) for k, s in (("consumption", c), ("irradiation", g), ("price", pr))}
    train = {k: v[0] for k, v in parts.items()}
    test = {k: v[1] for k, v in parts.items()}
    return train, test


def days_of(parts):
    return data.to_days(parts["consumption"], parts["irradiation"], parts["price"], P)


def gap(cost, opt):
    return abs(cost - opt) / abs(opt)


@pytest.fixture(scope="module")
def month():
    """Stable home: January trains, February tests; all learned strategies."""
    train, test = stable_home(0)
    ec1 = fc.fit(train["consumption"], 1, seed=0, target="consumption", **GRU)
    ctl = im.train_controller(im.generate_dataset(days_of(train), P), ec1, P, seed=0)
    f24 = [fc.fit(train[k], 24, seed=0, target=k, **GRU)
           for k in ("consumption", "irradiation", "price")]
    history = sim.History(train["consumption"].values, train["irradiation"].values,
                          train["price"].values)
    return {"train": train, "test": test, "ec1": ec1, "controller": ctl, "f24": f24,
            "history": history}


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_milp_matches_brute_force_oracle():
    rng = np.random.default_rng(2024)
    grid, worst_up, worst_down = 0.05, -np.inf, -np.inf
    start = time.perf_counter()
    for _ in range(50):
        day = random_day(rng, T=4, load=(0, 2), ghi=(0, 1), price=(0.01, 0.5))
        sol = solve_day(day, P)
        verify_optimal_dispatch(sol, day, P, tol=1e-9)
        for d, e_ec, e_res in zip(sol.dispatch, day.consumption, day.res(P)):
            check_dispatch(d, P, e_res=e_res, e_ec=e_ec, tol=1e-9)
        oracle = brute_force_oracle(day, P, grid=grid)
        worst_up = max(worst_up, sol.objective - (oracle.objective + 1e-6))
        worst_down = max(worst_down, (oracle.objective - 4 * grid * day.price.max()) - sol.objective)
    elapsed = time.perf_counter() - start
    ok = worst_up <= 0 and worst_down <= 0 and elapsed < 10
    verdict(1, ok, f"50 T=4 days, max excess over oracle {worst_up + 1e-6:.2e}, "
                   f"sandwich slack {-worst_down:.3g}, {elapsed:.2f} s")
    assert ok


# -- 2 ---------------------------------------------------------------------------

def test_criterion_2_cost_forms_agree():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10_000):
        e_ec, e_res = rng.uniform(0, 3), rng.uniform(0, 3) * (rng.random() < 0.8)
        price, alpha = rng.uniform(0, 0.5), rng.uniform(0.3, 1.0)
        p = SystemParams(sell_ratio=alpha)
        mag = rng.uniform(0, 1)
        if rng.random() < 0.5:
            res_load = rng.uniform(0, min(e_ec, e_res))
            rc = min(e_res - res_load, mag)
            d = SlotDispatch(res_load, rc, mag - rc, 0.0, 0.0, 1)
        else:
            res_load = min(e_ec, e_res)
            ess_load = min(mag, e_ec - res_load)
            d = SlotDispatch(res_load, 0.0, 0.0, ess_load, mag - ess_load, 0)
        check_dispatch(d, p, e_res=e_res, e_ec=e_ec)
        e_cd, rl = to_signed(d)
        worst = max(worst, abs(slot_cost(d, e_ec, price, p)
                               - slot_cost_signed(e_cd, rl, e_ec, e_res, price, p)))
    ok = worst <= 1e-9
    verdict(2, ok, f"10^4 feasible dispatches, max disagreement {worst:.2e}")
    assert ok


# -- 3 ---------------------------------------------------------------------------

def test_criterion_3_gradient_checks():
    worst_dense = worst_gru = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        dense = nn.DenseNet([4, 6, 5, 2], ["tanh", "sigmoid", "identity"], seed=seed)
        worst_dense = max(worst_dense, nn.grad_check(dense, rng.normal(size=(5, 4)),
                                                     rng.normal(size=(5, 2))))
        gru = nn.GruNet(hidden_size=4, num_layers=2, window=8, seed=seed)
        worst_gru = max(worst_gru, nn.grad_check(gru, rng.normal(size=(3, 8)),
                                                 rng.normal(size=(3, 1))))
    ok = worst_dense < 1e-4 and worst_gru < 1e-4
    verdict(3, ok, f"20 seeds, max relative error dense {worst_dense:.2e}, GRU {worst_gru:.2e}")
    assert ok


# -- 4 ---------------------------------------------------------------------------

def test_criterion_4_imitation(month):
    # closure on one repeated day
    train, _ = stable_home(0)
    day = days_of(train)[3]
    ds = im.generate_dataset([day], P)
    ds = im.ImitationDataset(np.tile(ds.x, (200, 1)), np.tile(ds.y, (200, 1)))
    ctl = im.train_controller(ds, SeasonalNaive(), P, seed=0, epochs=20)
    r = sim.simulate_day(im.ImitationStrategy(ctl), day, sim.History.from_days([day] * 7), P)
    opt = solve_day(day, P).objective
    closure = gap(r.cost, opt)

    # month comparison
    strategies = [im.ImitationStrategy(month["controller"]), ForecastMilpStrategy(*month["f24"])]
    rep = rp.evaluate_month(strategies, days_of(month["test"]), month["history"], P)
    e_im, e_fm = rep.effectiveness("imitation"), rep.effectiveness("forecast-milp")

    ok = closure <= 0.05 and e_im >= e_fm
    band = "met" if e_im >= 60 else "NOT met"
    verdict(4, ok, f"closure gap {100 * closure:.3f}% (<= 5%); effectiveness imitation "
                   f"{e_im:.1f}% vs forecast-MILP {e_fm:.1f}%; soft band >= 60% {band}")
    assert ok


# -- 5 ---------------------------------------------------------------------------

def test_criterion_5_oracle_forecasts_reduce_to_milp():
    rng = np.random.default_rng(5)
    history = sim.History.from_days([random_day(rng) for _ in range(7)])
    worst = 0.0
    for _ in range(20):
        day = random_day(rng, price=(0.01, 0.5))
        strat = ForecastMilpStrategy(FixedForecast(day.consumption),
                                     FixedForecast(day.irradiation), FixedForecast(day.price))
        r = sim.simulate_day(strat, day, history, P)
        worst = max(worst, abs(r.cost - solve_day(day, P).objective))
    ok = worst <= 1e-6
    verdict(5, ok, f"20 days, max |realized - optimum| {worst:.2e}")
    assert ok


# -- 6 ---------------------------------------------------------------------------

def _reference_reward(s, a_res, a_ess, penalty):
    """Reward recomputed from the physics, independently of the environment code."""
    eta = P.ess_efficiency
    e_res = P.panel_area * P.res_efficiency * s.ghi * P.slot_duration
    a_res = min(max(a_res, 0.0), min(e_res, s.e_ec))
    a_ess = min(max(a_ess, -P.discharge_cap), P.charge_cap)
    if a_ess >= 0:
        e_cd = min(a_ess, max((P.level_max - s.level) / eta, 0.0))
        over = a_ess - e_cd
        rc = min(e_res - a_res, e_cd)
        cost = (e_cd - rc + s.e_ec - a_res) * s.price
    else:
        e_cd = -min(-a_ess, max((s.level - P.level_min) * eta, 0.0))
        over = -a_ess + e_cd
        rl = max(s.e_ec - e_res, 0.0)
        cost = (rl + e_cd) * s.price if -e_cd <= rl else (rl + e_cd) * P.sell_ratio * s.price
    return -cost - penalty * over, over


@pytest.mark.slow
def test_criterion_6_maddpg():
    rng = np.random.default_rng(6)
    worst = 0.0
    n_over = 0
    for _ in range(10_000):
        day = DayProfile([rng.uniform(0, 3)], [rng.uniform(0, 1.1)], [rng.uniform(0, 0.6)])
        s = md.day_state(day, 1, rng.uniform(P.level_min, P.level_max))
        a_res, a_ess = rng.uniform(-0.5, 3), rng.uniform(-1.5, 1.5)
        _, reward = md.env_step(s, a_res, a_ess, day, P, penalty=1.0)
        ref, over = _reference_reward(s, a_res, a_ess, 1.0)
        n_over += over > 0
        worst = max(worst, abs(reward - ref))
    identity = worst <= 1e-9

    # single-day memorisation under the default hyperparameters (soft)
    train, _ = stable_home(0)
    day = days_of(train)[3]
    start = time.perf_counter()
    agents = md.train_agents([day], md.MaddpgConfig(), P, seed=0)
    minutes = (time.perf_counter() - start) / 60
    opt = solve_day(day, P).objective
    r = sim.simulate_day(md.MaddpgStrategy(agents, SeasonalNaive()), day,
                         sim.History.from_days([day] * 7), P)
    mem = gap(r.cost, opt)
    last100 = float(agents.returns[-100:].mean())
    soft = "met" if mem <= 0.25 else "NOT met"
    verdict(6, identity, f"reward identity max err {worst:.2e} over 10^4 transitions "
                         f"({n_over} with level overshoot); memorisation (soft): realized "
                         f"{r.cost:.4f} vs optimum {opt:.4f} (gap {100 * mem:.1f}%, {soft}), "
                         f"last-100 mean return {last100:.4f}, baseline {r.baseline:.4f}, "
                         f"4000 episodes in {minutes:.1f} min")
    assert identity


# -- 7 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_mape_ordering():
    table = []
    for seed in range(5):
        row = []
        for cls in ("stable", "fluctuating", "chaos"):
            train, test = data.split(data.synth_home(cls, 2, seed=seed))
            f = fc.fit(train, 1, seed=seed, **GRU)
            row.append(fc.evaluate_mape(f, train, test))
        table.append(row)
    t = np.array(table)
    ok = bool(np.all((t[:, 0] < t[:, 1]) & (t[:, 1] < t[:, 2])))
    mean = t.mean(axis=0)
    verdict(7, ok, "strict stable < fluctuating < chaos on 5 seeds; mean MAPE "
                   f"{mean[0]:.2f}% / {mean[1]:.2f}% / {mean[2]:.2f}% "
                   f"(calibration anchors 0.6 / 10.9 / 21.8); per seed "
                   + "; ".join("/".join(f"{v:.1f}" for v in r) for r in table))
    assert ok


# -- 8 ---------------------------------------------------------------------------

def test_criterion_8_per_slot_timing(month):
    days = days_of(month["test"])[:3]
    shift, scale = np.zeros(md.N_STATE), np.ones(md.N_STATE)
    res, ess = md.make_agents(md.MaddpgConfig(), shift, scale, seed=0)
    strategies = {"imitation": im.ImitationStrategy(month["controller"]),
                  "maddpg": md.MaddpgStrategy(md.TrainedAgents(res, ess), month["ec1"])}
    times = {}
    for name, strat in strategies.items():
        history = month["history"]
        samples = []
        for day in days:
            samples.extend(sim.simulate_day(strat, day, history, P).slot_times)
            history = history.extend(day)
        times[name] = float(np.mean(samples))
    ok = all(v < 0.5 for v in times.values())
    verdict(8, ok, "mean per-slot decision time "
                   + ", ".join(f"{k} {1e3 * v:.2f} ms" for k, v in times.items())
                   + " (limit 500 ms, GRU forecaster included)")
    assert ok


# -- 9 ---------------------------------------------------------------------------

def fuzzed_day(rng):
    T = P.slots_per_day
    load = rng.uniform(0, 3, T) * (rng.random(T) > 0.1)
    ghi = rng.uniform(0, 1.2, T) * (rng.random() < 0.8)
    price = rng.uniform(0, 0.6, T) * np.where(rng.random(T) < 0.05, rng.uniform(1, 5, T), 1)
    return DayProfile(load, ghi, price)


@pytest.mark.slow
def test_criterion_9_conservation_on_fuzzed_days(month):
    rng = np.random.default_rng(9)
    history = sim.History.from_days([fuzzed_day(rng) for _ in range(7)])
    tiny = md.MaddpgConfig(episodes=5, actor_res=(16,), actor_ess=(16,), critic=(16, 16))
    agents = md.train_agents([fuzzed_day(rng) for _ in range(5)], tiny, P, seed=0)

    class NoisyForecastMilp(ForecastMilpStrategy):
        """Day-ahead plan on perturbed actuals: a cheap stand-in for trained forecasters."""

        def __init__(self):
            super().__init__(None, None, None)

        def set_day(self, day):
            noise = [np.clip(v * rng.uniform(0.6, 1.4, len(v)), 0, None)
                     for v in (day.consumption, day.irradiation, day.price)]
            self.forecasters = tuple(FixedForecast(v) for v in noise)

    # the consumption forecaster only shapes decisions, not feasibility, so the
    # fuzz uses the seasonal-naive one for speed
    naive_ctl = im.ImitationController(month["controller"].heads, SeasonalNaive(), P)
    fmilp = NoisyForecastMilp()
    strategies = [sim.IdleStrategy(), sim.GridOnlyStrategy(), im.ImitationStrategy(naive_ctl),
                  md.MaddpgStrategy(agents, SeasonalNaive()), fmilp]
    residual = {s.name: [] for s in strategies}
    residual["milp"] = []
    worst_balance, worst_band = 0.0, 0.0
    for _ in range(1000):
        day = fuzzed_day(rng)
        fmilp.set_day(day)
        for strat in strategies + [sim.milp_replay(solve_day(day, P))]:
            r = sim.simulate_day(strat, day, history, P)
            for d, g, e in zip(r.dispatch, r.grid_load, day.consumption):
                worst_balance = max(worst_balance, abs(g + d.ess_to_load + d.res_to_load - e))
                assert g >= 0
            worst_band = max(worst_band, P.level_min - r.levels.min(), r.levels.max() - P.level_max)
            residual[strat.name].append(r.terminal_residual)
    ok = worst_balance <= 1e-9 and worst_band <= 1e-9
    summary = ", ".join(f"{k} {np.mean(v):.3f}/{np.max(v):.3f}" for k, v in residual.items())
    verdict(9, ok, f"1000 fuzzed days x {len(residual)} strategies, max balance error "
                   f"{worst_balance:.1e}, max band violation {max(worst_band, 0):.1e}; "
                   f"terminal residual kWh mean/max per day: {summary}")
    assert ok
