import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hemsdr import maddpg as md
from hemsdr import nn
from hemsdr import simulation as sim
from hemsdr.core import DayProfile, SystemParams, check_dispatch, res_energy, slot_cost_signed
from hemsdr.errors import DataError, DomainError
from hemsdr.forecasting import SeasonalNaive

from _util import random_day

P = SystemParams()
TINY = md.MaddpgConfig(episodes=3, batch=8, buffer=50, actor_res=(8,), actor_ess=(8,), critic=(8, 8))


def one_slot_day(e_ec, e_res, price):
    return DayProfile([e_ec], [e_res / 0.9], [price])


@pytest.mark.parametrize("e_ec, e_res, a_res, a_ess, price, reward", [
    (1.0, 1.0, 0.5, 0.4, 0.1, -0.05),
    (1.0, 0.2, 0.2, -0.5, 0.1, -0.03),
    (2.0, 0.0, 0.0, 0.0, 0.1, -0.2),
])
def test_reward_examples(e_ec, e_res, a_res, a_ess, price, reward):
    day = one_slot_day(e_ec, e_res, price)
    s = md.day_state(day, 1, 5.0)
    nxt, r = md.env_step(s, a_res, a_ess, day, P)
    assert nxt is None
    assert r == pytest.approx(reward, abs=1e-12)


def test_episode_end_and_state_validation():
    day = random_day(np.random.default_rng(0), T=2)
    s2, _ = md.env_step(md.day_state(day, 1, P.level_initial), 0, 0.5, day, P)
    assert s2.t == 2 and s2.level == pytest.approx(P.level_initial + 0.45)
    with pytest.raises(DomainError):
        md.env_step(md.DrState(1, 0, 1, 0.1, 25), 0, 0, day, P)
    with pytest.raises(DomainError):
        md.DrState(1, 0, 20.0, 0.1, 1).validate(P)


def test_level_overshoot_penalised():
    day = one_slot_day(0.0, 0.0, 0.1)
    _, r = md.env_step(md.day_state(day, 1, P.level_initial), 0, -1.0, day, P, penalty=1.0)
    assert r == pytest.approx(-1.0)  # nothing can be discharged: all 1 kWh removed


@given(st.floats(0, 2), st.floats(0, 1.1), st.floats(0.5, 10), st.floats(0, 0.5),
       st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=300)
def test_reward_is_negative_signed_cost_when_in_band(e_ec, ghi, level, price, a_res, a_ess):
    day = DayProfile([e_ec], [ghi], [price])
    s = md.day_state(day, 1, level)
    e_cd, _, over = md.apply_ess_action(level, min(max(a_ess, -1.0), 1.0), P)
    a = min(max(a_res, 0.0), md.res_bound(e_ec, ghi, P))
    _, r = md.env_step(s, a_res, a_ess, day, P, penalty=0.0)
    assert r == pytest.approx(-slot_cost_signed(e_cd, a, e_ec, res_energy(ghi, P), price, P),
                              abs=1e-12)


@given(st.floats(0.5, 10), st.floats(-3, 3))
def test_ess_projection_keeps_band(level, a):
    e_cd, nxt, over = md.apply_ess_action(level, a, P)
    assert P.level_min - 1e-12 <= nxt <= P.level_max + 1e-12
    assert over >= 0 and abs(e_cd) <= abs(a) + 1e-12


def test_replay_buffer_fifo():
    buf = md.ReplayBuffer(3, n_state=1, n_action=1)
    for i in range(5):
        buf.add([i], [0], float(i), [i + 1], False)
    assert len(buf) == 3
    assert sorted(buf.r.tolist()) == [2.0, 3.0, 4.0]
    s, _, r, _, _ = buf.sample(100, np.random.default_rng(0))
    assert set(r.tolist()) == {2.0, 3.0, 4.0}
    assert np.array_equal(s[:, 0], r)
    with pytest.raises(DataError):
        md.ReplayBuffer(2).sample(1, np.random.default_rng(0))


def test_noise_schedule():
    cfg = md.MaddpgConfig(episodes=100)
    assert cfg.noise(0) == pytest.approx(0.3)
    assert cfg.noise(40) == pytest.approx(0.3 + (0.01 - 0.3) * 0.5)
    assert cfg.noise(80) == cfg.noise(99) == pytest.approx(0.01)


def test_training_is_deterministic():
    days = [random_day(np.random.default_rng(1))]
    a = md.train_agents(days, TINY, P, seed=3)
    b = md.train_agents(days, TINY, P, seed=3)
    assert np.array_equal(a.returns, b.returns)
    assert all(np.array_equal(p, q) for p, q in zip(a.ess.actor.params, b.ess.actor.params))


def test_zero_price_environment_does_not_diverge():
    day = random_day(np.random.default_rng(2), price=(0, 0))
    cfg = md.MaddpgConfig(episodes=4, batch=8, buffer=200, actor_res=(8,), actor_ess=(8,),
                          critic=(8, 8), penalty=0.0)
    ag = md.train_agents([day], cfg, P, seed=0)
    assert np.all(ag.returns == 0.0)
    assert all(np.all(np.isfinite(p)) for p in ag.ess.critic.params)


def test_no_training_days():
    with pytest.raises(DataError):
        md.train_agents([], TINY, P)


@pytest.fixture(scope="module")
def agents():
    return md.train_agents([random_day(np.random.default_rng(4))], TINY, P, seed=0)


@given(st.floats(0, 3), st.floats(0, 1.2), st.floats(0.5, 10), st.floats(0, 0.6),
       st.integers(1, 24))
@settings(max_examples=200)
def test_actions_within_bounds(agents, e_ec, ghi, level, price, t):
    s = md.DrState(e_ec, ghi, level, price, t)
    a_res, a_ess = md.act(agents, s, P)
    assert 0.0 <= a_res <= min(e_ec, res_energy(ghi, P)) + 1e-12
    assert -P.discharge_cap <= a_ess <= P.charge_cap
    assert md.act(agents, s, P) == (a_res, a_ess)


def test_critic_gradient_check_on_joint_input(agents):
    critic = agents.ess.critic.copy()
    rng = np.random.default_rng(0)
    assert nn.grad_check(critic, rng.normal(size=(4, md.N_STATE + 2)), rng.normal(size=(4, 1))) < 1e-4


def test_strategy_runs_feasibly(agents):
    rng = np.random.default_rng(5)
    day = random_day(rng)
    hist = sim.History.from_days([random_day(rng) for _ in range(7)])
    r = sim.simulate_day(md.MaddpgStrategy(agents, SeasonalNaive()), day, hist, P)
    for d, e_ec, e_res in zip(r.dispatch, day.consumption, day.res(P)):
        check_dispatch(d, P, e_res=e_res, e_ec=e_ec)


def test_bundle_round_trip(tmp_path, agents):
    md.save_agents(agents, tmp_path / "m", forecaster=SeasonalNaive())
    back, f = md.load_agents(tmp_path / "m")
    assert isinstance(f, SeasonalNaive) and back.config == agents.config
    s = md.DrState(0.8, 0.4, 3.0, 0.12, 9)
    assert md.act(back, s, P) == md.act(agents, s, P)
    lines = (tmp_path / "m" / "returns.csv").read_text().splitlines()
    assert lines[0] == "episode,return" and len(lines) == 1 + TINY.episodes
