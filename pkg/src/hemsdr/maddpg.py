"""Two-agent actor-critic control of PV self-consumption and ESS charging.

Agent ``res`` picks how much PV serves the load, agent ``ess`` picks the
signed ESS energy. Each agent has its own critic that sees the state and
both actions (centralised training); at run time each actor only needs the
observed state. The reward of a slot is minus its cost.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from hemsdr import nn
from hemsdr.core import (
    DayProfile, SystemParams, project_dispatch, res_energy, signed_to_request, slot_cost_signed,
)
from hemsdr.errors import DataError, DomainError, TrainingError
from hemsdr.forecasting import forecaster_entry, forecaster_from_entry

log = logging.getLogger(__name__)

N_STATE = 5
BUNDLE_FORMAT = "hemsdr-maddpg"
BUNDLE_VERSION = 1


@dataclass(frozen=True)
class DrState:
    e_ec: float
    ghi: float
    level: float
    price: float
    t: int

    def features(self) -> np.ndarray:
        return np.array([self.e_ec, self.ghi, self.level, self.price, float(self.t)])

    def validate(self, params: SystemParams):
        vals = (self.e_ec, self.ghi, self.level, self.price)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("state contains non-finite values")
        if not params.level_min - 1e-9 <= self.level <= params.level_max + 1e-9:
            raise DomainError(f"level {self.level} outside the ESS band")
        if not 1 <= self.t <= params.slots_per_day:
            raise DomainError(f"slot {self.t} outside 1..{params.slots_per_day}: episode over")


@dataclass
class MaddpgConfig:
    episodes: int = 4000
    gamma: float = 0.99
    tau: float = 0.001
    lr_actor: float = 1e-3
    lr_critic: float = 1e-4
    batch: int = 64
    buffer: int = 100_000
    actor_res: tuple = (100, 100)
    actor_ess: tuple = (200, 200, 200)
    critic: tuple = (100, 200, 200)
    penalty: float = 1.0
    noise_start: float = 0.3
    noise_end: float = 0.01
    noise_decay: float = 0.8

    def noise(self, episode: int) -> float:
        """Exploration std as a fraction of the action range."""
        span = max(self.noise_decay * self.episodes, 1.0)
        frac = min(episode / span, 1.0)
        return self.noise_start + (self.noise_end - self.noise_start) * frac


# -- environment -----------------------------------------------------------------

def res_bound(e_ec, ghi, params: SystemParams) -> float:
    """Largest PV-to-load action: the PV output, and never more than the load."""
    return max(min(res_energy(ghi, params), e_ec), 0.0)


def apply_ess_action(level, a_ess, params: SystemParams):
    """Project a signed ESS action onto the level band.

    Returns ``(realized e_cd, next level, overshoot)`` where ``overshoot`` is
    the kWh removed by the projection.
    """
    eta = params.ess_efficiency
    if a_ess >= 0:
        cap = max(min(params.charge_cap, (params.level_max - level) / eta), 0.0)
        e_cd = min(a_ess, cap)
        return e_cd, level + eta * e_cd, a_ess - e_cd
    cap = max(min(params.discharge_cap, (level - params.level_min) * eta), 0.0)
    e_cd = -min(-a_ess, cap)
    return e_cd, level + e_cd / eta, -a_ess + e_cd


def _transition(s: DrState, a_res, a_ess, params, penalty):
    e_res = res_energy(s.ghi, params)
    a_res = min(max(float(a_res), 0.0), res_bound(s.e_ec, s.ghi, params))
    lo, hi = -params.discharge_cap, params.charge_cap
    a_ess = min(max(float(a_ess), lo), hi)
    e_cd, nxt, over = apply_ess_action(s.level, a_ess, params)
    nxt = min(max(nxt, params.level_min), params.level_max)
    cost = slot_cost_signed(e_cd, a_res, s.e_ec, e_res, s.price, params)
    return e_cd, nxt, -cost - penalty * over, over


def env_step(s: DrState, a_res, a_ess, day: DayProfile, params: SystemParams = SystemParams(),
             penalty: float = 1.0):
    """Advance one slot of ``day``; returns ``(next state or None, reward)``.

    ``a_res`` is clipped to ``[0, min(E_RES, e_ec)]`` and ``a_ess`` to the
    rate caps; an ESS action the level band cannot absorb is shrunk to the
    feasible magnitude and the removed kWh are charged at ``penalty``. The
    next state is ``None`` after the last slot.
    """
    s.validate(params)
    _, level, reward, _ = _transition(s, a_res, a_ess, params, penalty)
    if s.t >= day.slots:
        return None, reward
    k = s.t
    return DrState(float(day.consumption[k]), float(day.irradiation[k]), level,
                   float(day.price[k]), s.t + 1), reward


def day_state(day: DayProfile, t: int, level: float) -> DrState:
    return DrState(float(day.consumption[t - 1]), float(day.irradiation[t - 1]), level,
                   float(day.price[t - 1]), t)


# -- replay buffer -------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity FIFO store of joint transitions with uniform sampling."""

    def __init__(self, capacity=100_000, n_state=N_STATE, n_action=2):
        if capacity < 1:
            raise DomainError("capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, n_state))
        self.a = np.zeros((self.capacity, n_action))
        self.r = np.zeros(self.capacity)
        self.s2 = np.zeros((self.capacity, n_state))
        self.done = np.zeros(self.capacity)
        self.size = 0
        self.head = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done):
        i = self.head
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n, rng):
        if self.size == 0:
            raise DataError("empty replay buffer")
        idx = rng.integers(0, self.size, size=n)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


# -- agents ------------------------------------------------------------------

@dataclass(eq=False)
class Agent:
    """Actor emits ``u`` in [-1, 1]; ``kind`` decides how ``u`` maps to kWh."""

    kind: str
    actor: nn.DenseNet
    critic: nn.DenseNet
    actor_target: nn.DenseNet = None
    critic_target: nn.DenseNet = None

    def __post_init__(self):
        if self.kind not in ("res", "ess"):
            raise DomainError(f"unknown agent kind {self.kind!r}")
        if self.actor_target is None:
            self.actor_target = self.actor.copy()
        if self.critic_target is None:
            self.critic_target = self.critic.copy()

    def u(self, features, target=False) -> np.ndarray:
        net = self.actor_target if target else self.actor
        x = np.atleast_2d(features)
        return net.forward_core(net.normalize_x(x))[:, 0]

    def to_action(self, u, state: DrState, params: SystemParams) -> float:
        u = min(max(float(u), -1.0), 1.0)
        if self.kind == "res":
            return 0.5 * (u + 1.0) * res_bound(state.e_ec, state.ghi, params)
        return u * params.charge_cap if u >= 0 else u * params.discharge_cap


def _state_scales(days, params):
    rows = []
    for day in days:
        for t in range(day.slots):
            rows.append([day.consumption[t], day.irradiation[t],
                         0.5 * (params.level_min + params.level_max), day.price[t], t + 1])
    x = np.array(rows)
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    shift[2] = 0.5 * (params.level_min + params.level_max)
    scale[2] = max(0.5 * (params.level_max - params.level_min), 1e-6)
    return shift, np.where(scale > 1e-12, scale, 1.0)


def make_agents(cfg: MaddpgConfig, shift, scale, seed=0):
    agents = []
    for k, (kind, hidden) in enumerate((("res", cfg.actor_res), ("ess", cfg.actor_ess))):
        acts = ["relu"] * len(hidden) + ["tanh"]
        actor = nn.DenseNet([N_STATE, *hidden, 1], acts, seed=seed + 10 * k + 1)
        actor.x_shift, actor.x_scale = shift.copy(), scale.copy()
        critic = nn.DenseNet([N_STATE + 2, *cfg.critic, 1], "relu", seed=seed + 10 * k + 2)
        critic.x_shift = np.concatenate([shift, [0.0, 0.0]])
        critic.x_scale = np.concatenate([scale, [1.0, 1.0]])
        agents.append(Agent(kind, actor, critic))
    return agents[0], agents[1]


def _update(agents, buf, cfg, rng):
    s, u, r, s2, done = buf.sample(cfg.batch, rng)
    sn = agents[0].actor.normalize_x(s)
    s2n = agents[0].actor.normalize_x(s2)
    u2 = np.stack([a.actor_target.forward_core(s2n)[:, 0] for a in agents], axis=1)
    for i, ag in enumerate(agents):
        crit = ag.critic
        q2 = ag.critic_target.forward_core(crit.normalize_x(np.hstack([s2, u2])))[:, 0]
        y = r + cfg.gamma * (1.0 - done) * q2
        _, grads = crit.loss_and_grads(crit.normalize_x(np.hstack([s, u])), y[:, None])
        nn.adam_step(crit, grads, cfg.lr_critic)

        ui, acache = ag.actor.forward_core(sn, keep=True)
        joint = u.copy()
        joint[:, i] = ui[:, 0]
        _, ccache = crit.forward_core(crit.normalize_x(np.hstack([s, joint])), keep=True)
        _, gin = crit.backward(ccache, -np.ones((cfg.batch, 1)) / cfg.batch)
        # the action columns are not rescaled, so gin is already d/du
        agrads, _ = ag.actor.backward(acache, gin[:, N_STATE + i:N_STATE + i + 1])
        nn.adam_step(ag.actor, agrads, cfg.lr_actor)
    for ag in agents:
        nn.soft_update(ag.actor_target, ag.actor, cfg.tau)
        nn.soft_update(ag.critic_target, ag.critic, cfg.tau)


@dataclass(eq=False)
class TrainedAgents:
    res: Agent
    ess: Agent
    config: MaddpgConfig = field(default_factory=MaddpgConfig)
    returns: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __iter__(self):
        return iter((self.res, self.ess))


def train_agents(days, cfg: MaddpgConfig = MaddpgConfig(), params: SystemParams = SystemParams(),
                 seed=0, log_every=0) -> TrainedAgents:
    """Train both agents on episodes drawn uniformly from ``days``.

    One gradient step per environment step once the buffer holds a batch.
    Exploration noise is Gaussian in the actor's output space and decays
    linearly over the first part of training.
    """
    days = list(days)
    if not days:
        raise DataError("no training days")
    rng = np.random.default_rng(seed)
    shift, scale = _state_scales(days, params)
    agents = make_agents(cfg, shift, scale, seed)
    buf = ReplayBuffer(cfg.buffer)
    returns = np.zeros(cfg.episodes)
    for ep in range(cfg.episodes):
        day = days[int(rng.integers(len(days)))]
        sigma = cfg.noise(ep) * 2.0
        level = params.level_initial
        total = 0.0
        for t in range(1, day.slots + 1):
            s = day_state(day, t, level)
            f = s.features()
            u = np.array([ag.u(f)[0] for ag in agents]) + sigma * rng.standard_normal(2)
            u = np.clip(u, -1.0, 1.0)
            a_res = agents[0].to_action(u[0], s, params)
            a_ess = agents[1].to_action(u[1], s, params)
            _, level, reward, _ = _transition(s, a_res, a_ess, params, cfg.penalty)
            done = t == day.slots
            f2 = np.zeros(N_STATE) if done else day_state(day, t + 1, level).features()
            buf.add(f, u, reward, f2, done)
            total += reward
            if len(buf) >= cfg.batch:
                try:
                    _update(agents, buf, cfg, rng)
                except TrainingError as exc:
                    raise TrainingError(f"episode {ep}: {exc}") from exc
        if not math.isfinite(total):
            raise TrainingError(f"episode {ep}: non-finite return")
        returns[ep] = total
        if log_every and (ep + 1) % log_every == 0:
            log.info("episode %d return %.4f (last %d mean %.4f)", ep + 1, total, log_every,
                     returns[ep + 1 - log_every:ep + 1].mean())
    return TrainedAgents(agents[0], agents[1], cfg, returns)


def act(agents, s: DrState, params: SystemParams = SystemParams()):
    """Deterministic actions ``(a_res, a_ess)`` for state ``s``."""
    res, ess = agents
    f = s.features()
    return (res.to_action(res.u(f)[0], s, params), ess.to_action(ess.u(f)[0], s, params))


class MaddpgStrategy:
    """Hour-ahead execution: forecast load in the state, actual load in the physics."""

    name = "maddpg"

    def __init__(self, agents, forecaster):
        self.agents = agents
        self.forecaster = forecaster

    def begin_day(self, history, params):
        pass

    def step(self, obs, params):
        window = np.asarray(obs.past_consumption)[-self.forecaster.window:]
        f_ec = float(self.forecaster.predict(window)[0])
        s = DrState(f_ec, obs.ghi, obs.level, obs.price, obs.t)
        a_res, a_ess = act(self.agents, s, params)
        e_cd, _, _ = apply_ess_action(obs.level, a_ess, params)
        mode, rc, gc, dis = signed_to_request(e_cd, a_res, obs.e_res)
        return project_dispatch(mode, rc, gc, dis, obs.e_ec, obs.e_res, obs.level, params)


# -- persistence ---------------------------------------------------------------

def save_returns_csv(returns, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("episode,return\n")
        for i, r in enumerate(returns):
            fh.write(f"{i + 1},{float(r)!r}\n")


def save_agents(agents: TrainedAgents, directory, forecaster=None):
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files = {}
    for ag in agents:
        for part in ("actor", "critic", "actor_target", "critic_target"):
            name = f"{ag.kind}_{part}.net"
            nn.save(getattr(ag, part), root / name)
            files[f"{ag.kind}.{part}"] = name
    cfg = asdict(agents.config)
    manifest = {"format": BUNDLE_FORMAT, "version": BUNDLE_VERSION, "files": files,
                "config": {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}}
    if forecaster is not None:
        manifest["forecaster"] = forecaster_entry(forecaster, root)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    save_returns_csv(agents.returns, root / "returns.csv")


def load_agents(directory):
    """Returns ``(TrainedAgents, forecaster or None)``."""
    root = Path(directory)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"{root}: unreadable manifest: {exc}") from exc
    if manifest.get("format") != BUNDLE_FORMAT or manifest.get("version") != BUNDLE_VERSION:
        raise DataError(f"{root}: not a MADDPG bundle")
    cfg = MaddpgConfig(**{k: tuple(v) if isinstance(v, list) else v
                          for k, v in manifest["config"].items()})
    agents = []
    for kind in ("res", "ess"):
        nets = {part: nn.load(root / manifest["files"][f"{kind}.{part}"])
                for part in ("actor", "critic", "actor_target", "critic_target")}
        agents.append(Agent(kind, **nets))
    forecaster = None
    if "forecaster" in manifest:
        forecaster = forecaster_from_entry(manifest["forecaster"], root)
    return TrainedAgents(agents[0], agents[1], cfg), forecaster
