"""Slot-by-slot replay of a strategy against actual data.

The simulator is the referee for every comparison: it hands each strategy
only what is known at the slot (the past plus the slot's observables),
checks the returned dispatch against the physics and keeps the books.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from hemsdr.core import (
    DayProfile, SlotDispatch, SystemParams, check_dispatch, ess_level_update, slot_cost,
)
from hemsdr.errors import DomainError, InfeasibleError
from hemsdr.milp import OptimalDispatch, solve_day


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class History:
    """Hourly actuals strictly before the current day (oldest first)."""

    consumption: np.ndarray = field(default_factory=lambda: np.zeros(0))
    irradiation: np.ndarray = field(default_factory=lambda: np.zeros(0))
    price: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("consumption", "irradiation", "price"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def extend(self, day: DayProfile) -> "History":
        return History(
            np.concatenate([self.consumption, day.consumption]),
            np.concatenate([self.irradiation, day.irradiation]),
            np.concatenate([self.price, day.price]),
        )

    @classmethod
    def from_days(cls, days) -> "History":
        h = cls()
        for d in days:
            h = h.extend(d)
        return h


@dataclass(frozen=True, eq=False)
class SlotObservation:
    """Everything a controller may see at slot ``t`` (1-based).

    ``past_consumption`` ends with the slot before ``t``; the remaining fields
    are the actual slot-``t`` observables and the current ESS level.
    """

    t: int
    e_ec: float
    ghi: float
    e_res: float
    price: float
    level: float
    past_consumption: np.ndarray


class Strategy(Protocol):
    name: str

    def begin_day(self, history: History, params: SystemParams) -> None: ...

    def step(self, obs: SlotObservation, params: SystemParams) -> SlotDispatch: ...


class IdleStrategy:
    """ESS left idle; PV serves the load and any surplus is lost."""

    name = "idle"

    def begin_day(self, history, params):
        pass

    def step(self, obs, params):
        return SlotDispatch(min(obs.e_ec, obs.e_res), 0.0, 0.0, 0.0, 0.0, 1)


class GridOnlyStrategy:
    """Neither ESS nor PV used: reproduces the baseline cost exactly."""

    name = "grid-only"

    def begin_day(self, history, params):
        pass

    def step(self, obs, params):
        return SlotDispatch()


class ScheduleStrategy:
    """Replays a fixed per-slot schedule (e.g. an offline optimum)."""

    def __init__(self, dispatch, name="schedule"):
        self.dispatch = list(dispatch)
        self.name = name

    def begin_day(self, history, params):
        pass

    def step(self, obs, params):
        if not 1 <= obs.t <= len(self.dispatch):
            raise DomainError(f"schedule has no slot {obs.t}")
        return self.dispatch[obs.t - 1]


def milp_replay(sol: OptimalDispatch) -> ScheduleStrategy:
    return ScheduleStrategy(sol.dispatch, name="milp")


@dataclass(frozen=True, eq=False)
class RealizedDayResult:
    cost: float
    dispatch: tuple
    levels: np.ndarray
    grid_load: np.ndarray
    res_waste: float
    baseline: float
    terminal_residual: float
    slot_times: np.ndarray
    plan_time: float = 0.0
    strategy: str = ""

    @property
    def mean_slot_time(self) -> float:
        return float(np.mean(self.slot_times)) if len(self.slot_times) else 0.0


def baseline_cost(day: DayProfile, params: SystemParams = SystemParams()) -> float:
    """Daily cost with neither ESS nor PV: consumption times price, summed."""
    return float(sum(e * p for e, p in zip(day.consumption, day.price)))


def simulate_day(strategy, day: DayProfile, history: History = None,
                 params: SystemParams = SystemParams()) -> RealizedDayResult:
    """Run ``strategy`` over ``day`` and account for the realized flows.

    The ESS starts at the initial level. Each returned dispatch must already
    be feasible; a violation is a broken strategy contract and raises
    ``AssertionError``.
    """
    history = History() if history is None else history
    T = day.slots
    e_res = day.res(params)
    e_ec = day.consumption
    past = np.concatenate([history.consumption, e_ec])
    H = len(history.consumption)

    t0 = time.perf_counter()
    strategy.begin_day(history, params)
    plan_time = time.perf_counter() - t0

    level = params.level_initial
    levels = np.empty(T)
    grid = np.empty(T)
    times = np.empty(T)
    out = []
    cost = 0.0
    waste = 0.0
    for t in range(T):
        obs = SlotObservation(
            t + 1, float(e_ec[t]), float(day.irradiation[t]), float(e_res[t]),
            float(day.price[t]), level, _frozen(past[:H + t]),
        )
        s = time.perf_counter()
        d = strategy.step(obs, params)
        times[t] = time.perf_counter() - s
        try:
            check_dispatch(d, params, e_res=e_res[t], e_ec=e_ec[t])
            level = ess_level_update(level, d, params)
        except InfeasibleError as exc:
            raise AssertionError(
                f"strategy {getattr(strategy, 'name', strategy)!r} slot {t + 1}: {exc}"
            ) from exc
        level = min(max(level, params.level_min), params.level_max)
        levels[t] = level
        grid[t] = max(e_ec[t] - d.res_to_load - d.ess_to_load, 0.0)
        waste += max(e_res[t] - d.res_to_load - d.res_to_ess, 0.0)
        cost += slot_cost(d, e_ec[t], day.price[t], params)
        out.append(d)
    return RealizedDayResult(
        cost=float(cost),
        dispatch=tuple(out),
        levels=levels,
        grid_load=grid,
        res_waste=float(waste),
        baseline=baseline_cost(day, params),
        terminal_residual=abs(level - params.level_initial),
        slot_times=times,
        plan_time=plan_time,
        strategy=getattr(strategy, "name", ""),
    )


def milp_reference(day: DayProfile, params: SystemParams = SystemParams()) -> OptimalDispatch:
    """End-of-day optimum computed with full knowledge of the day."""
    return solve_day(day, params)


RESULT_COLUMNS = ("slot", "res_to_load", "res_to_ess", "grid_to_ess", "ess_to_load",
                  "ess_to_sell", "mode", "grid_to_load", "level", "cost", "seconds")


def save_result_csv(result: RealizedDayResult, day: DayProfile, path,
                    params: SystemParams = SystemParams()):
    """One row per slot followed by a ``total`` row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for t, d in enumerate(result.dispatch):
            c = slot_cost(d, day.consumption[t], day.price[t], params)
            w.writerow([t + 1, *(repr(float(v)) for v in d.as_tuple()[:5]), d.mode,
                        repr(float(result.grid_load[t])), repr(float(result.levels[t])),
                        repr(float(c)), repr(float(result.slot_times[t]))])
        w.writerow(["total", "", "", "", "", "", "", repr(float(result.grid_load.sum())),
                    repr(float(result.levels[-1])) if len(result.levels) else "",
                    repr(result.cost),
                    repr(float(result.slot_times.sum()))])
