"""Day-ahead planning: solve the MILP on 24-hour forecasts, then execute open loop."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from hemsdr.core import DayProfile, SlotDispatch, SystemParams, project_dispatch
from hemsdr.errors import DataError, DomainError, SolverError
from hemsdr.milp import OptimalDispatch, SolverStats, solve_day

log = logging.getLogger(__name__)


@dataclass(eq=False)
class DayPlan:
    forecast: DayProfile
    solution: OptimalDispatch
    fallback: bool = False

    @property
    def dispatch(self):
        return self.solution.dispatch


def _idle_plan(day: DayProfile, params: SystemParams) -> OptimalDispatch:
    e_res = day.res(params)
    disp = [SlotDispatch(min(e, r), 0.0, 0.0, 0.0, 0.0, 1)
            for e, r in zip(day.consumption, e_res)]
    levels = np.full(day.slots, params.level_initial)
    obj = float(sum((e - d.res_to_load) * p for e, d, p in zip(day.consumption, disp, day.price)))
    return OptimalDispatch(disp, levels, obj, SolverStats())


def _window(values, n):
    v = np.asarray(values, dtype=np.float64)
    if v.shape[0] < n:
        raise DataError(f"need {n} hours of history, got {v.shape[0]}")
    return v[-n:]


def forecast_day(f_ec24, f_ghi24, f_price24, windows, params: SystemParams) -> DayProfile:
    """Assemble a forecast day from three horizon-T forecasters.

    ``windows`` is ``(consumption, irradiation, price)`` history, each at
    least as long as the matching forecaster's window.
    """
    T = params.slots_per_day
    out = []
    for f, w in zip((f_ec24, f_ghi24, f_price24), windows):
        pred = np.asarray(f.predict(_window(w, f.window)), dtype=np.float64)
        if pred.shape[0] < T:
            raise DomainError(f"forecaster horizon {pred.shape[0]} shorter than the day ({T})")
        out.append(np.maximum(pred[:T], 0.0))
    return DayProfile(*out)


def plan_day(f_ec24, f_ghi24, f_price24, windows, params: SystemParams = SystemParams(),
             **solver_kw) -> DayPlan:
    """Optimal schedule for the forecast day; idle schedule if the solver fails."""
    day = forecast_day(f_ec24, f_ghi24, f_price24, windows, params)
    try:
        return DayPlan(day, solve_day(day, params, **solver_kw))
    except SolverError as exc:
        log.warning("day-ahead solve failed (%s); falling back to idle plan", exc)
        return DayPlan(day, _idle_plan(day, params), fallback=True)


def execute_slot(plan, t, e_ec, e_res, level, params: SystemParams = SystemParams()) -> SlotDispatch:
    """Realize planned slot ``t`` (1-based) against the actual load, PV and level.

    Charge slots keep the planned PV and grid charge, with PV clipped to what
    is actually available (no extra grid purchase makes up a PV shortfall).
    Discharge slots deliver the planned discharge to the load first and sell
    the rest, while all actual PV serves the load.
    """
    dispatch = plan.dispatch if hasattr(plan, "dispatch") else plan
    if not 1 <= t <= len(dispatch):
        raise DomainError(f"slot {t} outside plan of {len(dispatch)} slots")
    d = dispatch[t - 1]
    if d.charge_total >= d.discharge_total:
        return project_dispatch(1, d.res_to_ess, d.grid_to_ess, 0.0, e_ec, e_res, level, params)
    return project_dispatch(0, 0.0, 0.0, d.discharge_total, e_ec, e_res, level, params)


class ForecastMilpStrategy:
    name = "forecast-milp"

    def __init__(self, f_ec24, f_ghi24, f_price24, **solver_kw):
        self.forecasters = (f_ec24, f_ghi24, f_price24)
        self.solver_kw = solver_kw
        self.plan = None

    def begin_day(self, history, params):
        windows = (history.consumption, history.irradiation, history.price)
        self.plan = plan_day(*self.forecasters, windows, params, **self.solver_kw)

    def step(self, obs, params):
        return execute_slot(self.plan, obs.t, obs.e_ec, obs.e_res, obs.level, params)


PLAN_COLUMNS = ("slot", "e_ec", "ghi", "price", "res_to_load", "res_to_ess", "grid_to_ess",
                "ess_to_load", "ess_to_sell", "mode", "level")


def save_plan_csv(plan: DayPlan, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAN_COLUMNS)
        f = plan.forecast
        for t, (d, lv) in enumerate(zip(plan.dispatch, plan.solution.levels)):
            w.writerow([t + 1, repr(float(f.consumption[t])), repr(float(f.irradiation[t])),
                        repr(float(f.price[t])), *(repr(float(v)) for v in d.as_tuple()[:5]),
                        d.mode, repr(float(lv))])
