"""Daily cost-minimisation MILP: model construction, LP relaxation, branch and bound.

The LP machinery is a dense bounded-variable primal simplex (``kernels``);
branch and bound works over the per-slot charge/discharge mode binaries.
``brute_force_oracle`` is an independent grid search used to validate the
solver on short horizons.
"""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from hemsdr import kernels
from hemsdr.core import (
    TOL,
    DayProfile,
    SlotDispatch,
    SystemParams,
    check_dispatch,
    ess_level_update,
    slot_cost,
)
from hemsdr.errors import ConfigError, InfeasibleError, ResourceError, SolverError

log = logging.getLogger(__name__)

VARIABLES = ("res_load", "res_charge", "grid_charge", "ess_load", "ess_sell", "level", "mode")
PIVOT_TOL = 1e-10
OPT_TOL = 1e-9


@dataclass(eq=False)
class MilpModel:
    """Dense description of one day's MILP.

    Variables are laid out in blocks of ``slots`` per name in ``VARIABLES``
    order. The grid-to-load flow is eliminated through the balance equation:
    its constant part lives in ``objective_constant`` and its non-negativity
    is an explicit inequality row.
    """

    slots: int
    cost: np.ndarray
    objective_constant: float
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_names: list
    day: DayProfile
    params: SystemParams

    def index(self, name: str, t: int) -> int:
        """Column of variable ``name`` at 0-based slot ``t``."""
        return VARIABLES.index(name) * self.slots + t

    @property
    def binaries(self) -> np.ndarray:
        return np.arange(6 * self.slots, 7 * self.slots)

    @property
    def n_vars(self) -> int:
        return self.cost.shape[0]

    @property
    def n_continuous(self) -> int:
        return 6 * self.slots

    def var_name(self, j: int) -> str:
        return f"{VARIABLES[j // self.slots]}_{j % self.slots + 1}"

    def to_lp_text(self) -> str:
        """Render in CPLEX LP text format for cross-checking with external solvers."""

        def expr(row):
            parts = []
            for j in np.nonzero(row)[0]:
                c = row[j]
                sign = "-" if c < 0 else "+"
                parts.append(f"{sign} {abs(c):.12g} {self.var_name(j)}")
            text = " ".join(parts)
            return text[2:] if text.startswith("+ ") else text

        lines = ["\\ daily energy cost", "Minimize", f" obj: {expr(self.cost)}"]
        if self.objective_constant:
            lines[-1] += f" + {self.objective_constant:.12g}"
        lines.append("Subject To")
        n_eq = self.b_eq.shape[0]
        for i in range(n_eq):
            lines.append(f" {self.row_names[i]}: {expr(self.a_eq[i])} = {self.b_eq[i]:.12g}")
        for i in range(self.b_ub.shape[0]):
            name = self.row_names[n_eq + i]
            lines.append(f" {name}: {expr(self.a_ub[i])} <= {self.b_ub[i]:.12g}")
        lines.append("Bounds")
        for j in range(self.n_vars):
            lo, hi = self.lower[j], self.upper[j]
            if lo == hi:
                lines.append(f" {self.var_name(j)} = {lo:.12g}")
            else:
                lines.append(f" {lo:.12g} <= {self.var_name(j)} <= {hi:.12g}")
        lines.append("Binaries")
        lines.append(" " + " ".join(self.var_name(j) for j in self.binaries))
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class SolverStats:
    nodes: int = 0
    simplex_iterations: int = 0
    wall_time: float = 0.0
    lp_bound: float = math.nan


@dataclass(eq=False)
class OptimalDispatch:
    """Per-slot dispatch, the level after each slot and the day's cost."""

    dispatch: list
    levels: np.ndarray
    objective: float
    stats: SolverStats = field(default_factory=SolverStats)
    approximate: bool = False

    @property
    def slots(self) -> int:
        return len(self.dispatch)

    def as_array(self) -> np.ndarray:
        """(T, 7) array: five flows, mode, level after the slot."""
        rows = [list(d.as_tuple()) + [lv] for d, lv in zip(self.dispatch, self.levels)]
        return np.array(rows, dtype=np.float64).reshape(-1, 7)


def build_day_model(day: DayProfile, params: SystemParams) -> MilpModel:
    """Assemble the MILP for one day (any number of slots)."""
    if not params.level_min <= params.level_initial <= params.level_max:
        raise ConfigError("initial level outside the ESS band")
    T = day.slots
    n = 7 * T
    eta = params.ess_efficiency
    ch, dh = params.charge_cap, params.discharge_cap
    e_ec = day.consumption
    e_res = day.res(params)
    price = day.price

    def col(name, t):
        return VARIABLES.index(name) * T + t

    cost = np.zeros(n)
    for t in range(T):
        cost[col("res_load", t)] = -price[t]
        cost[col("grid_charge", t)] = price[t]
        cost[col("ess_load", t)] = -price[t]
        cost[col("ess_sell", t)] = -params.sell_ratio * price[t]
    constant = float(np.dot(e_ec, price))

    lower = np.zeros(n)
    upper = np.zeros(n)
    for t in range(T):
        upper[col("res_load", t)] = min(e_res[t], e_ec[t])
        upper[col("res_charge", t)] = min(e_res[t], ch)
        upper[col("grid_charge", t)] = ch
        upper[col("ess_load", t)] = min(dh, e_ec[t])
        upper[col("ess_sell", t)] = dh
        lower[col("level", t)] = params.level_min
        upper[col("level", t)] = params.level_max
        upper[col("mode", t)] = 1.0
    lower[col("level", T - 1)] = upper[col("level", T - 1)] = params.level_initial

    names = []
    a_eq = np.zeros((T, n))
    b_eq = np.zeros(T)
    for t in range(T):
        a_eq[t, col("level", t)] = 1.0
        if t > 0:
            a_eq[t, col("level", t - 1)] = -1.0
        else:
            b_eq[t] = params.level_initial
        a_eq[t, col("res_charge", t)] = -eta
        a_eq[t, col("grid_charge", t)] = -eta
        a_eq[t, col("ess_load", t)] = 1.0 / eta
        a_eq[t, col("ess_sell", t)] = 1.0 / eta
        names.append(f"level_{t + 1}")

    a_ub = np.zeros((4 * T, n))
    b_ub = np.zeros(4 * T)
    for t in range(T):
        r = t
        a_ub[r, col("res_charge", t)] = a_ub[r, col("grid_charge", t)] = 1.0
        a_ub[r, col("mode", t)] = -ch
        names.append(f"charge_cap_{t + 1}")
    for t in range(T):
        r = T + t
        a_ub[r, col("ess_load", t)] = a_ub[r, col("ess_sell", t)] = 1.0
        a_ub[r, col("mode", t)] = dh
        b_ub[r] = dh
        names.append(f"discharge_cap_{t + 1}")
    for t in range(T):
        r = 2 * T + t
        a_ub[r, col("res_load", t)] = a_ub[r, col("res_charge", t)] = 1.0
        b_ub[r] = e_res[t]
        names.append(f"res_split_{t + 1}")
    for t in range(T):
        r = 3 * T + t
        a_ub[r, col("res_load", t)] = a_ub[r, col("ess_load", t)] = 1.0
        b_ub[r] = e_ec[t]
        names.append(f"grid_load_nonneg_{t + 1}")

    return MilpModel(T, cost, constant, a_eq, b_eq, a_ub, b_ub, lower, upper, names, day, params)


@dataclass
class LpResult:
    status: str
    x: np.ndarray
    objective: float
    iterations: int


def solve_lp(cost, a_eq, b_eq, a_ub, b_ub, lower, upper, max_iter=20000) -> LpResult:
    """Minimise ``cost @ x`` s.t. equality/inequality rows and finite lower bounds.

    Two phases on one tableau: phase one drives artificial variables to
    zero, phase two fixes them at zero and optimises the real cost.
    """
    n = cost.shape[0]
    m_eq, m_ub = b_eq.shape[0], b_ub.shape[0]
    m = m_eq + m_ub
    a = np.vstack([a_eq, a_ub]) if m else np.zeros((0, n))
    b = np.concatenate([b_eq, b_ub])
    if np.any(lower > upper + TOL):
        return LpResult("infeasible", np.zeros(n), math.inf, 0)

    x_struct = lower.copy()
    resid = b - a @ x_struct
    n_slack = m_ub
    art_rows = [i for i in range(m) if i < m_eq or resid[i] < 0]
    n_art = len(art_rows)
    ncols = n + n_slack + n_art

    tab = np.zeros((m, ncols))
    tab[:, :n] = a
    tab[m_eq:, n:n + n_slack] = np.eye(m_ub)
    lb = np.concatenate([lower, np.zeros(n_slack + n_art)])
    ub = np.concatenate([upper, np.full(n_slack, np.inf), np.full(n_art, np.inf)])
    x = np.concatenate([x_struct, np.zeros(n_slack + n_art)])
    basis = np.empty(m, dtype=np.int64)
    art_set = {}
    for k, i in enumerate(art_rows):
        art_set[i] = n + n_slack + k
    for i in range(m):
        if i in art_set:
            j = art_set[i]
            sign = 1.0 if resid[i] >= 0 else -1.0
            tab[i, j] = sign
            tab[i] *= sign
            basis[i] = j
            x[j] = abs(resid[i])
        else:
            j = n + (i - m_eq)
            basis[i] = j
            x[j] = resid[i]
    is_basic = np.zeros(ncols, dtype=np.bool_)
    is_basic[basis] = True
    at_upper = np.zeros(ncols, dtype=np.bool_)
    iters = 0

    if n_art and np.any(x[n + n_slack:] > 0):
        c1 = np.zeros(ncols)
        c1[n + n_slack:] = 1.0
        dj = c1 - tab.T @ c1[basis]
        status, it = kernels.simplex_iterate(tab, dj, x, basis, is_basic, at_upper, lb, ub,
                                             max_iter, PIVOT_TOL, OPT_TOL)
        iters += it
        if status != kernels.LP_OPTIMAL:
            raise SolverError(f"phase one failed with status {status}")
        if x[n + n_slack:].sum() > 1e-7:
            return LpResult("infeasible", x[:n].copy(), math.inf, iters)
    ub[n + n_slack:] = 0.0
    x[n + n_slack:] = np.where(is_basic[n + n_slack:], x[n + n_slack:], 0.0)

    c2 = np.concatenate([cost, np.zeros(n_slack + n_art)])
    dj = c2 - tab.T @ c2[basis]
    status, it = kernels.simplex_iterate(tab, dj, x, basis, is_basic, at_upper, lb, ub,
                                         max_iter, PIVOT_TOL, OPT_TOL)
    iters += it
    if status == kernels.LP_UNBOUNDED:
        return LpResult("unbounded", x[:n].copy(), -math.inf, iters)
    if status != kernels.LP_OPTIMAL:
        raise SolverError("simplex iteration limit reached")

    # Refresh basic values from the original data to shed pivoting drift.
    full = np.zeros((m, ncols))
    full[:, :n] = a
    full[m_eq:, n:n + n_slack] = np.eye(m_ub)
    for i in range(m):
        if i in art_set:
            full[i, art_set[i]] = 1.0 if resid[i] >= 0 else -1.0
    nonbasic = ~is_basic
    rhs = b - full[:, nonbasic] @ x[nonbasic]
    try:
        x[basis] = np.linalg.solve(full[:, basis], rhs)
    except np.linalg.LinAlgError:
        pass
    xs = np.clip(x[:n], lower, upper)
    return LpResult("optimal", xs, float(cost @ xs), iters)


def _idle_objective(model: MilpModel) -> float:
    day, p = model.day, model.params
    return sum(
        slot_cost(SlotDispatch(min(e, r), 0, 0, 0, 0, 1), e, pr, p)
        for e, r, pr in zip(day.consumption, day.res(p), day.price)
    )


def _unpack(model: MilpModel, x: np.ndarray, eps=1e-9):
    """Turn a mode-consistent LP point into clean dispatches and levels."""
    T, p = model.slots, model.params
    e_res = model.day.res(p)
    e_ec = model.day.consumption
    out = []
    level = p.level_initial
    levels = np.empty(T)
    for t in range(T):
        v = [max(x[model.index(name, t)], 0.0) for name in VARIABLES[:5]]
        v = [0.0 if abs(u) < 1e-12 else u for u in v]
        charge, discharge = v[1] + v[2], v[3] + v[4]
        if charge > eps:
            mode = 1
            v[3] = v[4] = 0.0
        elif discharge > eps:
            mode = 0
            v[1] = v[2] = 0.0
        else:
            mode = 1
            v[1] = v[2] = v[3] = v[4] = 0.0
        v[0] = min(v[0], e_res[t] - v[1], e_ec[t] - v[3])
        v[0] = max(v[0], 0.0)
        d = SlotDispatch(v[0], v[1], v[2], v[3], v[4], mode)
        level = ess_level_update(level, d, p)
        level = min(max(level, p.level_min), p.level_max)
        levels[t] = level
        out.append(d)
    return out, levels


def _conflicting_slots(model: MilpModel, x: np.ndarray, eps=1e-9):
    T = model.slots
    bad = []
    for t in range(T):
        charge = x[model.index("res_charge", t)] + x[model.index("grid_charge", t)]
        discharge = x[model.index("ess_load", t)] + x[model.index("ess_sell", t)]
        if charge > eps and discharge > eps:
            bad.append(t)
    return bad


def _fix_mode(model: MilpModel, lower, upper, t, value):
    lower = lower.copy()
    upper = upper.copy()
    j = model.index("mode", t)
    lower[j] = upper[j] = float(value)
    # bound tightening implied by the fixed mode
    if value == 0:
        upper[model.index("res_charge", t)] = 0.0
        upper[model.index("grid_charge", t)] = 0.0
    else:
        upper[model.index("ess_load", t)] = 0.0
        upper[model.index("ess_sell", t)] = 0.0
    return lower, upper


def _lp(model, lower, upper):
    return solve_lp(model.cost, model.a_eq, model.b_eq, model.a_ub, model.b_ub, lower, upper)


def solve_milp(model: MilpModel, tol: float = 1e-7, node_limit: int = 20000) -> OptimalDispatch:
    """Exact branch and bound over the mode binaries.

    An LP solution in which no slot both charges and discharges is already
    MILP-feasible (the modes can be rounded without touching the flows), so
    only slots with simultaneous flows are branched on, picking the most
    fractional mode and the lowest slot index on ties. Search dives
    depth-first into the child nearest the LP value and backtracks to the
    open node with the best bound. The ESS-idle dispatch seeds the incumbent.
    """
    start = time.perf_counter()
    stats = SolverStats()
    incumbent_obj = _idle_objective(model) - model.objective_constant
    incumbent_x = None

    def finish(x, obj):
        if x is None:
            disp = []
            e_res = model.day.res(model.params)
            for e, r in zip(model.day.consumption, e_res):
                disp.append(SlotDispatch(min(e, r), 0, 0, 0, 0, 1))
            levels = np.full(model.slots, model.params.level_initial)
        else:
            disp, levels = _unpack(model, x)
        objective = sum(
            slot_cost(d, e, pr, model.params)
            for d, e, pr in zip(disp, model.day.consumption, model.day.price)
        )
        stats.wall_time = time.perf_counter() - start
        return OptimalDispatch(disp, levels, float(objective), stats)

    open_nodes = []  # (bound, seq, lower, upper)
    seq = 0
    node = (model.lower, model.upper)
    while True:
        if node is None:
            if not open_nodes:
                break
            bound, _, lo, hi = heapq.heappop(open_nodes)
            if bound >= incumbent_obj - tol:
                continue
            node = (lo, hi)
        lo, hi = node
        node = None
        if stats.nodes >= node_limit:
            raise ResourceError(
                f"node limit {node_limit} reached", incumbent=finish(incumbent_x, incumbent_obj)
            )
        stats.nodes += 1
        res = _lp(model, lo, hi)
        stats.simplex_iterations += res.iterations
        if stats.nodes == 1:
            if res.status != "optimal":
                raise SolverError(f"root relaxation {res.status}")
            stats.lp_bound = res.objective + model.objective_constant
        if res.status != "optimal" or res.objective >= incumbent_obj - tol:
            continue
        conflicts = _conflicting_slots(model, res.x)
        if not conflicts:
            incumbent_obj, incumbent_x = res.objective, res.x
            continue
        modes = np.array([res.x[model.index("mode", t)] for t in conflicts])
        k = int(np.argmin(np.abs(modes - 0.5)))
        t = conflicts[k]
        first = 1 if modes[k] >= 0.5 else 0
        dive = _fix_mode(model, lo, hi, t, first)
        other = _fix_mode(model, lo, hi, t, 1 - first)
        seq += 1
        heapq.heappush(open_nodes, (res.objective, seq, other[0], other[1]))
        node = dive
    return finish(incumbent_x, incumbent_obj)


def lp_relaxation(model: MilpModel) -> float:
    """Objective of the continuous relaxation (a lower bound on the MILP)."""
    res = _lp(model, model.lower, model.upper)
    if res.status != "optimal":
        raise SolverError(f"relaxation {res.status}")
    return res.objective + model.objective_constant


def solve_day(day: DayProfile, params: SystemParams, **kw) -> OptimalDispatch:
    return solve_milp(build_day_model(day, params), **kw)


def verify_optimal_dispatch(sol: OptimalDispatch, day: DayProfile, params: SystemParams,
                            tol: float = TOL):
    """Raise ``InfeasibleError`` unless ``sol`` satisfies every physical constraint."""
    e_res = day.res(params)
    level = params.level_initial
    for t, d in enumerate(sol.dispatch):
        check_dispatch(d, params, e_res=e_res[t], e_ec=day.consumption[t], tol=tol)
        level = ess_level_update(level, d, params)
        if abs(level - sol.levels[t]) > tol:
            raise InfeasibleError(f"level trajectory mismatch at slot {t + 1}",
                                  abs(level - sol.levels[t]))
    if abs(level - params.level_initial) > tol:
        raise InfeasibleError("terminal level differs from initial level",
                              abs(level - params.level_initial))


# -- brute-force validation oracle -------------------------------------------

def _greedy_charge_cost(charge, e_ec, e_res, price):
    used = np.minimum(e_res, e_ec + charge)
    return (e_ec + charge - used) * price


def _greedy_discharge_cost(discharge, e_ec, e_res, price, alpha):
    res_load = min(e_ec, e_res)
    ess_load = np.minimum(discharge, e_ec - res_load)
    return (e_ec - res_load - ess_load) * price - (discharge - ess_load) * alpha * price


def brute_force_oracle(day: DayProfile, params: SystemParams, grid: float = 0.05,
                       max_slots: int = 6) -> OptimalDispatch:
    """Exhaustive search over ESS level paths restricted to a grid.

    Levels are confined to ``level_initial + k * grid``; each slot's mode
    follows from the sign of the level change. Within a slot, PV first
    serves the load (then charging) and discharge first serves the load
    (then is sold), which is the cheapest split for a fixed level change.
    The search is a shortest path over the level lattice, equivalent to
    enumerating every path. Result is flagged ``approximate``.
    """
    T = day.slots
    if T > max_slots:
        raise ResourceError(f"oracle limited to {max_slots} slots, got {T}")
    if grid <= 0:
        raise ValueError("grid must be positive")
    p = params
    eta = p.ess_efficiency
    reach = T * max(p.charge_cap * eta, p.discharge_cap / eta)
    k_lo = max(math.ceil((p.level_min - p.level_initial) / grid - 1e-9), -math.floor(reach / grid) - 1)
    k_hi = min(math.floor((p.level_max - p.level_initial) / grid + 1e-9), math.floor(reach / grid) + 1)
    ks = np.arange(k_lo, k_hi + 1)
    levels = p.level_initial + ks * grid
    nk = ks.shape[0]
    delta = levels[None, :] - levels[:, None]  # from row to column
    charge = np.where(delta > 0, delta / eta, 0.0)
    discharge = np.where(delta < 0, -delta * eta, 0.0)
    allowed = (charge <= p.charge_cap + 1e-12) & (discharge <= p.discharge_cap + 1e-12)

    e_ec = day.consumption
    e_res = day.res(p)
    step_cost = np.empty((T, nk, nk))
    for t in range(T):
        cc = _greedy_charge_cost(charge, e_ec[t], e_res[t], day.price[t])
        dc = _greedy_discharge_cost(discharge, e_ec[t], e_res[t], day.price[t], p.sell_ratio)
        step_cost[t] = np.where(delta < 0, dc, cc)
        step_cost[t][~allowed] = np.inf

    start_k = int(np.nonzero(ks == 0)[0][0])
    value = np.full(nk, np.inf)
    value[start_k] = 0.0
    choice = np.zeros((T, nk), dtype=np.int64)
    for t in range(T - 1, -1, -1):
        total = step_cost[t] + value[None, :]
        choice[t] = np.argmin(total, axis=1)
        value = total[np.arange(nk), choice[t]]

    obj = value[start_k]
    if not math.isfinite(obj):
        raise SolverError("no grid path returns to the initial level")
    disp = []
    lv = np.empty(T)
    k = start_k
    for t in range(T):
        nxt = choice[t, k]
        c, dsc = charge[k, nxt], discharge[k, nxt]
        res_load = min(e_ec[t], e_res[t])
        if dsc > 0:
            ess_load = min(dsc, e_ec[t] - res_load)
            d = SlotDispatch(res_load, 0.0, 0.0, ess_load, dsc - ess_load, 0)
        else:
            rc = min(e_res[t] - res_load, c)
            d = SlotDispatch(res_load, rc, c - rc, 0.0, 0.0, 1)
        disp.append(d)
        lv[t] = levels[nxt]
        k = nxt
    return OptimalDispatch(disp, lv, float(obj), SolverStats(), approximate=True)
