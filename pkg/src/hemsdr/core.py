"""Physical model of the home: ESS, PV and per-slot energy accounting.

Energies are kWh per slot, prices are abstract currency per kWh. Every
feasibility comparison uses the absolute tolerance ``TOL``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from hemsdr.errors import ConfigError, DomainError, InfeasibleError

TOL = 1e-9


@dataclass(frozen=True)
class SystemParams:
    """ESS/PV physical constants plus economic constants.

    Defaults reproduce the reference home: 0.9 round-trip leg efficiency,
    1 kW charge/discharge, 0.5-10 kWh band starting at 0.5 kWh, a 1 m2
    panel at 0.9 efficiency, sell price equal to buy price, hourly slots.
    """

    ess_efficiency: float = 0.9
    charge_rate: float = 1.0
    discharge_rate: float = 1.0
    level_min: float = 0.5
    level_max: float = 10.0
    level_initial: float = 0.5
    panel_area: float = 1.0
    res_efficiency: float = 0.9
    sell_ratio: float = 1.0
    slot_duration: float = 1.0
    slots_per_day: int = 24

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ConfigError(f"{f.name} must be finite, got {v!r}")
        for name in ("ess_efficiency", "res_efficiency", "sell_ratio"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if self.charge_rate <= 0 or self.discharge_rate <= 0:
            raise ConfigError("charge_rate and discharge_rate must be positive")
        if self.slot_duration <= 0:
            raise ConfigError("slot_duration must be positive")
        if int(self.slots_per_day) != self.slots_per_day or self.slots_per_day < 1:
            raise ConfigError("slots_per_day must be a positive integer")
        if self.panel_area < 0:
            raise ConfigError("panel_area must be non-negative")
        if not self.level_min <= self.level_max:
            raise ConfigError("level_min must not exceed level_max")
        if not self.level_min <= self.level_initial <= self.level_max:
            raise ConfigError(
                f"level_initial {self.level_initial} outside "
                f"[{self.level_min}, {self.level_max}]"
            )

    @property
    def charge_cap(self) -> float:
        """Largest energy that may enter the ESS in one slot (before losses)."""
        return self.charge_rate * self.slot_duration

    @property
    def discharge_cap(self) -> float:
        return self.discharge_rate * self.slot_duration


def _as_series(name, values, length):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise DomainError(f"{name} must have length {length}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise DomainError(f"{name} contains negative values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DayProfile:
    """Aligned per-slot consumption (kWh), irradiation (kW/m2) and price."""

    consumption: np.ndarray
    irradiation: np.ndarray
    price: np.ndarray

    def __post_init__(self):
        n = len(np.atleast_1d(self.consumption))
        object.__setattr__(self, "consumption", _as_series("consumption", self.consumption, n))
        object.__setattr__(self, "irradiation", _as_series("irradiation", self.irradiation, n))
        object.__setattr__(self, "price", _as_series("price", self.price, n))
        if n < 1:
            raise DomainError("a day needs at least one slot")

    @property
    def slots(self) -> int:
        return self.consumption.shape[0]

    def res(self, params: SystemParams) -> np.ndarray:
        return res_energy(self.irradiation, params)


@dataclass(frozen=True)
class SlotDispatch:
    """The five controllable energy flows of one slot plus the ESS mode.

    ``mode`` is 1 for charging and 0 for discharging; an idle slot is
    represented in charge mode with zero magnitudes.
    """

    res_to_load: float = 0.0
    res_to_ess: float = 0.0
    grid_to_ess: float = 0.0
    ess_to_load: float = 0.0
    ess_to_sell: float = 0.0
    mode: int = 1

    @property
    def charge_total(self) -> float:
        return self.res_to_ess + self.grid_to_ess

    @property
    def discharge_total(self) -> float:
        return self.ess_to_load + self.ess_to_sell

    @property
    def e_cd(self) -> float:
        """Signed ESS energy: charge total if charging, minus discharge total otherwise."""
        return self.charge_total if self.mode else -self.discharge_total

    def as_tuple(self):
        return (self.res_to_load, self.res_to_ess, self.grid_to_ess,
                self.ess_to_load, self.ess_to_sell, self.mode)


IDLE = SlotDispatch()


def _check_scalar(name, x):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x}")
    return x


def res_energy(ghi, params: SystemParams):
    """PV output over one slot: ``ghi * area * efficiency * slot_duration``.

    Accepts a scalar or an array of irradiation values.
    """
    g = np.asarray(ghi, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise DomainError("irradiation must be finite")
    if np.any(g < 0):
        raise DomainError("irradiation must be non-negative")
    out = g * params.panel_area * params.res_efficiency * params.slot_duration
    return float(out) if out.ndim == 0 else out


def check_dispatch(d: SlotDispatch, params: SystemParams, e_res=None, e_ec=None, tol=TOL):
    """Raise ``InfeasibleError`` unless ``d`` meets the per-slot constraints.

    Covers sign, mode exclusivity and rate caps; the PV split and the
    non-negative grid draw are checked when ``e_res``/``e_ec`` are given.
    """
    values = d.as_tuple()[:5]
    if any(not math.isfinite(v) for v in values):
        raise InfeasibleError("non-finite dispatch component")
    worst = min(values)
    if worst < -tol:
        raise InfeasibleError("negative energy flow", -worst)
    if d.mode not in (0, 1):
        raise InfeasibleError(f"mode must be 0 or 1, got {d.mode}")
    if d.mode == 1 and d.discharge_total > tol:
        raise InfeasibleError("discharge while in charge mode", d.discharge_total)
    if d.mode == 0 and d.charge_total > tol:
        raise InfeasibleError("charge while in discharge mode", d.charge_total)
    over = d.charge_total - params.charge_cap
    if over > tol:
        raise InfeasibleError("charge rate exceeded", over)
    over = d.discharge_total - params.discharge_cap
    if over > tol:
        raise InfeasibleError("discharge rate exceeded", over)
    if e_res is not None:
        over = d.res_to_load + d.res_to_ess - e_res
        if over > tol:
            raise InfeasibleError("PV split exceeds PV output", over)
    if e_ec is not None:
        over = d.res_to_load + d.ess_to_load - e_ec
        if over > tol:
            raise InfeasibleError("supply to load exceeds consumption", over)


def ess_level_update(level: float, d: SlotDispatch, params: SystemParams) -> float:
    """Level after one slot; charging gains ``eta`` per kWh, discharging costs ``1/eta``."""
    level = _check_scalar("level", level)
    eta = params.ess_efficiency
    new = level + d.charge_total * eta - d.discharge_total / eta
    if new < params.level_min - TOL:
        raise InfeasibleError(
            f"ESS level {new:.6g} below minimum {params.level_min}", params.level_min - new
        )
    if new > params.level_max + TOL:
        raise InfeasibleError(
            f"ESS level {new:.6g} above maximum {params.level_max}", new - params.level_max
        )
    return new


def slot_cost(d: SlotDispatch, e_ec: float, price: float, params: SystemParams) -> float:
    """Cost of one slot: grid purchases for load and charging minus ESS sales."""
    e_ec = _check_scalar("e_ec", e_ec)
    price = _check_scalar("price", price)
    grid_load = e_ec - d.ess_to_load - d.res_to_load
    if grid_load < -TOL:
        raise InfeasibleError("supply to load exceeds consumption", -grid_load)
    grid_load = max(grid_load, 0.0)
    return (grid_load + d.grid_to_ess) * price - d.ess_to_sell * params.sell_ratio * price


def slot_cost_signed(e_cd, e_res_load, e_ec, e_res, price, params: SystemParams) -> float:
    """Slot cost written in terms of the signed ESS action and the PV-to-load flow.

    Charging: PV left over after load covers charging first,
    ``cost = (e_ec - e_res_load + e_cd - min(e_res - e_res_load, e_cd)) * price``.
    Discharging: all PV serves the load and the residual load
    ``max(e_ec - e_res, 0)`` is met by the discharge; any surplus is sold at
    ``sell_ratio * price``.
    """
    e_cd = _check_scalar("e_cd", e_cd)
    e_res_load = _check_scalar("e_res_load", e_res_load)
    e_ec = _check_scalar("e_ec", e_ec)
    e_res = _check_scalar("e_res", e_res)
    price = _check_scalar("price", price)
    if e_cd >= 0:
        rc = min(e_res - e_res_load, e_cd)
        return (e_ec - e_res_load + e_cd - rc) * price
    residual = max(e_ec - e_res, 0.0)
    if residual >= -e_cd:
        return (residual + e_cd) * price
    return (residual + e_cd) * params.sell_ratio * price


def to_signed(d: SlotDispatch):
    """``(e_cd, res_to_load)`` encoding of a dispatch."""
    return d.e_cd, d.res_to_load


def project_dispatch(mode, res_charge, grid_charge, discharge, e_ec, e_res, level,
                     params: SystemParams) -> SlotDispatch:
    """Turn a requested ESS action into a physically feasible dispatch.

    PV serves the load first in discharge mode and whatever the ESS does not
    take in charge mode. Requested charge is clipped to the available PV and
    then scaled down proportionally to honour the rate cap and the upper
    level bound; discharge is clipped to the rate cap and the lower level
    bound, goes to the load first and the rest is sold.
    """
    eta = params.ess_efficiency
    e_ec = max(float(e_ec), 0.0)
    e_res = max(float(e_res), 0.0)
    if mode:
        rc = min(max(float(res_charge), 0.0), e_res)
        gc = max(float(grid_charge), 0.0)
        total = rc + gc
        cap = min(params.charge_cap, max(params.level_max - level, 0.0) / eta)
        if total > cap:
            scale = cap / total
            rc *= scale
            gc *= scale
        res_load = min(e_ec, max(e_res - rc, 0.0))
        return SlotDispatch(res_load, rc, gc, 0.0, 0.0, 1)
    cap = min(params.discharge_cap, max(level - params.level_min, 0.0) * eta)
    dis = min(max(float(discharge), 0.0), cap)
    res_load = min(e_ec, e_res)
    ess_load = min(dis, e_ec - res_load)
    return SlotDispatch(res_load, 0.0, 0.0, ess_load, dis - ess_load, 0)


def signed_to_request(e_cd, e_res_load, e_res):
    """Map the signed encoding to ``(mode, res_charge, grid_charge, discharge)``.

    Charging draws ``min(e_res - e_res_load, e_cd)`` from PV and the rest from
    the grid, mirroring ``slot_cost_signed``.
    """
    if e_cd >= 0:
        rc = max(min(e_res - e_res_load, e_cd), 0.0)
        return 1, rc, e_cd - rc, 0.0
    return 0, 0.0, 0.0, -e_cd


@dataclass(frozen=True)
class EssState:
    level: float
    params: SystemParams = field(default_factory=SystemParams, repr=False)

    def __post_init__(self):
        p = self.params
        if not p.level_min - TOL <= self.level <= p.level_max + TOL:
            raise InfeasibleError(
                f"level {self.level} outside [{p.level_min}, {p.level_max}]",
                max(p.level_min - self.level, self.level - p.level_max),
            )

    def step(self, d: SlotDispatch) -> "EssState":
        return EssState(ess_level_update(self.level, d, self.params), self.params)
