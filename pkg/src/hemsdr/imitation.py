"""Imitation of the day-ahead optimum by four per-slot regression heads.

Historical days are solved with the MILP; every slot becomes a sample
mapping ``[e_ec, ghi, level before the slot, price, t]`` to four optimal
flows. At run time a consumption forecaster replaces the unknown ``e_ec``
and the heads' charge and discharge intents are arbitrated into one
feasible dispatch.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hemsdr import nn
from hemsdr.core import SlotDispatch, SystemParams, project_dispatch, res_energy
from hemsdr.errors import DataError, SolverError, TrainingError
from hemsdr.forecasting import forecaster_entry, forecaster_from_entry
from hemsdr.milp import solve_day

log = logging.getLogger(__name__)

FEATURES = ("e_ec", "ghi", "level_prev", "price", "slot")
HEADS = ("res_load", "grid_charge", "ess_load", "ess_sell")
BUNDLE_FORMAT = "hemsdr-imitation"
BUNDLE_VERSION = 1


@dataclass(eq=False)
class ImitationDataset:
    """Inputs ``x`` (N, 5) and labels ``y`` (N, 4), one row per slot."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1, len(FEATURES))
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1, len(HEADS))
        if len(self.x) != len(self.y):
            raise DataError("input and label counts differ")

    def __len__(self):
        return len(self.x)

    def head(self, name):
        return self.y[:, HEADS.index(name)]


def generate_dataset(days, params: SystemParams = SystemParams(), **solver_kw) -> ImitationDataset:
    """Label every slot of ``days`` with the day's optimal flows.

    The level input is the optimal trajectory's level before the slot, so
    the first slot of each day sees the initial level. Days the solver
    cannot handle are skipped with a warning.
    """
    xs, ys = [], []
    for k, day in enumerate(days):
        try:
            sol = solve_day(day, params, **solver_kw)
        except SolverError as exc:
            log.warning("day %d skipped: %s", k, exc)
            continue
        prev = np.concatenate([[params.level_initial], sol.levels[:-1]])
        for t, d in enumerate(sol.dispatch):
            xs.append([day.consumption[t], day.irradiation[t], prev[t], day.price[t], t + 1])
            ys.append([d.res_to_load, d.grid_to_ess, d.ess_to_load, d.ess_to_sell])
    return ImitationDataset(np.array(xs).reshape(-1, 5), np.array(ys).reshape(-1, 4))


def save_dataset(ds: ImitationDataset, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURES + HEADS)
        for xr, yr in zip(ds.x, ds.y):
            w.writerow([repr(float(v)) for v in xr] + [repr(float(v)) for v in yr])


def load_dataset(path) -> ImitationDataset:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FEATURES + HEADS:
            raise DataError(f"{path}: unexpected header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if len(vals) != 9 or not np.all(np.isfinite(vals)):
                raise DataError(f"{path}:{lineno}: expected 9 finite fields")
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 9)
    return ImitationDataset(arr[:, :5], arr[:, 5:])


@dataclass(eq=False)
class ImitationController:
    heads: dict
    forecaster: object
    params: SystemParams = field(default_factory=SystemParams)
    losses: dict = field(default_factory=dict)

    def head_outputs(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64).reshape(1, -1)
        return np.array([float(self.heads[h].predict(x)[0, 0]) for h in HEADS])


def train_controller(ds: ImitationDataset, forecaster, params: SystemParams = SystemParams(),
                     seed=0, hidden=(128, 128), epochs=200, batch=64, lr=1e-3) -> ImitationController:
    """Fit one relu network per labelled flow on the shared inputs."""
    if len(ds) == 0:
        raise DataError("empty imitation dataset")
    heads, losses = {}, {}
    for k, name in enumerate(HEADS):
        net = nn.DenseNet([len(FEATURES), *hidden, 1], "relu", seed=seed + k)
        try:
            net, curve = nn.train(net, ds.x, ds.head(name), epochs=epochs, batch=batch,
                                  lr=lr, seed=seed + k)
        except TrainingError as exc:
            raise TrainingError(f"head {name}: {exc}") from exc
        heads[name] = net
        losses[name] = curve
        log.info("head %s final loss %.3g", name, curve[-1] if curve else float("nan"))
    return ImitationController(heads, forecaster, params, losses)


def control_step(c: ImitationController, window_ec, ghi_now, level, price_now, t,
                 e_ec=None) -> SlotDispatch:
    """One hour-ahead decision.

    The forecast consumption stands in for the unknown load when querying
    the heads; ``e_ec`` (the load the slot actually draws) is only used to
    realize the dispatch, defaulting to the forecast.
    """
    p = c.params
    window = np.asarray(window_ec, dtype=np.float64)[-c.forecaster.window:]
    f_ec = float(c.forecaster.predict(window)[0])
    raw = c.head_outputs([f_ec, ghi_now, level, price_now, t])
    e_res = res_energy(ghi_now, p)
    res_load = min(max(raw[0], 0.0), e_res)
    grid_charge = min(max(raw[1], 0.0), p.charge_cap)
    ess_load = min(max(raw[2], 0.0), p.discharge_cap)
    ess_sell = min(max(raw[3], 0.0), p.discharge_cap)
    res_charge = max(e_res - res_load, 0.0)
    load = f_ec if e_ec is None else e_ec
    if res_charge + grid_charge >= ess_load + ess_sell:
        return project_dispatch(1, res_charge, grid_charge, 0.0, load, e_res, level, p)
    return project_dispatch(0, 0.0, 0.0, ess_load + ess_sell, load, e_res, level, p)


class ImitationStrategy:
    name = "imitation"

    def __init__(self, controller: ImitationController):
        self.controller = controller

    def begin_day(self, history, params):
        pass

    def step(self, obs, params):
        return control_step(self.controller, obs.past_consumption, obs.ghi, obs.level,
                            obs.price, obs.t, e_ec=obs.e_ec)


# -- bundles -----------------------------------------------------------------

def save_controller(c: ImitationController, directory):
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for name, net in c.heads.items():
        nn.save(net, root / f"head_{name}.net")
    manifest = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "features": list(FEATURES),
        "heads": {name: f"head_{name}.net" for name in HEADS},
        "forecaster": forecaster_entry(c.forecaster, root),
        "params": c.params.__dict__,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")


def load_controller(directory) -> ImitationController:
    root = Path(directory)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DataError(f"{root}: unreadable manifest: {exc}") from exc
    if manifest.get("format") != BUNDLE_FORMAT or manifest.get("version") != BUNDLE_VERSION:
        raise DataError(f"{root}: not an imitation bundle")
    heads = {name: nn.load(root / fname) for name, fname in manifest["heads"].items()}
    return ImitationController(heads, forecaster_from_entry(manifest["forecaster"], root),
                               SystemParams(**manifest["params"]))
