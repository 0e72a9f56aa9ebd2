"""Month-level comparison of strategies: costs, effectiveness, PV waste, timing."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hemsdr.core import SystemParams
from hemsdr.errors import DataError, MetricError
from hemsdr.simulation import History, milp_reference, milp_replay, simulate_day

log = logging.getLogger(__name__)


def effectiveness(costs_strategy, costs_milp, costs_base) -> float:
    """Share of the optimum's mean relative saving that a strategy achieves, in percent.

    ``100 * sum((base - s) / base) / sum((base - milp) / base)``.
    """
    s = np.asarray(costs_strategy, dtype=np.float64)
    m = np.asarray(costs_milp, dtype=np.float64)
    b = np.asarray(costs_base, dtype=np.float64)
    if not s.shape == m.shape == b.shape or s.ndim != 1:
        raise MetricError("cost series must be one-dimensional and of equal length")
    if s.size == 0:
        raise MetricError("no days to compare")
    if np.any(b <= 0):
        raise MetricError("baseline cost must be positive on every day")
    if np.any(m > b + 1e-9):
        raise MetricError("optimum costs more than the baseline on some day")
    denom = float(np.sum((b - m) / b))
    if denom <= 0:
        raise MetricError("the optimum saves nothing: effectiveness undefined")
    return 100.0 * (float(np.sum((b - s) / b)) / denom)


@dataclass(eq=False)
class EvaluationReport:
    baseline: np.ndarray = field(default_factory=lambda: np.zeros(0))
    milp: np.ndarray = field(default_factory=lambda: np.zeros(0))
    costs: dict = field(default_factory=dict)
    waste: dict = field(default_factory=dict)
    slot_time: dict = field(default_factory=dict)
    plan_time: dict = field(default_factory=dict)
    residual: dict = field(default_factory=dict)

    @property
    def strategies(self):
        return list(self.costs)

    @property
    def days(self) -> int:
        return len(self.baseline)

    def effectiveness(self, name) -> float:
        """Effectiveness of ``name``; NaN when the metric is undefined."""
        try:
            return effectiveness(self.costs[name], self.milp, self.baseline)
        except MetricError as exc:
            log.warning("effectiveness of %s undefined: %s", name, exc)
            return math.nan

    def to_json(self) -> str:
        def lists(d):
            return {k: np.asarray(v, dtype=float).tolist() for k, v in d.items()}
        doc = {
            "baseline": self.baseline.tolist(),
            "milp": self.milp.tolist(),
            "costs": lists(self.costs),
            "waste": dict(self.waste),
            "slot_time": dict(self.slot_time),
            "plan_time": dict(self.plan_time),
            "residual": dict(self.residual),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text) -> "EvaluationReport":
        try:
            doc = json.loads(text)
            return cls(
                np.array(doc["baseline"], dtype=float), np.array(doc["milp"], dtype=float),
                {k: np.array(v, dtype=float) for k, v in doc["costs"].items()},
                doc["waste"], doc["slot_time"], doc["plan_time"], doc["residual"],
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"malformed report: {exc}") from exc


def evaluate_month(strategies, days, history: History = None,
                   params: SystemParams = SystemParams(), include_milp=True) -> EvaluationReport:
    """Simulate every strategy on every test day next to the offline optimum.

    Day ``i`` sees ``history`` plus test days ``0..i-1`` as its past. With
    ``include_milp`` the optimum itself is replayed as strategy ``milp``.
    """
    history = History() if history is None else history
    days = list(days)
    rep = EvaluationReport(np.zeros(len(days)), np.zeros(len(days)))
    names = [s.name for s in strategies] + (["milp"] if include_milp else [])
    if len(set(names)) != len(names):
        raise DataError(f"duplicate strategy names in {names}")
    for n in names:
        rep.costs[n] = np.zeros(len(days))
        rep.waste[n] = 0.0
        rep.residual[n] = 0.0
    times = {n: [] for n in names}
    plans = {n: [] for n in names}
    for i, day in enumerate(days):
        ref = milp_reference(day, params)
        rep.milp[i] = ref.objective
        runs = list(strategies) + ([milp_replay(ref)] if include_milp else [])
        for strat in runs:
            res = simulate_day(strat, day, history, params)
            rep.baseline[i] = res.baseline
            rep.costs[strat.name][i] = res.cost
            rep.waste[strat.name] += res.res_waste
            rep.residual[strat.name] += res.terminal_residual / len(days)
            times[strat.name].extend(res.slot_times.tolist())
            plans[strat.name].append(res.plan_time)
        history = history.extend(day)
        log.info("day %d/%d done", i + 1, len(days))
    for n in names:
        rep.slot_time[n] = float(np.mean(times[n])) if times[n] else 0.0
        rep.plan_time[n] = float(np.mean(plans[n])) if plans[n] else 0.0
    return rep


# -- output ------------------------------------------------------------------

SUMMARY_COLUMNS = ("strategy", "effectiveness_pct", "mean_cost", "res_waste_kwh",
                   "mean_slot_seconds", "mean_plan_seconds", "mean_terminal_residual_kwh")


def _num(x) -> str:
    return repr(float(x))


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n{body}</svg>\n')


_PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
_W, _H, _M = 640, 360, 48


def _axes(title, ylabel, lo, hi):
    x0, y0, x1, y1 = _M, _H - _M, _W - _M // 2, _M // 2
    out = [f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
           f'<text x="{_W // 2}" y="16" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="12" y="{_H // 2}" font-size="11" transform="rotate(-90 12 {_H // 2})" '
           f'text-anchor="middle">{ylabel}</text>',
           f'<text x="{x0 - 4}" y="{y0}" font-size="10" text-anchor="end">{lo:.3g}</text>',
           f'<text x="{x0 - 4}" y="{y1 + 8}" font-size="10" text-anchor="end">{hi:.3g}</text>']
    return out


def _scale(v, lo, hi):
    span = hi - lo if hi > lo else 1.0
    return (_H - _M) - (v - lo) / span * (_H - _M - _M // 2)


def costs_svg(rep: EvaluationReport) -> str:
    series = [("baseline", rep.baseline), ("milp-optimum", rep.milp)]
    series += [(n, rep.costs[n]) for n in rep.strategies if n != "milp"]
    vals = np.concatenate([np.asarray(v, dtype=float) for _, v in series])
    lo, hi = (float(vals.min()), float(vals.max())) if vals.size else (0.0, 1.0)
    parts = _axes("Daily cost", "cost", lo, hi)
    n = rep.days
    for k, (name, v) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        if n:
            step = (_W - _M // 2 - _M) / max(n - 1, 1)
            pts = " ".join(f"{_M + i * step:.2f},{_scale(c, lo, hi):.2f}" for i, c in enumerate(v))
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{_W - 150}" y="{40 + 14 * k}" font-size="11" fill="{color}">{name}</text>')
    return _svg(_W, _H, "\n".join(parts) + "\n")


def _bars(title, ylabel, items):
    vals = [v for _, v in items if math.isfinite(v)]
    lo = min([0.0] + vals)
    hi = max([1.0] + vals)
    parts = _axes(title, ylabel, lo, hi)
    if items:
        slot = (_W - _M // 2 - _M) / len(items)
        for k, (name, v) in enumerate(items):
            x = _M + k * slot + slot * 0.15
            w = slot * 0.7
            top = _scale(max(v, 0.0), lo, hi) if math.isfinite(v) else _H - _M
            base = _scale(min(v, 0.0), lo, hi) if math.isfinite(v) else _H - _M
            parts.append(f'<rect x="{x:.2f}" y="{top:.2f}" width="{w:.2f}" '
                         f'height="{base - top:.2f}" fill="{_PALETTE[k % len(_PALETTE)]}"/>')
            parts.append(f'<text x="{x + w / 2:.2f}" y="{_H - _M + 14}" font-size="10" '
                         f'text-anchor="middle">{name}</text>')
    return _svg(_W, _H, "\n".join(parts) + "\n")


def emit_report(rep: EvaluationReport, out_dir):
    """Write costs.csv, summary.csv and three SVG charts; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = rep.strategies
    paths = {}

    p = out / "costs.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "baseline", "milp_optimum", *names])
        for i in range(rep.days):
            w.writerow([i + 1, _num(rep.baseline[i]), _num(rep.milp[i]),
                        *(_num(rep.costs[n][i]) for n in names)])
    paths["costs.csv"] = p

    p = out / "summary.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for n in names:
            w.writerow([n, _num(rep.effectiveness(n)), _num(np.mean(rep.costs[n])),
                        _num(rep.waste[n]), _num(rep.slot_time[n]), _num(rep.plan_time[n]),
                        _num(rep.residual[n])])
    paths["summary.csv"] = p

    charts = {
        "costs.svg": costs_svg(rep),
        "effectiveness.svg": _bars("Effectiveness", "percent",
                                   [(n, rep.effectiveness(n)) for n in names]),
        "waste.svg": _bars("PV energy lost", "kWh", [(n, float(rep.waste[n])) for n in names]),
    }
    for fname, text in charts.items():
        p = out / fname
        p.write_text(text, encoding="utf-8")
        paths[fname] = p
    return paths
