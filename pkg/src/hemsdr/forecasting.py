"""GRU forecasters for consumption, irradiation and price.

Horizon-1 forecasters feed the hour-ahead controllers; horizon-24 ones feed
the day-ahead plan (one network emits all 24 values at once).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hemsdr import nn
from hemsdr.data import WINDOW
from hemsdr.errors import DataError, DomainError

log = logging.getLogger(__name__)

MAPE_FLOOR = 0.01


@dataclass(eq=False)
class Forecaster:
    net: nn.GruNet
    horizon: int
    target: str = "consumption"

    @property
    def window(self) -> int:
        return self.net.window

    def predict(self, window) -> np.ndarray:
        """Next ``horizon`` values after ``window`` (oldest first), clamped at 0."""
        w = np.asarray(window, dtype=np.float64)
        if w.shape != (self.window,):
            raise DomainError(f"window must have length {self.window}, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise DomainError("window contains non-finite values")
        return np.maximum(self.net.predict(w[None, :])[0], 0.0)

    def predict_many(self, windows) -> np.ndarray:
        w = np.asarray(windows, dtype=np.float64)
        return np.maximum(self.net.predict(w), 0.0)

    def save(self, path):
        self.net.meta = {"horizon": self.horizon, "target": self.target}
        nn.save(self.net, path)

    @classmethod
    def load(cls, path) -> "Forecaster":
        net = nn.load(path)
        return cls(net, int(net.meta["horizon"]), net.meta.get("target", "consumption"))


def sliding_windows(values, window=WINDOW, horizon=1, stride=1):
    """Supervised pairs ``(values[i:i+window], values[i+window:i+window+horizon])``."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0] - window - horizon + 1
    if n < 1:
        raise DataError(
            f"need at least {window + horizon} points for window {window} and "
            f"horizon {horizon}, got {v.shape[0]}"
        )
    starts = np.arange(0, n, stride)
    idx = starts[:, None] + np.arange(window)[None, :]
    x = v[idx]
    y = v[starts[:, None] + window + np.arange(horizon)[None, :]]
    return x, y


def fit(history, horizon=1, seed=0, target="consumption", window=WINDOW, hidden=64,
        layers=2, epochs=40, batch=64, lr=3e-3, stride=1) -> Forecaster:
    """Train a GRU forecaster on every sliding window of ``history``."""
    values = np.asarray(getattr(history, "values", history), dtype=np.float64)
    x, y = sliding_windows(values, window, horizon, stride)
    net = nn.GruNet(1, hidden, layers, window, horizon, seed=seed)
    net, curve = nn.train(net, x, y, epochs=epochs, batch=batch, lr=lr, seed=seed)
    log.info("forecaster %s/h%d trained on %d windows, final loss %.4g",
             target, horizon, len(x), curve[-1] if curve else float("nan"))
    return Forecaster(net, horizon, target)


def mape(pred, actual, floor=MAPE_FLOOR) -> float:
    """Mean absolute percentage error with denominators floored at ``floor``."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise DomainError("prediction and actual lengths differ")
    if p.size == 0:
        raise DomainError("empty series")
    if floor <= 0:
        raise DomainError("floor must be positive")
    return float(np.mean(np.abs(p - a) / np.maximum(a, floor)) * 100.0)


def rolling_predictions(f: Forecaster, context, test) -> np.ndarray:
    """Walk-forward forecasts over ``test``: horizon-1 every hour, otherwise per block."""
    ctx = np.asarray(context, dtype=np.float64)[-f.window:]
    test = np.asarray(getattr(test, "values", test), dtype=np.float64)
    full = np.concatenate([ctx, test])
    starts = np.arange(0, test.shape[0], f.horizon)
    wins = np.stack([full[s:s + f.window] for s in starts])
    preds = f.predict_many(wins).reshape(-1)
    return preds[:test.shape[0]]


def evaluate_mape(f: Forecaster, train, test, floor=MAPE_FLOOR) -> float:
    train_v = np.asarray(getattr(train, "values", train), dtype=np.float64)
    test_v = np.asarray(getattr(test, "values", test), dtype=np.float64)
    return mape(rolling_predictions(f, train_v, test_v), test_v, floor)


class SeasonalNaive:
    """Repeats the value observed one ``period`` earlier.

    Exact on strictly periodic series; used as a reference forecaster and as
    a drop-in where a trained network is unnecessary.
    """

    def __init__(self, horizon=1, period=24, window=WINDOW, target="consumption"):
        if not 1 <= horizon <= period <= window:
            raise DomainError("need 1 <= horizon <= period <= window")
        self.horizon = int(horizon)
        self.period = int(period)
        self.window = int(window)
        self.target = target

    def predict(self, window) -> np.ndarray:
        w = np.asarray(window, dtype=np.float64)
        if w.shape != (self.window,):
            raise DomainError(f"window must have length {self.window}, got {w.shape}")
        start = self.window - self.period
        return np.maximum(w[start:start + self.horizon].copy(), 0.0)

    def predict_many(self, windows) -> np.ndarray:
        return np.stack([self.predict(w) for w in np.asarray(windows, dtype=np.float64)])


class FixedForecast:
    """Ignores the window and returns preset values (perfect-information runs)."""

    def __init__(self, values, window=WINDOW, target="consumption"):
        self.values = np.maximum(np.asarray(values, dtype=np.float64).ravel(), 0.0)
        self.horizon = self.values.shape[0]
        self.window = int(window)
        self.target = target

    def predict(self, window) -> np.ndarray:
        if np.shape(window) != (self.window,):
            raise DomainError(f"window must have length {self.window}")
        return self.values.copy()


def forecaster_entry(f, root: Path):
    """Manifest entry for ``f``; trained networks are written next to it."""
    if isinstance(f, Forecaster):
        f.save(root / "forecaster.net")
        return {"kind": "gru", "file": "forecaster.net"}
    if isinstance(f, SeasonalNaive):
        return {"kind": "seasonal-naive", "horizon": f.horizon, "period": f.period,
                "window": f.window}
    if isinstance(f, FixedForecast):
        return {"kind": "fixed", "values": f.values.tolist(), "window": f.window}
    raise DataError(f"cannot serialise forecaster of type {type(f).__name__}")


def forecaster_from_entry(entry, root: Path):
    kind = entry.get("kind")
    if kind == "gru":
        return Forecaster.load(root / entry["file"])
    if kind == "seasonal-naive":
        return SeasonalNaive(entry["horizon"], entry["period"], entry["window"])
    if kind == "fixed":
        return FixedForecast(entry["values"], entry["window"])
    raise DataError(f"unknown forecaster kind {kind!r}")
