"""Hourly series I/O, synthetic homes, train/test splitting and day slicing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from hemsdr.core import DayProfile, SystemParams
from hemsdr.errors import DataError

KINDS = ("consumption", "irradiation", "price")
HOUR = timedelta(hours=1)
WINDOW = 168


def _utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(eq=False)
class HourlySeries:
    start: datetime
    values: np.ndarray
    kind: str = "consumption"

    def __post_init__(self):
        self.start = _utc(self.start)
        if self.start.minute or self.start.second or self.start.microsecond:
            raise DataError("series start must be hour-aligned")
        if self.kind not in KINDS:
            raise DataError(f"unknown series kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise DataError("series values must be one-dimensional")
        bad = np.nonzero(~np.isfinite(self.values) | (self.values < 0))[0]
        if bad.size:
            raise DataError(f"invalid value at index {bad[0]}: {self.values[bad[0]]}")

    def __len__(self):
        return self.values.shape[0]

    @property
    def end(self) -> datetime:
        """Timestamp one hour past the last sample."""
        return self.start + len(self) * HOUR

    def timestamp(self, i: int) -> datetime:
        return self.start + i * HOUR

    def slice(self, a: int, b: int) -> "HourlySeries":
        return HourlySeries(self.timestamp(a), self.values[a:b].copy(), self.kind)


def _format_ts(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:00:00Z")


def _parse_ts(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return _utc(datetime.fromisoformat(text))


def save_csv(series: HourlySeries, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("timestamp,value\n")
        for i, v in enumerate(series.values):
            fh.write(f"{_format_ts(series.timestamp(i))},{float(v)!r}\n")


def load_csv(path, kind="consumption") -> HourlySeries:
    """Read a ``timestamp,value`` file; rows must be contiguous hours.

    Content problems raise ``DataError`` naming the line; a missing or
    unreadable file raises the underlying ``OSError``.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "value"]:
            raise DataError(f"{path}: expected header 'timestamp,value', got {header}")
        stamps, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                ts = _parse_ts(row[0])
                v = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not math.isfinite(v) or v < 0:
                raise DataError(f"{path}:{lineno}: invalid value {row[1]!r}")
            if stamps and ts != stamps[-1] + HOUR:
                raise DataError(
                    f"{path}:{lineno}: gap or disorder, {_format_ts(ts)} follows "
                    f"{_format_ts(stamps[-1])}"
                )
            stamps.append(ts)
            values.append(v)
    if not stamps:
        raise DataError(f"{path}: no data rows")
    return HourlySeries(stamps[0], np.array(values), kind)


# -- synthetic homes -----------------------------------------------------------

_BASE_PROFILE = np.array([
    0.32, 0.28, 0.26, 0.25, 0.26, 0.33, 0.62, 0.95, 0.88, 0.62, 0.52, 0.50,
    0.56, 0.52, 0.48, 0.52, 0.68, 1.05, 1.45, 1.60, 1.42, 1.10, 0.75, 0.45,
])


@dataclass(frozen=True)
class HomeClass:
    """Behaviour class of a synthetic household.

    ``noise`` is the standard deviation of the multiplicative hourly noise;
    ``regime_switch`` is the per-day probability of following a different
    daily routine.
    """

    name: str
    base_profile: tuple = field(default=tuple(_BASE_PROFILE))
    noise: float = 0.005
    regime_switch: float = 0.0


STABLE = HomeClass("stable", noise=0.005)
FLUCTUATING = HomeClass("fluctuating", base_profile=tuple(1.3 * _BASE_PROFILE), noise=0.13)
CHAOS = HomeClass("chaos", noise=0.22, regime_switch=0.35)
HOME_CLASSES = {c.name: c for c in (STABLE, FLUCTUATING, CHAOS)}


def _month_hours(start: datetime, months: int) -> int:
    y, m = start.year, start.month + months
    y += (m - 1) // 12
    m = (m - 1) % 12 + 1
    end = start.replace(year=y, month=m)
    return int((end - start).total_seconds() // 3600)


def synth_home(home: HomeClass | str, months: int = 3, seed: int = 0,
               start: datetime = datetime(2014, 1, 1, tzinfo=timezone.utc)) -> HourlySeries:
    """Hourly consumption for ``months`` calendar months of a synthetic home.

    Each day follows the base profile (or, for switching homes, a randomly
    drawn alternative routine) times ``max(1 + noise * N(0, 1), 0.05)``.
    """
    if isinstance(home, str):
        home = HOME_CLASSES[home]
    if months < 2:
        raise DataError("need at least two months (one to train, one to test)")
    rng = np.random.default_rng(seed)
    base = np.array(home.base_profile, dtype=np.float64)
    alternatives = [np.roll(base, 3) * 1.2, np.roll(base, -2) * 0.8, base[::-1].copy()]
    hours = _month_hours(start, months)
    days = math.ceil(hours / 24)
    out = np.empty(days * 24)
    for d in range(days):
        profile = base
        if home.regime_switch and rng.random() < home.regime_switch:
            profile = alternatives[rng.integers(len(alternatives))]
        mult = np.maximum(1.0 + home.noise * rng.standard_normal(24), 0.05)
        out[24 * d:24 * d + 24] = profile * mult
    return HourlySeries(start, out[:hours], "consumption")


def synth_irradiation(months: int = 3, seed: int = 0, peak: float = 0.6,
                      start: datetime = datetime(2014, 1, 1, tzinfo=timezone.utc)) -> HourlySeries:
    """Half-sine daylight curve (06-18h) scaled by a daily cloudiness factor."""
    rng = np.random.default_rng(seed)
    hours = _month_hours(start, months)
    days = math.ceil(hours / 24)
    h = np.arange(24)
    shape = np.where((h >= 6) & (h <= 18), np.sin(np.pi * (h - 6) / 12.0), 0.0)
    out = np.empty(days * 24)
    for d in range(days):
        cloud = rng.uniform(0.25, 1.0)
        jitter = np.maximum(1.0 + 0.05 * rng.standard_normal(24), 0.0)
        out[24 * d:24 * d + 24] = peak * cloud * shape * jitter
    return HourlySeries(start, out[:hours], "irradiation")


def synth_price(months: int = 3, seed: int = 0,
                start: datetime = datetime(2014, 1, 1, tzinfo=timezone.utc),
                spike_rate: float = 0.6, peak_jitter: float = 1.5) -> HourlySeries:
    """Real-time-like price: two daily peaks plus level, noise and spikes.

    Peak centres wander by ``peak_jitter`` hours from day to day and a
    Poisson(``spike_rate``) number of hours per day are multiplied by
    U(1.5, 4). Spikes cannot be anticipated from past days, which is what
    separates hour-ahead from day-ahead control on this data.
    """
    rng = np.random.default_rng(seed)
    hours = _month_hours(start, months)
    days = math.ceil(hours / 24)
    h = np.arange(24)
    out = np.empty(days * 24)
    for d in range(days):
        morning = 8.0 + peak_jitter * rng.standard_normal()
        evening = 18.5 + peak_jitter * rng.standard_normal()
        shape = (0.04 + 0.035 * np.exp(-0.5 * ((h - morning) / 1.5) ** 2)
                 + 0.08 * np.exp(-0.5 * ((h - evening) / 2.0) ** 2))
        level = rng.uniform(0.85, 1.15)
        noise = np.maximum(1.0 + 0.08 * rng.standard_normal(24), 0.2)
        day = shape * level * noise
        for _ in range(rng.poisson(spike_rate)):
            day[rng.integers(24)] *= rng.uniform(1.5, 4.0)
        out[24 * d:24 * d + 24] = day
    return HourlySeries(start, out[:hours], "price")


# -- splitting and slicing -------------------------------------------------------

def split(series: HourlySeries, test_months: int = 1, window: int = WINDOW):
    """Chronological split: the last ``test_months`` calendar months form the test set.

    The train part keeps every earlier hour; its last ``window`` hours double
    as the context for the first test forecasts (see ``context``).
    """
    last = series.end - HOUR
    y, m = last.year, last.month - (test_months - 1)
    y += (m - 1) // 12
    m = (m - 1) % 12 + 1
    boundary = datetime(y, m, 1, tzinfo=timezone.utc)
    cut = int((boundary - series.start).total_seconds() // 3600)
    if cut < window or cut >= len(series):
        raise DataError(
            f"series of {len(series)} hours too short for a {test_months}-month test "
            f"split with {window}-hour context"
        )
    return series.slice(0, cut), series.slice(cut, len(series))


def context(train: HourlySeries, window: int = WINDOW) -> np.ndarray:
    return train.values[-window:].copy()


def to_days(consumption, irradiation, price, params: SystemParams = SystemParams()):
    """Slice aligned series into ``DayProfile`` objects (aligned by index).

    Series may start on different calendar dates; only whole days present in
    all three are returned.
    """
    arrs = [np.asarray(getattr(s, "values", s), dtype=np.float64)
            for s in (consumption, irradiation, price)]
    T = params.slots_per_day
    n = min(len(a) for a in arrs) // T
    return [DayProfile(*(a[T * d:T * d + T] for a in arrs)) for d in range(n)]
