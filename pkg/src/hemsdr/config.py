"""``key = value`` configuration files.

Every physical constant and training hyperparameter has a default matching
the reference setup; a file only needs the keys it changes. ``#`` starts a
comment. Sizes of network stacks are written as colon-separated widths,
e.g. ``maddpg.actor_ess = 200:200:200``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from hemsdr.core import SystemParams
from hemsdr.errors import ConfigError
from hemsdr.maddpg import MaddpgConfig


@dataclass
class ForecastConfig:
    window: int = 168
    hidden: int = 64
    layers: int = 2
    epochs: int = 40
    batch: int = 64
    lr: float = 3e-3
    stride: int = 1


@dataclass
class ImitationConfig:
    hidden: tuple = (128, 128)
    epochs: int = 200
    batch: int = 64
    lr: float = 1e-3


@dataclass
class Config:
    system: SystemParams = field(default_factory=SystemParams)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    imitation: ImitationConfig = field(default_factory=ImitationConfig)
    maddpg: MaddpgConfig = field(default_factory=MaddpgConfig)
    home: str = "stable"
    months: int = 3


_SECTIONS = ("system", "forecast", "imitation", "maddpg")


def _convert(text, default, key):
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(p) for p in text.split(":") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc
    return text


def parse_config(text: str, source="<config>") -> Config:
    cfg = Config()
    values = {s: {} for s in _SECTIONS}
    top = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        section, _, name = key.rpartition(".")
        if not section:
            if name in ("home", "months"):
                top[name] = _convert(val, getattr(cfg, name), key)
                continue
            section = "system"
        if section not in _SECTIONS:
            raise ConfigError(f"{source}:{lineno}: unknown section {section!r}")
        obj = getattr(cfg, section)
        known = {f.name for f in fields(obj)}
        if name not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[section][name] = _convert(val, getattr(obj, name), key)
    try:
        return Config(
            system=replace(cfg.system, **values["system"]),
            forecast=replace(cfg.forecast, **values["forecast"]),
            imitation=replace(cfg.imitation, **values["imitation"]),
            maddpg=replace(cfg.maddpg, **values["maddpg"]),
            **top,
        )
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> Config:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def dump_config(cfg: Config) -> str:
    """Render every key; ``parse_config(dump_config(c))`` reproduces ``c``."""
    lines = [f"home = {cfg.home}", f"months = {cfg.months}"]
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        lines.append("")
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ":".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{section}.{f.name} = {v}")
    return "\n".join(lines) + "\n"
