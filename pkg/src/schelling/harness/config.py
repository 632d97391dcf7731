"""Experiment configuration: flat ``key=value`` text with ``#`` comments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

MODES = ("simulate", "sweep", "bounds", "fpp", "percolation")
SCHEDULERS = ("discrete", "continuous")
MASK64 = 0xFFFFFFFFFFFFFFFF


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _frac_list(text):
    return [parse_fraction(x) for x in str(text).split(",") if x.strip()]


def parse_fraction(text) -> Fraction:
    """Accept ``"num/den"`` or a decimal; exact either way."""
    if isinstance(text, Fraction):
        return text
    return Fraction(str(text).strip())


@dataclass
class ExperimentConfig:
    mode: str = "simulate"
    h: int = 32
    w: int = 1
    tau_tilde: Fraction = Fraction(9, 20)
    p_init: float = 0.5
    scheduler: str = "discrete"
    seed: int = 0
    replicas: int = 1
    max_events: int = 10**9
    epsilon: float = 0.01
    epsilon_prime: float | None = None
    snapshot_every: int = 0
    checkpoint_every: int = 0
    output_dir: Path = Path("out")
    workers: int = 1
    # sweep
    w_list: list[int] = field(default_factory=list)
    tau_list: list[Fraction] = field(default_factory=list)
    # bounds
    tau_min: float = 0.434
    tau_max: float = 0.566
    tau_step: float = 0.001
    bounds_N: int = 10**4
    # fpp
    fpp_distances: list[int] = field(default_factory=lambda: [10, 20, 40, 80])
    fpp_direction: list[int] = field(default_factory=lambda: [1, 0])
    # percolation
    block_side: int = 5
    fields: int = 1000

    def validate(self) -> ExperimentConfig:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(key, msg)

        need(self.mode in MODES, "mode", f"must be one of {', '.join(MODES)}")
        need(self.h >= 1, "h", "must be positive")
        need(self.w >= 1, "w", "must be positive")
        if self.mode in ("simulate", "sweep", "percolation"):
            for w in self.w_list or [self.w]:
                need(2 * self.h > 2 * (2 * w + 1), "h", f"2h must exceed 2(2w+1) for w={w}")
        need(0 <= self.tau_tilde <= 1, "tau_tilde", "must lie in [0, 1]")
        for t in self.tau_list:
            need(0 <= t <= 1, "tau_list", "entries must lie in [0, 1]")
        need(0.0 <= self.p_init <= 1.0, "p_init", "must lie in [0, 1]")
        need(self.scheduler in SCHEDULERS, "scheduler", f"must be one of {', '.join(SCHEDULERS)}")
        need(0 <= self.seed <= MASK64, "seed", "must be a 64-bit unsigned integer")
        need(self.replicas >= 1, "replicas", "must be at least 1")
        need(self.max_events >= 0, "max_events", "must be non-negative")
        need(0 < self.epsilon < 0.5, "epsilon", "must lie in (0, 1/2)")
        need(self.epsilon_prime is None or self.epsilon_prime > 0, "epsilon_prime", "must be positive")
        need(self.snapshot_every >= 0, "snapshot_every", "must be non-negative")
        need(self.checkpoint_every >= 0, "checkpoint_every", "must be non-negative")
        need(self.workers >= 1, "workers", "must be at least 1")
        need(0 < self.tau_min < self.tau_max < 1, "tau_min", "need 0 < tau_min < tau_max < 1")
        need(self.tau_step > 0, "tau_step", "must be positive")
        need(self.bounds_N >= 9, "bounds_N", "must be at least 9")
        need(all(d >= 0 for d in self.fpp_distances), "fpp_distances", "must be non-negative")
        need(len(self.fpp_direction) == 2 and any(self.fpp_direction), "fpp_direction", "must be a nonzero dx,dy pair")
        need(self.block_side >= 1, "block_side", "must be positive")
        if self.mode == "percolation":
            need((2 * self.h) % self.block_side == 0, "block_side", "must divide 2h")
        need(self.fields >= 1, "fields", "must be at least 1")
        return self

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "mode": str,
    "h": int,
    "w": int,
    "tau_tilde": parse_fraction,
    "p_init": float,
    "scheduler": str,
    "seed": int,
    "replicas": int,
    "max_events": int,
    "epsilon": float,
    "epsilon_prime": float,
    "snapshot_every": int,
    "checkpoint_every": int,
    "output_dir": Path,
    "workers": int,
    "w_list": _int_list,
    "tau_list": _frac_list,
    "tau_min": float,
    "tau_max": float,
    "tau_step": float,
    "bounds_N": int,
    "fpp_distances": _int_list,
    "fpp_direction": _int_list,
    "block_side": int,
    "fields": int,
}


def apply_pairs(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    for key, raw in pairs:
        if key not in _PARSERS:
            raise ConfigError(key, "unknown key")
        try:
            setattr(cfg, key, _PARSERS[key](raw.strip() if isinstance(raw, str) else raw))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from None
    return cfg


def parse_pairs(text: str, source: str = "<config>"):
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path=None, overrides=(), **flags) -> ExperimentConfig:
    """Read ``path`` (optional), then apply ``key=value`` overrides and CLI flags, then validate."""
    cfg = ExperimentConfig()
    if path is not None:
        text = Path(path).read_text()
        apply_pairs(cfg, parse_pairs(text, str(path)))
    over = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must be key=value")
        k, v = item.split("=", 1)
        over.append((k.strip(), v))
    apply_pairs(cfg, over)
    apply_pairs(cfg, [(k, v) for k, v in flags.items() if v is not None])
    return cfg.validate()


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replica_seed(seed: int, index: int) -> int:
    """Seed of replica ``index``: ``seed XOR splitmix64(index)``."""
    return (seed ^ splitmix64(index)) & MASK64
