"""Experiment configuration: a flat ``key = value`` file.

Lines starting with ``#`` are comments. Unknown keys are rejected so typos do
not silently fall back to defaults. ``defaults`` (the literal string) as a
path yields :data:`DEFAULTS` untouched.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

MODES = ("leo-split", "fixed-threshold", "no-am", "no-aai", "no-pa-class", "no-pa-quantity")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # constellation and link
    satellites: int = 10
    altitude_km: float = 547.0
    min_elevation_deg: float = 25.0
    downlink_bps: float = 100e6
    uplink_bps: float = 12e6
    rate_trace: str = ""
    continuous_link: bool = False
    # data
    dataset: str = ""
    n_classes: int = 10
    feature_dim: int = 32
    informative_dims: int = 8
    separation: float = 3.0
    nuisance_scale: float = 1.0
    task_seed: int = 0
    samples_per_sat: int = 600
    test_size: int = 2000
    labeling_rate: float = 0.1
    dirichlet_alpha: float = 0.5
    quantity_ratios: tuple[float, ...] = (1.0, 2.0, 4.0)
    # model
    hidden_dim: int = 64
    cut_index: int = 1
    # schedule
    rounds: int = 20
    agg_every: int = 1
    step_time_s: float = 5.0
    server_steps: int = 200
    # optimisation
    lr: float = 0.005
    server_lr: float = 0.005
    batch_size: int = 128
    # semi-supervised
    lambda_u: float = 1.0
    lambda_v: float = 0.1
    phi: float = 0.5
    ema_decay: float = 0.99
    aug_strength: float = 0.05
    contrastive_normalize: bool = True
    tau: float = 0.7
    tau_cap: float = 0.95
    # interpolation
    beta: float = 0.75
    interp_j: int = 200
    selection_policy: str = "class-cycling-largest"
    # run
    seed: int = 0
    mode: str = "leo-split"

    def __post_init__(self):
        checks = [
            (self.satellites >= 1, "satellites must be >= 1"),
            (0.0 < self.labeling_rate <= 1.0, "labeling_rate must lie in (0, 1]"),
            (self.dirichlet_alpha > 0, "dirichlet_alpha must be positive"),
            (self.rounds >= 0, "rounds must be >= 0"),
            (self.agg_every >= 1, "agg_every must be >= 1"),
            (self.cut_index >= 1, "cut_index must be >= 1"),
            (self.step_time_s > 0, "step_time_s must be positive"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.downlink_bps > 0 and self.uplink_bps > 0, "link rates must be positive"),
            (self.interp_j >= 0, "interp_j must be >= 0"),
            (self.server_steps >= 0, "server_steps must be >= 0"),
            (self.beta > 0, "beta must be positive"),
            (0 < self.tau_cap <= 1, "tau_cap must lie in (0, 1]"),
            (self.mode in MODES, f"mode must be one of {', '.join(MODES)}"),
            (
                self.selection_policy in ("random", "class-cycling-largest"),
                "selection_policy must be random or class-cycling-largest",
            ),
            (len(self.quantity_ratios) >= 1, "quantity_ratios must be nonempty"),
            (all(r > 0 for r in self.quantity_ratios), "quantity_ratios must be positive"),
            (self.samples_per_sat >= 1, "samples_per_sat must be >= 1"),
            (self.test_size >= 1, "test_size must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


DEFAULTS = ExperimentConfig()
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str) -> Any:
    default = getattr(DEFAULTS, name)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(p) for p in raw.replace(",", ":").split(":") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, Any] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return DEFAULTS.replace(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    if str(path) == "defaults":
        return DEFAULTS
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ":".join(repr(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"
