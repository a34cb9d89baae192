"""Flat, typed experiment configuration.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Unset keys fall back to the preset (``desk`` or ``full``) and then to the
per-PDE defaults, so a file can be as short as ``pde = advection``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ExperimentConfig", "PRESETS", "load_config", "parse_config"]

PRESETS = {
    "full": dict(
        width=128,
        n_train=500,
        n_test=1000,
        epochs=50_000,
        learning_rate=1e-5,
        batch_size=100,
        muscl_cells=4096,
        m_analysis=1024,
    ),
    "desk": dict(
        width=32,
        n_train=200,
        n_test=50,
        epochs=2000,
        learning_rate=1e-3,
        batch_size=100,
        muscl_cells=1024,
        m_analysis=1024,
    ),
}

# thresholds used for the four problems at full scale
FULL_SCALE_THRESHOLDS = {
    "advection": 1e-9,
    "advection_diffusion": 1e-7,
    "viscous_burgers": 1e-7,
    "inviscid_burgers": 1e-12,
}


@dataclass
class ExperimentConfig:
    pde: str = "advection"
    nu: float = 0.1
    preset: str = "desk"
    seed: int = 0

    # initial conditions and data
    length_scale: float = 0.5
    n_sensors: int = 128
    n_train: int | None = None
    n_test: int | None = None
    n_queries: int = 100
    t_train: float | None = None
    muscl_cells: int | None = None
    trajectory_save_every: float | None = None

    # network
    width: int | None = None
    branch_depth: int = 2
    trunk_depth: int = 3
    epochs: int | None = None
    learning_rate: float | None = None
    batch_size: int | None = None

    # basis extraction
    basis_kind: str = "trained"  # trained | fourier
    oracle_modes: int = 16
    freeze_times: str = "0"  # comma-separated list
    time_sampled_dt: float | None = None
    threshold: str = "auto"  # number or "auto"
    threshold_floor: float = 1e-12
    retain: int | None = None
    m_analysis: int | None = None
    legendre_degree: int = 127

    # evolution and comparison
    m_solve: int = 128
    dt: float | None = None
    t_final: float | None = None
    guard: float = 1.025
    per_stage_tau: bool = False
    error_every: float | None = None
    stability_horizon: float | None = None
    stability_trials: int = 8
    test_ics: str = "in_distribution,sin"
    cross_basis: str | None = None

    # analysis
    r_leg: int | None = None

    out_dir: str | None = None

    def resolved(self) -> "ExperimentConfig":
        """Copy with preset and per-PDE defaults filled in."""
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        cfg = dataclasses.replace(self)
        for key, value in PRESETS[self.preset].items():
            if getattr(cfg, key) is None:
                setattr(cfg, key, value)
        inviscid = self.pde == "inviscid_burgers"
        linear = self.pde in ("advection", "advection_diffusion")
        defaults = dict(
            t_train=3.5 if inviscid else 1.0,
            trajectory_save_every=0.05 if inviscid else 0.01,
            dt=1e-3 if linear else 1e-4,
            t_final=3.5 if inviscid else 10.0,
            error_every=1e-3 if inviscid else 1e-2,
            stability_horizon=0.5 if inviscid else None,
            r_leg=self.legendre_degree - 1,
        )
        for key, value in defaults.items():
            if getattr(cfg, key) is None:
                setattr(cfg, key, value)
        if cfg.stability_horizon is None:
            cfg.stability_horizon = cfg.t_train
        if self.pde in ("advection", "inviscid_burgers"):
            cfg.nu = 0.0
        if cfg.out_dir is None:
            cfg.out_dir = f"runs/{self.pde}"
        return cfg

    @property
    def freeze_time_list(self) -> list:
        from .basis import time_samples

        if self.time_sampled_dt:
            return time_samples(self.t_train, self.time_sampled_dt)
        return [float(v) for v in self.freeze_times.split(",") if v.strip()]

    @property
    def seeds(self) -> dict:
        s = self.seed
        return dict(
            train_ics=s, test_ics=s + 1, queries=s + 2, init=s + 3, shuffle=s + 4,
            solve_ic=s + 5, stability_ics=s + 6,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """Hash of every setting that affects numerical output."""
        d = self.to_dict()
        d.pop("out_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"


def _convert(raw: str, annotation):
    text = raw.strip()
    hint = typing.get_type_hints(ExperimentConfig)[annotation]
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    if optional and text.lower() in ("none", ""):
        return None
    if base is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{annotation}: expected a boolean, got {raw!r}")
    if base is int:
        return int(float(text)) if "e" in text.lower() else int(text)
    if base is float:
        return float(text)
    return text


def parse_config(text: str) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(value, key)
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
