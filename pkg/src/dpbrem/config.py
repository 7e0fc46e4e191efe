"""Experiment configuration, presets, and config-file handling."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .netsim import Deployment, deploy

PROFILES = {
    # 1 macro @128 antennas + 5 picos @16, 150 drops x 50 UEs, 50000 steps x 8
    "paper": {},
    "desk": {
        "n_pico": 3,
        "macro_antennas": 8,
        "pico_antennas": 4,
        "n_drops": 30,
        "n_ue": 20,
        "train_steps": 10000,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    # deployment
    n_pico: int = 5
    ring_radius: float = 200.0
    macro_antennas: int = 128
    pico_antennas: int = 16
    macro_power_dbm: float = 46.0
    pico_power_dbm: float = 30.0
    bandwidth_hz: float = 3.0e8
    carrier_hz: float = 3.5e9
    noise_figure_db: float = 9.0
    arena_half_width: float = 350.0
    corr_rho: float = 0.5
    shadow_sigma_db: float = 6.0
    min_rss_dbm: float = -100.0
    # drops and simulation
    n_drops: int = 150
    n_ue: int = 50
    horizon_slots: int = 100
    reward_scale_bps: float = 1e8
    seed: int = 0
    # training
    train_steps: int = 50000
    batch_size: int = 8
    train_seed: int = 0
    # execution and paths; empty path -> derived from out_dir
    workers: int = 1
    out_dir: str = "run"
    drops_path: str = ""
    rem_path: str = ""
    model_path: str = ""
    reports_dir: str = ""

    def __post_init__(self):
        if self.n_pico < 1:
            raise ValueError("n_pico must be >= 1")
        if self.n_drops < 1 or self.n_ue < 1 or self.horizon_slots < 1:
            raise ValueError("n_drops, n_ue and horizon_slots must be >= 1")
        if self.train_steps < 0 or self.batch_size < 1 or self.workers < 1:
            raise ValueError("invalid training or worker settings")

    def deployment(self) -> Deployment:
        return deploy(
            n_pico=self.n_pico, ring_radius=self.ring_radius,
            macro_antennas=self.macro_antennas, pico_antennas=self.pico_antennas,
            macro_power_dbm=self.macro_power_dbm, pico_power_dbm=self.pico_power_dbm,
            bandwidth_hz=self.bandwidth_hz, carrier_hz=self.carrier_hz,
            noise_figure_db=self.noise_figure_db, arena_half_width=self.arena_half_width,
            corr_rho=self.corr_rho, shadow_sigma_db=self.shadow_sigma_db,
            min_rss_dbm=self.min_rss_dbm,
        )

    def _path(self, explicit: str, default: str) -> Path:
        return Path(explicit) if explicit else Path(self.out_dir) / default

    @property
    def drops_file(self) -> Path:
        return self._path(self.drops_path, "drops.jsonl")

    @property
    def rem_file(self) -> Path:
        return self._path(self.rem_path, "rem.csv")

    @property
    def model_file(self) -> Path:
        return self._path(self.model_path, "qnet.txt")

    @property
    def reports(self) -> Path:
        return self._path(self.reports_dir, "reports")

    def drop_seed(self, drop_id: int) -> int:
        return int(np.random.SeedSequence([self.seed, drop_id]).generate_state(1)[0])


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def coerce(name: str, value):
    """Cast a config value (possibly a CLI string) to the field's type."""
    if name not in FIELD_TYPES:
        raise KeyError(f"unknown config field {name!r}")
    kind = FIELD_TYPES[name]
    if kind == "int":
        if isinstance(value, int):
            return value
        as_float = float(value)
        if not as_float.is_integer():
            raise ValueError(f"{name} must be an integer, got {value!r}")
        return int(as_float)
    if kind == "float":
        return float(value)
    return str(value)


def make_config(profile: str = "paper", file_values: dict | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    """Profile preset, then config-file values, then explicit overrides."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    values = dict(PROFILES[profile])
    for src in (file_values or {}, overrides or {}):
        for k, v in src.items():
            if k == "profile":
                continue
            values[k] = coerce(k, v)
    return ExperimentConfig(**values)


def read_config_file(path) -> dict:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def write_config_file(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(asdict(config), indent=2, sort_keys=True) + "\n")
