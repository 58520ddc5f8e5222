"""Experiment configuration and channel realizations.

A channel realization is the per-subcarrier statistical abstraction the
allocators work with: five vectors of normalized gains (gain per unit
transmit power, divided by the receiver noise variance).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


class Constraints(BaseModel):
    """Power budgets, per-subcarrier peak caps and the throughput floor.

    ``peak_radar``/``peak_comm`` may be left as ``None``; :meth:`resolved`
    then fills in ``4 * P / N`` for the given number of subcarriers.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    total_radar_power: float = Field(ge=0)
    total_comm_power: float = Field(ge=0)
    peak_radar: Optional[float] = Field(default=None, ge=0)
    peak_comm: Optional[float] = Field(default=None, ge=0)
    throughput_floor: float = Field(ge=0)

    def resolved(self, n: int) -> "Constraints":
        xi_r = self.peak_radar if self.peak_radar is not None else 4.0 * self.total_radar_power / n
        xi_c = self.peak_comm if self.peak_comm is not None else 4.0 * self.total_comm_power / n
        return self.model_copy(update={"peak_radar": xi_r, "peak_comm": xi_c})


class SystemConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_subcarriers: int = Field(ge=1)
    sigma_rr2: float = Field(default=1.0, ge=0)
    sigma_cc2: float = Field(default=1.0, ge=0)
    sigma_rc2: float = Field(default=0.01, ge=0)
    sigma_cr2: float = Field(default=0.01, ge=0)
    sigma_clutter2: float = Field(default=0.05, ge=0)
    noise_r2: float = Field(default=1.0, gt=0)
    noise_c2: float = Field(default=1.0, gt=0)
    constraints: Constraints
    tolerance: float = Field(default=0.01, gt=0)
    max_outer_iters: int = Field(default=100, ge=1)
    max_inner_iters: int = Field(default=30, ge=1)
    trials: int = Field(default=50, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _finite(self) -> "SystemConfig":
        for name in ("sigma_rr2", "sigma_cc2", "sigma_rc2", "sigma_cr2", "sigma_clutter2",
                     "noise_r2", "noise_c2", "tolerance"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        return self

    def resolved_constraints(self, n: Optional[int] = None) -> Constraints:
        return self.constraints.resolved(n or self.n_subcarriers)

    def with_updates(self, **changes) -> "SystemConfig":
        """Copy with flat config keys (``P_r``, ``kappa``, ...) substituted."""
        flat = to_flat_dict(self)
        flat.update(changes)
        return config_from_dict(flat)


_CONSTRAINT_KEYS = {
    "P_r": "total_radar_power",
    "P_c": "total_comm_power",
    "xi_r": "peak_radar",
    "xi_c": "peak_comm",
    "kappa": "throughput_floor",
}
_REQUIRED = ("n_subcarriers", "P_r", "P_c", "kappa")
CONFIG_KEYS = (
    "n_subcarriers", "sigma_rr2", "sigma_cc2", "sigma_rc2", "sigma_cr2", "sigma_clutter2",
    "noise_r2", "noise_c2", "P_r", "P_c", "xi_r", "xi_c", "kappa", "tolerance",
    "max_outer_iters", "max_inner_iters", "trials", "seed",
)


def config_from_dict(data: dict) -> SystemConfig:
    """Validate a flat configuration mapping (the on-disk schema)."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    cons = {_CONSTRAINT_KEYS[k]: v for k, v in data.items() if k in _CONSTRAINT_KEYS}
    rest = {k: v for k, v in data.items() if k not in _CONSTRAINT_KEYS}
    inverse = {v: k for k, v in _CONSTRAINT_KEYS.items()}
    try:
        constraints = Constraints(**cons)
    except ValidationError as exc:
        fields = ", ".join(inverse.get(str(e["loc"][0]), str(e["loc"][0])) for e in exc.errors())
        raise ConfigError(f"invalid value for {fields}: {exc.errors()[0]['msg']}") from exc
    try:
        return SystemConfig(constraints=constraints, **rest)
    except ValidationError as exc:
        fields = ", ".join(str(e["loc"][0]) if e["loc"] else "config" for e in exc.errors())
        raise ConfigError(f"invalid value for {fields}: {exc.errors()[0]['msg']}") from exc


def to_flat_dict(cfg: SystemConfig) -> dict:
    out = cfg.model_dump(exclude={"constraints"})
    for flat, attr in _CONSTRAINT_KEYS.items():
        value = getattr(cfg.constraints, attr)
        if value is not None:
            out[flat] = value
    return out


def load_config(path) -> SystemConfig:
    """Read and validate a JSON configuration file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(data)


@dataclass(frozen=True)
class ChannelRealization:
    """Normalized per-subcarrier gains of one coexistence instance.

    gamma_rr / gamma_cc: radar target SNR and comm SNR per unit power.
    eta_rc: radar-to-comm INR, eta_cr: comm-to-radar INR, eta_rr: clutter CNR.
    """

    gamma_rr: np.ndarray
    gamma_cc: np.ndarray
    eta_rc: np.ndarray
    eta_cr: np.ndarray
    eta_rr: np.ndarray

    def __post_init__(self):
        n = None
        for name in ("gamma_rr", "gamma_cc", "eta_rc", "eta_cr", "eta_rr"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError(f"{name} has length {arr.size}, expected {n}")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} entries must be finite and nonnegative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.gamma_rr.size

    def subset(self, idx) -> "ChannelRealization":
        return ChannelRealization(*(getattr(self, f)[idx] for f in
                                    ("gamma_rr", "gamma_cc", "eta_rc", "eta_cr", "eta_rr")))


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    # Each trial gets its own PCG64 stream keyed on (seed, trial).
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial_index])))


def _cn_power(rng: np.random.Generator, variance: float, n: int) -> np.ndarray:
    # |h|^2 for h ~ CN(0, variance)
    re, im = rng.standard_normal((2, n)) * np.sqrt(variance / 2.0)
    return re * re + im * im


def generate_channels(cfg: SystemConfig, trial_index: int) -> ChannelRealization:
    """Draw the normalized gains for one Monte-Carlo trial.

    Deterministic in ``(cfg.seed, trial_index)``; draw order is fixed as
    rr, cc, rc, clutter, cr.
    """
    if trial_index < 0:
        raise ValueError("trial_index must be nonnegative")
    rng = trial_rng(cfg.seed, trial_index)
    n = cfg.n_subcarriers
    g_rr = _cn_power(rng, cfg.sigma_rr2, n) / cfg.noise_r2
    g_cc = _cn_power(rng, cfg.sigma_cc2, n) / cfg.noise_c2
    e_rc = _cn_power(rng, cfg.sigma_rc2, n) / cfg.noise_c2
    e_rr = _cn_power(rng, cfg.sigma_clutter2, n) / cfg.noise_r2
    e_cr = _cn_power(rng, cfg.sigma_cr2, n) / cfg.noise_r2
    return ChannelRealization(gamma_rr=g_rr, gamma_cc=g_cc, eta_rc=e_rc, eta_cr=e_cr, eta_rr=e_rr)


def grouped_profile(n_per_group: int = 32, high_gain: float = 1.0, low_gain: float = 0.1,
                    eta_cross: float = 0.01, eta_clutter: float = 0.05) -> ChannelRealization:
    """Deterministic four-group profile.

    Groups in order: good for both, bad for both, good radar / bad comm,
    bad radar / good comm.
    """
    if n_per_group < 1:
        raise ValueError("n_per_group must be positive")
    if min(high_gain, low_gain, eta_cross, eta_clutter) < 0:
        raise ValueError("gains must be nonnegative")
    if not high_gain > low_gain:
        raise ValueError("high_gain must exceed low_gain")
    block = np.ones(n_per_group)
    hi, lo = high_gain * block, low_gain * block
    n = 4 * n_per_group
    return ChannelRealization(
        gamma_rr=np.concatenate([hi, lo, hi, lo]),
        gamma_cc=np.concatenate([hi, lo, lo, hi]),
        eta_rc=np.full(n, float(eta_cross)),
        eta_cr=np.full(n, float(eta_cross)),
        eta_rr=np.full(n, float(eta_clutter)),
    )
