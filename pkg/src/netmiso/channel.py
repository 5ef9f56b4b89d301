"""Scenario configuration, distributed-CSIT channel generation, quantizer.

TX ``j`` (1-based) holds the estimate

    Hhat_j = zbreve_j * H + z_j * Delta_j,    z_j = Pbar ** -alpha_j,

with ``Pbar = sqrt(P)`` and ``zbreve_j = sqrt(1 - z_j**2)``, so every
estimate entry has unit variance.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linalg import RngStream, sample_cgauss

__all__ = [
    "CSIT_MODES",
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "ChannelRealization",
    "Fading",
    "draw_fading",
    "realize",
    "generate",
    "db_to_linear",
    "quantization_step",
    "quantize_uniform",
    "quantize_cells",
    "quantize_matrix",
    "hierarchical_view",
]

CSIT_MODES = ("distributed", "hierarchical", "centralized-ideal")


class ConfigError(ValueError):
    """Invalid scenario configuration.  ``field`` names the culprit."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    M: int
    K: int
    N: tuple
    alphas: tuple
    snr_grid_db: tuple
    trials: int
    seed: int
    alpha_q: Optional[float] = None
    alpha_mu: Optional[float] = None
    csit_mode: str = "distributed"

    def __post_init__(self):
        object.__setattr__(self, "N", tuple(int(n) for n in self.N))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "snr_grid_db",
                           tuple(float(s) for s in self.snr_grid_db))
        self.validate()

    @property
    def NT(self):
        return sum(self.N)

    @property
    def tx_slices(self):
        """Row slices of the global precoder owned by each TX."""
        edges = np.concatenate([[0], np.cumsum(self.N)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def validate(self):
        if int(self.M) < 1:
            raise ConfigError("M", "need at least one TX")
        if int(self.K) < 1:
            raise ConfigError("K", "need at least one RX")
        if len(self.N) != self.M or any(n < 1 for n in self.N):
            raise ConfigError("N", f"expected {self.M} positive antenna counts")
        if len(self.alphas) != self.M:
            raise ConfigError("alphas", f"expected {self.M} accuracy exponents")
        a = self.alphas
        if not (a[0] <= 1.0 and a[-1] >= 0.0
                and all(x > y for x, y in zip(a[:-1], a[1:]))):
            raise ConfigError("alphas",
                              "must satisfy 1 >= a1 > a2 > ... > aM >= 0")
        if self.NT < self.K:
            raise ConfigError("N", "total antennas must be at least K")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db", "empty SNR grid")
        if int(self.trials) < 1:
            raise ConfigError("trials", "need at least one trial")
        if int(self.seed) < 0 or int(self.seed) >= 2 ** 64:
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if self.csit_mode not in CSIT_MODES:
            raise ConfigError("csit_mode", f"must be one of {CSIT_MODES}")
        if self.alpha_q is not None and not self.alpha_q > 0:
            raise ConfigError("alpha_q", "must be positive")
        if self.alpha_mu is not None and not self.alpha_mu > 0:
            raise ConfigError("alpha_mu", "must be positive")

    def validate_cdzf(self):
        """Extra preconditions of the quantized consistent scheme."""
        if self.N[0] < self.K - 1:
            raise ConfigError("N", "CD-ZF needs N1 >= K - 1")
        if self.alpha_q is None:
            raise ConfigError("alpha_q", "required for CD-ZF")
        if self.alpha_mu is None:
            raise ConfigError("alpha_mu", "required for CD-ZF")
        if self.M > 1 and not self.alpha_q < self.alphas[-1]:
            raise ConfigError("alpha_q", "must be below the smallest alpha")
        if not self.alpha_mu < self.alpha_q:
            raise ConfigError("alpha_mu", "must be below alpha_q")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        for k in ("N", "alphas", "snr_grid_db"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        names = [f.name for f in dataclasses.fields(cls)]
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        for f in dataclasses.fields(cls):
            if (f.default is dataclasses.MISSING
                    and f.default_factory is dataclasses.MISSING
                    and f.name not in data):
                raise ConfigError(f.name, "missing required field")
        _check_types(data)
        return cls(**data)


def _check_types(data):
    def is_num(x):
        return isinstance(x, (int, float)) and not isinstance(x, bool)

    for name in ("M", "K", "trials", "seed"):
        if name in data and not (isinstance(data[name], int)
                                 and not isinstance(data[name], bool)):
            raise ConfigError(name, "must be an integer")
    for name in ("N", "alphas", "snr_grid_db"):
        if name in data:
            v = data[name]
            if not isinstance(v, list) or not all(is_num(x) for x in v):
                raise ConfigError(name, "must be an array of numbers")
    if "N" in data and not all(isinstance(x, int) for x in data["N"]):
        raise ConfigError("N", "antenna counts must be integers")
    for name in ("alpha_q", "alpha_mu"):
        if data.get(name) is not None and not is_num(data[name]):
            raise ConfigError(name, "must be a number or null")
    if "csit_mode" in data and not isinstance(data["csit_mode"], str):
        raise ConfigError("csit_mode", "must be a string")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return ScenarioConfig.from_dict(data)


@dataclass
class Fading:
    """SNR-independent randomness of one or more trials.

    ``H`` is ``(..., K, NT)`` and ``noise`` is ``(M, ..., K, NT)``.
    """

    H: np.ndarray
    noise: np.ndarray


def draw_fading(cfg: ScenarioConfig, rng: RngStream) -> Fading:
    """Draw ``H`` then ``Delta_1 .. Delta_M`` in that order."""
    H = sample_cgauss(rng, cfg.K, cfg.NT)
    noise = np.stack([sample_cgauss(rng, cfg.K, cfg.NT) for _ in range(cfg.M)])
    return Fading(H, noise)


@dataclass
class ChannelRealization:
    H: np.ndarray
    est: list
    noise: list
    P: float
    zbar: np.ndarray
    zbreve: np.ndarray
    mode: str = "distributed"
    alphas: tuple = field(default=())

    @property
    def M(self):
        return len(self.est)

    @property
    def Pbar(self):
        return math.sqrt(self.P)


def realize(cfg: ScenarioConfig, fading: Fading, snr_linear: float,
            mode: Optional[str] = None) -> ChannelRealization:
    """Build the distributed estimates from drawn fading at one SNR."""
    if not snr_linear > 0:
        raise ValueError("snr must be positive")
    mode = cfg.csit_mode if mode is None else mode
    pbar = math.sqrt(snr_linear)
    z = np.array([pbar ** (-a) for a in cfg.alphas])
    zb = np.sqrt(np.clip(1.0 - z ** 2, 0.0, None))
    est = [zb[j] * fading.H + z[j] * fading.noise[j] for j in range(cfg.M)]
    noise = [fading.noise[j] for j in range(cfg.M)]
    if mode == "centralized-ideal":
        est = [est[0]] * cfg.M
        noise = [noise[0]] * cfg.M
    return ChannelRealization(fading.H, est, noise, float(snr_linear), z, zb,
                              mode, cfg.alphas)


def generate(cfg: ScenarioConfig, rng: RngStream, snr_linear: float,
             mode: Optional[str] = None) -> ChannelRealization:
    return realize(cfg, draw_fading(cfg, rng), snr_linear, mode)


def quantization_step(alpha_q, snr_linear):
    return math.sqrt(snr_linear) ** (-alpha_q)


def quantize_cells(x, q):
    """Integer cell index ``floor(x/q + 1/2)``; exact halves round up."""
    if not q > 0:
        raise ValueError("quantization step must be positive")
    return np.floor(np.asarray(x) / q + 0.5).astype(np.int64)


def quantize_uniform(x, q):
    """Scalar uniform quantizer ``q * floor(x/q + 1/2)``."""
    out = q * quantize_cells(x, q)
    return float(out) if np.ndim(out) == 0 else out.astype(float)


def quantize_matrix(a, q):
    """Quantize real and imaginary parts of every entry independently."""
    a = np.asarray(a)
    return quantize_uniform(a.real, q) + 1j * quantize_uniform(a.imag, q)


def complex_cells(a, q):
    """Stacked integer cells ``(..., 2)`` for real and imaginary parts."""
    a = np.asarray(a)
    return np.stack([quantize_cells(a.real, q), quantize_cells(a.imag, q)],
                    axis=-1)


def hierarchical_view(real: ChannelRealization, at_tx: int) -> Sequence:
    """Estimates known to TX ``at_tx`` (1-based) under hierarchical CSIT."""
    if not 1 <= at_tx <= real.M:
        raise IndexError(f"TX index {at_tx} outside 1..{real.M}")
    return list(real.est[at_tx - 1:])
