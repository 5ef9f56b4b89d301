"""Instantaneous and expected rates, rate gaps and high-SNR affine fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ScenarioConfig, db_to_linear
from .sim import run_trials

__all__ = [
    "RatePoint",
    "AffineFit",
    "instantaneous_rate",
    "rate_point",
    "expected_sum_rate",
    "sweep",
    "rate_gap",
    "paired_gap",
    "affine_fit",
]


def instantaneous_rate(H, T, P):
    """Per-RX rates ``log2(1 + P|h_i t_i|^2 / (1 + P sum_{l!=i} |h_i t_l|^2))``.

    ``H`` is ``(..., K, NT)`` and ``T`` the fully scaled ``(..., NT, K)``
    precoder.
    """
    G = np.abs(np.asarray(H) @ np.asarray(T)) ** 2
    signal = np.diagonal(G, axis1=-2, axis2=-1)
    interference = G.sum(axis=-1) - signal
    return np.log2(1.0 + P * signal / (1.0 + P * interference))


@dataclass
class RatePoint:
    snr_db: float
    scheme: str
    sum_rate: float
    per_rx_rate: list
    stderr: float
    p_outage: float
    p_inconsistent: float
    trials: int
    rejected: int = 0
    samples: Optional[np.ndarray] = field(default=None, repr=False)


def _mean(x):
    return math.fsum(np.asarray(x, dtype=float).ravel()) / np.size(x)


def rate_point(snr_db, scheme, per_rx, outage, inconsistent, rejected=0):
    """Summarize per-trial rates ``(trials, K)`` into a :class:`RatePoint`."""
    per_rx = np.asarray(per_rx, dtype=float)
    n = per_rx.shape[0]
    sums = per_rx.sum(axis=-1)
    per_rx_mean = [_mean(per_rx[:, i]) for i in range(per_rx.shape[1])]
    mean = math.fsum(per_rx_mean)
    if n > 1:
        var = math.fsum((sums - _mean(sums)) ** 2) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = 0.0
    return RatePoint(float(snr_db), scheme, mean, per_rx_mean, stderr,
                     _mean(outage), _mean(inconsistent), n, rejected, sums)


def sweep(cfg: ScenarioConfig, schemes: Sequence[str], snrs_db=None,
          trials=None, threads=1):
    """Rate points for every (SNR, scheme), all schemes sharing channels."""
    snrs_db = cfg.snr_grid_db if snrs_db is None else tuple(snrs_db)
    values, rejected = run_trials(cfg, snrs_db, schemes, trials,
                                  threads=threads)
    points = []
    for k, snr in enumerate(snrs_db):
        for scheme in schemes:
            v = values[(k, scheme)]
            points.append(rate_point(snr, scheme, v["per_rx"], v["outage"],
                                     v["inconsistent"], rejected))
    return points


def expected_sum_rate(cfg: ScenarioConfig, scheme: str, snr_db: float,
                      trials: Optional[int] = None, seed: Optional[int] = None,
                      threads=1) -> RatePoint:
    if trials is not None and trials < 1:
        raise ValueError("trials must be >= 1")
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return sweep(cfg, [scheme], [snr_db], trials, threads)[0]


def rate_gap(centralized: RatePoint, distributed: RatePoint) -> float:
    """Signed sum-rate gap ``centralized - distributed`` in bits."""
    if centralized.snr_db != distributed.snr_db:
        raise ValueError("rate points are at different SNRs")
    if len(centralized.per_rx_rate) != len(distributed.per_rx_rate):
        raise ValueError("rate points have different RX counts")
    return centralized.sum_rate - distributed.sum_rate


def paired_gap(a: RatePoint, b: RatePoint):
    """Gap ``a - b`` with the standard error of the paired per-trial
    differences (valid when both points share channel draws)."""
    gap = rate_gap(a, b)
    d = a.samples - b.samples
    n = d.size
    se = float(np.std(d, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return gap, se


@dataclass
class AffineFit:
    dof: float
    rate_offset: float
    power_offset: float
    residual: float


def affine_fit(points: Sequence[RatePoint], n_fit: int = 3) -> AffineFit:
    """Fit ``R = dof * log2(P) - rate_offset`` on the top ``n_fit`` points."""
    if len(points) < 3 or n_fit < 3:
        raise ValueError("affine fit needs at least 3 points")
    pts = sorted(points, key=lambda p: p.snr_db)[-n_fit:]
    x = np.log2(db_to_linear([p.snr_db for p in pts]))
    y = np.array([p.sum_rate for p in pts])
    dof, intercept = np.polyfit(x, y, 1)
    offset = float(np.mean(dof * x - y))
    resid = float(np.sqrt(np.mean((dof * x - offset - y) ** 2)))
    power = offset / dof if dof != 0 else math.inf
    return AffineFit(float(dof), offset, power, resid)
