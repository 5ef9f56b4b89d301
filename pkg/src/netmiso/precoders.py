"""Zero-forcing precoders for the distributed-CSIT network MISO channel.

Conventions shared by every scheme:

* ``W`` holds the unscaled global columns ``w_l`` (``NT x K``).
* The transmitted precoder is ``mu * scale * W`` with ``scale = 1/sqrt(K)``
  fixed, so unit-norm ZF columns always meet the per-antenna constraint.
* Arrays may carry leading batch axes (one per Monte Carlo trial).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (ChannelRealization, ScenarioConfig, complex_cells,
                      quantization_step, quantize_matrix)
from .linalg import (SingularInputError, hermitian,
                     orth_complement_projector, pinv)

__all__ = [
    "SCHEMES",
    "PrecodeResult",
    "zf_columns",
    "centralized_zf",
    "naive_distributed_zf",
    "passive_pattern",
    "ap_zf",
    "map_estimate_quantized_csit",
    "map_estimate",
    "cdzf",
    "check_consistency",
    "tx1_only",
    "precode",
    "antenna_norms",
    "degenerate_fallback",
]

SCHEMES = ("centralized", "naive", "apzf", "cdzf-distributed",
           "cdzf-hierarchical", "tx1-only")

AP_MU_FLOOR = 0.1


@dataclass
class PrecodeResult:
    W: np.ndarray
    mu: np.ndarray
    scale: float
    outage: np.ndarray
    consistent: np.ndarray
    scheme: str
    tx_slices: list = field(default_factory=list)
    V: Optional[np.ndarray] = None
    W_corrected: Optional[np.ndarray] = None
    consistent_per_tx: Optional[np.ndarray] = None

    @property
    def T(self):
        """Fully scaled transmit precoder."""
        mu = np.asarray(self.mu, dtype=float)[..., None, None]
        return mu * self.scale * self.W

    @property
    def per_tx_blocks(self):
        T = self.T
        return [T[..., s, :] for s in self.tx_slices]


def antenna_norms(T):
    """Per-antenna precoder norms ``||T_{j,n}||`` (row norms)."""
    return np.linalg.norm(T, axis=-1)


def _batch_shape(est):
    return np.shape(est)[:-2]


def _full(batch, value, dtype):
    return np.full(batch, value, dtype=dtype)


def zf_columns(est, fallback=None):
    """Unit-norm ZF columns: matched filters projected off the other rows.

    ``est`` is ``(..., K, NT)``; returns ``(..., NT, K)``.  Degenerate
    items raise :class:`SingularInputError` unless ``fallback`` (an
    ``NT x K`` matrix) is given, in which case they get that matrix.
    """
    if fallback is not None:
        return _zf_with_fallback(est, fallback)
    est = np.asarray(est, dtype=np.complex128)
    K, NT = est.shape[-2:]
    if NT < K:
        raise ValueError("ZF needs at least K transmit antennas")
    V = np.empty(est.shape[:-2] + (NT, K), dtype=np.complex128)
    for i in range(K):
        others = np.delete(est, i, axis=-2)
        proj = orth_complement_projector(others)
        x = (proj @ hermitian(est[..., i:i + 1, :]))[..., 0]
        nrm = np.linalg.norm(x, axis=-1, keepdims=True)
        bad = ~(nrm[..., 0] > 1e-12)
        if np.any(bad):
            raise SingularInputError("matched filter lies in the span of "
                                     "the other rows",
                                     np.flatnonzero(bad.reshape(-1)))
        V[..., :, i] = x / nrm
    return V


def _zf_with_fallback(est, fallback):
    est = np.array(est, dtype=np.complex128)
    batch = est.shape[:-2]
    flat = est.reshape((-1,) + est.shape[-2:])
    bad = np.zeros(flat.shape[0], dtype=bool)
    dummy = np.eye(*est.shape[-2:], dtype=np.complex128)
    while True:
        try:
            V = zf_columns(flat)
            break
        except SingularInputError as exc:
            bad[exc.index] = True
            flat[exc.index] = dummy
    V[bad] = fallback
    return V.reshape(batch + V.shape[-2:])


def degenerate_fallback(NT, K):
    """Fixed unit-norm columns used when a quantized estimate is degenerate."""
    return passive_pattern(NT, K, 0)


def centralized_zf(est, K=None, per_column_scale=None, tx_slices=None):
    """Centralized ZF on one shared estimate ``est`` (``K x NT``)."""
    est = np.asarray(est, dtype=np.complex128)
    K = est.shape[-2] if K is None else K
    if est.shape[-2] != K:
        raise ValueError("estimate row count does not match K")
    scale = 1.0 / np.sqrt(K) if per_column_scale is None else per_column_scale
    V = zf_columns(est)
    batch = _batch_shape(est)
    return PrecodeResult(V, _full(batch, 1.0, float), scale,
                         _full(batch, False, bool), _full(batch, True, bool),
                         "centralized", tx_slices or [slice(0, est.shape[-1])],
                         V=V)


def naive_distributed_zf(real: ChannelRealization, tx_slices):
    """Every TX runs centralized ZF on its own estimate and keeps its rows."""
    K, NT = np.shape(real.est[0])[-2:]
    V = zf_columns(real.est[0])
    W = np.empty_like(V)
    for j, sl in enumerate(tx_slices):
        Vj = V if j == 0 else zf_columns(real.est[j])
        W[..., sl, :] = Vj[..., sl, :]
    same = np.ones(_batch_shape(real.est[0]), dtype=bool)
    for j in range(1, real.M):
        same &= np.all(real.est[j] == real.est[0], axis=(-2, -1))
    batch = _batch_shape(real.est[0])
    return PrecodeResult(W, _full(batch, 1.0, float), 1.0 / np.sqrt(K),
                         _full(batch, False, bool), same, "naive",
                         list(tx_slices), V=V)


def passive_pattern(n_antennas, K, tx_index):
    """Fixed unit-modulus block of a passive TX, in unscaled units.

    Entry ``(n, l)`` is ``exp(2i pi n l / K) / sqrt(N_j)``; after the global
    ``1/sqrt(K)`` every entry has modulus ``1/sqrt(K N_j)``.  ``tx_index``
    is kept in the signature so other patterns can vary per TX.
    """
    n = np.arange(n_antennas)[:, None]
    ell = np.arange(K)[None, :]
    return np.exp(2j * np.pi * n * ell / K) / np.sqrt(n_antennas)


def _tx1_solve(est1, W, s1, rest):
    """Fill TX 1's rows of ``W`` so that ``est1[i] @ W[:, l] == 0``, ``i != l``.

    The other TXs' rows of ``W`` are given.  The minimum-norm solution is
    used, plus TX 1's own unit beam in the remaining null space when it has
    more than ``K - 1`` antennas.
    """
    K = est1.shape[-2]
    for ell in range(K):
        others = np.delete(est1, ell, axis=-2)
        A = others[..., :, s1]
        B = others[..., :, rest]
        w1 = -(pinv(A) @ (B @ W[..., rest, ell:ell + 1]))[..., 0]
        if A.shape[-1] > A.shape[-2]:
            proj = orth_complement_projector(A)
            u = (proj @ hermitian(est1[..., ell:ell + 1, s1]))[..., 0]
            w1 = w1 + u / np.linalg.norm(u, axis=-1, keepdims=True)
        W[..., s1, ell] = w1
    return W


def ap_zf(real: ChannelRealization, cfg: ScenarioConfig):
    """Active-Passive ZF: TXs 2..M send a fixed block, TX 1 zero-forces.

    The back-off ``mu`` is the largest value in (0, 1] that keeps every TX 1
    antenna within the unit-norm constraint, floored at 0.1; below the
    floor the trial is flagged as outage and TX 1's violating rows are
    clipped to unit norm.
    """
    K = cfg.K
    if cfg.N[0] < K - 1:
        raise ValueError("AP-ZF needs N1 >= K - 1")
    est1 = np.asarray(real.est[0], dtype=np.complex128)
    batch = _batch_shape(est1)
    sl = cfg.tx_slices
    W = np.zeros(batch + (cfg.NT, K), dtype=np.complex128)
    for j in range(1, cfg.M):
        W[..., sl[j], :] = passive_pattern(cfg.N[j], K, j + 1)
    rest = np.r_[sl[0].stop:cfg.NT]
    W = _tx1_solve(est1, W, sl[0], rest)
    scale = 1.0 / np.sqrt(K)
    peak = antenna_norms(scale * W[..., sl[0], :]).max(axis=-1)
    mu = np.minimum(1.0, 1.0 / peak)
    outage = mu < AP_MU_FLOOR
    mu = np.maximum(mu, AP_MU_FLOOR)
    if np.any(outage):
        rows = antenna_norms(mu[..., None, None] * scale * W)
        shrink = np.where(rows > 1.0, 1.0 / rows, 1.0)
        shrink[..., sl[0].stop:] = 1.0
        W = W * shrink[..., None]
    return PrecodeResult(W, mu, scale, outage,
                         np.ones(batch, dtype=bool), "apzf", list(sl))


def map_estimate(own, zbreve_own, zbreve_other, q):
    """MAP cell of another TX's quantized estimate given one's own.

    Real and imaginary parts of ``other`` given ``own = x`` are Gaussian
    with mean ``zbreve_own * zbreve_other * x``; the symmetric unimodal
    posterior puts the most mass on the cell holding that mean.
    """
    return quantize_matrix(zbreve_own * zbreve_other * np.asarray(own), q)


def map_estimate_quantized_csit(own, j, cfg: ScenarioConfig, P):
    """MAP reconstruction at TX 1 of TX ``j``'s (1-based) quantized CSIT."""
    pbar = np.sqrt(P)
    z1 = pbar ** (-cfg.alphas[0])
    zj = pbar ** (-cfg.alphas[j - 1])
    q = quantization_step(cfg.alpha_q, P)
    return map_estimate(own, np.sqrt(1 - z1 ** 2), np.sqrt(1 - zj ** 2), q)


def check_consistency(cells_a, cells_b):
    """Exact equality of quantized decisions (integer cell indices)."""
    a = np.asarray(cells_a)
    b = np.asarray(cells_b)
    if a.shape != b.shape:
        return False
    if not (np.issubdtype(a.dtype, np.integer)
            and np.issubdtype(b.dtype, np.integer)):
        raise TypeError("consistency compares integer cell indices")
    return bool(np.array_equal(a, b))


def cdzf(real: ChannelRealization, cfg: ScenarioConfig,
         hierarchical: Optional[bool] = None):
    """Consistent distributed ZF.

    TXs 2..M zero-force on their quantized estimate.  TX 1 reconstructs
    those quantized estimates (MAP in distributed mode, exactly in
    hierarchical mode), predicts the other TXs' rows, and corrects its own
    rows so that its view of the interference matches centralized ZF on
    its own estimate.  ``mu = 1 - Pbar**-alpha_mu`` scales every block.
    """
    cfg.validate_cdzf()
    if hierarchical is None:
        hierarchical = real.mode != "distributed"
    K, P = cfg.K, real.P
    q = quantization_step(cfg.alpha_q, P)
    sl = cfg.tx_slices
    est1 = np.asarray(real.est[0], dtype=np.complex128)
    batch = _batch_shape(est1)
    V = zf_columns(est1)
    scale = 1.0 / np.sqrt(K)
    mu = 1.0 - np.sqrt(P) ** (-cfg.alpha_mu)
    name = "cdzf-hierarchical" if hierarchical else "cdzf-distributed"
    if real.mode == "centralized-ideal":
        # Shared estimates: nothing to reconcile, no need to quantize.
        ones = np.ones((max(cfg.M - 1, 0),) + batch, dtype=bool)
        return PrecodeResult(V.copy(), _full(batch, mu, float), scale,
                             np.zeros(batch, bool), np.ones(batch, bool), name,
                             list(sl), V=V, W_corrected=V.copy(),
                             consistent_per_tx=ones)
    fallback = degenerate_fallback(cfg.NT, K)

    W_actual = V.copy()
    W_pred = V.copy()
    cons_tx = np.ones((max(cfg.M - 1, 0),) + batch, dtype=bool)
    zb = real.zbreve
    for j in range(1, cfg.M):
        est_j = np.asarray(real.est[j])
        cells = complex_cells(est_j, q)
        Wj = zf_columns(quantize_matrix(est_j, q), fallback)
        W_actual[..., sl[j], :] = Wj[..., sl[j], :]
        if hierarchical:
            W_pred[..., sl[j], :] = Wj[..., sl[j], :]
        else:
            guess = zb[0] * zb[j] * est1
            cons_tx[j - 1] = np.all(complex_cells(guess, q) == cells,
                                    axis=(-3, -2, -1))
            Wg = zf_columns(quantize_matrix(guess, q), fallback)
            W_pred[..., sl[j], :] = Wg[..., sl[j], :]

    rest = np.r_[sl[0].stop:cfg.NT]
    corrected = _correct(est1, V, V[..., rest, :] - W_pred[..., rest, :],
                         sl[0], rest)
    W_actual[..., sl[0], :] = corrected[..., sl[0], :]

    peak = antenna_norms(mu * scale * corrected[..., sl[0], :]).max(axis=-1)
    outage = peak > 1.0
    W = W_actual.copy()
    W[..., sl[0], :] = np.where(outage[..., None, None], V[..., sl[0], :],
                                W_actual[..., sl[0], :])
    consistent = np.all(cons_tx, axis=0) if cfg.M > 1 else np.ones(batch, bool)
    return PrecodeResult(W, _full(batch, mu, float), scale, outage,
                         consistent, name,
                         list(sl), V=V, W_corrected=W_actual,
                         consistent_per_tx=cons_tx)


def _correct(est1, V, diff, s1, rest):
    """``w_{l,1} = v_{l,1} + pinv(A_l) B_l diff_l``.

    ``A_l``/``B_l`` are TX 1's estimate without row ``l``, restricted to
    TX 1's antennas and to the rest; ``diff`` is ``v_rest - w_rest``.
    """
    out = V.copy()
    K = est1.shape[-2]
    for ell in range(K):
        others = np.delete(est1, ell, axis=-2)
        A = others[..., :, s1]
        B = others[..., :, rest]
        phi = pinv(A) @ (B @ diff[..., :, ell:ell + 1])
        out[..., s1, ell] = V[..., s1, ell] + phi[..., 0]
    return out


def tx1_only(real: ChannelRealization, cfg: ScenarioConfig, slot=0):
    """Only TX 1 transmits.

    With ``N1 >= K`` it zero-forces all RXs.  Otherwise it serves
    ``N1`` RXs chosen round-robin from ``slot`` (usually the trial index),
    each column scaled by ``1/sqrt(#served)``.
    """
    K, N1 = cfg.K, cfg.N[0]
    est1 = np.asarray(real.est[0], dtype=np.complex128)
    batch = _batch_shape(est1)
    n_serve = min(N1, K)
    slot = np.broadcast_to(np.asarray(slot, dtype=np.int64), batch)
    W = np.zeros(batch + (cfg.NT, K), dtype=np.complex128)
    s1 = cfg.tx_slices[0]
    for start in np.unique(slot % K) if n_serve < K else [0]:
        served = [(start + k) % K for k in range(n_serve)]
        sel = (slot % K == start) if n_serve < K else np.ones(batch, bool)
        sub = est1[..., served, :][..., :, s1]
        cols = zf_columns(sub)
        Wsel = np.zeros_like(W)
        Wsel[..., s1, served] = cols
        W = np.where(np.asarray(sel)[..., None, None], Wsel, W)
    return PrecodeResult(W, _full(batch, 1.0, float), 1.0 / np.sqrt(n_serve),
                         _full(batch, False, bool), _full(batch, True, bool),
                         "tx1-only", list(cfg.tx_slices))


def precode(scheme: str, real: ChannelRealization, cfg: ScenarioConfig,
            slot=0) -> PrecodeResult:
    """Dispatch one of :data:`SCHEMES`."""
    sl = cfg.tx_slices
    if scheme == "centralized":
        return centralized_zf(real.est[0], cfg.K, tx_slices=sl)
    if scheme == "naive":
        return naive_distributed_zf(real, sl)
    if scheme == "apzf":
        return ap_zf(real, cfg)
    if scheme == "cdzf-distributed":
        return cdzf(real, cfg, hierarchical=False)
    if scheme == "cdzf-hierarchical":
        return cdzf(real, cfg, hierarchical=True)
    if scheme == "tx1-only":
        return tx1_only(real, cfg, slot)
    raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
