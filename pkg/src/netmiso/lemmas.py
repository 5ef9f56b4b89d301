"""Statistical checks of the scaling laws behind CD-ZF.

Each estimator runs the CD-ZF Monte Carlo over an SNR grid and reports
event frequencies with Wilson intervals, moments, and log-log slope fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .channel import ScenarioConfig, complex_cells, db_to_linear, quantization_step
from .sim import run_trials

__all__ = [
    "SlopeFit",
    "EventFrequency",
    "wilson_interval",
    "fit_slope",
    "cdzf_probe",
    "disagreement_probability",
    "estimate_inconsistency",
    "estimate_outage",
    "estimate_precoder_gap_moments",
    "estimate_ratio_tails",
    "decreasing_beyond_ci",
    "nonincreasing_within_ci",
    "lemma_report",
]

WILSON_Z = 1.96


def wilson_interval(k, n, z=WILSON_Z):
    """Wilson score interval ``(lo, hi)`` for ``k`` successes in ``n``."""
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class EventFrequency:
    tag: str
    snr_db: list
    counts: list
    trials: list

    @property
    def P(self):
        return [float(x) for x in db_to_linear(self.snr_db)]

    @property
    def estimates(self):
        return [k / n if n else 0.0 for k, n in zip(self.counts, self.trials)]

    @property
    def intervals(self):
        return [wilson_interval(k, n) for k, n in zip(self.counts, self.trials)]

    @property
    def half_widths(self):
        return [(hi - lo) / 2 for lo, hi in self.intervals]

    def scaled(self):
        """``(estimate, lo, hi)`` lists multiplied by ``log2 P``."""
        L = np.log2(self.P)
        lo, hi = zip(*self.intervals)
        return (list(np.asarray(self.estimates) * L), list(np.asarray(lo) * L),
                list(np.asarray(hi) * L))

    def to_dict(self):
        lo, hi = zip(*self.intervals) if self.counts else ((), ())
        return {"tag": self.tag, "snr_db": list(self.snr_db),
                "counts": [int(c) for c in self.counts],
                "trials": [int(n) for n in self.trials],
                "estimate": self.estimates, "wilson_lo": list(lo),
                "wilson_hi": list(hi)}


def decreasing_beyond_ci(freq: EventFrequency, last=None):
    """``f log2 P`` strictly decreasing with non-overlapping intervals."""
    _, lo, hi = freq.scaled()
    idx = range(len(lo))[-last:] if last else range(len(lo))
    idx = list(idx)
    return all(lo[a] > hi[b] for a, b in zip(idx[:-1], idx[1:]))


def nonincreasing_within_ci(freq: EventFrequency, last=None):
    """No consecutive increase of ``f log2 P`` beyond interval slack."""
    _, lo, hi = freq.scaled()
    idx = list(range(len(lo))[-last:] if last else range(len(lo)))
    return all(lo[b] <= hi[a] for a, b in zip(idx[:-1], idx[1:]))


@dataclass
class SlopeFit:
    x: list
    y: list
    slope: float
    intercept: float
    r_squared: float
    excluded: list = field(default_factory=list)


def fit_slope(P, estimates, base="P") -> SlopeFit:
    """OLS of ``log2(estimate)`` against ``log2(P)`` (or ``log2(sqrt(P))``).

    Non-positive estimates are dropped and listed in ``excluded``; at least
    four usable points are required.
    """
    P = np.asarray(P, dtype=float)
    y = np.asarray(estimates, dtype=float)
    if base not in ("P", "Pbar"):
        raise ValueError("base must be 'P' or 'Pbar'")
    ok = y > 0
    excluded = [int(i) for i in np.flatnonzero(~ok)]
    if ok.sum() < 4:
        raise ValueError("slope fit needs at least 4 positive estimates")
    x = np.log2(P[ok]) / (2.0 if base == "Pbar" else 1.0)
    ly = np.log2(y[ok])
    slope, intercept = np.polyfit(x, ly, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(list(x), list(ly), float(slope), float(intercept), r2,
                    excluded)


def disagreement_probability(alpha_own, alpha_other, alpha_q, P):
    """Probability that one real scalar's MAP cell differs from the other
    TX's actual cell, by integrating Gaussian cell masses.

    ``x`` (own) is N(0, 1/2); given ``x`` the other scalar is
    N(rho x, (1 - rho^2)/2) with ``rho`` the product of both ``zbreve``.
    """
    pbar = math.sqrt(P)
    rho = (math.sqrt(1 - pbar ** (-2 * alpha_own))
           * math.sqrt(1 - pbar ** (-2 * alpha_other)))
    q = quantization_step(alpha_q, P)
    sx = math.sqrt(0.5)
    sc = math.sqrt((1 - rho * rho) / 2)
    span = 9 * sx

    def miss(x):
        n = math.floor(rho * x / q + 0.5)
        a = ((n - 0.5) * q - rho * x) / sc
        b = ((n + 0.5) * q - rho * x) / sc
        pdf = math.exp(-x * x / (2 * sx * sx)) / (sx * math.sqrt(2 * math.pi))
        return (1.0 - (ndtr(b) - ndtr(a))) * pdf

    n_max = math.ceil(rho * span / q + 0.5)
    edges = [(n - 0.5) * q / rho for n in range(-n_max, n_max + 2)]
    edges = [e for e in edges if -span < e < span]
    pts = [-span] + edges + [span]
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(miss, a, b, epsabs=1e-13, epsrel=1e-10)[0]
    return total


def cdzf_probe(cfg, real, res, P):
    """Per-trial CD-ZF diagnostics gathered by the lemma estimators."""
    if res.V is None or res.W_corrected is None:
        return {}
    q = quantization_step(cfg.alpha_q, P)
    sl = cfg.tx_slices
    V, Wc = res.V, res.W_corrected
    out = {}
    gaps = [np.mean(np.sum(np.abs(V[..., s, :] - Wc[..., s, :]) ** 2,
                           axis=-2), axis=-1) for s in sl[1:]]
    out["gap_sq_tx"] = np.stack(gaps, axis=-1) if gaps else np.zeros(
        V.shape[:-2] + (0,))
    col = np.sum(np.abs(V - Wc) ** 2, axis=-2)
    out["gap_sq_global"] = col.mean(axis=-1)
    out["gap_global"] = np.sqrt(col).mean(axis=-1)
    out["gap_tx"] = np.stack(
        [np.mean(np.linalg.norm(V[..., s, :] - Wc[..., s, :], axis=-2),
                 axis=-1) for s in sl[1:]], axis=-1) if gaps else out[
        "gap_sq_tx"]
    out["consistent_tx"] = (np.moveaxis(res.consistent_per_tx, 0, -1)
                            if res.consistent_per_tx is not None else
                            np.ones(V.shape[:-2] + (0,), dtype=bool))
    # scalar-level disagreement between the MAP guess and the actual cells
    zb = real.zbreve
    est1 = np.asarray(real.est[0])
    dis = [np.sum(complex_cells(zb[0] * zb[j] * est1, q)
                  != complex_cells(real.est[j], q), axis=(-3, -2, -1))
           for j in range(1, cfg.M)]
    if real.mode == "centralized-ideal":
        dis = [np.zeros_like(d) for d in dis]
    out["scalar_mismatch"] = np.stack(dis, axis=-1) if dis else np.zeros(
        V.shape[:-2] + (0,), dtype=np.int64)

    H = real.H
    tw = res.scale * Wc
    tv = res.scale * V
    gw = np.abs(H @ tw) ** 2
    gv = np.abs(H @ tv) ** 2
    dw = np.diagonal(gw, axis1=-2, axis2=-1)
    dv = np.diagonal(gv, axis1=-2, axis2=-1)
    iw, iv = gw.sum(-1) - dw, gv.sum(-1) - dv
    out["FI"] = (1 + P * iw) / (1 + P * iv)
    out["FD"] = (1 + P * gv.sum(-1)) / (1 + P * gw.sum(-1))
    out["interf_w"] = iw
    out["interf_v"] = iv

    # Interference through TX 1's own estimate, corrected vs centralized.
    G1w = np.abs(est1 @ Wc) ** 2
    G1v = np.abs(est1 @ V) ** 2
    own_w = G1w.sum(-1) - np.diagonal(G1w, axis1=-2, axis2=-1)
    own_v = G1v.sum(-1) - np.diagonal(G1v, axis1=-2, axis2=-1)
    out["own_interf_w"] = own_w
    out["own_interf_v"] = own_v
    D = est1 @ (Wc - V)
    K = cfg.K
    off = ~np.eye(K, dtype=bool)
    row_norm = np.linalg.norm(est1, axis=-1)
    out["own_view_residual"] = np.max(np.abs(D)[..., off].reshape(
        D.shape[:-2] + (K, K - 1)) / row_norm[..., None], axis=(-2, -1)) \
        if K > 1 else np.zeros(D.shape[:-2])
    return out


def _scheme(hierarchical):
    return "cdzf-hierarchical" if hierarchical else "cdzf-distributed"


def _run(cfg, snrs_db, trials, hierarchical, threads):
    cfg.validate_cdzf()
    snrs_db = cfg.snr_grid_db if snrs_db is None else tuple(snrs_db)
    scheme = _scheme(hierarchical)
    values, _ = run_trials(cfg, snrs_db, [scheme], trials, probe=cdzf_probe,
                           threads=threads)
    return snrs_db, [values[(k, scheme)] for k in range(len(snrs_db))]


def estimate_inconsistency(cfg: ScenarioConfig, snrs_db=None, trials=None,
                           threads=1):
    """Frequency of MAP reconstruction mismatch, aggregated and per TX.

    Also returns the per-scalar mismatch frequency for comparison with
    :func:`disagreement_probability`.
    """
    snrs_db, vals = _run(cfg, snrs_db, trials, False, threads)
    n = [len(v["inconsistent"]) for v in vals]
    agg = EventFrequency("inconsistent", list(snrs_db),
                         [int(v["inconsistent"].sum()) for v in vals], n)
    per_tx = []
    for j in range(1, cfg.M):
        per_tx.append(EventFrequency(
            f"inconsistent_tx{j + 1}", list(snrs_db),
            [int((~v["consistent_tx"][:, j - 1]).sum()) for v in vals], n))
    n_scalars = 2 * cfg.K * cfg.NT
    scalar = []
    for j in range(1, cfg.M):
        scalar.append(EventFrequency(
            f"scalar_mismatch_tx{j + 1}", list(snrs_db),
            [int(v["scalar_mismatch"][:, j - 1].sum()) for v in vals],
            [k * n_scalars for k in n]))
    return {"aggregate": agg, "per_tx": per_tx, "per_scalar": scalar}


def estimate_outage(cfg: ScenarioConfig, snrs_db=None, trials=None,
                    hierarchical=False, threads=1) -> EventFrequency:
    """Frequency of TX 1 exceeding the per-antenna bound before fallback."""
    snrs_db, vals = _run(cfg, snrs_db, trials, hierarchical, threads)
    return EventFrequency("outage", list(snrs_db),
                          [int(v["outage"].sum()) for v in vals],
                          [len(v["outage"]) for v in vals])


def _try_fit(P, y, base="P"):
    try:
        return fit_slope(P, y, base)
    except ValueError:
        return None


def estimate_precoder_gap_moments(cfg: ScenarioConfig, snrs_db=None,
                                  trials=None, hierarchical=False, threads=1):
    """Monte Carlo ``E||v - w||`` and ``E||v - w||^2`` per TX and globally.

    ``v`` is centralized ZF on TX 1's estimate, ``w`` the CD-ZF precoder
    before any outage fallback.  Moments are averaged over RXs.
    """
    snrs_db, vals = _run(cfg, snrs_db, trials, hierarchical, threads)
    P = db_to_linear(snrs_db)
    res = {"snr_db": list(snrs_db),
           "per_tx": [], "global": {}}
    for j in range(1, cfg.M):
        m1 = [float(np.mean(v["gap_tx"][:, j - 1])) for v in vals]
        m2 = [float(np.mean(v["gap_sq_tx"][:, j - 1])) for v in vals]
        se2 = [float(np.std(v["gap_sq_tx"][:, j - 1], ddof=1)
                     / math.sqrt(len(v["gap_sq_tx"]))) for v in vals]
        entry = {"tx": j + 1, "mean": m1, "mean_sq": m2, "mean_sq_stderr": se2}
        entry["slope_sq"] = _try_fit(P, m2)
        res["per_tx"].append(entry)
    g1 = [float(np.mean(v["gap_global"])) for v in vals]
    g2 = [float(np.mean(v["gap_sq_global"])) for v in vals]
    res["global"] = {"mean": g1, "mean_sq": g2}
    res["global"]["slope_sq"] = _try_fit(P, g2)
    return res


def estimate_ratio_tails(cfg: ScenarioConfig, snrs_db=None, trials=None,
                         epsilon=0.2, hierarchical=True, threads=1):
    """Tail frequencies of the interference and total-power ratios.

    Counts trials where any RX has ``F >= 1 + eta`` (and likewise for
    ``1/F``) with ``eta = Pbar**-epsilon``, among feasible-consistent
    trials only.  Conditioned on consistency the distributed precoder
    equals the hierarchical one, so the hierarchical run is the default
    sample.
    """
    if not 0 < epsilon < cfg.alpha_q:
        raise ValueError("need 0 < epsilon < alpha_q")
    snrs_db, vals = _run(cfg, snrs_db, trials, hierarchical, threads)
    tails = {name: [] for name in ("FI", "inv_FI", "FD", "inv_FD")}
    n = []
    residual = []
    for snr, v in zip(snrs_db, vals):
        eta = math.sqrt(float(db_to_linear(snr))) ** (-epsilon)
        keep = ~v["outage"] & ~v["inconsistent"]
        n.append(int(keep.sum()))
        FI, FD = v["FI"][keep], v["FD"][keep]
        tails["FI"].append(int(np.any(FI >= 1 + eta, axis=-1).sum()))
        tails["inv_FI"].append(int(np.any(1 / FI >= 1 + eta, axis=-1).sum()))
        tails["FD"].append(int(np.any(FD >= 1 + eta, axis=-1).sum()))
        tails["inv_FD"].append(int(np.any(1 / FD >= 1 + eta, axis=-1).sum()))
        residual.append(float(v["own_view_residual"][keep].max()) if keep.any()
                        else 0.0)
    out = {name: EventFrequency(name, list(snrs_db), c, n)
           for name, c in tails.items()}
    out["own_view_residual_max"] = residual
    return out


def _fit_dict(fit: Optional[SlopeFit]):
    if fit is None:
        return None
    return {"x": fit.x, "y": fit.y, "slope": fit.slope,
            "intercept": fit.intercept, "r_squared": fit.r_squared,
            "excluded": fit.excluded}


def _all_zero(freq: EventFrequency):
    return not any(freq.counts)


def lemma_report(cfg: ScenarioConfig, trials=None, epsilon=None, threads=1):
    """Run every estimator on ``cfg`` and attach pass/fail verdicts.

    Thresholds follow the acceptance suite: slopes within 0.15 of the
    predicted exponents, trends checked on ``f log2 P`` against Wilson
    intervals.  Event frequencies that are identically zero pass.
    """
    cfg.validate_cdzf()
    if epsilon is None:
        epsilon = min(0.2, cfg.alpha_q / 2)
    P = db_to_linear(cfg.snr_grid_db)
    report = {"config": cfg.to_dict(), "epsilon": epsilon}

    inc = estimate_inconsistency(cfg, trials=trials, threads=threads)
    oracle = []
    if cfg.csit_mode != "centralized-ideal":
        for j in range(1, cfg.M):
            oracle.append([disagreement_probability(cfg.alphas[0],
                                                    cfg.alphas[j],
                                                    cfg.alpha_q, p)
                           for p in P])
    agg = inc["aggregate"]
    report["inconsistency"] = {
        "aggregate": agg.to_dict(),
        "per_tx": [f.to_dict() for f in inc["per_tx"]],
        "per_scalar": [f.to_dict() for f in inc["per_scalar"]],
        "per_scalar_oracle": oracle,
        "verdict": _all_zero(agg) or decreasing_beyond_ci(agg, last=4),
    }

    out = estimate_outage(cfg, trials=trials, hierarchical=True,
                          threads=threads)
    fit = _try_fit(out.P, out.estimates, "Pbar")
    limit = -(cfg.alpha_q - cfg.alpha_mu) + 0.15
    ok = _all_zero(out) or (fit is not None and fit.slope <= limit
                            and nonincreasing_within_ci(out))
    report["outage"] = {"frequency": out.to_dict(), "slope_pbar": _fit_dict(fit),
                        "slope_limit": limit, "verdict": bool(ok)}

    gap = estimate_precoder_gap_moments(cfg, trials=trials, threads=threads)
    blocks = []
    ok = True
    for entry in gap["per_tx"]:
        zero = not any(entry["mean_sq"])
        fit = None if zero else entry.get("slope_sq")
        good = zero or (fit is not None
                        and abs(fit.slope + cfg.alpha_q) <= 0.15
                        and fit.r_squared >= 0.9)
        ok = ok and good
        blocks.append({"tx": entry["tx"], "mean": entry["mean"],
                       "mean_sq": entry["mean_sq"],
                       "slope_sq": _fit_dict(fit), "verdict": bool(good)})
    g = gap["global"]
    gzero = not any(g["mean_sq"])
    gfit = None if gzero else g.get("slope_sq")
    gok = gzero or (gfit is not None and blocks and blocks[0]["slope_sq"]
                    and abs(gfit.slope - blocks[0]["slope_sq"]["slope"]) <= 0.1)
    report["precoder_gap"] = {"per_tx": blocks,
                              "global": {"mean": g["mean"],
                                         "mean_sq": g["mean_sq"],
                                         "slope_sq": _fit_dict(gfit),
                                         "verdict": bool(gok)},
                              "verdict": bool(ok and gok)}

    tails = estimate_ratio_tails(cfg, trials=trials, epsilon=epsilon,
                                 threads=threads)
    names = ("FI", "inv_FI", "FD", "inv_FD")
    verdicts = {n: bool(_all_zero(tails[n])
                        or nonincreasing_within_ci(tails[n], last=3))
                for n in names}
    resid = tails["own_view_residual_max"]
    report["ratio_tails"] = {
        **{n: tails[n].to_dict() for n in names},
        "per_event_verdict": verdicts,
        "own_view_residual_max": resid,
        "verdict": all(verdicts.values()) and max(resid) <= 1e-8,
    }
    report["all_pass"] = all(report[k]["verdict"] for k in
                             ("inconsistency", "outage", "precoder_gap",
                              "ratio_tails"))
    return report
