"""Monte Carlo trial engine.

Trial ``t`` always draws its fading from ``RngStream(seed, t, s)`` where the
substream ``s`` starts at 0 and is bumped only if that trial hits a
rank-deficient matrix.  The same fading is reused at every SNR point and by
every scheme.  Trials are processed in fixed-size chunks keyed by trial
index, so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import Fading, ScenarioConfig, db_to_linear, draw_fading, realize
from .linalg import RngStream, SingularInputError
from .precoders import precode

__all__ = ["CHUNK", "MAX_RESAMPLES", "draw_batch", "ChunkResult", "run_chunk",
           "run_trials"]

log = logging.getLogger(__name__)

CHUNK = 512
MAX_RESAMPLES = 16


def draw_batch(cfg: ScenarioConfig, trial_ids, substreams=None) -> Fading:
    """Stack per-trial fading draws along a leading axis."""
    trial_ids = np.asarray(trial_ids, dtype=np.int64)
    if substreams is None:
        substreams = np.zeros_like(trial_ids)
    H = np.empty((len(trial_ids), cfg.K, cfg.NT), dtype=np.complex128)
    noise = np.empty((cfg.M,) + H.shape, dtype=np.complex128)
    for k, (t, s) in enumerate(zip(trial_ids, substreams)):
        f = draw_fading(cfg, RngStream(cfg.seed, int(t), int(s)))
        H[k] = f.H
        noise[:, k] = f.noise
    return Fading(H, noise)


@dataclass
class ChunkResult:
    trial_ids: np.ndarray
    rejected: int
    # values[(snr_index, scheme)] -> dict of per-trial arrays
    values: dict


def _evaluate(cfg, fading, snrs, schemes, trial_ids, probe):
    from .rates import instantaneous_rate

    out = {}
    for k, snr_db in enumerate(snrs):
        P = float(db_to_linear(snr_db))
        real = realize(cfg, fading, P)
        for scheme in schemes:
            res = precode(scheme, real, cfg, slot=trial_ids)
            rates = instantaneous_rate(real.H, res.T, P)
            entry = {
                "per_rx": rates,
                "outage": np.asarray(res.outage, dtype=bool),
                "inconsistent": ~np.asarray(res.consistent, dtype=bool),
            }
            if probe is not None:
                entry.update(probe(cfg, real, res, P))
            out[(k, scheme)] = entry
    return out


def run_chunk(cfg: ScenarioConfig, snrs_db, schemes, trial_ids, probe=None):
    """Evaluate ``schemes`` at every SNR for the given trials.

    ``probe(cfg, real, result, P)`` may return extra per-trial arrays.
    """
    trial_ids = np.asarray(trial_ids, dtype=np.int64)
    subs = np.zeros_like(trial_ids)
    fading = draw_batch(cfg, trial_ids, subs)
    rejected = 0
    for _ in range(MAX_RESAMPLES * max(1, len(trial_ids))):
        try:
            values = _evaluate(cfg, fading, snrs_db, schemes, trial_ids, probe)
            return ChunkResult(trial_ids, rejected, values)
        except SingularInputError as exc:
            bad = np.unique(exc.index)
            if bad.size == 0 or np.any(subs[bad] >= MAX_RESAMPLES):
                raise
            subs[bad] += 1
            rejected += bad.size
            redraw = draw_batch(cfg, trial_ids[bad], subs[bad])
            fading.H[bad] = redraw.H
            fading.noise[:, bad] = redraw.noise
    raise RuntimeError("resampling did not converge")


def _chunk_job(args):
    return run_chunk(*args)


def run_trials(cfg: ScenarioConfig, snrs_db, schemes, trials=None,
               probe=None, threads=1, chunk=CHUNK):
    """Run ``trials`` trials and merge chunks in trial order.

    Returns ``(values, rejected)`` where ``values[(k, scheme)][name]`` is an
    array over all trials.
    """
    trials = cfg.trials if trials is None else int(trials)
    ids = np.arange(trials, dtype=np.int64)
    jobs = [(cfg, tuple(snrs_db), tuple(schemes), ids[a:a + chunk], probe)
            for a in range(0, trials, chunk)]
    if threads and threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(j) for j in jobs]
    rejected = sum(p.rejected for p in parts)
    if rejected:
        log.info("resampled %d rank-deficient trial draws", rejected)
    merged = {}
    for key in parts[0].values:
        merged[key] = {name: np.concatenate([p.values[key][name] for p in parts])
                       for name in parts[0].values[key]}
    return merged, rejected
