"""Command-line entry point: ``netmiso {sweep-rate,verify-lemmas,single-shot}``.

Every run that writes a file also writes ``<out>.manifest.json`` holding the
config snapshot, tool version and command arguments.  Passing that manifest
back through ``--manifest`` replays the run byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .channel import (ConfigError, ScenarioConfig, complex_cells,
                      db_to_linear, load_config, quantization_step,
                      quantize_matrix, realize)
from .linalg import SingularInputError
from .precoders import SCHEMES, precode
from .rates import instantaneous_rate, sweep
from .sim import MAX_RESAMPLES, draw_batch

CSV_HEADER = ["snr_db", "scheme", "sum_rate", "stderr", "p_outage",
              "p_inconsistent", "trials", "seed"]


class CliError(Exception):
    def __init__(self, kind, message, field=None):
        super().__init__(message)
        self.kind, self.message, self.field = kind, message, field


def _fmt(x):
    # repr round-trips exactly and never depends on locale
    return repr(float(x))


def sweep_csv(cfg: ScenarioConfig, schemes, threads=1) -> str:
    points = sweep(cfg, schemes, threads=threads)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in points:
        w.writerow([_fmt(p.snr_db), p.scheme, _fmt(p.sum_rate),
                    _fmt(p.stderr), _fmt(p.p_outage), _fmt(p.p_inconsistent),
                    p.trials, cfg.seed])
    return buf.getvalue()


def _parse_schemes(text):
    if text is None:
        return list(SCHEMES)
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SCHEMES]
    if bad or not names:
        raise CliError("usage", f"unknown scheme(s) {bad}; choose from "
                                f"{', '.join(SCHEMES)}", "schemes")
    return names


def _cplx(a):
    a = np.asarray(a)
    return {"re": a.real.tolist(), "im": a.imag.tolist()}


def single_shot(cfg: ScenarioConfig, snr_db: float, trial: int) -> dict:
    """Full pipeline state of one trial at one SNR."""
    if trial < 0 or trial >= cfg.trials:
        raise CliError("usage", f"trial must be in [0, {cfg.trials})", "trial")
    P = float(db_to_linear(snr_db))
    for sub in range(MAX_RESAMPLES + 1):
        fading = draw_batch(cfg, [trial], [sub])
        real = realize(cfg, fading, P)
        try:
            results = {s: precode(s, real, cfg, slot=np.array([trial]))
                       for s in SCHEMES if s in _usable(cfg)}
            break
        except SingularInputError:
            continue
    else:
        raise CliError("numeric", "trial stays rank deficient after resampling")
    dump = {"snr_db": snr_db, "P": P, "trial": trial, "substream": sub,
            "H": _cplx(real.H[0]),
            "estimates": [_cplx(e[0]) for e in real.est]}
    if cfg.alpha_q is not None:
        q = quantization_step(cfg.alpha_q, P)
        zb = real.zbreve
        dump["q"] = q
        dump["quantized"] = [_cplx(quantize_matrix(e[0], q)) for e in real.est]
        dump["cells"] = [complex_cells(e[0], q).tolist() for e in real.est]
        guess = [zb[0] * zb[j] * real.est[0][0] for j in range(cfg.M)]
        dump["map_reconstruction"] = [_cplx(quantize_matrix(g, q)) for g in guess]
        dump["map_cells"] = [complex_cells(g, q).tolist() for g in guess]
    schemes = {}
    for name, res in results.items():
        rates = instantaneous_rate(real.H, res.T, P)[0]
        entry = {"W": _cplx(res.W[0]), "mu": float(np.asarray(res.mu)[0]),
                 "scale": float(res.scale), "outage": bool(res.outage[0]),
                 "consistent": bool(res.consistent[0]),
                 "per_rx_rate": rates.tolist(), "sum_rate": float(rates.sum())}
        if res.V is not None:
            entry["V"] = _cplx(res.V[0])
        if res.W_corrected is not None:
            entry["W_corrected"] = _cplx(res.W_corrected[0])
        schemes[name] = entry
    dump["schemes"] = schemes
    return dump


def _usable(cfg):
    try:
        cfg.validate_cdzf()
        return SCHEMES
    except ConfigError:
        return tuple(s for s in SCHEMES if not s.startswith("cdzf"))


def _load(args) -> tuple:
    """Config plus the command arguments, from ``--config`` or a manifest."""
    if args.manifest:
        try:
            with open(args.manifest, encoding="utf-8") as fh:
                man = json.load(fh)
            cfg = ScenarioConfig.from_dict(man["config"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CliError("manifest", f"cannot replay manifest: {exc}")
        return cfg, man.get("arguments", {})
    if not args.config:
        raise CliError("usage", "one of --config or --manifest is required",
                       "config")
    try:
        return load_config(args.config), {}
    except OSError as exc:
        raise CliError("io", str(exc), "config")


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("io", f"cannot write {path}: {exc}", "out")


def _manifest(cfg, command, arguments, outputs, seconds):
    return {"tool": "netmiso", "tool_version": __version__,
            "command": command, "config": cfg.to_dict(), "seed": cfg.seed,
            "arguments": arguments, "outputs": outputs,
            "wall_clock_s": seconds}


def cmd_sweep_rate(args):
    cfg, saved = _load(args)
    schemes = _parse_schemes(args.schemes if args.schemes is not None
                             else saved.get("schemes"))
    if any(s.startswith("cdzf") for s in schemes):
        cfg.validate_cdzf()
    t0 = time.perf_counter()
    text = sweep_csv(cfg, schemes, threads=args.threads)
    _write(args.out, text)
    man = _manifest(cfg, "sweep-rate", {"schemes": ",".join(schemes)},
                    {"csv": args.out}, time.perf_counter() - t0)
    _write(args.out + ".manifest.json", json.dumps(man, indent=2) + "\n")


def cmd_verify_lemmas(args):
    from .lemmas import lemma_report

    cfg, saved = _load(args)
    eps = args.epsilon if args.epsilon is not None else saved.get("epsilon")
    cfg.validate_cdzf()
    if eps is not None and not 0 < eps < cfg.alpha_q:
        raise CliError("config", "epsilon must lie in (0, alpha_q)", "epsilon")
    t0 = time.perf_counter()
    report = lemma_report(cfg, epsilon=eps, threads=args.threads)
    _write(args.out, json.dumps(report, indent=2, default=_json_default) + "\n")
    man = _manifest(cfg, "verify-lemmas", {"epsilon": report["epsilon"]},
                    {"json": args.out}, time.perf_counter() - t0)
    _write(args.out + ".manifest.json", json.dumps(man, indent=2) + "\n")


def cmd_single_shot(args):
    cfg, _ = _load(args)
    dump = single_shot(cfg, args.snr_db, args.trial)
    sys.stdout.write(json.dumps(dump, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def build_parser():
    p = argparse.ArgumentParser(prog="netmiso",
                                description="Network MISO distributed-CSIT "
                                            "precoding simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", help="scenario JSON")
        src.add_argument("--manifest", help="replay a previous run manifest")

    s = sub.add_parser("sweep-rate", help="expected sum rate per SNR and scheme")
    common(s)
    s.add_argument("--out", required=True)
    s.add_argument("--schemes", help="comma-separated subset of " + ",".join(SCHEMES))
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_sweep_rate)

    v = sub.add_parser("verify-lemmas", help="scaling-law checks with verdicts")
    common(v)
    v.add_argument("--out", required=True)
    v.add_argument("--epsilon", type=float)
    v.add_argument("--threads", type=int, default=1)
    v.set_defaults(func=cmd_verify_lemmas)

    o = sub.add_parser("single-shot", help="dump one trial's pipeline state")
    common(o)
    o.add_argument("--snr-db", type=float, required=True)
    o.add_argument("--trial", type=int, required=True)
    o.set_defaults(func=cmd_single_shot)
    return p


def _fail(kind, message, field=None):
    err = {"error": kind, "message": message}
    if field is not None:
        err["field"] = field
    sys.stderr.write(json.dumps(err) + "\n")
    return 2


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        return _fail("usage", "threads must be >= 1", "threads")
    try:
        args.func(args)
    except ConfigError as exc:
        return _fail("config", exc.message, exc.field)
    except CliError as exc:
        return _fail(exc.kind, exc.message, exc.field)
    return 0


if __name__ == "__main__":
    sys.exit(main())
