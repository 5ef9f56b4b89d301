import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from netmiso import bundled_config
from netmiso.channel import ScenarioConfig
from netmiso.cli import CSV_HEADER, main, single_shot
from netmiso.sim import run_trials

DATA = Path(__file__).parent / "data"
SMALL = dict(M=2, K=2, N=[1, 1], alphas=[1.0, 0.6], snr_grid_db=[20.0],
             trials=1, seed=9, alpha_q=0.5, alpha_mu=0.3)


def write_cfg(tmp_path, **over):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(dict(SMALL, **over)))
    return str(p)


def rows(path):
    return list(csv.reader(io.StringIO(Path(path).read_text())))


def test_single_row(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["sweep-rate", "--config", write_cfg(tmp_path), "--out",
                 str(out), "--schemes", "naive"]) == 0
    r = rows(out)
    assert r[0] == CSV_HEADER and len(r) == 2
    assert r[1][1] == "naive" and r[1][6] == "1" and r[1][7] == "9"
    assert "\r" not in out.read_text()
    man = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert man["config"]["seed"] == 9 and man["arguments"]["schemes"] == "naive"


def test_fig6_shape(tmp_path):
    cfg = bundled_config().replace(trials=40)
    p = tmp_path / "f.json"
    p.write_text(json.dumps(cfg.to_dict()))
    out = tmp_path / "f.csv"
    assert main(["sweep-rate", "--config", str(p), "--out", str(out)]) == 0
    r = rows(out)[1:]
    assert len(r) == 6 * len(cfg.snr_grid_db)
    assert {x[1] for x in r} == {"centralized", "naive", "apzf",
                                 "cdzf-distributed", "cdzf-hierarchical",
                                 "tx1-only"}
    # full round-trip formatting
    for x in r:
        assert float(x[2]) == float(repr(float(x[2])))


def test_manifest_replay_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = write_cfg(tmp_path, trials=300, snr_grid_db=[10, 30])
    assert main(["sweep-rate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["sweep-rate", "--manifest", str(a) + ".manifest.json",
                 "--out", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_missing_alphas_names_field(tmp_path, capsys):
    d = dict(SMALL)
    d.pop("alphas")
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    for cmd in ("sweep-rate", "verify-lemmas"):
        assert main([cmd, "--config", str(p), "--out", str(tmp_path / "x")]) != 0
        e = _err(capsys)
        assert e["error"] == "config" and e["field"] == "alphas"


def test_precondition_is_config_error(tmp_path, capsys):
    p = write_cfg(tmp_path, alpha_mu=0.6)
    assert main(["verify-lemmas", "--config", p, "--out", str(tmp_path / "x")]) == 2
    assert _err(capsys)["field"] == "alpha_mu"


def test_unwritable_output(tmp_path, capsys):
    assert main(["sweep-rate", "--config", write_cfg(tmp_path),
                 "--out", str(tmp_path / "nope" / "o.csv")]) == 2
    assert _err(capsys)["error"] == "io"


def test_bad_scheme(tmp_path, capsys):
    assert main(["sweep-rate", "--config", write_cfg(tmp_path), "--out",
                 str(tmp_path / "o.csv"), "--schemes", "magic"]) == 2
    assert _err(capsys)["field"] == "schemes"


def test_verify_lemmas_degenerate(tmp_path):
    p = write_cfg(tmp_path, csit_mode="centralized-ideal", trials=200,
                  snr_grid_db=[20, 30, 40, 50])
    out = tmp_path / "l.json"
    assert main(["verify-lemmas", "--config", p, "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["all_pass"]
    assert not any(rep["inconsistency"]["aggregate"]["counts"])
    assert not any(rep["outage"]["frequency"]["counts"])


def test_single_shot_golden(capsys):
    cfg = str(Path(__file__).parents[1] / "src/netmiso/configs/fig6.json")
    assert main(["single-shot", "--config", cfg, "--snr-db", "30",
                 "--trial", "3"]) == 0
    got = json.loads(capsys.readouterr().out)
    want = json.loads((DATA / "single_shot_fig6_30db_t3.json").read_text())
    _close(got, want)


def _close(a, b):
    if isinstance(b, dict):
        assert set(a) == set(b)
        for k in b:
            _close(a[k], b[k])
    elif isinstance(b, list):
        assert len(a) == len(b)
        for x, y in zip(a, b):
            _close(x, y)
    elif isinstance(b, float):
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)
    else:
        assert a == b


def test_single_shot_matches_sweep_and_flags():
    cfg = ScenarioConfig(**dict(SMALL, trials=40, snr_grid_db=[45.0]))
    vals, _ = run_trials(cfg, [45.0], ["naive", "cdzf-distributed"])
    seen_consistent = False
    for t in range(40):
        d = single_shot(cfg, 45.0, t)
        for s in ("naive", "cdzf-distributed"):
            np.testing.assert_allclose(d["schemes"][s]["per_rx_rate"],
                                       vals[(0, s)]["per_rx"][t], rtol=1e-12)
        if d["schemes"]["cdzf-distributed"]["consistent"]:
            seen_consistent = True
            assert d["map_cells"][1] == d["cells"][1]
            assert d["map_reconstruction"][1] == d["quantized"][1]
    assert seen_consistent


def test_single_shot_trial_range(tmp_path, capsys):
    assert main(["single-shot", "--config", write_cfg(tmp_path),
                 "--snr-db", "20", "--trial", "5"]) == 2
    assert _err(capsys)["field"] == "trial"
