import math

import numpy as np
import pytest
from statsmodels.stats.proportion import proportion_confint

from netmiso.channel import ScenarioConfig, db_to_linear, realize
from netmiso.lemmas import (EventFrequency, cdzf_probe, decreasing_beyond_ci,
                            disagreement_probability, estimate_inconsistency,
                            estimate_outage, estimate_precoder_gap_moments,
                            estimate_ratio_tails, fit_slope, lemma_report,
                            nonincreasing_within_ci, wilson_interval)
from netmiso.precoders import cdzf
from netmiso.sim import draw_batch

GRID = [20, 25, 30, 35, 40]


@pytest.fixture
def lcfg():
    return ScenarioConfig(M=2, K=2, N=[1, 1], alphas=[1.0, 0.6],
                          snr_grid_db=GRID, trials=2000, seed=21,
                          alpha_q=0.5, alpha_mu=0.3)


@pytest.mark.parametrize("k,n", [(0, 10), (3, 10), (10, 10), (57, 2000)])
def test_wilson_matches_statsmodels(k, n):
    lo, hi = wilson_interval(k, n)
    rlo, rhi = proportion_confint(k, n, alpha=0.05, method="wilson")
    assert math.isclose(lo, rlo, abs_tol=2e-4) and math.isclose(hi, rhi, abs_tol=2e-4)


def test_fit_slope_exact_power_law():
    P = db_to_linear([20, 30, 40, 50])
    fit = fit_slope(P, 3.0 * P ** -0.5)
    assert math.isclose(fit.slope, -0.5, abs_tol=1e-12)
    assert math.isclose(fit.r_squared, 1.0)
    fit = fit_slope(P, 3.0 * P ** -0.5, base="Pbar")
    assert math.isclose(fit.slope, -1.0, abs_tol=1e-12)


def test_fit_slope_noisy(rng):
    P = db_to_linear(np.arange(10, 61, 5))
    for _ in range(20):
        y = P ** -0.4 * (1 + 0.1 * rng.standard_normal(P.size))
        assert abs(fit_slope(P, y).slope + 0.4) < 0.1


def test_fit_slope_constant_and_excluded():
    P = db_to_linear([10, 20, 30, 40, 50])
    assert abs(fit_slope(P, np.full(5, 0.3)).slope) < 1e-12
    fit = fit_slope(P, [0.1, 0.0, 0.05, 0.02, 0.01])
    assert fit.excluded == [1] and len(fit.x) == 4
    with pytest.raises(ValueError):
        fit_slope(P, [0.1, 0, 0, 0.1, 0.1])
    with pytest.raises(ValueError):
        fit_slope(P[:3], [1, 2, 3])


def test_trend_helpers():
    f = EventFrequency("t", [20, 30, 40], [900, 300, 50], [1000] * 3)
    assert decreasing_beyond_ci(f) and nonincreasing_within_ci(f)
    g = EventFrequency("t", [20, 30, 40], [100, 100, 300], [1000] * 3)
    assert not decreasing_beyond_ci(g) and not nonincreasing_within_ci(g)
    assert nonincreasing_within_ci(g, last=2) is False
    flat = EventFrequency("t", [20, 30], [100, 66], [1000, 1000])
    assert nonincreasing_within_ci(flat)


@pytest.mark.parametrize("snr", [20.0, 35.0])
def test_disagreement_oracle_vs_sampling(snr):
    # plain sampling of both estimates, quantized and compared
    P = 10 ** (snr / 10)
    pbar = math.sqrt(P)
    rng = np.random.default_rng(8)
    n = 400_000
    h = rng.standard_normal(n) * math.sqrt(0.5)
    z1, z2 = pbar ** -1.0, pbar ** -0.6
    e1 = math.sqrt(1 - z1 ** 2) * h + z1 * rng.standard_normal(n) * math.sqrt(0.5)
    e2 = math.sqrt(1 - z2 ** 2) * h + z2 * rng.standard_normal(n) * math.sqrt(0.5)
    q = pbar ** -0.5
    rho = math.sqrt(1 - z1 ** 2) * math.sqrt(1 - z2 ** 2)
    miss = np.floor(rho * e1 / q + 0.5) != np.floor(e2 / q + 0.5)
    p = disagreement_probability(1.0, 0.6, 0.5, P)
    se = math.sqrt(p * (1 - p) / n)
    assert abs(miss.mean() - p) < 4 * se


def test_per_scalar_frequency_matches_oracle(lcfg):
    inc = estimate_inconsistency(lcfg, snrs_db=[30], trials=4000)
    f = inc["per_scalar"][0]
    lo, hi = f.intervals[0]
    p = disagreement_probability(1.0, 0.6, 0.5, 1000.0)
    assert lo <= p <= hi
    # all 2*K*NT scalars must agree for a consistent TX
    q_all = 1 - (1 - p) ** (2 * lcfg.K * lcfg.NT)
    lo, hi = inc["aggregate"].intervals[0]
    assert lo <= q_all <= hi


def test_shared_estimates_give_zero_everything(lcfg):
    cfg = lcfg.replace(csit_mode="centralized-ideal")
    inc = estimate_inconsistency(cfg, trials=300)
    assert not any(inc["aggregate"].counts)
    assert not any(estimate_outage(cfg, trials=300).counts)
    gap = estimate_precoder_gap_moments(cfg, trials=300)
    assert gap["per_tx"][0]["mean_sq"] == [0.0] * len(GRID)
    assert gap["global"]["mean"] == [0.0] * len(GRID)
    tails = estimate_ratio_tails(cfg, trials=300, epsilon=0.2)
    for k in ("FI", "inv_FI", "FD", "inv_FD"):
        assert not any(tails[k].counts)
    report = lemma_report(cfg, trials=300)
    assert report["all_pass"]


def test_ratio_definitions_recomputed(lcfg):
    P = 1000.0
    real = realize(lcfg, draw_batch(lcfg, np.arange(20)), P)
    res = cdzf(real, lcfg, hierarchical=True)
    out = cdzf_probe(lcfg, real, res, P)
    H, s = real.H, res.scale
    for t in range(20):
        for i in range(2):
            iw = sum(abs(H[t, i] @ (s * res.W_corrected[t, :, l])) ** 2
                     for l in range(2) if l != i)
            iv = sum(abs(H[t, i] @ (s * res.V[t, :, l])) ** 2
                     for l in range(2) if l != i)
            assert math.isclose(out["FI"][t, i], (1 + P * iw) / (1 + P * iv),
                                rel_tol=1e-12)
            tw = sum(abs(H[t, i] @ (s * res.W_corrected[t, :, l])) ** 2 for l in range(2))
            tv = sum(abs(H[t, i] @ (s * res.V[t, :, l])) ** 2 for l in range(2))
            assert math.isclose(out["FD"][t, i], (1 + P * tv) / (1 + P * tw),
                                rel_tol=1e-12)


def test_ratio_tails_conditioning_and_residual(lcfg):
    tails = estimate_ratio_tails(lcfg, trials=1000, epsilon=0.2)
    assert max(tails["own_view_residual_max"]) <= 1e-8
    assert all(n <= 1000 for n in tails["FI"].trials)
    with pytest.raises(ValueError):
        estimate_ratio_tails(lcfg, trials=10, epsilon=0.6)


def test_gap_moments_shrink(lcfg):
    gap = estimate_precoder_gap_moments(lcfg, trials=1000)
    m = gap["per_tx"][0]["mean_sq"]
    assert all(a > b for a, b in zip(m[:-1], m[1:]))
    assert all(x ** 2 <= y + 1e-15 for x, y in
               zip(gap["per_tx"][0]["mean"], gap["per_tx"][0]["mean_sq"]))


def test_estimators_deterministic(lcfg):
    a = estimate_outage(lcfg, trials=700, hierarchical=True)
    b = estimate_outage(lcfg, trials=700, hierarchical=True, threads=2)
    assert a.counts == b.counts
