import numpy as np
import pytest

from netmiso.channel import ScenarioConfig

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg2():
    return ScenarioConfig(M=2, K=2, N=[1, 1], alphas=[1.0, 0.6],
                          snr_grid_db=[20, 30, 40], trials=64, seed=3,
                          alpha_q=0.5, alpha_mu=0.3)


@pytest.fixture
def cfg3():
    return ScenarioConfig(M=3, K=3, N=[2, 1, 1], alphas=[1.0, 0.8, 0.6],
                          snr_grid_db=[25, 40], trials=64, seed=11,
                          alpha_q=0.5, alpha_mu=0.3)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(
            f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
