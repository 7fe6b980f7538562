import numpy as np
import pytest

from bvscal import UQDataset


def pytest_configure(config):
    config._acceptance_results = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in sorted(results, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {crit}: {status}  {detail}")


def make_calibrated(m, seed=0, features=True, decades=1.0):
    rng = np.random.default_rng(seed)
    u = 10 ** rng.uniform(-1.0, -1.0 + decades, m)
    e = rng.normal(0.0, 1.0, m) * u
    feats = {}
    if features:
        feats = {"X1": rng.choice(np.arange(16.0, 200.0, 2.0), m), "X2": rng.uniform(0, 1, m)}
    return UQDataset(e, u, feats)


@pytest.fixture
def calibrated_small():
    return make_calibrated(500, seed=3)


@pytest.fixture
def miscalibrated():
    """u-dependent miscalibration: the true error scale is a(u) * u."""
    rng = np.random.default_rng(11)
    m = 2000
    u = 10 ** rng.uniform(-2, -1, m)
    a = 0.5 + 10.0 * u
    e = rng.normal(0, 1, m) * a * u
    return UQDataset(e, u, {"X1": rng.uniform(10, 100, m), "X2": rng.uniform(0, 1, m)})
