import numpy as np
import pytest

from sampdesign.frame import PopulationFrame, grid_frame


def max_z(freq, target, R):
    """Largest studentized deviation of empirical frequencies from target."""
    target = np.asarray(target, dtype=float)
    sd = np.sqrt(target * (1 - target) / R)
    dev = np.asarray(freq) - target
    z = np.where(sd > 0, dev / np.where(sd > 0, sd, 1), np.where(dev == 0, 0, np.inf))
    return float(np.max(np.abs(z)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid40():
    return grid_frame(40, "coords_and_one")


@pytest.fixture(scope="session")
def grid10():
    return grid_frame(10, "coords_and_one")


def small_frame(N=6, seed=0, strata=None, sigma=None):
    r = np.random.default_rng(seed)
    coords = r.uniform(0, 10, size=(N, 2))
    aux = np.column_stack([np.ones(N), r.uniform(1, 5, N)])
    return PopulationFrame(
        unit_ids=[f"u{k}" for k in range(N)], aux=aux, aux_names=("one", "size"),
        coords=coords, coord_names=("x", "y"),
        strata=None if strata is None else np.asarray(strata),
        stratum_labels=None if strata is None else tuple(str(h) for h in sorted(set(strata))),
        sigma=None if sigma is None else np.asarray(sigma, dtype=float),
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance"):
            lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
