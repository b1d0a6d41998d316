import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qucont.geometry import build_grid, sample_metric, sample_weight
from qucont.operator import assemble
from qucont.spectral import eigendecompose

settings.register_profile("qucont", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qucont")


@pytest.fixture(scope="session")
def grid1d():
    return build_grid(1, [[0.0, np.pi]], [101])


@pytest.fixture(scope="session")
def basis1d(grid1d):
    g = sample_metric("identity", grid1d)
    return eigendecompose(assemble(g, grid1d))


@pytest.fixture(scope="session")
def basis1d_q(grid1d):
    """Same grid with the potential q = -1."""
    g = sample_metric("identity", grid1d)
    return eigendecompose(assemble(g, grid1d, np.full(grid1d.num_nodes, -1.0)))


@pytest.fixture(scope="session")
def grid2d():
    return build_grid(2, [[0.0, np.pi], [0.0, np.pi]], [17, 17])


@pytest.fixture(scope="session")
def metric2d(grid2d):
    spec = {"kind": "full", "entries": [
        [{"form": "sin", "params": [1.2, 0.2, 1.0, 0]}, {"form": "affine", "params": [0.05, 0.02, -0.01]}],
        [0.0, {"form": "cos", "params": [1.0, 0.3, 1.0, 1]}],
    ]}
    return sample_metric(spec, grid2d)


@pytest.fixture(scope="session")
def basis2d(grid2d, metric2d):
    return eigendecompose(assemble(metric2d, grid2d))


@pytest.fixture(scope="session")
def weight1d(grid1d):
    return sample_weight({"form": "sqdist", "params": [-1.0]}, grid1d)


def random_unit(rng, basis, cutoff=10, complex_=False):
    c = np.zeros(basis.size, dtype=complex if complex_ else float)
    c[:cutoff] = rng.standard_normal(cutoff)
    if complex_:
        c[:cutoff] += 1j * rng.standard_normal(cutoff)
    c /= np.linalg.norm(c)
    return basis.synthesize(c)


ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, title, passed, detail)``."""
    def record(number, title, passed, detail=""):
        ACCEPTANCE.append((number, title, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")
