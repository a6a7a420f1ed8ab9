import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pnfem.mesh import TriMesh, unit_square_mesh
from pnfem.operators import build_isotropic_system

settings.register_profile("pnfem", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pnfem")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_triangles():
    return TriMesh.from_arrays([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                               [[0, 1, 2], [0, 2, 3]])


@pytest.fixture(params=[(1, "two"), (1, "div2"), (3, "two"), (3, "div2")],
                ids=lambda p: f"N{p[0]}-{p[1]}")
def tiny_system(request, two_triangles):
    N, kind = request.param
    mesh = two_triangles if kind == "two" else unit_square_mesh(2)
    return build_isotropic_system(mesh, N, 0.3, 0.7)


def random_unit(rng, n):
    s = rng.standard_normal((n, 3))
    return s / np.linalg.norm(s, axis=1)[:, None]


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Print and remember one PASS/FAIL line per acceptance criterion."""

    def report(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} ({title}): {detail}"
        request.config.stash[ACCEPTANCE].append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
