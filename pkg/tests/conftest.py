import math

import numpy as np
import pytest

from entroflow.flow import KernelSpec, heat_kernel
from entroflow.manifold import attach_weight, build_flat_torus, build_sphere
from entroflow.operators import assemble_laplacian, low_spectrum

TWO_PI = 2.0 * math.pi

# filled by the acceptance suite, echoed at the end of the session
CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


class Setup:
    """Manifold, operator and complete spectrum, with a kernel helper."""

    def __init__(self, manifold, measure="mu"):
        self.manifold = manifold
        self.op = assemble_laplacian(manifold, measure)
        self.spectrum = low_spectrum(self.op, manifold.vertex_count)

    def kernel(self, t, source=0):
        return heat_kernel(self.spectrum, KernelSpec(source, self.spectrum.k, self.op.measure), t)


def torus(res, n=2, L=TWO_PI):
    return build_flat_torus([res] * n, [L] * n)


@pytest.fixture(scope="session")
def torus16():
    return Setup(torus(16))


@pytest.fixture(scope="session")
def torus32():
    return Setup(torus(32))


@pytest.fixture(scope="session")
def weighted32():
    M = torus(32)
    h = M.evaluate(lambda x, y: 0.3 * np.cos(x))
    return Setup(attach_weight(M, h, 4.0), "nu")


@pytest.fixture(scope="session")
def sphere2():
    return Setup(build_sphere(2, 1.0))
