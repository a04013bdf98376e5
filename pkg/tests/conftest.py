import functools

import numpy as np
import pytest

from qgefem.argyris import build_space
from qgefem.forms import assemble_linear_forms
from qgefem.mesh import generate_rectangle_mesh


@functools.lru_cache(maxsize=None)
def unit_square(n):
    """Space and assembled forms on the unit square with ``n`` cells per side."""
    space = build_space(generate_rectangle_mesh(1.0, 1.0, n, n))
    return space, assemble_linear_forms(space)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[2, 4, 8], ids=lambda n: f"h=1/{n}")
def square(request):
    return unit_square(request.param)


def random_constrained(space, rng, size=None):
    """Random coefficient vector with zero constrained entries."""
    shape = (space.n_dofs,) if size is None else (size, space.n_dofs)
    return np.where(space.constrained, 0.0, rng.standard_normal(shape))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
