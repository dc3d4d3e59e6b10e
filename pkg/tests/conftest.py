import numpy as np
import pytest

from nlkelvin import Domain, KernelSpec, build_mesh, build_operators, build_pairs


def make_ops(n_int=8, ratio=4, family="truncated_tent", dim=2):
    """Operators on the unit box with ``n_int`` Omega cells per axis and delta = ratio * h."""
    h = 1.0 / n_int
    delta = ratio * h
    mesh = build_mesh(Domain.unit(dim), h, delta)
    return build_operators(mesh, build_pairs(mesh, KernelSpec.make(family, delta, dim)))


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ops8():
    return make_ops(8, 4)


@pytest.fixture(scope="session")
def ops16():
    return make_ops(16, 4)
