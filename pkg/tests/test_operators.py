import numpy as np
import pytest

from nlkelvin.operators import StructureError
from conftest import make_ops


def test_gradient_divergence_adjoint(ops16, rng):
    for _ in range(20):
        u = rng.normal(size=ops16.mesh.n_interior)
        q = rng.normal(size=len(ops16.pairs))
        lhs = ops16.pair_inner(ops16.apply_gradient(u), q)
        rhs = ops16.cell_inner(u, ops16.apply_divergence(q))
        assert abs(lhs + rhs) <= 1e-12 * ops16.cell_norm(u) * ops16.pair_norm(q)


def test_gradient_of_single_cell_indicator(ops8):
    mesh = ops8.mesh
    k = mesh.n_interior // 2
    u = np.zeros(mesh.n_interior)
    u[k] = 1.0
    g = ops8.apply_gradient(u)
    cell = mesh.interior[k]
    pi, pj, om = ops8.pairs.i, ops8.pairs.j, ops8.pairs.omega
    expected = np.where(pi == cell, om, 0.0) - np.where(pj == cell, om, 0.0)
    assert np.allclose(g, expected, rtol=0, atol=1e-14 * om.max())


def test_divergence_matches_general_two_point_formula(ops8, rng):
    q = rng.normal(size=len(ops8.pairs))
    dense = ops8.two_point_dense(q)
    assert np.allclose(ops8.divergence_two_point(dense), ops8.apply_divergence(q), rtol=1e-12, atol=1e-10)


def test_only_antisymmetric_part_is_seen(ops8, rng):
    n = ops8.mesh.n_cells
    raw = rng.normal(size=(n, n))
    qa = ops8.antisymmetrize(raw)
    v = rng.normal(size=ops8.mesh.n_interior)
    # b(q, v) = -<D q, v>: the symmetric part drops out
    lhs = ops8.cell_inner(ops8.divergence_two_point(raw), v)
    rhs = ops8.cell_inner(ops8.apply_divergence(qa), v)
    assert lhs == pytest.approx(rhs, rel=1e-11)
    assert np.allclose(ops8.divergence_two_point(raw + raw.T), 0.0, atol=1e-9)


def test_recovery_adjointness(ops8, rng):
    q = rng.normal(size=len(ops8.pairs))
    v = rng.normal(size=(ops8.mesh.n_cells, 2))
    lhs = ops8.vector_inner(ops8.flux_recovery(q), v)
    rhs = ops8.pair_inner(q, ops8.adjoint_recovery(v))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_recovery_is_bounded(ops8, rng):
    # |R q|^2 <= C |q|^2 with a constant independent of q (Cauchy-Schwarz bound)
    om = ops8.pairs.omega
    dist2 = np.sum(ops8.pairs.offset ** 2, axis=1)
    row = np.bincount(ops8.pairs.i, om ** 2 * dist2, ops8.mesh.n_cells) \
        + np.bincount(ops8.pairs.j, om ** 2 * dist2, ops8.mesh.n_cells)
    bound = ops8.hn * row.max()
    for _ in range(10):
        q = rng.normal(size=len(ops8.pairs))
        rq = ops8.flux_recovery(q)
        assert ops8.vector_inner(rq, rq) <= bound * ops8.pair_inner(q, q) * (1 + 1e-12)


def test_gradient_has_trivial_kernel(ops8):
    g = ops8.gradient.toarray()
    assert np.linalg.matrix_rank(g) == ops8.mesh.n_interior


def test_poincare_constant_bounded_between_ratios():
    from nlkelvin import poincare_constant

    values = [poincare_constant(make_ops(16, r)) for r in (2, 4)]
    assert max(values) / min(values) < 2.0


def test_collar_values_must_vanish(ops8):
    u = np.ones(ops8.mesh.n_cells)
    with pytest.raises(StructureError):
        ops8.apply_gradient(u)
    with pytest.raises(StructureError):
        ops8.apply_divergence(np.ones(3))
