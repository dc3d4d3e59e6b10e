import warnings

import numpy as np
import pytest

from nlkelvin import Bounds, DesignField, kappa_subproblem, make_source, optimize_design, verify_saddle
from nlkelvin.design import ConvergenceWarning, OptimizerError, random_admissible
from nlkelvin.material import check_admissible
from nlkelvin.solvers import SourceField
from oracles import grid_search_subproblem, nonlocal_primal_oracle
from conftest import make_ops


def objective(m, k):
    return float(np.sum(m / k))


def test_subproblem_worked_example():
    b = Bounds(1.0, 2.0, 1.4)
    m = np.array([0.0, 1.0, 4.0, 9.0, 16.0])
    k = kappa_subproblem(m, b, 7.0, 1.0)
    assert np.allclose(k, [1.0, 1.0, 1.2, 1.8, 2.0], atol=1e-12)
    assert objective(m, k) == pytest.approx(17.0 + 1 / 3, rel=1e-12)
    k_grid, v_grid = grid_search_subproblem(m, b, 7.0, 1.0)
    assert v_grid == pytest.approx(objective(m, k), rel=1e-9)


def test_subproblem_against_grid_search():
    rng = np.random.default_rng(7)
    b = Bounds(1.0, 2.0, 1.4)
    for _ in range(10):
        m = rng.uniform(0, 10, 5) ** 2
        budget = round(rng.uniform(5.2, 9.8), 3)    # on the search grid
        k = kappa_subproblem(m, b, budget, 1.0)
        _, v_grid = grid_search_subproblem(m, b, budget, 1.0)
        v = objective(m, k)
        assert v <= v_grid * (1 + 1e-12)
        assert (v_grid - v) / v <= 1e-6
        assert np.sum(k) <= budget * (1 + 1e-12)


def test_subproblem_slack_budget_saturates_box():
    b = Bounds(1.0, 2.0, 1.4)
    k = kappa_subproblem(np.ones(4), b, 100.0, 1.0)
    assert np.all(k == 2.0)
    assert np.all(kappa_subproblem(np.zeros(4), b, 5.0, 1.0) == 1.0)


def test_subproblem_is_permutation_equivariant():
    b = Bounds(0.5, 3.0, 1.0)
    rng = np.random.default_rng(1)
    m = rng.uniform(0, 1, 20)
    perm = rng.permutation(20)
    k = kappa_subproblem(m, b, 25 * 0.05, 0.05)
    assert np.allclose(kappa_subproblem(m[perm], b, 25 * 0.05, 0.05), k[perm], rtol=1e-12)
    # equal weights give equal conductivities
    assert np.ptp(kappa_subproblem(np.ones(7), b, 7 * 1.5, 1.0)) < 1e-12


def test_subproblem_rejects_bad_input():
    with pytest.raises(OptimizerError):
        kappa_subproblem(np.array([1.0, -1.0]), Bounds(), 3.0, 1.0)
    with pytest.raises(OptimizerError):
        kappa_subproblem(np.array([1.0, 1.0]), Bounds(), 1.0, 1.0)


@pytest.fixture(scope="module")
def optimum():
    ops = make_ops(8, 4)
    f = make_source(ops.mesh)
    return ops, f, optimize_design(f, ops, Bounds(), rel_tol=1e-10, max_iters=500)


def test_optimizer_matches_primal_sqp_oracle(optimum):
    ops, f, res = optimum
    _, value = nonlocal_primal_oracle(ops, Bounds(), f.values)
    assert res.d_value == pytest.approx(-value, rel=1e-8)


def test_optimizer_descent_and_volume(optimum):
    _, _, res = optimum
    h = np.asarray(res.descent_history)
    assert np.all(np.diff(h) <= 1e-12 * abs(h[0]))
    assert res.converged
    assert abs(res.volume_slack) <= 1e-8
    assert check_admissible(res.design).admissible


def test_saddle_point_check(optimum):
    ops, f, res = optimum
    report = verify_saddle(res, f, ops, n_probes=10)
    assert report.ok, report


def test_two_starts_agree(optimum):
    ops, f, res = optimum
    start = random_admissible(DesignField.uniform(ops.mesh, Bounds()), np.random.default_rng(3), 0.4)
    other = optimize_design(f, ops, Bounds(), initial=start, rel_tol=1e-10, max_iters=500)
    assert abs(other.d_value - res.d_value) <= 1e-6 * abs(res.d_value)


def test_zero_source_returns_zero():
    ops = make_ops(6, 2)
    res = optimize_design(SourceField(np.zeros(ops.mesh.n_interior)), ops, Bounds())
    assert res.d_value == 0.0 and res.iterations == 1


def test_inadmissible_start_rejected():
    ops = make_ops(6, 2)
    with pytest.raises(OptimizerError):
        optimize_design(make_source(ops.mesh), ops, Bounds(), initial=DesignField.uniform(ops.mesh, Bounds(), 1.9))


def test_iteration_cap_warns():
    ops = make_ops(6, 2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = optimize_design(make_source(ops.mesh, "gaussian_bump"), ops, Bounds(), max_iters=1)
    assert not res.converged
    assert any(issubclass(w.category, ConvergenceWarning) for w in caught)
