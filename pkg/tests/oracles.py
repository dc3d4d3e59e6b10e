"""Independent reference computations used by the tests.

None of these share code paths with the production solvers beyond the
assembled gradient matrix and mesh geometry.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.optimize import Bounds as BoxBounds, LinearConstraint, minimize


def brute_force_pairs(centers, delta):
    """All (i, j), i < j, with |x_i - x_j| < delta, by direct O(N^2) enumeration."""
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=-1))
    i, j = np.nonzero((dist < delta * (1 - 1e-9)) & (dist > 0))
    keep = i < j
    return set(zip(i[keep].tolist(), j[keep].tolist()))


def nullspace_kelvin(ops, kappa_pair, f):
    """Minimise 0.5 q^T W q subject to D q = f by an explicit null-space basis."""
    w = 2.0 * ops.hn ** 2 / kappa_pair
    d = ops.divergence.toarray()
    q_part = np.linalg.lstsq(d, f, rcond=None)[0]
    z = sla.null_space(d)
    h = z.T @ (w[:, None] * z)
    y = np.linalg.solve(h, -z.T @ (w * q_part))
    q = q_part + z @ y
    return q, 0.5 * float(q @ (w * q))


def dense_two_point_kelvin(ops, kappa, f):
    """Kelvin problem over *unconstrained* two-point fluxes (both orderings stored).

    Unknowns are q(x_i, x_j) for every ordered interacting pair; the
    divergence uses the general formula sum_j [q(j, i) - q(i, j)] w_ij hn.
    Returns the dense (N, N) optimal flux.
    """
    mesh = ops.mesh
    n = mesh.n_cells
    ii = np.concatenate([ops.pairs.i, ops.pairs.j])
    jj = np.concatenate([ops.pairs.j, ops.pairs.i])
    om = np.concatenate([ops.pairs.omega, ops.pairs.omega])
    kinv = 0.5 * (1.0 / kappa[ii] + 1.0 / kappa[jj])
    p = len(ii)
    pos = -np.ones(n, dtype=int)
    pos[mesh.interior] = np.arange(mesh.n_interior)
    # entry (i, j) enters row i with -w hn and row j with +w hn
    d = np.zeros((mesh.n_interior, p))
    for col, (a, b, w) in enumerate(zip(ii, jj, om)):
        if pos[a] >= 0:
            d[pos[a], col] -= w * ops.hn
        if pos[b] >= 0:
            d[pos[b], col] += w * ops.hn
    wdiag = ops.hn ** 2 * kinv
    k = np.zeros((p + mesh.n_interior,) * 2)
    k[np.arange(p), np.arange(p)] = wdiag
    k[p:, :p] = d
    k[:p, p:] = d.T
    rhs = np.concatenate([np.zeros(p), f])
    sol = np.linalg.lstsq(k, rhs, rcond=None)[0]
    dense = np.zeros((n, n))
    dense[ii, jj] = sol[:p]
    return dense


def schur_infsup_dense(ops):
    """inf-sup value from the explicit Schur complement B M_Q^{-1} B^T."""
    d = ops.divergence.toarray()
    p = d.shape[1]
    m_q = 2.0 * ops.hn ** 2 * np.eye(p) + ops.hn * d.T @ d
    b = -ops.hn * d
    schur = b @ np.linalg.solve(m_q, b.T)
    m_omega = ops.hn * np.eye(d.shape[0])
    lam = sla.eigh(schur, m_omega, eigvals_only=True)[0]
    return float(np.sqrt(lam))


def nonlocal_primal_oracle(ops, bounds, f):
    """max over admissible kappa of min_u I(kpair; u), harmonic pairs; returns (kappa, value)."""
    mesh = ops.mesh
    g = ops.gradient.toarray()
    load = f * ops.hn
    pi, pj = ops.pairs.i, ops.pairs.j

    def value_and_grad(kappa):
        a, b = kappa[pi], kappa[pj]
        kp = 2 * a * b / (a + b)
        stiff = 2 * ops.hn ** 2 * g.T @ (kp[:, None] * g)
        u = sla.solve(stiff, load, assume_a="pos")
        val = -0.5 * float(load @ u)
        gu2 = (g @ u) ** 2 * ops.hn ** 2
        grad = np.bincount(pi, gu2 * 2 * b * b / (a + b) ** 2, mesh.n_cells) \
            + np.bincount(pj, gu2 * 2 * a * a / (a + b) ** 2, mesh.n_cells)
        return val, grad

    # the energy is nondecreasing in kappa, so the collar sits at kappa_max
    base = np.full(mesh.n_cells, bounds.kappa_max)
    return sqp_design(value_and_grad, base, mesh.interior, bounds, bounds.gamma * mesh.domain.measure,
                      mesh.cell_measure)


def local_primal_oracle(grid, bounds, f):
    """Same as above for the finite-difference model, using the face structure of ``grid``."""
    load = f * grid.hn
    faces = grid.faces

    def value_and_grad(kappa):
        stiff = grid.stiffness(kappa).toarray()
        u = sla.solve(stiff, load, assume_a="pos")
        val = -0.5 * float(load @ u)
        grad = np.zeros(grid.n_cells)
        for diff, lo, hi, vol in faces:
            g2 = 0.5 * vol * (diff @ u) ** 2
            inner = (lo >= 0) & (hi >= 0)
            a = kappa[np.maximum(lo, 0)]
            b = kappa[np.maximum(hi, 0)]
            da = np.where(inner, 2 * b * b / (a + b) ** 2, 1.0)
            db = np.where(inner, 2 * a * a / (a + b) ** 2, 1.0)
            grad += np.bincount(lo[lo >= 0], (g2 * da)[lo >= 0], grid.n_cells)
            grad += np.bincount(hi[hi >= 0], (g2 * db)[hi >= 0], grid.n_cells)
        return val, grad

    return sqp_design(value_and_grad, np.zeros(grid.n_cells), np.arange(grid.n_cells), bounds,
                      bounds.gamma * grid.measure, grid.hn)


def sqp_design(value_and_grad, base, free, bounds, budget, cell_measure):
    """Maximise a concave design objective over ``free`` cells with SLSQP; returns (kappa, value)."""

    def neg(x):
        k = base.copy()
        k[free] = x
        val, grad = value_and_grad(k)
        scale = 1.0 / abs(val0)
        return -val * scale, -grad[free] * scale

    k0 = base.copy()
    k0[free] = bounds.gamma
    val0, _ = value_and_grad(k0)
    res = minimize(neg, k0[free], jac=True, method="SLSQP",
                   bounds=BoxBounds(bounds.kappa_min, bounds.kappa_max),
                   constraints=[LinearConstraint(np.full((1, len(free)), cell_measure), -np.inf, budget)],
                   options={"ftol": 1e-15, "maxiter": 1000})
    k = base.copy()
    k[free] = np.clip(res.x, bounds.kappa_min, bounds.kappa_max)
    return k, value_and_grad(k)[0]


def grid_search_subproblem(weights, bounds, budget, cell_measure, step=1e-3):
    """Exhaustive minimum of sum m_i / kappa_i over kappa_i in {kmin + k step}.

    Dynamic programming over the discretised volume makes the enumeration
    exact over the grid. Returns (kappa, objective).
    """
    levels = np.arange(bounds.kappa_min, bounds.kappa_max + 0.5 * step, step)
    units_max = int(round((budget / cell_measure - len(weights) * bounds.kappa_min) / step))
    inf = np.inf
    best = np.full(units_max + 1, inf)
    best[0] = 0.0
    choices = []
    for m in weights:
        cost = m / levels
        new = np.full_like(best, inf)
        arg = np.zeros(len(best), dtype=int)
        for k, c in enumerate(cost):
            if k > units_max:
                break
            cand = np.full_like(best, inf)
            cand[k:] = best[: len(best) - k] + c
            better = cand < new
            new[better] = cand[better]
            arg[better] = k
        best = new
        choices.append(arg)
    b = int(np.argmin(best))
    value = float(best[b])
    ks = []
    for arg in reversed(choices):
        k = int(arg[b])
        ks.append(k)
        b -= k
    kappa = levels[np.array(ks[::-1])]
    return kappa, value


def dense_kkt_oracle(ops, kappa_pair, f):
    """Saddle system assembled entry by entry from the pair list; returns (q, u).

    Row i of the divergence collects sum_j [q(j, i) - q(i, j)] w_ij hn, which for
    antisymmetric storage is -2 q_p w_p hn at i and +2 q_p w_p hn at j.
    """
    mesh = ops.mesh
    hn = ops.hn
    pos = -np.ones(mesh.n_cells, dtype=int)
    pos[mesh.interior] = np.arange(mesh.n_interior)
    p, n = len(ops.pairs), mesh.n_interior
    div = np.zeros((n, p))
    for col, (a, b, w) in enumerate(zip(ops.pairs.i, ops.pairs.j, ops.pairs.omega)):
        if pos[a] >= 0:
            div[pos[a], col] -= 2 * w * hn
        if pos[b] >= 0:
            div[pos[b], col] += 2 * w * hn
    # pair inner product 2 hn^2 sum q p / kpair, b(q, v) = -<D q, v>
    k = np.zeros((p + n, p + n))
    k[np.arange(p), np.arange(p)] = 2 * hn ** 2 / kappa_pair
    k[p:, :p] = -hn * div
    k[:p, p:] = -hn * div.T
    rhs = np.concatenate([np.zeros(p), -hn * np.asarray(f)])
    sol = np.linalg.solve(k, rhs)
    return sol[:p], sol[p:]
