"""Local reference problems: cell-centred finite differences on Omega.

Face conductivities are harmonic means of the adjacent cells (the cell
itself on boundary faces), mirroring the harmonic pair averaging of the
nonlocal model. The complementary energy is evaluated on face fluxes,

    I_loc = 0.5 * sum_f V_f F_f^2 / kappa_f = 0.5 * sum_i m_i / kappa_i * hn,
    m_i = 0.5 * sum_{faces f of i} F_f^2,

which equals minus the Dirichlet energy at the discrete solution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .design import ConvergenceWarning, OptimizerError, DESCENT_SLACK, kappa_subproblem
from .geometry import Mesh
from .kernel import ConfigurationError
from .material import Bounds, DesignField
from .solvers import LINEAR_RTOL, SourceField, _solve_spd


@dataclass(frozen=True, eq=False)
class LocalGrid:
    """Finite-difference operators on the Interior cells of a mesh."""

    shape: tuple
    h: float
    measure: float   # |Omega|

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "LocalGrid":
        return cls(mesh.interior_shape, mesh.h, mesh.domain.measure)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def hn(self) -> float:
        return self.h ** self.dim

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def faces(self):
        """Per axis: (difference matrix, lo cell ids, hi cell ids, face volumes).

        Face ``f`` along an axis sits between cells ``lo[f]`` and ``hi[f]``; a
        missing neighbour (boundary face) is marked ``-1``.
        """
        ids = np.arange(self.n_cells).reshape(self.shape)
        out = []
        for axis in range(self.dim):
            n_ax = self.shape[axis]
            pad = [(0, 0)] * self.dim
            pad[axis] = (1, 1)
            padded = np.pad(ids, pad, constant_values=-1)
            lo = np.take(padded, np.arange(0, n_ax + 1), axis=axis).ravel()
            hi = np.take(padded, np.arange(1, n_ax + 2), axis=axis).ravel()
            boundary = (lo < 0) | (hi < 0)
            dist = np.where(boundary, 0.5 * self.h, self.h)
            volume = np.where(boundary, 0.5 * self.hn, self.hn)
            rows, cols, vals = [], [], []
            nf = len(lo)
            for cells, sign in ((hi, 1.0), (lo, -1.0)):
                ok = cells >= 0
                rows.append(np.flatnonzero(ok))
                cols.append(cells[ok])
                vals.append(sign / dist[ok])
            diff = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(nf, self.n_cells))
            out.append((diff, lo, hi, volume))
        return out

    def face_conductivity(self, kappa):
        res = []
        for _, lo, hi, _ in self.faces:
            kl = np.where(lo >= 0, kappa[np.maximum(lo, 0)], 0.0)
            kh = np.where(hi >= 0, kappa[np.maximum(hi, 0)], 0.0)
            inner = (lo >= 0) & (hi >= 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                harm = np.where(inner, 2.0 * kl * kh / (kl + kh), kl + kh)
            res.append(harm)
        return res

    def stiffness(self, kappa) -> sp.csr_matrix:
        a = sp.csr_matrix((self.n_cells, self.n_cells))
        for (diff, _, _, vol), kf in zip(self.faces, self.face_conductivity(kappa)):
            a = a + diff.T @ sp.diags(vol * kf) @ diff
        return a.tocsr()

    def face_fluxes(self, kappa, u):
        return [-kf * (diff @ u) for (diff, _, _, _), kf in zip(self.faces, self.face_conductivity(kappa))]

    def cell_weights(self, fluxes) -> np.ndarray:
        """``m_i = 0.5 * sum of squared fluxes on the faces of cell i``."""
        m = np.zeros(self.n_cells)
        for (_, lo, hi, _), flux in zip(self.faces, fluxes):
            half = 0.5 * flux ** 2
            m += np.bincount(lo[lo >= 0], half[lo >= 0], self.n_cells)
            m += np.bincount(hi[hi >= 0], half[hi >= 0], self.n_cells)
        return m

    def cell_average(self, fluxes) -> np.ndarray:
        q = np.zeros((self.n_cells, self.dim))
        for axis, ((_, lo, hi, _), flux) in enumerate(zip(self.faces, fluxes)):
            q[:, axis] += 0.5 * np.bincount(lo[lo >= 0], flux[lo >= 0], self.n_cells)
            q[:, axis] += 0.5 * np.bincount(hi[hi >= 0], flux[hi >= 0], self.n_cells)
        return q


@dataclass(frozen=True, eq=False)
class LocalSolution:
    u: np.ndarray
    flux: np.ndarray          # cell-averaged q = -kappa grad u, shape (N, dim)
    face_fluxes: list
    energy_primal: float
    energy_dual: float
    residuals: dict = field(default_factory=dict)


def _interior_kappa(kappa, grid: LocalGrid) -> np.ndarray:
    if isinstance(kappa, DesignField):
        kappa = kappa.interior_kappa
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (grid.n_cells,):
        raise ConfigurationError("local conductivity must have one value per Omega cell")
    return kappa


def solve_local(kappa, f: SourceField, grid: LocalGrid, method="cg", tol=LINEAR_RTOL, x0=None) -> LocalSolution:
    """Finite-difference solve of ``-div(kappa grad u) = f`` with ``u = 0`` on the boundary."""
    kappa = _interior_kappa(kappa, grid)
    a = grid.stiffness(kappa)
    load = f.values * grid.hn
    u, history = _solve_spd(a, load, method, tol, x0)
    au = a @ u
    primal = 0.5 * float(u @ au) - float(load @ u)
    fluxes = grid.face_fluxes(kappa, u)
    dual = 0.5 * grid.hn * float(np.sum(grid.cell_weights(fluxes) / kappa))
    lnorm = np.linalg.norm(load)
    res = float(np.linalg.norm(au - load) / lnorm) if lnorm > 0 else 0.0
    return LocalSolution(u, grid.cell_average(fluxes), fluxes, primal, dual,
                         {"linear_solve": res, "iterations": len(history)})


def divergence_residual(q, f: SourceField, mesh: Mesh) -> float:
    """``|div_h q - f|`` over Omega with centred differences.

    ``q`` may be given on every mesh cell (e.g. a recovered nonlocal flux, in
    which case collar values feed the differences at the boundary of Omega)
    or on the Omega cells only (one-sided differences at the edges).
    """
    q = np.asarray(q, dtype=float)
    dim = mesh.dim
    if q.shape[0] == mesh.n_cells:
        grid = mesh.to_grid(q)
        inner = tuple(slice(mesh.pad, s - mesh.pad) for s in mesh.shape)
    elif q.shape[0] == mesh.n_interior:
        grid = mesh.to_grid(q, interior_only=True)
        inner = tuple(slice(None) for _ in range(dim))
    else:
        raise ConfigurationError("vector field does not match the mesh")
    div = sum(np.gradient(grid[..., k], mesh.h, axis=k) for k in range(dim))
    div = div[inner].ravel()
    return float(np.sqrt(mesh.cell_measure * np.sum((div - f.values) ** 2)))


@dataclass(frozen=True, eq=False)
class LocalDesignResult:
    kappa: np.ndarray
    solution: LocalSolution
    d_star: float
    iterations: int
    converged: bool
    descent_history: list


def optimize_local_design(f: SourceField, grid: LocalGrid, bounds: Bounds, initial=None,
                          max_iters: int = 500, rel_tol: float = 1e-7, method: str = "cg") -> LocalDesignResult:
    """Same alternating scheme as the nonlocal optimiser, on the finite-difference model."""
    kappa = np.full(grid.n_cells, bounds.gamma) if initial is None else _interior_kappa(initial, grid).copy()
    budget = bounds.gamma * grid.measure
    if not np.any(f.values):
        sol = solve_local(kappa, f, grid)
        return LocalDesignResult(kappa, sol, 0.0, 1, True, [0.0])
    history = []
    u = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        sol = solve_local(kappa, f, grid, method=method, x0=u)
        u = sol.u
        history.append(sol.energy_dual)
        m = grid.cell_weights(sol.face_fluxes)
        kappa = kappa_subproblem(m, bounds, budget, grid.hn)
        value = 0.5 * grid.hn * float(np.sum(m / kappa))
        history.append(value)
        drops = np.diff(history[-3:])
        if np.any(drops > DESCENT_SLACK * max(1.0, abs(history[0]))):
            raise OptimizerError(f"local objective increased by {drops.max():.3e} at iteration {it}")
        if it > 1 and abs(history[-3] - value) <= rel_tol * abs(value):
            converged = True
            break
    sol = solve_local(kappa, f, grid, method=method, x0=u)
    history.append(sol.energy_dual)
    if not converged:
        warnings.warn(f"local design optimisation stopped after {max_iters} iterations", ConvergenceWarning)
    return LocalDesignResult(kappa, sol, sol.energy_dual, it, converged, history)
