"""Discrete nonlocal calculus on a pair list.

Conventions (midpoint quadrature, cell measure ``hn = h**n``):

* cell fields ``u`` live on Interior cells and are extended by zero;
* two-point fluxes are stored once per unordered pair (i < j), the value at
  (j, i) being the negative of the stored one;
* ``<u, v>_Omega = hn * sum(u * v)``;
* ``<q, p>_pairs = 2 * hn**2 * sum(q * p)`` (both orderings of each pair).

The divergence is assembled as the negative adjoint of the gradient under
these inner products, so integration by parts holds to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import Mesh, PairList


class StructureError(ValueError):
    """Arrays do not belong to the same mesh or pair list."""


@dataclass(frozen=True, eq=False)
class NonlocalOperators:
    mesh: Mesh
    pairs: PairList

    @property
    def hn(self) -> float:
        return self.mesh.cell_measure

    @cached_property
    def gradient_full(self) -> sp.csr_matrix:
        """(P, N_all) matrix of ``u -> (u_i - u_j) w_ij``."""
        p = len(self.pairs)
        rows = np.concatenate([np.arange(p), np.arange(p)])
        cols = np.concatenate([self.pairs.i, self.pairs.j])
        vals = np.concatenate([self.pairs.omega, -self.pairs.omega])
        return sp.csr_matrix((vals, (rows, cols)), shape=(p, self.mesh.n_cells))

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        """Gradient restricted to Interior unknowns (collar values are zero)."""
        return self.gradient_full[:, self.mesh.interior].tocsr()

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        """(N_int, P) matrix with ``<D q, u> = -<q, G u>``."""
        return (-2.0 * self.hn * self.gradient.T).tocsr()

    def _as_interior(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[0] == self.mesh.n_interior:
            return u
        if u.shape[0] == self.mesh.n_cells:
            collar = np.ones(self.mesh.n_cells, bool)
            collar[self.mesh.interior] = False
            if np.any(u[collar] != 0):
                raise StructureError("cell field must vanish on the collar")
            return u[self.mesh.interior]
        raise StructureError(f"cell field of length {u.shape[0]} does not match the mesh")

    def _check_flux(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[0] != len(self.pairs):
            raise StructureError(f"pair flux of length {q.shape[0]} does not match {len(self.pairs)} pairs")
        return q

    def apply_gradient(self, u) -> np.ndarray:
        return self.gradient @ self._as_interior(u)

    def apply_divergence(self, q) -> np.ndarray:
        return self.divergence @ self._check_flux(q)

    def cell_inner(self, u, v) -> float:
        return self.hn * float(np.dot(np.ravel(u), np.ravel(v)))

    def pair_inner(self, q, p) -> float:
        q, p = self._check_flux(q), self._check_flux(p)
        return 2.0 * self.hn ** 2 * float(np.dot(q, p))

    def pair_norm(self, q) -> float:
        return float(np.sqrt(self.pair_inner(q, q)))

    def cell_norm(self, u) -> float:
        return float(np.sqrt(self.cell_inner(u, u)))

    def q_norm(self, q) -> float:
        """Graph norm ``(|q|^2 + |D q|^2)^(1/2)``."""
        return float(np.sqrt(self.pair_inner(q, q) + self.cell_norm(self.apply_divergence(q)) ** 2))

    def flux_recovery(self, q) -> np.ndarray:
        """Local vector flux ``(R q)_i = sum_j (x_i - x_j) q(x_i, x_j) w_ij hn`` on every cell."""
        q = self._check_flux(q)
        contrib = self.pairs.offset * (q * self.pairs.omega * self.hn)[:, None]
        out = np.zeros((self.mesh.n_cells, self.mesh.dim))
        # antisymmetry makes the (j, i) contribution equal to the (i, j) one
        for axis in range(self.mesh.dim):
            out[:, axis] = (np.bincount(self.pairs.i, contrib[:, axis], self.mesh.n_cells)
                            + np.bincount(self.pairs.j, contrib[:, axis], self.mesh.n_cells))
        return out

    def adjoint_recovery(self, v) -> np.ndarray:
        """Two-point flux ``0.5 (v_i + v_j) . (x_i - x_j) w_ij`` from a vector field on all cells."""
        v = np.asarray(v, dtype=float).reshape(self.mesh.n_cells, self.mesh.dim)
        avg = 0.5 * (v[self.pairs.i] + v[self.pairs.j])
        return np.einsum("pk,pk->p", avg, self.pairs.offset) * self.pairs.omega

    def vector_inner(self, v, w) -> float:
        """L2 inner product of vector fields over all cells of the extended domain."""
        return self.hn * float(np.sum(np.asarray(v) * np.asarray(w)))

    def row_energy(self, q) -> np.ndarray:
        """Per-cell weights ``m_i = hn * sum_j q_ij^2`` over all neighbours of i."""
        q2 = self._check_flux(q) ** 2 * self.hn
        n = self.mesh.n_cells
        return np.bincount(self.pairs.i, q2, n) + np.bincount(self.pairs.j, q2, n)

    def two_point_dense(self, q) -> np.ndarray:
        """Expand stored antisymmetric values into an (N, N) array (small meshes only)."""
        q = self._check_flux(q)
        n = self.mesh.n_cells
        out = np.zeros((n, n))
        out[self.pairs.i, self.pairs.j] = q
        out[self.pairs.j, self.pairs.i] = -q
        return out

    def omega_dense(self) -> np.ndarray:
        n = self.mesh.n_cells
        w = np.zeros((n, n))
        w[self.pairs.i, self.pairs.j] = self.pairs.omega
        w[self.pairs.j, self.pairs.i] = self.pairs.omega
        return w

    def divergence_two_point(self, raw) -> np.ndarray:
        """``sum_j [q(x_j, x_i) - q(x_i, x_j)] w_ij hn`` for a general dense two-point array."""
        raw = np.asarray(raw, dtype=float)
        w = self.omega_dense()
        full = np.sum((raw.T - raw) * w, axis=1) * self.hn
        return full[self.mesh.interior]

    def antisymmetrize(self, raw) -> np.ndarray:
        """Antisymmetric part of a dense two-point array, packed into pair storage."""
        raw = np.asarray(raw, dtype=float)
        n = self.mesh.n_cells
        if raw.shape != (n, n):
            raise StructureError(f"expected an ({n}, {n}) array")
        return 0.5 * (raw[self.pairs.i, self.pairs.j] - raw[self.pairs.j, self.pairs.i])


def build_operators(mesh: Mesh, pairs: PairList) -> NonlocalOperators:
    if pairs.n_cells != mesh.n_cells:
        raise StructureError("pair list was built for a different mesh")
    return NonlocalOperators(mesh, pairs)
