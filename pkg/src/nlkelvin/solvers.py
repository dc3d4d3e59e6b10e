"""Nonlocal Dirichlet (primal) and Kelvin (mixed) state solves, plus inf-sup diagnostics."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .kernel import ConfigurationError
from .material import AveragingScheme, DesignField, pair_conductivity
from .operators import NonlocalOperators, StructureError

log = logging.getLogger(__name__)

LINEAR_RTOL = 1e-12
RESIDUAL_BOUND = 1e-10


class SolverError(RuntimeError):
    """A linear or eigen solve did not reach its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class SourcePreset(str, enum.Enum):
    CONSTANT = "constant"
    GAUSSIAN_BUMP = "gaussian_bump"
    CHECKERBOARD = "checkerboard"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class SourceField:
    """Heat source sampled at Interior cell centres."""

    values: np.ndarray
    preset: SourcePreset = SourcePreset.CUSTOM

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("source values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "preset", SourcePreset(self.preset))


def make_source(mesh, preset="constant", value=1.0, center=None, width=0.15,
                amplitude=1.0, tiles=4, func=None) -> SourceField:
    """Midpoint samples of a preset source on the Interior cells.

    ``checkerboard`` alternates ``+amplitude`` / ``-amplitude`` on ``tiles``
    tiles per axis; ``custom`` evaluates ``func(x)`` on an (N, dim) array.
    """
    preset = SourcePreset(preset)
    x = mesh.centers[mesh.interior]
    lo = np.asarray(mesh.domain.lo)
    hi = np.asarray(mesh.domain.hi)
    if preset is SourcePreset.CONSTANT:
        f = np.full(len(x), float(value))
    elif preset is SourcePreset.GAUSSIAN_BUMP:
        c = 0.5 * (lo + hi) if center is None else np.asarray(center, dtype=float)
        f = amplitude * np.exp(-np.sum((x - c) ** 2, axis=1) / (2.0 * width ** 2))
    elif preset is SourcePreset.CHECKERBOARD:
        tile = np.floor((x - lo) / (hi - lo) * tiles).astype(int)
        f = amplitude * np.where(tile.sum(axis=1) % 2 == 0, 1.0, -1.0)
    else:
        if func is None:
            raise ConfigurationError("custom source needs a callable")
        f = np.asarray(func(x), dtype=float).reshape(len(x))
    return SourceField(f, preset)


@dataclass(frozen=True, eq=False)
class StateSolution:
    u: np.ndarray                  # Interior temperatures
    energy_primal: float           # Dirichlet energy at u
    q: np.ndarray | None = None    # antisymmetric pair flux (dual solves)
    energy_dual: float | None = None
    kappa_pair: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)

    @property
    def duality_gap(self) -> float:
        if self.energy_dual is None:
            return float("nan")
        return abs(self.energy_dual + self.energy_primal) / max(1.0, abs(self.energy_primal))


def assemble_stiffness(kappa_pair, ops: NonlocalOperators) -> sp.csr_matrix:
    """Matrix of ``a(u, v) = 2 hn^2 sum_p kpair_p (G u)_p (G v)_p`` on Interior unknowns."""
    kappa_pair = np.asarray(kappa_pair, dtype=float)
    g = ops.gradient
    return (2.0 * ops.hn ** 2 * (g.T @ sp.diags(kappa_pair) @ g)).tocsr()


def check_divergence_rank(ops: NonlocalOperators) -> None:
    """Every Interior cell must be linked to the collar through pairs.

    Otherwise a nonzero constant on an isolated component lies in the kernel
    of the gradient and the divergence loses full row rank.
    """
    n = ops.mesh.n_cells
    adj = sp.coo_matrix((np.ones(len(ops.pairs)), (ops.pairs.i, ops.pairs.j)), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    grounded = np.zeros(comp.max() + 1, bool)
    grounded[comp[ops.mesh.labels != 0]] = True
    if not np.all(grounded[comp[ops.mesh.interior]]):
        raise StructureError("divergence is rank deficient: interior cells without a path to the collar")


def _solve_spd(a, b, method="cg", tol=LINEAR_RTOL, x0=None, maxiter=None):
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), [0.0]
    if method == "direct":
        x = spla.spsolve(a.tocsc(), b)
        return x, [np.linalg.norm(b - a @ x) / bnorm]
    if method != "cg":
        raise ConfigurationError(f"unknown linear solver {method!r}")
    diag = a.diagonal()
    precond = spla.LinearOperator(a.shape, matvec=lambda r: r / diag, dtype=float)
    history = []

    def record(xk):
        history.append(np.linalg.norm(b - a @ xk) / bnorm)

    maxiter = maxiter or 20 * a.shape[0] + 100
    x, info = spla.cg(a, b, x0=x0, rtol=tol, atol=0.0, M=precond, maxiter=maxiter, callback=record)
    rel = np.linalg.norm(b - a @ x) / bnorm
    history.append(rel)
    if info != 0 or rel > max(tol, RESIDUAL_BOUND):
        raise SolverError(f"CG stopped at relative residual {rel:.3e} (info={info})", history)
    return x, history


def solve_primal(design: DesignField, f: SourceField, scheme, ops: NonlocalOperators,
                 method="cg", tol=LINEAR_RTOL, x0=None) -> StateSolution:
    """Minimise the nonlocal Dirichlet energy for the given design."""
    scheme = AveragingScheme(scheme)
    kp = pair_conductivity(design, scheme, ops.pairs)
    a = assemble_stiffness(kp, ops)
    load = f.values * ops.hn
    u, history = _solve_spd(a, load, method, tol, x0)
    au = a @ u
    energy = 0.5 * float(u @ au) - float(load @ u)
    res = float(np.linalg.norm(au - load) / max(np.linalg.norm(load), np.finfo(float).tiny))
    return StateSolution(u, energy, kappa_pair=kp,
                         residuals={"linear_solve": res, "iterations": len(history)})


def dual_energy(q, kappa_pair, ops: NonlocalOperators) -> float:
    """Complementary energy ``0.5 <kpair^-1 q, q>_pairs``."""
    q = np.asarray(q, dtype=float)
    return ops.hn ** 2 * float(np.sum(q * q / kappa_pair))


def solve_kelvin(design: DesignField, f: SourceField, scheme, ops: NonlocalOperators,
                 method="cg", tol=LINEAR_RTOL, x0=None) -> StateSolution:
    """Minimise the complementary energy over fluxes with divergence ``f``.

    Solved through the equivalent primal problem; the flux is then
    ``q = -kpair * G u`` and the divergence constraint is re-checked
    independently.
    """
    check_divergence_rank(ops)
    primal = solve_primal(design, f, scheme, ops, method, tol, x0)
    kp = primal.kappa_pair
    q = -kp * ops.apply_gradient(primal.u)
    fnorm = ops.cell_norm(f.values)
    constraint = ops.cell_norm(ops.apply_divergence(q) - f.values)
    rel = constraint / fnorm if fnorm > 0 else constraint
    if rel > RESIDUAL_BOUND:
        raise SolverError(f"divergence constraint violated: relative residual {rel:.3e}")
    # stationarity of the mixed system's first row: kpair^-1 q + G u = 0
    stationarity = float(np.max(np.abs(q / kp + ops.apply_gradient(primal.u)), initial=0.0))
    residuals = dict(primal.residuals, constraint=rel, stationarity=stationarity)
    return StateSolution(primal.u, primal.energy_primal, q, dual_energy(q, kp, ops), kp, residuals)


def kkt_matrices(kappa_pair, ops: NonlocalOperators):
    """Dense blocks of the mixed system ``[W B^T; B 0] [q; u] = [0; -l]``.

    ``W`` is the resistivity-weighted pair mass, ``B`` the matrix of
    ``b(q, v) = -<D q, v>_Omega``.
    """
    w = 2.0 * ops.hn ** 2 / np.asarray(kappa_pair, dtype=float)
    b = -ops.hn * ops.divergence.toarray()
    return w, b


def solve_kelvin_kkt(design: DesignField, f: SourceField, scheme, ops: NonlocalOperators) -> StateSolution:
    """Direct dense solve of the full saddle-point system (small meshes only)."""
    kp = pair_conductivity(design, scheme, ops.pairs)
    w, b = kkt_matrices(kp, ops)
    p, n = len(w), b.shape[0]
    kkt = np.zeros((p + n, p + n))
    kkt[np.arange(p), np.arange(p)] = w
    kkt[p:, :p] = b
    kkt[:p, p:] = b.T
    rhs = np.concatenate([np.zeros(p), -f.values * ops.hn])
    sol = sla.solve(kkt, rhs, assume_a="sym")
    q, u = sol[:p], sol[p:]
    load = f.values * ops.hn
    a = assemble_stiffness(kp, ops)
    primal_energy = 0.5 * float(u @ (a @ u)) - float(load @ u)
    return StateSolution(u, primal_energy, q, dual_energy(q, kp, ops), kp,
                         {"kkt": float(np.linalg.norm(kkt @ sol - rhs))})


def poincare_eigenvalue(ops: NonlocalOperators) -> float:
    """Smallest value of ``|G u|^2_pairs / |u|^2_Omega`` over Interior fields."""
    check_divergence_rank(ops)
    a = (2.0 * ops.hn * (ops.gradient.T @ ops.gradient)).tocsc()
    n = a.shape[0]
    if n <= 400:
        return float(sla.eigvalsh(a.toarray(), subset_by_index=(0, 0))[0])
    try:
        vals = spla.eigsh(a, k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise SolverError(f"eigen-solver failed: {exc}") from exc
    return float(vals[0])


def poincare_constant(ops: NonlocalOperators) -> float:
    """Best constant C in ``|u|_Omega <= C |G u|_pairs``."""
    return float(1.0 / np.sqrt(poincare_eigenvalue(ops)))


def infsup_constant(ops: NonlocalOperators) -> float:
    """Discrete inf-sup value of ``b`` with the graph norm on fluxes.

    The Schur operator ``B M_Q^{-1} B^T`` (``M_Q`` = pair mass plus the
    divergence graph term) shares eigenvectors with ``G^T G``; with ``t`` the
    Poincare eigenvalue its smallest eigenvalue relative to the Omega mass is
    ``t / (1 + t)``.
    """
    t = poincare_eigenvalue(ops)
    return float(np.sqrt(t / (1.0 + t)))


def stability_ratio(solution: StateSolution, f: SourceField, ops: NonlocalOperators) -> float:
    """``(|q|_Q + |u|_Omega) / |f|_Omega`` (0 when f vanishes)."""
    fnorm = ops.cell_norm(f.values)
    if fnorm == 0:
        return 0.0
    if solution.q is None:
        raise ConfigurationError("stability ratio needs a dual solution")
    return (ops.q_norm(solution.q) + ops.cell_norm(solution.u)) / fnorm
