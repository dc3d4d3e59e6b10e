"""Optimal conductivity design by alternating minimisation of the dual energy.

Under harmonic averaging the complementary energy separates per cell,

    I(kappa, q) = 0.5 * sum_i m_i / kappa_i * hn,   m_i = hn * sum_j q_ij^2,

so the design block is a water-filling problem with one scalar multiplier.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .material import AveragingScheme, Bounds, DesignField, check_admissible
from .operators import NonlocalOperators
from .solvers import SourceField, solve_kelvin, solve_primal

log = logging.getLogger(__name__)

DESCENT_SLACK = 1e-12


class OptimizerError(RuntimeError):
    """An internal invariant of the optimiser was violated."""


class ConvergenceWarning(UserWarning):
    pass


def kappa_subproblem(weights, bounds: Bounds, budget: float, cell_measure: float,
                     max_bisect: int = 200) -> np.ndarray:
    """Minimise ``sum_i weights_i / kappa_i`` over the box with ``sum kappa_i hn <= budget``.

    The optimum is ``kappa_i = clamp(s * sqrt(weights_i))`` with ``s = lambda^{-1/2}``;
    the total volume is nondecreasing and piecewise linear in ``s``, which is
    bracketed and bisected. Cells with zero weight get ``kappa_min``.
    """
    m = np.asarray(weights, dtype=float)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise OptimizerError("energy weights must be finite and nonnegative")
    lo_k, hi_k = bounds.kappa_min, bounds.kappa_max
    root = np.sqrt(m)

    def kappa_at(s):
        return np.clip(s * root, lo_k, hi_k)

    def volume(s):
        return float(np.sum(kappa_at(s))) * cell_measure

    positive = root > 0
    if not np.any(positive):
        return np.full_like(m, lo_k)
    s_hi = hi_k / root[positive].min()      # every weighted cell at kappa_max
    if volume(s_hi) <= budget:
        return kappa_at(s_hi)
    s_lo = lo_k / root[positive].max()      # every cell at kappa_min
    if volume(s_lo) > budget * (1 + 1e-14):
        raise OptimizerError("volume budget below kappa_min * |Omega|: bisection does not bracket")
    for _ in range(max_bisect):
        s_mid = 0.5 * (s_lo + s_hi)
        if volume(s_mid) > budget:
            s_hi = s_mid
        else:
            s_lo = s_mid
        if s_hi - s_lo <= 4 * np.finfo(float).eps * s_hi:
            break
    kappa = kappa_at(s_lo)
    # finish exactly on the linear piece containing s_lo
    free = (s_lo * root > lo_k) & (s_lo * root < hi_k)
    if np.any(free):
        fixed = float(np.sum(kappa[~free])) * cell_measure
        s_exact = (budget - fixed) / (float(np.sum(root[free])) * cell_measure)
        trial = kappa_at(s_exact)
        if np.array_equal(trial <= lo_k, kappa <= lo_k) and np.array_equal(trial >= hi_k, kappa >= hi_k):
            kappa = trial
    return kappa


def dual_objective(design: DesignField, weights: np.ndarray) -> float:
    hn = design.mesh.cell_measure
    return 0.5 * hn * float(np.sum(weights / design.kappa))


def design_step(weights, design: DesignField) -> DesignField:
    """Exact minimisation over the admissible set for fixed flux weights."""
    mesh = design.mesh
    b = design.bounds
    kappa = np.full(mesh.n_cells, b.kappa_max)   # collar: pointwise optimum
    interior = mesh.interior
    kappa[interior] = kappa_subproblem(weights[interior], b, b.gamma * mesh.domain.measure, mesh.cell_measure)
    return DesignField(kappa, b, mesh)


@dataclass(frozen=True, eq=False)
class DesignResult:
    design: DesignField
    flux: np.ndarray
    u: np.ndarray
    d_value: float
    iterations: int
    converged: bool
    descent_history: list = field(default_factory=list)

    @property
    def p_value(self) -> float:
        return -self.d_value

    @property
    def volume_slack(self) -> float:
        return check_admissible(self.design).volume_slack


def optimize_design(f: SourceField, ops: NonlocalOperators, bounds: Bounds, initial: DesignField | None = None,
                    max_iters: int = 200, rel_tol: float = 1e-7, method: str = "cg") -> DesignResult:
    """Alternate exact flux (Kelvin) solves and exact design updates.

    ``descent_history`` records the dual energy after every half step, so it
    must be nonincreasing up to solver rounding.
    """
    scheme = AveragingScheme.HARMONIC
    design = initial or DesignField.uniform(ops.mesh, bounds)
    if not check_admissible(design).admissible:
        raise OptimizerError("initial design is not admissible")
    if not np.any(f.values):
        sol = solve_kelvin(design, f, scheme, ops)
        return DesignResult(design, sol.q, sol.u, 0.0, 1, True, [0.0])

    history = []
    u = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        sol = solve_kelvin(design, f, scheme, ops, method=method, x0=u)
        u, q = sol.u, sol.q
        history.append(sol.energy_dual)
        weights = ops.row_energy(q)
        design = design_step(weights, design)
        value = dual_objective(design, weights)
        history.append(value)
        drops = np.diff(history[-3:])
        if np.any(drops > DESCENT_SLACK * max(1.0, abs(history[0]))):
            raise OptimizerError(f"objective increased by {drops.max():.3e} at iteration {it}")
        if it > 1:
            prev = history[-3]
            if abs(prev - value) <= rel_tol * abs(value):
                converged = True
                break
    # report the value at a consistent (design, flux) pair
    sol = solve_kelvin(design, f, scheme, ops, method=method, x0=u)
    history.append(sol.energy_dual)
    if history[-1] > history[-2] + DESCENT_SLACK * max(1.0, abs(history[0])):
        raise OptimizerError("final flux solve increased the objective")
    if not converged:
        warnings.warn(f"design optimisation stopped after {max_iters} iterations", ConvergenceWarning)
    log.info("design optimisation: %d iterations, d = %.12g", it, sol.energy_dual)
    return DesignResult(design, sol.q, sol.u, sol.energy_dual, it, converged, history)


@dataclass(frozen=True)
class SaddleReport:
    primal_value: float
    dual_value: float
    value_error: float
    worst_probe_gain: float
    ok: bool


def random_admissible(design: DesignField, rng: np.random.Generator, step: float = 0.25) -> DesignField:
    """Random perturbation of a design, pulled back into the admissible set."""
    b = design.bounds
    mesh = design.mesh
    kappa = np.clip(design.kappa + step * (b.kappa_max - b.kappa_min) * rng.standard_normal(mesh.n_cells),
                    b.kappa_min, b.kappa_max)
    interior = mesh.interior
    budget = b.gamma * mesh.domain.measure
    excess = float(np.sum(kappa[interior])) * mesh.cell_measure - budget
    if excess > 0:
        # shrink towards kappa_min until the volume fits
        span = kappa[interior] - b.kappa_min
        kappa[interior] -= span * (excess / (float(np.sum(span)) * mesh.cell_measure))
    return DesignField(np.clip(kappa, b.kappa_min, b.kappa_max), b, mesh)


def verify_saddle(result: DesignResult, f: SourceField, ops: NonlocalOperators, n_probes: int = 10,
                  seed: int = 0, tol: float = 1e-7) -> SaddleReport:
    """Cross-check the optimum on the primal (max-min) side.

    The primal energy at the optimal design must equal ``-d``, and no random
    admissible design may have a larger minimal Dirichlet energy.
    """
    scheme = AveragingScheme.HARMONIC
    base = solve_primal(result.design, f, scheme, ops)
    value_error = abs(base.energy_primal + result.d_value)
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_probes):
        probe = random_admissible(result.design, rng, step=float(rng.uniform(0.01, 0.5)))
        sol = solve_primal(probe, f, scheme, ops, x0=base.u)
        worst = max(worst, sol.energy_primal - base.energy_primal)
    ok = value_error <= tol * max(1.0, abs(result.d_value)) and worst <= tol
    return SaddleReport(base.energy_primal, result.d_value, value_error, float(worst), ok)
