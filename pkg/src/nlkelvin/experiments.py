"""Horizon sweeps: nonlocal-to-local convergence of fluxes, energies and design values."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .design import optimize_design
from .geometry import Domain, build_mesh, build_pairs
from .kernel import ConfigurationError, KernelSpec
from .local import LocalGrid, optimize_local_design
from .material import AveragingScheme, Bounds, pair_resistivity
from .operators import NonlocalOperators, build_operators
from .solvers import SourceField, infsup_constant, make_source, poincare_constant, solve_kelvin, stability_ratio

log = logging.getLogger(__name__)

MIN_RATIO = 4


@dataclass(frozen=True)
class SmoothField:
    """Compactly supported polynomial bump ``b(x) = (1 - |x - c|^2 / r^2)_+^4``.

    ``kind="bump"`` gives ``q = b * direction`` (nonzero divergence),
    ``kind="curl_bump"`` gives the divergence-free rotated gradient of ``b``.
    """

    center: tuple = (0.5, 0.5)
    radius: float = 0.35
    direction: tuple = (1.0, 0.5)
    kind: str = "bump"
    amplitude: float = 1.0

    def _bump(self, x):
        c = np.asarray(self.center, dtype=float)
        s = 1.0 - np.sum((x - c) ** 2, axis=1) / self.radius ** 2
        s = np.maximum(s, 0.0)
        grad = (-8.0 / self.radius ** 2 * s ** 3)[:, None] * (x - c)
        return self.amplitude * s ** 4, self.amplitude * grad

    def evaluate(self, x):
        """Return ``(q, div q)`` at points ``x`` of shape (N, dim)."""
        x = np.asarray(x, dtype=float)
        b, grad = self._bump(x)
        if self.kind == "bump":
            a = np.asarray(self.direction, dtype=float)[: x.shape[1]]
            return b[:, None] * a, grad @ a
        if self.kind == "curl_bump":
            if x.shape[1] != 2:
                raise ConfigurationError("curl_bump is only defined in two dimensions")
            return np.stack([grad[:, 1], -grad[:, 0]], axis=1), np.zeros(len(x))
        if self.kind == "zero":
            return np.zeros_like(x), np.zeros(len(x))
        raise ConfigurationError(f"unknown smooth field {self.kind!r}")


def fit_rate(deltas, errors) -> float:
    """Least-squares slope of log(error) against log(delta)."""
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(deltas[ok]), np.log(errors[ok]), 1)[0])


def pair_rate(deltas, errors) -> list:
    """Successive rates ``log(e_k / e_{k+1}) / log(delta_k / delta_{k+1})``."""
    out = []
    for k in range(len(deltas) - 1):
        if errors[k] > 0 and errors[k + 1] > 0:
            out.append(float(np.log(errors[k] / errors[k + 1]) / np.log(deltas[k] / deltas[k + 1])))
        else:
            out.append(float("nan"))
    return out


def make_operators(domain: Domain, delta: float, m: float, family: str) -> NonlocalOperators:
    if m < 2:
        raise ConfigurationError("delta/h ratio must be at least 2")
    mesh = build_mesh(domain, delta / m, delta)
    kernel = KernelSpec.make(family, delta, domain.dim)
    return build_operators(mesh, build_pairs(mesh, kernel))


def divergence_recovery_error(field: SmoothField, ops: NonlocalOperators) -> float:
    """``|D R* q - div q|`` over Omega."""
    q, div = field.evaluate(ops.mesh.centers)
    lifted = ops.adjoint_recovery(q)
    return ops.cell_norm(ops.apply_divergence(lifted) - div[ops.mesh.interior])


def local_dual_energy(q_cells, kappa, ops: NonlocalOperators) -> float:
    """``0.5 * int_Omega |q|^2 / kappa`` by the midpoint rule on Omega cells."""
    interior = ops.mesh.interior
    q = np.asarray(q_cells)[interior]
    return 0.5 * ops.hn * float(np.sum(np.sum(q * q, axis=1) / np.asarray(kappa)[interior]))


def nonlocal_dual_energy(q_pairs, kappa, ops: NonlocalOperators) -> float:
    """Complementary energy with harmonic pair averaging of ``kappa``."""
    rho = pair_resistivity(np.asarray(kappa, dtype=float), AveragingScheme.HARMONIC, ops.pairs)
    return ops.hn ** 2 * float(np.sum(rho * np.asarray(q_pairs) ** 2))


def energy_recovery_error(field: SmoothField, kappa_fn: Callable, ops: NonlocalOperators) -> tuple:
    """``(|I_hat(kpair; R* q) - I_loc(kappa; q)|, I_loc(kappa; q))``."""
    q, _ = field.evaluate(ops.mesh.centers)
    kappa = kappa_fn(ops.mesh.centers)
    lifted = ops.adjoint_recovery(q)
    i_loc = local_dual_energy(q, kappa, ops)
    return abs(nonlocal_dual_energy(lifted, kappa, ops) - i_loc), i_loc


def recovery_convergence(field: SmoothField, delta_list, domain: Domain | None = None, m: float = MIN_RATIO,
                         family: str = "truncated_tent") -> dict:
    domain = domain or Domain.unit(2)
    errors = [divergence_recovery_error(field, make_operators(domain, d, m, family)) for d in delta_list]
    return {"delta": list(delta_list), "error": errors, "rate": fit_rate(delta_list, errors),
            "pair_rates": pair_rate(delta_list, errors)}


def uniform_kappa(value: float) -> Callable:
    return lambda x: np.full(len(x), float(value))


def checkerboard_kappa(bounds: Bounds, tiles: int = 4, domain: Domain | None = None) -> Callable:
    domain = domain or Domain.unit(2)
    lo, hi = np.asarray(domain.lo), np.asarray(domain.hi)

    def kappa(x):
        t = np.floor((x - lo) / (hi - lo) * tiles).astype(int).sum(axis=1)
        return np.where(t % 2 == 0, bounds.kappa_min, bounds.kappa_max)

    return kappa


def energy_convergence(field: SmoothField, kappa_fn: Callable, delta_list, domain: Domain | None = None,
                       m: float = MIN_RATIO, family: str = "truncated_tent") -> dict:
    domain = domain or Domain.unit(2)
    errors, refs = [], []
    for d in delta_list:
        err, ref = energy_recovery_error(field, kappa_fn, make_operators(domain, d, m, family))
        errors.append(err)
        refs.append(ref)
    return {"delta": list(delta_list), "error": errors, "reference": refs,
            "relative": [e / r if r else 0.0 for e, r in zip(errors, refs)],
            "rate": fit_rate(delta_list, errors)}


def one_sided_bound(q_pairs, kappa, ops: NonlocalOperators) -> float:
    """``I_hat(kpair; q) - I_loc(kappa; R q)``; nonnegative for harmonic averaging."""
    recovered = ops.flux_recovery(q_pairs)
    return nonlocal_dual_energy(q_pairs, kappa, ops) - local_dual_energy(recovered, kappa, ops)


@dataclass(frozen=True)
class SweepRecord:
    delta: float
    h: float
    d_delta: float
    p_delta: float
    d_star_local: float
    infsup: float
    stability_ratio: float
    recovery_div_err: float
    recovery_energy_err: float
    poincare_const: float

    @classmethod
    def header(cls) -> list:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return list(asdict(self).values())


@dataclass(frozen=True)
class SweepSettings:
    delta_list: tuple
    domain: Domain = Domain.unit(2)
    m: float = MIN_RATIO
    family: str = "truncated_tent"
    bounds: Bounds = Bounds()
    source: Callable = None      # mesh -> SourceField
    field: SmoothField = SmoothField()
    max_iters: int = 200
    rel_tol: float = 1e-7
    method: str = "cg"

    def __post_init__(self):
        if self.m < MIN_RATIO:
            raise ConfigurationError(f"sweeps need delta/h >= {MIN_RATIO}, got {self.m}")
        deltas = tuple(float(d) for d in self.delta_list)
        if not deltas:
            raise ConfigurationError("empty delta list")
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise ConfigurationError("delta list must be strictly decreasing")
        object.__setattr__(self, "delta_list", deltas)


@dataclass(frozen=True)
class SweepResult:
    records: list
    complete: bool
    error: str | None = None

    def summary(self) -> dict:
        deltas = [r.delta for r in self.records]
        gap = [abs(r.d_delta - r.d_star_local) / abs(r.d_star_local) if r.d_star_local else 0.0
               for r in self.records]
        return {
            "complete": self.complete,
            "error": self.error,
            "n_records": len(self.records),
            "relative_design_error": gap,
            "rate_design_value": fit_rate(deltas, gap),
            "rate_recovery_div": fit_rate(deltas, [r.recovery_div_err for r in self.records]),
            "rate_recovery_energy": fit_rate(deltas, [r.recovery_energy_err for r in self.records]),
        }


def sweep_entry(delta: float, s: SweepSettings) -> SweepRecord:
    ops = make_operators(s.domain, delta, s.m, s.family)
    mesh = ops.mesh
    f = s.source(mesh) if s.source is not None else make_source(mesh)
    result = optimize_design(f, ops, s.bounds, max_iters=s.max_iters, rel_tol=s.rel_tol, method=s.method)
    sol = solve_kelvin(result.design, f, AveragingScheme.HARMONIC, ops, method=s.method)
    local = optimize_local_design(f, LocalGrid.from_mesh(mesh), s.bounds, max_iters=max(s.max_iters, 500),
                                  rel_tol=s.rel_tol, method=s.method)
    energy_err, _ = energy_recovery_error(s.field, uniform_kappa(s.bounds.gamma), ops)
    rec = SweepRecord(
        delta=delta, h=mesh.h, d_delta=result.d_value, p_delta=result.p_value, d_star_local=local.d_star,
        infsup=infsup_constant(ops), stability_ratio=stability_ratio(sol, f, ops),
        recovery_div_err=divergence_recovery_error(s.field, ops), recovery_energy_err=energy_err,
        poincare_const=poincare_constant(ops))
    log.info("sweep delta=%g: d_delta=%.10g d*=%.10g", delta, rec.d_delta, rec.d_star_local)
    return rec


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("NLKELVIN_THREADS", "1")))
    except ValueError:
        return 1


def delta_sweep(settings: SweepSettings) -> SweepResult:
    """One record per horizon, merged in the order of ``delta_list``.

    A failing entry stops the sweep; the records computed before it are
    returned with ``complete=False``.
    """
    deltas = settings.delta_list
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(deltas))) as pool:
        futures = [pool.submit(sweep_entry, d, settings) for d in deltas]
        records = []
        for d, fut in zip(deltas, futures):
            try:
                records.append(fut.result())
            except Exception as exc:  # noqa: BLE001 - report and keep partial output
                for other in futures:
                    other.cancel()
                return SweepResult(records, False, f"delta={d}: {type(exc).__name__}: {exc}")
    return SweepResult(records, True)
