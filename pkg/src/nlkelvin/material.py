"""Design fields, the admissible set and cell-to-pair conductivity averaging."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import Mesh, PairList
from .kernel import ConfigurationError

VOLUME_RTOL = 1e-9


class AveragingScheme(str, enum.Enum):
    HARMONIC = "harmonic"
    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class Bounds:
    kappa_min: float = 1.0
    kappa_max: float = 2.0
    gamma: float = 1.4

    def __post_init__(self):
        if not 0 < self.kappa_min < self.kappa_max:
            raise ConfigurationError("need 0 < kappa_min < kappa_max")
        if not self.kappa_min < self.gamma < self.kappa_max:
            raise ConfigurationError("gamma must lie strictly between kappa_min and kappa_max")


@dataclass(frozen=True, eq=False)
class DesignField:
    """Per-cell conductivity on the whole extended mesh."""

    kappa: np.ndarray
    bounds: Bounds
    mesh: Mesh

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=float)
        if kappa.shape != (self.mesh.n_cells,):
            raise ConfigurationError("design field must have one value per mesh cell")
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def uniform(cls, mesh: Mesh, bounds: Bounds, value: float | None = None) -> "DesignField":
        value = bounds.gamma if value is None else value
        return cls(np.full(mesh.n_cells, float(value)), bounds, mesh)

    @property
    def interior_kappa(self) -> np.ndarray:
        return self.kappa[self.mesh.interior]

    def volume(self) -> float:
        return float(np.sum(self.interior_kappa)) * self.mesh.cell_measure


@dataclass(frozen=True)
class AdmissibilityReport:
    bounds_ok: bool
    volume_slack: float

    measure: float = 1.0

    @property
    def admissible(self) -> bool:
        return self.bounds_ok and self.volume_slack >= -VOLUME_RTOL * self.measure


def check_admissible(design: DesignField) -> AdmissibilityReport:
    """Box bounds on every cell and signed volume slack ``gamma |Omega| - sum kappa hn``."""
    b = design.bounds
    k = design.kappa
    bounds_ok = bool(np.all((k >= b.kappa_min) & (k <= b.kappa_max)))
    measure = design.mesh.domain.measure
    return AdmissibilityReport(bounds_ok, b.gamma * measure - design.volume(), measure)


def pair_mean(a: np.ndarray, b: np.ndarray, scheme: AveragingScheme | str) -> np.ndarray:
    scheme = AveragingScheme(scheme)
    if scheme is AveragingScheme.HARMONIC:
        return 2.0 * a * b / (a + b)
    if scheme is AveragingScheme.ARITHMETIC:
        return 0.5 * (a + b)
    return np.sqrt(a * b)


def pair_conductivity(design: DesignField | np.ndarray, scheme, pairs: PairList) -> np.ndarray:
    """Symmetric pair conductivity from per-cell values."""
    kappa = design.kappa if isinstance(design, DesignField) else np.asarray(design, dtype=float)
    return pair_mean(kappa[pairs.i], kappa[pairs.j], scheme)


def pair_resistivity(design: DesignField | np.ndarray, scheme, pairs: PairList) -> np.ndarray:
    kappa = design.kappa if isinstance(design, DesignField) else np.asarray(design, dtype=float)
    if AveragingScheme(scheme) is AveragingScheme.HARMONIC:
        # exact arithmetic mean of resistivities
        return 0.5 * (1.0 / kappa[pairs.i] + 1.0 / kappa[pairs.j])
    return 1.0 / pair_conductivity(kappa, scheme, pairs)
