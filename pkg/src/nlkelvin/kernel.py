"""Radial interaction kernels with second-moment normalization.

The normalization condition is imposed on the *square* of the kernel:

    int_{R^n} |z|^2 w(z)^2 dz = 1 / K_{2,n} = n

so that the lifted flux of a constant vector field reproduces that field.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn


class ConfigurationError(ValueError):
    """Raised for unsupported parameter combinations."""


class KernelFamily(str, enum.Enum):
    CONSTANT_BALL = "constant_ball"
    TRUNCATED_TENT = "truncated_tent"


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} (2 for n=1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def sphere_moment(p: int, n: int) -> float:
    """Average of |s . e|^p over the unit sphere S^{n-1}.

    For p = 2 this is 1/n. Any positive even p is accepted.
    """
    if n not in (1, 2, 3):
        raise ConfigurationError(f"dimension n={n} not supported (expected 1, 2 or 3)")
    if p <= 0 or p % 2:
        raise ConfigurationError(f"moment order p={p} not supported (expected positive even)")
    return float(gamma_fn(n / 2) * gamma_fn((p + 1) / 2) / (math.sqrt(math.pi) * gamma_fn((n + p) / 2)))


def _profile_moment(family: KernelFamily, n: int) -> float:
    # int_0^1 t^{n+1} phi(t)^2 dt for the unit-radius, unit-height profile phi
    if family is KernelFamily.CONSTANT_BALL:
        return 1.0 / (n + 2)
    return 2.0 / ((n + 2) * (n + 3) * (n + 4))


def _profile(family: KernelFamily, t: np.ndarray) -> np.ndarray:
    if family is KernelFamily.CONSTANT_BALL:
        return np.where(t < 1.0, 1.0, 0.0)
    return np.where(t < 1.0, 1.0 - t, 0.0)


def normalized_scale(family: KernelFamily, delta: float, dim: int) -> float:
    """Height c making int |z|^2 w^2 = 1/K_{2,n} for horizon delta."""
    moment = sphere_area(dim) * delta ** (dim + 2) * _profile_moment(family, dim)
    return math.sqrt(1.0 / (sphere_moment(2, dim) * moment))


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel ``w(z) = scale * phi(|z| / delta)`` supported in B(0, delta)."""

    family: KernelFamily
    delta: float
    dim: int
    scale: float = field(default=float("nan"))

    def __post_init__(self):
        family = KernelFamily(self.family)
        object.__setattr__(self, "family", family)
        if not self.delta > 0:
            raise ConfigurationError(f"kernel delta must be positive, got {self.delta}")
        if self.dim not in (1, 2, 3):
            raise ConfigurationError(f"dimension {self.dim} not supported")
        if math.isnan(self.scale):
            object.__setattr__(self, "scale", normalized_scale(family, self.delta, self.dim))
        elif not self.scale > 0:
            raise ConfigurationError("kernel scale must be positive")

    @classmethod
    def make(cls, family="truncated_tent", delta=0.1, dim=2) -> "KernelSpec":
        return cls(KernelFamily(family), float(delta), int(dim))

    def radial(self, r) -> np.ndarray:
        """Kernel value as a function of the distance r >= 0."""
        r = np.asarray(r, dtype=float)
        return self.scale * _profile(self.family, r / self.delta)


def kernel_value(z, spec: KernelSpec):
    """Evaluate the kernel at offset(s) ``z`` (last axis = coordinates)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        r = np.abs(z)
    else:
        r = np.sqrt(np.sum(z * z, axis=-1))
    out = spec.radial(r)
    return float(out) if np.ndim(out) == 0 else out


def check_normalization(spec: KernelSpec, quad_resolution: int = 64) -> float:
    """Relative error of the second-moment condition, by radial quadrature.

    Gauss-Legendre on [0, delta] with ``quad_resolution`` nodes; exact for the
    polynomial profiles shipped here once the resolution is moderate.
    """
    if quad_resolution < 32:
        raise ConfigurationError("quad_resolution must be at least 32")
    nodes, weights = np.polynomial.legendre.leggauss(quad_resolution)
    r = 0.5 * spec.delta * (nodes + 1.0)
    w = 0.5 * spec.delta * weights
    integrand = r ** (spec.dim + 1) * spec.radial(r) ** 2
    moment = sphere_area(spec.dim) * float(np.dot(w, integrand))
    target = 1.0 / sphere_moment(2, spec.dim)
    return abs(moment - target) / target
