"""Uniform Cartesian meshes of the extended domain and pair interaction lists."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernel import ConfigurationError, KernelSpec, kernel_value

INTERIOR = 0
COLLAR = 1

# relative slack used when comparing lattice distances with the horizon
_TIE_RTOL = 1e-9


class ResolutionError(ConfigurationError):
    """The horizon is too small relative to the cell width."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``prod_k (lo_k, hi_k)``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or len(lo) not in (1, 2, 3):
            raise ConfigurationError("domain box must have 1, 2 or 3 axes")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ConfigurationError("domain box needs hi > lo on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, dim: int = 2) -> "Domain":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def measure(self) -> float:
        return math.prod(b - a for a, b in zip(self.lo, self.hi))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Cell-centred grid on Omega padded by ``pad`` collar layers on every side.

    Cells are numbered row-major over the padded box (axis 0 slowest).
    """

    domain: Domain
    h: float
    pad: int
    shape: tuple          # cells per axis, including the collar
    centers: np.ndarray   # (N, dim)
    labels: np.ndarray    # (N,) INTERIOR or COLLAR
    multi_index: np.ndarray  # (N, dim) integer lattice coordinates

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_cells(self) -> int:
        return len(self.labels)

    @property
    def cell_measure(self) -> float:
        return self.h ** self.dim

    @property
    def interior(self) -> np.ndarray:
        """Ids of the Interior cells, ascending."""
        return np.flatnonzero(self.labels == INTERIOR)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.labels == INTERIOR))

    @property
    def interior_shape(self) -> tuple:
        return tuple(s - 2 * self.pad for s in self.shape)

    def to_grid(self, values: np.ndarray, interior_only: bool = False) -> np.ndarray:
        """Reshape a per-cell array (trailing axes kept) onto the lattice."""
        values = np.asarray(values)
        shape = self.interior_shape if interior_only else self.shape
        return values.reshape(shape + values.shape[1:])

    def extend_by_zero(self, u_interior: np.ndarray) -> np.ndarray:
        u_interior = np.asarray(u_interior, dtype=float)
        full = np.zeros((self.n_cells,) + u_interior.shape[1:])
        full[self.interior] = u_interior
        return full


def build_mesh(domain: Domain, h: float, delta: float) -> Mesh:
    """Grid covering Omega plus ``ceil(delta/h)`` collar layers.

    The box extents must be integer multiples of ``h`` so that every cell is
    either inside Omega or outside it.
    """
    if not h > 0 or not delta > 0:
        raise ConfigurationError("h and delta must be positive")
    if delta / h < 2.0 - _TIE_RTOL:
        raise ResolutionError(f"delta/h = {delta / h:.3g} < 2: kernel under-resolved")
    counts = []
    for a, b in zip(domain.lo, domain.hi):
        k = round((b - a) / h)
        if k < 1 or abs(k * h - (b - a)) > 1e-9 * (b - a):
            raise ConfigurationError(f"h={h} does not divide the domain extent {b - a}")
        counts.append(k)
    pad = math.ceil(delta / h * (1.0 - _TIE_RTOL))
    shape = tuple(k + 2 * pad for k in counts)

    axes = [np.arange(s) for s in shape]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    lo = np.asarray(domain.lo)
    centers = lo + (idx - pad + 0.5) * h
    inside = np.all((idx >= pad) & (idx < pad + np.asarray(counts)), axis=1)
    labels = np.where(inside, INTERIOR, COLLAR).astype(np.int8)
    return Mesh(domain, float(h), pad, shape, centers, labels, idx)


def lattice_offsets(dim: int, ratio: float) -> np.ndarray:
    """Integer offsets k != 0 with |k| < ratio, one per +/- pair (lexicographically positive)."""
    r = math.ceil(ratio)
    out = []
    for k in itertools.product(range(-r, r + 1), repeat=dim):
        if not any(k):
            continue
        first = next(v for v in k if v != 0)
        if first < 0:
            continue
        if sum(v * v for v in k) < ratio * ratio * (1.0 - _TIE_RTOL):
            out.append(k)
    return np.asarray(out, dtype=np.int64).reshape(-1, dim)


@dataclass(frozen=True, eq=False)
class PairList:
    """Unordered interacting pairs (i < j) with kernel weights at centre offsets."""

    i: np.ndarray
    j: np.ndarray
    omega: np.ndarray
    offset: np.ndarray   # x_i - x_j, shape (P, dim)
    n_cells: int

    def __len__(self) -> int:
        return len(self.i)

    def degree(self) -> np.ndarray:
        return np.bincount(self.i, minlength=self.n_cells) + np.bincount(self.j, minlength=self.n_cells)


def build_pairs(mesh: Mesh, kernel: KernelSpec) -> PairList:
    """All unordered cell pairs with centre distance strictly below the horizon."""
    if kernel.dim != mesh.dim:
        raise ConfigurationError("kernel and mesh dimensions differ")
    offsets = lattice_offsets(mesh.dim, kernel.delta / mesh.h)
    grid_id = np.arange(mesh.n_cells).reshape(mesh.shape)
    shape = np.asarray(mesh.shape)
    ii, jj, kk = [], [], []
    for k in offsets:
        # cells a with a + k inside the box
        src = tuple(slice(max(0, -int(v)), int(s) - max(0, int(v))) for v, s in zip(k, shape))
        dst = tuple(slice(max(0, int(v)), int(s) - max(0, -int(v))) for v, s in zip(k, shape))
        a = grid_id[src].ravel()
        b = grid_id[dst].ravel()
        ii.append(a)
        jj.append(b)
        kk.append(np.broadcast_to(k, (len(a), mesh.dim)))
    if ii:
        i = np.concatenate(ii)
        j = np.concatenate(jj)
        k = np.concatenate(kk)
    else:
        i = j = np.zeros(0, dtype=np.int64)
        k = np.zeros((0, mesh.dim), dtype=np.int64)
    order = np.lexsort((j, i))
    i, j, k = i[order], j[order], k[order]
    offset = -k * mesh.h  # x_i - x_j with x_j = x_i + k h
    omega = np.asarray(kernel_value(offset, kernel), dtype=float).reshape(-1)
    keep = omega > 0
    return PairList(i[keep], j[keep], omega[keep], offset[keep], mesh.n_cells)
