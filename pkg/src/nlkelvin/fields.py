"""CSV dumps of per-cell fields."""

from __future__ import annotations

import csv

import numpy as np

from .geometry import Mesh

AXES = ("x", "y", "z")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_field_csv(path, mesh: Mesh, values, cells=None) -> None:
    """Write ``cell_id, x[, y[, z]], value...`` rows in ascending cell order.

    ``values`` holds one row per entry of ``cells`` (default: every mesh cell;
    a field with one entry per Interior cell is matched to the Interior ids).
    Vector fields get one value column per component.
    """
    values = np.asarray(values, dtype=float)
    if cells is None:
        if values.shape[0] == mesh.n_cells:
            cells = np.arange(mesh.n_cells)
        elif values.shape[0] == mesh.n_interior:
            cells = mesh.interior
        else:
            raise ValueError("field length matches neither the mesh nor its Interior cells")
    cells = np.asarray(cells, dtype=int)
    if values.ndim == 1:
        value_cols = ["value"]
        values = values[:, None]
    else:
        value_cols = [f"value_{AXES[k]}" for k in range(values.shape[1])]
    header = ["cell_id"] + list(AXES[: mesh.dim]) + value_cols
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for cid, row in zip(cells, values):
            writer.writerow([str(cid)] + [_fmt(c) for c in mesh.centers[cid]] + [_fmt(v) for v in row])


def read_field_csv(path):
    """Return ``(cell_ids, coords, values)`` from a file written by :func:`write_field_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    ncoord = sum(1 for h in header if h in AXES)
    nval = len(header) - 1 - ncoord
    if not rows:
        return np.zeros(0, int), np.zeros((0, ncoord)), np.zeros((0, nval))
    data = np.array([[float(v) for v in r[1:]] for r in rows])
    ids = np.array([int(r[0]) for r in rows])
    values = data[:, ncoord:]
    return ids, data[:, :ncoord], values[:, 0] if nval == 1 else values


def write_table_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
