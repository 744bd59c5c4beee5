"""CSV and legacy VTK output."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ParameterError

TABLE_HEADER = ["level", "h", "ncells", "l1", "eoc"]


def write_vtk_frame(mesh, positions, field, path, name="u"):
    """Write a legacy ASCII VTK unstructured grid with one cell scalar.

    The output depends only on the inputs, so re-running gives identical
    bytes.
    """
    values = np.asarray(getattr(field, "values", field), dtype=float)
    if values.size == 0:
        raise ParameterError("cannot write an empty cell field")
    if len(values) != mesh.n_cells:
        raise ParameterError("field length does not match the mesh")
    x = np.asarray(mesh.vertices if positions is None else positions, dtype=float)
    tri = mesh.triangles
    lines = [
        "# vtk DataFile Version 3.0",
        name,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(x)} double",
    ]
    lines += [f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in x]
    lines.append(f"CELLS {len(tri)} {4 * len(tri)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tri]
    lines.append(f"CELL_TYPES {len(tri)}")
    lines += ["5"] * len(tri)
    lines += [f"CELL_DATA {len(tri)}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.17g}" for v in values]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def _fmt_eoc(e):
    if e is None:
        return ""
    if math.isinf(e):
        return "inf"
    return f"{e:.3f}"


def write_table_csv(table, path):
    """Convergence table as ``level,h,ncells,l1,eoc``.

    ``l1`` carries 6 significant digits and ``eoc`` 3 decimals; the first
    row has no EOC.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for r in table.rows:
            w.writerow([r.level, f"{r.h:.6g}", r.ncells, f"{r.l1:.5e}", _fmt_eoc(r.eoc)])
    return path


def read_table_csv(path):
    """Rows of a table written by :func:`write_table_csv` as dicts."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "level": int(row["level"]),
                "h": float(row["h"]),
                "ncells": int(row["ncells"]),
                "l1": float(row["l1"]),
                "eoc": float(row["eoc"]) if row["eoc"] else None,
            })
    return out


def write_step_log(records, path):
    """Step log with columns ``step,t,dt,mass,min,max``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t", "dt", "mass", "min", "max"])
        for r in records:
            w.writerow([r.step, f"{r.t:.17g}", f"{r.dt:.17g}", f"{r.mass:.17g}", f"{r.min:.17g}", f"{r.max:.17g}"])
    return path
