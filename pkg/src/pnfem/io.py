"""CSV matrix dumps and legacy VTK output of the scalar flux."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .angular import ModeIndex
from .mesh import TriMesh
from .operators import ParityField

MATRIX_HEADER = ["row_l", "row_m", "col_l", "col_m", "value"]


def write_angular_matrix(stream: TextIO, matrix, row_modes: Sequence[ModeIndex],
                         col_modes: Sequence[ModeIndex]) -> None:
    """Nonzero entries, one per line, indexed by SH modes."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(MATRIX_HEADER)
    for k in order:
        r, c = row_modes[coo.row[k]], col_modes[coo.col[k]]
        w.writerow([r.l, r.m, c.l, c.m, f"{coo.data[k]:.17g}"])


def write_spatial_matrix(stream: TextIO, matrix) -> None:
    """Same layout with integer row/column indices (the ``m`` columns are 0)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(MATRIX_HEADER)
    for k in order:
        w.writerow([int(coo.row[k]), 0, int(coo.col[k]), 0, f"{coo.data[k]:.17g}"])


def write_scalar_flux(x: ParityField, mesh: TriMesh, path: str | Path,
                      title: str = "scalar flux") -> None:
    """Legacy ASCII VTK file with the vertex values of ``int phi ds``.

    The integral over the sphere only sees mode (0, 0), whose basis
    function is ``1/sqrt(4 pi)``; mode (0, 0) is the first even column.
    """
    values = math.sqrt(4.0 * math.pi) * x.even[:, 0]
    lines = ["# vtk DataFile Version 2.0", title.replace("\n", " "), "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double"]
    lines += [f"{a:.17g} {b:.17g} 0" for a, b in mesh.vertices]
    T = mesh.n_triangles
    lines.append(f"CELLS {T} {4 * T}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {T}")
    lines += ["5"] * T          # VTK_TRIANGLE
    lines += [f"POINT_DATA {mesh.n_vertices}", "SCALARS scalar_flux double 1",
              "LOOKUP_TABLE default"]
    lines += [f"{v:.17g}" for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_point_scalars(path: str | Path) -> np.ndarray:
    """Point scalars of a file written by :func:`write_scalar_flux`."""
    text = Path(path).read_text().split("\n")
    start = text.index("LOOKUP_TABLE default") + 1
    n = int(next(t for t in text if t.startswith("POINT_DATA")).split()[1])
    return np.array([float(v) for v in text[start:start + n]])
