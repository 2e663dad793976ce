"""Legacy ASCII VTK output for grid snapshots.

Each leaf cell becomes one VTK quad (type 9) with cell data carrying the
cell-average of the solution and the local error indicator.  Numbers are
printed with 9 significant digits so re-running a configuration
reproduces the file byte for byte.
"""

from __future__ import annotations

import numpy as np

from .fields import DGField
from .mesh import MeshView


def _fmt(x: float) -> str:
    return "%.9g" % float(x)


def cell_means(field: DGField) -> np.ndarray:
    """Cell averages of a dG field (exact via the reference mass matrix)."""
    from .assembly import reference_mass

    mref = reference_mass(field.basis)
    # integral over the reference square of each local shape function
    ones = np.ones(mref.shape[0])
    ref_int = mref @ ones
    return field.cell_coeffs() @ ref_int / 4.0


def write_vtk(mesh: MeshView, field: DGField | None, indicators, path: str,
              title: str = "dgadapt snapshot"):
    """Write a mesh snapshot with solution means and indicators."""
    rects = mesh.cell_rects()
    n = len(mesh.cells)
    if field is not None:
        means = cell_means(field)
    else:
        means = np.zeros(n)
    if indicators is None:
        ind = np.zeros(n)
    else:
        idx = mesh.cell_index()
        ind = np.zeros(n)
        for c, v in indicators.items():
            ind[idx[c]] = v

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        "POINTS %d double" % (4 * n),
    ]
    for x0, x1, y0, y1 in rects:
        lines.append("%s %s 0" % (_fmt(x0), _fmt(y0)))
        lines.append("%s %s 0" % (_fmt(x1), _fmt(y0)))
        lines.append("%s %s 0" % (_fmt(x1), _fmt(y1)))
        lines.append("%s %s 0" % (_fmt(x0), _fmt(y1)))
    lines.append("CELLS %d %d" % (n, 5 * n))
    for k in range(n):
        base = 4 * k
        lines.append("4 %d %d %d %d" % (base, base + 1, base + 2, base + 3))
    lines.append("CELL_TYPES %d" % n)
    lines.extend(["9"] * n)
    lines.append("CELL_DATA %d" % n)
    lines.append("SCALARS solution_mean double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in means)
    lines.append("SCALARS indicator double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in ind)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
