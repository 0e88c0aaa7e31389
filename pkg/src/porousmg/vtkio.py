"""Legacy ASCII VTK export for structured-grid cell data.

Writes STRUCTURED_POINTS datasets with one CELL_DATA scalar array per
field, values formatted as "%.12e" one per line so output is bitwise
reproducible.  Cell ordering is x fastest, matching the solver layout.
"""

from __future__ import annotations

import numpy as np


def write_vtk_cell_data(
    path,
    dims,
    cell_data: dict[str, np.ndarray],
    origin=None,
    spacing=None,
    title: str = "porousmg output",
) -> None:
    dims = tuple(int(n) for n in dims)
    d = len(dims)
    if d not in (2, 3):
        raise ValueError("VTK export supports 2D or 3D grids")
    n_cells = int(np.prod(dims))
    if origin is None:
        origin = (0.0,) * d
    if spacing is None:
        spacing = tuple(1.0 / n for n in dims)
    pdims = [n + 1 for n in dims] + [1] * (3 - d)
    org = list(origin) + [0.0] * (3 - d)
    spc = list(spacing) + [1.0] * (3 - d)

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {pdims[0]} {pdims[1]} {pdims[2]}",
        f"ORIGIN {org[0]:.12e} {org[1]:.12e} {org[2]:.12e}",
        f"SPACING {spc[0]:.12e} {spc[1]:.12e} {spc[2]:.12e}",
        f"CELL_DATA {n_cells}",
    ]
    for name, values in cell_data.items():
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size != n_cells:
            raise ValueError(f"cell array {name!r} has {arr.size} values, grid has {n_cells}")
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.12e}" for v in arr)
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def solution_cell_data(layout, u, p, divergence=None) -> dict[str, np.ndarray]:
    """Assemble the standard export arrays: pressure, divergence, u1..ud.

    Pressure and divergence are cellwise means; velocity components are
    cellwise averages of the conforming field.
    """
    from porousmg.discretization import compute_divergence, velocity_cell_averages

    data = {}
    data["pressure"] = p[:: layout.pressure_modes]
    div = divergence if divergence is not None else compute_divergence(u, layout)
    data["divergence"] = div[:, 0]
    avg = velocity_cell_averages(layout, u)
    for a in range(layout.level.dim):
        data[f"u{a + 1}"] = avg[:, a]
    return data
