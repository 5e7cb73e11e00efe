"""Legacy-format VTK output (ASCII unstructured grid).

Higher-order elements are linearized: the degree-k nodal lattice of
each tetrahedron is decomposed into k^3 straight sub-tetrahedra (the
standard forward/octahedral/reverse pattern of the principal lattice),
so every mesh node appears as a grid point and nodal fields can be
attached verbatim as point data.  Surface-only fields are padded with
zeros on interior nodes.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..reference import reference_element


@lru_cache(maxsize=None)
def _sub_tets(degree: int):
    """Local connectivity of the k^3 straight sub-tets of the lattice.

    With lattice coordinates (i, j, l) = (a1, a2, a3) of the nodal
    multi-index, each cell (i, j, l) with i+j+l <= k-1 contributes a
    forward tet; interior cells additionally contribute a 4-tet split
    of the central octahedron (i+j+l <= k-2) and a reverse tet
    (i+j+l <= k-3).
    """
    ref = reference_element(3, degree)
    index = {mi[1:]: loc for loc, mi in enumerate(ref.multi_indices)}
    k = degree
    cells = []

    def at(i, j, l):
        return index[(i, j, l)]

    for i in range(k):
        for j in range(k - i):
            for l in range(k - i - j):
                cells.append((at(i, j, l), at(i + 1, j, l),
                              at(i, j + 1, l), at(i, j, l + 1)))
                if i + j + l <= k - 2:
                    a = at(i + 1, j, l)
                    b = at(i, j + 1, l)
                    c = at(i, j, l + 1)
                    d = at(i + 1, j + 1, l)
                    e = at(i + 1, j, l + 1)
                    f = at(i, j + 1, l + 1)
                    # octahedron split along the (a, f) diagonal
                    for p, q in ((b, d), (d, e), (e, c), (c, b)):
                        cells.append((a, f, p, q))
                if i + j + l <= k - 3:
                    cells.append((at(i + 1, j + 1, l), at(i + 1, j, l + 1),
                                  at(i, j + 1, l + 1), at(i + 1, j + 1, l + 1)))

    # orient every sub-tet positively on the reference lattice
    pts = ref.nodes
    out = []
    for tet in cells:
        a, b, c, d = (pts[v] for v in tet)
        vol = np.dot(np.cross(b - a, c - a), d - a)
        if vol < 0:
            tet = (tet[0], tet[1], tet[3], tet[2])
        out.append(tet)
    return tuple(out)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_vtk(mesh, fields, path):
    """Write the mesh and nodal fields as a legacy ASCII VTK file.

    ``fields`` maps names to nodal arrays: scalars of length N or
    n_surface (padded with zeros at interior nodes), vectors shaped
    (N, 3) or (n_surface, 3).
    """
    n = mesh.n_nodes
    sub = _sub_tets(mesh.degree)
    lines = [
        "# vtk DataFile Version 3.0",
        "bulk-surface nodal fields",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for p in mesh.nodes:
        lines.append(" ".join(_fmt(c) for c in p))

    n_cells = mesh.n_elements * len(sub)
    lines.append(f"CELLS {n_cells} {5 * n_cells}")
    for conn in mesh.tets:
        for tet in sub:
            lines.append("4 " + " ".join(str(int(conn[v])) for v in tet))
    lines.append(f"CELL_TYPES {n_cells}")
    lines.extend(["10"] * n_cells)

    items = list(fields.items()) if fields else []
    if items:
        lines.append(f"POINT_DATA {n}")
    for name, arr in items:
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            full = np.zeros(n)
            full[: len(arr)] = arr
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in full)
        elif arr.ndim == 2 and arr.shape[1] == 3:
            full = np.zeros((n, 3))
            full[: len(arr)] = arr
            lines.append(f"VECTORS {name} double")
            lines.extend(" ".join(_fmt(c) for c in row) for row in full)
        else:
            raise ValueError(f"field {name!r} has unsupported shape {arr.shape}")

    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_state_vtk(mesh, state, path):
    """Write a solver state (u, H, V, n, v) with standard field names."""
    write_vtk(mesh, {"u": state.u, "H": state.H, "V": state.V,
                     "n": state.n, "v": state.v}, path)
