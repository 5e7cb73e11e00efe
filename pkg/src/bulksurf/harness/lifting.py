"""Surface pencil assembled on the lift of the discrete surface.

The discrete boundary Gamma_h carries a natural map onto the smooth
parent surface Gamma: each quadrature point is sent to its closest
point on Gamma.  Composing the isoparametric chart with the Jacobian
of that projection map gives the chart of the *lifted* surface, so the
same local shape functions can be integrated against the exact surface
measure.  The resulting mass/stiffness pair realizes the fractional
Sobolev norms of the lifted finite element space on Gamma itself and
is the comparison partner for the discrete-norm equivalence checks.
"""

from __future__ import annotations

import numpy as np

from ..mesh import surface_geometry, _inv22
from ..geometry import closest_point
from ..assembly import _mass_elements, _stiffness_elements, _scatter_matrix
from ..fracops import SurfacePencil
from ..reference import reference_element


def lifted_surface_pencil(mesh, surface=None, order=None) -> SurfacePencil:
    """Mass/stiffness pencil of the boundary space lifted onto ``surface``.

    Tangent vectors of the discrete chart are pushed forward with the
    Jacobian of the closest-point projection, so quadrature runs over
    the curved surface with its exact area measure.
    """
    surface = mesh.surface if surface is None else surface
    if surface is None:
        raise ValueError("a parent surface is required to lift the boundary")
    g = surface_geometry(mesh, order=order)
    pts = g["points"]                      # (F, q, 3)
    shp = pts.shape
    jac = surface.projection_jacobian(pts.reshape(-1, 3)).reshape(shp[:2] + (3, 3))

    tang = np.matmul(jac, g["tangents"])   # (F, q, 3, 2) push-forward chart
    cross = np.cross(tang[..., 0], tang[..., 1])
    meas = np.linalg.norm(cross, axis=-1)
    if not np.all(meas > 0.0):
        raise ValueError("degenerate lifted chart: projection collapsed a face")
    gram = np.matmul(tang.transpose(0, 1, 3, 2), tang)
    ginv = _inv22(gram)
    ref = reference_element(2, mesh.degree)
    _, ref_grads = ref.tabulate(g["rule"].points)
    sgrads = np.matmul(np.matmul(ref_grads[None, :, :, :], ginv.transpose(0, 1, 3, 2)),
                       tang.transpose(0, 1, 3, 2))

    wdet = g["rule"].weights[None, :] * meas
    vals = g["values"]
    m_el = _mass_elements(wdet, vals)
    a_el = _stiffness_elements(wdet, sgrads)
    n = mesh.n_surface
    M = _scatter_matrix(m_el, mesh.faces, mesh.faces, (n, n))
    A = _scatter_matrix(a_el, mesh.faces, mesh.faces, (n, n))
    return SurfacePencil(M=M, A=A)


def lifted_points(mesh, surface=None, order=None):
    """Quadrature points of the boundary lifted to the parent surface."""
    surface = mesh.surface if surface is None else surface
    g = surface_geometry(mesh, order=order)
    pts = g["points"]
    return closest_point(surface, pts.reshape(-1, 3)).reshape(pts.shape)
