"""Error measurement against globally defined exact fields.

Bulk errors are integrated on the isoparametric elements by evaluating
the exact field directly at the (curved) quadrature points; surface
errors compare the discrete trace against the exact field at the
closest-point lift of each boundary quadrature point, so the exact
solution only ever needs to be known on its own domain.  Fractional
surface norms of the error are realized through the discrete pencil,
applied to the coefficient difference against the nodal interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..mesh import bulk_geometry, surface_geometry
from ..geometry import closest_point
from ..fracops import SurfacePencil, spectral_factorization, frac_norm


@dataclass(frozen=True)
class ExactField:
    """A scalar field with (optionally) its gradient, both vectorized
    over an (n, 3) array of points."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None


def measure_errors(mesh, u, exact: ExactField, order=None,
                   fractional: Sequence[float] = (0.5, -0.5),
                   lift_surface: bool = True) -> dict:
    """Norms of u_h - u* on the current configuration.

    Returns a dict with keys ``bulk_l2``, ``bulk_h1`` (seminorm; only if
    the exact gradient is supplied), ``surf_l2`` and ``surf_hs{+s}`` for
    each requested fractional order s.
    """
    u = np.asarray(u, dtype=float)
    out = {}

    g = bulk_geometry(mesh, order=order)
    wdet = g["rule"].weights[None, :] * g["det"]
    uh = u[mesh.tets] @ g["values"].T                     # (E, q)
    pts = g["points"].reshape(-1, 3)
    ue = exact.value(pts).reshape(uh.shape)
    out["bulk_l2"] = math.sqrt(float(np.sum(wdet * (uh - ue) ** 2)))
    if exact.gradient is not None:
        # grad u_h at quadrature points: (E, q, 3)
        guh = np.einsum("ec,eqci->eqi", u[mesh.tets], g["grads"])
        gue = exact.gradient(pts).reshape(guh.shape)
        diff2 = np.sum((guh - gue) ** 2, axis=-1)
        out["bulk_h1"] = math.sqrt(float(np.sum(wdet * diff2)))

    gs = surface_geometry(mesh, order=order)
    wmeas = gs["rule"].weights[None, :] * gs["measure"]
    trh = u[mesh.faces] @ gs["values"].T
    spts = gs["points"].reshape(-1, 3)
    if lift_surface and mesh.surface is not None:
        spts = closest_point(mesh.surface, spts)
    tre = exact.value(spts).reshape(trh.shape)
    out["surf_l2"] = math.sqrt(float(np.sum(wmeas * (trh - tre) ** 2)))

    if fractional:
        pencil = SurfacePencil.from_mesh(mesh, order=order)
        fact = spectral_factorization(pencil)
        nodes = mesh.nodes[: mesh.n_surface]
        if lift_surface and mesh.surface is not None:
            nodes = closest_point(mesh.surface, nodes)
        diff = u[: mesh.n_surface] - exact.value(nodes)
        for s in fractional:
            key = f"surf_hs{s:+g}"
            out[key] = frac_norm(fact, s, diff)
    return out


def eoc_sequence(hs, errors):
    """Observed convergence orders between consecutive (h, error) pairs."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if hs.shape != errors.shape or hs.ndim != 1:
        raise ValueError("hs and errors must be 1-d arrays of equal length")
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
    return rates


@dataclass
class ErrorRow:
    """One refinement level of a convergence study."""

    level: int
    h: float
    n_nodes: int
    data: dict = field(default_factory=dict)
