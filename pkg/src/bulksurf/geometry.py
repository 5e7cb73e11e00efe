"""Analytic parent surfaces and geometric fields.

A parent surface supplies the closest-point map used to snap mesh nodes,
exact normals/curvatures used to initialize the evolving nodal fields,
and the projection Jacobian needed when assembling lifted operators on
the exact surface.

Curvature conventions: the mean curvature is the sum of principal
curvatures (a sphere of radius R has H = 2/R) and the squared Weingarten
norm is kappa_1^2 + kappa_2^2 (2/R^2 on that sphere), both positive for
convex bodies with the outward normal.
"""
from __future__ import annotations

import numpy as np

from .mesh import surface_geometry


class ProjectionError(RuntimeError):
    """Closest-point projection failed to converge."""


class Sphere:
    """Sphere of given radius centred at the origin (or `center`)."""

    def __init__(self, radius, center=(0.0, 0.0, 0.0)):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def implicit(self, p):
        d = np.asarray(p, dtype=float) - self.center
        return np.einsum("...i,...i->...", d, d) - self.radius ** 2

    def closest_point(self, p):
        d = np.asarray(p, dtype=float) - self.center
        r = np.linalg.norm(d, axis=-1)
        if np.any(r < 1e-12 * self.radius):
            raise ProjectionError("closest point undefined at the centre")
        return self.center + self.radius * d / r[..., None]

    def normal(self, p):
        d = np.asarray(p, dtype=float) - self.center
        return d / np.linalg.norm(d, axis=-1)[..., None]

    def mean_curvature(self, p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1], 2.0 / self.radius)

    def weingarten_sq(self, p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1], 2.0 / self.radius ** 2)

    def projection_jacobian(self, p):
        """d(closest_point)/dp, shape (..., 3, 3)."""
        d = np.asarray(p, dtype=float) - self.center
        r = np.linalg.norm(d, axis=-1)
        nhat = d / r[..., None]
        eye = np.broadcast_to(np.eye(3), d.shape + (3,))
        proj = eye - nhat[..., :, None] * nhat[..., None, :]
        return (self.radius / r)[..., None, None] * proj


class Ellipsoid:
    """Axis-aligned ellipsoid x^2/a^2 + y^2/b^2 + z^2/c^2 = 1."""

    def __init__(self, semi_axes):
        self.semi_axes = np.asarray(semi_axes, dtype=float)
        if self.semi_axes.shape != (3,) or np.any(self.semi_axes <= 0):
            raise ValueError("semi_axes must be three positive numbers")
        self._d = 1.0 / self.semi_axes ** 2

    def implicit(self, p):
        p = np.asarray(p, dtype=float)
        return np.einsum("...i,i->...", p ** 2, self._d) - 1.0

    def closest_point(self, p, tol=1e-13, max_iter=100):
        """Damped Newton on the Lagrange condition a_i = p_i/(1 + mu d_i)."""
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 3)
        d = self._d
        mu = np.zeros(len(flat))
        lo = -(1.0 - 1e-9) / d.max()  # keep all denominators positive
        for _ in range(max_iter):
            den = 1.0 + mu[:, None] * d[None, :]
            F = ((flat ** 2 * d) / den ** 2).sum(axis=1) - 1.0
            if np.all(np.abs(F) < tol):
                break
            dF = (-2.0 * flat ** 2 * d ** 2 / den ** 3).sum(axis=1)
            step = F / dF
            mu_new = mu - step
            mu = np.maximum(mu_new, 0.5 * (mu + lo))  # damp toward validity
        else:
            raise ProjectionError("ellipsoid projection did not converge")
        a = flat / (1.0 + mu[:, None] * d[None, :])
        return a.reshape(p.shape)

    def normal(self, p):
        g = 2.0 * np.asarray(p, dtype=float) * self._d
        return g / np.linalg.norm(g, axis=-1)[..., None]

    def _shape_operator(self, p):
        p = np.asarray(p, dtype=float)
        grad = 2.0 * p * self._d
        norm = np.linalg.norm(grad, axis=-1)
        n = grad / norm[..., None]
        eye = np.broadcast_to(np.eye(3), p.shape + (3,)).copy()
        P = eye - n[..., :, None] * n[..., None, :]
        hess = np.zeros(p.shape + (3,))
        for i in range(3):
            hess[..., i, i] = 2.0 * self._d[i]
        W = np.einsum("...ij,...jk,...kl->...il", P, hess, P)
        return W / norm[..., None, None]

    def mean_curvature(self, p):
        W = self._shape_operator(p)
        return np.einsum("...ii->...", W)

    def weingarten_sq(self, p):
        W = self._shape_operator(p)
        return np.einsum("...ij,...ij->...", W, W)

    def projection_jacobian(self, p, step=1e-6):
        p = np.asarray(p, dtype=float)
        out = np.empty(p.shape + (3,))
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            out[..., i] = (self.closest_point(p + e)
                           - self.closest_point(p - e)) / (2 * step)
        return out


def closest_point(surface, points):
    """Closest point on the analytic surface (vectorized)."""
    return surface.closest_point(points)


def exact_geometry(surface, points):
    """Normal, mean curvature and squared Weingarten norm at surface points."""
    pts = np.asarray(points, dtype=float)
    return (surface.normal(pts), surface.mean_curvature(pts),
            surface.weingarten_sq(pts))


def init_surface_fields(mesh, surface=None):
    """Exact nodal normal and mean-curvature fields at boundary nodes.

    Boundary nodes are projected to the parent surface before evaluation,
    so meshes whose boundary nodes already sit on the surface are handled
    exactly (the projection is idempotent).
    """
    surface = mesh.surface if surface is None else surface
    if surface is None:
        raise ValueError("mesh has no parent surface and none was given")
    xb = surface.closest_point(mesh.nodes[:mesh.n_surface])
    n0, H0, _ = exact_geometry(surface, xb)
    return n0, H0


def discrete_weingarten_sq(mesh, n_nodal, order=None, geo=None):
    """Squared Frobenius norm of the tangential Jacobian of the nodal
    normal field, evaluated at boundary quadrature points.

    `n_nodal` has shape (n_surface, 3).  Returns an (n_faces, nq) array.
    """
    n_nodal = np.asarray(n_nodal, dtype=float).reshape(mesh.n_surface, 3)
    g = surface_geometry(mesh, order=order) if geo is None else geo
    nf = n_nodal[mesh.faces]                      # (F, a, 3)
    jac = np.einsum("fal,fqai->fqli", nf, g["sgrads"])
    return np.einsum("fqli,fqli->fq", jac, jac)
