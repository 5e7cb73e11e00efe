"""Reference simplex elements and quadrature rules.

Lagrange elements of degree 1..3 on the unit triangle / tetrahedron with
nodes on the principal lattice, plus conical-product Gauss-Jacobi
quadrature that is exact for polynomials of a requested total degree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

# Canonical sub-entity orderings of the reference simplex.  Local vertex v0
# sits at the origin, v_i at the i-th coordinate unit vector.
EDGES = {
    2: ((0, 1), (0, 2), (1, 2)),
    3: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
}
FACES = {
    2: (),
    3: ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)),
}


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the unit simplex (weights include the 1/d! measure)."""

    dim: int
    order: int
    points: np.ndarray   # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def _gauss_01(n):
    """Gauss-Legendre nodes/weights for integral over [0, 1]."""
    x, w = roots_jacobi(n, 0.0, 0.0)
    return (x + 1.0) / 2.0, w / 2.0


def _jacobi_01(n, alpha):
    """Nodes/weights for integral of f(x) * (1-x)**alpha over [0, 1]."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def simplex_quadrature(dim: int, order: int) -> QuadratureRule:
    """Conical-product rule exact for total degree <= order.

    The simplex is collapsed onto a hypercube (Duffy transform); the
    resulting radial weights are absorbed into Gauss-Jacobi rules, which
    keeps the product rule exact for total degree 2n-1 with n points per
    direction.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported simplex dimension {dim}")
    if order < 0:
        raise ValueError("quadrature order must be nonnegative")
    n = max(1, -(-(order + 1) // 2))  # ceil((order+1)/2)
    u, wu = _gauss_01(n)
    v, wv = _jacobi_01(n, 1.0)
    if dim == 2:
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv)
        pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
        return QuadratureRule(2, order, pts, W.ravel())
    w, ww = _jacobi_01(n, 2.0)
    U, V, Wd = np.meshgrid(u, v, w, indexing="ij")
    wts = np.einsum("i,j,k->ijk", wu, wv, ww).ravel()
    x = U * (1.0 - V) * (1.0 - Wd)
    y = V * (1.0 - Wd)
    pts = np.column_stack([x.ravel(), y.ravel(), Wd.ravel()])
    return QuadratureRule(3, order, pts, wts)


def _lattice_multi_indices(dim: int, degree: int):
    """Barycentric lattice multi-indices, grouped vertex/edge/face/cell.

    The grouping makes global degrees of freedom straightforward to share
    between neighbouring elements: a multi-index supported on m vertices
    belongs to the (m-1)-dimensional sub-entity spanned by them.
    """
    k = degree
    nv = dim + 1
    out = []
    for v in range(nv):
        a = [0] * nv
        a[v] = k
        out.append(tuple(a))
    for (i, j) in EDGES.get(dim, ()) if dim >= 2 else ():
        for t in range(1, k):
            a = [0] * nv
            a[i], a[j] = k - t, t
            out.append(tuple(a))
    if dim == 2 and k >= 3:
        for ai in range(k - 2, 0, -1):
            for aj in range(k - 1 - ai, 0, -1):
                out.append((ai, aj, k - ai - aj))
    if dim == 3:
        for (i, j, l) in FACES[3]:
            for ai in range(k - 2, 0, -1):
                for aj in range(k - 1 - ai, 0, -1):
                    a = [0, 0, 0, 0]
                    a[i], a[j], a[l] = ai, aj, k - ai - aj
                    out.append(tuple(a))
        for a0 in range(k - 3, 0, -1):
            for a1 in range(k - 2 - a0, 0, -1):
                for a2 in range(k - 1 - a0 - a1, 0, -1):
                    out.append((a0, a1, a2, k - a0 - a1 - a2))
    return tuple(out)


def _monomial_exponents(dim: int, degree: int):
    exps = []
    for total in range(degree + 1):
        if dim == 2:
            exps.extend((p, total - p) for p in range(total, -1, -1))
        else:
            for p in range(total, -1, -1):
                exps.extend((p, q, total - p - q) for q in range(total - p, -1, -1))
    return np.array(exps, dtype=int)


@dataclass(frozen=True)
class ReferenceElement:
    """Degree-k Lagrange element on the unit simplex."""

    dim: int
    degree: int
    multi_indices: tuple = field(repr=False)
    nodes: np.ndarray = field(repr=False)     # (n_loc, dim)
    _coeff: np.ndarray = field(repr=False)    # monomial-to-nodal map

    @property
    def n_nodes(self) -> int:
        return len(self.multi_indices)

    def tabulate(self, points: np.ndarray):
        """Values (nq, n_loc) and gradients (nq, n_loc, dim) at points."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        exps = _monomial_exponents(self.dim, self.degree)
        vals = _mono_values(pts, exps)
        grads = _mono_grads(pts, exps)
        return vals @ self._coeff, np.einsum("qmd,ma->qad", grads, self._coeff)


def _mono_values(pts, exps):
    # power with 0**0 == 1
    return np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)


def _mono_grads(pts, exps):
    nq, dim = pts.shape
    out = np.zeros((nq, len(exps), dim))
    for d in range(dim):
        e = exps.copy()
        coef = e[:, d].astype(float)
        e[:, d] = np.maximum(e[:, d] - 1, 0)
        out[:, :, d] = coef * np.prod(pts[:, None, :] ** e[None, :, :], axis=2)
    return out


@lru_cache(maxsize=None)
def reference_element(dim: int, degree: int) -> ReferenceElement:
    if dim not in (2, 3):
        raise ValueError(f"unsupported simplex dimension {dim}")
    if not 1 <= degree <= 3:
        raise ValueError(f"polynomial degree {degree} outside supported range 1..3")
    multi = _lattice_multi_indices(dim, degree)
    nodes = np.array([[a[i] / degree for i in range(1, dim + 1)] for a in multi])
    exps = _monomial_exponents(dim, degree)
    vand = _mono_values(nodes, exps)
    if vand.shape[0] != vand.shape[1]:
        raise RuntimeError("lattice/monomial count mismatch")
    coeff = np.linalg.inv(vand)
    return ReferenceElement(dim, degree, multi, nodes, coeff)
