"""Finite element matrices and load vectors on the current configuration.

All operators are assembled from scratch at a given node configuration;
nothing is updated incrementally.  Vector-valued surface quantities use a
component-major layout: entry i + l * n_surface is the l-th Cartesian
component at boundary node i, matching ``kron_lift`` block structure.

The trace operator is never stored as a matrix: boundary-first numbering
makes it the index view ``u[:n_surface]``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .geometry import discrete_weingarten_sq
from .mesh import bulk_geometry, surface_geometry


def _scatter_matrix(elem_mats, rows_conn, cols_conn, shape):
    n_r, n_c = rows_conn.shape[1], cols_conn.shape[1]
    rows = np.repeat(rows_conn, n_c, axis=1).ravel()
    cols = np.tile(cols_conn, (1, n_r)).ravel()
    mat = sparse.coo_matrix((elem_mats.ravel(), (rows, cols)), shape=shape)
    return mat.tocsr()


def _scatter_vector(elem_vecs, conn, size):
    return np.bincount(conn.ravel(), weights=elem_vecs.ravel(),
                       minlength=size)


def _mass_elements(wdet, B):
    # Me[e,a,b] = sum_q wdet[e,q] B[q,a] B[q,b]
    n_q, n_loc = B.shape
    Bab = (B[:, :, None] * B[:, None, :]).reshape(n_q, n_loc * n_loc)
    return (wdet @ Bab).reshape(-1, n_loc, n_loc)


def _stiffness_elements(wdet, G):
    # Ke[e,a,b] = sum_{q,i} wdet[e,q] G[e,q,a,i] G[e,q,b,i]
    E, n_q, n_loc, dim = G.shape
    Gw = G * wdet[:, :, None, None]
    A1 = Gw.transpose(0, 2, 1, 3).reshape(E, n_loc, n_q * dim)
    A2 = G.transpose(0, 2, 1, 3).reshape(E, n_loc, n_q * dim)
    return np.matmul(A1, A2.transpose(0, 2, 1))


def assemble_bulk(mesh, order=None, geo=None):
    """Bulk mass and stiffness matrices (N x N)."""
    g = bulk_geometry(mesh, order=order) if geo is None else geo
    wdet = g["rule"].weights[None, :] * g["det"]
    Me = _mass_elements(wdet, g["values"])
    Ke = _stiffness_elements(wdet, g["grads"])
    shape = (mesh.n_nodes, mesh.n_nodes)
    M = _scatter_matrix(Me, mesh.tets, mesh.tets, shape)
    A = _scatter_matrix(Ke, mesh.tets, mesh.tets, shape)
    return M, A


def assemble_surface(mesh, order=None, geo=None):
    """Surface mass and Laplace-Beltrami stiffness (n_surface square)."""
    g = surface_geometry(mesh, order=order) if geo is None else geo
    wm = g["rule"].weights[None, :] * g["measure"]
    Me = _mass_elements(wm, g["values"])
    Ke = _stiffness_elements(wm, g["sgrads"])
    shape = (mesh.n_surface, mesh.n_surface)
    M = _scatter_matrix(Me, mesh.faces, mesh.faces, shape)
    A = _scatter_matrix(Ke, mesh.faces, mesh.faces, shape)
    return M, A


def assemble_tangential_gradient(mesh, order=None, geo=None):
    """Mixed matrix D with D[i + l*n_surface, j] = int psi_i (grad_G psi_j)_l."""
    g = surface_geometry(mesh, order=order) if geo is None else geo
    wm = g["rule"].weights[None, :] * g["measure"]
    B = g["values"]
    ng = mesh.n_surface
    De = np.einsum("fq,qa,fqbl->fabl", wm, B, g["sgrads"], optimize=True)
    blocks = []
    for l in range(3):
        blocks.append(_scatter_matrix(De[..., l], mesh.faces, mesh.faces,
                                      (ng, ng)))
    return sparse.vstack(blocks, format="csr")


def robin_matrix(A_bulk, M_surf, alpha, n_surface):
    """Robin system matrix: bulk stiffness plus alpha times the surface
    mass lifted to the bulk index set (boundary-first numbering)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive for a definite Robin matrix")
    n = A_bulk.shape[0]
    pad = sparse.coo_matrix(M_surf.tocoo())
    lifted = sparse.coo_matrix((alpha * pad.data, (pad.row, pad.col)),
                               shape=(n, n))
    return (A_bulk + lifted.tocsr()).tocsr()


def kron_lift(op, d=3):
    """I_d (x) op, acting on component-major stacked vector fields."""
    return sparse.kron(sparse.identity(d, format="csr"), op, format="csr")


@dataclass
class OperatorSet:
    """All matrices of the semi-discretization at one configuration."""

    n_surface: int
    alpha: float
    M_bulk: sparse.csr_matrix
    A_bulk: sparse.csr_matrix
    M_surf: sparse.csr_matrix
    A_surf: sparse.csr_matrix
    D: sparse.csr_matrix
    L: sparse.csr_matrix
    stamp: str = ""

    # bulk block views; g = boundary (first n_surface), i = interior
    def _block(self, mat, rows, cols):
        ng = self.n_surface
        sl = {"g": slice(0, ng), "i": slice(ng, None)}
        return mat[sl[rows], :][:, sl[cols]]

    @property
    def M_gg(self):
        return self._block(self.M_bulk, "g", "g")

    @property
    def M_gi(self):
        return self._block(self.M_bulk, "g", "i")

    @property
    def M_ig(self):
        return self._block(self.M_bulk, "i", "g")

    @property
    def M_ii(self):
        return self._block(self.M_bulk, "i", "i")

    @property
    def A_gg(self):
        return self._block(self.A_bulk, "g", "g")

    @property
    def A_gi(self):
        return self._block(self.A_bulk, "g", "i")

    @property
    def A_ig(self):
        return self._block(self.A_bulk, "i", "g")

    @property
    def A_ii(self):
        return self._block(self.A_bulk, "i", "i")


def configuration_stamp(mesh, alpha, order):
    hasher = hashlib.sha256()
    hasher.update(mesh.nodes.tobytes())
    hasher.update(np.float64(alpha).tobytes())
    hasher.update(str((mesh.degree, order, mesh.n_surface)).encode())
    return hasher.hexdigest()


def assemble_operator_set(mesh, alpha, order=None, geo_bulk=None,
                          geo_surf=None) -> OperatorSet:
    order = mesh.default_quadrature_order if order is None else order
    geo_bulk = bulk_geometry(mesh, order=order) if geo_bulk is None else geo_bulk
    geo_surf = (surface_geometry(mesh, order=order)
                if geo_surf is None else geo_surf)
    M_bulk, A_bulk = assemble_bulk(mesh, geo=geo_bulk)
    M_surf, A_surf = assemble_surface(mesh, geo=geo_surf)
    D = assemble_tangential_gradient(mesh, geo=geo_surf)
    L = robin_matrix(A_bulk, M_surf, alpha, mesh.n_surface)
    return OperatorSet(
        n_surface=mesh.n_surface, alpha=alpha,
        M_bulk=M_bulk, A_bulk=A_bulk, M_surf=M_surf, A_surf=A_surf,
        D=D, L=L, stamp=configuration_stamp(mesh, alpha, order))


# -- load vectors -----------------------------------------------------------


def load_f_u(mesh, H, Q, beta, order=None, geo_bulk=None, geo_surf=None):
    """Robin right-hand side: -int phi_i + int (beta H_h + Q_h) tr(phi_i).

    H and Q are nodal values on the boundary; the surface term only
    touches boundary entries because interior basis functions have zero
    trace.
    """
    gb = bulk_geometry(mesh, order=order) if geo_bulk is None else geo_bulk
    gs = surface_geometry(mesh, order=order) if geo_surf is None else geo_surf
    wdet = gb["rule"].weights[None, :] * gb["det"]
    fe = -np.einsum("eq,qa->ea", wdet, gb["values"])
    f = _scatter_vector(fe, mesh.tets, mesh.n_nodes)

    H = np.asarray(H, dtype=float)
    Q = np.asarray(Q, dtype=float)
    wm = gs["rule"].weights[None, :] * gs["measure"]
    data_q = np.einsum("fb,qb->fq", beta * H[mesh.faces] + Q[mesh.faces],
                       gs["values"])
    fe_s = np.einsum("fq,fq,qa->fa", wm, data_q, gs["values"], optimize=True)
    f[:mesh.n_surface] += _scatter_vector(fe_s, mesh.faces, mesh.n_surface)
    return f


def load_f_n(mesh, n, beta, order=None, geo_surf=None):
    """Normal-equation load: beta * int |A_h|^2 (n_h)_l psi_i, returned
    component-major with length 3 * n_surface."""
    gs = surface_geometry(mesh, order=order) if geo_surf is None else geo_surf
    n = np.asarray(n, dtype=float).reshape(mesh.n_surface, 3)
    wsq = discrete_weingarten_sq(mesh, n, geo=gs)
    wm = gs["rule"].weights[None, :] * gs["measure"]
    nq = np.einsum("fbl,qb->fql", n[mesh.faces], gs["values"])
    fe = np.einsum("fq,fq,fql,qa->fal", wm, beta * wsq, nq, gs["values"],
                   optimize=True)
    out = np.empty(3 * mesh.n_surface)
    for l in range(3):
        out[l * mesh.n_surface:(l + 1) * mesh.n_surface] = \
            _scatter_vector(fe[..., l], mesh.faces, mesh.n_surface)
    return out


def load_f_H(mesh, n, V, order=None, geo_surf=None):
    """Curvature-equation load: -int |A_h|^2 V_h psi_i."""
    gs = surface_geometry(mesh, order=order) if geo_surf is None else geo_surf
    n = np.asarray(n, dtype=float).reshape(mesh.n_surface, 3)
    V = np.asarray(V, dtype=float)
    wsq = discrete_weingarten_sq(mesh, n, geo=gs)
    wm = gs["rule"].weights[None, :] * gs["measure"]
    Vq = np.einsum("fb,qb->fq", V[mesh.faces], gs["values"])
    fe = -np.einsum("fq,fq,fq,qa->fa", wm, wsq, Vq, gs["values"],
                    optimize=True)
    return _scatter_vector(fe, mesh.faces, mesh.n_surface)
