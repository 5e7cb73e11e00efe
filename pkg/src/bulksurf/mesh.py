"""Tetrahedral bulk meshes with a matched triangulated boundary surface.

The ball family starts from the octahedron macro mesh (eight tetrahedra
joining the unit-octant boundary triangles to the centre) and is refined
uniformly; newly created boundary vertices are snapped radially onto the
analytic parent surface.  Global degrees of freedom are numbered
boundary-first so that the trace operator is a plain index view
``u[:n_surface]``.

Element maps are isoparametric Lagrange of degree k in {1, 2, 3}:
higher-order boundary nodes are snapped to the parent surface, interior
higher-order nodes are placed by affine lattice interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .reference import reference_element, simplex_quadrature

_TET_EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


class MeshDegeneracyError(RuntimeError):
    """An element map is degenerate (nonpositive Jacobian or zero area)."""


class MeshBudgetError(RuntimeError):
    """Refinement would exceed the configured node budget."""


@dataclass(frozen=True)
class MeshQualityReport:
    h: float                  # max element diameter (vertex skeleton)
    min_radius_ratio: float   # normalized inradius/circumradius, in (0, 1]
    min_jacobian: float
    max_jacobian: float
    n_elements: int
    n_nodes: int
    n_surface_nodes: int


class BulkSurfaceMesh:
    """Degree-k tetrahedral mesh of a ball-like domain with boundary data.

    Attributes
    ----------
    nodes : (N, 3) array, boundary nodes first
    tets : (n_el, n_loc) int array of node ids
    faces : (n_f, n_loc_face) int array of node ids (< n_surface), with
        outward orientation
    n_surface : number of boundary nodes
    surface : analytic parent surface or None
    """

    def __init__(self, verts, vtets, degree, surface=None, level=None,
                 max_nodes=2_000_000):
        verts = np.asarray(verts, dtype=float)
        struct = np.asarray(vtets, dtype=np.intp).copy()
        vtets = _fix_tet_orientation(verts, struct)
        vfaces = _extract_boundary_faces(verts, vtets)
        if not 1 <= degree <= 3:
            raise ValueError(f"degree {degree} outside supported range 1..3")
        self.degree = int(degree)
        self.surface = surface
        self.level = level
        self.max_nodes = int(max_nodes)
        self.verts = verts
        # structural order feeds refinement (the split pattern composes
        # across generations); the oriented copy feeds geometry/assembly
        self.vtets_struct = struct
        self.vtets = vtets
        self.vfaces = vfaces
        if surface is not None:
            bverts = np.unique(vfaces)
            self.verts[bverts] = surface.closest_point(self.verts[bverts])
        self._generate_nodes()

    # -- construction -------------------------------------------------

    def _generate_nodes(self):
        k = self.degree
        ref3 = reference_element(3, k)
        ref2 = reference_element(2, k)
        key_to_id = {}
        keys = []

        def key_of(vert_ids, multi):
            return tuple(sorted((int(g), int(a))
                                for g, a in zip(vert_ids, multi) if a > 0))

        faces_k = np.empty((len(self.vfaces), ref2.n_nodes), dtype=np.intp)
        for f, tri in enumerate(self.vfaces):
            for a, multi in enumerate(ref2.multi_indices):
                key = key_of(tri, multi)
                nid = key_to_id.get(key)
                if nid is None:
                    nid = len(keys)
                    key_to_id[key] = nid
                    keys.append(key)
                faces_k[f, a] = nid
        n_surface = len(keys)

        tets_k = np.empty((len(self.vtets), ref3.n_nodes), dtype=np.intp)
        for e, tet in enumerate(self.vtets):
            for a, multi in enumerate(ref3.multi_indices):
                key = key_of(tet, multi)
                nid = key_to_id.get(key)
                if nid is None:
                    nid = len(keys)
                    key_to_id[key] = nid
                    keys.append(key)
                tets_k[e, a] = nid

        if len(keys) > self.max_nodes:
            raise MeshBudgetError(
                f"mesh would have {len(keys)} nodes, budget is {self.max_nodes}")

        nodes = np.zeros((len(keys), 3))
        for nid, key in enumerate(keys):
            x = np.zeros(3)
            for g, a in key:
                x += (a / k) * self.verts[g]
            nodes[nid] = x
        if self.surface is not None and n_surface:
            nodes[:n_surface] = self.surface.closest_point(nodes[:n_surface])

        self.nodes = nodes
        self.tets = tets_k
        self.faces = faces_k
        self.n_surface = n_surface

    # -- basic queries -------------------------------------------------

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.tets.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def n_interior(self):
        return self.n_nodes - self.n_surface

    @property
    def default_quadrature_order(self):
        return 2 * self.degree + 2

    def move_nodes(self, new_nodes):
        """Replace node coordinates (connectivity is immutable)."""
        new_nodes = np.asarray(new_nodes, dtype=float)
        if new_nodes.shape != self.nodes.shape:
            raise ValueError("node array shape mismatch")
        self.nodes = new_nodes.copy()

    def copy(self):
        out = object.__new__(BulkSurfaceMesh)
        out.__dict__.update(self.__dict__)
        out.nodes = self.nodes.copy()
        return out


def _fix_tet_orientation(verts, tets):
    tets = tets.copy()
    a, b, c, d = (verts[tets[:, i]] for i in range(4))
    vol6 = np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a)
    if np.any(vol6 == 0.0):
        raise MeshDegeneracyError("degenerate tetrahedron in input mesh")
    flip = vol6 < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
    return tets


def _extract_boundary_faces(verts, tets):
    """Faces belonging to exactly one tet, oriented outward."""
    local = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    count = {}
    owner = {}
    for e, tet in enumerate(tets):
        for li, tri in enumerate(local):
            key = tuple(sorted(int(tet[i]) for i in tri))
            count[key] = count.get(key, 0) + 1
            owner[key] = (e, int(tet[li]))  # li is the opposite vertex slot
    out = []
    for e, tet in enumerate(tets):
        for li, tri in enumerate(local):
            key = tuple(sorted(int(tet[i]) for i in tri))
            if count[key] != 1:
                continue
            a, b, c = key
            opp = owner[key][1]
            normal = np.cross(verts[b] - verts[a], verts[c] - verts[a])
            if np.dot(normal, verts[opp] - verts[a]) > 0:
                b, c = c, b
            out.append((a, b, c))
    return np.array(out, dtype=np.intp)


def build_ball_mesh(radius, level, degree, max_nodes=2_000_000):
    """Octahedron macro mesh of the ball, refined `level` times.

    The vertex skeleton is the red-refined octahedron lattice pushed onto
    the ball by the radial map that carries each octahedral shell
    |x|_1 = t onto the sphere of radius t.  The boundary lands exactly on
    the parent sphere while the interior grades smoothly, so the family
    stays quasi-uniform (h halves per level).  Boundary higher-order
    nodes are then snapped radially and interior higher-order nodes are
    placed affinely within their element.
    """
    from .geometry import Sphere

    if radius <= 0:
        raise ValueError("radius must be positive")
    if level < 0:
        raise ValueError("refinement level must be nonnegative")
    surface = Sphere(radius)
    verts = radius * np.array([
        [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0],
        [-1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0],
        [0.0, 0, 0],
    ])
    axis = {+1: (0, 1, 2), -1: (3, 4, 5)}
    tets = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                tets.append((axis[sx][0], axis[sy][1], axis[sz][2], 6))
    tets = np.array(tets, dtype=np.intp)
    for _ in range(level):
        verts, tets = _red_refine(verts, tets, None, max_nodes)
    verts = _octahedron_to_ball(verts)
    return BulkSurfaceMesh(verts, tets, degree, surface=surface, level=level,
                           max_nodes=max_nodes)


def _octahedron_to_ball(verts):
    """Map octahedral shells |x|_1 = t onto spheres |x|_2 = t (vertexwise)."""
    l1 = np.abs(verts).sum(axis=1)
    l2 = np.linalg.norm(verts, axis=1)
    scale = np.ones(len(verts))
    nz = l2 > 0
    scale[nz] = l1[nz] / l2[nz]
    return verts * scale[:, None]


def refine(mesh: BulkSurfaceMesh) -> BulkSurfaceMesh:
    """Uniform red refinement; returns a new mesh of the same degree."""
    verts, tets = _red_refine(mesh.verts, mesh.vtets_struct, mesh.surface,
                              mesh.max_nodes)
    level = None if mesh.level is None else mesh.level + 1
    return BulkSurfaceMesh(verts, tets, mesh.degree, surface=mesh.surface,
                           level=level, max_nodes=mesh.max_nodes)


def _red_refine(verts, tets, surface, max_nodes):
    """Split every tet into 8 using the standard structural pattern.

    The four corner children keep the corners and the inner octahedron
    is always split along the diagonal joining the (0,2) and (1,3)
    midpoints in the parent's stored local order, with children emitted
    in the canonical local order that makes the rule compose across
    generations.  This keeps the family of child shapes finite, so
    refinement is deterministic and quality-stable; orientation is
    normalized separately at mesh construction.
    """
    edges = sorted({tuple(sorted((int(t[i]), int(t[j]))))
                    for t in tets for i, j in _TET_EDGE_PAIRS})
    if len(verts) + len(edges) > max_nodes:
        raise MeshBudgetError("refinement exceeds node budget")
    mid_id = {e: len(verts) + i for i, e in enumerate(edges)}
    mids = 0.5 * (verts[[e[0] for e in edges]] + verts[[e[1] for e in edges]])
    new_verts = np.vstack([verts, mids])

    bfaces = _extract_boundary_faces(verts, tets)
    if surface is not None and len(bfaces):
        bedges = {tuple(sorted((int(f[i]), int(f[j]))))
                  for f in bfaces for i, j in ((0, 1), (0, 2), (1, 2))}
        ids = np.array([mid_id[e] for e in sorted(bedges)], dtype=np.intp)
        new_verts[ids] = surface.closest_point(new_verts[ids])

    children = []
    for t in tets:
        v = [int(x) for x in t]
        m01 = mid_id[tuple(sorted((v[0], v[1])))]
        m02 = mid_id[tuple(sorted((v[0], v[2])))]
        m03 = mid_id[tuple(sorted((v[0], v[3])))]
        m12 = mid_id[tuple(sorted((v[1], v[2])))]
        m13 = mid_id[tuple(sorted((v[1], v[3])))]
        m23 = mid_id[tuple(sorted((v[2], v[3])))]
        children += [
            (v[0], m01, m02, m03),
            (m01, v[1], m12, m13),
            (m02, m12, v[2], m23),
            (m03, m13, m23, v[3]),
            (m01, m02, m03, m13),
            (m01, m02, m12, m13),
            (m02, m03, m13, m23),
            (m02, m12, m13, m23),
        ]
    return new_verts, np.array(children, dtype=np.intp)


# -- element geometry ------------------------------------------------------


@lru_cache(maxsize=None)
def _tables(dim, degree, order):
    ref = reference_element(dim, degree)
    rule = simplex_quadrature(dim, order)
    vals, grads = ref.tabulate(rule.points)
    return rule, vals, grads


def _det33(m):
    return (m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
            - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
            + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]))


def _inv33(m, det):
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1]
    out[..., 0, 1] = m[..., 0, 2] * m[..., 2, 1] - m[..., 0, 1] * m[..., 2, 2]
    out[..., 0, 2] = m[..., 0, 1] * m[..., 1, 2] - m[..., 0, 2] * m[..., 1, 1]
    out[..., 1, 0] = m[..., 1, 2] * m[..., 2, 0] - m[..., 1, 0] * m[..., 2, 2]
    out[..., 1, 1] = m[..., 0, 0] * m[..., 2, 2] - m[..., 0, 2] * m[..., 2, 0]
    out[..., 1, 2] = m[..., 0, 2] * m[..., 1, 0] - m[..., 0, 0] * m[..., 1, 2]
    out[..., 2, 0] = m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]
    out[..., 2, 1] = m[..., 0, 1] * m[..., 2, 0] - m[..., 0, 0] * m[..., 2, 1]
    out[..., 2, 2] = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return out / det[..., None, None]


def bulk_geometry(mesh, order=None, element_ids=None):
    """Isoparametric geometry of bulk elements at quadrature points.

    Returns a dict with quadrature weights, physical points (E, q, 3),
    Jacobian determinants (E, q), basis values (q, n_loc) and physical
    basis gradients (E, q, n_loc, 3).
    """
    order = mesh.default_quadrature_order if order is None else order
    rule, vals, grads = _tables(3, mesh.degree, order)
    tets = mesh.tets if element_ids is None else mesh.tets[element_ids]
    X = mesh.nodes[tets]                       # (E, n_loc, 3)
    # jac[e,q,i,j] = sum_a X[e,a,i] grads[q,a,j]
    jac = np.tensordot(X, grads, axes=(1, 1)).transpose(0, 2, 1, 3)
    det = _det33(jac)
    if np.any(det <= 0):
        raise MeshDegeneracyError("nonpositive Jacobian determinant")
    inv = _inv33(jac, det)
    # gx[e,q,a,i] = sum_j grads[q,a,j] inv[e,q,j,i]
    gx = np.matmul(grads[None, :, :, :], inv)
    pts = np.tensordot(X, vals, axes=(1, 1)).transpose(0, 2, 1)
    return {"rule": rule, "points": pts, "det": det, "values": vals,
            "grads": gx}


def surface_geometry(mesh, order=None, face_ids=None):
    """Geometry of boundary faces: points, area measure, outward unit
    normals and tangential basis gradients at quadrature points.

    The tangential gradient is assembled through the pseudo-inverse of the
    surface Jacobian, which coincides with projecting an ambient gradient
    by (I - n n^T) on the discrete surface.
    """
    order = mesh.default_quadrature_order if order is None else order
    rule, vals, grads = _tables(2, mesh.degree, order)
    faces = mesh.faces if face_ids is None else mesh.faces[face_ids]
    X = mesh.nodes[faces]                        # (F, n_loc, 3)
    # tang[f,q,i,j] = sum_a X[f,a,i] grads[q,a,j]
    tang = np.tensordot(X, grads, axes=(1, 1)).transpose(0, 2, 1, 3)
    cross = np.cross(tang[..., 0], tang[..., 1])
    meas = np.linalg.norm(cross, axis=-1)
    if np.any(meas <= 0):
        raise MeshDegeneracyError("degenerate boundary face")
    normal = cross / meas[..., None]
    gram = np.matmul(tang.transpose(0, 1, 3, 2), tang)
    ginv = _inv22(gram)
    # sgrad[f,q,c,i] = sum_{a,b} grads[q,c,b] ginv[f,q,a,b] tang[f,q,i,a]
    sgrad = np.matmul(np.matmul(grads[None, :, :, :], ginv.transpose(0, 1, 3, 2)),
                      tang.transpose(0, 1, 3, 2))
    pts = np.tensordot(X, vals, axes=(1, 1)).transpose(0, 2, 1)
    return {"rule": rule, "points": pts, "measure": meas, "normal": normal,
            "values": vals, "sgrads": sgrad, "tangents": tang}


def _inv22(g):
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1]
    out[..., 1, 1] = g[..., 0, 0]
    out[..., 0, 1] = -g[..., 0, 1]
    out[..., 1, 0] = -g[..., 1, 0]
    return out / det[..., None, None]


def element_geometry(mesh, element_id, order=None):
    """Single-element view of :func:`bulk_geometry`."""
    g = bulk_geometry(mesh, order=order, element_ids=[element_id])
    return {k: (v[0] if isinstance(v, np.ndarray) and k != "values" else v)
            for k, v in g.items()}


def surface_element_geometry(mesh, face_id, order=None):
    """Single-face view of :func:`surface_geometry`."""
    g = surface_geometry(mesh, order=order, face_ids=[face_id])
    return {k: (v[0] if isinstance(v, np.ndarray) and k != "values" else v)
            for k, v in g.items()}


# -- quality ---------------------------------------------------------------


def radius_ratios(mesh):
    """Normalized inradius/circumradius per tet on the degree-1 node
    skeleton of the current configuration; the regular tet scores 1."""
    V = mesh.nodes[mesh.tets[:, :4]]  # vertex slots come first per element
    a, b, c, d = (V[:, i] for i in range(4))
    vol = np.abs(np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a)) / 6.0
    areas = np.zeros(len(V))
    for tri in ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)):
        p, q, r = (V[:, i] for i in tri)
        areas += 0.5 * np.linalg.norm(np.cross(q - p, r - p), axis=-1)
    r_in = 3.0 * vol / areas
    r_circ = _circumradius(a, b, c, d)
    return np.clip(3.0 * r_in / r_circ, 0.0, 1.0)


def quality_report(mesh) -> MeshQualityReport:
    """Mesh quality on the vertex skeleton plus isoparametric Jacobians.

    The radius ratio is 3 * inradius / circumradius per tet, normalized so
    the regular tetrahedron scores 1.
    """
    V = mesh.nodes[mesh.tets[:, :4]]
    diffs = V[:, :, None, :] - V[:, None, :, :]
    dists = np.linalg.norm(diffs, axis=-1)
    h = float(dists.max())
    ratio = radius_ratios(mesh)
    geo = bulk_geometry(mesh)
    return MeshQualityReport(
        h=h,
        min_radius_ratio=float(ratio.min()),
        min_jacobian=float(geo["det"].min()),
        max_jacobian=float(geo["det"].max()),
        n_elements=mesh.n_elements,
        n_nodes=mesh.n_nodes,
        n_surface_nodes=mesh.n_surface,
    )


def _circumradius(a, b, c, d):
    rows = np.stack([b - a, c - a, d - a], axis=1)          # (E, 3, 3)
    rhs = 0.5 * np.einsum("eij,eij->ei", rows, rows)
    centre = np.linalg.solve(rows, rhs[..., None])[..., 0]
    return np.linalg.norm(centre, axis=-1)


def mean_surface_radius(mesh, order=None):
    """Area-weighted average of |x| over boundary quadrature points."""
    g = surface_geometry(mesh, order=order)
    w = g["rule"].weights[None, :] * g["measure"]
    r = np.linalg.norm(g["points"], axis=-1)
    return float((w * r).sum() / w.sum())


def surface_area(mesh, order=None):
    g = surface_geometry(mesh, order=order)
    return float((g["rule"].weights[None, :] * g["measure"]).sum())


def bulk_volume(mesh, order=None):
    g = bulk_geometry(mesh, order=order)
    return float((g["rule"].weights[None, :] * g["det"]).sum())
