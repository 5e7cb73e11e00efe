"""Ball mesh family: construction, refinement, quality and geometry sums."""

import numpy as np
import pytest

from bulksurf.mesh import (
    BulkSurfaceMesh,
    MeshBudgetError,
    MeshDegeneracyError,
    build_ball_mesh,
    bulk_volume,
    element_geometry,
    mean_surface_radius,
    quality_report,
    refine,
    surface_area,
    surface_element_geometry,
    surface_geometry,
)

# Regression baselines of the graded ball family (degree-1 skeleton); the
# family becomes exactly self-similar from level 3 on.
ASYMPTOTIC_RADIUS_RATIO = 0.492791
ASYMPTOTIC_DET_RATIO = 0.174845


def _reference_tet_mesh(scale=1.0, degree=1):
    verts = scale * np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    return BulkSurfaceMesh(verts, np.array([[0, 1, 2, 3]]), degree)


def test_level0_counts_and_snapping():
    mesh = build_ball_mesh(1.0, 0, 1)
    assert mesh.n_nodes == 7
    assert mesh.n_surface == 6
    assert mesh.n_elements == 8
    assert mesh.n_faces == 8
    radii = np.linalg.norm(mesh.nodes[:6], axis=1)
    assert np.all(radii == 1.0)  # axis vertices snap exactly
    assert quality_report(mesh).h == pytest.approx(np.sqrt(2.0), abs=1e-15)


def test_level1_counts():
    mesh = build_ball_mesh(1.0, 1, 1)
    assert mesh.n_nodes == 25
    assert mesh.n_surface == 18
    assert mesh.n_elements == 64
    assert mesh.n_faces == 32
    radii = np.linalg.norm(mesh.nodes[:18], axis=1)
    np.testing.assert_allclose(radii, 1.0, atol=1e-15)


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_boundary_first_node_ordering(degree):
    mesh = build_ball_mesh(1.0, 1, degree)
    assert mesh.faces.max() < mesh.n_surface
    interior = mesh.nodes[mesh.n_surface:]
    assert np.linalg.norm(interior, axis=1).max() < 1.0 - 1e-10


@pytest.mark.parametrize("degree", [1, 2])
def test_boundary_nodes_on_sphere(degree):
    mesh = build_ball_mesh(2.5, 2, degree)
    radii = np.linalg.norm(mesh.nodes[:mesh.n_surface], axis=1)
    np.testing.assert_allclose(radii, 2.5, rtol=1e-14)


def test_refine_matches_built_level():
    built = build_ball_mesh(1.0, 1, 2)
    refined = refine(build_ball_mesh(1.0, 0, 2))
    np.testing.assert_array_equal(refined.verts, built.verts)
    np.testing.assert_array_equal(refined.vtets, built.vtets)
    np.testing.assert_array_equal(refined.tets, built.tets)
    np.testing.assert_array_equal(refined.faces, built.faces)
    np.testing.assert_array_equal(refined.nodes, built.nodes)


def test_refine_multiplies_tets_by_eight():
    mesh = build_ball_mesh(1.0, 1, 1)
    fine = refine(mesh)
    assert fine.n_elements == 8 * mesh.n_elements
    assert fine.level == mesh.level + 1


def test_h_halves_on_ball_family():
    hs = [quality_report(build_ball_mesh(1.0, lv, 1)).h for lv in range(2, 5)]
    for coarse, fine in zip(hs, hs[1:]):
        assert 0.45 <= fine / coarse <= 0.55


def test_quality_stable_under_refinement():
    """Radius-ratio changes settle below 10% per refinement (regression)."""
    reports = [quality_report(build_ball_mesh(1.0, lv, 1))
               for lv in range(2, 5)]
    ratios = [r.min_radius_ratio for r in reports]
    for coarse, fine in zip(ratios, ratios[1:]):
        assert abs(fine - coarse) / coarse <= 0.10
    assert ratios[-1] == pytest.approx(ASYMPTOTIC_RADIUS_RATIO, abs=1e-4)
    last = reports[-1]
    assert last.min_jacobian / last.max_jacobian == pytest.approx(
        ASYMPTOTIC_DET_RATIO, abs=1e-4)


def test_quality_stable_under_refine_chain():
    mesh = build_ball_mesh(1.0, 1, 1)
    prev = quality_report(mesh).min_radius_ratio
    for _ in range(2):
        mesh = refine(mesh)
        cur = quality_report(mesh).min_radius_ratio
        assert abs(cur - prev) / prev <= 0.10
        prev = cur


def test_all_jacobians_positive():
    for degree in (1, 2):
        rep = quality_report(build_ball_mesh(1.0, 2, degree))
        assert rep.min_jacobian > 0
        assert 0 < rep.min_radius_ratio <= 1


def test_watertight():
    mesh = build_ball_mesh(1.0, 2, 1)
    count = {}
    for tet in mesh.vtets:
        for tri in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            key = tuple(sorted(int(tet[i]) for i in tri))
            count[key] = count.get(key, 0) + 1
    boundary = {tuple(sorted(map(int, f))) for f in mesh.vfaces}
    for key, c in count.items():
        if key in boundary:
            assert c == 1
        else:
            assert c == 2
    assert len(boundary) == mesh.n_faces


def test_face_normals_point_outward():
    mesh = build_ball_mesh(1.0, 2, 2)
    geo = surface_geometry(mesh)
    centroid = geo["points"].reshape(-1, 3)
    normals = geo["normal"].reshape(-1, 3)
    lengths = np.linalg.norm(normals, axis=1)
    np.testing.assert_allclose(lengths, 1.0, atol=1e-12)
    assert np.all(np.einsum("ij,ij->i", normals, centroid) > 0)


def test_partition_of_unity_on_elements():
    mesh = build_ball_mesh(1.0, 1, 2)
    geo = element_geometry(mesh, 0, order=6)
    np.testing.assert_allclose(geo["values"].sum(axis=1), 1.0, atol=1e-12)
    assert np.all(geo["det"] > 0)


def test_identity_element_has_unit_jacobian():
    mesh = _reference_tet_mesh()
    geo = element_geometry(mesh, 0)
    np.testing.assert_allclose(geo["det"], 1.0, atol=1e-14)


def test_scaled_element_jacobian():
    mesh = _reference_tet_mesh(scale=2.0)
    geo = element_geometry(mesh, 0)
    np.testing.assert_allclose(geo["det"], 8.0, rtol=1e-14)
    assert bulk_volume(mesh) == pytest.approx(8.0 / 6.0, rel=1e-14)


def test_degenerate_tet_is_rejected():
    verts = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],  # coplanar
    ])
    with pytest.raises(MeshDegeneracyError):
        BulkSurfaceMesh(verts, np.array([[0, 1, 2, 3]]), 1)


def test_node_budget_enforced():
    with pytest.raises(MeshBudgetError):
        build_ball_mesh(1.0, 3, 1, max_nodes=100)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        build_ball_mesh(1.0, 0, 5)
    with pytest.raises(ValueError):
        build_ball_mesh(-1.0, 0, 1)
    with pytest.raises(ValueError):
        build_ball_mesh(1.0, -1, 1)


def test_volume_converges_to_ball_volume():
    exact = 4.0 * np.pi / 3.0
    errs = [abs(bulk_volume(build_ball_mesh(1.0, lv, 1)) - exact)
            for lv in (2, 3, 4)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert abs(orders[-1] - 2.0) <= 0.3
    assert errs[0] > errs[1] > errs[2]


def test_volume_quadratic_geometry_is_closer():
    exact = 4.0 * np.pi / 3.0
    err1 = abs(bulk_volume(build_ball_mesh(1.0, 2, 1)) - exact)
    err2 = abs(bulk_volume(build_ball_mesh(1.0, 2, 2)) - exact)
    assert err2 < 0.1 * err1


def test_surface_area_converges_to_sphere_area():
    exact = 4.0 * np.pi
    errs = [abs(surface_area(build_ball_mesh(1.0, lv, 1)) - exact)
            for lv in (1, 2, 3)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert abs(orders[-1] - 2.0) <= 0.3


def test_octant_face_geometry_level0():
    mesh = build_ball_mesh(1.0, 0, 1)
    areas = []
    for f in range(mesh.n_faces):
        geo = surface_element_geometry(mesh, f)
        w = geo["rule"].weights
        areas.append(float(w @ geo["measure"]))
        nrm = geo["normal"]
        expected = np.sign(geo["points"][:1])  # octant sign pattern
        np.testing.assert_allclose(nrm, np.repeat(
            expected / np.sqrt(3.0), len(nrm), axis=0), atol=1e-14)
    np.testing.assert_allclose(areas, np.sqrt(3.0) / 2.0, rtol=1e-14)
    assert surface_area(mesh) == pytest.approx(4.0 * np.sqrt(3.0), rel=1e-14)


def test_mean_surface_radius_approaches_one():
    r2 = mean_surface_radius(build_ball_mesh(1.0, 2, 2))
    r3 = mean_surface_radius(build_ball_mesh(1.0, 3, 2))
    assert abs(r2 - 1.0) < 5e-3
    assert abs(r3 - 1.0) < abs(r2 - 1.0)


def test_move_nodes_and_copy_are_independent():
    mesh = build_ball_mesh(1.0, 1, 2)
    clone = mesh.copy()
    moved = mesh.nodes * 1.1
    clone.move_nodes(moved)
    assert np.linalg.norm(mesh.nodes - clone.nodes) > 0.1
    np.testing.assert_array_equal(clone.nodes, moved)
    assert bulk_volume(clone) == pytest.approx(1.1 ** 3 * bulk_volume(mesh),
                                               rel=1e-12)
