"""Operator assembly: matrix structure, exact sums and load identities."""

import numpy as np
import pytest
import scipy.sparse as sp

from bulksurf.assembly import (
    assemble_operator_set,
    assemble_surface,
    assemble_tangential_gradient,
    configuration_stamp,
    kron_lift,
    load_f_H,
    load_f_n,
    load_f_u,
    robin_matrix,
)
from bulksurf.geometry import init_surface_fields
from bulksurf.mesh import build_ball_mesh, bulk_volume, surface_area, \
    surface_geometry
from bulksurf.solver import solve_robin


def _sym_eigs(mat):
    dense = mat.toarray()
    assert np.abs(dense - dense.T).max() <= 1e-13 * max(np.abs(dense).max(), 1)
    return np.linalg.eigvalsh(dense)


@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("level", [0, 1])
def test_mass_matrices_are_spd(level, degree):
    mesh = build_ball_mesh(1.0, level, degree)
    ops = assemble_operator_set(mesh, 1.0)
    assert _sym_eigs(ops.M_bulk).min() > 0
    assert _sym_eigs(ops.M_surf).min() > 0


@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("level", [0, 1])
def test_stiffness_matrices_are_psd_with_constant_kernel(level, degree):
    mesh = build_ball_mesh(1.0, level, degree)
    ops = assemble_operator_set(mesh, 1.0)
    for A in (ops.A_bulk, ops.A_surf):
        scale = np.abs(A).max()
        assert _sym_eigs(A).min() >= -1e-12 * scale
        ones = np.ones(A.shape[0])
        assert np.abs(A @ ones).max() <= 1e-12 * scale


@pytest.mark.parametrize("degree", [1, 2])
def test_mass_sums_reproduce_measures(degree):
    mesh = build_ball_mesh(1.0, 2, degree)
    ops = assemble_operator_set(mesh, 1.0)
    ones_b = np.ones(mesh.n_nodes)
    ones_s = np.ones(mesh.n_surface)
    vol = bulk_volume(mesh)
    area = surface_area(mesh)
    assert abs(ones_b @ (ops.M_bulk @ ones_b) - vol) <= 1e-12 * vol
    assert abs(ones_s @ (ops.M_surf @ ones_s) - area) <= 1e-12 * area


def test_robin_matrix_combines_blocks():
    mesh = build_ball_mesh(1.0, 1, 2)
    alpha = 0.75
    ops = assemble_operator_set(mesh, alpha)
    manual = robin_matrix(ops.A_bulk, ops.M_surf, alpha, mesh.n_surface)
    assert np.abs((ops.L - manual)).max() == 0.0
    # the Robin operator is SPD for alpha > 0
    assert _sym_eigs(ops.L).min() > 0


def test_operator_blocks_partition():
    mesh = build_ball_mesh(1.0, 1, 1)
    ops = assemble_operator_set(mesh, 1.0)
    ng = mesh.n_surface
    M = ops.M_bulk.toarray()
    np.testing.assert_array_equal(ops.M_gg.toarray(), M[:ng, :ng])
    np.testing.assert_array_equal(ops.M_ig.toarray(), M[ng:, :ng])


def test_kron_lift_is_blockdiag():
    mesh = build_ball_mesh(1.0, 1, 1)
    A = assemble_surface(mesh)[1]
    K = kron_lift(A)
    diff = K - sp.kron(sp.eye(3), A)
    assert np.abs(diff).max() == 0.0


def test_surface_pair_matches_operator_set():
    mesh = build_ball_mesh(1.0, 1, 2)
    M, A = assemble_surface(mesh)
    ops = assemble_operator_set(mesh, 1.0)
    assert np.abs(M - ops.M_surf).max() == 0.0
    assert np.abs(A - ops.A_surf).max() == 0.0


def test_load_f_u_identity():
    """f_u = -M_bulk 1 + M_surf (Q + beta H) scattered to boundary rows."""
    mesh = build_ball_mesh(1.0, 1, 2)
    ops = assemble_operator_set(mesh, 1.0)
    ng = mesh.n_surface
    rng = np.random.default_rng(8)
    H = rng.normal(size=ng)
    Q = rng.normal(size=ng)
    beta = 1.3
    f = load_f_u(mesh, H, Q, beta)
    manual = -ops.M_bulk @ np.ones(mesh.n_nodes)
    manual[:ng] += ops.M_surf @ (Q + beta * H)
    np.testing.assert_allclose(f, manual, atol=1e-13)


def test_load_f_n_on_unit_sphere_facets():
    """With the exact nodal normal, |A_h|^2 = 2 and f_n = 2 beta M n."""
    mesh = build_ball_mesh(1.0, 2, 1)
    ops = assemble_operator_set(mesh, 1.0)
    n0, _ = init_surface_fields(mesh)
    beta = 0.7
    f = load_f_n(mesh, n0, beta)
    target = 2.0 * beta * (kron_lift(ops.M_surf) @ n0.T.reshape(-1))
    np.testing.assert_allclose(f, target, atol=1e-13)


def test_load_f_H_on_unit_sphere_facets():
    """With the exact nodal normal, f_H = -2 M V on the unit ball."""
    mesh = build_ball_mesh(1.0, 2, 1)
    ops = assemble_operator_set(mesh, 1.0)
    n0, _ = init_surface_fields(mesh)
    ng = mesh.n_surface
    V = np.linspace(-0.3, 0.5, ng)
    f = load_f_H(mesh, n0, V)
    np.testing.assert_allclose(f, -2.0 * (ops.M_surf @ V), atol=1e-13)


def test_tangential_gradient_annihilates_constants():
    mesh = build_ball_mesh(1.0, 1, 2)
    D = assemble_tangential_gradient(mesh)
    out = D @ np.ones(mesh.n_surface)
    assert np.abs(out).max() <= 1e-13


def test_tangential_gradient_coordinate_sums():
    """Column sums of D on coordinates equal the integrated tangential
    projector, computed independently from the face normals."""
    mesh = build_ball_mesh(1.0, 0, 1)
    D = assemble_tangential_gradient(mesh)
    geo = surface_geometry(mesh)
    w = geo["rule"].weights
    P_int = np.zeros((3, 3))
    for f in range(mesh.n_faces):
        nrm = geo["normal"][f][0]
        area = w @ geo["measure"][f]
        P_int += area * (np.eye(3) - np.outer(nrm, nrm))
    ng = mesh.n_surface
    for m_comp in range(3):
        Dx = D @ mesh.nodes[:ng, m_comp]
        sums = np.array([Dx[l * ng:(l + 1) * ng].sum() for l in range(3)])
        np.testing.assert_allclose(sums, P_int[:, m_comp], atol=1e-13)


def test_robin_solution_monotone_in_alpha():
    """With a pure bulk load the boundary energy decreases as alpha grows."""
    mesh = build_ball_mesh(1.0, 0, 1)
    ng = mesh.n_surface
    H = np.full(ng, 2.0)
    energies = []
    for alpha in (0.5, 1.0, 2.0, 4.0):
        ops = assemble_operator_set(mesh, alpha)
        beta = 1.0
        Q = np.full(ng, -2.0)  # cancels beta*H: no surface load
        f = load_f_u(mesh, H, Q, beta)
        u = solve_robin(ops, f)
        ug = u[:ng]
        energies.append(float(ug @ (ops.M_surf @ ug)))
    assert all(a > b for a, b in zip(energies, energies[1:]))


def test_quadrature_order_override_converges():
    """The curved-face area measure is not polynomial; raising the rule
    order must move the answer monotonically towards a reference rule."""
    mesh = build_ball_mesh(1.0, 1, 2)
    area_ref = surface_area(mesh, order=12)
    err_low = abs(surface_area(mesh, order=2) - area_ref)
    err_default = abs(surface_area(mesh) - area_ref)
    err_high = abs(surface_area(mesh, order=10) - area_ref)
    assert err_default < err_low
    assert err_high < 1e-9
    assert err_default < 1e-4 * area_ref


def test_configuration_stamp_tracks_inputs():
    mesh = build_ball_mesh(1.0, 1, 1)
    s1 = configuration_stamp(mesh, 1.0, 4)
    s2 = configuration_stamp(mesh, 1.0, 4)
    assert s1 == s2
    assert configuration_stamp(mesh, 2.0, 4) != s1
    moved = mesh.copy()
    moved.move_nodes(mesh.nodes * 1.01)
    assert configuration_stamp(moved, 1.0, 4) != s1
