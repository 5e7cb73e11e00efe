"""Fractional surface operators: spectra, square roots, sharp constants."""

import numpy as np
import pytest

from bulksurf.fracops import (
    SurfacePencil,
    displacement_pencil_path,
    frac_apply,
    frac_norm,
    inverse_estimate_constant,
    mass_norm,
    operator_time_derivative_check,
    spectral_factorization,
    sylvester_sqrt_apply,
)
from bulksurf.assembly import assemble_surface
from bulksurf.mesh import build_ball_mesh, quality_report


@pytest.fixture(scope="module")
def pencil_l2():
    mesh = build_ball_mesh(1.0, 2, 1)
    return SurfacePencil.from_mesh(mesh)


@pytest.fixture(scope="module")
def fact_l2(pencil_l2):
    return spectral_factorization(pencil_l2)


def test_pencil_matches_direct_assembly():
    mesh = build_ball_mesh(1.0, 1, 2)
    pencil = SurfacePencil.from_mesh(mesh)
    M, A = assemble_surface(mesh)
    assert np.abs(pencil.M - M).max() == 0.0
    assert np.abs(pencil.A - A).max() == 0.0
    assert pencil.n == mesh.n_surface


def test_eigenvalues_start_at_one(fact_l2):
    lam = fact_l2.eigenvalues
    assert np.all(np.diff(lam) >= -1e-12)
    assert abs(fact_l2.lambda_min - 1.0) <= 1e-10
    assert fact_l2.lambda_max > 1.0
    # the lambda = 1 eigenmode is the constant function
    z0 = fact_l2.modes[:, 0]
    assert np.abs(z0 - z0.mean()).max() <= 1e-8 * np.abs(z0.mean())


def test_modes_are_mass_orthonormal(fact_l2, pencil_l2):
    Z = fact_l2.modes
    gram = Z.T @ (pencil_l2.M @ Z)
    assert np.abs(gram - np.eye(pencil_l2.n)).max() <= 1e-10


def test_zero_power_is_identity(fact_l2, pencil_l2):
    rng = np.random.default_rng(3)
    u = rng.normal(size=pencil_l2.n)
    np.testing.assert_allclose(frac_apply(fact_l2, 0.0, u), u, atol=1e-10)
    assert abs(frac_norm(fact_l2, 0.0, u)
               - mass_norm(pencil_l2.M, u)) <= 1e-10


def test_power_composition_and_inverse(fact_l2, pencil_l2):
    rng = np.random.default_rng(4)
    u = rng.normal(size=pencil_l2.n)
    half_twice = frac_apply(fact_l2, 0.5, frac_apply(fact_l2, 0.5, u))
    whole = frac_apply(fact_l2, 1.0, u)
    np.testing.assert_allclose(half_twice, whole, atol=1e-10)
    round_trip = frac_apply(fact_l2, -1.0, frac_apply(fact_l2, 1.0, u))
    np.testing.assert_allclose(round_trip, u, atol=1e-10)


def test_full_power_matches_quadratic_form(fact_l2, pencil_l2):
    """|u|_1^2 must equal u^T (M + A) u, tying the spectral route to the
    assembled matrices."""
    rng = np.random.default_rng(5)
    u = rng.normal(size=pencil_l2.n)
    direct = u @ ((pencil_l2.M + pencil_l2.A) @ u)
    assert abs(frac_norm(fact_l2, 1.0, u) ** 2 - direct) <= 1e-9 * abs(direct)


def test_norms_monotone_in_order(fact_l2):
    rng = np.random.default_rng(6)
    u = rng.normal(size=fact_l2.modes.shape[0])
    norms = [frac_norm(fact_l2, s, u) for s in (-1.0, -0.5, 0.0, 0.5, 1.0)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(norms, norms[1:]))


def test_interpolation_inequality(fact_l2):
    """|u|_{1/2}^2 <= |u|_0 |u|_1 by Cauchy-Schwarz in the spectral sum."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = rng.normal(size=fact_l2.modes.shape[0])
        lhs = frac_norm(fact_l2, 0.5, u) ** 2
        rhs = frac_norm(fact_l2, 0.0, u) * frac_norm(fact_l2, 1.0, u)
        assert lhs <= rhs * (1 + 1e-12)


def test_duality_pairing(fact_l2, pencil_l2):
    """(u, v)_M <= |u|_{1/2} |v|_{-1/2} with equality for aligned data."""
    rng = np.random.default_rng(8)
    u = rng.normal(size=pencil_l2.n)
    v = rng.normal(size=pencil_l2.n)
    pairing = abs(u @ (pencil_l2.M @ v))
    bound = frac_norm(fact_l2, 0.5, u) * frac_norm(fact_l2, -0.5, v)
    assert pairing <= bound * (1 + 1e-12)
    v_aligned = frac_apply(fact_l2, 1.0, u)
    pairing = u @ (pencil_l2.M @ v_aligned)
    bound = frac_norm(fact_l2, 0.5, u) * frac_norm(fact_l2, -0.5, v_aligned)
    assert abs(pairing - bound) <= 1e-9 * bound


def test_sylvester_route_matches_spectral(fact_l2, pencil_l2):
    rng = np.random.default_rng(9)
    u = rng.normal(size=pencil_l2.n)
    spectral = frac_apply(fact_l2, 1.0, u)
    quad = sylvester_sqrt_apply(pencil_l2, u, n_quad=64)
    scale = np.abs(spectral).max()
    assert np.abs(quad - spectral).max() <= 1e-8 * scale
    # quadrature refinement is monotone towards the spectral answer
    errs = [np.abs(sylvester_sqrt_apply(pencil_l2, u, n_quad=nq)
                   - spectral).max() for nq in (16, 32, 64)]
    assert errs[0] > errs[1] > errs[2]


def test_sylvester_rejects_empty_rule(pencil_l2):
    with pytest.raises(ValueError):
        sylvester_sqrt_apply(pencil_l2, np.zeros(pencil_l2.n), n_quad=0)


def test_inverse_estimate_constant_is_sharp(fact_l2):
    mesh = build_ball_mesh(1.0, 2, 1)
    h = quality_report(mesh).h
    C = inverse_estimate_constant(fact_l2, h, 0.0, 0.5)
    assert C == pytest.approx(
        fact_l2.lambda_max ** 0.25 * h ** 0.5, rel=1e-14)
    # the bound holds over random functions and is attained on the top mode
    rng = np.random.default_rng(10)
    ratios = []
    for _ in range(50):
        u = rng.normal(size=fact_l2.modes.shape[0])
        ratios.append(frac_norm(fact_l2, 0.5, u)
                      / frac_norm(fact_l2, 0.0, u))
    bound = C / h ** 0.5 * h ** 0.0  # = C h^{-1/2} with h powers spelt out
    assert max(ratios) <= bound * (1 + 1e-12)
    top = fact_l2.modes[:, -1]
    attained = frac_norm(fact_l2, 0.5, top) / frac_norm(fact_l2, 0.0, top)
    assert attained == pytest.approx(bound, rel=1e-10)


def test_inverse_estimate_rejects_reversed_orders(fact_l2):
    with pytest.raises(ValueError):
        inverse_estimate_constant(fact_l2, 0.5, 0.5, 0.0)


def test_derivative_check_on_moving_pencil():
    mesh = build_ball_mesh(1.0, 1, 1)
    rng = np.random.default_rng(11)
    disp = 0.05 * rng.normal(size=mesh.nodes.shape)
    path = displacement_pencil_path(mesh, disp)
    report = operator_time_derivative_check(path)
    assert max(report.sylvester_residuals) <= 1e-12
    assert report.fd_errors[-1] < report.fd_errors[0]
    for order in report.fd_orders:
        assert abs(order - 2.0) <= 0.3


def test_derivative_check_static_family_is_exact():
    """A frozen pencil has dP = 0 and the solver must return exactly 0."""
    mesh = build_ball_mesh(1.0, 1, 1)
    pencil = SurfacePencil.from_mesh(mesh)
    report = operator_time_derivative_check(lambda theta: pencil)
    assert report.dP_norm == 0.0
    assert all(r == 0.0 for r in report.sylvester_residuals)
    assert all(e == 0.0 for e in report.fd_errors)


def test_displacement_path_validates_shape():
    mesh = build_ball_mesh(1.0, 1, 1)
    with pytest.raises(ValueError):
        displacement_pencil_path(mesh, np.zeros((3, 3)))
