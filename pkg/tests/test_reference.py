"""Reference simplices: quadrature exactness and basis properties."""

import math

import numpy as np
import pytest

from bulksurf.reference import reference_element, simplex_quadrature


def _monomial_integral(exps):
    """Exact integral of prod(x_i^a_i) over the unit simplex.

    The Dirichlet integral formula gives prod(a_i!) / (sum(a_i) + d)!.
    """
    d = len(exps)
    num = 1.0
    for a in exps:
        num *= math.factorial(a)
    return num / math.factorial(sum(exps) + d)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6])
def test_quadrature_exact_for_monomials(dim, order):
    rule = simplex_quadrature(dim, order)
    assert rule.points.shape[1] == dim
    assert np.all(rule.weights > 0)
    for total in range(order + 1):
        for exps in _exponents(dim, total):
            vals = np.prod(rule.points ** np.array(exps), axis=1)
            approx = float(rule.weights @ vals)
            exact = _monomial_integral(exps)
            assert abs(approx - exact) <= 1e-13 * max(1.0, abs(exact)), (
                exps, approx, exact)


def _exponents(dim, total):
    if dim == 1:
        yield (total,)
        return
    for lead in range(total + 1):
        for rest in _exponents(dim - 1, total - lead):
            yield (lead,) + rest


@pytest.mark.parametrize("dim", [2, 3])
def test_quadrature_weights_sum_to_simplex_volume(dim):
    vol = 1.0 / math.factorial(dim)
    for order in (1, 3, 6):
        rule = simplex_quadrature(dim, order)
        assert abs(rule.weights.sum() - vol) <= 1e-14


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", [1, 2, 3])
def test_basis_is_nodal(dim, degree):
    elem = reference_element(dim, degree)
    vals, _ = elem.tabulate(elem.nodes)
    np.testing.assert_allclose(vals, np.eye(elem.n_nodes), atol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", [1, 2, 3])
def test_partition_of_unity(dim, degree):
    rng = np.random.default_rng(42)
    elem = reference_element(dim, degree)
    # random barycentric points inside the simplex
    bary = rng.dirichlet(np.ones(dim + 1), size=100)
    pts = bary[:, 1:]
    vals, grads = elem.tabulate(pts)
    np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(grads.sum(axis=1), 0.0, atol=1e-11)


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("degree", [1, 2, 3])
def test_tabulated_gradients_match_finite_differences(dim, degree):
    rng = np.random.default_rng(7)
    elem = reference_element(dim, degree)
    bary = rng.dirichlet(np.full(dim + 1, 5.0), size=10)
    pts = bary[:, 1:]
    _, grads = elem.tabulate(pts)
    eps = 1e-6
    for axis in range(dim):
        shift = np.zeros(dim)
        shift[axis] = eps
        vp, _ = elem.tabulate(pts + shift)
        vm, _ = elem.tabulate(pts - shift)
        fd = (vp - vm) / (2 * eps)
        np.testing.assert_allclose(grads[:, :, axis], fd, atol=5e-9)


def test_degree_must_be_supported():
    with pytest.raises(ValueError):
        reference_element(3, 0)
    with pytest.raises(ValueError):
        reference_element(3, 4)


def test_polynomial_reproduction():
    """Degree-k interpolation reproduces degree-k polynomials exactly."""
    rng = np.random.default_rng(3)
    for degree in (1, 2, 3):
        elem = reference_element(3, degree)

        def poly(p):
            x, y, z = p[..., 0], p[..., 1], p[..., 2]
            out = 1.0 + x - 2 * y + 0.5 * z
            if degree >= 2:
                out = out + x * y - z ** 2 + 0.25 * x * z
            if degree >= 3:
                out = out + x * y * z - 0.5 * y ** 3
            return out

        coeffs = poly(elem.nodes)
        bary = rng.dirichlet(np.ones(4), size=50)
        pts = bary[:, 1:]
        vals, _ = elem.tabulate(pts)
        np.testing.assert_allclose(vals @ coeffs, poly(pts), atol=1e-12)
