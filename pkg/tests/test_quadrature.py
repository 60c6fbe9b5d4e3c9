import numpy as np
import pytest

from prfpoly.quadrature import CellQuadrature, divide_vanishing, endpoint_limit


def test_cell_quadrature_polynomials():
    x = np.linspace(0, 1, 41)
    q = CellQuadrature(x)
    for k in range(4):
        assert q.integrate(x ** k) == pytest.approx(1 / (k + 1), rel=1e-12)
    assert q.integrate_fn(np.exp) == pytest.approx(np.e - 1, rel=1e-12)


def test_weighted_and_vector_valued():
    x = np.linspace(0, 1, 201)
    q = CellQuadrature(x)
    vals = np.stack([np.sin(x), np.cos(x)], axis=1)
    out = q.integrate(vals, lambda y: 1 / (1 + y))
    from scipy.integrate import quad
    ref = [quad(lambda y: np.sin(y) / (1 + y), 0, 1)[0], quad(lambda y: np.cos(y) / (1 + y), 0, 1)[0]]
    np.testing.assert_allclose(out, ref, rtol=1e-9)


def test_divide_vanishing_endpoints():
    x = np.linspace(0, 1, 101)
    v = x * (1 - x) * np.exp(x)
    r = divide_vanishing(x, v, at0=1, at1=1)
    np.testing.assert_allclose(r, np.exp(x), rtol=1e-5)
    r0 = divide_vanishing(x, np.sin(x), at0=1)
    assert r0[0] == pytest.approx(1.0, abs=1e-6)
    assert endpoint_limit(x, np.cos(x), end=-1) == pytest.approx(np.cos(1.0), abs=1e-6)
