import numpy as np
import pytest
from scipy import integrate

from prfpoly.diffusion import ScaleSpeed, heat_apply
from prfpoly.spectral import EigenSystem, spectral_apply, spectral_density, spectral_reference
from prfpoly.types import Grid


def test_first_eigenvalue():
    es = EigenSystem(5)
    assert es.eigenvalues[0] == 2.0
    # the first eigenfunction is proportional to x(1-x); L applied to it
    x = np.linspace(0.05, 0.95, 19)
    a1 = lambda y: es.alpha(y)[0]
    np.testing.assert_allclose(ScaleSpeed(0.0).generator(a1, x), -2.0 * a1(x), rtol=1e-6)


def test_eigenfunctions_satisfy_equation():
    es = EigenSystem(8)
    x = np.linspace(0.05, 0.95, 19)
    L = ScaleSpeed(0.0).generator
    for n in range(8):
        fn = lambda y, n=n: es.alpha(y)[n]
        np.testing.assert_allclose(L(fn, x, h=1e-4), -es.eigenvalues[n] * fn(x),
                                   rtol=1e-4, atol=1e-5 * es.eigenvalues[n])


def test_orthonormality():
    es = EigenSystem(30)
    z, w = np.polynomial.legendre.leggauss(200)
    y = 0.5 * (z + 1)
    w = 0.5 * w
    r = es.reduced(y)
    # alpha_n alpha_k / (y(1-y)) = y(1-y) r_n r_k
    gram = (r * (w * y * (1 - y))) @ r.T
    np.testing.assert_allclose(gram, np.eye(30), atol=1e-8)


def test_density_symmetric():
    rng = np.random.default_rng(2)
    x, y = rng.random(20), rng.random(20)
    np.testing.assert_allclose(spectral_density(0.2, x, y), spectral_density(0.2, y, x).T,
                               rtol=1e-12)


def test_density_integrates_to_apply():
    x = np.array([0.2, 0.6])
    f = lambda y: y * (1 - y) ** 2
    ref = spectral_apply(f, 0.3, x)
    got = [integrate.quad(lambda y: spectral_density(0.3, [xi], [y])[0, 0] * f(y) / (y * (1 - y)),
                          0, 1, limit=200)[0] for xi in x]
    np.testing.assert_allclose(got, ref, rtol=1e-8)


@pytest.mark.parametrize("t", [0.05, 0.2, 1.0])
@pytest.mark.parametrize("f", [lambda y: y * (1 - y), lambda y: y ** 2 * (1 - y)])
def test_agrees_with_crank_nicolson(t, f):
    grid = Grid.uniform(800, min(1e-3, t / 200))
    cn = heat_apply(f, t, 0.0, grid, keep="final").final[:, 0]
    ref = spectral_reference(t, grid.nodes, f=f, nmax=60)
    assert np.max(np.abs(cn - ref)) <= 1e-4


def test_rejects_selection_and_bad_args():
    with pytest.raises(ValueError):
        spectral_reference(0.1, [0.5], y=[0.5], gamma=1.0)
    with pytest.raises(ValueError):
        spectral_reference(0.1, [0.5])
    with pytest.raises(ValueError):
        spectral_reference(0.1, [0.5], y=[0.5], nmax=0)
    with pytest.raises(ValueError):
        spectral_density(0.0, [0.5], [0.5])
