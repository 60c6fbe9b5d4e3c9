"""Eigenfunction expansion of the neutral (gamma = 0) killed diffusion.

For gamma = 0 the eigenfunctions are ``x(1-x) C^{(3/2)}_{n-1}(1-2x)`` with
eigenvalues ``n(n+1)``.  This gives an independent reference for the
Crank-Nicolson solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_gegenbauer, roots_legendre


def _check_gamma(gamma: float) -> None:
    if gamma != 0:
        raise ValueError("the spectral reference is only available for gamma = 0")


@dataclass(frozen=True)
class EigenSystem:
    """Neutral eigenpairs, normalised in L^2(m) with ``m(dx) = dx / (x(1-x))``."""

    nmax: int = 60

    @property
    def eigenvalues(self) -> np.ndarray:
        n = np.arange(1, self.nmax + 1)
        return n * (n + 1.0)

    @property
    def norms(self) -> np.ndarray:
        n = np.arange(1, self.nmax + 1)
        # int x(1-x) C_{n-1}^{3/2}(1-2x)^2 dx = n(n+1) / (4(2n+1))
        return np.sqrt(4.0 * (2 * n + 1) / (n * (n + 1.0)))

    def reduced(self, x) -> np.ndarray:
        """``alpha_n(x) / (x(1-x))``, shape ``(nmax, len(x))``; bounded on [0, 1]."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = np.arange(self.nmax)
        vals = eval_gegenbauer(n[:, None], 1.5, 1.0 - 2.0 * x[None, :])
        return vals * self.norms[:, None]

    def alpha(self, x) -> np.ndarray:
        """Eigenfunctions ``alpha_n(x)``, shape ``(nmax, len(x))``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return x * (1 - x) * self.reduced(x)

    def coefficients(self, f, order: int = 400) -> np.ndarray:
        """``c_n = int alpha_n f dm`` by Gauss-Legendre quadrature."""
        z, w = roots_legendre(order)
        y = 0.5 * (z + 1.0)
        w = 0.5 * w
        fv = np.asarray(f(y), dtype=float)
        # alpha_n(y) f(y) / (y(1-y)) = reduced_n(y) f(y)
        return self.reduced(y) @ (w * fv)


def spectral_density(t: float, x, y, gamma: float = 0.0, nmax: int = 60) -> np.ndarray:
    """Truncated series for ``p(t, x, y)`` with respect to ``m(dy)``."""
    _check_gamma(gamma)
    if t <= 0:
        raise ValueError("t must be positive")
    es = EigenSystem(nmax)
    decay = np.exp(-es.eigenvalues * t)
    ax = es.alpha(x)
    ay = es.alpha(y)
    return np.einsum("n,nx,ny->xy", decay, ax, ay)


def spectral_apply(f, t: float, x, gamma: float = 0.0, nmax: int = 60) -> np.ndarray:
    """Truncated series for ``int p(t, x, y) f(y) m(dy)``."""
    _check_gamma(gamma)
    if t < 0:
        raise ValueError("t must be >= 0")
    es = EigenSystem(nmax)
    c = es.coefficients(f)
    return (np.exp(-es.eigenvalues * t) * c) @ es.alpha(x)


def spectral_reference(t: float, x, y=None, f=None, gamma: float = 0.0, nmax: int = 60):
    """Density ``p(t, x, y)`` when ``y`` is given, else ``Q_t f(x)`` for payoff ``f``."""
    if (y is None) == (f is None):
        raise ValueError("give exactly one of y or f")
    if nmax < 1:
        raise ValueError("nmax must be >= 1")
    if y is not None:
        return spectral_density(t, x, y, gamma, nmax)
    return spectral_apply(f, t, x, gamma, nmax)
