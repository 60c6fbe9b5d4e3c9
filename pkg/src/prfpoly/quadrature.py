"""Quadrature of grid data against analytic weights.

Integrands that vanish at an endpoint are divided by ``x`` (or ``1 - x``)
first, so the quantity interpolated is bounded; the removed factor goes into
the analytic weight.  Integration is panel-wise Gauss-Legendre with one panel
per grid cell, applied to the cubic-spline interpolant of the node values.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_legendre

from .diffusion import entrance_limit


def endpoint_limit(x: np.ndarray, v: np.ndarray, end: int = 0, npts: int = 3) -> np.ndarray:
    """Polynomial extrapolation of node values to ``x[0]`` (end=0) or ``x[-1]`` (end=-1)."""
    if end == 0:
        px = x[1:1 + npts] - x[0]
        return entrance_limit(px, np.moveaxis(v[1:1 + npts], 0, -1))
    px = x[-1] - x[-1 - npts:-1][::-1]
    return entrance_limit(px, np.moveaxis(v[-1 - npts:-1][::-1], 0, -1))


def divide_vanishing(x: np.ndarray, v: np.ndarray, at0: int = 1, at1: int = 0) -> np.ndarray:
    """``v / (x**at0 (1-x)**at1)`` on nodes, endpoints filled by extrapolation."""
    v = np.asarray(v, dtype=float)
    den = x ** at0 * (1.0 - x) ** at1
    den = den.reshape((-1,) + (1,) * (v.ndim - 1))
    out = np.empty_like(v)
    inner = slice(1 if at0 else 0, -1 if at1 else None)
    out[inner] = v[inner] / den[inner]
    if at0:
        out[0] = endpoint_limit(x, out, 0)
    if at1:
        out[-1] = endpoint_limit(x, out, -1)
    return out


class CellQuadrature:
    """Gauss-Legendre nodes/weights with one panel per grid cell."""

    def __init__(self, x: np.ndarray, order: int = 4):
        z, w = roots_legendre(order)
        a = x[:-1, None]
        h = np.diff(x)[:, None]
        self.x = x
        self.points = (a + 0.5 * h * (z[None, :] + 1.0)).ravel()
        self.weights = (0.5 * h * w[None, :]).ravel()

    def integrate(self, values: np.ndarray, weight=None) -> np.ndarray:
        """``int spline(values)(y) * weight(y) dy`` over [0, 1].

        ``values`` may carry extra trailing axes (integrated independently).
        """
        interp = CubicSpline(self.x, values, axis=0)(self.points)
        w = self.weights if weight is None else self.weights * weight(self.points)
        return np.tensordot(w, interp, axes=(0, 0))

    def integrate_fn(self, fn) -> float:
        return float(np.dot(self.weights, fn(self.points)))
