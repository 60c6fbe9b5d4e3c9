"""Population-level Poisson random field: mean densities and fixation means.

Densities are stored with respect to the speed measure ``m(dy)``.  The legacy
part ``int p(t, x, y) nu(dx)`` is evaluated through the symmetry of ``p`` with
respect to ``m``: it is the killed semigroup applied to the bounded payoff
``nu'(x) / m'(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import (
    KilledSemigroup,
    dual_entrance_curve,
    dual_mean_absorption_time,
    scale_at_one,
    scale_fn,
)
from .quadrature import CellQuadrature, divide_vanishing
from .types import Grid, InitialMeasure, ScaledParams, default_grid


def equilibrium_density(theta: float, gamma: float, y) -> np.ndarray:
    """Equilibrium PRF density with respect to ``m(dy)``: ``theta (s(1)-s(y)) / s(1)``."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    s1 = scale_at_one(gamma)
    return theta * (s1 - scale_fn(np.asarray(y, float), gamma)) / s1


def equilibrium_lebesgue(theta: float, gamma: float, y) -> np.ndarray:
    """Lebesgue density of the equilibrium measure on (0, 1)."""
    return InitialMeasure.equilibrium(theta, gamma).density(y)


def nu_over_speed(nu: InitialMeasure, gamma: float, x: np.ndarray) -> np.ndarray:
    """``nu'(x) / m'(x) = x nu'(x) (1 - x) exp(-gamma x)``; bounded on [0, 1]."""
    return nu.x_density(x) * (1.0 - x) * np.exp(-gamma * x)


class ClassSolve:
    """One backward solve for a site class, shared by all downstream means.

    Payoff columns: ``1``, ``s``, ``s(1) - s``, ``nu'/m'`` (when ``nu`` is
    given), and per sample size ``n``: ``y^n``, ``(1-y)^n``, ``1 - y^n - (1-y)^n``.
    """

    def __init__(self, t: float, gamma: float, grid: Grid | None = None,
                 sample_sizes=(), nu: InitialMeasure | None = None):
        if t < 0:
            raise ValueError("t must be >= 0")
        self.t = float(t)
        self.gamma = float(gamma)
        self.grid = grid if grid is not None else default_grid(t)
        x = self.grid.nodes
        self.x = x
        self.s = scale_fn(x, gamma)
        self.s1 = scale_at_one(gamma)
        self.sizes = tuple(sorted(set(int(n) for n in sample_sizes)))
        if any(n < 1 for n in self.sizes):
            raise ValueError("sample sizes must be >= 1")
        cols = [np.ones_like(x), self.s, self.s1 - self.s]
        self.nu = nu
        if nu is not None:
            cols.append(nu_over_speed(nu, gamma, x))
        self._size_col = {}
        for n in self.sizes:
            self._size_col[n] = len(cols)
            yn = x ** n
            qn = (1.0 - x) ** n
            cols += [yn, qn, 1.0 - yn - qn]
        surf = KilledSemigroup(gamma, self.grid).solve(cols, self.t, keep="final")
        self.surface = surf
        self.v = surf.final
        self.quad = CellQuadrature(x)

    # absorption --------------------------------------------------------

    @property
    def survival(self) -> np.ndarray:
        return self.v[:, 0]

    @property
    def p_fixed(self) -> np.ndarray:
        """``P_x(T_1 <= t)`` on nodes."""
        return (self.s - self.v[:, 1]) / self.s1

    @property
    def p_lost(self) -> np.ndarray:
        """``P_x(T_0 <= t)`` on nodes."""
        return ((self.s1 - self.s) - self.v[:, 2]) / self.s1

    def entrance_curve(self):
        """``(u, P~_0(T_1 <= u))`` at all solver levels."""
        return dual_entrance_curve(self.surface, column=1)

    # sampling fates ----------------------------------------------------

    def fates(self, n: int):
        """``(I, J, K)`` arrays on nodes for a sample of size ``n``."""
        c = self._size_col[int(n)]
        yn, qn, jn = self.v[:, c], self.v[:, c + 1], self.v[:, c + 2]
        return self.p_lost + qn, jn, self.p_fixed + yn

    # integrals against nu ---------------------------------------------

    def integrate_nu(self, values: np.ndarray, nu: InitialMeasure) -> np.ndarray:
        """``int values(x) nu(dx)`` for node values vanishing at ``x = 0``."""
        if nu.is_zero:
            return np.zeros(np.shape(values)[1:]) if np.ndim(values) > 1 else 0.0
        reduced = divide_vanishing(self.x, values, at0=1)
        out = self.quad.integrate(reduced, nu.x_density)
        return out if np.ndim(out) else float(out)

    # densities ---------------------------------------------------------

    def new_density(self, theta: float) -> np.ndarray:
        """New-mutation density ``f_N`` with respect to ``m(dy)``."""
        return theta / self.s1 * ((self.s1 - self.s) - self.v[:, 2])

    def legacy_density(self) -> np.ndarray:
        if self.nu is None:
            raise ValueError("ClassSolve was built without nu")
        return self.v[:, 3]

    def new_fixations(self, theta: float) -> float:
        times, cdf = self.entrance_curve()
        return float(theta / self.s1 * np.trapezoid(cdf, times))


@dataclass(frozen=True)
class PrfDensity:
    """PRF mean density at time ``t`` on grid nodes, with respect to ``m(dy)``."""

    beta: ScaledParams
    nu: InitialMeasure
    y: np.ndarray
    legacy: np.ndarray
    new: np.ndarray
    grid: Grid = field(repr=False, default=None)

    @property
    def values(self) -> np.ndarray:
        return self.legacy + self.new

    def lebesgue(self) -> np.ndarray:
        """Lebesgue density on interior nodes (``nan`` at the endpoints)."""
        y = self.y
        out = np.full_like(y, np.nan)
        out[1:-1] = self.values[1:-1] * np.exp(self.beta.gamma * y[1:-1]) / (y[1:-1] * (1 - y[1:-1]))
        return out

    def integrate(self, weight, part: str = "total") -> float:
        """``int density(y) weight(y) m(dy)`` where ``weight`` vanishes at 0 and 1
        at least like ``y (1-y)``; ``weight`` is called as ``weight(y)``."""
        vals = {"total": self.values, "legacy": self.legacy, "new": self.new}[part]
        g = self.beta.gamma
        q = CellQuadrature(self.y)
        return q.integrate(vals, lambda y: weight(y) * np.exp(g * y) / (y * (1 - y)))

    def bin_mass(self, a: float, b: float, part: str = "total") -> float:
        """``int_a^b density(y) m(dy)`` for ``0 < a < b < 1``."""
        from scipy.integrate import quad
        from scipy.interpolate import CubicSpline

        vals = {"total": self.values, "legacy": self.legacy, "new": self.new}[part]
        sp = CubicSpline(self.y, vals)
        g = self.beta.gamma
        val, _ = quad(lambda y: sp(y) * np.exp(g * y) / (y * (1 - y)), a, b,
                      epsabs=1e-12, epsrel=1e-10, limit=200)
        return val


def prf_density(beta: ScaledParams, nu: InitialMeasure | None = None,
                grid: Grid | None = None) -> PrfDensity:
    """Legacy plus new-mutation PRF density at time ``beta.t``."""
    if nu is None:
        nu = InitialMeasure.equilibrium(beta.theta, beta.gamma)
    cs = ClassSolve(beta.t, beta.gamma, grid, nu=nu)
    return PrfDensity(beta, nu, cs.x, cs.legacy_density(), cs.new_density(beta.theta), cs.grid)


def prf_functional(f, beta: ScaledParams, nu: InitialMeasure | None = None,
                   grid: Grid | None = None) -> float:
    """Limiting mean of ``sum_i f(X_i)`` over the field at time ``t``.

    ``int Q_t f dnu + theta int (s(1)-s)/s(1) (f - Q_t f) dm`` for ``f``
    vanishing at 0 and 1 with ``f(x)/x`` continuous.  Computed by a backward
    solve of ``f`` itself, independently of :func:`prf_density`.
    """
    if nu is None:
        nu = InitialMeasure.equilibrium(beta.theta, beta.gamma)
    grid = grid if grid is not None else default_grid(beta.t)
    x = grid.nodes
    g = beta.gamma
    fv = np.asarray(f(x), dtype=float)
    qf = KilledSemigroup(g, grid).solve(fv, beta.t, keep="final").final[:, 0]
    quad = CellQuadrature(x)
    legacy = 0.0
    if not nu.is_zero:
        legacy = float(quad.integrate(divide_vanishing(x, qf, at0=1), nu.x_density))
    s1 = scale_at_one(g)
    # (s(1) - s(x)) (f - Q_t f) m'(x) = phi1-form weight times (f - Q_t f)/x
    diff = divide_vanishing(x, fv - qf, at0=1)
    from .types import phi1

    def w(y):
        # (s(1) - s(y)) e^{gy} / (1 - y) = phi1(g(1-y))
        return phi1(g * (1.0 - y)) / s1

    new = beta.theta * float(quad.integrate(diff, w))
    return legacy + new


@dataclass(frozen=True)
class FixationMean:
    """Expected numbers of sites fixed for the mutant by time ``t``."""

    legacy: float
    new: float

    @property
    def total(self) -> float:
        return self.legacy + self.new

    def to_dict(self) -> dict:
        return {"legacy": self.legacy, "new": self.new, "total": self.total}


def fixation_mean(beta: ScaledParams, nu: InitialMeasure | None = None,
                  grid: Grid | None = None) -> FixationMean:
    """Legacy fixations ``int P_x(T_1 <= t) nu(dx)`` plus new fixations
    ``theta/s(1) int_0^t P~_0(T_1 <= u) du`` (trapezoid over solver levels)."""
    if nu is None:
        nu = InitialMeasure.equilibrium(beta.theta, beta.gamma)
    if beta.t == 0:
        return FixationMean(0.0, 0.0)
    cs = ClassSolve(beta.t, beta.gamma, grid)
    return FixationMean(cs.integrate_nu(cs.p_fixed, nu), cs.new_fixations(beta.theta))


def fixation_mean_alt(beta: ScaledParams, nu: InitialMeasure | None = None,
                      grid: Grid | None = None) -> FixationMean:
    """Second representation of the fixation mean.

    Legacy: ``(int s dnu - int s(y) f_L(y) m(dy)) / s(1)`` using the forward
    legacy density.  New: ``theta/s(1) (t - E~_0 T_1 + int (s(1)-s) N(t,s) dm / s(1))``,
    which needs only the final time level and the closed-form mean dual
    fixation time.
    """
    if nu is None:
        nu = InitialMeasure.equilibrium(beta.theta, beta.gamma)
    if beta.t == 0:
        return FixationMean(0.0, 0.0)
    g = beta.gamma
    cs = ClassSolve(beta.t, g, grid, nu=nu)
    x = cs.x
    s1 = cs.s1
    quad = cs.quad
    from .types import phi1

    legacy = 0.0
    if not nu.is_zero:
        int_s_nu = quad.integrate_fn(lambda y: phi1(g * y) * nu.x_density(y))
        fl = cs.legacy_density()
        # s(y) f_L(y) m'(y) = phi1(gy) e^{gy} f_L(y) / (1 - y); f_L vanishes at 1
        red = divide_vanishing(x, fl, at0=0, at1=1)
        int_sfl = float(quad.integrate(red, lambda y: phi1(g * y) * np.exp(g * y)))
        legacy = (int_s_nu - int_sfl) / s1
    # (s(1) - s(y)) N(t,s)(y) m'(y) = phi1(g(1-y)) N(t,s)(y) / y
    red = divide_vanishing(x, cs.v[:, 1], at0=1)
    tail = float(quad.integrate(red, lambda y: phi1(g * (1.0 - y)))) / s1
    new = beta.theta / s1 * (beta.t - dual_mean_absorption_time(0.0, g) + tail)
    return FixationMean(legacy, new)
