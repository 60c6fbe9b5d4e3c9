"""Sample-level Poisson means for two daughter species.

A legacy polymorphism of initial frequency ``x`` ends up, in a sample of size
``n``, monomorphic ancestral (``I``), polymorphic (``J``) or monomorphic
mutant (``K``).  Integrating products of these against ``nu`` gives the
legacy table cells; new mutations contribute through the sampled PRF
density ``f_N`` and the new-fixation mean ``G_N``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import comb

from .prf import ClassSolve
from .quadrature import divide_vanishing
from .types import DOHRS, CountTable, Grid, InitialMeasure, ScaledParams, default_grid

C2_TOL = 1e-6


class ConsistencyWarning(RuntimeWarning):
    """Two mathematically equal representations disagree numerically."""


@dataclass(frozen=True)
class SampleFate:
    """Probabilities that a legacy site of frequency ``x`` is ancestral-monomorphic,
    polymorphic or mutant-monomorphic in a sample of size ``n`` at time ``t``."""

    x: float
    n: int
    I: float
    J: float
    K: float

    @property
    def total(self) -> float:
        return self.I + self.J + self.K


def _check_sizes(*sizes):
    for n in sizes:
        if int(n) != n or n < 1:
            raise ValueError(f"sample sizes must be integers >= 1, got {n}")


def sample_fate(x, n: int, beta: ScaledParams, grid: Grid | None = None):
    """``SampleFate`` at ``x`` (scalar) or a list of them (array ``x``)."""
    _check_sizes(n)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((xs <= 0) | (xs >= 1)):
        raise ValueError("x must lie strictly inside (0, 1)")
    if beta.t == 0:
        I = (1 - xs) ** n
        K = xs ** n
        Jv = 1 - I - K
    else:
        cs = ClassSolve(beta.t, beta.gamma, grid, sample_sizes=[n])
        vals = np.stack(cs.fates(n), axis=1)
        I, Jv, K = CubicSpline(cs.x, vals, axis=0)(xs).T
    out = [SampleFate(float(a), int(n), float(i), float(j), float(k))
           for a, i, j, k in zip(xs, I, Jv, K)]
    return out[0] if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# components


@dataclass(frozen=True)
class LegacyMeans:
    C1: float
    C2: float
    C3: float
    C2_alt: float

    def as_tuple(self):
        return self.C1, self.C2, self.C3


@dataclass(frozen=True)
class NewSpectrum:
    """New-mutation sample means for one sample size ``n``."""

    n: int
    F: np.ndarray  # F_N(n, k) for k = 1..n
    E: float
    E_direct: float
    G: float

    @property
    def D(self) -> float:
        return self.G + float(self.F[-1])

    def to_dict(self) -> dict:
        return {"n": self.n, "F": self.F.tolist(), "E": self.E, "E_direct": self.E_direct,
                "G": self.G, "D": self.D}


def _legacy_from_solve(cs: ClassSolve, m: int, n: int, nu: InitialMeasure) -> LegacyMeans:
    if nu.is_zero:
        return LegacyMeans(0.0, 0.0, 0.0, 0.0)
    Im, Jm, Km = cs.fates(m)
    In, Jn, Kn = cs.fates(n)
    cols = np.stack([
        Im * Kn + In * Km,
        Jm * (In + Kn) + Jn * (Im + Km),
        Jm + Jn - 2 * Jm * Jn,
        Jm * Jn,
    ], axis=1)
    c1, c2, c2b, c3 = (float(v) for v in cs.integrate_nu(cols, nu))
    if abs(c2 - c2b) > C2_TOL * max(1.0, abs(c2)):
        warnings.warn(f"the two forms of C2 disagree: {c2!r} vs {c2b!r}",
                      ConsistencyWarning, stacklevel=3)
    return LegacyMeans(c1, c2, c3, c2b)


def _spectrum_from_solve(cs: ClassSolve, n: int, theta: float, G: float) -> NewSpectrum:
    g = cs.gamma
    x = cs.x
    if theta == 0 or cs.t == 0:
        return NewSpectrum(n, np.zeros(n), 0.0, 0.0, 0.0 if theta == 0 else G)
    fN = cs.new_density(theta)
    # f_N e^{gy} / (y (1 - y)) times a binomial weight; f_N vanishes at y = 1
    red = divide_vanishing(x, fN, at0=0, at1=1)
    k = np.arange(1, n + 1)
    ck = comb(n, k)

    def w_poly(y):
        # C(n,k) y^{k-1} (1-y)^{n-k} e^{gy}, shape (npts, n); f_N/(1-y) is red
        return (ck[None, :] * y[:, None] ** (k[None, :] - 1)
                * (1 - y[:, None]) ** (n - k[None, :]) * np.exp(g * y)[:, None])

    pts = cs.quad.points
    interp = CubicSpline(x, red)(pts)
    F = (cs.quad.weights * interp) @ w_poly(pts)
    E = float(F[:-1].sum())

    E_direct = float(cs.quad.integrate(fN, lambda y: _poly_ratio(y, n) * np.exp(g * y)))
    return NewSpectrum(n, F, E, E_direct, G)


def _poly_ratio(y, n):
    """``(1 - y^n - (1-y)^n) / (y (1-y))`` evaluated stably (equals 0 for n = 1)."""
    if n == 1:
        return np.zeros_like(y)
    # 1 - y^n - (1-y)^n = sum_{k=1}^{n-1} C(n,k) y^k (1-y)^{n-k}
    k = np.arange(1, n)
    return (comb(n, k)[None, :] * y[:, None] ** (k - 1)
            * (1 - y[:, None]) ** (n - k - 1)).sum(axis=1)


def legacy_means(m: int, n: int, beta: ScaledParams, nu: InitialMeasure | None = None,
                 grid: Grid | None = None) -> LegacyMeans:
    """Legacy fixed-difference (C1), single-sample (C2) and shared (C3) means."""
    _check_sizes(m, n)
    if nu is None:
        nu = InitialMeasure.equilibrium(beta.theta, beta.gamma)
    if nu.is_zero:
        return LegacyMeans(0.0, 0.0, 0.0, 0.0)
    if beta.t == 0:
        return _legacy_at_zero(m, n, nu)
    cs = ClassSolve(beta.t, beta.gamma, grid, sample_sizes=[m, n])
    return _legacy_from_solve(cs, m, n, nu)


def _legacy_at_zero(m, n, nu) -> LegacyMeans:
    from .quadrature import CellQuadrature

    q = CellQuadrature(np.linspace(0, 1, 201), order=8)

    def fate(y, k):
        return (1 - y) ** k, 1 - y ** k - (1 - y) ** k, y ** k

    def integ(fn):
        return q.integrate_fn(lambda y: fn(y) / y * nu.x_density(y))

    def c1(y):
        Im, _, Km = fate(y, m)
        In, _, Kn = fate(y, n)
        return Im * Kn + In * Km

    def c2(y):
        Im, Jm, Km = fate(y, m)
        In, Jn, Kn = fate(y, n)
        return Jm * (In + Kn) + Jn * (Im + Km)

    def c3(y):
        return fate(y, m)[1] * fate(y, n)[1]

    v2 = integ(c2)
    return LegacyMeans(integ(c1), v2, integ(c3), v2)


def new_spectrum(n: int, beta: ScaledParams, grid: Grid | None = None) -> NewSpectrum:
    """``F_N(n, k)`` for ``k = 1..n``, ``E_N`` (sum and direct forms), ``G_N`` and ``D_N``."""
    _check_sizes(n)
    if beta.t == 0:
        return NewSpectrum(n, np.zeros(n), 0.0, 0.0, 0.0)
    cs = ClassSolve(beta.t, beta.gamma, grid, sample_sizes=[n])
    return _spectrum_from_solve(cs, n, beta.theta, cs.new_fixations(beta.theta))


# ---------------------------------------------------------------------------
# tables


CLASSES = ("s", "r")


@dataclass(frozen=True)
class ClassMeans:
    """Expected K, O, H for one site class plus the components behind them."""

    beta: ScaledParams
    legacy: LegacyMeans
    new_m: NewSpectrum
    new_n: NewSpectrum

    @property
    def K(self) -> float:
        return self.legacy.C1 + self.new_m.D + self.new_n.D

    @property
    def O(self) -> float:
        return self.legacy.C2 + self.new_m.E + self.new_n.E

    @property
    def H(self) -> float:
        return self.legacy.C3

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.to_dict(),
            "C1": self.legacy.C1, "C2": self.legacy.C2, "C2_alt": self.legacy.C2_alt,
            "C3": self.legacy.C3,
            "new_m": self.new_m.to_dict(), "new_n": self.new_n.to_dict(),
            "K": self.K, "O": self.O, "H": self.H,
        }


@dataclass(frozen=True)
class ExpectedTable:
    """Expected DOHRS means for silent (``s``) and replacement (``r``) sites."""

    m: int
    n: int
    classes: dict
    grid: dict = field(default_factory=dict)

    def means(self) -> dict:
        out = {}
        for c in CLASSES:
            cm = self.classes[c]
            out[f"K_{c}"], out[f"O_{c}"], out[f"H_{c}"] = cm.K, cm.O, cm.H
        return out

    def to_count_table(self) -> CountTable:
        return CountTable(DOHRS, self.m, self.n, self.means())

    def dprs(self, double_count_shared: bool = False) -> CountTable:
        return self.to_count_table().to_dprs(double_count_shared)

    def to_dict(self) -> dict:
        return {"layout": DOHRS, "m": self.m, "n": self.n, "means": self.means(),
                "components": {c: self.classes[c].to_dict() for c in CLASSES},
                "grid": self.grid}


def class_means(m: int, n: int, beta: ScaledParams, nu: InitialMeasure | None = None,
                grid: Grid | None = None) -> ClassMeans:
    """All table components for one site class from a single backward solve."""
    _check_sizes(m, n)
    if nu is None:
        nu = InitialMeasure.equilibrium(beta.theta, beta.gamma)
    if beta.t == 0:
        return ClassMeans(beta, legacy_means(m, n, beta, nu),
                          NewSpectrum(m, np.zeros(m), 0.0, 0.0, 0.0),
                          NewSpectrum(n, np.zeros(n), 0.0, 0.0, 0.0))
    cs = ClassSolve(beta.t, beta.gamma, grid, sample_sizes=[m, n])
    G = cs.new_fixations(beta.theta)
    return ClassMeans(beta, _legacy_from_solve(cs, m, n, nu),
                      _spectrum_from_solve(cs, m, beta.theta, G),
                      _spectrum_from_solve(cs, n, beta.theta, G))


def table_means(m: int, n: int, beta_s: ScaledParams, beta_r: ScaledParams,
                nu_s: InitialMeasure | None = None, nu_r: InitialMeasure | None = None,
                grid: Grid | None = None) -> ExpectedTable:
    """Expected DOHRS table.  ``nu`` defaults to the equilibrium of each class.

    The silent class must be neutral (``beta_s.gamma == 0``).
    """
    if beta_s.gamma != 0:
        raise ValueError("silent sites are neutral: beta_s.gamma must be 0")
    if beta_s.t != beta_r.t:
        raise ValueError("both site classes share the divergence time t")
    cm_s = class_means(m, n, beta_s, nu_s, grid)
    cm_r = class_means(m, n, beta_r, nu_r, grid)
    used = grid if grid is not None else default_grid(max(beta_s.t, 1e-12))
    gmeta = {"J": used.J, "dt": used.dt}
    return ExpectedTable(m, n, {"s": cm_s, "r": cm_r}, gmeta)


def unit_class_means(m: int, n: int, t: float, gamma: float, grid: Grid | None = None) -> np.ndarray:
    """``(K, O, H)`` per unit theta with ``nu = equilibrium(1, gamma)``.

    All means are linear in theta when ``nu`` is the equilibrium measure of
    the same class, so fitting only needs this vector once per ``(t, gamma)``.
    """
    cm = class_means(m, n, ScaledParams(t, 1.0, gamma), None, grid)
    return np.array([cm.K, cm.O, cm.H])
