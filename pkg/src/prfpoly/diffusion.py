"""Limiting diffusion x(1-x) d2/dx2 + gamma x(1-x) d/dx on [0, 1] and its dual.

The workhorse is :class:`KilledSemigroup`, a Crank-Nicolson solver for the
backward equation with zero Dirichlet data at both ends.  Its output
``v(t, x) = N(t, f)(x)`` is the integral of ``f`` against the transition
density ``p(t, x, y) m(dy)`` of the process killed at 0 and 1.  Every other
quantity in the package (absorption CDFs, PRF densities, sampling means) is
reduced to such integrals.

Space is discretised in Feller form, ``(1/m') d/dx ((1/s') d/dx)``, using scale
differences ``s(x_{j+1}) - s(x_j)`` for the fluxes.  The scale function is then
an exact null vector of the discrete generator on any grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.linalg import lapack

from .types import NEUTRAL_GAMMA, Grid, default_grid, phi1


class GridTooCoarseWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# scale, speed, Green kernel


def scale_fn(x, gamma: float):
    """Scale function ``s(x) = (1 - exp(-gamma x)) / gamma`` (``s(x) = x`` at gamma=0)."""
    x = np.asarray(x, dtype=float)
    if abs(gamma) < NEUTRAL_GAMMA:
        out = x * (1.0 - gamma * x / 2.0 + (gamma * x) ** 2 / 6.0)
    else:
        out = -np.expm1(-gamma * x) / gamma
    return out if out.ndim else float(out)


def scale_deriv(x, gamma: float):
    x = np.asarray(x, dtype=float)
    out = np.exp(-gamma * x)
    return out if out.ndim else float(out)


def speed_density(x, gamma: float):
    """Speed density ``exp(gamma x) / (x (1 - x))`` on the open interval."""
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= 1)):
        raise ValueError("speed density is only defined for 0 < x < 1")
    out = np.exp(gamma * x) / (x * (1.0 - x))
    return out if out.ndim else float(out)


def scale_at_one(gamma: float) -> float:
    return float(phi1(gamma))


def ultimate_fixation(x, gamma: float):
    """``P_x(T_1 < T_0) = s(x) / s(1)``."""
    return scale_fn(x, gamma) / scale_at_one(gamma)


def green_kernel(x, y, gamma: float):
    """Green function of the killed diffusion with respect to ``m(dy)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hi = np.maximum(x, y)
    lo = np.minimum(x, y)
    s1 = scale_at_one(gamma)
    out = (s1 - scale_fn(hi, gamma)) * scale_fn(lo, gamma) / s1
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ScaleSpeed:
    """Feller-form data for a given selection coefficient."""

    gamma: float

    def s(self, x):
        return scale_fn(x, self.gamma)

    def m_density(self, x):
        return speed_density(x, self.gamma)

    @property
    def s1(self) -> float:
        return scale_at_one(self.gamma)

    def generator(self, f, x, h: float = 1e-4):
        """Apply ``x(1-x)(f'' + gamma f')`` by central differences (diagnostic use)."""
        x = np.asarray(x, dtype=float)
        d1 = (f(x + h) - f(x - h)) / (2 * h)
        d2 = (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)
        return x * (1 - x) * (d2 + self.gamma * d1)


# ---------------------------------------------------------------------------
# dual (conditioned on fixation) process


def dual_scale(x, gamma: float):
    return -1.0 / scale_fn(x, gamma)


def dual_speed_density(x, gamma: float):
    """Density of ``s(x)^2 m(dx)``; bounded near the entrance boundary 0."""
    x = np.asarray(x, dtype=float)
    # s(x)^2 e^{gx} / (x (1-x)) = x phi1(gx)^2 e^{gx} / (1 - x)
    out = x * phi1(gamma * x) ** 2 * np.exp(gamma * x) / (1.0 - x)
    return out if out.ndim else float(out)


def dual_green(x, y, gamma: float):
    """``g(x, y) / (s(x) s(y)) = 1/s(max(x, y)) - 1/s(1)``."""
    hi = np.maximum(np.asarray(x, float), np.asarray(y, float))
    out = 1.0 / scale_fn(hi, gamma) - 1.0 / scale_at_one(gamma)
    return out if np.ndim(out) else float(out)


def dual_drift(x, gamma: float):
    """Drift of the conditioned diffusion, ``gamma x(1-x) coth``-type form, 2 at x=0."""
    x = np.asarray(x, dtype=float)
    # gamma x (1 + e^{-gx}) / (1 - e^{-gx}) = (1 + e^{-gx}) / phi1(gx)
    out = (1.0 - x) * (1.0 + np.exp(-gamma * x)) / phi1(gamma * x)
    return out if out.ndim else float(out)


def dual_mean_absorption_time(x: float, gamma: float) -> float:
    """Expected time to fixation of the conditioned diffusion started at ``x``.

    Integral of the dual Green kernel against the dual speed measure; ``x = 0``
    is the entrance-boundary limit.
    """
    s1 = scale_at_one(gamma)
    g = gamma

    def upper(y):
        # (1/s(y) - 1/s(1)) s(y)^2 m'(y) = phi1(gy) phi1(g(1-y)) / s(1)
        return phi1(g * y) * phi1(g * (1 - y)) / s1

    tail, _ = integrate.quad(upper, x, 1.0, epsabs=1e-13, epsrel=1e-11, limit=200)
    if x <= 0:
        return tail
    sx = scale_fn(x, g)

    def lower(y):
        return y * phi1(g * y) ** 2 * math.exp(g * y) / (1 - y)

    head, _ = integrate.quad(lower, 0.0, x, epsabs=1e-13, epsrel=1e-11, limit=200)
    return tail + (1.0 / sx - 1.0 / s1) * head


# ---------------------------------------------------------------------------
# Crank-Nicolson solver


@dataclass
class HeatSurface:
    """Solver output for one or more payoffs.

    ``values`` has shape ``(n_kept, J+1, n_payoffs)``; ``probe`` holds the first
    few interior nodes at every time level (used for limits at x = 0).
    """

    x: np.ndarray
    times: np.ndarray
    values: np.ndarray
    probe_times: np.ndarray
    probe: np.ndarray
    gamma: float
    grid: Grid
    coarse: "HeatSurface | None" = None

    @property
    def extrapolated(self) -> bool:
        return self.coarse is not None

    @property
    def final(self) -> np.ndarray:
        """Values at the last time level, shape ``(J+1, n_payoffs)``."""
        return self.values[-1]

    def column(self, i: int = 0) -> np.ndarray:
        """Surface for payoff ``i``, shape ``(n_kept, J+1)``."""
        return self.values[:, :, i]

    def interpolate(self, xq, i: int = 0, level: int = -1) -> np.ndarray:
        return CubicSpline(self.x, self.values[level, :, i])(np.asarray(xq, float))


def _tridiag_factor(dl, d, du):
    dl_, d_, du_, du2, ipiv, info = lapack.dgttrf(dl, d, du)
    if info != 0:
        raise np.linalg.LinAlgError(f"tridiagonal factorisation failed (info={info})")
    return dl_, d_, du_, du2, ipiv


def _tridiag_solve(fac, rhs):
    x, info = lapack.dgttrs(*fac, rhs)
    if info != 0:
        raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
    return x


class KilledSemigroup:
    """Backward-equation solver for the diffusion killed at 0 and 1."""

    def __init__(self, gamma: float, grid: Grid | None = None):
        self.gamma = float(gamma)
        self.grid = grid if grid is not None else Grid.uniform()
        x = self.grid.nodes
        hm = x[1:-1] - x[:-2]
        hp = x[2:] - x[1:-1]
        hbar = 0.5 * (hm + hp)
        a = x[1:-1] * (1.0 - x[1:-1])
        g = self.gamma
        self.up = a / (hbar * hp * phi1(g * hp))
        self.dn = a * np.exp(-g * hm) / (hbar * hm * phi1(g * hm))
        self.diag = -(self.up + self.dn)
        self._fac: dict = {}

    def _factor(self, tau: float):
        key = round(tau, 15)
        fac = self._fac.get(key)
        if fac is None:
            fac = _tridiag_factor(-tau * self.dn[1:], 1.0 - tau * self.diag, -tau * self.up[:-1])
            self._fac[key] = fac
        return fac

    def apply_generator(self, v: np.ndarray) -> np.ndarray:
        """Discrete generator on interior values (zero boundary data)."""
        out = self.diag[:, None] * v
        out[1:] += self.dn[1:, None] * v[:-1]
        out[:-1] += self.up[:-1, None] * v[1:]
        return out

    def payoff_matrix(self, payoffs) -> np.ndarray:
        x = self.grid.nodes
        if callable(payoffs) or np.ndim(payoffs) == 0 or (
                isinstance(payoffs, np.ndarray) and payoffs.ndim == 1):
            payoffs = [payoffs]
        cols = []
        for f in payoffs:
            v = np.asarray(f(x) if callable(f) else f, dtype=float)
            if v.shape == ():
                v = np.full_like(x, float(v))
            if v.shape != x.shape:
                raise ValueError("payoff array must have one value per grid node")
            if not np.all(np.isfinite(v)):
                raise ValueError("payoff values must be finite")
            cols.append(v)
        return np.stack(cols, axis=1)

    def can_extrapolate(self) -> bool:
        return self.grid.J % 2 == 0 and self.grid.J >= 16

    def solve(self, payoffs, t: float, keep="all", n_probe: int = 3,
              rannacher_substeps: int = 4, extrapolate=None) -> HeatSurface:
        """Evolve payoffs to time ``t``.

        ``keep`` is ``"all"``, ``"final"`` or an integer stride between stored
        time levels (the final level is always stored).

        Payoffs that do not vanish at an absorbing end (``s``, ``1``) leave a
        boundary layer whose discrete error is first order in the spacing.
        With ``extrapolate`` (default: whenever ``J`` is even) the same problem
        is also solved on every other node and the fine-minus-coarse difference,
        spline-interpolated, is added back (one Richardson step in space).
        """
        if t < 0:
            raise ValueError("t must be >= 0")
        F = self.payoff_matrix(payoffs)
        if extrapolate is None:
            extrapolate = self.can_extrapolate()
        if extrapolate and not self.can_extrapolate():
            raise ValueError("spatial extrapolation needs an even J >= 16")
        fine = self._solve(F, t, keep, n_probe, rannacher_substeps)
        if not extrapolate:
            return fine
        x = self.grid.nodes
        cgrid = Grid(x[::2], self.grid.dt)
        coarse = KilledSemigroup(self.gamma, cgrid)._solve(
            F[::2], t, keep, n_probe, rannacher_substeps)
        diff = fine.values[:, ::2] - coarse.values
        corr = CubicSpline(cgrid.nodes, diff, axis=1)(x)
        corr[:, 0] = corr[:, -1] = 0.0
        fine.values = fine.values + corr
        fine.coarse = coarse
        return fine

    def _solve(self, F, t, keep, n_probe, rannacher_substeps) -> HeatSurface:
        x = self.grid.nodes
        J = x.size - 1
        nf = F.shape[1]
        v = np.ascontiguousarray(F[1:-1].copy())
        nsteps = 0 if t == 0 else max(1, int(math.ceil(t / self.grid.dt - 1e-9)))
        dt = t / nsteps if nsteps else 0.0
        times = np.linspace(0.0, t, nsteps + 1)
        stride = 1 if keep == "all" else (nsteps if keep == "final" else int(keep))
        stride = max(1, stride)
        kept_idx = list(range(0, nsteps + 1, stride))
        if kept_idx[-1] != nsteps:
            kept_idx.append(nsteps)
        out = np.zeros((len(kept_idx), J + 1, nf))
        probe = np.zeros((nsteps + 1, n_probe, nf))
        # initial level: payoff at interior nodes, zero boundary data
        out[0, 1:-1] = v
        probe[0] = v[:n_probe]
        slot = 1
        if nsteps:
            sub = max(1, rannacher_substeps)
            fac_ie = self._factor(dt / sub)
            fac_cn = self._factor(dt / 2)
            half = dt / 2
            for step in range(1, nsteps + 1):
                if step == 1:
                    for _ in range(sub):
                        v = _tridiag_solve(fac_ie, v)
                else:
                    rhs = v + half * self.apply_generator(v)
                    v = _tridiag_solve(fac_cn, rhs)
                probe[step] = v[:n_probe]
                if slot < len(kept_idx) and kept_idx[slot] == step:
                    out[slot, 1:-1] = v
                    slot += 1
        return HeatSurface(x=x, times=times[kept_idx], values=out,
                           probe_times=times, probe=probe, gamma=self.gamma, grid=self.grid)


def _resolve_grid(grid: Grid | None, t: float) -> Grid:
    return grid if grid is not None else default_grid(t)


def heat_apply(f, t: float, gamma: float, grid: Grid | None = None, keep="all") -> HeatSurface:
    """Surface ``N(u, f)(x)`` for ``0 <= u <= t`` on the grid nodes."""
    return KilledSemigroup(gamma, _resolve_grid(grid, t)).solve(f, t, keep=keep)


def absorption_cdf(x, t: float, gamma: float, grid: Grid | None = None):
    """``(P_x(T_0 <= t), P_x(T_1 <= t))``.

    With ``x=None`` both arrays are returned on the grid nodes.  Each CDF is
    obtained from its own harmonic payoff (``s`` and ``s(1) - s``).
    """
    grid = _resolve_grid(grid, t)
    sg = KilledSemigroup(gamma, grid)
    nodes = grid.nodes
    s = scale_fn(nodes, gamma)
    s1 = scale_at_one(gamma)
    surf = sg.solve([s, s1 - s], t, keep="final")
    v_s, v_c = surf.final[:, 0], surf.final[:, 1]
    p1 = (s - v_s) / s1
    p0 = ((s1 - s) - v_c) / s1
    if x is None:
        return p0, p1
    xq = np.asarray(x, dtype=float)
    p0q = CubicSpline(nodes, p0)(xq)
    p1q = CubicSpline(nodes, p1)(xq)
    if xq.ndim == 0:
        return float(p0q), float(p1q)
    return p0q, p1q


def survival(t: float, gamma: float, grid: Grid | None = None) -> np.ndarray:
    """``N(t, 1)(x)`` on grid nodes: probability of no absorption by ``t``."""
    return heat_apply(1.0, t, gamma, grid, keep="final").final[:, 0]


def entrance_limit(probe_x: np.ndarray, ratios: np.ndarray) -> np.ndarray:
    """Extrapolate ``ratios`` sampled at the first interior nodes to ``x = 0``.

    Uses the interpolating polynomial through the probe nodes (Richardson in the
    node spacing).  ``ratios`` has the probe nodes on its last-but-one axis.
    """
    k = probe_x.size
    w = np.ones(k)
    for i in range(k):
        for j in range(k):
            if i != j:
                w[i] *= (0.0 - probe_x[j]) / (probe_x[i] - probe_x[j])
    return np.tensordot(ratios, w, axes=([-1], [0]))


def dual_entrance_curve(surface: HeatSurface, column: int = 0):
    """Entrance-boundary CDF ``P~_0(T_1 <= u)`` at every solver level.

    ``surface`` must carry the payoff ``s`` in ``column``.
    """
    px = surface.x[1:1 + surface.probe.shape[1]]
    sx = scale_fn(px, surface.gamma)
    ratios = surface.probe[:, :, column] / sx
    r0 = entrance_limit(px, ratios)
    if surface.coarse is not None:
        _, c = dual_entrance_curve(surface.coarse, column)
        r0 = 2.0 * r0 - (1.0 - c)
    return surface.probe_times, 1.0 - r0


def check_monotone_cdf(cdf, tol: float = 1e-9):
    """Warn with :class:`GridTooCoarseWarning` when a CDF curve decreases."""
    if np.any(np.diff(cdf) < -tol):
        warnings.warn("entrance-boundary CDF is not monotone; refine the grid",
                      GridTooCoarseWarning, stacklevel=3)


def dual_entrance_cdf(t, gamma: float, grid: Grid | None = None, check: bool = True):
    """``P~_0(T_1 <= t)`` for the diffusion conditioned on fixation, started at 0.

    ``t`` may be a scalar or an array of times (answered from one solve).
    """
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < 0):
        raise ValueError("t must be >= 0")
    tmax = float(tt.max())
    if tmax == 0:
        out = np.zeros_like(tt)
        return float(out[0]) if np.ndim(t) == 0 else out
    grid = _resolve_grid(grid, tmax)
    sg = KilledSemigroup(gamma, grid)
    surf = sg.solve(lambda y: scale_fn(y, gamma), tmax, keep="final")
    times, cdf = dual_entrance_curve(surf)
    if check:
        check_monotone_cdf(cdf)
    out = np.interp(tt, times, cdf)
    return float(out[0]) if np.ndim(t) == 0 else out


def dual_semigroup(f, t: float, gamma: float, grid: Grid | None = None) -> np.ndarray:
    """``Q~_t f(x) = N(t, s f)(x) / s(x)`` on interior grid nodes, entrance limit at 0."""
    grid = _resolve_grid(grid, t)
    x = grid.nodes
    s = scale_fn(x, gamma)
    fv = np.asarray(f(x) if callable(f) else f, dtype=float)
    surf = KilledSemigroup(gamma, grid).solve(s * fv, t, keep="final")
    v = surf.final[:, 0]
    out = np.empty_like(x)
    out[1:] = v[1:] / s[1:]
    out[0] = entrance_limit(x[1:4], out[1:4])
    return out
