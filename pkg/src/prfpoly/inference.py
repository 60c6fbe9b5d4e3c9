"""Poisson likelihood of count tables and maximum-likelihood fitting.

Every expected cell is linear in theta of its site class (with ``nu`` the
equilibrium measure), so a locus contributes

    sum_c  -theta_c U_c + Z_c log theta_c + S_c

where ``U_c`` is the sum of unit-theta means, ``Z_c`` the summed counts and
``S_c = sum_a Z_a log u_a - log Z_a!``.  Thetas are then profiled in closed
form and the simplex search runs over ``(log t, gamma)`` only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import gammaln
from scipy.stats import chi2

from .sampling import table_means, unit_class_means
from .types import DOHRS, DPRS, CountTable, Grid, InitialMeasure, ScaledParams

PARAMS = ("t", "gamma", "theta_s", "theta_r")


# ---------------------------------------------------------------------------
# likelihood


def poisson_loglik_from_means(means, counts) -> float:
    """``sum_a (-m_a + Z_a log m_a - log Z_a!)``; ``-inf`` if some ``m_a = 0 < Z_a``."""
    m = np.asarray(means, dtype=float)
    z = np.asarray(counts, dtype=float)
    if m.shape != z.shape:
        raise ValueError("means and counts must have the same shape")
    if np.any(m < 0) or np.any(z < 0):
        raise ValueError("means and counts must be nonnegative")
    if np.any((m == 0) & (z > 0)):
        return -math.inf
    pos = z > 0
    return float(-m.sum() + np.sum(z[pos] * np.log(m[pos])) - gammaln(z + 1).sum())


def _layout_means(dohrs: dict, layout: str, double_count_shared: bool) -> np.ndarray:
    tab = CountTable(DOHRS, 1, 1, dohrs)
    if layout == DPRS:
        tab = tab.to_dprs(double_count_shared)
    return tab.values()


def poisson_loglik(beta_pair, table: CountTable, grid: Grid | None = None,
                   nu_s: InitialMeasure | None = None, nu_r: InitialMeasure | None = None,
                   double_count_shared: bool = False) -> float:
    """Exact Poisson log-likelihood of one observed table, constant included."""
    beta_s, beta_r = beta_pair
    et = table_means(table.m, table.n, beta_s, beta_r, nu_s, nu_r, grid)
    means = _layout_means(et.means(), table.layout, double_count_shared)
    return poisson_loglik_from_means(means, table.values())


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class FitConfig:
    """Bounds, starts, tolerances and the shared/per-locus parameter map.

    ``t`` is always shared.  By default thetas and gamma are per locus.
    ``J`` and ``steps`` set the solver resolution used inside the fit
    (``steps`` time steps regardless of ``t`` keeps the likelihood smooth in t).
    """

    t_bounds: tuple = (1e-4, 20.0)
    theta_bounds: tuple = (1e-6, 1e3)
    gamma_bounds: tuple = (-50.0, 50.0)
    t0: float = 0.5
    gamma0: float = 0.0
    shared_theta_s: bool = False
    shared_theta_r: bool = False
    shared_gamma: bool = False
    n_starts: int = 5
    seed: int = 0
    xatol: float = 1e-4
    fatol: float = 1e-6
    polish_xatol: float = 1e-6
    maxiter: int = 2000
    gamma_xatol: float = 1e-5
    profile_theta: bool = True
    double_count_shared: bool = False
    J: int = 400
    steps: int = 200

    def __post_init__(self):
        for name in ("t_bounds", "theta_bounds", "gamma_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be ordered (lo < hi)")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.t_bounds[0] <= 0 or self.theta_bounds[0] <= 0:
            raise ValueError("t and theta lower bounds must be positive")
        for name in ("xatol", "fatol", "gamma_xatol", "polish_xatol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.n_starts < 1 or self.maxiter < 1:
            raise ValueError("n_starts and maxiter must be >= 1")
        if self.J < 16 or self.steps < 1:
            raise ValueError("J must be >= 16 and steps >= 1")
        if not self.shared_gamma and self.shared_theta_r:
            raise ValueError("a shared theta_r needs a shared gamma")
        if not self.t_bounds[0] <= self.t0 <= self.t_bounds[1]:
            raise ValueError("t0 outside t_bounds")
        if not self.gamma_bounds[0] <= self.gamma0 <= self.gamma_bounds[1]:
            raise ValueError("gamma0 outside gamma_bounds")

    @classmethod
    def all_shared(cls, **kw) -> "FitConfig":
        return cls(shared_theta_s=True, shared_theta_r=True, shared_gamma=True, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "FitConfig":
        d = dict(d)
        for k in ("t_bounds", "theta_bounds", "gamma_bounds"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class FitResult:
    estimates: dict
    loglik: float
    se: dict
    success: bool
    status: str
    n_evals: int
    n_solves: int
    starts: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimates": self.estimates, "loglik": self.loglik, "se": self.se,
            "success": self.success, "status": self.status, "n_evals": self.n_evals,
            "n_solves": self.n_solves, "starts": self.starts,
            "trajectory": self.trajectory, "config": self.config,
        }


@dataclass(frozen=True)
class ProfileInterval:
    parameter: str
    level: float
    estimate: float
    lower: float
    upper: float
    lower_unbounded: bool
    upper_unbounded: bool

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# unit means cache


class MeansCache:
    """Unit-theta ``(K, O, H)`` means per ``(t, gamma, m, n)``."""

    def __init__(self, J: int = 400, steps: int = 200):
        self.J = J
        self.steps = steps
        self._store: dict = {}
        self.solves = 0

    def grid(self, t: float) -> Grid:
        return Grid.uniform(self.J, t / self.steps)

    def unit(self, t: float, gamma: float, m: int, n: int) -> np.ndarray:
        key = (float(t), float(gamma), int(m), int(n))
        u = self._store.get(key)
        if u is None:
            u = unit_class_means(m, n, t, gamma, self.grid(t))
            self._store[key] = u
            self.solves += 1
        return u


# ---------------------------------------------------------------------------
# the model


class _Model:
    """Likelihood over loci with the configured parameter map."""

    def __init__(self, tables, config: FitConfig, cache: MeansCache | None = None):
        tables = list(tables)
        if not tables:
            raise ValueError("need at least one table")
        self.tables = tables
        self.cfg = config
        self.cache = cache if cache is not None else MeansCache(config.J, config.steps)
        self.L = len(tables)
        self.evals = 0
        self.z = []
        self.logfact = []
        for tab in tables:
            z = tab.values()
            self.z.append(z)
            self.logfact.append(float(gammaln(z + 1).sum()))

    # per-class sufficient statistics ------------------------------------

    def _cells(self, tab: CountTable, us: np.ndarray, ur: np.ndarray):
        """Unit means for the table layout, split into silent / replacement cells."""
        d = {"K_s": us[0], "O_s": us[1], "H_s": us[2], "K_r": ur[0], "O_r": ur[1], "H_r": ur[2]}
        vals = _layout_means(d, tab.layout, self.cfg.double_count_shared)
        half = vals.size // 2
        return vals[:half], vals[half:]

    def class_stats(self, l: int, t: float, gamma: float):
        """``[(U, Z, S)]`` for the silent and replacement class of locus ``l``."""
        tab = self.tables[l]
        us = self.cache.unit(t, 0.0, tab.m, tab.n)
        ur = self.cache.unit(t, gamma, tab.m, tab.n)
        cs, cr = self._cells(tab, us, ur)
        z = self.z[l]
        half = z.size // 2
        out = []
        for u, zc in ((cs, z[:half]), (cr, z[half:])):
            if np.any((u <= 0) & (zc > 0)):
                S = -math.inf
            else:
                pos = zc > 0
                S = float(np.sum(zc[pos] * np.log(u[pos])))
            out.append((float(u.sum()), float(zc.sum()), S))
        return out

    @staticmethod
    def _class_ll(theta, U, Z, S):
        if S == -math.inf:
            return -math.inf
        if theta <= 0:
            return 0.0 if Z == 0 else -math.inf
        return -theta * U + Z * math.log(theta) + S

    def _theta_hat(self, U, Z):
        lo, hi = self.cfg.theta_bounds
        if U <= 0:
            return hi if Z > 0 else lo
        return float(np.clip(Z / U, lo, hi))

    # profiled likelihood -------------------------------------------------

    def loglik_full(self, t, gammas, th_s, th_r) -> float:
        """Log-likelihood at explicit per-locus parameter arrays."""
        self.evals += 1
        total = 0.0
        for l in range(self.L):
            (Us, Zs, Ss), (Ur, Zr, Sr) = self.class_stats(l, t, gammas[l])
            total += self._class_ll(th_s[l], Us, Zs, Ss) + self._class_ll(th_r[l], Ur, Zr, Sr)
            total -= self.logfact[l]
        return total

    def profile(self, t: float, gamma=None, fixed: dict | None = None):
        """Maximise over thetas (closed form) and, if per locus, over each gamma.

        Returns ``(loglik, gammas, theta_s, theta_r)``.
        """
        self.evals += 1
        fixed = fixed or {}
        cfg = self.cfg
        L = self.L
        gammas = np.empty(L)
        stats = []
        for l in range(L):
            if cfg.shared_gamma:
                g = gamma
            else:
                g = self._best_gamma(l, t, fixed.get("theta_r"))
            gammas[l] = g
            stats.append(self.class_stats(l, t, g))
        th = {}
        for c, name in ((0, "theta_s"), (1, "theta_r")):
            shared = cfg.shared_theta_s if c == 0 else cfg.shared_theta_r
            if name in fixed:
                th[name] = np.full(L, float(fixed[name]))
            elif shared:
                U = sum(s[c][0] for s in stats)
                Z = sum(s[c][1] for s in stats)
                th[name] = np.full(L, self._theta_hat(U, Z))
            else:
                th[name] = np.array([self._theta_hat(s[c][0], s[c][1]) for s in stats])
        total = 0.0
        for l in range(L):
            for c, name in ((0, "theta_s"), (1, "theta_r")):
                total += self._class_ll(th[name][l], *stats[l][c])
            total -= self.logfact[l]
        return total, gammas, th["theta_s"], th["theta_r"]

    def _best_gamma(self, l: int, t: float, theta_r=None) -> float:
        lo, hi = self.cfg.gamma_bounds

        def neg(g):
            _, (U, Z, S) = self.class_stats(l, t, g)
            th = self._theta_hat(U, Z) if theta_r is None else theta_r
            v = self._class_ll(th, U, Z, S)
            return 1e300 if v == -math.inf else -v

        res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                       options={"xatol": self.cfg.gamma_xatol})
        return float(res.x)


# ---------------------------------------------------------------------------
# fitting


def _starts(cfg: FitConfig, dim: int) -> list:
    rng = np.random.default_rng(cfg.seed)
    tlo, thi = cfg.t_bounds
    glo, ghi = cfg.gamma_bounds
    first = [math.log(cfg.t0)] + ([cfg.gamma0] if dim > 1 else [])
    out = [np.array(first)]
    # remaining starts spread over a moderate box inside the bounds
    lt_lo, lt_hi = math.log(max(tlo, 0.02)), math.log(min(thi, 3.0))
    g_lo, g_hi = max(glo, -5.0), min(ghi, 5.0)
    while len(out) < cfg.n_starts:
        p = [rng.uniform(lt_lo, lt_hi)]
        if dim > 1:
            p.append(rng.uniform(g_lo, g_hi))
        out.append(np.array(p))
    return out


def _nm(fun, x0, bounds, cfg: FitConfig, record: list | None = None, xatol=None):
    def cb(xk):
        if record is not None:
            record.append(-float(fun(xk)))

    xatol = cfg.xatol if xatol is None else xatol
    fatol = cfg.fatol if xatol >= cfg.xatol else cfg.fatol * xatol / cfg.xatol
    return optimize.minimize(
        fun, x0, method="Nelder-Mead", bounds=bounds, callback=cb,
        options={"xatol": xatol, "fatol": fatol, "maxiter": cfg.maxiter,
                 "maxfev": 20 * cfg.maxiter})


def _multistart(f, starts, bounds, cfg: FitConfig):
    """Run the simplex from every start, then polish the best end point."""
    runs = [_nm(f, x0, bounds, cfg) for x0 in starts]
    best = min(runs, key=lambda r: r.fun)
    rec: list = []
    polished = _nm(f, best.x, bounds, cfg, rec, xatol=cfg.polish_xatol)
    if polished.fun > best.fun:
        polished = best
    info = [{"x0": x0.tolist(), "x": r.x.tolist(), "loglik": -float(r.fun),
             "success": bool(r.success), "nfev": int(r.nfev)} for x0, r in zip(starts, runs)]
    return polished, info, rec


def _neg(v: float) -> float:
    return 1e300 if v == -math.inf or not np.isfinite(v) else -v


def _outer_bounds(cfg: FitConfig):
    b = [(math.log(cfg.t_bounds[0]), math.log(cfg.t_bounds[1]))]
    if cfg.shared_gamma:
        b.append(cfg.gamma_bounds)
    return b


def fit_mle(tables, config: FitConfig | None = None, cache: MeansCache | None = None) -> FitResult:
    """Maximum-likelihood fit of ``t`` (shared), gammas and thetas.

    Multi-start Nelder-Mead over ``log t`` (and the shared gamma); thetas
    are profiled exactly, per-locus gammas by bounded Brent search.  With
    ``profile_theta=False`` (all-shared map only) the simplex runs over all
    four parameters with log-transformed thetas instead.
    """
    cfg = config if config is not None else FitConfig()
    model = _Model(tables, cfg, cache)
    if not cfg.profile_theta:
        return _fit_joint(model)
    bounds = _outer_bounds(cfg)

    def f(z):
        return _neg(model.profile(math.exp(z[0]), z[1] if cfg.shared_gamma else None)[0])

    best, info, rec = _multistart(f, _starts(cfg, len(bounds)), bounds, cfg)
    z = best.x
    t = math.exp(z[0])
    ll, gammas, ths, thr = model.profile(t, z[1] if cfg.shared_gamma else None)
    est = _pack(cfg, t, gammas, ths, thr)
    se, note = _standard_errors(model, est)
    status = best.message if best.success else f"not converged: {best.message}"
    if note:
        status += f"; {note}"
    return FitResult(
        estimates=est, loglik=float(ll), se=se, success=bool(best.success), status=str(status),
        n_evals=model.evals, n_solves=model.cache.solves,
        starts=info, trajectory=rec, config=cfg.to_dict())


def _fit_joint(model: _Model) -> FitResult:
    cfg = model.cfg
    if not (cfg.shared_gamma and cfg.shared_theta_s and cfg.shared_theta_r):
        raise ValueError("the joint (unprofiled) search needs the all-shared parameter map")
    L = model.L
    lb = [(math.log(cfg.t_bounds[0]), math.log(cfg.t_bounds[1])), cfg.gamma_bounds,
          tuple(map(math.log, cfg.theta_bounds)), tuple(map(math.log, cfg.theta_bounds))]

    def f(z):
        t, g, a, b = math.exp(z[0]), z[1], math.exp(z[2]), math.exp(z[3])
        return _neg(model.loglik_full(t, np.full(L, g), np.full(L, a), np.full(L, b)))

    starts = []
    for x0 in _starts(cfg, 2):
        # theta starts from the closed-form profile at the (t, gamma) start
        _, _, ths, thr = model.profile(math.exp(x0[0]), x0[1])
        starts.append(np.array([x0[0], x0[1], math.log(ths[0]), math.log(thr[0])]))
    best, info, rec = _multistart(f, starts, lb, cfg)
    z = best.x
    t = math.exp(z[0])
    est = _pack(cfg, t, np.full(L, z[1]), np.full(L, math.exp(z[2])), np.full(L, math.exp(z[3])))
    se, note = _standard_errors(model, est)
    status = best.message if best.success else f"not converged: {best.message}"
    if note:
        status += f"; {note}"
    return FitResult(est, -float(best.fun), se, bool(best.success), str(status),
                     model.evals, model.cache.solves, info, rec, cfg.to_dict())


def _pack(cfg: FitConfig, t, gammas, ths, thr) -> dict:
    def one(v, shared):
        return float(v[0]) if shared else [float(a) for a in v]

    return {"t": float(t), "gamma": one(gammas, cfg.shared_gamma),
            "theta_s": one(ths, cfg.shared_theta_s), "theta_r": one(thr, cfg.shared_theta_r)}


def _global_index(cfg: FitConfig, L: int):
    """Map (locus, local parameter) -> index into the global parameter vector."""
    idx = np.zeros((L, 4), dtype=int)
    k = 1  # t is index 0
    for j, (name, shared) in enumerate((("gamma", cfg.shared_gamma),
                                        ("theta_s", cfg.shared_theta_s),
                                        ("theta_r", cfg.shared_theta_r)), start=1):
        if shared:
            idx[:, j] = k
            k += 1
        else:
            idx[:, j] = np.arange(k, k + L)
            k += L
    return idx, k


def _locus_vectors(cfg: FitConfig, est: dict, L: int) -> np.ndarray:
    out = np.zeros((L, 4))
    out[:, 0] = est["t"]
    for j, name in enumerate(("gamma", "theta_s", "theta_r"), start=1):
        out[:, j] = est[name]
    return out


def _standard_errors(model: _Model, est: dict):
    """Observed-information standard errors from a finite-difference Hessian.

    The Hessian is assembled from per-locus 4x4 blocks in (t, gamma, theta_s,
    theta_r); shared parameters accumulate across loci.
    """
    cfg = model.cfg
    L = model.L
    idx, dim = _global_index(cfg, L)
    P = _locus_vectors(cfg, est, L)
    H = np.zeros((dim, dim))
    lo = np.array([cfg.t_bounds[0], cfg.gamma_bounds[0], cfg.theta_bounds[0], cfg.theta_bounds[0]])
    for l in range(L):
        p = P[l]
        h = np.array([1e-4 * p[0], 1e-3, 1e-4 * p[2], 1e-4 * p[3]])
        h = np.minimum(h, 0.5 * np.maximum(p - lo, 1e-300))
        h[1] = 1e-3

        def f(q, l=l):
            (Us, Zs, Ss), (Ur, Zr, Sr) = model.class_stats(l, q[0], q[1])
            return (model._class_ll(q[2], Us, Zs, Ss) + model._class_ll(q[3], Ur, Zr, Sr))

        f0 = f(p)
        hl = np.zeros((4, 4))
        for i in range(4):
            e = np.zeros(4)
            e[i] = h[i]
            hl[i, i] = (f(p + e) - 2 * f0 + f(p - e)) / h[i] ** 2
            for j in range(i):
                d = np.zeros(4)
                d[j] = h[j]
                v = (f(p + e + d) - f(p + e - d) - f(p - e + d) + f(p - e - d)) / (4 * h[i] * h[j])
                hl[i, j] = hl[j, i] = v
        gi = idx[l]
        for i in range(4):
            for j in range(4):
                H[gi[i], gi[j]] += hl[i, j]
    note = ""
    with np.errstate(all="ignore"):
        try:
            cov = np.linalg.inv(-H)
            var = np.diag(cov)
        except np.linalg.LinAlgError:
            var = np.full(dim, np.nan)
            note = "singular observed information"
    if not np.all(np.isfinite(var)) or np.any(var < 0):
        note = note or "observed information not positive definite"
    sd = np.sqrt(np.where(var >= 0, var, np.nan))
    se = {"t": float(sd[0])}
    for j, (name, shared) in enumerate((("gamma", cfg.shared_gamma),
                                        ("theta_s", cfg.shared_theta_s),
                                        ("theta_r", cfg.shared_theta_r)), start=1):
        col = sd[idx[:, j]]
        se[name] = float(col[0]) if shared else [float(v) for v in col]
    return se, note


# ---------------------------------------------------------------------------
# profile likelihood intervals


def profile_loglik(model: _Model, parameter: str, value: float, start: dict) -> float:
    """Maximum of the log-likelihood with ``parameter`` held at ``value``."""
    cfg = model.cfg
    if parameter == "t":
        if cfg.shared_gamma:
            res = _nm(lambda z: _neg(model.profile(value, z[0])[0]),
                      np.array([start["gamma"]]), [cfg.gamma_bounds], cfg)
            return -float(res.fun)
        return model.profile(value)[0]
    if parameter == "gamma":
        res = _nm(lambda z: _neg(model.profile(math.exp(z[0]), value)[0]),
                  np.array([math.log(start["t"])]), _outer_bounds(cfg)[:1], cfg)
        return -float(res.fun)
    fixed = {parameter: value}
    bounds = _outer_bounds(cfg)
    x0 = [math.log(start["t"])] + ([start["gamma"]] if cfg.shared_gamma else [])

    def f(z):
        return _neg(model.profile(math.exp(z[0]), z[1] if cfg.shared_gamma else None, fixed)[0])

    return -float(_nm(f, np.array(x0), bounds, cfg).fun)


def profile_ci(tables, config: FitConfig | None = None, parameter: str = "t",
               level: float = 0.95, fit: FitResult | None = None,
               cache: MeansCache | None = None) -> ProfileInterval:
    """Profile-likelihood interval ``{v : 2 (l_max - l_p(v)) <= chi2_1(level)}``.

    ``parameter`` must be a single (shared) parameter: ``t`` always, ``gamma``
    or a theta only when shared.  Bounds found by outward bracketing and
    ``brentq``; a side that reaches the box constraint is flagged unbounded.
    """
    cfg = config if config is not None else FitConfig()
    if parameter not in PARAMS:
        raise ValueError(f"unknown parameter {parameter!r}")
    shared = {"t": True, "gamma": cfg.shared_gamma, "theta_s": cfg.shared_theta_s,
              "theta_r": cfg.shared_theta_r}[parameter]
    if not shared:
        raise ValueError(f"{parameter} is per-locus; profile intervals need a shared parameter")
    if not 0 <= level < 1:
        raise ValueError("level must be in [0, 1)")
    model = _Model(tables, cfg, cache)
    if fit is None:
        fit = fit_mle(tables, cfg, model.cache)
    est = fit.estimates
    mle = float(est[parameter])
    if level == 0:
        return ProfileInterval(parameter, level, mle, mle, mle, False, False)
    crit = float(chi2.ppf(level, 1))
    lmax = fit.loglik
    lo_b, hi_b = {"t": cfg.t_bounds, "gamma": cfg.gamma_bounds,
                  "theta_s": cfg.theta_bounds, "theta_r": cfg.theta_bounds}[parameter]
    additive = parameter == "gamma"

    def g(v):
        return 2.0 * (lmax - profile_loglik(model, parameter, v, est)) - crit

    def side(direction):
        step = 0.25
        inner = mle
        while True:
            if additive:
                v = mle + direction * step
            else:
                v = mle * math.exp(direction * step)
            v = min(max(v, lo_b), hi_b)
            gv = g(v)
            if gv > 0:
                a, b = sorted((inner, v))
                tol = 1e-6 * max(1.0, abs(mle))
                return optimize.brentq(g, a, b, xtol=tol), False
            if v in (lo_b, hi_b):
                return v, True
            inner = v
            step *= 2

    lower, lu = side(-1)
    upper, uu = side(+1)
    return ProfileInterval(parameter, level, mle, float(lower), float(upper), lu, uu)


def simulate_tables(beta_s: ScaledParams, beta_r: ScaledParams, m: int, n: int, loci: int,
                    seed: int = 0, layout: str = DOHRS, grid: Grid | None = None,
                    double_count_shared: bool = False) -> list:
    """Independent Poisson tables drawn from ``table_means``."""
    et = table_means(m, n, beta_s, beta_r, grid=grid)
    means = et.means()
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(loci):
        draw = {k: int(rng.poisson(v)) for k, v in means.items()}
        tab = CountTable(DOHRS, m, n, draw)
        out.append(tab.to_dprs(double_count_shared) if layout == DPRS else tab)
    return out
