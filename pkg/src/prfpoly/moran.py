"""Exact finite-population computations for Moran's second model.

These are the ground truth for every diffusion-scale quantity: the tridiagonal
transition matrix, gambler's-ruin fixation probabilities, the closed-form
Green matrix of a birth-death chain, exact expected site-count fields and a
Monte Carlo realisation of the field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .types import FiniteParams

NEUTRAL_SIGMA = 1e-12


@dataclass(frozen=True)
class MoranMatrix:
    """Tridiagonal transition probabilities on states 0..N."""

    N: int
    sigma: float
    up: np.ndarray
    down: np.ndarray
    stay: np.ndarray

    def sparse(self) -> sp.csr_matrix:
        N = self.N
        return sp.diags([self.down[1:], self.stay, self.up[:-1]], [-1, 0, 1],
                        shape=(N + 1, N + 1), format="csr")

    def dense(self) -> np.ndarray:
        return self.sparse().toarray()

    def step_row(self, e: np.ndarray) -> np.ndarray:
        """Row vector times the matrix: ``e @ P`` without forming ``P``."""
        out = e * self.stay
        out[1:] += e[:-1] * self.up[:-1]
        out[:-1] += e[1:] * self.down[1:]
        return out

    def step_col(self, v: np.ndarray) -> np.ndarray:
        """Matrix times a column vector: ``P @ v``."""
        out = v * self.stay
        out[:-1] += self.up[:-1] * v[1:]
        out[1:] += self.down[1:] * v[:-1]
        return out


def moran_step_matrix(fp: FiniteParams) -> MoranMatrix:
    N, sig = fp.N, fp.sigma
    if not 1.0 + sig > 0:
        raise ValueError("1 + sigma must be positive")
    i = np.arange(N + 1, dtype=float)
    x = i / N
    denom = 1.0 + sig * x
    up = (1.0 + sig) * x * (1.0 - x) / denom
    down = x * (1.0 - x) / denom
    up[0] = up[N] = 0.0
    down[0] = down[N] = 0.0
    stay = 1.0 - up - down
    return MoranMatrix(N, sig, up, down, stay)


def absorption_profile(fp: FiniteParams, i: int, m: int) -> float:
    """``P_i(T_m < T_0)`` by the gambler's-ruin formula."""
    if i < 1 or m > fp.N or i > m:
        raise ValueError(f"need 1 <= i <= m <= N, got i={i}, m={m}, N={fp.N}")
    sig = fp.sigma
    if abs(sig) < NEUTRAL_SIGMA:
        return i / m
    lr = np.log1p(sig)
    return float(np.expm1(-i * lr) / np.expm1(-m * lr))


@dataclass(frozen=True)
class ChainGreen:
    """Green matrix and fixation probabilities of the chain (interior states 1..N-1).

    ``g[i-1, j-1]`` is the expected number of visits to ``j`` from ``i``
    (the zero-step term included).  ``alpha``/``A`` are indexed 0..N, ``h`` 0..N.
    """

    N: int
    g: np.ndarray
    alpha: np.ndarray
    A: np.ndarray
    h: np.ndarray

    def dual_green(self) -> np.ndarray:
        """Green matrix of the chain conditioned on fixation (h-transform)."""
        h = self.h[1:-1]
        return self.g * h[None, :] / h[:, None]

    def expected_absorption_time(self) -> np.ndarray:
        """``E_i`` of the time spent in the interior, ``i = 1..N-1``."""
        return self.g.sum(axis=1)

    def dual_expected_time(self) -> np.ndarray:
        """Mean fixation time of the conditioned chain, in units of ``N^2`` steps."""
        return self.dual_green().sum(axis=1) / self.N ** 2


def chain_green(fp: FiniteParams) -> ChainGreen:
    """Closed-form Green matrix of the Moran chain."""
    mm = moran_step_matrix(fp)
    N = fp.N
    q = mm.up
    # alpha_j = prod_{k<=j} p_k/q_k; for the Moran chain p_k/q_k = 1/(1+sigma)
    j = np.arange(N + 1, dtype=float)
    alpha = np.exp(-j * np.log1p(fp.sigma))
    # A_i = sum_{j=0}^{i-1} alpha_j, A_0 = 0
    A = np.concatenate([[0.0], np.cumsum(alpha[:-1])])
    h = A / A[N]
    idx = np.arange(1, N)
    lo = np.minimum.outer(idx, idx)
    hi = np.maximum.outer(idx, idx)
    g = A[N] * h[lo] * (1.0 - h[hi]) / (alpha[idx] * q[idx])[None, :]
    return ChainGreen(N, g, alpha, A, h)


@dataclass(frozen=True)
class SiteCountField:
    """Expected (or empirical) numbers of sites with ``j`` mutant copies.

    ``expected`` is indexed by ``j = 1..N-1``; ``fixed_mean`` is the mean count
    at ``j = N``; ``omega0`` the initial means.
    """

    N: int
    k: int
    expected: np.ndarray
    fixed_mean: float
    omega0: np.ndarray
    variance: np.ndarray | None = None
    fixed_variance: float | None = None
    reps: int | None = None

    def frequencies(self) -> np.ndarray:
        return np.arange(1, self.N) / self.N

    def bin_sums(self, edges) -> np.ndarray:
        """Sum of ``expected`` over states with ``edges[b] <= j/N < edges[b+1]``."""
        x = self.frequencies()
        edges = np.asarray(edges, dtype=float)
        out = np.zeros(edges.size - 1)
        for b in range(out.size):
            sel = (x >= edges[b] - 1e-12) & (x < edges[b + 1] - 1e-12)
            out[b] = self.expected[sel].sum()
        return out


def _check_omega(fp: FiniteParams, omega0) -> np.ndarray:
    if omega0 is None:
        return np.zeros(fp.N - 1)
    w = np.asarray(omega0, dtype=float)
    if w.shape != (fp.N - 1,):
        raise ValueError(f"omega0 must have length N-1 = {fp.N - 1}")
    if np.any(w < 0):
        raise ValueError("omega0 must be nonnegative")
    return w


def expected_site_counts(fp: FiniteParams, omega0=None, checkpoints=None):
    """Exact means ``E(N_k(j))`` and the expected number of fixed sites.

    Immigrants arrive at state 1 once per step, with the newest arrival having
    made zero moves: ``e_k = e_{k-1} P + mu delta_1``.  Evolution uses ``k``
    tridiagonal row-vector products.  With ``checkpoints`` (a sequence of step
    counts) a list of fields is returned, one per checkpoint.
    """
    w = _check_omega(fp, omega0)
    mm = moran_step_matrix(fp)
    N = fp.N
    e = np.zeros(N + 1)
    e[1:N] = w
    targets = sorted(set(int(c) for c in checkpoints)) if checkpoints is not None else [fp.k]
    if targets and targets[0] < 0:
        raise ValueError("checkpoints must be nonnegative")
    out = []
    step = 0
    for target in targets:
        while step < target:
            e = mm.step_row(e)
            e[1] += fp.mu
            step += 1
        out.append(SiteCountField(N, target, e[1:N].copy(), float(e[N]), w))
    return out if checkpoints is not None else out[0]


def stationary_omega(fp: FiniteParams) -> np.ndarray:
    """Stationary site-count means of the chain with immigration: ``mu g(1, .)``."""
    return fp.mu * chain_green(fp).g[0]


# ---------------------------------------------------------------------------
# Monte Carlo


def run_chains(fp: FiniteParams, start, steps, rng: np.random.Generator) -> np.ndarray:
    """Final states of independent chains started at ``start`` after ``steps`` steps.

    Holding periods are skipped by drawing their geometric length, so each
    iteration performs one jump per live chain.
    """
    mm = moran_step_matrix(fp)
    state = np.array(start, dtype=np.int64, copy=True)
    remaining = np.array(steps, dtype=np.int64, copy=True)
    state, remaining = np.broadcast_arrays(state, remaining)
    state = state.copy()
    remaining = remaining.copy()
    N = fp.N
    move = mm.up + mm.down
    p_up = np.divide(mm.up, move, out=np.zeros_like(move), where=move > 0)
    live = np.flatnonzero((state > 0) & (state < N) & (remaining > 0))
    while live.size:
        s = state[live]
        wait = rng.geometric(move[s])  # steps until (and including) the next jump
        r = remaining[live] - wait
        jumped = r >= 0
        idx = live[jumped]
        s = s[jumped]
        up = rng.random(idx.size) < p_up[s]
        state[idx] = s + np.where(up, 1, -1)
        remaining[idx] = r[jumped]
        live = idx[(state[idx] > 0) & (state[idx] < N) & (remaining[idx] > 0)]
    return state


def simulate_field(fp: FiniteParams, omega0=None, seed: int = 0, reps: int = 1000,
                   return_counts: bool = False):
    """Replicated Monte Carlo realisations of the site-count field.

    Legacy sites are Poisson(omega_i) at each state ``i``; immigrant sites
    arrive Poisson(mu) per step at state 1.  Returns a :class:`SiteCountField`
    holding the empirical mean and variance over ``reps`` replicates.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    w = _check_omega(fp, omega0)
    rng = np.random.default_rng(seed)
    N, k = fp.N, fp.k
    counts = np.zeros((reps, N + 1), dtype=np.int64)

    legacy = rng.poisson(np.broadcast_to(w, (reps, N - 1)))
    rep_l, state_l = np.nonzero(legacy)
    mult = legacy[rep_l, state_l]
    rep_l = np.repeat(rep_l, mult)
    start_l = np.repeat(state_l + 1, mult)

    n_new = rng.poisson(fp.mu * k, size=reps) if k > 0 else np.zeros(reps, np.int64)
    rep_n = np.repeat(np.arange(reps), n_new)
    # arrival steps uniform on 1..k; an arrival at step r makes k - r moves
    moves_n = k - rng.integers(1, k + 1, size=rep_n.size) if k > 0 else np.zeros(0, np.int64)

    starts = np.concatenate([start_l, np.ones(rep_n.size, np.int64)])
    steps = np.concatenate([np.full(start_l.size, k, np.int64), moves_n])
    reps_all = np.concatenate([rep_l, rep_n])
    final = run_chains(fp, starts, steps, rng)
    np.add.at(counts, (reps_all, final), 1)

    field = SiteCountField(
        N, k, counts[:, 1:N].mean(axis=0), float(counts[:, N].mean()), w,
        variance=counts[:, 1:N].var(axis=0, ddof=1) if reps > 1 else np.zeros(N - 1),
        fixed_variance=float(counts[:, N].var(ddof=1)) if reps > 1 else 0.0,
        reps=reps,
    )
    if return_counts:
        return field, counts
    return field


def simulate_absorption(fp: FiniteParams, i: int, m: int, paths: int, seed: int = 0) -> float:
    """Monte Carlo estimate of ``P_i(T_m < T_0)`` on the jump chain."""
    rng = np.random.default_rng(seed)
    p = (1.0 + fp.sigma) / (2.0 + fp.sigma)  # up-jump probability, state independent
    state = np.full(paths, i, dtype=np.int64)
    live = np.arange(paths)
    while live.size:
        state[live] += np.where(rng.random(live.size) < p, 1, -1)
        live = live[(state[live] > 0) & (state[live] < m)]
    return float(np.mean(state >= m))


def site_categories(a, b, m: int, n: int) -> np.ndarray:
    """Per-site category from mutant counts ``a`` (sample of ``m``) and ``b``
    (sample of ``n``): 0 = fixed difference, 1 = polymorphic in one sample,
    2 = polymorphic in both, -1 = not counted (same monomorphic allele)."""
    a = np.asarray(a)
    b = np.asarray(b)
    poly_a = (a > 0) & (a < m)
    poly_b = (b > 0) & (b < n)
    cat = np.full(a.shape, -1, dtype=np.int64)
    cat[((a == 0) & (b == n)) | ((a == m) & (b == 0))] = 0
    cat[poly_a ^ poly_b] = 1
    cat[poly_a & poly_b] = 2
    return cat


def classify_sample_pairs(a, b, m: int, n: int) -> np.ndarray:
    """Counts ``(K, O, H)`` over sites; see :func:`site_categories`."""
    cat = site_categories(a, b, m, n)
    return np.bincount(cat[cat >= 0], minlength=3)[:3].astype(np.int64)


def simulate_divergence(fp: FiniteParams, m: int, n: int, loci: int, seed: int = 0,
                        omega0=None) -> np.ndarray:
    """Monte Carlo DOHRS counts for one site class, shape ``(loci, 3)``.

    The ancestral field is Poisson with means ``omega0`` (default: the
    stationary means of the chain with immigration).  Every legacy site
    starts at the same count in both daughters, which then evolve
    independently for ``fp.k`` steps and receive their own immigrant sites.
    Samples of sizes ``m`` and ``n`` are binomial in the final frequencies.
    """
    if loci < 1:
        raise ValueError("loci must be >= 1")
    w = stationary_omega(fp) if omega0 is None else _check_omega(fp, omega0)
    rng = np.random.default_rng(seed)
    N, k = fp.N, fp.k
    legacy = rng.poisson(np.broadcast_to(w, (loci, N - 1)))
    loc_l, st = np.nonzero(legacy)
    mult = legacy[loc_l, st]
    loc_l = np.repeat(loc_l, mult)
    start_l = np.repeat(st + 1, mult)
    fin1 = run_chains(fp, start_l, np.full(start_l.size, k), rng)
    fin2 = run_chains(fp, start_l, np.full(start_l.size, k), rng)
    a_l = rng.binomial(m, fin1 / N)
    b_l = rng.binomial(n, fin2 / N)

    def new_sites(size):
        cnt = rng.poisson(fp.mu * k, size=loci) if k > 0 else np.zeros(loci, np.int64)
        loc = np.repeat(np.arange(loci), cnt)
        moves = k - rng.integers(1, k + 1, size=loc.size) if k > 0 else np.zeros(0, np.int64)
        fin = run_chains(fp, np.ones(loc.size, np.int64), moves, rng)
        return loc, rng.binomial(size, fin / N)

    loc1, a_n = new_sites(m)
    loc2, b_n = new_sites(n)
    out = np.zeros((loci, 3), dtype=np.int64)
    cat = site_categories(a_l, b_l, m, n)
    keep = cat >= 0
    np.add.at(out, (loc_l[keep], cat[keep]), 1)
    # a new site is absent (count 0) from the other daughter's sample
    for loc, cnt, size, other in ((loc1, a_n, m, n), (loc2, b_n, n, m)):
        fixed = cnt == size
        poly = (cnt > 0) & (cnt < size)
        np.add.at(out[:, 0], loc[fixed], 1)
        np.add.at(out[:, 1], loc[poly], 1)
    return out
