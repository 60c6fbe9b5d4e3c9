"""Parameter, grid, measure and count-table value types.

All types are frozen dataclasses with ``to_dict``/``from_dict`` so they can be
round-tripped through JSON using the field names given here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

NEUTRAL_GAMMA = 1e-8

DPRS = "DPRS"
DOHRS = "DOHRS"

DPRS_KEYS = ("K_s", "V_s", "K_r", "V_r")
DOHRS_KEYS = ("K_s", "O_s", "H_s", "K_r", "O_r", "H_r")


@dataclass(frozen=True)
class ScaledParams:
    """Diffusion-scale parameters ``(t, theta, gamma)`` for one site class."""

    t: float
    theta: float
    gamma: float = 0.0

    def __post_init__(self):
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ValueError(f"t must be finite and >= 0, got {self.t}")
        if not (self.theta >= 0 and math.isfinite(self.theta)):
            raise ValueError(f"theta must be finite and >= 0, got {self.theta}")
        if not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")

    def to_dict(self) -> dict:
        return {"t": self.t, "theta": self.theta, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScaledParams":
        return cls(t=float(d["t"]), theta=float(d["theta"]), gamma=float(d.get("gamma", 0.0)))


@dataclass(frozen=True)
class FiniteParams:
    """Moran-chain parameters: population size, selection, immigration, steps."""

    N: int
    sigma: float = 0.0
    mu: float = 0.0
    k: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not (1.0 + self.sigma > 0):
            raise ValueError(f"1 + sigma must be positive, got sigma={self.sigma}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be an integer >= 0, got {self.k}")

    @classmethod
    def from_scaled(cls, N: int, beta: ScaledParams) -> "FiniteParams":
        """Inverse of :func:`scale_map` at fixed ``N`` (``k`` is rounded)."""
        return cls(N=N, sigma=beta.gamma / N, mu=beta.theta / N, k=int(round(beta.t * N * N)))

    def to_dict(self) -> dict:
        return {"N": self.N, "sigma": self.sigma, "mu": self.mu, "k": self.k}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FiniteParams":
        return cls(N=int(d["N"]), sigma=float(d.get("sigma", 0.0)),
                   mu=float(d.get("mu", 0.0)), k=int(d.get("k", 0)))


def scale_map(fp: FiniteParams) -> ScaledParams:
    """Map a finite Moran parametrisation to the diffusion scale."""
    N = fp.N
    return ScaledParams(t=fp.k / (N * N), theta=N * fp.mu, gamma=N * fp.sigma)


@dataclass(frozen=True)
class Grid:
    """Spatial nodes on [0, 1] plus the time step used by the PDE solver."""

    nodes: np.ndarray
    dt: float = 1e-3

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 9:
            raise ValueError("grid needs at least 9 nodes (J >= 8)")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("grid endpoints must be exactly 0 and 1")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @classmethod
    def uniform(cls, J: int = 800, dt: float = 1e-3) -> "Grid":
        return cls(np.linspace(0.0, 1.0, J + 1), dt)

    @property
    def J(self) -> int:
        return self.nodes.size - 1

    @property
    def is_uniform(self) -> bool:
        h = np.diff(self.nodes)
        return bool(np.allclose(h, h[0], rtol=1e-10, atol=0))

    def refined(self) -> "Grid":
        """Halve every spacing and the time step."""
        x = self.nodes
        mid = 0.5 * (x[1:] + x[:-1])
        out = np.empty(2 * x.size - 1)
        out[0::2] = x
        out[1::2] = mid
        return Grid(out, self.dt / 2)

    def key(self) -> tuple:
        return (self.J, float(self.nodes[1]), float(self.nodes[-2]), self.dt)

    def __eq__(self, other):
        return (isinstance(other, Grid) and self.dt == other.dt
                and np.array_equal(self.nodes, other.nodes))

    def __hash__(self):
        return hash((self.nodes.tobytes(), self.dt))

    def to_dict(self) -> dict:
        return {"nodes": self.nodes.tolist(), "dt": self.dt}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Grid":
        if "nodes" in d:
            return cls(np.asarray(d["nodes"], dtype=float), float(d.get("dt", 1e-3)))
        return cls.uniform(int(d.get("J", 800)), float(d.get("dt", 1e-3)))


def default_grid(t: float, J: int = 800) -> Grid:
    """Uniform grid with ``dt = min(1e-3, t/200)``."""
    dt = 1e-3 if t <= 0 else min(1e-3, t / 200.0)
    return Grid.uniform(J, dt)


def phi1(z):
    """``(1 - exp(-z)) / z`` with the removable singularity at 0 filled in."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-8
    zs = z[small]
    out[small] = 1.0 - zs / 2.0 + zs * zs / 6.0
    zb = z[~small]
    out[~small] = -np.expm1(-zb) / zb
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class InitialMeasure:
    """Ancestral measure nu(dx) on (0, 1).

    ``density_over_x`` holds ``x * nu'(x)`` (bounded even when nu has a 1/x
    singularity at 0). It is only used for ``kind="tabulated"``, on ``nodes``.
    """

    kind: str = "zero"
    theta: float = 0.0
    gamma: float = 0.0
    nodes: np.ndarray | None = None
    density_over_x: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "equilibrium", "tabulated"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "equilibrium" and self.theta < 0:
            raise ValueError("equilibrium theta must be >= 0")
        if self.kind == "tabulated":
            if self.nodes is None or self.density_over_x is None:
                raise ValueError("tabulated measure needs nodes and density_over_x")
            x = np.asarray(self.nodes, dtype=float)
            d = np.asarray(self.density_over_x, dtype=float)
            if x.shape != d.shape or x.ndim != 1:
                raise ValueError("nodes and density_over_x must be 1-d and equal length")
            if np.any(d < 0) or not np.all(np.isfinite(d)):
                raise ValueError("density_over_x must be finite and nonnegative")
            object.__setattr__(self, "nodes", x)
            object.__setattr__(self, "density_over_x", d)

    @classmethod
    def zero(cls) -> "InitialMeasure":
        return cls("zero")

    @classmethod
    def equilibrium(cls, theta: float, gamma: float = 0.0) -> "InitialMeasure":
        return cls("equilibrium", theta=float(theta), gamma=float(gamma))

    @classmethod
    def tabulated(cls, nodes, density_over_x) -> "InitialMeasure":
        return cls("tabulated", nodes=np.asarray(nodes, float),
                   density_over_x=np.asarray(density_over_x, float))

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "equilibrium" and self.theta == 0)

    def x_density(self, x) -> np.ndarray:
        """Evaluate ``x * nu'(x)`` at points in [0, 1]."""
        x = np.asarray(x, dtype=float)
        if self.is_zero:
            return np.zeros_like(x)
        if self.kind == "equilibrium":
            # x nu'(x) = theta * exp(g x) (s(1) - s(x)) / ((1 - x) s(1))
            #          = theta * phi1(g (1 - x)) / s(1)
            g = self.gamma
            s1 = float(phi1(g))  # s(1) = phi1(gamma)
            return self.theta * phi1(g * (1.0 - x)) / s1
        return np.interp(x, self.nodes, self.density_over_x)

    def density(self, x) -> np.ndarray:
        """Lebesgue density nu'(x) for 0 < x < 1."""
        x = np.asarray(x, dtype=float)
        return self.x_density(x) / x

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "equilibrium":
            d.update(theta=self.theta, gamma=self.gamma)
        elif self.kind == "tabulated":
            d.update(nodes=self.nodes.tolist(), density_over_x=self.density_over_x.tolist())
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "InitialMeasure":
        kind = d.get("kind", "zero")
        if kind == "equilibrium":
            return cls.equilibrium(float(d["theta"]), float(d.get("gamma", 0.0)))
        if kind == "tabulated":
            return cls.tabulated(d["nodes"], d["density_over_x"])
        return cls.zero()


@dataclass(frozen=True)
class CountTable:
    """Observed counts or expected means in DPRS (2x2) or DOHRS (2x3) layout."""

    layout: str
    m: int
    n: int
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.layout not in (DPRS, DOHRS):
            raise ValueError(f"layout must be DPRS or DOHRS, got {self.layout!r}")
        if self.m < 1 or self.n < 1:
            raise ValueError("sample sizes m and n must be >= 1")
        keys = self.keys()
        missing = [k for k in keys if k not in self.counts]
        extra = [k for k in self.counts if k not in keys]
        if missing or extra:
            raise ValueError(f"{self.layout} table needs keys {keys}; "
                             f"missing {missing}, unexpected {extra}")
        clean = {}
        for k in keys:
            v = self.counts[k]
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"count {k}={v} must be finite and >= 0")
            clean[k] = v
        object.__setattr__(self, "counts", clean)

    def keys(self) -> tuple:
        return DPRS_KEYS if self.layout == DPRS else DOHRS_KEYS

    def values(self) -> np.ndarray:
        return np.array([self.counts[k] for k in self.keys()], dtype=float)

    def __getitem__(self, key):
        return self.counts[key]

    def to_dprs(self, double_count_shared: bool = False) -> "CountTable":
        """Collapse to DPRS with V = O + H (or O + 2H when double counting)."""
        if self.layout == DPRS:
            return self
        c = self.counts
        w = 2 if double_count_shared else 1
        return CountTable(DPRS, self.m, self.n, {
            "K_s": c["K_s"], "V_s": c["O_s"] + w * c["H_s"],
            "K_r": c["K_r"], "V_r": c["O_r"] + w * c["H_r"],
        })

    def to_dict(self) -> dict:
        return {"layout": self.layout, "m": self.m, "n": self.n,
                "counts": {k: self.counts[k] for k in self.keys()}}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CountTable":
        return cls(d["layout"], int(d["m"]), int(d["n"]), dict(d["counts"]))
