"""Scalar analysis: controls, the constant beta(p), fractional factorials and
the neo-classical inequality."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import TimeGrid
from .tensor import DomainError

SUPERADDITIVITY_TOL = 1e-12

# ---------------------------------------------------------------- factorials


def gfact(x: float) -> float:
    """Generalised factorial x! = Gamma(x + 1) for x > -1."""
    if not x > -1:
        raise DomainError(f"x! needs x > -1, got {x!r}")
    return math.gamma(x + 1.0)


# ---------------------------------------------------------------- beta(p)

_BETA_TERMS = 2000


def beta(p: float) -> float:
    """p * (1 + sum_{r>=3} (2/(r-2))^e) with e = (floor(p)+1)/p.

    The exponent e lies in (1, 2], so the series decays too slowly to be summed
    to machine precision directly.  The first ``_BETA_TERMS`` terms are added
    exactly and the remainder is the Euler-Maclaurin expansion of the tail,
    whose error is far below 1e-15 at that cut-off.
    """
    if not p >= 1:
        raise DomainError(f"beta(p) needs p >= 1, got {p!r}")
    e = (math.floor(p) + 1) / p
    m = np.arange(1, _BETA_TERMS + 1, dtype=float)
    # summing small terms first keeps the rounding error down
    head = float(np.sum(((2.0 / m) ** e)[::-1]))
    M = float(_BETA_TERMS)
    c = 2.0**e
    f = c * M**-e
    tail = (
        c * M ** (1.0 - e) / (e - 1.0)
        - f / 2.0
        + e * f / M / 12.0
        - e * (e + 1) * (e + 2) * f / M**3 / 720.0
        + e * (e + 1) * (e + 2) * (e + 3) * (e + 4) * f / M**5 / 30240.0
    )
    return p * (1.0 + head + tail)


# ---------------------------------------------------------------- neo-classical


@dataclass(frozen=True)
class NeoClassical:
    lhs: float
    rhs: float
    holds: bool


def neoclassical_check(p: float, n: int, s: float, t: float) -> NeoClassical:
    if p < 1 or n < 0 or s < 0 or t < 0:
        raise DomainError("need p >= 1, n >= 0 and s, t >= 0")
    lhs = sum(
        s ** (i / p) * t ** ((n - i) / p) / (gfact(i / p) * gfact((n - i) / p))
        for i in range(n + 1)
    ) / p
    rhs = (s + t) ** (n / p) / gfact(n / p)
    return NeoClassical(lhs, rhs, lhs <= rhs + 1e-12 * max(1.0, abs(rhs)))


# ---------------------------------------------------------------- controls


class Control:
    """A super-additive, null-diagonal function omega(s, t) on a simplex."""

    family: str = "abstract"

    def matrix(self, grid: TimeGrid) -> np.ndarray:
        """omega(t_i, t_j) for all grid pairs; entries with i > j are zero."""
        raise NotImplementedError

    def __call__(self, s: float, t: float) -> float:
        raise NotImplementedError

    def __add__(self, other: "Control") -> "Control":
        return SumControl([self, other])

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class AffineControl(Control):
    c: float = 1.0
    family: str = field(default="affine", init=False)

    def __post_init__(self) -> None:
        if not self.c >= 0:
            raise DomainError("affine control needs c >= 0")

    def matrix(self, grid: TimeGrid) -> np.ndarray:
        t = grid.times
        return np.triu(self.c * (t[None, :] - t[:, None]))

    def __call__(self, s: float, t: float) -> float:
        if s > t:
            raise DomainError(f"need s <= t, got s={s!r}, t={t!r}")
        return self.c * (t - s)

    def to_json(self) -> dict:
        return {"family": "affine", "c": self.c}


def pvar_matrix(values: np.ndarray, p: float) -> np.ndarray:
    """Grid p-variation sup_D sum ||x_{t_{i+1}} - x_{t_i}||^p for every pair.

    Dynamic programming over subpartitions: for each right end t,
    W[s, t] = max_{s <= u < t} W[s, u] + ||x_t - x_u||^p, vectorised over s.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    dist = np.linalg.norm(x[None, :, :] - x[:, None, :], axis=-1) ** p
    W = np.full((n, n), -np.inf)
    W[0, 0] = 0.0
    for t in range(1, n):
        W[t, t] = 0.0
        cand = W[:t, :t] + dist[None, :t, t]
        W[:t, t] = cand.max(axis=1)
    W[~np.isfinite(W)] = 0.0
    return np.triu(W)


class PVarControl(Control):
    """The grid p-variation control of a sampled path.

    The matrix is computed once at construction (O(N^3) flops, N Python steps).
    """

    family = "pvar"

    def __init__(self, grid: TimeGrid, values, p: float):
        if p < 1:
            raise DomainError("p-variation control needs p >= 1")
        values = np.asarray(values, dtype=float)
        if values.shape[0] != grid.n + 1:
            raise DomainError("path must have one value per grid point")
        self.grid = grid
        self.values = values
        self.p = float(p)
        self._matrix = pvar_matrix(values, self.p)
        self._matrix.setflags(write=False)

    def matrix(self, grid: TimeGrid) -> np.ndarray:
        if grid.same_as(self.grid):
            return self._matrix
        # a subgrid: restrict the control (superadditivity is inherited)
        idx = [self.grid.index(t) for t in grid.times]
        return self._matrix[np.ix_(idx, idx)]

    def __call__(self, s: float, t: float) -> float:
        i, j = self.grid.pair(s, t)
        return float(self._matrix[i, j])

    def to_json(self) -> dict:
        vals = self.values if self.values.ndim == 2 else self.values[:, None]
        return {
            "family": "pvar",
            "p": self.p,
            "path": {
                "dim": int(vals.shape[1]),
                "times": [float(t) for t in self.grid.times],
                "values": vals.tolist(),
            },
        }

    def __repr__(self) -> str:
        return f"PVarControl(p={self.p}, N={self.grid.n})"


class SumControl(Control):
    family = "sum"

    def __init__(self, terms: Sequence[Control]):
        flat: list[Control] = []
        for term in terms:
            flat.extend(term.terms if isinstance(term, SumControl) else [term])
        if not flat:
            raise DomainError("a sum of controls needs at least one term")
        self.terms = tuple(flat)

    def matrix(self, grid: TimeGrid) -> np.ndarray:
        return sum(term.matrix(grid) for term in self.terms)

    def __call__(self, s: float, t: float) -> float:
        return float(sum(term(s, t) for term in self.terms))

    def to_json(self) -> dict:
        return {"family": "sum", "terms": [term.to_json() for term in self.terms]}

    def __repr__(self) -> str:
        return " + ".join(repr(t) for t in self.terms)


def control_eval(w: Control, s: float, t: float) -> float:
    return w(s, t)


def control_from_json(obj: dict, grid: Optional[TimeGrid] = None) -> Control:
    family = obj.get("family")
    if family == "affine":
        return AffineControl(float(obj["c"]))
    if family == "pvar":
        path = obj["path"]
        if not isinstance(path, dict):
            raise DomainError("pvar control needs an inline path object")
        pgrid = TimeGrid.from_json(path["times"])
        return PVarControl(pgrid, np.asarray(path["values"], dtype=float), float(obj["p"]))
    if family == "sum":
        return SumControl([control_from_json(t, grid) for t in obj["terms"]])
    raise DomainError(f"unknown control family {family!r}")


def superadditivity_defect(w: Control, grid: TimeGrid) -> float:
    """max over s <= u <= t of omega(s,u) + omega(u,t) - omega(s,t)."""
    m = w.matrix(grid)
    n = m.shape[0]
    worst = -np.inf
    for u in range(n):
        lhs = m[: u + 1, u][:, None] + m[u, u:][None, :]
        worst = max(worst, float(np.max(lhs - m[: u + 1, u:])))
    return worst


def is_control(w: Control, grid: TimeGrid, tol: float = SUPERADDITIVITY_TOL) -> bool:
    m = w.matrix(grid)
    return bool(
        np.all(np.diag(m) == 0)
        and np.all(m >= 0)
        and np.all(np.isfinite(m))
        and superadditivity_defect(w, grid) <= tol * max(1.0, float(m[0, -1]))
    )


# ---------------------------------------------------------------- witnesses


@dataclass(frozen=True)
class RegularityWitness:
    """Exponents, constant and control witnessing a regularity bound."""

    p: float
    phi: float
    K: float
    control: Control
    theta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.p < 1:
            raise DomainError(f"p must be >= 1, got {self.p}")
        if not (1 - 1 / self.p < self.phi <= 1):
            raise DomainError(f"phi must lie in (1 - 1/p, 1], got {self.phi} for p={self.p}")
        if self.theta is not None and not self.theta > 1:
            raise DomainError(f"theta must exceed 1, got {self.theta}")
        if not self.K >= 0:
            raise DomainError(f"K must be >= 0, got {self.K}")

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "phi": self.phi,
            "theta": self.theta,
            "K": self.K,
            "control": self.control.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RegularityWitness":
        theta = obj.get("theta")
        return cls(
            p=float(obj["p"]),
            phi=float(obj["phi"]),
            K=float(obj["K"]),
            control=control_from_json(obj["control"]),
            theta=None if theta is None else float(theta),
        )
