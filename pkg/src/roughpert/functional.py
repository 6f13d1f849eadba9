"""Two-parameter functionals on the simplex of a time grid.

A :class:`GridFunctional` is backed by one of three sources:

* ``increments``: the one-cell values X_{t_i, t_{i+1}}; every other pair is the
  ordered product of the cells in between, so the functional is multiplicative
  by construction.
* ``dense``: an explicit table of X_{t_i, t_j} for all i <= j.
* ``closure``: a vectorised rule ``rule(i, j) -> values`` evaluated on demand.

Operations that only need the one-cell values (sewing in particular) never
materialise the O(N^2) table.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from . import tensor as tn
from .analysis import Control, beta, gfact
from .grid import TimeGrid
from .tensor import DomainError, ShapeError, TruncatedTensor

Rule = Callable[[np.ndarray, np.ndarray], np.ndarray]


class GridFunctional:
    def __init__(
        self,
        grid: TimeGrid,
        dim: int,
        level: int,
        *,
        cells: Optional[np.ndarray] = None,
        table: Optional[np.ndarray] = None,
        rule: Optional[Rule] = None,
    ):
        given = [x is not None for x in (cells, table, rule)]
        if sum(given) != 1:
            raise ValueError("exactly one of cells, table, rule must be given")
        self.grid = grid
        self.dim = dim
        self.level = level
        self.size = tn.size(dim, level)
        n = grid.n
        if cells is not None:
            cells = np.asarray(cells, dtype=float)
            if cells.shape != (n, self.size):
                raise ShapeError(f"cells must have shape {(n, self.size)}, got {cells.shape}")
            self.kind = "increments"
            self._cells = cells
        elif table is not None:
            table = np.asarray(table, dtype=float)
            if table.shape != (n + 1, n + 1, self.size):
                raise ShapeError(f"table must have shape {(n + 1, n + 1, self.size)}")
            self.kind = "dense"
            self.__dict__["table"] = table
        else:
            self.kind = "closure"
            self._rule = rule

    # -- constructors

    @classmethod
    def from_increments(cls, grid: TimeGrid, cells: np.ndarray, dim: int, level: int) -> "GridFunctional":
        return cls(grid, dim, level, cells=cells)

    @classmethod
    def dense(cls, grid: TimeGrid, table: np.ndarray, dim: int, level: int) -> "GridFunctional":
        return cls(grid, dim, level, table=table)

    @classmethod
    def closure(cls, grid: TimeGrid, rule: Rule, dim: int, level: int) -> "GridFunctional":
        return cls(grid, dim, level, rule=rule)

    @classmethod
    def unit(cls, grid: TimeGrid, dim: int, level: int) -> "GridFunctional":
        return cls(grid, dim, level, cells=tn.unit_array(dim, level, (grid.n,)))

    # -- evaluation

    def values(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Values at index pairs (i, j), i <= j, broadcast together."""
        i, j = np.broadcast_arrays(np.asarray(i), np.asarray(j))
        if self.kind == "closure":
            return self._rule(i, j)
        if self.kind == "increments" and np.all(j == i + 1):
            return self._cells[i]
        return self.table[i, j]

    def cells(self) -> np.ndarray:
        """The one-cell values X_{t_i, t_{i+1}}, shape (N, size)."""
        if self.kind == "increments":
            return self._cells
        idx = np.arange(self.grid.n)
        return self.values(idx, idx + 1)

    @cached_property
    def table(self) -> np.ndarray:
        """All values X_{t_i, t_j}; entries with i > j are left at zero."""
        n = self.grid.n
        if self.kind == "increments":
            return chain_table(self._cells, self.dim, self.level)
        i, j = np.triu_indices(n + 1)
        out = np.zeros((n + 1, n + 1, self.size))
        out[i, j] = self._rule(i, j)
        return out

    def at(self, i: int, j: int) -> TruncatedTensor:
        if not 0 <= i <= j <= self.grid.n:
            raise DomainError(f"bad index pair ({i}, {j})")
        return TruncatedTensor(self.dim, self.level, self.values(np.array(i), np.array(j)))

    def __call__(self, s: float, t: float) -> TruncatedTensor:
        i, j = self.grid.pair(s, t)
        return self.at(i, j)

    # -- structure

    def truncate(self, k: int) -> "GridFunctional":
        """X(k): levels 0..k."""
        if not 0 <= k <= self.level:
            raise ShapeError(f"cannot truncate level {self.level} to {k}")
        m = tn.size(self.dim, k)
        if self.kind == "increments":
            return GridFunctional.from_increments(self.grid, self._cells[:, :m], self.dim, k)
        return GridFunctional.closure(self.grid, lambda i, j: self.values(i, j)[..., :m], self.dim, k)

    def zero_pad(self, n: int) -> "GridFunctional":
        if n < self.level:
            raise ShapeError(f"cannot pad level {self.level} to {n}")
        m, big = self.size, tn.size(self.dim, n)

        def rule(i, j):
            v = self.values(i, j)
            out = np.zeros(v.shape[:-1] + (big,))
            out[..., :m] = v
            return out

        return GridFunctional.closure(self.grid, rule, self.dim, n)

    def _peer(self, other: "GridFunctional") -> None:
        if (self.dim, self.level) != (other.dim, other.level) or not self.grid.same_as(other.grid):
            raise ShapeError("functionals live on different grids or tensor shapes")

    def oplus(self, other: "GridFunctional") -> "GridFunctional":
        """Pointwise unit-preserving sum X + H - 1."""
        self._peer(other)

        def rule(i, j):
            v = self.values(i, j) + other.values(i, j)
            v[..., 0] -= 1.0
            return v

        return GridFunctional.closure(self.grid, rule, self.dim, self.level)

    def otimes(self, other: "GridFunctional") -> "GridFunctional":
        """Pointwise tensor product X_{s,t} (x) H_{s,t}."""
        self._peer(other)
        return GridFunctional.closure(
            self.grid,
            lambda i, j: tn.mul(self.values(i, j), other.values(i, j), self.dim, self.level),
            self.dim,
            self.level,
        )

    def add_top(self, path_values: np.ndarray) -> "GridFunctional":
        """Add an additive functional (a path's increments) to the top level."""
        off = tn.offsets(self.dim, self.level)[self.level]
        inc = np.asarray(path_values, dtype=float)
        if self.kind == "increments":
            cells = self._cells.copy()
            cells[:, off:] += inc[1:] - inc[:-1]
            return GridFunctional.from_increments(self.grid, cells, self.dim, self.level)

        def rule(i, j):
            v = self.values(i, j).copy()
            v[..., off:] += inc[j] - inc[i]
            return v

        return GridFunctional.closure(self.grid, rule, self.dim, self.level)

    def map_values(self, fn: Callable[[np.ndarray], np.ndarray], level: Optional[int] = None) -> "GridFunctional":
        level = self.level if level is None else level
        return GridFunctional.closure(self.grid, lambda i, j: fn(self.values(i, j)), self.dim, level)

    def materialize(self) -> "GridFunctional":
        if self.kind != "closure":
            return self
        return GridFunctional.dense(self.grid, self.table, self.dim, self.level)

    def as_increments(self) -> "GridFunctional":
        """The functional generated by this one's cells."""
        return GridFunctional.from_increments(self.grid, self.cells().copy(), self.dim, self.level)

    def level1_path(self) -> np.ndarray:
        """x_t = X^1_{t_0, t} for every grid point, shape (N+1, dim)."""
        n = self.grid.n
        v = self.values(np.zeros(n + 1, dtype=int), np.arange(n + 1))
        return tn.block(v, self.dim, 1).copy()

    def pair_norms(self) -> np.ndarray:
        """Level norms on every pair, shape (N+1, N+1, level+1)."""
        return tn.level_norms(self.table, self.dim, self.level)

    def __repr__(self) -> str:
        return f"GridFunctional(kind={self.kind}, N={self.grid.n}, dim={self.dim}, level={self.level})"

    # -- serialization

    def to_json(self) -> dict:
        if self.kind == "increments":
            data = [TruncatedTensor(self.dim, self.level, c).to_json()["data"] for c in self._cells]
            kind = "increments"
        else:
            i, j = np.triu_indices(self.grid.n + 1)
            vals = self.table[i, j]
            data = [TruncatedTensor(self.dim, self.level, v).to_json()["data"] for v in vals]
            kind = "dense"
        return {
            "grid": self.grid.to_json(),
            "dim": self.dim,
            "level": self.level,
            "kind": kind,
            "data": data,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GridFunctional":
        grid = TimeGrid.from_json(obj["grid"])
        dim, level = int(obj["dim"]), int(obj["level"])
        flat = np.array(
            [
                TruncatedTensor.from_json({"dim": dim, "level": level, "data": d}).data
                for d in obj["data"]
            ]
        ).reshape(-1, tn.size(dim, level))
        if obj["kind"] == "increments":
            return cls.from_increments(grid, flat, dim, level)
        if obj["kind"] == "dense":
            n = grid.n
            i, j = np.triu_indices(n + 1)
            if flat.shape[0] != i.size:
                raise ShapeError(f"dense functional needs {i.size} entries, got {flat.shape[0]}")
            table = np.zeros((n + 1, n + 1, tn.size(dim, level)))
            table[i, j] = flat
            return cls.dense(grid, table, dim, level)
        raise DomainError(f"unknown functional kind {obj['kind']!r}")


def chain_table(cells: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Ordered products of consecutive cells for every pair (prefix reuse per row)."""
    n = cells.shape[0]
    out = np.zeros((n + 1, n + 1, cells.shape[1]))
    out[np.arange(n + 1), np.arange(n + 1), 0] = 1.0
    for j in range(n):
        out[: j + 1, j + 1] = tn.mul(out[: j + 1, j], cells[j], dim, level)
    return out


# ---------------------------------------------------------------- defects


def defect(X: GridFunctional, s: float, u: float, t: float) -> TruncatedTensor:
    """X_{s,u} (x) X_{u,t} - X_{s,t}."""
    i, k = X.grid.pair(s, u)
    _, j = X.grid.pair(u, t)
    a, b, c = X.at(i, k), X.at(k, j), X.at(i, j)
    return TruncatedTensor(X.dim, X.level, tn.mul(a.data, b.data, X.dim, X.level) - c.data)


@dataclass(frozen=True)
class DefectReport:
    max_defect_per_level: np.ndarray
    worst_triple: tuple[float, float, float]
    theta_fit: float
    K_fit: float


def _scan_triples(X: GridFunctional, omega: Optional[np.ndarray], theta: Optional[float], atol: float):
    """Sweep every triple s <= u <= t once.

    Returns per-level maximal defect norms, the worst triple (indices), the
    per-span maxima used for the exponent fit, and, when a control matrix is
    supplied, the constant K = max ||defect^i|| / omega(s,t)^theta together
    with the triple attaining it.
    """
    T = X.table
    n = X.grid.n
    worst = np.zeros(X.level + 1)
    worst_at = (0, 0, 0)
    span_max = np.zeros(n + 1)
    K, K_at = 0.0, (0, 0, 0)
    for i in range(n + 1):
        A = T[i, i:]
        B = T[i:, i:]
        D = tn.mul(A[:, None, :], B, X.dim, X.level) - A[None, :, :]
        norms = tn.level_norms(D, X.dim, X.level)
        m = A.shape[0]
        valid = np.triu(np.ones((m, m), dtype=bool))
        norms[~valid] = 0.0
        norms[..., 0] = 0.0
        lvl_max = norms.max(axis=(0, 1))
        per_pair = norms.max(axis=(0, 2))  # max over u and levels, per right end t
        if lvl_max.max() > worst.max():
            u, t = np.unravel_index(np.argmax(norms.max(axis=2)), (m, m))
            worst_at = (i, i + int(u), i + int(t))
        worst = np.maximum(worst, lvl_max)
        spans = np.arange(m)
        np.maximum.at(span_max, spans, per_pair)
        if omega is not None:
            w = omega[i, i:]
            zero = w <= 0
            bad = zero & (per_pair > atol)
            if np.any(bad):
                t = int(np.argmax(bad))
                u = int(np.argmax(norms[:, t].max(axis=1)))
                return worst, worst_at, span_max, np.inf, (i, i + u, i + t)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(zero, 0.0, per_pair / np.where(zero, 1.0, w) ** theta)
            if ratio.max() > K:
                t = int(np.argmax(ratio))
                u = int(np.argmax(norms[:, t].max(axis=1)))
                K, K_at = float(ratio.max()), (i, i + u, i + t)
    return worst, worst_at, span_max, K, K_at


def _fit_exponent(span: np.ndarray, vals: np.ndarray, atol: float) -> tuple[float, float]:
    """Least-squares slope of log vals against log span over dyadic spans."""
    idx = [2**k for k in range(int(np.log2(max(len(vals) - 1, 1))) + 1) if 2**k < len(vals)]
    idx = [k for k in idx if vals[k] > atol]
    if len(idx) < 2:
        return np.inf, 0.0
    x = np.log(span[idx])
    y = np.log(vals[idx])
    slope = float(np.polyfit(x, y, 1)[0])
    K = float(np.max(vals[idx] / span[idx] ** slope))
    return slope, K


def defect_report(X: GridFunctional, atol: float = 1e-12) -> DefectReport:
    worst, (i, u, j), span_max, _, _ = _scan_triples(X, None, None, atol)
    times = X.grid.times
    # spans measured in time of the leftmost-cell scale
    mesh = float(np.mean(np.diff(times)))
    theta, K = _fit_exponent(np.arange(span_max.size) * mesh, span_max, atol)
    return DefectReport(worst, (float(times[i]), float(times[u]), float(times[j])), theta, K)


def is_multiplicative(X: GridFunctional, tol: float = 1e-10) -> tuple[bool, DefectReport]:
    report = defect_report(X)
    return bool(report.max_defect_per_level.max() <= tol), report


@dataclass(frozen=True)
class AlmostMultFit:
    K: float
    ok: bool
    worst_triple: tuple[float, float, float]


def almost_mult_fit(X: GridFunctional, w: Control, theta: float, atol: float = 1e-12) -> AlmostMultFit:
    if not theta > 1:
        raise DomainError(f"theta must exceed 1, got {theta}")
    omega = w.matrix(X.grid)
    _, _, _, K, (i, u, j) = _scan_triples(X, omega, theta, atol)
    times = X.grid.times
    return AlmostMultFit(K, bool(np.isfinite(K)), (float(times[i]), float(times[u]), float(times[j])))


@dataclass(frozen=True)
class PVarFit:
    K: float
    worst_pair: tuple[float, float]

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.K))


def pvar_fit(X: GridFunctional, w: Control, p: float, atol: float = 1e-12) -> PVarFit:
    """Smallest K with ||X^i_{s,t}|| <= K omega^{i/p} / (beta(p) (i/p)!)."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    omega = w.matrix(X.grid)
    norms = X.pair_norms()
    b = beta(p)
    iu = np.triu_indices(X.grid.n + 1, 1)
    wv = omega[iu]
    K, at = 0.0, (0, 0)
    for i in range(1, X.level + 1):
        nv = norms[..., i][iu]
        zero = wv <= 0
        if np.any(zero & (nv > atol)):
            k = int(np.argmax(zero & (nv > atol)))
            K, at = np.inf, (iu[0][k], iu[1][k])
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(zero, 0.0, nv * b * gfact(i / p) / np.where(zero, 1.0, wv) ** (i / p))
        if r.size and r.max() > K:
            k = int(np.argmax(r))
            K, at = float(r[k]), (iu[0][k], iu[1][k])
    times = X.grid.times
    return PVarFit(K, (float(times[at[0]]), float(times[at[1]])))


def fit_constant(X: GridFunctional, omega: np.ndarray, exponent: float, levels=None, atol: float = 1e-12) -> float:
    """max over pairs and levels of ||X^j|| / omega^exponent (inf if omega = 0 < ||X^j||)."""
    norms = X.pair_norms()
    iu = np.triu_indices(X.grid.n + 1, 1)
    wv = omega[iu]
    levels = range(1, X.level + 1) if levels is None else levels
    K = 0.0
    for j in levels:
        nv = norms[..., j][iu]
        zero = wv <= 0
        if np.any(zero & (nv > atol)):
            return np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(zero, 0.0, nv / np.where(zero, 1.0, wv) ** exponent)
        if r.size:
            K = max(K, float(r.max()))
    return K


def max_level_diff(X: GridFunctional, Y: GridFunctional) -> np.ndarray:
    """Per-level max over pairs of ||X^k - Y^k||."""
    X._peer(Y)
    iu = np.triu_indices(X.grid.n + 1)
    diff = X.table[iu] - Y.table[iu]
    return tn.level_norms(diff, X.dim, X.level).max(axis=0)


# ---------------------------------------------------------------- signatures


def signature(grid: TimeGrid, path: np.ndarray, level: int) -> GridFunctional:
    """Signature of the piecewise-linear interpolant of ``path`` on ``grid``.

    Each cell carries exp of its displacement; pairs further apart are their
    ordered products, so the result satisfies Chen's identity exactly.
    """
    if level < 1:
        raise DomainError("signature level must be >= 1")
    x = np.asarray(path, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != grid.n + 1:
        raise DomainError(f"path needs {grid.n + 1} samples, got {x.shape[0]}")
    d = x.shape[1]
    inc = np.zeros((grid.n, tn.size(d, level)))
    inc[:, 1 : 1 + d] = np.diff(x, axis=0)
    return GridFunctional.from_increments(grid, tn.exp(inc, d, level), d, level)


# ---------------------------------------------------------------- additive functionals


def path_to_increments(grid: TimeGrid, values: np.ndarray, dim: int, level: int) -> GridFunctional:
    """The additive functional I_{s,t} = I_t - I_s of a T^(level)-valued path."""
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.n + 1, tn.size(dim, level)):
        raise ShapeError(f"path values must have shape {(grid.n + 1, tn.size(dim, level))}")
    if np.any(v[:, 0] != 0):
        raise DomainError("increment paths have zero scalar level")
    return GridFunctional.closure(grid, lambda i, j: v[j] - v[i], dim, level)


def increments_to_path(I: GridFunctional, tol: float = 1e-10) -> np.ndarray:
    """Recover the path t -> I_{t_0, t} from an additive functional."""
    n = I.grid.n
    path = I.values(np.zeros(n + 1, dtype=int), np.arange(n + 1)).copy()
    iu = np.triu_indices(n + 1)
    vals = I.values(*iu)
    gap = np.abs(vals - (path[iu[1]] - path[iu[0]]))
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    if gap.size and gap.max() > tol * scale:
        k = int(np.argmax(gap.max(axis=-1)))
        s, t = I.grid.times[iu[0][k]], I.grid.times[iu[1][k]]
        raise DomainError(
            f"functional is not additive: defect {gap.max():.3e} at (s, t) = ({s:.6g}, {t:.6g})"
        )
    return path
