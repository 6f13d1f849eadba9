"""Rough sewing on a time grid and the extension map.

On a grid the finest partition of [t_i, t_j] contained in the grid consists of
the cells between the two points, so the limit over partitions becomes the
ordered product of one-cell values.  :func:`sew_stepwise_trace` performs the
level-by-level upgrade literally; :func:`sew` returns the same functional
directly from the cells.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from . import tensor as tn
from .analysis import Control
from .functional import (
    GridFunctional,
    almost_mult_fit,
    chain_table,
    is_multiplicative,
    max_level_diff,
    pvar_fit,
)
from .tensor import DomainError

log = logging.getLogger(__name__)


@dataclass(eq=False)
class SewingResult:
    output: GridFunctional
    source: GridFunctional = field(repr=False)
    control: Optional[Control] = field(default=None, repr=False)
    theta: Optional[float] = None

    @cached_property
    def closeness_K(self) -> float:
        """sup over pairs with omega > 0 and levels i >= 1 of ||out^i - X^i|| / omega^theta."""
        if self.control is None or self.theta is None:
            return float("nan")
        n = self.output.grid.n
        iu = np.triu_indices(n + 1, 1)
        omega = self.control.matrix(self.output.grid)[iu]
        diff = tn.level_norms(self.output.table[iu] - self.source.table[iu], self.output.dim, self.output.level)
        diff = diff[:, 1:].max(axis=1)
        pos = omega > 0
        if np.any(~pos & (diff > 1e-12)):
            return float("inf")
        return float(np.max(diff[pos] / omega[pos] ** self.theta, initial=0.0))

    @cached_property
    def per_level_convergence(self) -> np.ndarray:
        """Per-level max gap between this sewing and the one on the grid coarsened by 2.

        Compared on the coarse grid's pairs; empty when N is odd.
        """
        X = self.source
        n = X.grid.n
        if n % 2:
            return np.zeros(0)
        even = np.arange(0, n, 2)
        coarse_cells = X.values(even, even + 2)
        coarse = chain_table(coarse_cells, X.dim, X.level)
        fine = self.output.table[::2, ::2]
        iu = np.triu_indices(n // 2 + 1)
        return tn.level_norms(fine[iu] - coarse[iu], X.dim, X.level).max(axis=0)

    def to_json(self) -> dict:
        return {
            "output": self.output.to_json(),
            "theta": self.theta,
            "closeness_K": self.closeness_K,
            "convergence": [float(x) for x in self.per_level_convergence],
        }


def _check_inputs(X: GridFunctional, w: Optional[Control], theta: Optional[float], p: Optional[float]) -> None:
    if w is None or theta is None or p is None:
        raise DomainError("sewing with checks needs a control, theta and p")
    if not theta > 1:
        raise DomainError(f"theta must exceed 1, got {theta}")
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    am = almost_mult_fit(X, w, theta)
    if not am.ok:
        raise DomainError(f"not {theta}-almost multiplicative: unbounded defect at (s,u,t) = {am.worst_triple}")
    pv = pvar_fit(X, w, p)
    if not pv.ok:
        raise DomainError(f"no finite {p}-variation: unbounded increment at (s,t) = {pv.worst_pair}")


def sew(
    X: GridFunctional,
    w: Optional[Control] = None,
    theta: Optional[float] = None,
    p: Optional[float] = None,
    check: bool = True,
) -> SewingResult:
    """The multiplicative functional associated with an almost rough path.

    With ``check`` the almost-multiplicativity and p-variation preconditions
    are verified first (O(N^3)); internal callers that already know them skip
    this.
    """
    if check:
        _check_inputs(X, w, theta, p)
    elif theta is not None and not theta > 1:
        raise DomainError(f"theta must exceed 1, got {theta}")
    out = GridFunctional.from_increments(X.grid, X.cells().copy(), X.dim, X.level)
    return SewingResult(out, X, w, theta)


def sew_stepwise_trace(
    X: GridFunctional,
    w: Optional[Control] = None,
    theta: Optional[float] = None,
    p: Optional[float] = None,
    check: bool = True,
) -> list[GridFunctional]:
    """X^(0) = X, ..., X^(k): level m+1 replaced by the finest-partition
    superproduct of (1, X^(m) levels 1..m, X^{m+1})."""
    if check:
        _check_inputs(X, w, theta, p)
    d, k = X.dim, X.level
    off = tn.offsets(d, k)
    current = X.table.copy()
    trace = [GridFunctional.dense(X.grid, current.copy(), d, k)]
    n = X.grid.n
    idx = np.arange(n)
    for m in range(k):
        lvl = m + 1
        cells = current[idx, idx + 1, : off[lvl + 1]]
        products = chain_table(cells, d, lvl)
        current[..., off[lvl] : off[lvl + 1]] = products[..., off[lvl] : off[lvl + 1]]
        trace.append(GridFunctional.dense(X.grid, current.copy(), d, k))
    return trace


def _embed_with_completion(X: GridFunctional) -> GridFunctional:
    d, n = X.dim, X.level
    return X.map_values(lambda v: tn.complete_top_level(v, d, n), level=n + 1)


def ext(X: GridFunctional, p: Optional[float] = None, check: bool = True) -> GridFunctional:
    """Unique multiplicative extension of X by one level.

    Computed as the sewing of X embedded one level up.  Each value receives
    the top level of exp(log X_{s,t}) rather than zero: both embeddings differ
    by O(omega^{(n+1)/p}) with (n+1)/p > 1 and therefore share the same
    sewing, but on a finite grid the completed one reproduces the within-cell
    contribution exactly for piecewise-geodesic data.
    """
    if p is not None and not p < X.level + 1:
        raise DomainError(f"extension from level {X.level} needs p < {X.level + 1}, got {p}")
    if check:
        ok, report = is_multiplicative(X, tol=1e-8)
        if not ok:
            raise DomainError(
                f"extension needs a multiplicative functional; defect "
                f"{report.max_defect_per_level.max():.3e} at {report.worst_triple}"
            )
    return sew(_embed_with_completion(X), check=False).output


@dataclass(frozen=True)
class ClosePairCheck:
    ok: bool
    bound_ok: bool
    worst_pair: tuple[float, float]
    bound_ratio: float
    max_delta: np.ndarray


def sew_close_pair_check(
    X: GridFunctional,
    Y: GridFunctional,
    w: Control,
    theta: float,
    K: float,
    tol: float = 1e-8,
) -> ClosePairCheck:
    """Check ||Y^j - X^j|| <= K omega^theta, then compare the two sewings."""
    n = X.grid.n
    iu = np.triu_indices(n + 1, 1)
    omega = w.matrix(X.grid)[iu]
    gap = tn.level_norms(Y.table[iu] - X.table[iu], X.dim, X.level)[:, 1:].max(axis=1)
    bound = K * omega**theta
    excess = gap - bound
    k = int(np.argmax(excess))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = float(np.max(np.where(bound > 0, gap / np.where(bound > 0, bound, 1.0), np.where(gap > 1e-12, np.inf, 0.0))))
    worst = (float(X.grid.times[iu[0][k]]), float(X.grid.times[iu[1][k]]))
    bound_ok = bool(np.all(excess <= 1e-12))
    if not bound_ok:
        log.info("closeness bound violated at %s (ratio %.3g)", worst, ratio)
        return ClosePairCheck(False, False, worst, ratio, np.full(X.level + 1, np.nan))
    delta = max_level_diff(sew(X, check=False).output, sew(Y, check=False).output)
    return ClosePairCheck(bool(delta.max() <= tol), True, worst, ratio, delta)
