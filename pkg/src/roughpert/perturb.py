"""H-space, I-space, the lift/development bijection and the perturbation X [+] H."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import tensor as tn
from .analysis import Control, RegularityWitness, SumControl
from .functional import (
    GridFunctional,
    fit_constant,
    is_multiplicative,
    max_level_diff,
    path_to_increments,
    pvar_fit,
)
from .grid import TimeGrid
from .sewing import ext, sew
from .tensor import DomainError, ShapeError

PHI_STEP = 1e-3
# allowed log-log decay of the per-scale sup ratio before phi counts as too large
SCALING_SLACK = 0.05


def _row0(H: GridFunctional) -> np.ndarray:
    """Values H_{t_0, t} for every grid point, O(N) for cell-backed functionals."""
    n = H.grid.n
    if H.kind == "increments":
        out = np.zeros((n + 1, H.size))
        out[0, 0] = 1.0
        cells = H.cells()
        for j in range(n):
            out[j + 1] = tn.mul(out[j], cells[j], H.dim, H.level)
        return out
    return H.values(np.zeros(n + 1, dtype=int), np.arange(n + 1))


# ---------------------------------------------------------------- I-space


def increment_constant(
    grid: TimeGrid, values: np.ndarray, dim: int, level: int, control: Control, p: float, phi: float
) -> float:
    """Smallest K with ||I^j_{s,t}|| <= K omega^phi for all j, plus the
    omega^{k/p} top-level bound when level = floor(p)."""
    I = path_to_increments(grid, values, dim, level)
    omega = control.matrix(grid)
    K = fit_constant(I, omega, phi)
    if level == math.floor(p):
        K = max(K, fit_constant(I, omega, level / p, levels=[level]))
    return K


@dataclass(frozen=True, eq=False)
class IncrementPath:
    """A grid path t -> I_t in T^(level)(R^dim) with I^0 = 0 and I_{t_0} = 0."""

    grid: TimeGrid
    dim: int
    level: int
    values: np.ndarray
    witness: Optional[RegularityWitness] = None

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n + 1, tn.size(self.dim, self.level)):
            raise ShapeError(f"increment path values must have shape {(self.grid.n + 1, tn.size(self.dim, self.level))}")
        if np.any(v[:, 0] != 0):
            raise DomainError("increment paths have zero scalar level")
        if np.any(v[0] != 0):
            raise DomainError("increment paths start at zero")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_levels(cls, grid: TimeGrid, levels: list[np.ndarray], control: Optional[Control] = None,
                    p: Optional[float] = None, phi: Optional[float] = None) -> "IncrementPath":
        """Stack per-level paths (arrays of shape (N+1, dim**j), j = 1..k), shifted to start at 0."""
        dim = int(np.asarray(levels[0]).reshape(grid.n + 1, -1).shape[1])
        k = len(levels)
        v = np.zeros((grid.n + 1, tn.size(dim, k)))
        off = tn.offsets(dim, k)
        for j, lev in enumerate(levels, start=1):
            lev = np.asarray(lev, dtype=float).reshape(grid.n + 1, -1)
            v[:, off[j] : off[j + 1]] = lev - lev[0]
        path = cls(grid, dim, k, v)
        if control is not None:
            path = path.with_witness(control, p, phi)
        return path

    def with_witness(self, control: Control, p: float, phi: float) -> "IncrementPath":
        K = increment_constant(self.grid, self.values, self.dim, self.level, control, p, phi)
        if not np.isfinite(K):
            raise DomainError("increment path violates its regularity bound (omega = 0 with nonzero increment)")
        return IncrementPath(self.grid, self.dim, self.level, self.values, RegularityWitness(p, phi, K, control))

    def functional(self) -> GridFunctional:
        return path_to_increments(self.grid, self.values, self.dim, self.level)

    def level_path(self, j: int) -> np.ndarray:
        return tn.block(self.values, self.dim, j)

    def __add__(self, other: "IncrementPath") -> "IncrementPath":
        self._peer(other)
        return IncrementPath(self.grid, self.dim, self.level, self.values + other.values, _merge_witness(self, other))

    def scaled(self, a: float) -> "IncrementPath":
        w = self.witness
        if w is not None:
            w = RegularityWitness(w.p, w.phi, abs(a) * w.K, w.control, w.theta)
        return IncrementPath(self.grid, self.dim, self.level, a * self.values, w)

    def truncate(self, k: int) -> "IncrementPath":
        """I(k), with the witness constant refitted."""
        out = IncrementPath(self.grid, self.dim, k, self.values[:, : tn.size(self.dim, k)])
        return out._rewitness(self.witness)

    def zero_pad_levels(self, k: int) -> "IncrementPath":
        """I[k]: levels above k set to zero, level unchanged."""
        v = self.values.copy()
        v[:, tn.size(self.dim, k):] = 0.0
        return IncrementPath(self.grid, self.dim, self.level, v)._rewitness(self.witness)

    def _rewitness(self, w: Optional[RegularityWitness]) -> "IncrementPath":
        return self if w is None else self.with_witness(w.control, w.p, w.phi)

    def _peer(self, other: "IncrementPath") -> None:
        if (self.dim, self.level) != (other.dim, other.level) or not self.grid.same_as(other.grid):
            raise ShapeError("increment paths live on different grids or tensor shapes")

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "level": self.level,
            "times": [float(t) for t in self.grid.times],
            "values": [tn.TruncatedTensor(self.dim, self.level, v).to_json()["data"] for v in self.values],
            "witness": None if self.witness is None else self.witness.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "IncrementPath":
        grid = TimeGrid.from_json(obj["times"])
        dim, level = int(obj["dim"]), int(obj["level"])
        values = np.array(
            [tn.TruncatedTensor.from_json({"dim": dim, "level": level, "data": v}).data for v in obj["values"]]
        )
        w = obj.get("witness")
        return cls(grid, dim, level, values, None if w is None else RegularityWitness.from_json(w))


def _merge_witness(a, b) -> Optional[RegularityWitness]:
    wa, wb = a.witness, b.witness
    if wa is None or wb is None:
        return None
    return RegularityWitness(max(wa.p, wb.p), min(wa.phi, wb.phi), wa.K + wb.K, SumControl([wa.control, wb.control]))


# ---------------------------------------------------------------- H-space


@dataclass(frozen=True, eq=False)
class HElement:
    """A multiplicative functional with ||H^j|| <= K omega^phi on every pair and level."""

    functional: GridFunctional
    witness: RegularityWitness

    @property
    def grid(self) -> TimeGrid:
        return self.functional.grid

    @property
    def level(self) -> int:
        return self.functional.level

    @property
    def dim(self) -> int:
        return self.functional.dim

    def to_json(self) -> dict:
        return {"functional": self.functional.to_json(), "witness": self.witness.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "HElement":
        return cls(GridFunctional.from_json(obj["functional"]), RegularityWitness.from_json(obj["witness"]))


@dataclass(frozen=True, eq=False)
class AlmostHElement:
    """A theta-almost multiplicative functional obeying the H-space level bound."""

    functional: GridFunctional
    witness: RegularityWitness

    def __post_init__(self) -> None:
        if self.witness.theta is None:
            raise DomainError("an almost H-space element needs theta in its witness")

    @property
    def grid(self) -> TimeGrid:
        return self.functional.grid

    @property
    def level(self) -> int:
        return self.functional.level

    @property
    def dim(self) -> int:
        return self.functional.dim


def make_h_element(H: GridFunctional, control: Control, p: float, phi: float, check: bool = True) -> HElement:
    """Wrap H with a fitted constant for the given exponent and control."""
    if check:
        ok, report = is_multiplicative(H, tol=1e-8)
        if not ok:
            raise DomainError(f"H-space elements are multiplicative; defect at {report.worst_triple}")
    K = fit_constant(H, control.matrix(H.grid), phi)
    if not np.isfinite(K):
        raise DomainError("H violates its regularity bound (omega = 0 with nonzero value)")
    return HElement(H, RegularityWitness(p, phi, K, control))


def unit_h(grid: TimeGrid, dim: int, level: int, control: Control, p: float) -> HElement:
    return HElement(GridFunctional.unit(grid, dim, level), RegularityWitness(p, 1.0, 0.0, control))


@dataclass(frozen=True)
class HMembership:
    phi: float
    K: float
    qj: np.ndarray
    ok: bool
    slope: float = field(default=float("nan"))


def _dyadic_pairs(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    span = 1
    while 4 * span <= n:
        i = np.arange(0, n - span + 1)
        out.append((i, i + span))
        span *= 2
    return out


def h_membership(H: GridFunctional, w: Control, p: float, check: bool = True) -> HMembership:
    """Fit the largest phi in (1 - 1/p, 1] (on a 1e-3 lattice) witnessing H in H-space.

    A candidate phi is kept when the sup of ||H^j_{s,t}|| / omega(s,t)^phi,
    taken separately over pairs of each dyadic span, does not grow towards
    small spans (log-log slope >= -SCALING_SLACK): a sup driven by the finest
    scale would blow up under refinement.
    """
    if check:
        ok, report = is_multiplicative(H, tol=1e-8)
        if not ok:
            raise DomainError(f"H must be multiplicative; defect at {report.worst_triple}")
    lo = 1.0 - 1.0 / p
    omega = w.matrix(H.grid)
    n = H.grid.n
    pairs = _dyadic_pairs(n)
    if not pairs:
        pairs = [(np.arange(n), np.arange(1, n + 1))]
    per_scale = []
    for i, j in pairs:
        nrm = tn.level_norms(H.values(i, j), H.dim, H.level)[:, 1:].max(axis=1)
        per_scale.append((nrm, omega[i, j]))
    if all(float(nrm.max()) <= 1e-14 for nrm, _ in per_scale):
        qj = np.array([j / 1.0 for j in range(1, H.level + 1)])
        return HMembership(1.0, 0.0, qj, lo < 1.0, 0.0)

    spans = np.log([float(np.mean(wv)) for _, wv in per_scale])

    def slope(phi: float) -> float:
        r = []
        for nrm, wv in per_scale:
            pos = wv > 0
            if np.any(~pos & (nrm > 1e-14)):
                return -np.inf
            r.append(float(np.max(nrm[pos] / wv[pos] ** phi, initial=0.0)))
        r = np.log(np.maximum(r, 1e-300))
        if len(r) < 2:
            return 0.0
        return float(np.polyfit(spans, r, 1)[0])

    phi_grid = np.round(np.arange(1.0, lo, -PHI_STEP), 6)
    chosen, chosen_slope = None, float("nan")
    for phi in phi_grid:
        if phi <= lo:
            break
        s = slope(phi)
        if s >= -SCALING_SLACK:
            chosen, chosen_slope = float(phi), s
            break
    if chosen is None:
        return HMembership(float("nan"), float("inf"), np.zeros(0), False, slope(lo + PHI_STEP))
    # the slope test only resolves phi up to SCALING_SLACK, so a fit that close
    # to the boundary cannot be told apart from phi <= 1 - 1/p
    if chosen <= lo + SCALING_SLACK:
        return HMembership(chosen, float("inf"), np.zeros(0), False, chosen_slope)
    K = fit_constant(H, omega, chosen)
    qj = np.array([j / chosen for j in range(1, H.level + 1)])
    kprime = min(H.level, math.floor(p) - 1)
    finite = np.isfinite(K) and all(pvar_fit(H.truncate(j), w, qj[j - 1]).ok for j in range(1, kprime + 1))
    return HMembership(chosen, K, qj, bool(finite), chosen_slope)


# ---------------------------------------------------------------- dev / lift


def dev(H: HElement, check: bool = True) -> IncrementPath:
    """(0, H^1, H^2 - E^2, ..., H^k - E^k) with E^{j+1} the top level of ext(H(j))."""
    F = H.functional
    d, k = F.dim, F.level
    off = tn.offsets(d, k)
    row = _row0(F)
    values = np.zeros_like(row)
    values[:, off[1] : off[2]] = row[:, off[1] : off[2]]
    extensions = []
    for j in range(1, k):
        E = ext(F.truncate(j), check=False)
        extensions.append(E)
        erow = _row0(E)
        values[:, off[j + 1] : off[j + 2]] = row[:, off[j + 1] : off[j + 2]] - erow[:, off[j + 1] : off[j + 2]]
    if check:
        # every level of dev(H) must be additive on the full simplex
        T = F.table
        iu = np.triu_indices(F.grid.n + 1)
        gap = 0.0
        for j, E in enumerate(extensions, start=1):
            lvl = slice(off[j + 1], off[j + 2])
            two_param = T[iu][:, lvl] - E.table[iu][:, lvl]
            gap = max(gap, float(np.abs(two_param - (values[iu[1], lvl] - values[iu[0], lvl])).max()))
        lvl1 = slice(off[1], off[2])
        gap = max(gap, float(np.abs(T[iu][:, lvl1] - (values[iu[1], lvl1] - values[iu[0], lvl1])).max()))
        if gap > 1e-8 * max(1.0, float(np.abs(T).max())):
            raise RuntimeError(f"dev(H) failed the additivity check (gap {gap:.3e})")
    w = H.witness
    K = increment_constant(F.grid, values, d, k, w.control, w.p, w.phi)
    return IncrementPath(F.grid, d, k, values, RegularityWitness(w.p, w.phi, K, w.control))


def lift(I: IncrementPath, check: bool = True) -> HElement:
    """Recursive lift: level 1 is (1, I^1); level j is ext of the level j-1 lift plus I^j."""
    if I.witness is None:
        raise DomainError("lift needs an increment path with a regularity witness")
    d = I.dim
    x1 = I.level_path(1)
    cells = np.zeros((I.grid.n, tn.size(d, 1)))
    cells[:, 0] = 1.0
    cells[:, 1:] = np.diff(x1, axis=0)
    H = GridFunctional.from_increments(I.grid, cells, d, 1)
    for j in range(2, I.level + 1):
        H = ext(H, check=False).add_top(I.level_path(j)).as_increments()
    w = I.witness
    if check:
        K = fit_constant(H, w.control.matrix(I.grid), w.phi)
        if not np.isfinite(K):
            raise DomainError("lift violates the H-space bound (omega = 0 with nonzero value)")
    else:
        K = w.K
    return HElement(H, RegularityWitness(w.p, w.phi, K, w.control))


# ---------------------------------------------------------------- perturbations

Perturbation = Union[HElement, AlmostHElement]


def _theta(H: Perturbation) -> float:
    w = H.witness
    theta = w.phi + 1.0 / w.p
    if isinstance(H, AlmostHElement):
        theta = min(theta, w.theta)
    if not theta > 1:
        raise DomainError(f"theta = {theta} must exceed 1")
    return theta


def boxplus(X: Union[GridFunctional, HElement], H: Perturbation, control: Optional[Control] = None,
            check: bool = False):
    """X [+] H: sewing of the pointwise unit-preserving sum X (+) H.

    The sewing is witnessed by theta = phi + 1/p and the control
    omega_X + omega_H.  ``control`` is omega_X; when omitted, and when X is an
    H-space element, the control of its witness is used.  If X is an H-space
    element the result is returned as one.
    """
    theta = _theta(H)
    Xf = X.functional if isinstance(X, HElement) else X
    if control is None and isinstance(X, HElement):
        control = X.witness.control
    total = H.witness.control if control is None else SumControl([control, H.witness.control])
    result = sew(Xf.oplus(H.functional), total, theta, H.witness.p, check=check)
    if isinstance(X, HElement):
        return _h_sum(X, H, result.output)
    return result.output


def _h_sum(X: HElement, H: Perturbation, out: GridFunctional) -> HElement:
    wx, wh = X.witness, H.witness
    control = SumControl([wx.control, wh.control])
    phi = min(wx.phi, wh.phi)
    p = max(wx.p, wh.p)
    if not phi > 1 - 1 / p:
        phi = 1.0
    K = fit_constant(out, control.matrix(out.grid), phi)
    return HElement(out, RegularityWitness(p, phi, K, control))


def boxplus_otimes(X: GridFunctional, H: Perturbation, control: Optional[Control] = None) -> GridFunctional:
    """Sewing of the pointwise product X (x) H, equal to X [+] H in the limit."""
    return sew(X.otimes(H.functional), check=False).output


def odot(a: float, H: HElement) -> HElement:
    """a (.) H: the lift of a * dev(H)."""
    return lift(dev(H, check=False).scaled(a), check=False)


@dataclass(frozen=True)
class AssocCheck:
    lhs: GridFunctional
    rhs: GridFunctional
    max_delta: float


def boxplus_assoc_check(X: GridFunctional, H: HElement, Ht: HElement) -> AssocCheck:
    """(X [+] H) [+] Ht against X [+] (H [+] Ht)."""
    lhs = boxplus(boxplus(X, H), Ht)
    rhs = boxplus(X, boxplus(H, Ht))
    return AssocCheck(lhs, rhs, float(max_level_diff(lhs, rhs).max()))


@dataclass(frozen=True)
class KernelCheck:
    fixed: bool  # X [+] H = X
    unit: bool  # H = 1
    deviation: float
    unit_gap: float

    @property
    def consistent(self) -> bool:
        return self.fixed == self.unit


def kernel_check(X: GridFunctional, H: HElement, tol: float = 1e-10) -> KernelCheck:
    """X [+] H = X holds exactly when H is the unit."""
    moved = max_level_diff(boxplus(X, H), X)[1:].max()
    gap = tn.level_norms(H.functional.table, H.dim, H.level)[..., 1:].max()
    return KernelCheck(bool(moved <= tol), bool(gap <= tol), float(moved), float(gap))


@dataclass(frozen=True)
class DisplacementCheck:
    sewing_gap: float  # ||S(Ht) - S(Hh)||
    displacement_gap: float  # max(||X[+]Ht - X[+]Hh||, ||X[+]Ht - X[+]S(Ht)||)
    forward: bool
    converse: bool

    @property
    def ok(self) -> bool:
        return self.forward and self.converse


def almost_displacement_check(X: GridFunctional, Ht: Perturbation, Hh: Perturbation, tol: float) -> DisplacementCheck:
    """Displacements by almost H-space elements depend only on their sewings, and conversely."""
    sewn_t = sew(Ht.functional, check=False).output
    sewn_h = sew(Hh.functional, check=False).output
    sewing_gap = float(max_level_diff(sewn_t, sewn_h).max())
    a = boxplus(X, Ht)
    b = boxplus(X, Hh)
    c = boxplus(X, HElement(sewn_t, RegularityWitness(Ht.witness.p, Ht.witness.phi, Ht.witness.K, Ht.witness.control)))
    disp_gap = float(max(max_level_diff(a, b).max(), max_level_diff(a, c).max()))
    same_sewing = sewing_gap <= tol
    same_disp = disp_gap <= tol
    forward = (not same_sewing) or same_disp
    converse = (not same_disp) or same_sewing
    return DisplacementCheck(sewing_gap, disp_gap, forward, converse)


def perturb_by_defect_field(H: HElement, theta: float, scale: float, direction: Optional[np.ndarray] = None) -> AlmostHElement:
    """H plus scale * omega(s,t)^theta * direction on every level >= 1.

    The added field is non-additive for theta > 1, so the result is only
    almost multiplicative, while its sewing coincides with that of H.
    """
    F = H.functional
    omega = H.witness.control.matrix(F.grid)
    if direction is None:
        direction = np.ones(F.size)
    direction = np.asarray(direction, dtype=float).copy()
    direction[0] = 0.0
    direction /= max(np.linalg.norm(direction), 1e-300)

    def rule(i, j):
        v = F.values(i, j).copy()
        v += scale * (omega[i, j] ** theta)[..., None] * direction
        return v

    G = GridFunctional.closure(F.grid, rule, F.dim, F.level)
    w = H.witness
    K = fit_constant(G, omega, w.phi)
    return AlmostHElement(G, RegularityWitness(w.p, w.phi, K, w.control, theta=theta))


def weakly_geometric_gap(X: GridFunctional) -> float:
    """max over pairs of ||Sym(X^2) - X^1 (x) X^1 / 2||, the level-2 group-like relation."""
    d = X.dim
    iu = np.triu_indices(X.grid.n + 1)
    v = X.table[iu]
    x1 = tn.block(v, d, 1)
    x2 = tn.block(v, d, 2).reshape(-1, d, d)
    sym = 0.5 * (x2 + np.swapaxes(x2, 1, 2))
    return float(np.abs(sym - 0.5 * x1[:, :, None] * x1[:, None, :]).max())
