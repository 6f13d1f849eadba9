"""Deterministic scenario generators.

Randomness comes from numpy's PCG64 bit generator.  A scenario seed feeds a
``SeedSequence`` whose children are assigned by position:

* child 0 drives the rough path X,
* child 1 + i drives perturbation i,
* ``check_rng(seed, name)`` derives an independent stream per named check by
  hashing the check name into the spawn key.

Paths are always synthesised on a fixed dyadic mesh of ``FINE_LEVEL`` levels
and then subsampled, so one seed describes the same underlying path for every
grid size up to 2**FINE_LEVEL.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .analysis import AffineControl, Control, PVarControl
from .functional import GridFunctional, signature
from .grid import TimeGrid
from .perturb import HElement, IncrementPath, lift
from .tensor import DomainError

FINE_LEVEL = 10
DRIVER_KINDS = ("linear", "piecewise_linear", "midpoint_rough", "pure_area")


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def check_rng(seed: int, name: str) -> np.random.Generator:
    return rng_for(seed, 1000, zlib.crc32(name.encode()))


# ---------------------------------------------------------------- sample paths


def _subsample(fine: np.ndarray, n: int) -> np.ndarray:
    m = fine.shape[0] - 1
    if m % n:
        raise DomainError(f"grid size {n} must divide {m}")
    return fine[:: m // n]


def midpoint_path(rng: np.random.Generator, dim: int, h: float, n: int, amplitude: float = 1.0) -> np.ndarray:
    """Midpoint displacement on [0, 1] with per-scale amplitude 2^{-jh}, sampled at n+1 points."""
    if not 0 < h <= 1:
        raise DomainError(f"roughness h must lie in (0, 1], got {h}")
    x = np.zeros((2, dim))
    x[1] = rng.standard_normal(dim)
    for j in range(1, FINE_LEVEL + 1):
        mid = 0.5 * (x[:-1] + x[1:]) + rng.standard_normal((x.shape[0] - 1, dim)) * 2.0 ** (-j * h)
        out = np.empty((2 * x.shape[0] - 1, dim))
        out[0::2] = x
        out[1::2] = mid
        x = out
    return amplitude * _subsample(x, n)


def fourier_path(rng: np.random.Generator, dim: int, n: int, modes: int = 4, amplitude: float = 1.0) -> np.ndarray:
    """A smooth random path sum_m c_m sin(pi m t) / m on [0, 1], starting at 0."""
    t = np.linspace(0.0, 1.0, n + 1)
    c = rng.standard_normal((modes, dim))
    m = np.arange(1, modes + 1)
    return amplitude * (np.sin(np.pi * np.outer(t, m)) / m) @ c


def piecewise_linear_path(rng: np.random.Generator, dim: int, n: int, segments: int) -> np.ndarray:
    vertices = np.vstack([np.zeros(dim), np.cumsum(rng.standard_normal((segments, dim)) / math.sqrt(segments), axis=0)])
    knots = np.linspace(0.0, 1.0, segments + 1)
    t = np.linspace(0.0, 1.0, n + 1)
    return np.stack([np.interp(t, knots, vertices[:, i]) for i in range(dim)], axis=1)


def area_direction(dim: int) -> np.ndarray:
    """e_1 (x) e_2 - e_2 (x) e_1, flattened."""
    if dim < 2:
        raise DomainError("a pure area perturbation needs dim >= 2")
    a = np.zeros((dim, dim))
    a[0, 1], a[1, 0] = 1.0, -1.0
    return a.reshape(-1)


# ---------------------------------------------------------------- scenarios


@dataclass
class Scenario:
    seed: int = 0
    dim: int = 2
    level: int = 2
    p: float = 2.5
    grid_size: int = 128
    driver: dict = field(default_factory=lambda: {"kind": "midpoint_rough", "h": 0.45})
    perturbations: list = field(
        default_factory=lambda: [
            {"kind": "young", "h": None, "amplitude": 0.5},
            {"kind": "young", "h": 0.8, "amplitude": 0.3},
            {"kind": "pure_area", "a": 0.2},
        ]
    )
    tamper: bool = False

    def __post_init__(self) -> None:
        n = self.grid_size
        if n < 2 or n & (n - 1) or n > 2**FINE_LEVEL:
            raise DomainError(f"grid size must be a power of two in [2, {2**FINE_LEVEL}], got {n}")
        if not 1 <= self.level <= 4:
            raise DomainError(f"level must lie in 1..4, got {self.level}")
        if not 1 <= self.dim <= 4:
            raise DomainError(f"dim must lie in 1..4, got {self.dim}")
        if self.p < 1:
            raise DomainError(f"p must be >= 1, got {self.p}")
        kind = self.driver.get("kind")
        if kind not in DRIVER_KINDS:
            raise DomainError(f"unknown driver {kind!r}")
        if kind == "midpoint_rough" and not 1.0 / float(self.driver.get("h", 0.45)) < self.p:
            raise DomainError("midpoint roughness h needs 1/h < p for finite p-variation")
        for entry in self.perturbations:
            if entry.get("kind") == "young" and entry.get("h") is not None and not entry["h"] > 1 - 1 / self.p:
                raise DomainError(f"young perturbation needs h > 1 - 1/p, got {entry['h']}")
            if entry.get("kind") == "pure_area" and self.level < 2:
                raise DomainError("pure area perturbations need level >= 2")

    def with_grid(self, n: int) -> "Scenario":
        return Scenario(**{**asdict(self), "grid_size": n})

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise DomainError(f"unknown scenario fields {sorted(unknown)}")
        return cls(**obj)


def driver_path(s: Scenario) -> np.ndarray:
    rng = rng_for(s.seed, 0)
    kind = s.driver["kind"]
    n = s.grid_size
    if kind == "linear":
        w = np.asarray(s.driver.get("w", rng.standard_normal(s.dim)), dtype=float)
        return np.outer(np.linspace(0.0, 1.0, n + 1), w)
    if kind == "piecewise_linear":
        return piecewise_linear_path(rng, s.dim, n, int(s.driver.get("segments", 8)))
    if kind == "midpoint_rough":
        return midpoint_path(rng, s.dim, float(s.driver.get("h", 0.45)), n, float(s.driver.get("amplitude", 1.0)))
    return np.zeros((n + 1, s.dim))  # pure_area: X is the trivial path


def young_increment_path(
    rng: np.random.Generator, grid: TimeGrid, dim: int, level: int, p: float,
    h: Optional[float] = None, amplitude: float = 0.5, control: Optional[Control] = None,
) -> IncrementPath:
    """Random element of I-space: every level a smooth (h=None) or h-rough Young path."""
    n = grid.n
    control = control or AffineControl(1.0)
    levels = []
    for j in range(1, level + 1):
        if h is None:
            levels.append(fourier_path(rng, dim**j, n, amplitude=amplitude))
        else:
            levels.append(midpoint_path(rng, dim**j, h, n, amplitude=amplitude))
    phi = 1.0 if h is None else float(h)
    return IncrementPath.from_levels(grid, levels, control, p, phi)


def pure_area_path(grid: TimeGrid, dim: int, level: int, p: float, a: float, top: Optional[int] = None) -> IncrementPath:
    """(0, ..., 0, A_t) with A_t = a t (e1 e2 - e2 e1) placed at level ``top`` (default 2)."""
    top = 2 if top is None else top
    levels = [np.zeros((grid.n + 1, dim**j)) for j in range(1, level + 1)]
    if top == 2:
        levels[1] = a * np.outer(grid.times - grid.start, area_direction(dim))
    else:
        direction = np.zeros(dim**top)
        direction[1] = 1.0
        direction[dim] = -1.0
        levels[top - 1] = a * np.outer(grid.times - grid.start, direction)
    phi = 2.0 / p if 1 - 1 / p < 2.0 / p <= 1 else 1.0
    return IncrementPath.from_levels(grid, levels, AffineControl(1.0), p, phi)


@dataclass
class Generated:
    grid: TimeGrid
    path: np.ndarray
    X: GridFunctional
    control: Control
    increments: list[IncrementPath]
    Hs: list[HElement]


def generate(s: Scenario) -> Generated:
    grid = TimeGrid.uniform(s.grid_size)
    path = driver_path(s)
    X = signature(grid, path, s.level)
    control = PVarControl(grid, path, s.p)
    incs = []
    for i, entry in enumerate(s.perturbations):
        rng = rng_for(s.seed, 1 + i)
        kind = entry.get("kind")
        if kind == "young":
            incs.append(young_increment_path(rng, grid, s.dim, s.level, s.p, entry.get("h"), float(entry.get("amplitude", 0.5))))
        elif kind == "pure_area":
            incs.append(pure_area_path(grid, s.dim, s.level, s.p, float(entry.get("a", 0.2))))
        else:
            raise DomainError(f"unknown perturbation kind {kind!r}")
    if s.driver["kind"] == "pure_area":
        incs.insert(0, pure_area_path(grid, s.dim, s.level, s.p, float(s.driver.get("a", 0.2))))
    Hs = [lift(I) for I in incs]
    return Generated(grid, path, X, control, incs, Hs)


def random_increment(
    rng: np.random.Generator, grid: TimeGrid, dim: int, level: int, p: float, kind: Optional[str] = None,
) -> IncrementPath:
    """A random I-space element: smooth, Young-rough or pure area, chosen by ``rng`` unless ``kind`` is given.

    The number of draws does not depend on the grid, so the same stream gives
    the same underlying path for every N.
    """
    choice = ("smooth", "young", "pure_area")[int(rng.integers(3))]
    kind = kind or choice
    if kind == "pure_area" and level < 2:
        kind = "smooth"
    amplitude = float(rng.uniform(0.2, 0.6))
    lo = max(1 - 1 / p + 0.1, 0.55)
    h = float(rng.uniform(lo, 1.0)) if lo < 1 else 1.0
    a = float(rng.normal(0.0, 0.3))
    sub = rng_for(int(rng.integers(2**31)), 7)
    if kind == "smooth":
        return young_increment_path(sub, grid, dim, level, p, None, amplitude)
    if kind == "young":
        return young_increment_path(sub, grid, dim, level, p, h, amplitude)
    if kind == "pure_area":
        return pure_area_path(grid, dim, level, p, a, top=level)
    raise DomainError(f"unknown increment kind {kind!r}")


def antisymmetric_increment(rng: np.random.Generator, grid: TimeGrid, dim: int, level: int, p: float) -> IncrementPath:
    """Smooth level 1, level 2 a smooth multiple of e1 e2 - e2 e1, higher levels zero."""
    if level < 2:
        raise DomainError("an antisymmetric level-2 component needs level >= 2")
    x1 = fourier_path(rng, dim, grid.n, amplitude=0.5)
    scalar = fourier_path(rng, 1, grid.n, amplitude=0.3)
    levels = [x1, scalar * area_direction(dim)[None, :]]
    levels += [np.zeros((grid.n + 1, dim**j)) for j in range(3, level + 1)]
    return IncrementPath.from_levels(grid, levels, AffineControl(1.0), p, 1.0)
