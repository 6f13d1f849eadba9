from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DomainError

# relative slack when matching a requested time to a grid node
_SNAP = 1e-12


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing sample times t_0 = S < ... < t_N = T."""

    times: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.times, dtype=float).reshape(-1)
        if t.size < 2:
            raise DomainError("a time grid needs at least two points")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise DomainError("grid times must be finite and strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, n: int, start: float = 0.0, end: float = 1.0) -> "TimeGrid":
        return cls(np.linspace(start, end, n + 1))

    @property
    def n(self) -> int:
        """Number of cells N."""
        return self.times.size - 1

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def index(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t))
        tol = _SNAP * max(1.0, abs(self.end - self.start))
        for j in (i - 1, i):
            if 0 <= j <= self.n and abs(self.times[j] - t) <= tol:
                return j
        raise DomainError(f"time {t!r} is not a grid point")

    def pair(self, s: float, t: float) -> tuple[int, int]:
        i, j = self.index(s), self.index(t)
        if i > j:
            raise DomainError(f"need s <= t, got s={s!r}, t={t!r}")
        return i, j

    def coarsen(self, stride: int = 2) -> "TimeGrid":
        if self.n % stride:
            raise DomainError(f"cannot coarsen {self.n} cells by {stride}")
        return TimeGrid(self.times[::stride])

    def same_as(self, other: "TimeGrid") -> bool:
        return self.times.shape == other.times.shape and bool(
            np.allclose(self.times, other.times, rtol=0, atol=_SNAP)
        )

    def to_json(self) -> dict:
        return {"times": [float(t) for t in self.times]}

    @classmethod
    def from_json(cls, obj) -> "TimeGrid":
        if isinstance(obj, dict):
            obj = obj["times"]
        return cls(np.asarray(obj, dtype=float))
