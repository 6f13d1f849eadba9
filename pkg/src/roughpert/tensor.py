"""Truncated tensor algebra T^(n)(R^d).

An element (a^0, ..., a^n) is stored as one flat float64 vector: level k
occupies ``d**k`` consecutive entries in row-major order, so the multi-index
(i_1, ..., i_k) sits at offset ``sum(i_j * d**(k - j))`` inside its block.
Every kernel in this module also accepts batches, i.e. arrays of shape
``(..., size)``; the heavier modules rely on that to process all grid pairs at
once.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Sequence

import numpy as np

RTOL = 1e-9
ATOL = 1e-12
UNIT_TOL = 1e-12


class ShapeError(ValueError):
    """Dimension or truncation level mismatch."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


@lru_cache(maxsize=None)
def offsets(dim: int, level: int) -> tuple[int, ...]:
    """Start offsets of every level plus the total size as the last entry."""
    if dim < 1 or level < 0:
        raise ShapeError(f"invalid shape dim={dim}, level={level}")
    out = [0]
    for k in range(level + 1):
        out.append(out[-1] + dim**k)
    return tuple(out)


def size(dim: int, level: int) -> int:
    return offsets(dim, level)[-1]


def block(a: np.ndarray, dim: int, k: int) -> np.ndarray:
    """View of level ``k`` of a (batched) flat tensor."""
    off = offsets(dim, k)
    return a[..., off[k]:off[k + 1]]


# ---------------------------------------------------------------- batched kernels


def mul(a: np.ndarray, b: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Truncated tensor product of (batches of) flat tensors.

    ``a`` and ``b`` broadcast against each other on their leading axes.
    """
    off = offsets(dim, level)
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(shape + (off[-1],))
    for k in range(level + 1):
        dst = out[..., off[k]:off[k + 1]]
        for i in range(k + 1):
            j = k - i
            ai = a[..., off[i]:off[i + 1]]
            bj = b[..., off[j]:off[j + 1]]
            if i == 0 or j == 0:
                dst += ai * bj
            else:
                dst += (ai[..., :, None] * bj[..., None, :]).reshape(shape + (dim**k,))
    return out


def unit_array(dim: int, level: int, batch: tuple[int, ...] = ()) -> np.ndarray:
    out = np.zeros(batch + (size(dim, level),))
    out[..., 0] = 1.0
    return out


def _power_series(x: np.ndarray, coeffs: Sequence[float], dim: int, level: int) -> np.ndarray:
    """sum_m coeffs[m] x^{(x)m} for x with zero scalar level (Horner form)."""
    acc = unit_array(dim, level, x.shape[:-1]) * coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = mul(acc, x, dim, level)
        acc[..., 0] += c
    return acc


def exp(x: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Tensor exponential of elements with zero scalar part."""
    return _power_series(x, [1.0 / factorial(m) for m in range(level + 1)], dim, level)


def log(a: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Tensor logarithm of unit tensors (scalar part 1)."""
    x = a.copy()
    x[..., 0] = 0.0
    coeffs = [0.0] + [(-1.0) ** (m + 1) / m for m in range(1, level + 1)]
    return _power_series(x, coeffs, dim, level)


def inverse(a: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Group inverse sum_k (1 - a)^{(x)k} of unit tensors."""
    x = -a.copy()
    x[..., 0] = 0.0
    return _power_series(x, [1.0] * (level + 1), dim, level)


def level_norms(a: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Frobenius norm of every level; output shape ``(..., level + 1)``."""
    off = offsets(dim, level)
    return np.stack(
        [np.sqrt(np.sum(a[..., off[k]:off[k + 1]] ** 2, axis=-1)) for k in range(level + 1)],
        axis=-1,
    )


def complete_top_level(a: np.ndarray, dim: int, level: int) -> np.ndarray:
    """Extend unit tensors of level ``level`` by one level through log/exp.

    Levels up to ``level`` are copied verbatim; the new top level is the one
    of exp(log a) computed in T^(level+1) with the log truncated at ``level``.
    This is the extension of a single step along a path whose log-signature
    has no component above ``level``; for a straight segment it is exact.
    """
    lg = log(a, dim, level)
    n = level + 1
    padded = np.zeros(a.shape[:-1] + (size(dim, n),))
    padded[..., : a.shape[-1]] = lg
    ex = exp(padded, dim, n)
    ex[..., : a.shape[-1]] = a
    return ex


# ---------------------------------------------------------------- value type


@dataclass(frozen=True, eq=False)
class TruncatedTensor:
    """An element of T^(level)(R^dim)."""

    dim: int
    level: int
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=float).reshape(-1)
        if arr.size != size(self.dim, self.level):
            raise ShapeError(
                f"expected {size(self.dim, self.level)} entries for dim={self.dim}, "
                f"level={self.level}, got {arr.size}"
            )
        if not np.all(np.isfinite(arr)):
            raise DomainError("tensor entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    # constructors

    @classmethod
    def unit(cls, dim: int, level: int) -> "TruncatedTensor":
        return cls(dim, level, unit_array(dim, level))

    @classmethod
    def zero(cls, dim: int, level: int) -> "TruncatedTensor":
        return cls(dim, level, np.zeros(size(dim, level)))

    @classmethod
    def from_levels(cls, levels: Sequence) -> "TruncatedTensor":
        """Build from per-level arrays; level 1 fixes the dimension."""
        level = len(levels) - 1
        if level == 0:
            return cls(1, 0, np.atleast_1d(np.asarray(levels[0], dtype=float)))
        dim = np.asarray(levels[1], dtype=float).size
        flat = np.concatenate([np.asarray(x, dtype=float).reshape(-1) for x in levels])
        return cls(dim, level, flat)

    @classmethod
    def exp_of_vector(cls, v, level: int) -> "TruncatedTensor":
        v = np.asarray(v, dtype=float).reshape(-1)
        x = np.zeros(size(v.size, level))
        if level >= 1:
            x[1 : 1 + v.size] = v
        return cls(v.size, level, exp(x, v.size, level))

    # accessors

    def __getitem__(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.level:
            raise ShapeError(f"level {k} out of range 0..{self.level}")
        return block(self.data, self.dim, k)

    def levels(self) -> list[np.ndarray]:
        return [self[k] for k in range(self.level + 1)]

    def as_array(self, k: int) -> np.ndarray:
        """Level ``k`` reshaped to a k-way array."""
        return self[k].reshape((self.dim,) * k)

    @property
    def scalar(self) -> float:
        return float(self.data[0])

    def _check_peer(self, other: "TruncatedTensor") -> None:
        if (self.dim, self.level) != (other.dim, other.level):
            raise ShapeError(
                f"shape mismatch: (dim={self.dim}, level={self.level}) vs "
                f"(dim={other.dim}, level={other.level})"
            )

    def _check_unit(self) -> None:
        if abs(self.data[0] - 1.0) > UNIT_TOL:
            raise DomainError(f"zeroth level must be 1, got {self.data[0]!r}")

    # algebra

    def otimes(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_peer(other)
        return TruncatedTensor(self.dim, self.level, mul(self.data, other.data, self.dim, self.level))

    __matmul__ = otimes

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_peer(other)
        return TruncatedTensor(self.dim, self.level, self.data + other.data)

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_peer(other)
        return TruncatedTensor(self.dim, self.level, self.data - other.data)

    def __mul__(self, scale: float) -> "TruncatedTensor":
        return TruncatedTensor(self.dim, self.level, self.data * float(scale))

    __rmul__ = __mul__

    def oplus(self, other: "TruncatedTensor") -> "TruncatedTensor":
        """Unit-preserving addition a + b - 1."""
        self._check_peer(other)
        self._check_unit()
        other._check_unit()
        out = self.data + other.data
        out[0] = 1.0
        return TruncatedTensor(self.dim, self.level, out)

    def scalar_tilde(self, lam: float) -> "TruncatedTensor":
        """Unit-preserving scaling 1 + lam (a - 1)."""
        self._check_unit()
        out = self.data * float(lam)
        out[0] = 1.0
        return TruncatedTensor(self.dim, self.level, out)

    def group_inverse(self) -> "TruncatedTensor":
        self._check_unit()
        return TruncatedTensor(self.dim, self.level, inverse(self.data, self.dim, self.level))

    def level_norm(self, k: int) -> float:
        return float(np.linalg.norm(self[k]))

    def norms(self) -> np.ndarray:
        return level_norms(self.data, self.dim, self.level)

    def truncate(self, k: int) -> "TruncatedTensor":
        """Y(k): drop every level above ``k``."""
        if not 0 <= k <= self.level:
            raise ShapeError(f"cannot truncate level {self.level} tensor to {k}")
        return TruncatedTensor(self.dim, k, self.data[: size(self.dim, k)])

    def zero_pad(self, n: int) -> "TruncatedTensor":
        """Y[k] seen from T^(n): append zero levels up to ``n``."""
        if n < self.level:
            raise ShapeError(f"cannot pad level {self.level} tensor down to {n}")
        out = np.zeros(size(self.dim, n))
        out[: self.data.size] = self.data
        return TruncatedTensor(self.dim, n, out)

    def allclose(self, other: "TruncatedTensor", rtol: float = RTOL, atol: float = ATOL) -> bool:
        """Per-level comparison: ||a^k - b^k|| <= atol + rtol * max(||a^k||, ||b^k||)."""
        self._check_peer(other)
        diff = (self - other).norms()
        scale = np.maximum(self.norms(), other.norms())
        return bool(np.all(diff <= atol + rtol * scale))

    def __repr__(self) -> str:
        body = ", ".join(np.array2string(x, precision=6) for x in self.levels())
        return f"TruncatedTensor(dim={self.dim}, level={self.level}, ({body}))"

    # serialization

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "level": self.level,
            "data": [[float(v) for v in self[k]] for k in range(self.level + 1)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TruncatedTensor":
        dim, level = int(obj["dim"]), int(obj["level"])
        data = obj["data"]
        if len(data) != level + 1:
            raise ShapeError(f"expected {level + 1} levels, got {len(data)}")
        for k, lev in enumerate(data):
            if len(lev) != dim**k:
                raise ShapeError(f"level {k} must have {dim**k} entries, got {len(lev)}")
        return cls(dim, level, np.concatenate([np.asarray(x, dtype=float) for x in data]))


def otimes(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    return a.otimes(b)


def oplus(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    return a.oplus(b)


def scalar_tilde(lam: float, a: TruncatedTensor) -> TruncatedTensor:
    return a.scalar_tilde(lam)


def group_inverse(a: TruncatedTensor) -> TruncatedTensor:
    return a.group_inverse()


def level_norm(a: TruncatedTensor, k: int) -> float:
    return a.level_norm(k)


def truncate(a: TruncatedTensor, k: int) -> TruncatedTensor:
    return a.truncate(k)


def zero_pad(a: TruncatedTensor, n: int) -> TruncatedTensor:
    return a.zero_pad(n)
