"""Axis-aligned boxes, feature subsets and log-volume accounting.

Boxes are closed: a point on a face is contained.  Volumes are only ever
handled as base-10 logarithms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NEG_INF = float("-inf")


class GeometryError(ValueError):
    pass


def as_point(x, dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise GeometryError(f"point must be 1-d, got shape {x.shape}")
    if dim is not None and len(x) != dim:
        raise GeometryError(f"dimension mismatch: expected {dim}, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise GeometryError("point has non-finite coordinates")
    return x


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64).reshape(-1)
        hi = np.array(self.upper, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise GeometryError(f"bound vectors differ in length: {len(lo)} vs {len(hi)}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GeometryError("box bounds must be finite")
        if np.any(lo > hi):
            bad = int(np.flatnonzero(lo > hi)[0])
            raise GeometryError(f"lower > upper on dimension {bad}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        return contains(self, x)

    def contains_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise GeometryError(f"dimension mismatch: box {self.dim}, points {X.shape[1]}")
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Box":
        return cls(d["lower"], d["upper"])

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


def contains(box: Box, x) -> bool:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (box.dim,):
        raise GeometryError(f"dimension mismatch: box {box.dim}, point {x.shape}")
    return bool(np.all((box.lower <= x) & (x <= box.upper)))


def log10_volume(box: Box, active: Sequence[int] | None = None) -> float:
    """Sum of log10 side lengths over ``active`` (all dims by default).

    A zero-width active side gives ``-inf``.
    """
    widths = box.widths if active is None else box.widths[np.asarray(active, dtype=np.intp)]
    if np.any(widths <= 0):
        return NEG_INF
    return float(np.sum(np.log10(widths)))


def intersect(a: Box, b: Box) -> Box:
    if a.dim != b.dim:
        raise GeometryError(f"dimension mismatch: {a.dim} vs {b.dim}")
    lo = np.maximum(a.lower, b.lower)
    hi = np.minimum(a.upper, b.upper)
    if np.any(lo > hi):
        raise GeometryError("empty intersection")
    return Box(lo, hi)


def feature_set(indices, dim: int | None = None) -> tuple[int, ...]:
    s = tuple(int(i) for i in indices)
    if len(set(s)) != len(s):
        raise GeometryError(f"duplicate feature indices in {s}")
    if any(i < 0 for i in s) or (dim is not None and any(i >= dim for i in s)):
        raise GeometryError(f"feature index out of range in {s}")
    return s


def balanced_random_split(s, rng: np.random.Generator) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Random balanced partition of ``s``; the second half takes the odd element."""
    s = feature_set(s)
    if len(s) < 2:
        raise GeometryError("need at least two features to split")
    perm = rng.permutation(len(s))
    half = len(s) // 2
    first = tuple(s[i] for i in perm[:half])
    second = tuple(s[i] for i in perm[half:])
    return first, second
