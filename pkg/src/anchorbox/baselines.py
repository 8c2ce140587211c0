"""Comparison regions certified with the same sequential test: Euclidean balls
around the anchor and a box grown one side at a time."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anchor import AnchorRun
from .geometry import NEG_INF, Box, log10_volume


def ball_log10_volume(dim: int, radius: float) -> float:
    if radius <= 0:
        return NEG_INF
    return (dim * math.log10(radius) + 0.5 * dim * math.log10(math.pi)
            - math.lgamma(dim / 2 + 1) / math.log(10))


@dataclass(frozen=True)
class RadialRegion:
    center: np.ndarray
    radius: float

    @property
    def dim(self):
        return len(self.center)

    def contains_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.linalg.norm(X - self.center, axis=1) <= self.radius

    def contains(self, x) -> bool:
        return bool(self.contains_many(x)[0])

    def log10_volume(self) -> float:
        return ball_log10_volume(self.dim, self.radius)

    def sample(self, n: int, rng) -> np.ndarray:
        return sample_ball(self.center, self.radius, n, rng)

    def to_dict(self):
        return {"center": np.asarray(self.center).tolist(), "radius": self.radius}


def sample_ball(center, radius, n, rng, rejection_max_dim=10) -> np.ndarray:
    """Uniform points in a Euclidean ball.

    Rejection from the enclosing cube up to ``rejection_max_dim`` dimensions,
    direction times radius * U^(1/D) above that.
    """
    center = np.asarray(center, dtype=np.float64)
    D = len(center)
    if n == 0:
        return np.zeros((0, D))
    if D <= rejection_max_dim:
        out = []
        got = 0
        accept = math.exp(ball_log10_volume(D, 1.0) * math.log(10)) / 2.0 ** D
        while got < n:
            m = int(1.2 * (n - got) / accept) + 16
            Z = rng.uniform(-1.0, 1.0, size=(m, D))
            Z = Z[np.sum(Z * Z, axis=1) <= 1.0]
            out.append(Z)
            got += len(Z)
        Z = np.concatenate(out)[:n]
    else:
        Z = rng.standard_normal((n, D))
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
        Z *= rng.uniform(size=(n, 1)) ** (1.0 / D)
    return center + radius * Z


@dataclass
class BaselineResult:
    region: object  # RadialRegion or Box
    log10_volume: float
    evals: int
    tests: int
    certified: bool  # False when even the smallest candidate failed


def fit_radial(run: AnchorRun, steps: int = 100) -> BaselineResult:
    """Largest certified radius on a geometric grid; stops at the first failure."""
    a, space = run.anchor, run.space
    r_min = 1e-3 * float(np.linalg.norm(space.widths))
    r_max = float(min(np.min(a - space.lower), np.min(space.upper - a)))
    if r_max <= 0:
        grid = np.zeros(0)
    elif r_max <= r_min:
        grid = np.array([r_max])
    else:
        grid = np.geomspace(r_min, r_max, steps)
    best = 0.0
    tests = 0
    for r in grid:
        _, M = run.scheduler.next_test()
        tests += 1
        X = sample_ball(a, r, M, run.rng_search)
        if not np.all(run.oracle.evaluate_many(X) == 1):
            break
        best = float(r)
    region = RadialRegion(a.copy(), best)
    return BaselineResult(region, region.log10_volume(), run.evals, tests, best > 0)


def fit_greedy_anchor(run: AnchorRun, steps_per_side: int = 100,
                      history: list | None = None) -> BaselineResult:
    """Grow a small box around the anchor side by side while the test keeps passing.

    Sides are visited round-robin (dim 0 low, dim 0 high, dim 1 low, ...); the
    distance of each side from the anchor follows a log grid from 1e-3 of the
    space width up to the full width, capped at the space bound.  A failed
    side is frozen.  Accepted boxes are appended to ``history`` when given.
    """
    a, space = run.anchor, run.space
    D = len(a)
    w = space.widths
    h0 = 1e-3 * w
    lo = np.maximum(a - h0, space.lower)
    hi = np.minimum(a + h0, space.upper)
    tests = 1
    _, M = run.scheduler.next_test()
    X = Box(lo, hi).sample(M, run.rng_search)
    if not np.all(run.oracle.evaluate_many(X) == 1):
        box = Box(lo, hi)
        return BaselineResult(box, log10_volume(box), run.evals, tests, False)
    if history is not None:
        history.append(Box(lo, hi))
    # side s = 2 * dim + up
    ratio = np.where(h0 > 0, (w / np.where(h0 > 0, h0, 1.0)) ** (1.0 / steps_per_side), 1.0)
    step = np.zeros(2 * D, dtype=int)
    active = [s for s in range(2 * D) if w[s // 2] > 0]
    while active:
        still = []
        for s in active:
            d, up = divmod(s, 2)
            bound = space.upper[d] if up else space.lower[d]
            cur = hi[d] if up else lo[d]
            if cur == bound or step[s] >= steps_per_side:
                continue
            step[s] += 1
            reach = h0[d] * ratio[d] ** step[s]
            new = min(a[d] + reach, bound) if up else max(a[d] - reach, bound)
            c_lo, c_hi = lo.copy(), hi.copy()
            if up:
                c_hi[d] = new
            else:
                c_lo[d] = new
            tests += 1
            _, M = run.scheduler.next_test()
            X = Box(c_lo, c_hi).sample(M, run.rng_search)
            if np.all(run.oracle.evaluate_many(X) == 1):
                lo, hi = c_lo, c_hi
                still.append(s)
                if history is not None:
                    history.append(Box(lo, hi))
        active = still
    box = Box(lo, hi)
    return BaselineResult(box, log10_volume(box), run.evals, tests, True)
