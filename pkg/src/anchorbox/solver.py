"""Sampling, max-box proposal and sequential certification for one feature subset.

Every statistical test draws ``M = ceil(log(delta_i) / log(rho))`` fresh
uniform points from the proposed box and passes only if all of them are
faithful.  A box with purity below rho passes with probability at most
rho**M <= delta_i, and the per-test levels delta_i sum to at most delta
over the whole run.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Box
from .maxbox import search_max_box

# Upper bound on sum_{j>=1} 1 / (j ln^2(j+1)): exact partial sum to 1e6 plus
# the integral tail bound 1/ln(1e6); see tests/test_solver.py.
C_UPPER = 3.38773553520085


class PositivesTooRare(RuntimeError):
    pass


class RunTimeout(RuntimeError):
    pass


class TestScheduler:
    """Global test counter issuing delta_i = delta / (i ln^2(i+1) C)."""

    __test__ = False  # not a pytest class

    def __init__(self, delta: float, rho: float, c_upper: float = C_UPPER):
        if not 0 < delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        if not 0 < rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
        self.delta = delta
        self.rho = rho
        self.c_upper = c_upper
        self.counter = 1
        self.spent = 0.0

    def level(self, i: int) -> float:
        return self.delta / (i * math.log(i + 1) ** 2 * self.c_upper)

    def sample_size(self, delta_i: float) -> int:
        return math.ceil(math.log(delta_i) / math.log(self.rho))

    def next_test(self) -> tuple[float, int]:
        delta_i = self.level(self.counter)
        self.counter += 1
        self.spent += delta_i
        return delta_i, self.sample_size(delta_i)

    @property
    def tests_issued(self) -> int:
        return self.counter - 1


def next_test(s: TestScheduler) -> tuple[float, int]:
    return s.next_test()


class SampleStore:
    """Every labelled point of a run, tagged with the active set it was drawn under."""

    def __init__(self, dim: int):
        self.dim = dim
        self._chunks = []
        self._keys: dict[frozenset, int] = {}
        self._cache = None

    def __len__(self):
        return sum(len(c[0]) for c in self._chunks)

    def key(self, active) -> int:
        return self._keys.setdefault(frozenset(int(a) for a in active), len(self._keys))

    def add(self, X, labels, active, explore: bool):
        if len(X) == 0:
            return
        k = self.key(active)
        n = len(X)
        self._chunks.append((np.asarray(X, dtype=np.float64), np.asarray(labels, dtype=np.int8),
                             np.full(n, k, dtype=np.int32), np.full(n, explore)))
        self._cache = None

    def arrays(self):
        if self._cache is None:
            if self._chunks:
                self._cache = tuple(np.concatenate(parts) for parts in zip(*self._chunks))
                self._cache = (np.ascontiguousarray(self._cache[0]),) + self._cache[1:]
            else:
                self._cache = (np.zeros((0, self.dim)), np.zeros(0, np.int8),
                               np.zeros(0, np.int32), np.zeros(0, bool))
        return self._cache

    @property
    def positives(self):
        X, y, _, _ = self.arrays()
        return X[y == 1]

    @property
    def negatives(self):
        X, y, _, _ = self.arrays()
        return X[y == 0]

    def reusable(self, active, lower, upper, anchor):
        """Points usable by a call on ``active`` over [lower, upper].

        Negatives: any stored negative inside the space whose inactive
        coordinates equal the anchor's.  Positives: only exploration draws
        made under the same active set, so they stay a uniform sample.
        """
        X, y, keys, explore = self.arrays()
        if len(X) == 0:
            return np.zeros((0, self.dim)), np.zeros((0, self.dim))
        act = np.ascontiguousarray(sorted(int(a) for a in active), dtype=np.intp)
        inactive = np.setdiff1d(np.arange(self.dim), act)
        idx = kernels.filter_closed(X, np.arange(len(X), dtype=np.intp), lower, upper, act)
        if len(inactive):
            idx = idx[np.all(X[np.ix_(idx, inactive)] == anchor[inactive], axis=1)]
        k = self._keys.get(frozenset(act.tolist()), -1)
        pos = idx[(y[idx] == 1) & (keys[idx] == k) & explore[idx]]
        neg = idx[y[idx] == 0]
        return X[pos], X[neg]


def sample_pinned(lower, upper, anchor, active, n, rng) -> np.ndarray:
    """n uniform points on the active dims of [lower, upper], anchor elsewhere."""
    act = np.asarray(active, dtype=np.intp)
    X = np.tile(np.asarray(anchor, dtype=np.float64), (n, 1))
    X[:, act] = rng.uniform(np.asarray(lower)[act], np.asarray(upper)[act], size=(n, len(act)))
    return X


@dataclass
class Certificate:
    passed: bool
    delta_i: float
    M: int
    samples: np.ndarray
    labels: np.ndarray

    @property
    def counterexamples(self) -> np.ndarray:
        return self.samples[self.labels == 0]


def certify_box(box: Box, active, anchor, oracle, scheduler: TestScheduler, rng) -> Certificate:
    """One statistical test: M uniform draws from ``box``, pass iff all are faithful."""
    delta_i, M = scheduler.next_test()
    X = sample_pinned(box.lower, box.upper, anchor, active, M, rng)
    labels = oracle.evaluate_many(X)
    return Certificate(bool(np.all(labels == 1)), delta_i, M, X, labels)


@dataclass
class SolverParams:
    n_positives: int = 100
    node_budget: int = 100
    sample_cap: int = 100_000
    expansion_order: str = "largest_gain_first"
    reuse_samples: bool = True


def solve_restricted(active, lower, upper, anchor, oracle, params: SolverParams,
                     scheduler: TestScheduler, store: SampleStore, rng,
                     deadline: float | None = None, trace: list | None = None):
    """Certified box for ``active`` inside [lower, upper]; returns full-D (lower, upper).

    Dimensions outside ``active`` keep the caller's bounds.
    """
    active = tuple(int(a) for a in active)
    act = np.asarray(active, dtype=np.intp)
    lower = np.array(lower, dtype=np.float64)
    upper = np.array(upper, dtype=np.float64)
    anchor = np.asarray(anchor, dtype=np.float64)
    if np.any(anchor < lower) or np.any(anchor > upper):
        raise ValueError("anchor lies outside the search bounds")
    space = Box(lower, upper)
    if not params.reuse_samples:
        store = SampleStore(len(anchor))
    P, Q = store.reusable(active, lower, upper, anchor)
    pos, neg = [P], [Q]
    n_pos = len(P)
    fresh = 0
    N = params.n_positives
    while n_pos < N:
        if fresh >= params.sample_cap:
            raise PositivesTooRare(
                f"{fresh} samples on features {list(active)} gave {n_pos} of {N} positives")
        _check_deadline(deadline)
        n = min(N - n_pos, params.sample_cap - fresh)
        X = sample_pinned(lower, upper, anchor, act, n, rng)
        y = oracle.evaluate_many(X)
        fresh += n
        store.add(X, y, active, explore=True)
        pos.append(X[y == 1])
        neg.append(X[y == 0])
        n_pos += int(np.sum(y == 1))
    P = np.concatenate(pos)
    Q = np.concatenate(neg)
    tests = 0
    while True:
        _check_deadline(deadline)
        found = search_max_box(P, Q, anchor, space, act, params.node_budget,
                               params.expansion_order, rng)
        cert = certify_box(found.box, act, anchor, oracle, scheduler, rng)
        tests += 1
        store.add(cert.samples, cert.labels, active, explore=False)
        if cert.passed:
            break
        Q = np.concatenate([Q, cert.counterexamples])
    out_lo, out_hi = lower.copy(), upper.copy()
    out_lo[act] = found.box.lower[act]
    out_hi[act] = found.box.upper[act]
    if trace is not None:
        trace.append({"active": active, "in_lower": lower, "in_upper": upper,
                      "lower": out_lo, "upper": out_hi, "tests": tests, "fresh": fresh})
    return out_lo, out_hi


def _check_deadline(deadline):
    if deadline is not None and time.monotonic() > deadline:
        raise RunTimeout("time limit exceeded")
