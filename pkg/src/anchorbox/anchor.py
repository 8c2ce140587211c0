"""Divide-and-conquer search for a certified anchor box over all features."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import kernels
from .geometry import Box, as_point, balanced_random_split, intersect, log10_volume
from .maxbox import EXPANSION_ORDERS
from .seeding import derive_rng
from .solver import (PositivesTooRare, SampleStore, SolverParams, TestScheduler,
                     solve_restricted)


class AnchorNotFaithful(RuntimeError):
    """The surrogate is not faithful at the anchor itself; nothing can be certified."""


@dataclass
class AnchorParams:
    rho: float = 0.99
    delta: float = 0.01
    n_positives: int = 100
    node_budget: int = 100
    expansion_order: str = "largest_gain_first"
    sample_cap: int = 100_000
    seed: int = 0
    reuse_samples: bool = True
    max_retries: int = 3
    audit_samples: int = 10_000
    time_limit: float | None = None

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n_positives < 1:
            raise ValueError(f"n_positives must be >= 1, got {self.n_positives}")
        if self.node_budget < 1:
            raise ValueError(f"node_budget must be >= 1, got {self.node_budget}")
        if self.expansion_order not in EXPANSION_ORDERS:
            raise ValueError(f"expansion_order must be one of {EXPANSION_ORDERS}")
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be >= 1")

    def solver_params(self) -> SolverParams:
        return SolverParams(self.n_positives, self.node_budget, self.sample_cap,
                            self.expansion_order, self.reuse_samples)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class AnchorRun:
    """State shared by all subproblems of one search: scheduler, samples, streams."""

    def __init__(self, anchor, space: Box, oracle, params: AnchorParams | None = None):
        self.params = params or AnchorParams()
        self.space = space
        self.anchor = as_point(anchor, space.dim)
        if not space.contains(self.anchor):
            raise ValueError("anchor lies outside the bounding box")
        self.oracle = oracle
        self.start_evals = oracle.eval_count
        if oracle.evaluate(self.anchor) != 1:
            raise AnchorNotFaithful("surrogate is not faithful at the anchor")
        self.scheduler = TestScheduler(self.params.delta, self.params.rho)
        self.store = SampleStore(space.dim)
        self.rng_split = derive_rng(self.params.seed, "split")
        self.rng_search = derive_rng(self.params.seed, "search")
        self.trace: list = []
        self.retries = 0
        self.deadline = None
        if self.params.time_limit is not None:
            self.deadline = time.monotonic() + self.params.time_limit

    @property
    def dim(self):
        return self.space.dim

    @property
    def evals(self):
        return self.oracle.eval_count - self.start_evals


def _solve(active, lower, upper, run: AnchorRun):
    lo, hi = np.array(lower, dtype=float), np.array(upper, dtype=float)
    act = list(active)
    a = run.anchor
    for attempt in range(run.params.max_retries + 1):
        try:
            return solve_restricted(active, lo, hi, a, run.oracle, run.params.solver_params(),
                                    run.scheduler, run.store, run.rng_search, run.deadline,
                                    run.trace)
        except PositivesTooRare:
            if attempt == run.params.max_retries:
                raise
            run.retries += 1
            lo[act] = 0.5 * (lo[act] + a[act])
            hi[act] = 0.5 * (hi[act] + a[act])


def find_anchor(active, lower, upper, run: AnchorRun):
    """Certified (lower, upper) for the features in ``active`` within [lower, upper]."""
    active = tuple(int(a) for a in active)
    if not active:
        raise ValueError("active feature set is empty")
    if len(active) == 1:
        return _solve(active, lower, upper, run)
    first, second = balanced_random_split(active, run.rng_split)
    l1, u1 = find_anchor(first, lower, upper, run)
    l2, u2 = find_anchor(second, lower, upper, run)
    merged = intersect(Box(l1, u1), Box(l2, u2))
    lo, hi = merged.lower.copy(), merged.upper.copy()
    for i in range(1, min(len(first), len(second)) + 1):
        lo, hi = _solve(first + second[:i], lo, hi, run)
        lo, hi = _solve(second + first[:i], lo, hi, run)
    return lo, hi


@dataclass
class GuaranteeReport:
    box: Box
    log10_volume: float
    evals: int
    tests_issued: int
    delta_spent: float
    purity_audit: dict
    per_feature_widths: list
    anchor: list
    config: dict = field(default_factory=dict)
    retries: int = 0
    wall_time: float = 0.0
    backend: str = kernels.BACKEND

    def to_dict(self):
        vol = self.log10_volume
        return {
            "box": self.box.to_dict(),
            "log10_volume": None if vol == float("-inf") else vol,
            "evals": self.evals,
            "tests_issued": self.tests_issued,
            "delta_spent": self.delta_spent,
            "purity_audit": self.purity_audit,
            "per_feature_widths": self.per_feature_widths,
            "anchor": self.anchor,
            "config": self.config,
            "retries": self.retries,
            "wall_time": self.wall_time,
            "backend": self.backend,
        }

    @classmethod
    def from_dict(cls, d):
        vol = d["log10_volume"]
        return cls(Box.from_dict(d["box"]), float("-inf") if vol is None else vol, d["evals"],
                   d["tests_issued"], d["delta_spent"], d["purity_audit"],
                   d["per_feature_widths"], d["anchor"], d.get("config", {}),
                   d.get("retries", 0), d.get("wall_time", 0.0), d.get("backend", ""))


def audit_purity(box: Box, oracle, n: int, rng) -> dict:
    """Monte-Carlo estimate of the faithful fraction of ``box``."""
    if n <= 0:
        return {"samples": 0, "fraction": None}
    labels = oracle.evaluate_many(box.sample(n, rng))
    return {"samples": int(n), "fraction": float(np.mean(labels))}


def run_to_report(run: AnchorRun, config: dict | None = None) -> GuaranteeReport:
    t0 = time.perf_counter()
    lo, hi = find_anchor(range(run.dim), run.space.lower, run.space.upper, run)
    box = Box(lo, hi)
    evals = run.evals
    wall = time.perf_counter() - t0
    audit = audit_purity(box, run.oracle, run.params.audit_samples,
                         derive_rng(run.params.seed, "audit"))
    cfg = {"params": run.params.to_dict(), "space": run.space.to_dict()}
    cfg.update(config or {})
    return GuaranteeReport(
        box=box,
        log10_volume=log10_volume(box),
        evals=evals,
        tests_issued=run.scheduler.tests_issued,
        delta_spent=run.scheduler.spent,
        purity_audit=audit,
        per_feature_widths=box.widths.tolist(),
        anchor=run.anchor.tolist(),
        config=cfg,
        retries=run.retries,
        wall_time=wall,
    )


def explain(anchor, space: Box, oracle, params: AnchorParams | None = None,
            config: dict | None = None) -> GuaranteeReport:
    """Build a run and return its report in one call."""
    return run_to_report(AnchorRun(anchor, space, oracle, params), config)
