"""Anchor-constrained maximum box search.

Finds a box that contains the anchor, lies inside the search space, has
no negative point strictly inside it, and holds as many positive points
as possible.  The search is a best-bound-first branch and bound over
pairs (mandatory box, allowed box): every solution of a node contains the
mandatory box and lies inside the allowed box.  A greedy dive supplies the
first incumbent, and its steps count against ``node_budget``.  After
``node_budget`` processed nodes the best box found so far is returned.  The result is
then pushed outward until each side touches a negative point or the
search space.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Box, as_point

EXPANSION_ORDERS = ("largest_gain_first", "random")


@dataclass
class MaxBoxResult:
    box: Box
    positives: int  # positives inside the box before expansion
    nodes: int
    complete: bool  # search tree exhausted within the budget


def _as_points(pts, dim):
    arr = np.ascontiguousarray(pts, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, dim))
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"points must have shape (n, {dim}), got {arr.shape}")
    return arr


def _active(active, dim):
    act = np.ascontiguousarray(range(dim) if active is None else list(active), dtype=np.intp)
    if len(act) == 0 or len(set(act.tolist())) != len(act) or act.min() < 0 or act.max() >= dim:
        raise ValueError(f"invalid active feature set {act.tolist()}")
    return act


def _log_volume(lo, hi, act):
    w = hi[act] - lo[act]
    if np.any(w <= 0):
        return -math.inf
    return float(np.sum(np.log10(w)))


def search_max_box(positives, negatives, anchor, space: Box, active=None, node_budget=math.inf,
                   order="largest_gain_first", rng=None, expand=True) -> MaxBoxResult:
    if not node_budget > 0:
        raise ValueError(f"node budget must be positive, got {node_budget}")
    D = space.dim
    anchor = as_point(anchor, D)
    if not space.contains(anchor):
        raise ValueError("anchor lies outside the search space")
    act = _active(active, D)
    pos = _as_points(positives, D)
    neg = _as_points(negatives, D)
    if len(neg) and np.any(np.all(neg[:, act] == anchor[act], axis=1)):
        raise ValueError("a negative point coincides with the anchor")

    slo, shi = space.lower, space.upper
    widths = shi - slo
    inv_scale = np.where(widths > 0, 1.0 / np.where(widths > 0, widths, 1.0), 1.0)
    pos_idx = kernels.filter_closed(pos, np.arange(len(pos), dtype=np.intp), slo, shi, act)
    neg_idx = kernels.filter_open(neg, np.arange(len(neg), dtype=np.intp), slo, shi, act)

    best_lo, best_hi = anchor.copy(), anchor.copy()
    best_count = len(kernels.filter_closed(pos, pos_idx, anchor, anchor, act))

    # greedy dive for a first incumbent: cut the nearest negative on the side
    # that keeps the most positives (then the most volume)
    nodes = 0
    a_lo, a_hi, p_idx, n_idx = slo.copy(), shi.copy(), pos_idx, neg_idx
    while len(n_idx):
        nodes += 1
        q = neg[kernels.nearest_index(neg, n_idx, anchor, inv_scale, act)]
        pick = None
        for d in act:
            for up in (True, False):
                if (up and q[d] < anchor[d]) or (not up and q[d] > anchor[d]):
                    continue
                c_lo, c_hi = a_lo.copy(), a_hi.copy()
                if up:
                    c_hi[d] = q[d]
                else:
                    c_lo[d] = q[d]
                cp = kernels.filter_closed(pos, p_idx, c_lo, c_hi, act)
                score = (len(cp), _log_volume(c_lo, c_hi, act))
                if pick is None or score > pick[0]:
                    pick = (score, c_lo, c_hi, cp)
        _, a_lo, a_hi, p_idx = pick
        n_idx = kernels.filter_open(neg, n_idx, a_lo, a_hi, act)
    if len(p_idx) > best_count:
        best_count, best_lo, best_hi = len(p_idx), a_lo, a_hi

    heap = []
    tick = itertools.count()

    def push(m_lo, m_hi, a_lo, a_hi, p_idx, n_idx):
        bound = len(p_idx)
        if bound > best_count:
            key = (-bound, -_log_volume(a_lo, a_hi, act), next(tick))
            heapq.heappush(heap, (key, (m_lo, m_hi, a_lo, a_hi, p_idx, n_idx)))

    push(anchor.copy(), anchor.copy(), slo.copy(), shi.copy(), pos_idx, neg_idx)
    while heap and nodes < node_budget:
        key, node = heapq.heappop(heap)
        if -key[0] <= best_count:
            heap.clear()
            break
        nodes += 1
        m_lo, m_hi, a_lo, a_hi, p_idx, n_idx = node
        if len(n_idx) == 0:
            best_count = len(p_idx)
            best_lo, best_hi = a_lo, a_hi
            continue
        q = neg[kernels.nearest_index(neg, n_idx, anchor, inv_scale, act)]
        # each child excludes q through one side; earlier options are negated
        # in later siblings by growing the mandatory box
        cur_lo, cur_hi = m_lo.copy(), m_hi.copy()
        for d in act:
            for up in (True, False):
                if up and q[d] < m_hi[d]:
                    continue
                if not up and q[d] > m_lo[d]:
                    continue
                c_lo, c_hi = a_lo.copy(), a_hi.copy()
                if up:
                    c_hi[d] = q[d]
                else:
                    c_lo[d] = q[d]
                if np.all(c_lo[act] <= cur_lo[act]) and np.all(cur_hi[act] <= c_hi[act]):
                    cp = kernels.filter_closed(pos, p_idx, c_lo, c_hi, act)
                    cn = kernels.filter_open(neg, n_idx, c_lo, c_hi, act)
                    push(cur_lo.copy(), cur_hi.copy(), c_lo, c_hi, cp, cn)
                if up:
                    cur_hi[d] = max(cur_hi[d], q[d])
                else:
                    cur_lo[d] = min(cur_lo[d], q[d])

    lo = slo.copy()
    hi = shi.copy()
    lo[act] = best_lo[act]
    hi[act] = best_hi[act]
    box = Box(lo, hi)
    if expand:
        box = expand_box(box, neg, space, act, order, rng)
    return MaxBoxResult(box, best_count, nodes, not heap)


def find_max_box(positives, negatives, anchor, space: Box, active=None, node_budget=math.inf,
                 order="largest_gain_first", rng=None) -> Box:
    return search_max_box(positives, negatives, anchor, space, active, node_budget, order, rng).box


def negatives_inside(box: Box, negatives, active=None) -> np.ndarray:
    """Negatives strictly inside ``box`` on the active dimensions."""
    act = _active(active, box.dim)
    neg = _as_points(negatives, box.dim)
    idx = np.arange(len(neg), dtype=np.intp)
    return neg[kernels.filter_open(neg, idx, box.lower, box.upper, act)]


def expand_box(box: Box, negatives, space: Box, active=None, order="largest_gain_first",
               rng=None) -> Box:
    """Push every side outward to the nearest blocking negative or the space bound.

    ``largest_gain_first`` moves, at each step, the side giving the largest
    relative volume increase; ``random`` moves sides in a random order.
    """
    if order not in EXPANSION_ORDERS:
        raise ValueError(f"unknown expansion order {order!r}")
    act = _active(active, box.dim)
    neg = _as_points(negatives, box.dim)
    if np.any(box.lower[act] < space.lower[act]) or np.any(box.upper[act] > space.upper[act]):
        raise ValueError("box is not inside the search space")
    if len(negatives_inside(box, neg, act)):
        raise ValueError("box has a negative point in its interior")
    idx = np.arange(len(neg), dtype=np.intp)
    negs = np.ascontiguousarray(neg[kernels.filter_open(neg, idx, space.lower, space.upper, act)])
    sides = np.arange(2 * len(act), dtype=np.intp)
    if order == "random":
        rng = rng if rng is not None else np.random.default_rng()
        sides = np.ascontiguousarray(rng.permutation(sides), dtype=np.intp)
    lo, hi = kernels.expand_box(box.lower, box.upper, negs, space.lower, space.upper, act,
                                sides, order == "largest_gain_first")
    return Box(lo, hi)
