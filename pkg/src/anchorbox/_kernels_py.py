"""Pure numpy versions of the compiled kernels (same signatures, same results)."""
import numpy as np


def filter_closed(pts, idx, lo, hi, act):
    if len(idx) == 0:
        return np.asarray(idx, dtype=np.intp)
    sub = pts[np.ix_(idx, act)]
    mask = np.all((sub >= lo[act]) & (sub <= hi[act]), axis=1)
    return np.asarray(idx, dtype=np.intp)[mask]


def filter_open(pts, idx, lo, hi, act):
    if len(idx) == 0:
        return np.asarray(idx, dtype=np.intp)
    sub = pts[np.ix_(idx, act)]
    mask = np.all((sub > lo[act]) & (sub < hi[act]), axis=1)
    return np.asarray(idx, dtype=np.intp)[mask]


def nearest_index(pts, idx, anchor, inv_scale, act):
    if len(idx) == 0:
        return -1
    diff = (pts[np.ix_(idx, act)] - anchor[act]) * inv_scale[act]
    dist = np.einsum("ij,ij->i", diff, diff)
    return int(idx[int(np.argmin(dist))])


def _side_target(negs, lo, hi, space_lo, space_hi, act, j, up):
    d = act[j]
    target = space_hi[d] if up else space_lo[d]
    if len(negs) == 0:
        return target
    others = np.delete(act, j)
    sub = negs[:, others]
    inside = np.all((sub > lo[others]) & (sub < hi[others]), axis=1)
    v = negs[:, d]
    if up:
        cand = v[inside & (v >= hi[d]) & (v > lo[d]) & (v < target)]
        return cand.min() if len(cand) else target
    cand = v[inside & (v <= lo[d]) & (v < hi[d]) & (v > target)]
    return cand.max() if len(cand) else target


def expand_box(lo_in, hi_in, negs, space_lo, space_hi, act, sides, greedy):
    lo = np.array(lo_in, dtype=np.float64)
    hi = np.array(hi_in, dtype=np.float64)
    sides = [int(s) for s in sides]
    if not greedy:
        for s in sides:
            j, up = divmod(s, 2)
            t = _side_target(negs, lo, hi, space_lo, space_hi, act, j, up)
            if up:
                hi[act[j]] = t
            else:
                lo[act[j]] = t
        return lo, hi
    remaining = list(sides)
    while remaining:
        best = None
        for s in remaining:
            j, up = divmod(s, 2)
            d = act[j]
            t = _side_target(negs, lo, hi, space_lo, space_hi, act, j, up)
            delta = t - hi[d] if up else lo[d] - t
            width = hi[d] - lo[d]
            if delta <= 0.0:
                gain = 0.0
            elif width > 0.0:
                gain = delta / width
            else:
                gain = np.inf
            if best is None or gain > best[0] or (gain == best[0] and delta > best[1]):
                best = (gain, delta, t, s)
        _, _, t, s = best
        remaining.remove(s)
        j, up = divmod(s, 2)
        if up:
            hi[act[j]] = t
        else:
            lo[act[j]] = t
    return lo, hi


def forest_apply(X, feature, threshold, left, right, roots):
    n = X.shape[0]
    out = np.empty((n, len(roots)), dtype=np.intp)
    rows = np.arange(n)
    for t, root in enumerate(roots):
        node = np.full(n, root, dtype=np.intp)
        f = feature[node]
        active = f >= 0
        while active.any():
            r = rows[active]
            nd = node[active]
            go_left = X[r, f[active]] <= threshold[nd]
            node[active] = np.where(go_left, left[nd], right[nd])
            f = feature[node]
            active = f >= 0
        out[:, t] = node
    return out
