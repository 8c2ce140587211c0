# cython: language_level=3
"""Compiled inner loops for the max-box search, box expansion and tree
ensembles.  ``_kernels_py`` holds the reference numpy versions; both must
return identical results."""
import numpy as np

from libc.math cimport INFINITY


def filter_closed(const double[:, ::1] pts, const Py_ssize_t[::1] idx,
                  const double[::1] lo, const double[::1] hi,
                  const Py_ssize_t[::1] act):
    cdef Py_ssize_t n = idx.shape[0], na = act.shape[0]
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    cdef Py_ssize_t i, j, p, d, k = 0
    cdef double v
    cdef bint ok
    for i in range(n):
        p = idx[i]
        ok = True
        for j in range(na):
            d = act[j]
            v = pts[p, d]
            if v < lo[d] or v > hi[d]:
                ok = False
                break
        if ok:
            o[k] = p
            k += 1
    return out[:k]


def filter_open(const double[:, ::1] pts, const Py_ssize_t[::1] idx,
                const double[::1] lo, const double[::1] hi,
                const Py_ssize_t[::1] act):
    cdef Py_ssize_t n = idx.shape[0], na = act.shape[0]
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    cdef Py_ssize_t i, j, p, d, k = 0
    cdef double v
    cdef bint ok
    for i in range(n):
        p = idx[i]
        ok = True
        for j in range(na):
            d = act[j]
            v = pts[p, d]
            if v <= lo[d] or v >= hi[d]:
                ok = False
                break
        if ok:
            o[k] = p
            k += 1
    return out[:k]


def nearest_index(const double[:, ::1] pts, const Py_ssize_t[::1] idx,
                  const double[::1] anchor, const double[::1] inv_scale,
                  const Py_ssize_t[::1] act):
    cdef Py_ssize_t n = idx.shape[0], na = act.shape[0]
    cdef Py_ssize_t i, j, d, p, best = -1
    cdef double dist, t, best_dist = INFINITY
    for i in range(n):
        p = idx[i]
        dist = 0.0
        for j in range(na):
            d = act[j]
            t = (pts[p, d] - anchor[d]) * inv_scale[d]
            dist += t * t
        if dist < best_dist:
            best_dist = dist
            best = p
    return best


cdef double _side_target(const double[:, ::1] negs, double[::1] lo, double[::1] hi,
                         const double[::1] space_lo, const double[::1] space_hi,
                         const Py_ssize_t[::1] act, Py_ssize_t j, int up) nogil:
    cdef Py_ssize_t n = negs.shape[0], na = act.shape[0]
    cdef Py_ssize_t i, jj, e, d = act[j]
    cdef double target, v
    cdef bint inside
    if up:
        target = space_hi[d]
    else:
        target = space_lo[d]
    for i in range(n):
        v = negs[i, d]
        if up:
            if v < hi[d] or v <= lo[d] or v >= target:
                continue
        else:
            if v > lo[d] or v >= hi[d] or v <= target:
                continue
        inside = True
        for jj in range(na):
            if jj == j:
                continue
            e = act[jj]
            if negs[i, e] <= lo[e] or negs[i, e] >= hi[e]:
                inside = False
                break
        if inside:
            target = v
    return target


def expand_box(const double[::1] lo_in, const double[::1] hi_in,
               const double[:, ::1] negs,
               const double[::1] space_lo, const double[::1] space_hi,
               const Py_ssize_t[::1] act, const Py_ssize_t[::1] sides,
               bint greedy):
    lo_arr = np.array(lo_in, dtype=np.float64)
    hi_arr = np.array(hi_in, dtype=np.float64)
    cdef double[::1] lo = lo_arr
    cdef double[::1] hi = hi_arr
    cdef Py_ssize_t ns = sides.shape[0]
    done_arr = np.zeros(ns, dtype=np.uint8)
    cdef unsigned char[::1] done = done_arr
    cdef Py_ssize_t step, s, j, d, pick
    cdef int up
    cdef double target, width, gain, delta, best_gain, best_delta, best_target
    if not greedy:
        for s in range(ns):
            j = sides[s] // 2
            up = sides[s] % 2
            d = act[j]
            target = _side_target(negs, lo, hi, space_lo, space_hi, act, j, up)
            if up:
                hi[d] = target
            else:
                lo[d] = target
        return lo_arr, hi_arr
    for step in range(ns):
        pick = -1
        best_gain = -1.0
        best_delta = -1.0
        best_target = 0.0
        for s in range(ns):
            if done[s]:
                continue
            j = sides[s] // 2
            up = sides[s] % 2
            d = act[j]
            target = _side_target(negs, lo, hi, space_lo, space_hi, act, j, up)
            if up:
                delta = target - hi[d]
            else:
                delta = lo[d] - target
            width = hi[d] - lo[d]
            if delta <= 0.0:
                gain = 0.0
            elif width > 0.0:
                gain = delta / width
            else:
                gain = INFINITY
            if gain > best_gain or (gain == best_gain and delta > best_delta):
                best_gain = gain
                best_delta = delta
                best_target = target
                pick = s
        if pick < 0:
            break
        done[pick] = 1
        j = sides[pick] // 2
        d = act[j]
        if sides[pick] % 2:
            hi[d] = best_target
        else:
            lo[d] = best_target
    return lo_arr, hi_arr


def forest_apply(const double[:, ::1] X, const Py_ssize_t[::1] feature,
                 const double[::1] threshold, const Py_ssize_t[::1] left,
                 const Py_ssize_t[::1] right, const Py_ssize_t[::1] roots):
    cdef Py_ssize_t n = X.shape[0], nt = roots.shape[0]
    out = np.empty((n, nt), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] o = out
    cdef Py_ssize_t i, t, node, f
    with nogil:
        for i in range(n):
            for t in range(nt):
                node = roots[t]
                f = feature[node]
                while f >= 0:
                    if X[i, f] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                    f = feature[node]
                o[i, t] = node
    return out
