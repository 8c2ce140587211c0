import numpy as np
import pytest

from anchorbox import _kernels_py, kernels

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
KERNEL_NAMES = ("filter_closed", "filter_open", "nearest_index", "expand_box", "forest_apply")


@pytest.fixture(params=BACKENDS)
def kernel_backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    mod = kernels.backend(request.param)
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_max_box(pos, neg, anchor, lo, hi):
    """Best positive count over boxes whose sides sit on the anchor or on positives.

    An optimal box can always be shrunk onto such coordinates without losing
    a positive or letting a negative in, so this enumeration is exact.
    """
    import itertools

    D = len(anchor)
    pos = pos[np.all((pos >= lo) & (pos <= hi), axis=1)] if len(pos) else pos
    lows = [sorted({anchor[d]} | {p[d] for p in pos if p[d] <= anchor[d]}) for d in range(D)]
    highs = [sorted({anchor[d]} | {p[d] for p in pos if p[d] >= anchor[d]}) for d in range(D)]
    best = -1
    for bl in itertools.product(*lows):
        for bh in itertools.product(*highs):
            bl_a, bh_a = np.array(bl), np.array(bh)
            if len(neg) and np.any(np.all((neg > bl_a) & (neg < bh_a), axis=1)):
                continue
            n = int(np.sum(np.all((pos >= bl_a) & (pos <= bh_a), axis=1))) if len(pos) else 0
            best = max(best, n)
    return best


_CRITERIA: list = []


@pytest.fixture
def criterion():
    """Record one pass/fail line; the assertion stays with the caller."""
    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
