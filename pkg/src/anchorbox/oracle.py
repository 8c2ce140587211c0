"""Faithfulness oracles e(x) in {0, 1}.

Every oracle counts the points it labels; ``eval_count`` is the
efficiency metric reported by the experiments.
"""
from __future__ import annotations

import itertools
import json
import queue
import shlex
import subprocess
import threading
from math import comb
from typing import Callable

import numpy as np


class OracleError(RuntimeError):
    pass


class ProtocolError(OracleError):
    """Bad exchange with a child-process oracle; carries the raw lines."""

    def __init__(self, message, request=None, response=None):
        super().__init__(f"{message} (request={request!r}, response={response!r})")
        self.request = request
        self.response = response


class FaithfulnessOracle:
    """Base class.  Subclasses implement ``_label(X) -> bool array``."""

    dim: int | None = None

    def __init__(self):
        self.eval_count = 0
        self._lock = threading.Lock()

    def _label(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.dim is not None and X.shape[1] != self.dim:
            raise OracleError(f"expected {self.dim}-d points, got {X.shape[1]}-d")
        if len(X) == 0:
            return np.zeros(0, dtype=np.int8)
        out = np.asarray(self._label(X)).astype(np.int8)
        with self._lock:
            self.eval_count += len(X)
        return out

    def evaluate(self, x) -> int:
        return int(self.evaluate_many(np.asarray(x, dtype=np.float64)[None, :])[0])

    def __call__(self, x) -> int:
        return self.evaluate(x)


def evaluate_counted(oracle: FaithfulnessOracle, x) -> int:
    return oracle.evaluate(x)


class PredicateOracle(FaithfulnessOracle):
    """Wrap a vectorised predicate ``fn(X) -> bool array``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int | None = None):
        super().__init__()
        self.fn = fn
        self.dim = dim

    def _label(self, X):
        return self.fn(X)


class ConstantOracle(FaithfulnessOracle):
    def __init__(self, value: int = 1, dim: int | None = None):
        super().__init__()
        self.value = int(bool(value))
        self.dim = dim

    def _label(self, X):
        return np.full(len(X), self.value, dtype=bool)


class IntervalOracle(FaithfulnessOracle):
    """1 iff |x_d - center| < half_width on one coordinate (a 1-D test oracle)."""

    def __init__(self, half_width: float = 0.5, center: float = 0.0, dim: int = 1, axis: int = 0):
        super().__init__()
        self.half_width = half_width
        self.center = center
        self.dim = dim
        self.axis = axis

    def _label(self, X):
        return np.abs(X[:, self.axis] - self.center) < self.half_width

    def purity(self, lower, upper) -> float:
        """Exact fraction of [lower, upper] (along ``axis``) that is faithful."""
        lo, hi = float(lower[self.axis]), float(upper[self.axis])
        if hi <= lo:
            return float(abs(0.5 * (lo + hi) - self.center) < self.half_width)
        inside = max(0.0, min(hi, self.center + self.half_width) - max(lo, self.center - self.half_width))
        return inside / (hi - lo)


# -- model-vs-surrogate rules ------------------------------------------------

def _check_finite(arr, what):
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise OracleError(f"non-finite {what} output")
    return arr


class RegressionRule:
    kind = "regression"

    def __init__(self, epsilon: float):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.epsilon = float(epsilon)

    def agree(self, fy, gy) -> np.ndarray:
        return np.abs(np.ravel(fy) - np.ravel(gy)) < self.epsilon

    def to_dict(self):
        return {"kind": self.kind, "epsilon": self.epsilon}


class ClassificationRule:
    """Same predicted class, or confidence on f's class within ``tolerance``."""

    kind = "classification"

    def __init__(self, tolerance: float = 0.10):
        if not 0 < tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        self.tolerance = float(tolerance)

    def agree(self, fp, gp) -> np.ndarray:
        fp = np.atleast_2d(fp)
        gp = np.atleast_2d(gp)
        cf = np.argmax(fp, axis=1)
        cg = np.argmax(gp, axis=1)
        rows = np.arange(len(fp))
        close = np.abs(fp[rows, cf] - gp[rows, cf]) < self.tolerance
        return (cf == cg) | close

    def to_dict(self):
        return {"kind": self.kind, "tolerance": self.tolerance}


def rule_from_dict(d):
    if d["kind"] == "regression":
        return RegressionRule(d["epsilon"])
    return ClassificationRule(d.get("tolerance", 0.10))


class ModelFaithfulness(FaithfulnessOracle):
    """e(x) = rule.agree(f(x), g(x)) for callables f, g mapping X to outputs."""

    def __init__(self, f, g, rule, dim: int | None = None):
        super().__init__()
        self.f = f
        self.g = g
        self.rule = rule
        self.dim = dim

    def _label(self, X):
        fy = _check_finite(self.f(X), "model")
        gy = _check_finite(self.g(X), "surrogate")
        return self.rule.agree(fy, gy)


def RegressionFaithfulness(f, g, epsilon: float, dim: int | None = None) -> ModelFaithfulness:
    return ModelFaithfulness(f, g, RegressionRule(epsilon), dim)


def ClassificationFaithfulness(f, g, tolerance: float = 0.10, dim: int | None = None) -> ModelFaithfulness:
    return ModelFaithfulness(f, g, ClassificationRule(tolerance), dim)


# -- synthetic oracles ---------------------------------------------------------

def half_l1_ball(D: int, x) -> int:
    """1 iff the L1 norm of the first D/2 coordinates is below D/4."""
    if D % 2:
        raise ValueError(f"dimension must be even, got {D}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != D:
        raise ValueError(f"expected {D} coordinates, got {x.shape[-1]}")
    return int(np.sum(np.abs(x[: D // 2])) < D / 4)


class HalfL1Ball(FaithfulnessOracle):
    def __init__(self, dim: int):
        super().__init__()
        if dim % 2:
            raise ValueError(f"dimension must be even, got {dim}")
        self.dim = dim

    def _label(self, X):
        return np.sum(np.abs(X[:, : self.dim // 2]), axis=1) < self.dim / 4

    def optimal_log10_volume(self, lower, upper) -> float:
        """Largest pure box around the origin inside [lower, upper] (rho = 1).

        The constrained half is the inscribed cube of the L1 ball (side
        2 * radius / n); free dimensions take the whole bounding range.
        Bounds must contain that cube.
        """
        h = self.dim // 2
        half_side = (self.dim / 4) / h
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if np.any(lo[:h] > -half_side) or np.any(hi[:h] < half_side):
            raise ValueError("bounds must contain the inscribed cube of the L1 ball")
        return float(h * np.log10(2 * half_side) + np.sum(np.log10(hi[h:] - lo[h:])))


class AdversarialFamily:
    """The hard family e_0, e_1..e_K behind the exponential lower bound.

    Subsets are 0-based here: S_k is the k-th ``itertools.combinations``
    of size floor(D/2), for k = 1..K.
    """

    def __init__(self, dim: int, ratio: float = 0.5):
        if not 0 < ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        self.dim = dim
        self.ratio = ratio
        self.half = dim // 2
        self.K = comb(dim, self.half)
        masks = np.zeros((self.K, dim), dtype=bool)
        for k, s in enumerate(itertools.combinations(range(dim), self.half)):
            masks[k, list(s)] = True
        self.subset_masks = masks

    def subset(self, k: int) -> tuple[int, ...]:
        self._check(k)
        if k == 0:
            return ()
        return tuple(np.flatnonzero(self.subset_masks[k - 1]).tolist())

    def _check(self, k):
        if not 0 <= k <= self.K:
            raise IndexError(f"member index {k} outside 0..{self.K}")

    def base(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        in_cube = np.all((X >= 0) & (X <= 1), axis=1)
        # strictly above the ratio, so a point on x_d == ratio cannot tell
        # several members apart
        high = np.sum(X > self.ratio, axis=1)
        return in_cube & (high <= self.half - 1)

    def member(self, k: int, X) -> np.ndarray:
        self._check(k)
        X = np.atleast_2d(X)
        e0 = self.base(X)
        if k == 0:
            return e0
        m = self.subset_masks[k - 1]
        inside = np.all(np.where(m, (X >= 0) & (X <= 1), (X >= 0) & (X <= self.ratio)), axis=1)
        return e0 | inside

    def all_members(self, X) -> np.ndarray:
        """(K + 1, n) table of every member's labels."""
        return np.stack([self.member(k, X) for k in range(self.K + 1)])

    def oracle(self, k: int) -> PredicateOracle:
        self._check(k)
        return PredicateOracle(lambda X: self.member(k, X), dim=self.dim)


def adversarial_member(fam: AdversarialFamily, k: int, x) -> int:
    return int(fam.member(k, np.asarray(x, dtype=np.float64))[0])


# -- child-process oracles -------------------------------------------------------

class ChildProcess:
    """Line-delimited JSON round trips with a child over stdin/stdout."""

    def __init__(self, command, timeout: float = 30.0):
        args = shlex.split(command) if isinstance(command, str) else list(command)
        self.command = command
        self.timeout = timeout
        self.proc = subprocess.Popen(
            args, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True,
            encoding="utf-8", bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._io_lock = threading.Lock()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, payload: dict) -> dict:
        line = json.dumps(payload)
        with self._io_lock:
            try:
                self.proc.stdin.write(line + "\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError) as exc:
                raise ProtocolError(f"child process not accepting input: {exc}", line) from None
            try:
                raw = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise ProtocolError(f"no response within {self.timeout}s", line) from None
        if raw is None:
            raise ProtocolError(f"child exited (code {self.proc.poll()})", line)
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            raise ProtocolError("malformed response", line, raw) from None
        if not isinstance(msg, dict):
            raise ProtocolError("response is not an object", line, raw)
        msg["_raw"] = raw
        return msg

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class ExternalOracle(FaithfulnessOracle):
    """Predicate served by a child process: ``{"x": [...]}`` -> ``{"e": 0|1}``."""

    def __init__(self, command, dim: int | None = None, timeout: float = 30.0):
        super().__init__()
        self.dim = dim
        self.child = ChildProcess(command, timeout)

    def evaluate_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.dim is not None and X.shape[1] != self.dim:
            raise OracleError(f"expected {self.dim}-d points, got {X.shape[1]}-d")
        out = np.empty(len(X), dtype=np.int8)
        for i, x in enumerate(X):
            msg = self.child.request({"x": x.tolist()})
            e = msg.get("e")
            if isinstance(e, bool) or e not in (0, 1):
                raise ProtocolError("response 'e' must be 0 or 1", {"x": x.tolist()}, msg["_raw"])
            out[i] = e
            with self._lock:
                self.eval_count += 1
        return out

    def close(self):
        self.child.close()


class ExternalModel:
    """A raw probability model served by a child: ``{"x": [...]}`` -> ``{"probs": [...]}``."""

    def __init__(self, command, timeout: float = 30.0):
        self.child = ChildProcess(command, timeout)

    def predict_proba(self, X) -> np.ndarray:
        rows = []
        for x in np.atleast_2d(np.asarray(X, dtype=np.float64)):
            msg = self.child.request({"x": x.tolist()})
            probs = msg.get("probs")
            if not isinstance(probs, list) or not probs:
                raise ProtocolError("response lacks 'probs' list", {"x": x.tolist()}, msg["_raw"])
            rows.append(probs)
        return np.asarray(rows, dtype=np.float64)

    __call__ = predict_proba

    def close(self):
        self.child.close()


def spawn_external_oracle(command, dim: int | None = None, timeout: float = 30.0) -> ExternalOracle:
    return ExternalOracle(command, dim=dim, timeout=timeout)
