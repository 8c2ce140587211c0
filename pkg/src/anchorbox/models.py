"""Black-box models f and local surrogates g.

Classifiers are called as ``model(X) -> (n, C) probabilities`` and
regressors as ``model(X) -> (n,) values``; faithfulness oracles only need
that calling convention.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .seeding import child_seed, derive_rng

SIGMA_GRID = 0.01 * 2.0 ** np.arange(15)
FAITHFUL_TARGET = 0.99


class SurrogateFitError(RuntimeError):
    pass


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


class LinearModel:
    """Affine model; ``link="logistic"`` gives softmax class probabilities."""

    def __init__(self, weights, bias, link="identity"):
        if link not in ("identity", "logistic"):
            raise ValueError(f"unknown link {link!r}")
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.link = link
        self.constant = False

    @property
    def task(self):
        return "classification" if self.link == "logistic" else "regression"

    @property
    def n_features(self):
        return self.weights.shape[0]

    def decision(self, X):
        return np.atleast_2d(X) @ self.weights + self.bias

    def predict_proba(self, X):
        if self.link != "logistic":
            raise TypeError("regression model has no class probabilities")
        return softmax(self.decision(X))

    def predict(self, X):
        if self.link == "logistic":
            return np.argmax(self.decision(X), axis=1)
        return self.decision(X)

    def __call__(self, X):
        return self.predict_proba(X) if self.link == "logistic" else self.predict(X)

    def to_dict(self):
        return {"type": "linear", "link": self.link, "weights": self.weights.tolist(),
                "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["weights"], d["bias"], d["link"])


class DecisionTree:
    """Array-encoded binary tree; go left when ``x[feature] <= threshold``.

    ``value`` holds class frequencies (classification) or a one-column
    mean (regression) per node.  ``feature == -1`` marks a leaf.
    """

    def __init__(self, feature, threshold, left, right, value, task="classification",
                 max_depth=None):
        self.feature = np.ascontiguousarray(feature, dtype=np.intp)
        self.threshold = np.ascontiguousarray(threshold, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.intp)
        self.right = np.ascontiguousarray(right, dtype=np.intp)
        self.value = np.asarray(value, dtype=np.float64).reshape(len(self.feature), -1)
        self.task = task
        self.max_depth = max_depth
        self.constant = len(self.feature) == 1

    @property
    def n_nodes(self):
        return len(self.feature)

    def depth(self):
        depth = {0: 0}
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[int(self.left[i])] = depth[i] + 1
                depth[int(self.right[i])] = depth[i] + 1
        return max(depth.values())

    def apply(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        roots = np.zeros(1, dtype=np.intp)
        return kernels.forest_apply(X, self.feature, self.threshold, self.left, self.right, roots)[:, 0]

    def predict_proba(self, X):
        if self.task != "classification":
            raise TypeError("regression tree has no class probabilities")
        return self.value[self.apply(X)]

    def predict(self, X):
        out = self.value[self.apply(X)]
        return np.argmax(out, axis=1) if self.task == "classification" else out[:, 0]

    def __call__(self, X):
        return self.predict_proba(X) if self.task == "classification" else self.predict(X)

    def to_dict(self):
        return {"type": "tree", "task": self.task, "max_depth": self.max_depth,
                "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"],
                   d.get("task", "classification"), d.get("max_depth"))


class RandomForest:
    """Mean of per-tree class frequencies."""

    def __init__(self, trees):
        self.trees = list(trees)
        self.n_classes = self.trees[0].value.shape[1]
        offsets = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]])
        self._roots = np.ascontiguousarray(offsets, dtype=np.intp)
        self._feature = np.concatenate([t.feature for t in self.trees])
        self._threshold = np.concatenate([t.threshold for t in self.trees])
        self._left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(self.trees, offsets)])
        self._right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(self.trees, offsets)])
        self._value = np.concatenate([t.value for t in self.trees])
        self.constant = all(t.constant for t in self.trees)

    @property
    def n_estimators(self):
        return len(self.trees)

    def predict_proba(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        leaves = kernels.forest_apply(X, self._feature, self._threshold, self._left,
                                      self._right, self._roots)
        out = np.zeros((len(X), self.n_classes))
        for t in range(leaves.shape[1]):
            out += self._value[leaves[:, t]]
        return out / leaves.shape[1]

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    __call__ = predict_proba
    task = "classification"

    def to_dict(self):
        return {"type": "forest", "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        return cls([DecisionTree.from_dict(t) for t in d["trees"]])


class MaskedModel:
    """Evaluates ``model`` with feature ``k`` pinned to ``value``."""

    def __init__(self, model, k: int, value: float):
        self.model = model
        self.k = int(k)
        self.value = float(value)

    @property
    def task(self):
        return getattr(self.model, "task", "classification")

    def _mask(self, X):
        X = np.array(np.atleast_2d(X), dtype=np.float64)
        if self.k >= X.shape[1]:
            raise IndexError(f"feature {self.k} out of range for {X.shape[1]}-d input")
        X[:, self.k] = self.value
        return X

    def __call__(self, X):
        return self.model(self._mask(X))

    def predict_proba(self, X):
        return self.model.predict_proba(self._mask(X))

    def predict(self, X):
        return self.model.predict(self._mask(X))

    def to_dict(self):
        return {"type": "masked", "k": self.k, "value": self.value, "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(model_from_dict(d["model"]), d["k"], d["value"])


def mask_feature(model, k: int, anchor) -> MaskedModel:
    anchor = np.asarray(anchor, dtype=np.float64)
    if not 0 <= k < len(anchor):
        raise IndexError(f"feature {k} out of range for {len(anchor)}-d anchor")
    return MaskedModel(model, k, anchor[k])


_TYPES = {"linear": LinearModel, "tree": DecisionTree, "forest": RandomForest, "masked": MaskedModel}


def model_from_dict(d):
    try:
        cls = _TYPES[d["type"]]
    except KeyError:
        raise ValueError(f"unknown model type {d.get('type')!r}") from None
    return cls.from_dict(d)


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


# -- training -----------------------------------------------------------------------

def _one_hot(y, n_classes):
    Y = np.zeros((len(y), n_classes))
    Y[np.arange(len(y)), y] = 1.0
    return Y


def _class_labels(y, n_classes):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError("labels must be a 1-d array")
    y = y.astype(np.intp)
    if np.any(y < 0):
        raise ValueError("class labels must be non-negative integers")
    n_classes = int(max(n_classes or 0, y.max() + 1 if len(y) else 1, 2))
    return y, n_classes


def train_logistic(X, y, n_classes=None, iterations=500, step=0.1, rng=None):
    """Softmax regression by full-batch gradient descent.

    ``y`` is either integer labels or an (n, C) array of soft targets.
    Columns are standardised internally and the weights folded back.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if y.ndim == 2:
        Y = y.astype(np.float64)
    else:
        labels, n_classes = _class_labels(y, n_classes)
        Y = _one_hot(labels, n_classes)
    n, D = X.shape
    C = Y.shape[1]
    if np.all(Y.max(axis=0) == Y.min(axis=0)) and y.ndim == 1:
        model = LinearModel(np.zeros((D, C)), np.where(Y[0] > 0, 0.0, -700.0), "logistic")
        model.constant = True
        return model
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    W = np.zeros((D, C))
    b = np.zeros(C)
    for _ in range(iterations):
        G = (softmax(Z @ W + b) - Y) / n
        W -= step * (Z.T @ G)
        b -= step * G.sum(axis=0)
    W_raw = W / sd[:, None]
    return LinearModel(W_raw, b - mu @ W_raw, "logistic")


def train_linear_regression(X, y):
    X = np.asarray(X, dtype=np.float64)
    A = np.hstack([X, np.ones((len(X), 1))])
    coef, *_ = np.linalg.lstsq(A, np.asarray(y, dtype=np.float64), rcond=None)
    return LinearModel(coef[:-1], coef[-1], "identity")


def _best_split(Xn, Yn, features):
    """Best (feature, threshold) maximising sum(left^2)/n_l + sum(right^2)/n_r.

    That score is the Gini gain for one-hot targets and the SSE reduction
    for a value column.
    """
    n = len(Xn)
    total = Yn.sum(axis=0)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    best_score, best = -np.inf, None
    for f in features:
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = np.cumsum(Yn[order], axis=0)[:-1]
        right = total - left
        score = (left**2).sum(axis=1) / nl + (right**2).sum(axis=1) / nr
        score[~valid] = -np.inf
        i = int(np.argmax(score))
        if score[i] > best_score:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not xs[i] <= thr < xs[i + 1]:
                thr = xs[i]
            best_score, best = score[i], (int(f), float(thr))
    return best


def _grow(X, Y, max_depth, max_features, rng, task):
    n, D = X.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    stack = [(new_node(), np.arange(n), 0)]
    while stack:
        nid, idx, depth = stack.pop()
        Ys = Y[idx]
        value[nid] = Ys.mean(axis=0)
        if len(idx) < 2 or (max_depth is not None and depth >= max_depth):
            continue
        if task == "classification":
            if Ys.sum(axis=0).max() == len(idx):
                continue
        elif np.ptp(Ys) == 0:
            continue
        if max_features is not None and max_features < D:
            perm = rng.permutation(D)
            split = _best_split(X[idx], Ys, perm[:max_features])
            if split is None:
                split = _best_split(X[idx], Ys, perm[max_features:])
        else:
            split = _best_split(X[idx], Ys, range(D))
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        lid, rid = new_node(), new_node()
        feature[nid], threshold[nid], left[nid], right[nid] = f, thr, lid, rid
        stack.append((rid, idx[~mask], depth + 1))
        stack.append((lid, idx[mask], depth + 1))
    return DecisionTree(feature, threshold, left, right, np.array(value), task, max_depth)


def train_tree(X, y, max_depth=3, rng=None, n_classes=None, task="classification",
               max_features=None):
    X = np.asarray(X, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    if task == "classification":
        labels, n_classes = _class_labels(y, n_classes)
        Y = _one_hot(labels, n_classes)
    else:
        Y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    return _grow(X, Y, max_depth, max_features, rng, task)


def train_forest(X, y, n_estimators=100, rng=None, n_classes=None, max_depth=None):
    """Bootstrap forest of Gini trees with ceil(sqrt(D)) candidate features per split."""
    X = np.asarray(X, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    labels, n_classes = _class_labels(y, n_classes)
    Y = _one_hot(labels, n_classes)
    n, D = X.shape
    max_features = math.ceil(math.sqrt(D))
    trees = []
    for _ in range(n_estimators):
        boot = rng.integers(0, n, n)
        trees.append(_grow(X[boot], Y[boot], max_depth, max_features, rng, "classification"))
    return RandomForest(trees)


# -- local surrogates ----------------------------------------------------------------

@dataclass
class SurrogateFit:
    surrogate: object
    sigma: float
    faithful_fraction: float
    seed: int
    fractions: dict = field(default_factory=dict)


def _fit_family(family, rule, X, fy, rng):
    if family not in ("linear", "tree"):
        raise ValueError(f"unknown surrogate family {family!r}")
    if rule.kind == "classification":
        if family == "linear":
            return train_logistic(X, fy)
        return train_tree(X, np.argmax(fy, axis=1), max_depth=3, rng=rng, n_classes=fy.shape[1])
    if family == "linear":
        return train_linear_regression(X, fy)
    return train_tree(X, fy, max_depth=3, rng=rng, task="regression")


def surrogate_at_sigma(f, anchor, family, rule, sigma, seed, n_train=1000, n_valid=1000):
    """Fit g on N(anchor, sigma^2 I) and return (g, validation faithful fraction, faithful at anchor)."""
    anchor = np.asarray(anchor, dtype=np.float64)
    rng = derive_rng(seed, "surrogate", f"{sigma:.10g}")
    Xt = anchor + sigma * rng.standard_normal((n_train, len(anchor)))
    g = _fit_family(family, rule, Xt, np.asarray(f(Xt)), rng)
    Xv = anchor + sigma * rng.standard_normal((n_valid, len(anchor)))
    frac = float(np.mean(rule.agree(f(Xv), g(Xv))))
    at_anchor = bool(rule.agree(f(anchor[None, :]), g(anchor[None, :]))[0])
    return g, frac, at_anchor


def fit_surrogate(f, anchor, family, rule, rng, grid=SIGMA_GRID, n_train=1000, n_valid=1000):
    """Largest grid sigma whose surrogate is faithful on >= 99% of fresh samples."""
    seed = child_seed(rng)
    best = None
    fractions = {}
    for sigma in grid:
        g, frac, at_anchor = surrogate_at_sigma(f, anchor, family, rule, float(sigma), seed, n_train, n_valid)
        fractions[float(sigma)] = frac
        if frac >= FAITHFUL_TARGET and at_anchor:
            best = (float(sigma), g, frac)
    if best is None:
        raise SurrogateFitError(
            f"no sigma in [{grid[0]:g}, {grid[-1]:g}] gives a surrogate faithful on "
            f"{FAITHFUL_TARGET:.0%} of samples and at the anchor; use a smaller base sigma")
    sigma, g, frac = best
    return SurrogateFit(g, sigma, frac, seed, fractions)
