"""Small axis-aligned decision trees and the two ensembles built from them.

Trees are stored as flat node arrays. Splits are found by exhaustive search
over midpoints between consecutive distinct feature values; a sample goes
left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

BAGGING = "bagging"
GRADIENT_BOOSTING = "gradient_boosting"
ALGORITHMS = (BAGGING, GRADIENT_BOOSTING)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                break
            a = rows[active]
            n = node[a]
            go_left = X[a, f[active]] <= self.threshold[n]
            node[a] = np.where(go_left, self.left[n], self.right[n])
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )


def feature_ranks(X: np.ndarray) -> np.ndarray:
    """Stable per-feature rank of every row, shape (n, d)."""
    X = np.asarray(X, dtype=np.float64)
    ranks = np.empty(X.shape, dtype=np.int64)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        ranks[order, f] = np.arange(len(X))
    return ranks


@njit(cache=True)
def _fit_kernel(X, y, sample, ranks, max_depth, use_gini, min_samples_leaf):
    # X, y, ranks describe the full dataset; sample lists the rows (with
    # repeats) this tree is fitted on
    n_all, d = X.shape
    n = sample.shape[0]
    max_nodes = 2 ** (max_depth + 1) - 1 if max_depth < 20 else 2 * n + 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)

    # sorted[f, start:end] lists the node's samples ordered by feature f
    sorted_idx = np.empty((d, n), dtype=np.int64)
    counts = np.zeros(n_all + 1, dtype=np.int64)
    for f in range(d):
        counts[:] = 0
        for i in range(n):
            counts[ranks[sample[i], f] + 1] += 1
        for r in range(n_all):
            counts[r + 1] += counts[r]
        for i in range(n):
            r = ranks[sample[i], f]
            sorted_idx[f, counts[r]] = sample[i]
            counts[r] += 1
    in_left = np.zeros(n_all, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)

    st_node = np.empty(max_nodes, dtype=np.int64)
    st_start = np.empty(max_nodes, dtype=np.int64)
    st_end = np.empty(max_nodes, dtype=np.int64)
    st_depth = np.empty(max_nodes, dtype=np.int64)
    top = 0
    n_nodes = 1
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        m = end - start
        total = 0.0
        lo = np.inf
        hi = -np.inf
        for i in range(start, end):
            v = y[sorted_idx[0, i]]
            total += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        value[node] = total / m
        if depth >= max_depth or m < 2 * min_samples_leaf or lo == hi:
            continue
        best_score = -np.inf
        best_f = -1
        best_k = -1
        best_thr = 0.0
        for f in range(d):
            f_best = -np.inf
            f_k = -1
            cs = 0.0
            for k in range(m - 1):
                a = sorted_idx[f, start + k]
                b = sorted_idx[f, start + k + 1]
                cs += y[a]
                nl = k + 1.0
                if nl < min_samples_leaf or m - nl < min_samples_leaf:
                    continue
                if not X[a, f] < X[b, f]:
                    continue
                nr = m - nl
                sr = total - cs
                if use_gini:
                    score = (cs * cs + (nl - cs) * (nl - cs)) / nl + (sr * sr + (nr - sr) * (nr - sr)) / nr
                else:
                    score = cs * cs / nl + sr * sr / nr
                if score > f_best:
                    f_best = score
                    f_k = k
            if f_k >= 0 and f_best > best_score + 1e-12:
                best_score = f_best
                best_f = f
                best_k = f_k
                xa = X[sorted_idx[f, start + f_k], f]
                xb = X[sorted_idx[f, start + f_k + 1], f]
                best_thr = (xa + xb) / 2.0
                if best_thr >= xb:
                    best_thr = xa
        if best_f < 0:
            continue
        nl = best_k + 1
        for i in range(start, end):
            in_left[sorted_idx[best_f, i]] = i < start + nl
        for f in range(d):
            a = 0
            for i in range(start, end):
                s = sorted_idx[f, i]
                if in_left[s]:
                    buf[a] = s
                    a += 1
            for i in range(start, end):
                s = sorted_idx[f, i]
                if not in_left[s]:
                    buf[a] = s
                    a += 1
            for i in range(m):
                sorted_idx[f, start + i] = buf[i]
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        # right pushed first so nodes are expanded left-first
        st_node[top] = right[node]
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = left[node]
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        top += 1
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    criterion: str = "gini",
    min_samples_leaf: int = 1,
    sample: np.ndarray | None = None,
    ranks: np.ndarray | None = None,
) -> Tree:
    """Fit a depth-limited tree; ``criterion`` is "gini" (y in {0,1}) or "mse".

    Nodes split whenever they are impure and a valid split exists, even when
    the best split leaves the impurity unchanged. Ties go to the lower
    feature index, then to the lowest threshold. ``sample`` (rows of X, may
    repeat) and precomputed ``ranks`` let many trees share one dataset.
    """
    if criterion not in ("gini", "mse"):
        raise ValueError(f"unknown criterion {criterion!r}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot fit a tree on no samples")
    if sample is None:
        sample = np.arange(len(y), dtype=np.int64)
    if ranks is None:
        ranks = feature_ranks(X)
    arrays = _fit_kernel(X, y, np.asarray(sample, dtype=np.int64), ranks, int(max_depth), criterion == "gini", int(min_samples_leaf))
    return Tree(*(a.copy() for a in arrays))


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def logistic_loss(y: np.ndarray, raw: np.ndarray) -> float:
    # mean of log(1 + e^F) - yF, computed stably
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


@dataclass
class Ensemble:
    algorithm: str
    trees: list
    max_depth: int
    learning_rate: float = 0.1
    init_raw: float = 0.0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def raw_scores(self, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        trees = self.trees[:n_trees] if n_trees else self.trees
        out = np.full(len(X), self.init_raw)
        for t in trees:
            out += self.learning_rate * t.predict(X)
        return out

    def predict_proba(self, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.algorithm == BAGGING:
            trees = self.trees[:n_trees] if n_trees else self.trees
            votes = np.zeros(len(X))
            for t in trees:
                p = t.predict(X)
                votes += np.where(p > 0.5, 1.0, np.where(p < 0.5, 0.0, 0.5))
            return votes / len(trees)
        return sigmoid(self.raw_scores(X, n_trees))

    def staged_proba(self, X: np.ndarray, checkpoints) -> dict:
        """Probabilities after each number of trees in ``checkpoints``."""
        X = np.asarray(X, dtype=float)
        wanted = sorted(set(int(c) for c in checkpoints))
        out = {}
        acc = np.full(len(X), self.init_raw) if self.algorithm == GRADIENT_BOOSTING else np.zeros(len(X))
        for i, t in enumerate(self.trees, start=1):
            p = t.predict(X)
            if self.algorithm == BAGGING:
                acc += np.where(p > 0.5, 1.0, np.where(p < 0.5, 0.0, 0.5))
            else:
                acc += self.learning_rate * p
            if i in wanted:
                out[i] = acc / i if self.algorithm == BAGGING else sigmoid(acc)
        return out

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "init_raw": self.init_raw,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        return cls(d["algorithm"], [Tree.from_dict(t) for t in d["trees"]], int(d["max_depth"]), float(d["learning_rate"]), float(d["init_raw"]))


def fit_bagging(X, y, n_trees: int, max_depth: int, rng: np.random.Generator) -> Ensemble:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = len(y)
    ranks = feature_ranks(X)
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, n, n)
        trees.append(fit_tree(X, y, max_depth, "gini", sample=idx, ranks=ranks))
    return Ensemble(BAGGING, trees, max_depth, learning_rate=1.0)


def fit_gradient_boosting(X, y, n_trees: int, max_depth: int, learning_rate: float = 0.1, loss_trace: list | None = None) -> Ensemble:
    """Logistic-loss boosting with constant shrinkage.

    F_0 is the log-odds of the positive rate; each round fits a regression
    tree to the negative gradient y - sigmoid(F) and adds it scaled by
    ``learning_rate``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    ranks = feature_ranks(X)
    sample = np.arange(len(y), dtype=np.int64)
    p0 = float(np.mean(y))
    if p0 <= 0.0 or p0 >= 1.0:
        raise ValueError("gradient boosting needs both classes")
    init = float(np.log(p0 / (1.0 - p0)))
    raw = np.full(len(y), init)
    trees = []
    if loss_trace is not None:
        loss_trace.append(logistic_loss(y, raw))
    for _ in range(n_trees):
        residual = y - sigmoid(raw)
        tree = fit_tree(X, residual, max_depth, "mse", sample=sample, ranks=ranks)
        raw += learning_rate * tree.predict(X)
        trees.append(tree)
        if loss_trace is not None:
            loss_trace.append(logistic_loss(y, raw))
    return Ensemble(GRADIENT_BOOSTING, trees, max_depth, learning_rate, init)
