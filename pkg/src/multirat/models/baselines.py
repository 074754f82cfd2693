"""Classical forecasting baselines: autoregressive least squares and
gradient-boosted regression trees, both written against plain numpy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# autoregressive baseline

@dataclass
class ArBaseline:
    """AR(p) with intercept, optionally on first-differenced series."""

    order: int
    diff: int = 0
    intercept: float = 0.0
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fitted: bool = False

    def fit(self, series_list: list[np.ndarray]) -> "ArBaseline":
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.diff not in (0, 1):
            raise ValueError("diff must be 0 or 1")
        rows = []
        targets = []
        for series in series_list:
            s = np.asarray(series, dtype=float)
            if self.diff:
                s = np.diff(s)
            for t in range(self.order, len(s)):
                rows.append(s[t - self.order:t][::-1])   # lag-1 first
                targets.append(s[t])
        if not rows:
            raise ValueError("series too short for the requested order")
        a = np.column_stack([np.ones(len(rows)), np.array(rows)])
        b = np.array(targets)
        gram = a.T @ a
        try:
            sol = np.linalg.solve(gram, a.T @ b)
        except np.linalg.LinAlgError:
            warnings.warn("singular normal equations; using ridge fallback")
            sol = np.linalg.solve(gram + 1e-8 * np.eye(gram.shape[0]), a.T @ b)
        self.intercept = float(sol[0])
        self.coeffs = sol[1:]
        self.fitted = True
        return self

    def forecast(self, history: np.ndarray, tau: int) -> np.ndarray:
        """Linear recursion tau steps ahead from the end of history."""
        if not self.fitted:
            raise RuntimeError("baseline not fitted")
        s = np.asarray(history, dtype=float)
        last_level = s[-1]
        if self.diff:
            s = np.diff(s)
        p = min(self.order, len(s))
        if p < 1:
            raise ValueError("history too short to forecast")
        # Missing lags (history shorter than order) are treated as zero.
        lags = np.zeros(self.order)
        lags[:p] = s[::-1][:p]
        preds = np.empty(tau)
        for i in range(tau):
            nxt = self.intercept + float(self.coeffs @ lags)
            preds[i] = nxt
            lags = np.concatenate(([nxt], lags[:-1]))
        if self.diff:
            return last_level + np.cumsum(preds)
        return preds


def fit_ar_baseline(series_list: list[np.ndarray], order: int,
                    diff: int = 0) -> ArBaseline:
    return ArBaseline(order=order, diff=diff).fit(series_list)


# ---------------------------------------------------------------------------
# gradient-boosted regression trees

@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    value: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _build_tree(x: np.ndarray, y: np.ndarray, depth: int, max_depth: int,
                min_leaf: int) -> _TreeNode:
    node = _TreeNode(value=float(y.mean()))
    n, n_feat = x.shape
    if depth >= max_depth or n < 2 * min_leaf or np.ptp(y) == 0.0:
        return node
    best_gain = 0.0
    best = None
    total_sum = y.sum()
    total_sse = float(((y - y.mean()) ** 2).sum())
    for j in range(n_feat):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys ** 2)
        # candidate split after position i (1-based count on the left)
        counts = np.arange(1, n)
        left_sum = csum[:-1]
        left_sse = csq[:-1] - left_sum ** 2 / counts
        right_counts = n - counts
        right_sum = total_sum - left_sum
        right_sse = (csq[-1] - csq[:-1]) - right_sum ** 2 / right_counts
        gain = total_sse - (left_sse + right_sse)
        valid = (counts >= min_leaf) & (right_counts >= min_leaf) & (
            xs[:-1] < xs[1:])
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain + 1e-12:
            best_gain = float(gain[i])
            best = (j, 0.5 * (xs[i] + xs[i + 1]))
    if best is None:
        return node
    j, thr = best
    mask = x[:, j] <= thr
    node.feature = j
    node.threshold = thr
    node.left = _build_tree(x[mask], y[mask], depth + 1, max_depth, min_leaf)
    node.right = _build_tree(x[~mask], y[~mask], depth + 1, max_depth, min_leaf)
    return node


def _tree_predict(node: _TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(len(x))
    stack = [(node, np.arange(len(x)))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
            continue
        mask = x[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


@dataclass
class GbtBaseline:
    """Gradient boosting with squared-error loss on flattened window features."""

    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 1
    base_value: float = 0.0
    trees: list[_TreeNode] = field(default_factory=list)
    fitted: bool = False

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GbtBaseline":
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x.reshape(len(x), -1)
        y = np.asarray(y, dtype=float).ravel()
        self.base_value = float(y.mean())
        pred = np.full(len(y), self.base_value)
        self.trees = []
        for _ in range(self.n_trees):
            residual = y - pred
            tree = _build_tree(x, residual, 0, self.max_depth, self.min_leaf)
            self.trees.append(tree)
            pred += self.learning_rate * _tree_predict(tree, x)
        self.fitted = True
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x.reshape(len(x), -1)
        out = np.full(len(x), self.base_value)
        for tree in self.trees:
            out += self.learning_rate * _tree_predict(tree, x)
        return out


def fit_gbt_baseline(x: np.ndarray, y: np.ndarray, n_trees: int = 50,
                     max_depth: int = 3, learning_rate: float = 0.1,
                     min_leaf: int = 1) -> GbtBaseline:
    return GbtBaseline(n_trees=n_trees, max_depth=max_depth,
                       learning_rate=learning_rate, min_leaf=min_leaf).fit(x, y)
