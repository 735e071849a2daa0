"""CART trees (classification and regression) and the decision-tree classifier.

A single builder serves every tree-based model. Both criteria reduce to the
same split score: with per-sample statistics ``Z`` (weighted one-hot rows for
Gini, weighted residuals for squared error) and weights ``W``, the best split
maximizes ``|sum Z_left|^2 / W_left + |sum Z_right|^2 / W_right``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .base import Classifier

# Nodes larger than this fraction of the root reuse the global per-feature
# sort order instead of sorting their own samples.
_PRESORT_FRACTION = 0.125


class Tree:
    """Array-backed binary tree. ``feature[n] < 0`` marks a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for n in range(self.n_nodes):
            if self.feature[n] >= 0:
                depth[self.left[n]] = depth[self.right[n]] = depth[n] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.arange(len(X))
        while active.size:
            nd = node[active]
            feat = self.feature[nd]
            inner = feat >= 0
            active, nd, feat = active[inner], nd[inner], feat[inner]
            if not active.size:
                break
            go_left = X[active, feat] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def state(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}{k}": getattr(self, k) for k in self.__slots__}

    @classmethod
    def from_state(cls, state: dict, prefix: str) -> "Tree":
        return cls(*(state[f"{prefix}{k}"] for k in cls.__slots__))


class TreeBuilder:
    """Grow one tree over rows ``rows`` of ``X``.

    ``splitter='best'`` evaluates every threshold between distinct sorted
    values; ``'random'`` draws one uniform threshold per candidate feature.
    """

    def __init__(self, max_depth=None, min_samples_leaf=1, max_features=None,
                 splitter="best", rng=None, classification=True):
        self.max_depth = np.inf if max_depth is None else max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.splitter = splitter
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.classification = classification

    def build(self, X, Z, W, rows=None, presort=None) -> Tree:
        n_total, d = X.shape
        if Z.ndim == 1:
            Z = Z[:, None]
        rows = np.flatnonzero(W > 0) if rows is None else np.asarray(rows)
        k = d if self.max_features is None else min(self.max_features, d)
        self._X, self._Z, self._W = X, Z, W
        self._presort = None
        if presort is not None and self.splitter == "best":
            member = np.zeros(n_total, dtype=bool)
            member[rows] = True
            # restrict the global order to the rows of this tree once
            self._presort = [p[member[p]] for p in presort]
            self._member = np.zeros(n_total, dtype=bool)
            self._presort_min = int(_PRESORT_FRACTION * len(rows))

        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            zs = Z[idx].sum(axis=0)
            ws = W[idx].sum()
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(zs / ws if ws > 0 else zs)
            return len(feature) - 1, zs, ws

        root, zs, ws = new_node(rows)
        stack = [(rows, 0, root, zs, ws)]
        while stack:
            idx, depth, node, zs, ws = stack.pop()
            if depth >= self.max_depth or len(idx) < 2 * self.min_samples_leaf:
                continue
            if self.classification and np.count_nonzero(zs) <= 1:
                continue
            split = self._best_split(idx, zs, ws, k)
            if split is None:
                continue
            f, thr = split
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            ln, lz, lw = new_node(li)
            rn, rz, rw = new_node(ri)
            feature[node], threshold[node] = f, thr
            left[node], right[node] = ln, rn
            stack.append((ri, depth + 1, rn, rz, rw))
            stack.append((li, depth + 1, ln, lz, lw))
        return Tree(feature, threshold, left, right, np.array(value))

    def _best_split(self, idx, zs, ws, k):
        d = self._X.shape[1]
        order = self.rng.permutation(d)
        parent = float(zs @ zs) / ws
        tol = 1e-10 * max(abs(parent), 1e-300)
        best = None
        # an impure classification node may split without immediate gain (XOR)
        best_score = parent - tol if self.classification else parent + tol
        for rank, f in enumerate(order):
            if rank >= k and best is not None:
                break
            if self.splitter == "best":
                cand = self._exact(idx, f, zs, ws)
            else:
                cand = self._random(idx, f, zs, ws)
            if cand is not None and cand[0] > best_score:
                best_score = cand[0]
                best = (int(f), cand[1])
        return best

    def _sorted_rows(self, idx, f):
        if self._presort is not None and len(idx) >= self._presort_min:
            self._member[idx] = True
            p = self._presort[f]
            out = p[self._member[p]]
            self._member[idx] = False
            return out
        return idx[np.argsort(self._X[idx, f], kind="stable")]

    def _exact(self, idx, f, zs, ws):
        srt = self._sorted_rows(idx, f)
        xs = self._X[srt, f]
        n = len(xs)
        msl = self.min_samples_leaf
        pos = np.arange(msl - 1, n - msl)
        if not pos.size:
            return None
        pos = pos[xs[pos] < xs[pos + 1]]
        if not pos.size:
            return None
        cz = np.cumsum(self._Z[srt], axis=0)[pos]
        cw = np.cumsum(self._W[srt])[pos]
        rz = zs - cz
        rw = ws - cw
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.einsum("ij,ij->i", cz, cz) / cw + np.einsum("ij,ij->i", rz, rz) / rw
        score = np.where((cw > 0) & (rw > 0), score, -np.inf)
        j = int(np.argmax(score))
        if not np.isfinite(score[j]):
            return None
        lo, hi = xs[pos[j]], xs[pos[j] + 1]
        thr = lo + (hi - lo) / 2.0
        if not lo <= thr < hi:
            thr = lo
        return float(score[j]), float(thr)

    def _random(self, idx, f, zs, ws):
        xs = self._X[idx, f]
        lo, hi = xs.min(), xs.max()
        if not lo < hi:
            return None
        thr = self.rng.uniform(lo, hi)
        go_left = xs <= thr
        nl = int(go_left.sum())
        if nl < self.min_samples_leaf or len(xs) - nl < self.min_samples_leaf:
            return None
        cz = go_left @ self._Z[idx]
        cw = float(go_left @ self._W[idx])
        rz = zs - cz
        rw = ws - cw
        if cw <= 0 or rw <= 0:
            return None
        return float(cz @ cz) / cw + float(rz @ rz) / rw, float(thr)


def presort_columns(X: np.ndarray) -> list[np.ndarray]:
    return [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]


def one_hot(y: np.ndarray, n_classes: int, w: np.ndarray | None = None) -> np.ndarray:
    Z = np.zeros((len(y), n_classes))
    Z[np.arange(len(y)), y] = 1.0 if w is None else w
    return Z


def resolve_max_features(max_features, d: int) -> int | None:
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, int(np.sqrt(d)))
    if max_features == "log2":
        return max(1, int(np.log2(d)))
    if isinstance(max_features, float):
        return max(1, int(max_features * d))
    return int(max_features)


def check_tree_params(h: dict, kind: str) -> None:
    if h.get("max_depth") is not None and h["max_depth"] < 1:
        raise ValidationError(f"{kind}: max_depth must be >= 1")
    if h.get("min_samples_leaf", 1) < 1:
        raise ValidationError(f"{kind}: min_samples_leaf must be >= 1")
    mf = h.get("max_features")
    if mf is not None and not (mf in ("sqrt", "log2") or (isinstance(mf, (int, float)) and mf > 0)):
        raise ValidationError(f"{kind}: invalid max_features {mf!r}")


def leaf_distribution(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Normalized class distribution of the leaf each row lands in."""
    v = tree.predict(X)
    s = v.sum(axis=1, keepdims=True)
    return v / np.where(s > 0, s, 1.0)


class DecisionTree(Classifier):
    """CART with Gini impurity."""

    kind = "decision_tree"
    defaults = {"max_depth": None, "min_samples_leaf": 1, "max_features": None}

    def _validate(self):
        check_tree_params(self.hyper, self.kind)

    def _fit(self, X, y, w):
        builder = TreeBuilder(
            max_depth=self.hyper["max_depth"],
            min_samples_leaf=self.hyper["min_samples_leaf"],
            max_features=resolve_max_features(self.hyper["max_features"], X.shape[1]),
            rng=np.random.default_rng(self.seed),
        )
        Z = one_hot(y, self.n_classes_, w)
        self.tree_ = builder.build(X, Z, w, presort=presort_columns(X))

    def _predict_proba(self, X):
        return leaf_distribution(self.tree_, X)

    def get_state(self):
        return self.tree_.state("tree.")

    def set_state(self, state):
        self.tree_ = Tree.from_state(state, "tree.")
