"""Binary decision trees with gain-ratio splits, plus C4.5-style and reduced-error pruning.

Nominal attributes arrive as integer codes and are split by threshold like
numeric ones (a binary subset split for the small nominal domains used here).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from numba import njit

LEAF = -1


def xlog_table(n: int) -> np.ndarray:
    """``k * log2(k)`` for k = 0..n; entropies of integer counts are sums of these."""
    k = np.arange(n + 1, dtype=float)
    out = np.zeros(n + 1)
    out[1:] = k[1:] * np.log2(k[1:])
    return out


def _info(table: np.ndarray, pos, n):
    """``n`` times the binary entropy of ``pos`` positives among ``n``."""
    return (table[n] - table[pos]) - table[n - pos]


@dataclass
class Split:
    feature: int
    threshold: float
    gain: float
    gain_ratio: float


def best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray, features: np.ndarray, min_leaf: int,
               table: np.ndarray | None = None) -> Split | None:
    """C4.5 split choice over ``features`` for the rows ``idx``.

    Each feature contributes its highest-gain threshold; among features whose
    gain is at least the average, the highest gain ratio wins (first feature
    on ties). Zero-gain splits are allowed, so an impure node is always split
    when some threshold separates its rows.
    """
    m = len(idx)
    if m < 2 * min_leaf:
        return None
    Xs = X[np.ix_(idx, features)]
    order = np.argsort(Xs, axis=0, kind="stable")
    sv = np.take_along_axis(Xs, order, axis=0)
    ys = y[idx][order]
    left_pos = np.cumsum(ys, axis=0)[:-1]  # split after row i
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left
    total_pos = left_pos[-1] + ys[-1]
    right_pos = total_pos[None, :] - left_pos

    valid = sv[:-1] < sv[1:]
    if min_leaf > 1:
        size_ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        valid &= size_ok
    if not valid.any():
        return None

    table = xlog_table(m) if table is None else table
    n_left_i = np.arange(1, m)[:, None]
    left_i, right_i = left_pos.astype(np.int64), right_pos.astype(np.int64)
    parent = _info(table, int(total_pos[0]), m)
    child = _info(table, left_i, n_left_i) + _info(table, right_i, m - n_left_i)
    gain = np.where(valid, (parent - child) / m, -np.inf)
    best_pos = np.argmax(gain, axis=0)
    cols = np.arange(len(features))
    best_gain = gain[best_pos, cols]
    has = np.isfinite(best_gain)
    # guard against tiny negative values from rounding
    best_gain = np.where(has, np.maximum(best_gain, 0.0), -np.inf)
    nl = best_pos + 1.0
    frac = nl / m
    split_info = -(frac * np.log2(frac) + (1 - frac) * np.log2(1 - frac))
    ratio = np.where(has, best_gain / np.where(split_info > 0, split_info, 1.0), -np.inf)
    avg_gain = best_gain[has].mean()
    eligible = has & (best_gain >= avg_gain - 1e-12)
    ratio = np.where(eligible, ratio, -np.inf)
    j = int(np.argmax(ratio))
    pos = best_pos[j]
    return Split(int(features[j]), float(sv[pos, j]), float(best_gain[j]), float(ratio[j]))


@njit(cache=True, nogil=True)
def _info_nb(table, pos, n):
    return (table[n] - table[pos]) - table[n - pos]


@njit(cache=True, nogil=True)
def _split_sorted(xs, ys, order, lo, hi, features, min_leaf, table):
    """Best split of slots ``order[:, lo:hi]``; each row of ``order`` is that feature's sorted slot list."""
    m = hi - lo
    f = features.shape[0]
    best_gain = np.full(f, -np.inf)
    best_thr = np.zeros(f)
    best_nl = np.zeros(f)
    total = 0
    for r in range(lo, hi):
        total += ys[order[0, r]]
    parent = _info_nb(table, total, m)
    for j in range(f):
        col = features[j]
        seq = order[col]
        left = 0
        for i in range(m - 1):
            left += ys[seq[lo + i]]
            nl = i + 1
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            a, b = xs[seq[lo + i], col], xs[seq[lo + i + 1], col]
            if not a < b:
                continue
            child = _info_nb(table, left, nl) + _info_nb(table, total - left, nr)
            g = (parent - child) / m
            if g > best_gain[j]:
                best_gain[j] = g
                best_thr[j] = a
                best_nl[j] = nl
    n_has = 0
    acc = 0.0
    for j in range(f):
        if best_gain[j] > -np.inf:
            if best_gain[j] < 0:
                best_gain[j] = 0.0
            n_has += 1
            acc += best_gain[j]
    if n_has == 0:
        return -1, 0.0, 0.0, 0.0
    avg = acc / n_has
    pick = -1
    pick_ratio = -np.inf
    for j in range(f):
        if best_gain[j] == -np.inf or best_gain[j] < avg - 1e-12:
            continue
        frac = best_nl[j] / m
        si = -(frac * np.log2(frac) + (1 - frac) * np.log2(1 - frac))
        ratio = best_gain[j] / si if si > 0 else best_gain[j]
        if ratio > pick_ratio:
            pick_ratio = ratio
            pick = j
    return features[pick], best_thr[pick], best_gain[pick], pick_ratio


@njit(cache=True, nogil=True)
def _grow_kernel(X, y, rows, col_order, max_depth, min_leaf, k, prio, table):
    n = rows.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    n_pos = np.zeros(cap)
    n_all = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    all_features = np.arange(d)
    stack = np.empty(cap, dtype=np.int64)

    # one slot per sampled row (a bootstrap may repeat rows); slots inherit the
    # presorted row order of each column, so no per-tree sort is needed
    big_n = X.shape[0]
    xs = np.empty((n, d))
    ys = np.empty(n, dtype=np.int64)
    first = np.zeros(big_n + 1, dtype=np.int64)
    for s in range(n):
        xs[s] = X[rows[s]]
        ys[s] = y[rows[s]]
        first[rows[s] + 1] += 1
    for r in range(big_n):
        first[r + 1] += first[r]
    fill = first[:-1].copy()
    slots = np.empty(n, dtype=np.int64)
    for s in range(n):
        slots[fill[rows[s]]] = s
        fill[rows[s]] += 1
    order = np.empty((d, n), dtype=np.int64)
    for c in range(d):
        a = 0
        for r in col_order[c]:
            for q in range(first[r], first[r + 1]):
                order[c, a] = slots[q]
                a += 1
    go_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(n, dtype=np.int64)

    total = 0
    for s in range(n):
        total += ys[s]
    n_pos[0], n_all[0], stop[0] = total, n, n
    n_nodes, sp, searched = 1, 1, 0
    stack[0] = 0
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if n_pos[node] == 0 or n_pos[node] == n_all[node]:
            continue
        if max_depth >= 0 and depth[node] >= max_depth:
            continue
        if k < d:
            feats = np.argsort(prio[searched])[:k]
        else:
            feats = all_features
        searched += 1
        lo, hi = start[node], stop[node]
        if hi - lo < 2 * min_leaf:
            continue
        f, thr, gain, ratio = _split_sorted(xs, ys, order, lo, hi, feats, min_leaf, table)
        if f < 0:
            continue
        nl, pos_l = 0, 0
        for r in range(lo, hi):
            s = order[0, r]
            go_left[s] = xs[s, f] <= thr
            if go_left[s]:
                nl += 1
                pos_l += ys[s]
        for c in range(d):  # stable partition keeps every column sorted within each child
            seq = order[c]
            a, b = lo, 0
            for r in range(lo, hi):
                s = seq[r]
                if go_left[s]:
                    seq[a] = s
                    a += 1
                else:
                    buf[b] = s
                    b += 1
            seq[a:hi] = buf[:b]
        nr = hi - lo - nl
        feature[node] = f
        threshold[node] = thr
        lc, rc = n_nodes, n_nodes + 1
        start[lc], stop[lc] = lo, lo + nl
        start[rc], stop[rc] = lo + nl, hi
        n_all[lc], n_pos[lc] = nl, pos_l
        n_all[rc], n_pos[rc] = nr, n_pos[node] - pos_l
        depth[lc] = depth[rc] = depth[node] + 1
        left[node], right[node] = lc, rc
        stack[sp] = rc
        stack[sp + 1] = lc
        sp += 2
        n_nodes += 2
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            n_pos[:n_nodes], n_all[:n_nodes])


def presort(X: np.ndarray) -> np.ndarray:
    """Row indices of ``X`` sorted by each column, one column per output row."""
    return np.ascontiguousarray(np.argsort(np.asarray(X, dtype=float), axis=0, kind="stable").T, dtype=np.int64)


class DecisionTree:
    """Array-backed binary tree; ``value`` holds P(positive) at each node.

    With ``max_features`` below the column count, each split search looks at
    a random subset of columns: the lowest-priority ``k`` entries of a fresh
    row of a priority matrix drawn once per fit from ``rng``.
    """

    def __init__(self, max_depth: int | None = None, min_leaf: int = 1, max_features=None, rng=None):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng

    def _setup(self, X, y, rows):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        rows = np.arange(len(y), dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
        d = X.shape[1]
        k = d if self.max_features is None else min(int(self.max_features), d)
        prio = self.rng.random((2 * len(rows) + 1, d)) if k < d else np.zeros((1, d))
        return X, y, rows, k, prio

    def fit(self, X: np.ndarray, y: np.ndarray, rows=None, col_order=None) -> "DecisionTree":
        """Grow on ``X[rows]`` (rows may repeat, as in a bootstrap sample).

        ``col_order`` is :func:`presort` of ``X``; ensembles pass it to skip re-sorting per tree.
        """
        X, y, rows, k, prio = self._setup(X, y, rows)
        col_order = presort(X) if col_order is None else col_order
        depth = -1 if self.max_depth is None else int(self.max_depth)
        out = _grow_kernel(X, y, rows, col_order, depth, int(self.min_leaf), k, prio, xlog_table(len(rows)))
        self.feature, self.threshold, self.left, self.right, self.n_pos, self.n_all = (a.copy() for a in out)
        return self

    def fit_reference(self, X: np.ndarray, y: np.ndarray, rows=None) -> "DecisionTree":
        """Slow pure-numpy grower, kept as an oracle for :meth:`fit`."""
        X, y, rows, k, prio = self._setup(X, y, rows)
        d = X.shape[1]
        feature, threshold, left, right, n_pos, n_all, depth = [], [], [], [], [], [], []

        def add(ix, dep):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            n_pos.append(int(y[ix].sum()))
            n_all.append(len(ix))
            depth.append(dep)
            return len(feature) - 1

        table = xlog_table(len(rows))
        stack = [(add(rows, 0), rows)]
        searched = 0
        while stack:
            node, ix = stack.pop()
            if n_pos[node] in (0, n_all[node]):
                continue
            if self.max_depth is not None and depth[node] >= self.max_depth:
                continue
            feats = np.argsort(prio[searched])[:k] if k < d else np.arange(d)
            searched += 1
            split = best_split(X, y, ix, feats, self.min_leaf, table)
            if split is None:
                continue
            go_left = X[ix, split.feature] <= split.threshold
            li, ri = ix[go_left], ix[~go_left]
            feature[node] = split.feature
            threshold[node] = split.threshold
            left[node] = add(li, depth[node] + 1)
            right[node] = add(ri, depth[node] + 1)
            stack.append((right[node], ri))
            stack.append((left[node], li))

        self.feature = np.array(feature)
        self.threshold = np.array(threshold)
        self.left = np.array(left)
        self.right = np.array(right)
        self.n_pos = np.array(n_pos, dtype=float)
        self.n_all = np.array(n_all, dtype=float)
        return self

    @property
    def value(self) -> np.ndarray:
        return self.n_pos / np.maximum(self.n_all, 1)

    @property
    def n_leaves(self) -> int:
        # pruning leaves orphaned nodes in the arrays, so walk from the root
        return sum(1 for node in self.postorder() if self.feature[node] == LEAF)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def make_leaf(self, node: int) -> None:
        self.feature[node] = LEAF
        self.left[node] = LEAF
        self.right[node] = LEAF

    def postorder(self) -> list[int]:
        out, stack = [], [(0, False)]
        while stack:
            node, seen = stack.pop()
            if self.feature[node] == LEAF or seen:
                out.append(node)
                continue
            stack.append((node, True))
            stack.append((self.right[node], False))
            stack.append((self.left[node], False))
        return out


def added_errors(n: float, e: float, cf: float = 0.25) -> float:
    """Pessimistic extra errors for a leaf with ``e`` errors out of ``n`` (C4.5 upper confidence limit)."""
    if n <= 0:
        return 0.0
    if e < 1:
        base = n * (1 - cf ** (1.0 / n))
        if e == 0:
            return base
        return base + e * (added_errors(n, 1.0, cf) - base)
    if e + 0.5 >= n:
        return max(n - e, 0.0)
    z = NormalDist().inv_cdf(1 - cf)
    f = (e + 0.5) / n
    r = (f + z * z / (2 * n) + z * math.sqrt(f / n - f * f / n + z * z / (4 * n * n))) / (1 + z * z / n)
    return r * n - e


def pessimistic_prune(tree: DecisionTree, cf: float = 0.25) -> DecisionTree:
    """Bottom-up subtree replacement using estimated (pessimistic) error counts."""
    est = np.zeros(len(tree.feature))
    for node in tree.postorder():
        n = tree.n_all[node]
        errors = min(tree.n_pos[node], n - tree.n_pos[node])
        leaf_est = errors + added_errors(n, errors, cf)
        if tree.feature[node] == LEAF:
            est[node] = leaf_est
            continue
        sub = est[tree.left[node]] + est[tree.right[node]]
        if leaf_est <= sub + 0.1:
            tree.make_leaf(node)
            est[node] = leaf_est
        else:
            est[node] = sub
    return tree


def reduced_error_prune(tree: DecisionTree, X_prune: np.ndarray, y_prune: np.ndarray) -> DecisionTree:
    """Replace a subtree by a leaf whenever that does not raise error on the pruning rows."""
    if len(y_prune) == 0:
        return tree
    X_prune = np.asarray(X_prune, dtype=float)
    # route pruning rows through the full tree once, recording every node visited
    n_nodes = len(tree.feature)
    hits_pos = np.zeros(n_nodes)
    hits_all = np.zeros(n_nodes)
    node = np.zeros(len(y_prune), dtype=int)
    active = np.ones(len(y_prune), dtype=bool)
    while active.any():
        rows = np.flatnonzero(active)
        np.add.at(hits_all, node[rows], 1)
        np.add.at(hits_pos, node[rows], y_prune[rows])
        nd = node[rows]
        internal = tree.feature[nd] != LEAF
        rows, nd = rows[internal], nd[internal]
        go_left = X_prune[rows, tree.feature[nd]] <= tree.threshold[nd]
        node[rows] = np.where(go_left, tree.left[nd], tree.right[nd])
        active[:] = False
        active[rows] = True

    majority_pos = tree.value >= 0.5
    leaf_err = np.where(majority_pos, hits_all - hits_pos, hits_pos)
    err = np.zeros(n_nodes)
    for nd in tree.postorder():
        if tree.feature[nd] == LEAF:
            err[nd] = leaf_err[nd]
            continue
        sub = err[tree.left[nd]] + err[tree.right[nd]]
        if leaf_err[nd] <= sub:
            tree.make_leaf(nd)
            err[nd] = leaf_err[nd]
        else:
            err[nd] = sub
    return tree
