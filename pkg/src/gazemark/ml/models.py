"""Classifier families behind a single ``train_classifier`` entry point."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidSpec, TooFewInstances
from .trees import DecisionTree, pessimistic_prune, presort, reduced_error_prune

log = logging.getLogger(__name__)

FAMILIES = ("tree_c45_like", "tree_rep_pruned", "random_forest", "bagging_trees", "logistic", "instance_knn")

DEFAULTS = {
    "tree_c45_like": {"max_depth": None, "min_leaf": 2, "confidence": 0.25},
    "tree_rep_pruned": {"max_depth": None, "min_leaf": 2},
    "random_forest": {"n_trees": 100, "max_depth": None, "min_leaf": 1, "max_features": "sqrt", "bootstrap": True},
    "bagging_trees": {"n_trees": 10, "max_depth": None, "min_leaf": 1},
    "logistic": {"l2": 0.1},
    "instance_knn": {"k": 5},
}

DEFAULT_GRIDS = {
    "tree_c45_like": {"max_depth": [2, 4, 8, None], "min_leaf": [1, 2, 5]},
    "tree_rep_pruned": {"max_depth": [2, 4, 8, None], "min_leaf": [1, 2, 5]},
    "random_forest": {"n_trees": [50, 100, 200]},
    "bagging_trees": {"max_depth": [2, 4, 8, None], "min_leaf": [1, 2, 5]},
    "logistic": {"l2": [0.01, 0.1, 1.0]},
    "instance_knn": {"k": [1, 3, 5, 7]},
}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray  # 1 = ADHD (positive)
    nominal: list[bool] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError("X must be 2-D with one row per label")
        if not self.nominal:
            self.nominal = [False] * self.X.shape[1]
        if not self.feature_names:
            self.feature_names = [f"f{j}" for j in range(self.X.shape[1])]
        if np.isnan(self.X).any():
            raise ValueError("dataset contains missing values")
        if not set(np.unique(self.y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")

    @classmethod
    def from_table(cls, table) -> "Dataset":
        X, y, nominal = table.matrix()
        ids = [f"{r.participant_id}/{r.instance_id}" for r in table.rows]
        return cls(X, y, nominal, list(table.feature_names), ids)

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        ids = [self.ids[i] for i in idx] if self.ids else []
        return Dataset(self.X[idx], self.y[idx], self.nominal, self.feature_names, ids)


def _check_int(params, name, low, allow_none=False):
    v = params[name]
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < low:
        raise InvalidSpec(f"{name} must be an integer >= {low}, got {v!r}")


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    hyperparameters: tuple = ()
    seed: int = 0

    def __init__(self, family: str, hyperparameters: dict | None = None, seed: int = 0):
        if family not in FAMILIES:
            raise InvalidSpec(f"unknown classifier family {family!r}")
        unknown = set(hyperparameters or {}) - set(DEFAULTS[family])
        if unknown:
            raise InvalidSpec(f"{family} has no hyperparameter(s) {sorted(unknown)}")
        params = {**DEFAULTS[family], **(hyperparameters or {})}
        _validate(family, params)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "hyperparameters", tuple(sorted(params.items())))
        object.__setattr__(self, "seed", int(seed))

    @property
    def params(self) -> dict:
        return dict(self.hyperparameters)

    def with_seed(self, seed: int) -> "ClassifierSpec":
        return ClassifierSpec(self.family, self.params, seed)


def _validate(family: str, p: dict) -> None:
    if "max_depth" in p:
        _check_int(p, "max_depth", 1, allow_none=True)
    if "min_leaf" in p:
        _check_int(p, "min_leaf", 1)
    if "n_trees" in p:
        _check_int(p, "n_trees", 1)
    if family == "instance_knn":
        _check_int(p, "k", 1)
    if family == "logistic" and not (isinstance(p["l2"], (int, float)) and p["l2"] > 0):
        raise InvalidSpec("l2 must be a positive number")
    if family == "tree_c45_like" and not 0 < p["confidence"] <= 0.5:
        raise InvalidSpec("confidence must lie in (0, 0.5]")
    if family == "random_forest":
        mf = p["max_features"]
        if mf not in ("sqrt", "all") and not (isinstance(mf, int) and mf >= 1):
            raise InvalidSpec("max_features must be 'sqrt', 'all' or a positive integer")


def derive_seed(master: int, *unit: int) -> int:
    """Independent 63-bit seed for a parallel unit (fold, grid point, ensemble member)."""
    state = np.random.SeedSequence([int(master), *map(int, unit)]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


class Model:
    degenerate = False

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(int)


class ConstantModel(Model):
    degenerate = True

    def __init__(self, p: float):
        self.p = float(p)

    def predict_proba(self, X):
        return np.full(len(X), self.p)


class TreeModel(Model):
    def __init__(self, tree: DecisionTree):
        self.tree = tree

    def predict_proba(self, X):
        return self.tree.predict_proba(X)


class VoteModel(Model):
    """Score = fraction of member trees voting positive (a tied leaf casts half a vote)."""

    def __init__(self, trees: list[DecisionTree]):
        self.trees = trees

    def predict_proba(self, X):
        votes = np.zeros(len(X))
        for t in self.trees:
            p = t.predict_proba(X)
            votes += np.where(p > 0.5, 1.0, np.where(p < 0.5, 0.0, 0.5))
        return votes / len(self.trees)


class LogisticModel(Model):
    def __init__(self, encoder, clf):
        self.encoder, self.clf = encoder, clf

    def predict_proba(self, X):
        return self.clf.predict_proba(self.encoder(np.asarray(X, dtype=float)))[:, 1]


class KnnModel(Model):
    """Distance-weighted k-NN; numeric columns range-normalised, nominal columns cost 1 on mismatch."""

    def __init__(self, X, y, nominal, k):
        self.nominal = np.asarray(nominal, dtype=bool)
        self.lo = X.min(axis=0)
        span = X.max(axis=0) - self.lo
        self.span = np.where(span > 0, span, 1.0)
        self.Z = self._norm(X)
        self.y = y
        self.k = min(k, len(y))

    def _norm(self, X):
        Z = (np.asarray(X, dtype=float) - self.lo) / self.span
        return np.where(self.nominal, X, Z)

    def predict_proba(self, X):
        Q = self._norm(X)
        num = ~self.nominal
        d2 = np.zeros((len(Q), len(self.Z)))
        if num.any():
            diff = Q[:, None, num] - self.Z[None, :, num]
            d2 += np.einsum("ijk,ijk->ij", diff, diff)
        if self.nominal.any():
            d2 += (Q[:, None, self.nominal] != self.Z[None, :, self.nominal]).sum(axis=2)
        d = np.sqrt(d2)
        nn = np.argsort(d, axis=1, kind="stable")[:, : self.k]
        dn = np.take_along_axis(d, nn, axis=1)
        yn = self.y[nn]
        exact = dn == 0
        with np.errstate(divide="ignore"):
            w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / dn)
        return (w * yn).sum(axis=1) / w.sum(axis=1)


def _one_hot_encoder(train: Dataset):
    """Standardise numeric columns, one-hot nominal ones (categories seen in training)."""
    nominal = np.asarray(train.nominal, dtype=bool)
    X = train.X
    mean = X[:, ~nominal].mean(axis=0)
    std = X[:, ~nominal].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    levels = [np.unique(X[:, j]) for j in np.flatnonzero(nominal)]
    nom_cols = np.flatnonzero(nominal)

    def encode(Q):
        parts = [(Q[:, ~nominal] - mean) / std]
        for j, lv in zip(nom_cols, levels):
            parts.append((Q[:, [j]] == lv[None, :]).astype(float))
        return np.hstack(parts)

    return encode


def _grow(data: Dataset, idx, rng, *, max_depth, min_leaf, max_features=None, col_order=None) -> DecisionTree:
    return DecisionTree(max_depth, min_leaf, max_features, rng).fit(data.X, data.y, idx, col_order)


def _stratified_split(y: np.ndarray, frac: float, rng) -> tuple[np.ndarray, np.ndarray]:
    grow, hold = [], []
    for c in (0, 1):
        ix = rng.permutation(np.flatnonzero(y == c))
        n_hold = int(round(len(ix) * frac))
        hold.append(ix[:n_hold])
        grow.append(ix[n_hold:])
    return np.sort(np.concatenate(grow)), np.sort(np.concatenate(hold))


def train_classifier(spec: ClassifierSpec, train: Dataset) -> Model:
    """Fit ``spec`` on ``train``; deterministic for a fixed ``spec.seed``.

    Training data holding a single class yields a flagged constant model.
    """
    if len(train) == 0:
        raise TooFewInstances("cannot train on an empty dataset")
    pos = int(train.y.sum())
    if pos == 0 or pos == len(train):
        log.warning("single-class training data: returning constant model")
        return ConstantModel(1.0 if pos else 0.0)

    p = spec.params
    fam = spec.family
    rng = np.random.default_rng(spec.seed)
    every = np.arange(len(train))

    if fam == "tree_c45_like":
        tree = _grow(train, every, rng, max_depth=p["max_depth"], min_leaf=p["min_leaf"])
        return TreeModel(pessimistic_prune(tree, p["confidence"]))

    if fam == "tree_rep_pruned":
        grow, hold = _stratified_split(train.y, 1 / 3, rng)
        if len(np.unique(train.y[grow])) < 2:
            grow, hold = every, every[:0]
        tree = _grow(train, grow, rng, max_depth=p["max_depth"], min_leaf=p["min_leaf"])
        return TreeModel(reduced_error_prune(tree, train.X[hold], train.y[hold]))

    if fam in ("random_forest", "bagging_trees"):
        d = train.X.shape[1]
        if fam == "random_forest":
            mf = p["max_features"]
            k = d if mf == "all" else max(1, int(math.sqrt(d))) if mf == "sqrt" else min(mf, d)
            boot = p["bootstrap"]
        else:
            k, boot = d, True
        trees, col_order = [], presort(train.X)
        for i in range(p["n_trees"]):
            member = np.random.default_rng(derive_seed(spec.seed, i))
            idx = member.integers(0, len(train), len(train)) if boot else every
            trees.append(_grow(train, idx, member, max_depth=p["max_depth"], min_leaf=p["min_leaf"],
                               max_features=k, col_order=col_order))
        return VoteModel(trees)

    if fam == "logistic":
        from sklearn.linear_model import LogisticRegression

        encode = _one_hot_encoder(train)
        clf = LogisticRegression(C=1.0 / p["l2"], solver="lbfgs", max_iter=1000, tol=1e-8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            clf.fit(encode(train.X), train.y)
        return LogisticModel(encode, clf)

    if fam == "instance_knn":
        return KnnModel(train.X, train.y, train.nominal, p["k"])

    raise InvalidSpec(fam)  # pragma: no cover
