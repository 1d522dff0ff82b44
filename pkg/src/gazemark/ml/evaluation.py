"""Metrics, ROC, stratified cross-validation, grid search and report files."""
from __future__ import annotations

import csv
import io
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import BadK, EmptyGrid, SingleClassScores, TooFewInstances
from .models import ClassifierSpec, Dataset, derive_seed, train_classifier


@dataclass(frozen=True)
class Confusion:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "Confusion":
        t = np.asarray(y_true, dtype=bool)
        p = np.asarray(y_pred, dtype=bool)
        return cls(int(np.sum(t & p)), int(np.sum(t & ~p)), int(np.sum(~t & p)), int(np.sum(~t & ~p)))


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def evaluate_metrics(confusion: Confusion) -> dict[str, float]:
    """Accuracy plus support-weighted precision, recall and F1 over both classes."""
    c = confusion
    if c.n < 1:
        raise ValueError("empty confusion matrix")
    per_class = []
    for tp, fp, fn in ((c.tp, c.fp, c.fn), (c.tn, c.fn, c.fp)):
        prec, rec = _div(tp, tp + fp), _div(tp, tp + fn)
        per_class.append((tp + fn, prec, rec, _div(2 * prec * rec, prec + rec)))
    n = c.n
    return {
        "accuracy": (c.tp + c.tn) / n,
        "precision_w": sum(s * p for s, p, _, _ in per_class) / n,
        "recall_w": sum(s * r for s, _, r, _ in per_class) / n,
        "f1_w": sum(s * f for s, _, _, f in per_class) / n,
    }


def roc_auc(scores, labels) -> tuple[list[tuple[float, float]], float]:
    """ROC points over distinct score thresholds (ties move together) and trapezoidal AUC."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassScores("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    fpr = np.r_[0, fps] / n_neg
    tpr = np.r_[0, tps] / n_pos
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))
    return [(float(a), float(b)) for a, b in zip(fpr, tpr)], auc


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Test-index arrays: each class is shuffled, then dealt round-robin over the folds."""
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in (1, 0):
        ix = rng.permutation(np.flatnonzero(y == c))
        for j, i in enumerate(ix):
            folds[(offset + j) % k].append(int(i))
        offset = (offset + len(ix)) % k  # keeps fold sizes within one of each other
    return [np.sort(np.array(f, dtype=int)) for f in folds]


@dataclass
class EvalReport:
    confusion: Confusion
    accuracy: float
    precision_w: float
    recall_w: float
    f1_w: float
    roc_points: list[tuple[float, float]]
    auc: float
    per_fold: list[dict] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc_points"] = [list(p) for p in self.roc_points]
        return d

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def thread_budget() -> int:
    """Worker cap from ``GAZEMARK_THREADS`` (default 1)."""
    raw = os.environ.get("GAZEMARK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"GAZEMARK_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"GAZEMARK_THREADS must be a positive integer, got {raw!r}")
    return n


def cross_validate(spec: ClassifierSpec, data: Dataset, k: int = 10, seed: int = 0,
                   workers: int | None = None) -> EvalReport:
    """Stratified k-fold CV with pooled out-of-fold scores.

    Folds may run on ``workers`` threads; each fold's model seed depends only
    on (spec.seed, fold index), so the report does not depend on scheduling.
    """
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 2:
        raise BadK(f"k must be an integer >= 2, got {k!r}")
    counts = np.bincount(data.y, minlength=2)
    if len(data) < k or counts.min() < k:
        raise TooFewInstances(f"each class needs at least {k} instances, got {counts.tolist()}")
    folds = stratified_folds(data.y, k, seed)

    def run(f: int) -> np.ndarray:
        test = folds[f]
        train = np.setdiff1d(np.arange(len(data)), test, assume_unique=True)
        model = train_classifier(spec.with_seed(derive_seed(spec.seed, f)), data.subset(train))
        return model.predict_proba(data.X[test])

    workers = thread_budget() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, k)) as pool:
            fold_scores = list(pool.map(run, range(k)))
    else:
        fold_scores = [run(f) for f in range(k)]

    scores = np.zeros(len(data))
    per_fold = []
    for f, (test, s) in enumerate(zip(folds, fold_scores)):
        scores[test] = s
        conf = Confusion.from_predictions(data.y[test], s >= 0.5)
        per_fold.append({"fold": f, "n": int(len(test)), **evaluate_metrics(conf)})
    conf = Confusion.from_predictions(data.y, scores >= 0.5)
    points, auc = roc_auc(scores, data.y)
    return EvalReport(conf, **evaluate_metrics(conf), roc_points=points, auc=auc, per_fold=per_fold,
                      scores=[float(s) for s in scores], labels=[int(v) for v in data.y])


def _order_key(value):
    if value is None:
        return (2, 0)  # unbounded settings sort last
    if isinstance(value, str):
        return (1, value)
    return (0, float(value))


def grid_search(family: str, grid: dict, data: Dataset, k: int = 10, seed: int = 0, *,
                base: dict | None = None, trace: list | None = None,
                workers: int | None = None) -> tuple[ClassifierSpec, EvalReport]:
    """Cross-validate every grid point; best accuracy, then f1_w, then smallest hyperparameters."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise EmptyGrid("grid must name at least one value per hyperparameter")
    names = sorted(grid)
    best = None
    for values in itertools.product(*(grid[n] for n in names)):
        params = {**(base or {}), **dict(zip(names, values))}
        spec = ClassifierSpec(family, params, seed)
        report = cross_validate(spec, data, k, seed, workers)
        if trace is not None:
            trace.append((spec, report))
        key = (-report.accuracy, -report.f1_w, tuple(_order_key(v) for v in values))
        if best is None or key < best[0]:
            best = (key, spec, report)
    return best[1], best[2]


REPORT_COLUMNS = ("Classifier", "Precision", "Recall", "F1", "Accuracy", "AUC")


def report_csv(results: dict[str, EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for family, r in results.items():
        w.writerow([family, *(f"{v:.4f}" for v in (r.precision_w, r.recall_w, r.f1_w, r.accuracy, r.auc))])
    return buf.getvalue()


def roc_csv(report: EvalReport) -> str:
    lines = ["fpr,tpr"] + [f"{a!r},{b!r}" for a, b in report.roc_points]
    return "\n".join(lines) + "\n"
