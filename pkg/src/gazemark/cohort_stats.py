"""Reading-span scoring and two-group t-tests."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from scipy import stats

from .errors import DegenerateVariance, InconsistentCounts
from .ingest import ParticipantMeta

SET_SIZES = range(2, 6)


@dataclass(frozen=True)
class RspanResult:
    participant_id: str
    letters_presented: int
    letters_recalled_in_order: int

    @property
    def score(self) -> float:
        return self.letters_recalled_in_order / self.letters_presented


def rspan_score(recall_log: Iterable[tuple[int, int]], participant_id: str = "") -> RspanResult:
    """Pool (presented, recalled-in-order) counts over every sentence set."""
    presented = recalled = 0
    n_sets = 0
    for i, (shown, got) in enumerate(recall_log):
        if shown not in SET_SIZES:
            raise InconsistentCounts(f"set {i}: {shown} letters presented, sets hold 2 to 5")
        if not 0 <= got <= shown:
            raise InconsistentCounts(f"set {i}: {got} recalled out of {shown}")
        presented += shown
        recalled += got
        n_sets += 1
    if n_sets == 0:
        raise InconsistentCounts("empty recall log")
    return RspanResult(participant_id, presented, recalled)


@dataclass(frozen=True)
class TTest:
    t: float
    df: float
    p_one: float
    p_two: float
    variant: str

    def p(self, tail: str = "two") -> float:
        if tail not in ("one", "two"):
            raise ValueError("tail must be 'one' or 'two'")
        return self.p_one if tail == "one" else self.p_two


def _moments(xs: Sequence[float]) -> tuple[int, float, float]:
    n = len(xs)
    m = math.fsum(xs) / n
    var = math.fsum((x - m) ** 2 for x in xs) / (n - 1)
    return n, m, var


def independent_t_test(group_a: Sequence[float], group_b: Sequence[float], variant: str = "pooled") -> TTest:
    """t statistic for mean(a) - mean(b).

    The one-tailed p is taken in the direction of the observed difference,
    so it is always half the two-tailed value.
    """
    if variant not in ("pooled", "welch"):
        raise ValueError("variant must be 'pooled' or 'welch'")
    if len(group_a) < 2 or len(group_b) < 2:
        raise DegenerateVariance("each group needs at least two values")
    na, ma, va = _moments(group_a)
    nb, mb, vb = _moments(group_b)
    if variant == "pooled":
        df = float(na + nb - 2)
        sp2 = ((na - 1) * va + (nb - 1) * vb) / df
        se2 = sp2 * (1 / na + 1 / nb)
    else:
        se2 = va / na + vb / nb
        df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)) if se2 > 0 else 0.0
    if se2 <= 0:
        raise DegenerateVariance("both groups have zero variance")
    t = (ma - mb) / math.sqrt(se2)
    tail = float(stats.t.sf(abs(t), df))
    return TTest(t, df, tail, min(1.0, 2 * tail), variant)


def rspan_scores_csv(results: Sequence[RspanResult], meta: dict[str, ParticipantMeta]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["participant_id", "age", "gender", "score", "label"])
    for r in results:
        m = meta[r.participant_id]
        age = int(m.age) if float(m.age).is_integer() else m.age
        w.writerow([r.participant_id, age, m.gender, repr(r.score), m.label])
    return buf.getvalue()


def t_test_csv(tests: Sequence[TTest]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "t", "df", "p_one_tailed", "p_two_tailed"])
    for t in tests:
        w.writerow([t.variant, repr(t.t), repr(t.df), repr(t.p_one), repr(t.p_two)])
    return buf.getvalue()


def group_scores(results: Sequence[RspanResult], meta: dict[str, ParticipantMeta]) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {"ADHD": [], "NonADHD": []}
    for r in results:
        out[meta[r.participant_id].label].append(r.score)
    return out


__all__ = ["RspanResult", "rspan_score", "TTest", "independent_t_test", "rspan_scores_csv", "t_test_csv",
           "group_scores", "SET_SIZES"]
