import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazemark.cohort_stats import independent_t_test, rspan_score
from gazemark.errors import DegenerateVariance, InconsistentCounts

NON_ADHD = [0.86, 0.88, 0.60, 0.55, 0.57, 0.88, 0.74]
ADHD = [0.51, 0.67, 0.76, 0.71, 0.60, 0.40, 0.62]
TABLE1 = Path(__file__).resolve().parents[1] / "fixtures" / "table1_rspan" / "inputs"

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=12).filter(
    lambda xs: np.ptp(xs) > 1e-3)


def test_rspan_examples():
    assert rspan_score([(5, 3)]).score == 0.6
    assert rspan_score([(2, 2), (3, 3), (4, 4), (5, 5)]).score == 1.0
    r = rspan_score([(2, 1), (4, 3)], "p")
    assert (r.letters_presented, r.letters_recalled_in_order, r.participant_id) == (6, 4, "p")


@pytest.mark.parametrize("log", [[(5, 6)], [(6, 2)], [(1, 1)], [(3, -1)], []])
def test_rspan_inconsistent(log):
    with pytest.raises(InconsistentCounts):
        rspan_score(log)


def test_table1_scores_from_logs():
    logs: dict[str, list] = {}
    with open(TABLE1 / "recall_log.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            logs.setdefault(row["participant_id"], []).append((int(row["presented"]), int(row["recalled_in_order"])))
    assert rspan_score(logs["3"]).score == pytest.approx(0.86, abs=1e-12)
    with open(TABLE1 / "participants.csv", newline="") as fh:
        labels = {r["participant_id"]: r["label"] for r in csv.DictReader(fh)}
    got = {lab: [rspan_score(logs[p]).score for p in labels if labels[p] == lab] for lab in ("NonADHD", "ADHD")}
    assert got["NonADHD"] == pytest.approx(NON_ADHD, abs=1e-12)
    assert got["ADHD"] == pytest.approx(ADHD, abs=1e-12)


def test_table1_t_test():
    pooled = independent_t_test(NON_ADHD, ADHD)
    assert pooled.df == 12
    assert pooled.t == pytest.approx(1.5733841, abs=1e-6)
    assert pooled.p("one") == pytest.approx(0.070806, abs=1e-6)
    assert pooled.p("two") == pytest.approx(0.141612, abs=1e-6)
    welch = independent_t_test(NON_ADHD, ADHD, "welch")
    assert welch.t == pytest.approx(pooled.t)
    assert welch.df == pytest.approx(11.52, abs=0.005)


def test_identical_groups():
    r = independent_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.t == 0 and r.p_two == 1.0


def test_extreme_separation():
    a = [0.0, 1.0, -1.0, 0.5, -0.5]
    sd = float(np.std(a, ddof=1))
    assert independent_t_test(a, [x + 10 * sd for x in a]).p_two < 1e-6


def test_degenerate():
    with pytest.raises(DegenerateVariance):
        independent_t_test([1.0, 1.0], [2.0, 2.0])
    with pytest.raises(DegenerateVariance):
        independent_t_test([1.0], [2.0, 3.0])
    with pytest.raises(ValueError):
        independent_t_test([1.0, 2.0], [2.0, 3.0], "paired")


@settings(max_examples=100, deadline=None)
@given(samples, samples, st.sampled_from(["pooled", "welch"]))
def test_swap_antisymmetry(a, b, variant):
    ab, ba = independent_t_test(a, b, variant), independent_t_test(b, a, variant)
    assert ab.t == pytest.approx(-ba.t, rel=1e-9, abs=1e-12)
    assert ab.p_two == pytest.approx(ba.p_two, rel=1e-9)
    assert ab.df == pytest.approx(ba.df, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(samples, samples, st.floats(1e-3, 1e3), st.sampled_from(["pooled", "welch"]))
def test_scale_invariance(a, b, k, variant):
    r = independent_t_test(a, b, variant)
    s = independent_t_test([k * x for x in a], [k * x for x in b], variant)
    assert s.t == pytest.approx(r.t, rel=1e-7, abs=1e-9)
    assert s.df == pytest.approx(r.df, rel=1e-7)
    assert s.p_two == pytest.approx(r.p_two, rel=1e-6, abs=1e-12)


def test_cdf_against_monte_carlo():
    rng = np.random.default_rng(12)
    df = 12
    draws = rng.standard_normal(1_000_000) / np.sqrt(rng.chisquare(df, 1_000_000) / df)
    # build two groups of 7 whose pooled t equals each probe value
    base = np.array([-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
    se = np.sqrt(np.var(base, ddof=1) * (2 / 7))
    for t in (0.5, 1.0, 1.5733841, 2.2, 3.0):
        r = independent_t_test(list(base + t * se), list(base))
        assert r.t == pytest.approx(t)
        assert r.p_one == pytest.approx(np.mean(draws > t), abs=2e-3)
