"""Acceptance criteria 1-8. Each test prints one PASS/FAIL line, then asserts."""
import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from gazemark.cli import main as cli_main
from gazemark.cohort_stats import independent_t_test, rspan_score
from gazemark.errors import TooFewInstances
from gazemark.events import DetectorParams, SaccadeEvent, detect, match_events, saccades
from gazemark.features import FEATURE_SETS, build_feature_set
from gazemark.ingest import ScreenGeometry, degrees_to_pixels, pixels_to_degrees
from gazemark.mainseq import fit_main_sequence, predict_duration, predict_peak_velocity
from gazemark.ml import (
    FAMILIES, ClassifierSpec, Confusion, Dataset, cross_validate, evaluate_metrics, roc_auc, stratified_folds,
)
from gazemark.synth import AdhdEffects, CohortSpec, generate_cohort
from gazemark.table_io import export_table, name_from_filename, parse_table, table_filename

TABLE1 = Path(__file__).resolve().parents[1] / "fixtures" / "table1_rspan" / "inputs"


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, what: str, elapsed: float, budget: float | None = None):
        timing = f"{elapsed:.2f} s" + (f" (limit {budget:g} s)" if budget else "")
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {what}; {timing}")
    return emit


def within(elapsed, budget):
    return elapsed < budget


def detected_events(cohort, params=DetectorParams()):
    return {(r.participant_id, r.stimulus_id): detect(r, params) for r in cohort.recordings}


def dataset(cohort, events, feature_set):
    meta = {m.id: m for m in cohort.participants}
    return Dataset.from_table(build_feature_set(feature_set, events, meta, cohort.aois))


def normative_saccades(amps, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for a in amps:
        v = predict_peak_velocity(a) * (1 + noise * rng.standard_normal())
        d = predict_duration(a) * (1 + noise * rng.standard_normal())
        out.append(SaccadeEvent(0.0, d, d, float(a), v, min(v, a / (d / 1000))))
    return out


def mann_whitney(scores, labels):
    s, y = np.asarray(scores), np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0) + 0.5 * (diff == 0)).sum() / (len(pos) * len(neg)))


def test_criterion_1_main_sequence_exactness(verdict):
    t0 = time.perf_counter()
    v14 = predict_peak_velocity(14.0)
    d10 = predict_duration(10.0)
    exact = math.isclose(v14, 316.060, rel_tol=1e-6) and math.isclose(d10, 43.0, rel_tol=1e-6)
    amps = np.linspace(0.0, 200.0, 10_000)
    v = predict_peak_velocity(amps)
    d = predict_duration(amps)
    shape = bool(np.all(np.diff(v) > 0) and np.all(np.diff(d) > 0) and np.all(v < 500.0)
                 and 500.0 - v[-1] < 1e-3 and v[0] == 0.0 and d[0] == 21.0)
    elapsed = time.perf_counter() - t0
    ok = exact and shape and within(elapsed, 1)
    verdict(1, ok, f"V(14)={v14:.3f} dps, D(10)={d10:g} ms, 10,000-point sweep monotone and below 500", elapsed, 1)
    assert ok


def test_criterion_2_fit_recovery(verdict):
    t0 = time.perf_counter()
    m = fit_main_sequence(normative_saccades(np.linspace(0.5, 25.0, 200)))
    clean = (abs(m.theta_max_dps - 500) <= 1e-3 and abs(m.c_deg - 14) <= 1e-3
             and abs(m.slope_ms_per_deg - 2.2) <= 1e-6 and abs(m.intercept_ms - 21) <= 1e-6)
    worst_theta = worst_c = 0.0
    for seed in range(20):
        amps = np.random.default_rng(1000 + seed).uniform(0.5, 25.0, 200)
        fit = fit_main_sequence(normative_saccades(amps, 0.05, seed))
        worst_theta = max(worst_theta, abs(fit.theta_max_dps / 500 - 1))
        worst_c = max(worst_c, abs(fit.c_deg / 14 - 1))
    elapsed = time.perf_counter() - t0
    ok = clean and worst_theta <= 0.10 and worst_c <= 0.15 and within(elapsed, 10)
    verdict(2, ok, f"noise-free ({m.theta_max_dps:.6f}, {m.c_deg:.6f}, {m.slope_ms_per_deg:.8f}, {m.intercept_ms:.8f}); "
                   f"5% noise worst |dtheta| {worst_theta:.1%}, |dC| {worst_c:.1%} over 20 trials", elapsed, 10)
    assert ok


def test_criterion_3_detector_oracle(verdict):
    t0 = time.perf_counter()
    thresholds = (20.0, 30.0, 45.0, 70.0, 110.0)
    f1s, violations, checked = [], 0, 0
    for seed in range(1, 6):
        cohort = generate_cohort(CohortSpec(seed=seed))
        counts = []
        for th in thresholds:
            events = detected_events(cohort, DetectorParams(velocity_threshold_dps=th))
            counts.append([len(saccades(events[k])) for k in sorted(events)])
            if th == 30.0:
                total = None
                for key, evs in events.items():
                    m = match_events(evs, cohort.truth.events[key])
                    total = m if total is None else total + m
                f1s.append(total.f1)
        counts = np.array(counts)
        violations += int((np.diff(counts, axis=0) > 0).sum())
        checked += counts.shape[1]
    elapsed = time.perf_counter() - t0
    ok = min(f1s) >= 0.95 and violations == 0 and within(elapsed, 30)
    verdict(3, ok, f"F1 per seed {', '.join(f'{f:.4f}' for f in f1s)}; {violations} count increases over "
                   f"{checked} recordings x {len(thresholds)} thresholds", elapsed, 30)
    assert ok


def test_criterion_4_metrics(verdict):
    t0 = time.perf_counter()
    m = evaluate_metrics(Confusion(tp=4, fn=1, fp=2, tn=3))
    hand = (round(m["accuracy"], 4), round(m["precision_w"], 4), round(m["recall_w"], 4)) == (0.7, 0.7083, 0.7)
    hand &= math.isclose(m["precision_w"], (5 * 4 / 6 + 5 * 3 / 4) / 10, rel_tol=1e-12)
    rng = np.random.default_rng(44)
    worst_mw = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 80))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 20, n) / 20 if rng.random() < 0.5 else rng.random(n)
        worst_mw = max(worst_mw, abs(roc_auc(scores, labels)[1] - mann_whitney(scores, labels)))
    worst_tf = 0.0
    for _ in range(20):
        n = int(rng.integers(4, 60))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = rng.integers(-300, 300, n) / 100
        base = roc_auc(scores, labels)[1]
        for f in (np.exp, lambda s: s ** 3 + 2 * s, lambda s: 1 / (1 + np.exp(-s))):
            worst_tf = max(worst_tf, abs(roc_auc(f(scores), labels)[1] - base))
    elapsed = time.perf_counter() - t0
    ok = hand and worst_mw <= 1e-9 and worst_tf <= 1e-12
    verdict(4, ok, f"acc {m['accuracy']:.4f}, prec_w {m['precision_w']:.4f}, rec_w {m['recall_w']:.4f}; "
                   f"max |AUC - MW| {worst_mw:.1e}; max transform drift {worst_tf:.1e}", elapsed)
    assert ok


def test_criterion_5_cv_protocol(verdict):
    t0 = time.perf_counter()
    y = np.r_[np.zeros(10, int), np.ones(10, int)]
    exact = all(
        sorted(y[f].tolist()) == [0, 1]
        for seed in range(10) for f in stratified_folds(y, 10, seed)
    )
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(0, 1, (30, 3)), rng.normal(0.7, 1, (30, 3))])
    data = Dataset(X, np.r_[np.zeros(30, int), np.ones(30, int)])
    identical = all(
        cross_validate(ClassifierSpec(f, {}, 9), data, 10, 9).to_json()
        == cross_validate(ClassifierSpec(f, {}, 9), data, 10, 9).to_json()
        for f in FAMILIES
    )
    small = Dataset(rng.normal(size=(14, 2)), np.r_[np.zeros(9, int), np.ones(5, int)])
    try:
        cross_validate(ClassifierSpec("logistic"), small, 6, 0)
        clean = False
    except TooFewInstances:
        clean = True
    elapsed = time.perf_counter() - t0
    ok = exact and identical and clean
    verdict(5, ok, f"1/1 folds {exact}, byte-identical reports for {len(FAMILIES)} families {identical}, "
                   f"k > min class raises TooFewInstances {clean}", elapsed)
    assert ok


def test_criterion_6_pipeline_discrimination(verdict):
    t0 = time.perf_counter()
    correct = dict.fromkeys(FAMILIES, 0)
    total = dict.fromkeys(FAMILIES, 0)
    for seed in range(1, 11):
        cohort = generate_cohort(CohortSpec(seed=seed, adhd_effects=AdhdEffects.none()))
        data = dataset(cohort, detected_events(cohort), "combined")
        for fam in FAMILIES:
            params = {"n_trees": 50} if fam == "random_forest" else {}
            r = cross_validate(ClassifierSpec(fam, params, seed), data, 10, seed)
            correct[fam] += r.confusion.tp + r.confusion.tn
            total[fam] += r.confusion.n
    null_acc = {f: correct[f] / total[f] for f in FAMILIES}
    null_ok = all(0.40 <= a <= 0.60 for a in null_acc.values())

    strong = generate_cohort(CohortSpec(seed=21, adhd_effects=AdhdEffects(fixation_y_offset_deg=1.5,
                                                                           scanpath_dispersion_scale=2.0)))
    rf_strong = cross_validate(ClassifierSpec("random_forest", {}, 21),
                               dataset(strong, detected_events(strong), "aoi-sentence"), 10, 21).accuracy

    sac_only = generate_cohort(CohortSpec(seed=22, adhd_effects=AdhdEffects(scanpath_dispersion_scale=2.0)))
    events = detected_events(sac_only)
    acc = {fs: cross_validate(ClassifierSpec("random_forest", {}, 22), dataset(sac_only, events, fs), 10, 22).accuracy
           for fs in ("saccade", "fixation")}
    elapsed = time.perf_counter() - t0
    ok = null_ok and rf_strong >= 0.95 and acc["saccade"] >= acc["fixation"] and within(elapsed, 60)
    null_txt = ", ".join(f"{f} {a:.3f}" for f, a in null_acc.items())
    verdict(6, ok, f"null pooled accuracy [{null_txt}]; strong RF {rf_strong:.4f}; saccade-only effect: "
                   f"saccade {acc['saccade']:.4f} vs fixation {acc['fixation']:.4f}", elapsed, 60)
    assert ok


def test_criterion_7_table1(verdict):
    t0 = time.perf_counter()
    published = {"3": 0.86, "7": 0.88, "9": 0.60, "17": 0.55, "20": 0.57, "25": 0.88, "26": 0.74,
                 "30": 0.51, "34": 0.67, "35": 0.76, "36": 0.71, "37": 0.60, "38": 0.40, "47": 0.62}
    logs: dict[str, list] = {}
    with open(TABLE1 / "recall_log.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            logs.setdefault(row["participant_id"], []).append((int(row["presented"]), int(row["recalled_in_order"])))
    with open(TABLE1 / "participants.csv", newline="") as fh:
        labels = {r["participant_id"]: r["label"] for r in csv.DictReader(fh)}
    scores = {pid: rspan_score(log, pid).score for pid, log in logs.items()}
    exact = scores == published
    groups = {lab: [scores[p] for p in sorted(scores, key=int) if labels[p] == lab] for lab in ("NonADHD", "ADHD")}
    tt = independent_t_test(groups["NonADHD"], groups["ADHD"], "pooled")
    elapsed = time.perf_counter() - t0
    ok = exact and abs(tt.t - 1.57) < 0.005 and tt.df == 12 and 0.06 <= tt.p_one <= 0.08 and within(elapsed, 1)
    verdict(7, ok, f"14/14 scores exact {exact}; t={tt.t:.4f}, df={tt.df:g}, p one-tailed {tt.p_one:.4f}, "
                   f"two-tailed {tt.p_two:.4f}", elapsed, 1)
    assert ok


def test_criterion_8_round_trips(verdict, tmp_path, monkeypatch):
    t0 = time.perf_counter()
    cohort = generate_cohort(CohortSpec(n_per_group=2, seed=8))
    events = detected_events(cohort)
    meta = {m.id: m for m in cohort.participants}
    tables_ok = True
    for fs in FEATURE_SETS:
        table = build_feature_set(fs, events, meta, cohort.aois)
        for fmt in ("csv", "arff"):
            raw = export_table(table, fmt)
            name, gran = name_from_filename(table_filename(table, fmt))
            back = parse_table(raw, fmt, gran, name)
            tables_ok &= back == table and export_table(back, fmt) == raw

    geo = ScreenGeometry()
    rng = np.random.default_rng(8)
    px, py = rng.uniform(0, geo.width_px, 10_000), rng.uniform(0, geo.height_px, 10_000)
    dx, dy = pixels_to_degrees(px, py, geo)
    bx, by = degrees_to_pixels(dx, dy, geo)
    rx, ry = pixels_to_degrees(bx, by, geo)
    geo_err = float(max(np.abs(rx - dx).max(), np.abs(ry - dy).max()))

    monkeypatch.chdir(tmp_path)
    runs = []
    for out in ("run1", "run2"):
        assert cli_main(["pipeline", "--out", out, "--seed", "8"]) == 0
        root = tmp_path / out
        runs.append({str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()})
    same_tree = runs[0] == runs[1] and len(runs[0]) > 20
    elapsed = time.perf_counter() - t0
    ok = tables_ok and geo_err <= 1e-9 and same_tree
    verdict(8, ok, f"CSV/ARFF identity on {len(FEATURE_SETS)} feature sets {tables_ok}; "
                   f"pixel/degree round trip max error {geo_err:.1e} deg; pipeline trees identical {same_tree} "
                   f"({len(runs[0])} files)", elapsed)
    assert ok
