import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazemark.aoi import default_aoi_set, default_layouts
from gazemark.errors import EmptyTable
from gazemark.events import FixationEvent, SaccadeEvent
from gazemark.features import (
    FEATURE_SETS, FIXATION_COLUMNS, SACCADE_COLUMNS, build_aoi_features, build_event_features, build_feature_set,
    describe, event_schema,
)
from gazemark.ingest import ParticipantMeta, degrees_to_pixels, pixels_to_degrees
from gazemark.table_io import export_table, name_from_filename, parse_table, table_filename

META = {"A01": ParticipantMeta("A01", 22, "female", "ADHD"), "N01": ParticipantMeta("N01", 25, "male", "NonADHD")}


def fix(t, dur, at=(0.0, 0.0), pupil=3.4):
    return FixationEvent(t, t + dur, dur, at, 0.1, pupil, pupil + 0.1)


def sac(t, dur, amp, peak):
    return SaccadeEvent(t, t + dur, dur, amp, peak, min(peak, amp / (dur / 1000)), (0.0, 0.0), (amp, 0.0))


def test_describe():
    d = describe([200.0])
    assert (d["count"], d["total"], d["mean"], d["std"]) == (1.0, 200.0, 200.0, 0.0)
    d = describe([100.0, 200.0, 300.0])
    assert d["mean"] == 200.0
    assert d["std"] == pytest.approx(math.sqrt(20000 / 3))
    assert round(d["std"], 2) == 81.65
    assert describe([])["count"] == 0.0


def test_single_fixation_unit():
    table = build_event_features({("A01", "S01"): [fix(0, 200)]}, META, "fixation")
    v = table.rows[0].values
    assert (v["fixation_count"], v["fixation_duration_total_ms"], v["fixation_duration_mean_ms"],
            v["fixation_duration_std_ms"]) == (1.0, 200.0, 200.0, 0.0)


def test_combined_schema_is_union():
    fx = [n for n, _ in event_schema("fixation")]
    sc = [n for n, _ in event_schema("saccade")]
    cb = [n for n, _ in event_schema("combined")]
    assert len(cb) == len(set(cb))
    assert set(cb) >= set(fx) | set(sc)
    assert set(FIXATION_COLUMNS) <= set(cb) and set(SACCADE_COLUMNS) <= set(cb)


def test_combined_restricted_equals_fixation(detected, meta):
    for gran in ("sentence", "participant"):
        fx = build_event_features(detected, meta, "fixation", gran)
        cb = build_event_features(detected, meta, "combined", gran)
        assert cb.restrict(fx.feature_names) == fx


def test_class_counts(detected, meta):
    table = build_event_features(detected, meta, "saccade")
    counts = table.class_counts()
    assert counts["ADHD"] == sum(r.label == "ADHD" for r in table.rows)
    assert sum(counts.values()) == len(table.rows)


def test_granularities(detected, meta, cohort):
    n_rec = len(cohort.recordings)
    sent = build_event_features(detected, meta, "fixation", "sentence")
    assert len(sent.rows) + sent.dropped_units == n_rec
    scene = build_event_features(detected, meta, "fixation", "scene", scene_map=cohort.aois.scene_map)
    assert len(scene.rows) == 14 * 12
    part = build_event_features(detected, meta, "fixation", "participant")
    assert len(part.rows) == 14
    event = build_event_features(detected, meta, "fixation", "event")
    assert len(event.rows) == sum(1 for evs in detected.values() for e in evs if e.kind == "fixation")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(20, 400), st.floats(0.5, 10), st.floats(50, 500)),
                min_size=1, max_size=12), st.randoms())
def test_permutation_invariance(spec, rnd):
    events = [fix(100 * i, d) if is_fix else sac(100 * i, d / 10, a, p) for i, (is_fix, d, a, p) in enumerate(spec)]
    shuffled = events[:]
    rnd.shuffle(shuffled)
    a = build_event_features({("A01", "S01"): events}, META, "combined")
    b = build_event_features({("A01", "S01"): shuffled}, META, "combined")
    assert len(a.rows) == len(b.rows)
    for ra, rb in zip(a.rows, b.rows):
        for k, va in ra.values.items():
            if isinstance(va, float):
                assert va == pytest.approx(rb.values[k], rel=1e-12, abs=1e-12)
            else:
                assert va == rb.values[k]


def test_aoi_unit_counts():
    aois = default_aoi_set()
    lay = default_layouts()[0]
    sentence_only = lay.word_centers_px[0]
    crit = lay.word_centers_px[lay.critical_index]

    def at(x_px):
        return pixels_to_degrees(x_px, lay.line_y_px)

    events = [fix(0, 200, at(sentence_only)), fix(300, 200, at(sentence_only + 10)), fix(600, 150, at(crit))]
    table = build_aoi_features({("A01", lay.stimulus_id): events}, aois, META)
    v = table.rows[0].values
    assert (v["fix_count_aoi1"], v["fix_count_aoi2"], v["fix_count_aoi3"]) == (2.0, 1.0, 0.0)
    assert v["fix_duration_aoi1"] == 400.0
    # nothing in the letter box: zero statistics, pupil imputed from the participant mean
    assert v["fix_duration_aoi3"] == 0.0
    assert v["fix_imputed_aoi3"] == 1.0
    assert v["pupil_left_aoi3"] == pytest.approx(3.4)
    assert v["sac_imputed_aoi1"] == 1.0


def test_candidate_rows(detected, meta, cohort):
    table = build_aoi_features(detected, cohort.aois, meta, "sentence_based")
    assert len(table.rows) + table.dropped_units == 14 * 42


@pytest.mark.parametrize("fs", FEATURE_SETS)
@pytest.mark.parametrize("fmt", ["csv", "arff"])
def test_round_trip(detected, meta, cohort, fs, fmt):
    table = build_feature_set(fs, detected, meta, cohort.aois)
    data = export_table(table, fmt)
    name, gran = name_from_filename(table_filename(table, fmt))
    back = parse_table(data, fmt, gran, name)
    assert back == table
    assert back.name == table.name
    assert export_table(back, fmt) == data


def test_one_row_csv():
    table = build_event_features({("A01", "S01"): [fix(0, 200)]}, META, "fixation")
    lines = export_table(table, "csv").decode().splitlines()
    assert len(lines) == 2


def test_arff_label_attribute():
    table = build_event_features({("A01", "S01"): [fix(0, 200)], ("N01", "S01"): [fix(0, 300)]}, META, "fixation")
    text = export_table(table, "arff").decode()
    attrs = [ln for ln in text.splitlines() if ln.lower().startswith("@attribute")]
    assert attrs[-1] == "@attribute label {ADHD,NonADHD}"
    assert text.splitlines()[0].lower().startswith("@relation")


def test_empty_table_export():
    table = build_event_features({("A01", "S01"): []}, META, "fixation")
    assert table.dropped_units == 1
    with pytest.raises(EmptyTable):
        export_table(table)
