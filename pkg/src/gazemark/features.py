"""Labelled feature tables built from detected events.

Five feature sets are available: ``fixation``, ``saccade`` and ``combined``
(event features at a chosen granularity) and ``aoi-scene`` /
``aoi-sentence`` (AOI-restricted features per 2-5-sentence set or per
sentence).

Conventions:

* standard deviations are population standard deviations (0 for one value);
* "fixation duration std" is the spread of fixation *durations* in ms, not
  spatial dispersion;
* statistics of an empty event set are imputed as 0, pupil diameters as
  the participant's own mean, and a ``*_imputed`` companion column records
  it;
* sums go through ``math.fsum`` so feature values do not depend on event
  order.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .aoi import AoiKind, AoiSet, map_events_to_aois
from .errors import GazemarkError
from .events import Event, FixationEvent, SaccadeEvent
from .ingest import GENDERS, LABELS, ParticipantMeta, ScreenGeometry

GRANULARITIES = ("event", "sentence", "scene", "participant")
EVENT_MODES = ("fixation", "saccade", "combined")
AOI_MODES = ("scene_based", "sentence_based")
FEATURE_SETS = ("fixation", "saccade", "combined", "aoi-scene", "aoi-sentence")

NUMERIC = "numeric"

GENDER_ATTR = ("gender", GENDERS)

FIXATION_COLUMNS = (
    "fixation_count",
    "fixation_duration_total_ms",
    "fixation_duration_mean_ms",
    "fixation_duration_std_ms",
    "pupil_left_mm",
    "pupil_right_mm",
)
SACCADE_COLUMNS = (
    "saccade_count",
    "saccade_duration_total_ms",
    "saccade_duration_mean_ms",
    "saccade_duration_std_ms",
    "saccade_amplitude_max_deg",
    "saccade_amplitude_min_deg",
    "saccade_amplitude_mean_deg",
    "saccade_amplitude_std_deg",
    "saccade_peak_velocity_max_dps",
    "saccade_peak_velocity_mean_dps",
    "saccade_peak_velocity_std_dps",
)


def _aoi_qualifier_columns() -> tuple[str, ...]:
    cols = [f"fix_count_aoi{k}" for k in (1, 2, 3)]
    cols += [f"fix_duration_aoi{k}" for k in (1, 2, 3)]
    cols += ["fix_duration_mean_aoi2", "fix_duration_std_aoi2"]
    cols += ["pupil_left_aoi2", "pupil_right_aoi2", "pupil_left_aoi3", "pupil_right_aoi3"]
    for stat in ("max", "min", "mean", "std"):
        cols += [f"sac_amplitude_{stat}_aoi{k}" for k in (1, 2, 3)]
    return tuple(cols)


AOI_QUALIFIER_COLUMNS = _aoi_qualifier_columns()
AOI_FLAG_COLUMNS = ("fix_imputed_aoi2", "fix_imputed_aoi3", "sac_imputed_aoi1", "sac_imputed_aoi2", "sac_imputed_aoi3")


@dataclass
class FeatureVector:
    participant_id: str
    instance_id: str
    values: dict[str, float | str]
    label: str


@dataclass
class FeatureTable:
    schema: list[tuple[str, object]]  # (name, "numeric" | tuple of nominal values)
    rows: list[FeatureVector]
    granularity: str
    name: str = "features"
    dropped_units: int = 0

    def __post_init__(self):
        names = [n for n, _ in self.schema]
        if len(set(names)) != len(names):
            raise GazemarkError("duplicate feature names in schema")
        for row in self.rows:
            if list(row.values) != names:
                raise GazemarkError(f"row {row.participant_id}/{row.instance_id} does not match the schema")
            if row.label not in LABELS:
                raise GazemarkError(f"bad label {row.label!r}")
            for n, kind in self.schema:
                v = row.values[n]
                if kind == NUMERIC:
                    if not isinstance(v, float) or math.isnan(v):
                        raise GazemarkError(f"{n}: numeric value required, got {v!r}")
                elif v not in kind:
                    raise GazemarkError(f"{n}: {v!r} not in {kind}")

    @property
    def feature_names(self) -> list[str]:
        return [n for n, _ in self.schema]

    def class_counts(self) -> dict[str, int]:
        counts = Counter(r.label for r in self.rows)
        return {label: counts.get(label, 0) for label in LABELS}

    def restrict(self, names: Sequence[str]) -> "FeatureTable":
        kinds = dict(self.schema)
        schema = [(n, kinds[n]) for n in names]
        rows = [FeatureVector(r.participant_id, r.instance_id, {n: r.values[n] for n in names}, r.label)
                for r in self.rows]
        return FeatureTable(schema, rows, self.granularity, self.name, self.dropped_units)

    def __eq__(self, other):
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (self.schema == other.schema and self.granularity == other.granularity
                and self.rows == other.rows)

    def matrix(self) -> tuple[np.ndarray, np.ndarray, list[bool]]:
        """(X, y, nominal_mask); nominal values become their index in the domain, y is 1 for ADHD."""
        X = np.empty((len(self.rows), len(self.schema)))
        nominal = [kind != NUMERIC for _, kind in self.schema]
        for i, row in enumerate(self.rows):
            for j, (n, kind) in enumerate(self.schema):
                v = row.values[n]
                X[i, j] = v if kind == NUMERIC else kind.index(v)
        y = np.array([1 if r.label == "ADHD" else 0 for r in self.rows], dtype=int)
        return X, y, nominal


# -- statistics ------------------------------------------------------------------

def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _pstd(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))


def describe(xs: Sequence[float]) -> dict[str, float]:
    """count/total/mean/std/max/min with the empty-set convention (all zeros)."""
    xs = list(xs)
    if not xs:
        return {"count": 0.0, "total": 0.0, "mean": 0.0, "std": 0.0, "max": 0.0, "min": 0.0}
    return {"count": float(len(xs)), "total": math.fsum(xs), "mean": _mean(xs), "std": _pstd(xs),
            "max": float(max(xs)), "min": float(min(xs))}


def participant_pupil_means(events_by_recording: Mapping[tuple[str, str], Sequence[Event]]) -> dict[str, tuple[float, float]]:
    left: dict[str, list[float]] = {}
    right: dict[str, list[float]] = {}
    for (pid, _), events in events_by_recording.items():
        for ev in events:
            if isinstance(ev, FixationEvent):
                if ev.mean_pupil_left_mm is not None:
                    left.setdefault(pid, []).append(ev.mean_pupil_left_mm)
                if ev.mean_pupil_right_mm is not None:
                    right.setdefault(pid, []).append(ev.mean_pupil_right_mm)
    pids = {pid for pid, _ in events_by_recording}
    return {pid: (_mean(left[pid]) if left.get(pid) else 0.0, _mean(right[pid]) if right.get(pid) else 0.0)
            for pid in pids}


def _pupils(fixes: Sequence[FixationEvent], fallback: tuple[float, float]) -> tuple[float, float, bool]:
    left = [f.mean_pupil_left_mm for f in fixes if f.mean_pupil_left_mm is not None]
    right = [f.mean_pupil_right_mm for f in fixes if f.mean_pupil_right_mm is not None]
    imputed = not left or not right
    return (_mean(left) if left else fallback[0], _mean(right) if right else fallback[1], imputed)


def fixation_values(fixes: Sequence[FixationEvent], pupil_fallback: tuple[float, float]) -> dict[str, float]:
    d = describe([f.duration_ms for f in fixes])
    pl, pr, imputed = _pupils(fixes, pupil_fallback)
    return {
        "fixation_count": d["count"],
        "fixation_duration_total_ms": d["total"],
        "fixation_duration_mean_ms": d["mean"],
        "fixation_duration_std_ms": d["std"],
        "pupil_left_mm": float(pl),
        "pupil_right_mm": float(pr),
        "pupil_imputed": 1.0 if imputed else 0.0,
    }


def saccade_values(sacs: Sequence[SaccadeEvent]) -> dict[str, float]:
    dur = describe([s.duration_ms for s in sacs])
    amp = describe([s.amplitude_deg for s in sacs])
    vel = describe([s.peak_velocity_dps for s in sacs])
    return {
        "saccade_count": dur["count"],
        "saccade_duration_total_ms": dur["total"],
        "saccade_duration_mean_ms": dur["mean"],
        "saccade_duration_std_ms": dur["std"],
        "saccade_amplitude_max_deg": amp["max"],
        "saccade_amplitude_min_deg": amp["min"],
        "saccade_amplitude_mean_deg": amp["mean"],
        "saccade_amplitude_std_deg": amp["std"],
        "saccade_peak_velocity_max_dps": vel["max"],
        "saccade_peak_velocity_mean_dps": vel["mean"],
        "saccade_peak_velocity_std_dps": vel["std"],
        "saccade_imputed": 0.0 if sacs else 1.0,
    }


def event_schema(mode: str, include_gender: bool = True) -> list[tuple[str, object]]:
    schema: list[tuple[str, object]] = [GENDER_ATTR] if include_gender else []
    if mode in ("fixation", "combined"):
        schema += [(c, NUMERIC) for c in FIXATION_COLUMNS] + [("pupil_imputed", NUMERIC)]
    if mode in ("saccade", "combined"):
        schema += [(c, NUMERIC) for c in SACCADE_COLUMNS]
    if mode == "combined":
        schema += [("saccade_imputed", NUMERIC)]
    if mode not in EVENT_MODES:
        raise ValueError(f"mode must be one of {EVENT_MODES}")
    return schema


# -- grouping ----------------------------------------------------------------------

def _units(
    events_by_recording: Mapping[tuple[str, str], Sequence[Event]],
    granularity: str,
    scene_map: Mapping[str, str] | None,
    mode: str,
) -> dict[tuple[str, str], list[Event]]:
    """Group events into instance units keyed by (participant_id, instance_id)."""
    if granularity not in GRANULARITIES:
        raise ValueError(f"granularity must be one of {GRANULARITIES}")
    if granularity == "scene" and scene_map is None:
        raise GazemarkError("scene granularity needs a stimulus -> scene map")
    units: dict[tuple[str, str], list[Event]] = {}
    for (pid, sid), events in sorted(events_by_recording.items()):
        if granularity == "sentence":
            units.setdefault((pid, sid), []).extend(events)
        elif granularity == "scene":
            if sid not in scene_map:
                raise GazemarkError(f"stimulus {sid} has no scene")
            units.setdefault((pid, scene_map[sid]), []).extend(events)
        elif granularity == "participant":
            units.setdefault((pid, pid), []).extend(events)
        else:
            units.update(_event_units(pid, sid, events, mode))
    return units


def _event_units(pid, sid, events, mode):
    """Event granularity: one unit per event of the required kind.

    In combined mode a unit is a fixation plus the saccade that immediately
    follows it, when there is one.
    """
    out = {}
    k = 0
    for i, ev in enumerate(events):
        if mode == "saccade":
            if isinstance(ev, SaccadeEvent):
                out[(pid, f"{sid}#{k:04d}")] = [ev]
                k += 1
        elif isinstance(ev, FixationEvent):
            unit = [ev]
            if mode == "combined" and i + 1 < len(events) and isinstance(events[i + 1], SaccadeEvent):
                unit.append(events[i + 1])
            out[(pid, f"{sid}#{k:04d}")] = unit
            k += 1
    return out


def build_event_features(
    events_by_recording: Mapping[tuple[str, str], Sequence[Event]],
    meta: Mapping[str, ParticipantMeta],
    mode: str = "combined",
    granularity: str = "sentence",
    *,
    scene_map: Mapping[str, str] | None = None,
    include_gender: bool = True,
) -> FeatureTable:
    """Event-based feature table; units without fixations (or saccades in saccade mode) are dropped."""
    schema = event_schema(mode, include_gender)
    names = [n for n, _ in schema]
    pupil_fallback = participant_pupil_means(events_by_recording)
    rows = []
    dropped = 0
    for (pid, inst), events in sorted(_units(events_by_recording, granularity, scene_map, mode).items()):
        fixes = [e for e in events if isinstance(e, FixationEvent)]
        sacs = [e for e in events if isinstance(e, SaccadeEvent)]
        required = sacs if mode == "saccade" else fixes
        if not required:
            dropped += 1
            continue
        values: dict[str, float | str] = {}
        if include_gender:
            values["gender"] = meta[pid].gender
        if mode != "saccade":
            values.update(fixation_values(fixes, pupil_fallback.get(pid, (0.0, 0.0))))
        if mode != "fixation":
            values.update(saccade_values(sacs))
        rows.append(FeatureVector(pid, inst, {n: values[n] for n in names}, meta[pid].label))
    return FeatureTable(schema, rows, granularity, mode, dropped)


def aoi_schema(include_gender: bool = True, include_flags: bool = True) -> list[tuple[str, object]]:
    schema: list[tuple[str, object]] = [GENDER_ATTR] if include_gender else []
    schema += [(c, NUMERIC) for c in AOI_QUALIFIER_COLUMNS]
    if include_flags:
        schema += [(c, NUMERIC) for c in AOI_FLAG_COLUMNS]
    return schema


def aoi_values(mapped: Sequence[tuple[Event, AoiKind | None]], pupil_fallback: tuple[float, float]) -> dict[str, float]:
    by_kind_fix = {k: [] for k in (1, 2, 3)}
    by_kind_sac = {k: [] for k in (1, 2, 3)}
    for ev, kind in mapped:
        if kind is None:
            continue
        if isinstance(ev, FixationEvent):
            by_kind_fix[kind.index].append(ev)
        else:
            by_kind_sac[kind.index].append(ev)
    v: dict[str, float] = {}
    for k in (1, 2, 3):
        d = describe([f.duration_ms for f in by_kind_fix[k]])
        v[f"fix_count_aoi{k}"] = d["count"]
        v[f"fix_duration_aoi{k}"] = d["total"]
        if k == 2:
            v["fix_duration_mean_aoi2"] = d["mean"]
            v["fix_duration_std_aoi2"] = d["std"]
        if k in (2, 3):
            pl, pr, imputed = _pupils(by_kind_fix[k], pupil_fallback)
            v[f"pupil_left_aoi{k}"] = float(pl)
            v[f"pupil_right_aoi{k}"] = float(pr)
            v[f"fix_imputed_aoi{k}"] = 1.0 if (imputed or not by_kind_fix[k]) else 0.0
        a = describe([s.amplitude_deg for s in by_kind_sac[k]])
        for stat in ("max", "min", "mean", "std"):
            v[f"sac_amplitude_{stat}_aoi{k}"] = a[stat]
        v[f"sac_imputed_aoi{k}"] = 0.0 if by_kind_sac[k] else 1.0
    return v


def build_aoi_features(
    events_by_recording: Mapping[tuple[str, str], Sequence[Event]],
    aois: AoiSet,
    meta: Mapping[str, ParticipantMeta],
    mode: str = "sentence_based",
    *,
    geometry: ScreenGeometry = ScreenGeometry(),
    saccade_anchor: str = "landing",
    include_gender: bool = True,
    include_flags: bool = True,
) -> FeatureTable:
    """AOI feature table: one row per sentence or per sentence set (scene)."""
    if mode not in AOI_MODES:
        raise ValueError(f"mode must be one of {AOI_MODES}")
    granularity = "sentence" if mode == "sentence_based" else "scene"
    schema = aoi_schema(include_gender, include_flags)
    names = [n for n, _ in schema]
    pupil_fallback = participant_pupil_means(events_by_recording)
    units: dict[tuple[str, str], list[tuple[Event, AoiKind | None]]] = {}
    for (pid, sid), events in sorted(events_by_recording.items()):
        mapped = map_events_to_aois(events, aois, sid, geometry, saccade_anchor)
        key = (pid, sid if granularity == "sentence" else aois.scene_map[sid])
        units.setdefault(key, []).extend(mapped)
    rows = []
    dropped = 0
    for (pid, inst), mapped in sorted(units.items()):
        if not mapped:
            dropped += 1
            continue
        values: dict[str, float | str] = {}
        if include_gender:
            values["gender"] = meta[pid].gender
        values.update(aoi_values(mapped, pupil_fallback.get(pid, (0.0, 0.0))))
        rows.append(FeatureVector(pid, inst, {n: values[n] for n in names}, meta[pid].label))
    return FeatureTable(schema, rows, granularity, f"aoi-{granularity}", dropped)


def build_feature_set(
    feature_set: str,
    events_by_recording: Mapping[tuple[str, str], Sequence[Event]],
    meta: Mapping[str, ParticipantMeta],
    aois: AoiSet | None = None,
    granularity: str = "sentence",
    geometry: ScreenGeometry = ScreenGeometry(),
    include_gender: bool = True,
) -> FeatureTable:
    """Dispatch on the CLI feature-set name."""
    if feature_set in EVENT_MODES:
        return build_event_features(events_by_recording, meta, feature_set, granularity,
                                    scene_map=aois.scene_map if aois else None, include_gender=include_gender)
    if feature_set in ("aoi-scene", "aoi-sentence"):
        if aois is None:
            raise GazemarkError("AOI feature sets need an AOI file")
        mode = "scene_based" if feature_set == "aoi-scene" else "sentence_based"
        return build_aoi_features(events_by_recording, aois, meta, mode, geometry=geometry,
                                  include_gender=include_gender)
    raise ValueError(f"feature set must be one of {FEATURE_SETS}")


__all__ = [
    "FeatureVector", "FeatureTable", "build_event_features", "build_aoi_features", "build_feature_set",
    "describe", "event_schema", "aoi_schema", "FIXATION_COLUMNS", "SACCADE_COLUMNS", "AOI_QUALIFIER_COLUMNS",
    "AOI_FLAG_COLUMNS", "GRANULARITIES", "FEATURE_SETS", "NUMERIC",
]
