"""Velocity-threshold (I-VT) fixation/saccade detection and event post-filtering."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import GazemarkError, MissingColumn, TooFewSamples
from .ingest import DegreeTrace, GazeRecording, ScreenGeometry, to_degrees

EVENT_COLUMNS = (
    "participant_id", "stimulus_id", "kind", "start_ms", "end_ms", "duration_ms", "x_deg", "y_deg",
    "amplitude_deg", "peak_velocity_dps", "dispersion_deg", "pupil_left_mm", "pupil_right_mm",
)


@dataclass(frozen=True)
class DetectorParams:
    velocity_threshold_dps: float = 30.0
    fixation_speed_dps: float = 30.0
    min_fixation_ms: float = 60.0
    min_saccade_samples: int = 2
    merge_angle_deg: float = 0.5
    merge_gap_ms: float = 75.0

    def __post_init__(self):
        if self.velocity_threshold_dps <= 0 or self.fixation_speed_dps <= 0:
            raise ValueError("velocity_threshold_dps and fixation_speed_dps must be > 0")
        if self.min_fixation_ms < 0 or self.merge_angle_deg < 0 or self.merge_gap_ms < 0:
            raise ValueError("durations and angles must be >= 0")
        # a saccade needs two samples to have a duration and an amplitude
        if self.min_saccade_samples < 2:
            raise ValueError("min_saccade_samples must be >= 2")


@dataclass(frozen=True)
class VelocitySample:
    t_ms: float
    speed_dps: float


@dataclass(frozen=True)
class FixationEvent:
    start_ms: float
    end_ms: float
    duration_ms: float
    centroid_deg: tuple[float, float]
    dispersion_deg: float
    mean_pupil_left_mm: float | None = None
    mean_pupil_right_mm: float | None = None
    n_samples: int = 0

    kind = "fixation"


@dataclass(frozen=True)
class SaccadeEvent:
    start_ms: float
    end_ms: float
    duration_ms: float
    amplitude_deg: float
    peak_velocity_dps: float
    mean_velocity_dps: float
    start_deg: tuple[float, float] | None = None
    end_deg: tuple[float, float] | None = None

    kind = "saccade"


Event = FixationEvent | SaccadeEvent


def _segments(trace: DegreeTrace) -> list[slice]:
    """Runs of consecutive source samples (breaks wherever invalid samples were removed)."""
    n = len(trace.t_ms)
    if n == 0:
        return []
    breaks = np.flatnonzero(np.diff(trace.index) != 1) + 1
    bounds = np.concatenate(([0], breaks, [n]))
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _speeds(t, x, y) -> np.ndarray:
    n = len(t)
    if n == 1:
        return np.zeros(1)
    v = np.empty(n)
    v[0] = math.hypot(x[1] - x[0], y[1] - y[0]) / (t[1] - t[0])
    v[-1] = math.hypot(x[-1] - x[-2], y[-1] - y[-2]) / (t[-1] - t[-2])
    if n > 2:
        v[1:-1] = np.hypot(x[2:] - x[:-2], y[2:] - y[:-2]) / (t[2:] - t[:-2])
    return v * 1000.0


def speed_array(trace: DegreeTrace) -> np.ndarray:
    """Angular speed (deg/s) for every sample of ``trace``.

    Central differences inside each contiguous run, one-sided at run ends.
    An isolated sample gets speed 0.
    """
    out = np.zeros(len(trace.t_ms))
    for seg in _segments(trace):
        out[seg] = _speeds(trace.t_ms[seg], trace.x_deg[seg], trace.y_deg[seg])
    return out


def _as_trace(r, geometry) -> DegreeTrace:
    if isinstance(r, GazeRecording):
        return to_degrees(r, geometry)
    return r


def compute_velocity_series(r, geometry: ScreenGeometry = ScreenGeometry()) -> list[VelocitySample]:
    trace = _as_trace(r, geometry)
    if len(trace.t_ms) < 3:
        raise TooFewSamples(f"need at least 3 valid samples, got {len(trace.t_ms)}")
    speeds = speed_array(trace)
    return [VelocitySample(float(t), float(s)) for t, s in zip(trace.t_ms, speeds)]


def _runs(labels: np.ndarray) -> list[list]:
    """Run-length encode a boolean array into [is_saccade, start, stop) triples."""
    if len(labels) == 0:
        return []
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [len(labels)]))
    return [[bool(labels[a]), int(a), int(b)] for a, b in zip(starts, stops)]


_sum = np.add.reduce  # same pairwise summation as ndarray.mean, minus the wrapper cost


def _nanmean_or_none(values: np.ndarray) -> float | None:
    values = values[values == values]
    return float(_sum(values) / len(values)) if len(values) else None


def _fixation(trace: DegreeTrace, a: int, b: int) -> FixationEvent:
    t = trace.t_ms[a:b]
    x, y = trace.x_deg[a:b], trace.y_deg[a:b]
    m = b - a
    cx, cy = float(_sum(x) / m), float(_sum(y) / m)
    dx, dy = x - cx, y - cy
    disp = math.sqrt(_sum(dx * dx + dy * dy) / m)
    real = ~trace.interpolated[a:b]
    return FixationEvent(
        float(t[0]), float(t[-1]), float(t[-1] - t[0]), (cx, cy), disp,
        _nanmean_or_none(trace.pupil_left_mm[a:b][real]), _nanmean_or_none(trace.pupil_right_mm[a:b][real]),
        b - a,
    )


def _saccade(trace: DegreeTrace, a: int, b: int) -> SaccadeEvent | None:
    t = trace.t_ms[a:b]
    x, y = trace.x_deg[a:b], trace.y_deg[a:b]
    steps = np.hypot(x[1:] - x[:-1], y[1:] - y[:-1])
    dt = (t[1:] - t[:-1]) / 1000.0
    amplitude = float(math.hypot(x[-1] - x[0], y[-1] - y[0]))
    if amplitude <= 0:
        return None
    step_speed = steps / dt
    duration = float(t[-1] - t[0])
    peak = float(step_speed.max())
    mean = float(_sum(steps) / (duration / 1000.0))
    return SaccadeEvent(
        float(t[0]), float(t[-1]), duration, amplitude, peak, min(mean, peak),
        (float(x[0]), float(y[0])), (float(x[-1]), float(y[-1])),
    )


def _merge_anchors(t, x, y, stable, p: DetectorParams) -> list[tuple[int, int]]:
    """Fuse consecutive stable stretches that are close in time and space (left to right)."""
    out: list[list] = []  # [start, stop, n, cx, cy]
    for a, b in stable:
        cx, cy = float(_sum(x[a:b]) / (b - a)), float(_sum(y[a:b]) / (b - a))
        if out:
            prev = out[-1]
            if (t[a] - t[prev[1] - 1] < p.merge_gap_ms
                    and math.hypot(cx - prev[3], cy - prev[4]) < p.merge_angle_deg):
                n = prev[2] + (b - a)
                prev[1:] = [b, n, (prev[2] * prev[3] + (b - a) * cx) / n, (prev[2] * prev[4] + (b - a) * cy) / n]
                continue
        out.append([a, b, b - a, cx, cy])
    return [(a, b) for a, b, *_ in out]


def _classify_segment(trace: DegreeTrace, seg: slice, speeds: np.ndarray, p: DetectorParams,
                      merge: bool = False) -> list[Event]:
    t = trace.t_ms[seg]
    v = speeds[seg]
    n = len(t)
    # stable stretches: slow runs lasting at least min_fixation_ms; they do not depend on the threshold
    stable = [(a, b) for slow, a, b in _runs(v < p.fixation_speed_dps)
              if slow and t[b - 1] - t[a] >= p.min_fixation_ms]
    if merge:
        stable = _merge_anchors(t, trace.x_deg[seg], trace.y_deg[seg], stable, p)
    edges = [0] + [x for a, b in stable for x in (a, b)] + [n]
    # each gap between stable stretches holds at most one saccade: first to last fast candidate.
    # Existence may depend on the threshold only through "some candidate is fast".
    x, y = trace.x_deg[seg], trace.y_deg[seg]
    spans: list[tuple[int, int]] = []
    for lo, hi in zip(edges[::2], edges[1::2]):
        fast = [(a, b) for is_fast, a, b in _runs(v[lo:hi] >= p.velocity_threshold_dps)
                if is_fast and b - a >= p.min_saccade_samples]
        if not fast:
            continue
        g0 = max(lo - 1, spans[-1][1] if spans else 0)
        g1 = min(hi, n - 1)
        if x[g0] == x[g1] and y[g0] == y[g1]:
            continue
        a, b = lo + fast[0][0], lo + fast[-1][1]
        if x[a] == x[b - 1] and y[a] == y[b - 1]:
            a, b = g0, g1 + 1
        spans.append((a, b))
    off = seg.start
    events: list[Event] = []
    cursor = 0
    for a, b in spans + [(n, n)]:
        # fixation between saccades; pieces at segment edges must reach min_fixation_ms
        inner = cursor > 0 and a < n
        if a - cursor >= 2 and (inner or t[a - 1] - t[cursor] >= p.min_fixation_ms):
            events.append(_fixation(trace, off + cursor, off + a))
        if b > a:
            ev = _saccade(trace, off + a, off + b)
            if ev is not None:
                events.append(ev)
        cursor = b
    return events


def detect_events_ivt(
    r, params: DetectorParams = DetectorParams(), geometry: ScreenGeometry = ScreenGeometry()
) -> list[Event]:
    """Label samples by speed and group them into fixations and saccades.

    Runs slower than ``fixation_speed_dps`` lasting ``min_fixation_ms`` anchor
    fixations. Between two anchors, samples at or above the velocity threshold
    (in runs of ``min_saccade_samples`` or more) form a saccade from the first
    such sample to the last; everything else belongs to the fixations. The
    anchors do not move with the threshold, so raising it can shorten or
    remove saccades but never split one. A gap whose bounding samples coincide
    holds no saccade. Short fixations at segment edges are dropped.
    """
    return _detect_trace(_as_trace(r, geometry), params, merge=False)


def _detect_trace(trace: DegreeTrace, params: DetectorParams, merge: bool) -> list[Event]:
    n = len(trace.t_ms)
    if n == 0:
        return []
    if n < 3:
        raise TooFewSamples(f"need at least 3 valid samples, got {n}")
    speeds = speed_array(trace)
    events: list[Event] = []
    for seg in _segments(trace):
        events.extend(_classify_segment(trace, seg, speeds, params, merge))
    return events


def _merge_fixations(f: FixationEvent, g: FixationEvent) -> FixationEvent:
    wf, wg = f.duration_ms, g.duration_ms
    total = wf + wg
    if total <= 0:
        wf = wg = 1.0
        total = 2.0
    cx = (wf * f.centroid_deg[0] + wg * g.centroid_deg[0]) / total
    cy = (wf * f.centroid_deg[1] + wg * g.centroid_deg[1]) / total
    # pooled second moment about the merged centroid
    second = 0.0
    for w, ev in ((wf, f), (wg, g)):
        d2 = (ev.centroid_deg[0] - cx) ** 2 + (ev.centroid_deg[1] - cy) ** 2
        second += w * (ev.dispersion_deg ** 2 + d2)
    disp = math.sqrt(second / total)

    def pupil(a, b):
        if a is None or b is None:
            return a if b is None else b
        return (wf * a + wg * b) / total

    return FixationEvent(
        f.start_ms, g.end_ms, g.end_ms - f.start_ms, (cx, cy), disp,
        pupil(f.mean_pupil_left_mm, g.mean_pupil_left_mm), pupil(f.mean_pupil_right_mm, g.mean_pupil_right_mm),
        f.n_samples + g.n_samples,
    )


def _join_saccades(s: SaccadeEvent, u: SaccadeEvent) -> SaccadeEvent:
    duration = u.end_ms - s.start_ms
    if s.start_deg is not None and u.end_deg is not None:
        amplitude = math.hypot(u.end_deg[0] - s.start_deg[0], u.end_deg[1] - s.start_deg[1])
    else:
        amplitude = s.amplitude_deg + u.amplitude_deg
    bridge = 0.0
    if s.end_deg is not None and u.start_deg is not None:
        bridge = math.hypot(u.start_deg[0] - s.end_deg[0], u.start_deg[1] - s.end_deg[1])
    path = s.mean_velocity_dps * s.duration_ms + u.mean_velocity_dps * u.duration_ms + bridge * 1000.0
    peak = max(s.peak_velocity_dps, u.peak_velocity_dps)
    mean = min(path / duration, peak) if duration > 0 else peak
    return SaccadeEvent(s.start_ms, u.end_ms, duration, amplitude, peak, mean, s.start_deg, u.end_deg)


def merge_and_filter_events(events: Sequence[Event], params: DetectorParams = DetectorParams()) -> list[Event]:
    """Merge near-identical neighbouring fixations, then drop short fixations.

    Two fixations separated by at most one saccade merge when their centroids
    are closer than ``merge_angle_deg`` and the gap between them is shorter
    than ``merge_gap_ms``; the saccade in between disappears. Merging runs
    left to right, so a merged fixation can absorb the next one as well.
    Dropping a fixation fuses the saccades on either side into one.
    """
    merged: list[Event] = []
    for ev in events:
        if isinstance(ev, FixationEvent):
            j = len(merged) - 1
            if j >= 0 and isinstance(merged[j], SaccadeEvent):
                j -= 1
            if j >= 0 and isinstance(merged[j], FixationEvent):
                prev = merged[j]
                gap = ev.start_ms - prev.end_ms
                dist = math.hypot(ev.centroid_deg[0] - prev.centroid_deg[0], ev.centroid_deg[1] - prev.centroid_deg[1])
                if gap < params.merge_gap_ms and dist < params.merge_angle_deg:
                    del merged[j:]
                    merged.append(_merge_fixations(prev, ev))
                    continue
        merged.append(ev)

    out: list[Event] = []
    for ev in merged:
        if isinstance(ev, FixationEvent) and ev.duration_ms < params.min_fixation_ms:
            continue
        if isinstance(ev, SaccadeEvent) and out and isinstance(out[-1], SaccadeEvent):
            out[-1] = _join_saccades(out[-1], ev)
            continue
        out.append(ev)
    return out


def detect(rec: GazeRecording, params: DetectorParams = DetectorParams(),
           geometry: ScreenGeometry = ScreenGeometry()) -> list[Event]:
    """The default pipeline step: detection with the merge rule applied to fixation anchors.

    Merging looks at the slow stretches that anchor fixations rather than at
    finished events, whose extent depends on the velocity threshold. Raising
    the threshold therefore never increases the saccade count.
    """
    trace = to_degrees(rec, geometry)
    if len(trace.t_ms) < 3:
        return []
    return _detect_trace(trace, params, merge=True)


# -- evaluation against known boundaries ------------------------------------

@dataclass(frozen=True)
class MatchResult:
    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def precision(self) -> float:
        d = self.true_positives + self.false_positives
        return self.true_positives / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.true_positives + self.false_negatives
        return self.true_positives / d if d else 0.0

    @property
    def f1(self) -> float:
        d = 2 * self.true_positives + self.false_positives + self.false_negatives
        return 2 * self.true_positives / d if d else 1.0

    def __add__(self, other: "MatchResult") -> "MatchResult":
        return MatchResult(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )


def match_events(detected: Sequence[Event], truth: Sequence[Event], tolerance_ms: float = 0.0) -> MatchResult:
    """One-to-one matching of same-kind events whose intervals overlap.

    Pairs are taken greedily by decreasing overlap. ``tolerance_ms`` widens
    every truth interval on both sides before comparing.
    """
    pairs = []
    for i, d in enumerate(detected):
        for j, g in enumerate(truth):
            if d.kind != g.kind:
                continue
            overlap = min(d.end_ms, g.end_ms + tolerance_ms) - max(d.start_ms, g.start_ms - tolerance_ms)
            if overlap >= 0:
                pairs.append((-overlap, i, j))
    pairs.sort()
    used_d, used_t = set(), set()
    for _, i, j in pairs:
        if i not in used_d and j not in used_t:
            used_d.add(i)
            used_t.add(j)
    tp = len(used_d)
    return MatchResult(tp, len(detected) - tp, len(truth) - tp)


# -- CSV export --------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def event_row(pid: str, sid: str, ev: Event) -> list[str]:
    if isinstance(ev, FixationEvent):
        return [pid, sid, "fixation", _fmt(ev.start_ms), _fmt(ev.end_ms), _fmt(ev.duration_ms),
                _fmt(ev.centroid_deg[0]), _fmt(ev.centroid_deg[1]), "", "", _fmt(ev.dispersion_deg),
                _fmt(ev.mean_pupil_left_mm), _fmt(ev.mean_pupil_right_mm)]
    land = ev.end_deg or (None, None)
    return [pid, sid, "saccade", _fmt(ev.start_ms), _fmt(ev.end_ms), _fmt(ev.duration_ms),
            _fmt(land[0]), _fmt(land[1]), _fmt(ev.amplitude_deg), _fmt(ev.peak_velocity_dps), "", "", ""]


def write_events_csv(events_by_recording: dict[tuple[str, str], Sequence[Event]], *, source: str | None = None) -> str:
    """Serialise events; saccade rows carry their landing point in x_deg/y_deg.

    With ``source`` set an extra trailing ``source`` column is written
    (used for ground-truth files).
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(EVENT_COLUMNS) + (["source"] if source else [])
    w.writerow(header)
    for (pid, sid) in sorted(events_by_recording):
        for ev in events_by_recording[(pid, sid)]:
            row = event_row(pid, sid, ev)
            if source:
                row.append(source)
            w.writerow(row)
    return buf.getvalue()


def read_events_csv(data) -> dict[tuple[str, str], list[Event]]:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in EVENT_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise MissingColumn(missing[0])

    def opt(s):
        return float(s) if s.strip() else None

    out: dict[tuple[str, str], list[Event]] = {}
    for line, row in enumerate(reader, start=2):
        key = (row["participant_id"], row["stimulus_id"])
        start, end, dur = float(row["start_ms"]), float(row["end_ms"]), float(row["duration_ms"])
        if row["kind"] == "fixation":
            ev = FixationEvent(start, end, dur, (float(row["x_deg"]), float(row["y_deg"])),
                               float(row["dispersion_deg"]), opt(row["pupil_left_mm"]), opt(row["pupil_right_mm"]))
        elif row["kind"] == "saccade":
            amp, peak = float(row["amplitude_deg"]), float(row["peak_velocity_dps"])
            land = (float(row["x_deg"]), float(row["y_deg"])) if row["x_deg"].strip() else None
            ev = SaccadeEvent(start, end, dur, amp, peak, min(peak, amp / (dur / 1000.0)) if dur > 0 else peak,
                              None, land)
        else:
            raise GazemarkError(f"line {line}: unknown event kind {row['kind']!r}")
        out.setdefault(key, []).append(ev)
    return out


def saccades(events: Iterable[Event]) -> list[SaccadeEvent]:
    return [e for e in events if isinstance(e, SaccadeEvent)]


def fixations(events: Iterable[Event]) -> list[FixationEvent]:
    return [e for e in events if isinstance(e, FixationEvent)]


__all__ = [
    "DetectorParams", "VelocitySample", "FixationEvent", "SaccadeEvent", "Event", "compute_velocity_series",
    "speed_array", "detect_events_ivt", "merge_and_filter_events", "detect", "match_events", "MatchResult",
    "write_events_csv", "read_events_csv", "saccades", "fixations", "EVENT_COLUMNS",
]
