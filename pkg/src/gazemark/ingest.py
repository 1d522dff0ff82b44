"""Gaze-log parsing, validation, dropout repair and pixel/degree conversion.

Recordings are stored column-wise (one numpy array per field) because a
synthetic cohort easily holds a few hundred thousand samples; the
``samples`` property materialises per-sample records when they are wanted.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import EmptyInput, GazemarkError, InvalidGeometry, MissingColumn, NonMonotoneTime

GAZE_COLUMNS = (
    "participant_id",
    "stimulus_id",
    "t_ms",
    "x_px",
    "y_px",
    "pupil_left_mm",
    "pupil_right_mm",
    "valid_left",
    "valid_right",
)
META_COLUMNS = ("participant_id", "age", "gender", "label")
LABELS = ("ADHD", "NonADHD")
GENDERS = ("female", "male", "other")
POSITIVE_LABEL = "ADHD"

DEFAULT_MAX_GAP_MS = 75.0


@dataclass(frozen=True)
class ScreenGeometry:
    width_px: int = 1280
    height_px: int = 1024
    width_cm: float = 43.2
    height_cm: float = 32.4
    viewing_distance_cm: float = 60.0

    def __post_init__(self):
        for name in ("width_px", "height_px", "width_cm", "height_cm", "viewing_distance_cm"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidGeometry(f"{name} must be strictly positive, got {value!r}")
        pitch = self.width_cm / self.width_px
        if not 0.005 <= pitch <= 0.1:
            raise InvalidGeometry(f"pixel pitch {pitch:.4f} cm outside [0.005, 0.1]")

    @property
    def center_px(self) -> tuple[float, float]:
        return self.width_px / 2.0, self.height_px / 2.0

    @property
    def cm_per_px(self) -> tuple[float, float]:
        return self.width_cm / self.width_px, self.height_cm / self.height_px


@dataclass(frozen=True)
class ParticipantMeta:
    id: str
    age: float
    gender: str
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise GazemarkError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.gender not in GENDERS:
            raise GazemarkError(f"gender must be one of {GENDERS}, got {self.gender!r}")


@dataclass(frozen=True)
class GazeSample:
    t_ms: float
    x_px: float
    y_px: float
    pupil_left_mm: float | None
    pupil_right_mm: float | None
    valid_left: bool
    valid_right: bool
    interpolated: bool = False

    @property
    def valid(self) -> bool:
        return self.valid_left or self.valid_right


@dataclass(eq=False)
class GazeRecording:
    """All samples of one participant viewing one stimulus.

    Missing pupil diameters are NaN. ``interpolated`` marks samples
    reconstructed by :func:`validate_and_interpolate`.
    """

    participant_id: str
    stimulus_id: str
    t_ms: np.ndarray
    x_px: np.ndarray
    y_px: np.ndarray
    pupil_left_mm: np.ndarray
    pupil_right_mm: np.ndarray
    valid_left: np.ndarray
    valid_right: np.ndarray
    interpolated: np.ndarray = None
    nominal_rate_hz: float = 60.0
    meta: ParticipantMeta | None = None

    def __post_init__(self):
        self.t_ms = np.asarray(self.t_ms, dtype=float)
        n = len(self.t_ms)
        self.x_px = np.asarray(self.x_px, dtype=float)
        self.y_px = np.asarray(self.y_px, dtype=float)
        self.pupil_left_mm = np.asarray(self.pupil_left_mm, dtype=float)
        self.pupil_right_mm = np.asarray(self.pupil_right_mm, dtype=float)
        self.valid_left = np.asarray(self.valid_left, dtype=bool)
        self.valid_right = np.asarray(self.valid_right, dtype=bool)
        if self.interpolated is None:
            self.interpolated = np.zeros(n, dtype=bool)
        else:
            self.interpolated = np.asarray(self.interpolated, dtype=bool)
        for name in ("x_px", "y_px", "pupil_left_mm", "pupil_right_mm", "valid_left", "valid_right", "interpolated"):
            if len(getattr(self, name)) != n:
                raise GazemarkError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if n > 1 and np.any(np.diff(self.t_ms) <= 0):
            raise NonMonotoneTime(
                f"timestamps not strictly increasing for {self.participant_id}/{self.stimulus_id}"
            )

    def __len__(self):
        return len(self.t_ms)

    @property
    def valid(self) -> np.ndarray:
        """Raw validity: either eye tracked."""
        return self.valid_left | self.valid_right

    @property
    def usable(self) -> np.ndarray:
        """Samples with a position estimate (tracked or interpolated)."""
        return self.valid | self.interpolated

    @property
    def samples(self) -> list[GazeSample]:
        def opt(v):
            return None if np.isnan(v) else float(v)

        return [
            GazeSample(
                float(self.t_ms[i]), float(self.x_px[i]), float(self.y_px[i]),
                opt(self.pupil_left_mm[i]), opt(self.pupil_right_mm[i]),
                bool(self.valid_left[i]), bool(self.valid_right[i]), bool(self.interpolated[i]),
            )
            for i in range(len(self))
        ]

    def median_interval_ms(self) -> float:
        if len(self) < 2:
            return 1000.0 / self.nominal_rate_hz
        return float(np.median(np.diff(self.t_ms)))

    def copy(self, **changes) -> "GazeRecording":
        fields = dict(
            participant_id=self.participant_id, stimulus_id=self.stimulus_id,
            t_ms=self.t_ms.copy(), x_px=self.x_px.copy(), y_px=self.y_px.copy(),
            pupil_left_mm=self.pupil_left_mm.copy(), pupil_right_mm=self.pupil_right_mm.copy(),
            valid_left=self.valid_left.copy(), valid_right=self.valid_right.copy(),
            interpolated=self.interpolated.copy(), nominal_rate_hz=self.nominal_rate_hz, meta=self.meta,
        )
        fields.update(changes)
        return GazeRecording(**fields)

    def same_as(self, other: "GazeRecording") -> bool:
        if (self.participant_id, self.stimulus_id, self.nominal_rate_hz) != (
            other.participant_id, other.stimulus_id, other.nominal_rate_hz
        ):
            return False
        return all(
            np.array_equal(getattr(self, name), getattr(other, name), equal_nan=name.startswith("pupil"))
            for name in ("t_ms", "x_px", "y_px", "pupil_left_mm", "pupil_right_mm",
                         "valid_left", "valid_right", "interpolated")
        )


@dataclass
class RejectedRow:
    line: int
    reason: str


@dataclass
class GazeParseResult:
    recordings: list[GazeRecording]
    rows_total: int
    rows_accepted: int
    rejected: list[RejectedRow] = field(default_factory=list)

    def __iter__(self):
        return iter(self.recordings)

    def __len__(self):
        return len(self.recordings)


def _as_text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return data.decode("utf-8")
    if hasattr(data, "read"):
        data = data.read()
        return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    return data


def _parse_bool(s: str) -> bool:
    s = s.strip()
    if s == "1":
        return True
    if s == "0":
        return False
    raise ValueError(f"boolean field must be 0 or 1, got {s!r}")


def _parse_pupil(s: str) -> float:
    s = s.strip()
    if s == "":
        return math.nan
    v = float(s)
    if not 0.0 < v < 12.0:
        raise ValueError(f"pupil diameter {v} mm outside (0, 12)")
    return v


def _parse_number(s: str, name: str) -> float:
    s = s.strip()
    if s == "":
        raise ValueError(f"empty {name}")
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite {name}")
    return v


def parse_gaze_csv(
    data,
    geometry: ScreenGeometry = ScreenGeometry(),
    *,
    participants: dict[str, ParticipantMeta] | None = None,
    nominal_rate_hz: float = 60.0,
) -> GazeParseResult:
    """Parse a tracker export into one recording per (participant, stimulus).

    Rows that break the schema (bad numbers, off-screen valid samples, pupil
    diameters outside (0, 12) mm) are rejected and listed in the result.
    Timestamps are used as given; a decrease inside a group raises
    :class:`NonMonotoneTime`.
    """
    text = _as_text(data)
    if not text.strip():
        raise EmptyInput("gaze input is empty")
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    for col in GAZE_COLUMNS:
        if col not in header:
            raise MissingColumn(col)
    pos = {name: header.index(name) for name in GAZE_COLUMNS}

    groups: dict[tuple[str, str], list[tuple]] = {}
    rejected: list[RejectedRow] = []
    total = 0
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        total += 1
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            pid = row[pos["participant_id"]].strip()
            sid = row[pos["stimulus_id"]].strip()
            if not pid or not sid:
                raise ValueError("empty identifier")
            t = _parse_number(row[pos["t_ms"]], "t_ms")
            x = _parse_number(row[pos["x_px"]], "x_px")
            y = _parse_number(row[pos["y_px"]], "y_px")
            pl = _parse_pupil(row[pos["pupil_left_mm"]])
            pr = _parse_pupil(row[pos["pupil_right_mm"]])
            vl = _parse_bool(row[pos["valid_left"]])
            vr = _parse_bool(row[pos["valid_right"]])
            if (vl or vr) and not (0 <= x <= geometry.width_px and 0 <= y <= geometry.height_px):
                raise ValueError(f"valid sample off screen at ({x}, {y})")
        except ValueError as exc:
            rejected.append(RejectedRow(line_no, str(exc)))
            continue
        groups.setdefault((pid, sid), []).append((line_no, t, x, y, pl, pr, vl, vr))

    if total == 0:
        raise EmptyInput("gaze input has a header but no rows")

    recordings = []
    for (pid, sid), rows in groups.items():
        times = [r[1] for r in rows]
        for a, b in zip(rows, rows[1:]):
            if b[1] <= a[1]:
                raise NonMonotoneTime(
                    f"{pid}/{sid}: t_ms {b[1]} at line {b[0]} does not follow {a[1]} at line {a[0]}"
                )
        cols = list(zip(*rows))
        rec = GazeRecording(
            participant_id=pid, stimulus_id=sid, t_ms=times, x_px=cols[2], y_px=cols[3],
            pupil_left_mm=cols[4], pupil_right_mm=cols[5], valid_left=cols[6], valid_right=cols[7],
            nominal_rate_hz=nominal_rate_hz, meta=(participants or {}).get(pid),
        )
        check_sampling_rate(rec)
        recordings.append(rec)
    recordings.sort(key=lambda r: (r.participant_id, r.stimulus_id))
    accepted = sum(len(r) for r in recordings)
    return GazeParseResult(recordings, total, accepted, rejected)


class RateMismatch(GazemarkError):
    pass


def check_sampling_rate(rec: GazeRecording, tolerance: float = 0.2) -> None:
    if len(rec) < 3:
        return
    expected = 1000.0 / rec.nominal_rate_hz
    median = rec.median_interval_ms()
    if abs(median - expected) > tolerance * expected:
        raise RateMismatch(
            f"{rec.participant_id}/{rec.stimulus_id}: median interval {median:.2f} ms, "
            f"expected {expected:.2f} ms at {rec.nominal_rate_hz} Hz"
        )


def parse_participants_csv(data) -> dict[str, ParticipantMeta]:
    text = _as_text(data)
    if not text.strip():
        raise EmptyInput("participant metadata is empty")
    reader = csv.DictReader(io.StringIO(text))
    for col in META_COLUMNS:
        if col not in (reader.fieldnames or []):
            raise MissingColumn(col)
    out = {}
    for row in reader:
        pid = row["participant_id"].strip()
        out[pid] = ParticipantMeta(pid, float(row["age"]), row["gender"].strip(), row["label"].strip())
    return out


def write_participants_csv(metas: Iterable[ParticipantMeta]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(META_COLUMNS)
    for m in metas:
        w.writerow([m.id, _fmt(m.age), m.gender, m.label])
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_gaze_csv(recordings: Iterable[GazeRecording]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GAZE_COLUMNS)
    for r in recordings:
        for i in range(len(r)):
            w.writerow([
                r.participant_id, r.stimulus_id, _fmt(float(r.t_ms[i])), _fmt(float(r.x_px[i])),
                _fmt(float(r.y_px[i])), _fmt(float(r.pupil_left_mm[i])), _fmt(float(r.pupil_right_mm[i])),
                _fmt(bool(r.valid_left[i])), _fmt(bool(r.valid_right[i])),
            ])
    return buf.getvalue()


def pixels_to_degrees(x_px, y_px, geometry: ScreenGeometry = ScreenGeometry()):
    """Visual angle of a screen point relative to the screen centre.

    Works on scalars or arrays. Right and down are positive.
    """
    cx, cy = geometry.center_px
    sx, sy = geometry.cm_per_px
    d = geometry.viewing_distance_cm
    x_deg = np.degrees(np.arctan((np.asarray(x_px, dtype=float) - cx) * sx / d))
    y_deg = np.degrees(np.arctan((np.asarray(y_px, dtype=float) - cy) * sy / d))
    if np.ndim(x_deg) == 0:
        return float(x_deg), float(y_deg)
    return x_deg, y_deg


def degrees_to_pixels(x_deg, y_deg, geometry: ScreenGeometry = ScreenGeometry()):
    cx, cy = geometry.center_px
    sx, sy = geometry.cm_per_px
    d = geometry.viewing_distance_cm
    x_px = cx + np.tan(np.radians(np.asarray(x_deg, dtype=float))) * d / sx
    y_px = cy + np.tan(np.radians(np.asarray(y_deg, dtype=float))) * d / sy
    if np.ndim(x_px) == 0:
        return float(x_px), float(y_px)
    return x_px, y_px


def validate_and_interpolate(rec: GazeRecording, max_gap_ms: float = DEFAULT_MAX_GAP_MS) -> GazeRecording:
    """Fill short dropouts by linear interpolation in pixel space.

    A run of invalid samples is repaired when its length (time between the
    bracketing valid samples minus one sampling interval) is below
    ``max_gap_ms``. Runs touching either end of the recording have only one
    neighbour and are never filled.
    """
    if max_gap_ms < 0:
        raise ValueError("max_gap_ms must be >= 0")
    valid = rec.valid
    if valid.all() or len(rec) == 0:
        return rec
    step = rec.median_interval_ms()
    x, y = rec.x_px.copy(), rec.y_px.copy()
    interp = rec.interpolated.copy()
    n = len(rec)
    i = 0
    while i < n:
        if valid[i]:
            i += 1
            continue
        j = i
        while j < n and not valid[j]:
            j += 1
        # invalid run is [i, j)
        if i > 0 and j < n:
            before, after = i - 1, j
            gap = rec.t_ms[after] - rec.t_ms[before] - step
            if gap < max_gap_ms:
                w = (rec.t_ms[i:j] - rec.t_ms[before]) / (rec.t_ms[after] - rec.t_ms[before])
                x[i:j] = x[before] + w * (x[after] - x[before])
                y[i:j] = y[before] + w * (y[after] - y[before])
                interp[i:j] = True
        i = j
    return rec.copy(x_px=x, y_px=y, interpolated=interp)


@dataclass(frozen=True)
class DegreeTrace:
    """A recording projected to visual angle, restricted to usable samples."""

    participant_id: str
    stimulus_id: str
    t_ms: np.ndarray
    x_deg: np.ndarray
    y_deg: np.ndarray
    pupil_left_mm: np.ndarray
    pupil_right_mm: np.ndarray
    interpolated: np.ndarray
    index: np.ndarray  # positions in the source recording
    nominal_rate_hz: float = 60.0


def to_degrees(rec: GazeRecording, geometry: ScreenGeometry = ScreenGeometry()) -> DegreeTrace:
    keep = rec.usable
    xd, yd = pixels_to_degrees(rec.x_px[keep], rec.y_px[keep], geometry)
    return DegreeTrace(
        rec.participant_id, rec.stimulus_id, rec.t_ms[keep], np.atleast_1d(xd), np.atleast_1d(yd),
        rec.pupil_left_mm[keep], rec.pupil_right_mm[keep], rec.interpolated[keep],
        np.flatnonzero(keep), rec.nominal_rate_hz,
    )


__all__ = [
    "ScreenGeometry", "ParticipantMeta", "GazeSample", "GazeRecording", "GazeParseResult", "RejectedRow",
    "RateMismatch", "DegreeTrace", "parse_gaze_csv", "parse_participants_csv", "write_gaze_csv",
    "write_participants_csv", "pixels_to_degrees", "degrees_to_pixels", "validate_and_interpolate",
    "to_degrees", "check_sampling_rate", "GAZE_COLUMNS", "LABELS", "GENDERS", "POSITIVE_LABEL",
]
