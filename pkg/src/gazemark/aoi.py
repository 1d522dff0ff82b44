"""Static rectangular areas of interest for sentence stimuli."""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DuplicateAoi, OutOfBounds, SchemaError, UnknownStimulus
from .events import Event, FixationEvent, SaccadeEvent
from .ingest import ScreenGeometry, degrees_to_pixels

AOI_COLUMNS = ("stimulus_id", "scene_id", "kind", "x_px", "y_px", "w_px", "h_px")


class AoiKind(str, enum.Enum):
    SENTENCE = "AOI1"
    CRITICAL_WORD = "AOI2"
    DECISION_LETTER = "AOI3"

    @property
    def index(self) -> int:
        return int(self.value[-1])


KINDS = tuple(AoiKind)


@dataclass(frozen=True)
class AoiRect:
    stimulus_id: str
    kind: AoiKind
    x_px: float
    y_px: float
    w_px: float
    h_px: float

    @property
    def area(self) -> float:
        return self.w_px * self.h_px

    def contains(self, x: float, y: float) -> bool:
        # left/top inclusive, right/bottom exclusive
        return self.x_px <= x < self.x_px + self.w_px and self.y_px <= y < self.y_px + self.h_px


@dataclass
class AoiSet:
    rects: dict[str, dict[AoiKind, AoiRect]]
    scene_map: dict[str, str]

    def __len__(self):
        return sum(len(v) for v in self.rects.values())

    @property
    def stimuli(self) -> list[str]:
        return list(self.rects)

    def for_stimulus(self, stimulus_id: str) -> list[AoiRect]:
        if stimulus_id not in self.rects:
            raise UnknownStimulus(f"no AOIs for stimulus {stimulus_id!r}")
        return list(self.rects[stimulus_id].values())

    def scenes(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for sid in self.rects:
            out.setdefault(self.scene_map[sid], []).append(sid)
        return out

    def all_rects(self) -> list[AoiRect]:
        return [r for per in self.rects.values() for r in per.values()]


def _records(text: str) -> list[tuple[int, dict]]:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        out = []
        for n, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                try:
                    out.append((n, json.loads(line)))
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"line {n}: {exc}") from exc
        return out
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in AOI_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"AOI file lacks column(s): {', '.join(missing)}")
    return [(n, row) for n, row in enumerate(reader, start=2)]


def load_aoi_set(data, geometry: ScreenGeometry = ScreenGeometry()) -> AoiSet:
    """Parse an AOI file (CSV or one JSON object per line) and validate it.

    Every stimulus must carry exactly one rect of each kind, all inside the
    screen.
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if not text.strip():
        raise SchemaError("AOI file is empty")
    rects: dict[str, dict[AoiKind, AoiRect]] = {}
    scene_map: dict[str, str] = {}
    for line, rec in _records(text):
        try:
            sid = str(rec["stimulus_id"]).strip()
            scene = str(rec["scene_id"]).strip()
            kind = AoiKind(str(rec["kind"]).strip())
            x, y, w, h = (float(rec[k]) for k in ("x_px", "y_px", "w_px", "h_px"))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"line {line}: {exc}") from exc
        if not sid or not scene:
            raise SchemaError(f"line {line}: empty identifier")
        if w <= 0 or h <= 0:
            raise SchemaError(f"line {line}: non-positive rectangle size")
        if x < 0 or y < 0 or x + w > geometry.width_px or y + h > geometry.height_px:
            raise OutOfBounds(f"line {line}: {kind.value} of {sid} extends past the screen")
        per = rects.setdefault(sid, {})
        if kind in per:
            raise DuplicateAoi(f"line {line}: second {kind.value} for stimulus {sid}")
        if scene_map.setdefault(sid, scene) != scene:
            raise SchemaError(f"line {line}: stimulus {sid} assigned to two scenes")
        per[kind] = AoiRect(sid, kind, x, y, w, h)
    for sid, per in rects.items():
        missing = [k.value for k in KINDS if k not in per]
        if missing:
            raise SchemaError(f"stimulus {sid} lacks {', '.join(missing)}")
        rects[sid] = {k: per[k] for k in KINDS}
    return AoiSet(rects, scene_map)


def aoi_set_csv(aois: AoiSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AOI_COLUMNS)
    for r in aois.all_rects():
        w.writerow([r.stimulus_id, aois.scene_map[r.stimulus_id], r.kind.value,
                    _num(r.x_px), _num(r.y_px), _num(r.w_px), _num(r.h_px)])
    return buf.getvalue()


def aoi_set_jsonl(aois: AoiSet) -> str:
    lines = [
        json.dumps({"stimulus_id": r.stimulus_id, "scene_id": aois.scene_map[r.stimulus_id], "kind": r.kind.value,
                    "x_px": r.x_px, "y_px": r.y_px, "w_px": r.w_px, "h_px": r.h_px})
        for r in aois.all_rects()
    ]
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def hit_test(x: float, y: float, rects: Iterable[AoiRect]) -> AoiRect | None:
    """Return the rect containing (x, y); nested rects resolve to the smallest."""
    best = None
    for r in rects:
        if r.contains(x, y):
            if best is None or (r.area, -r.kind.index) < (best.area, -best.kind.index):
                best = r
    return best


def _anchor_px(ev: Event, geometry: ScreenGeometry, saccade_anchor: str):
    if isinstance(ev, FixationEvent):
        point = ev.centroid_deg
    elif isinstance(ev, SaccadeEvent):
        point = ev.end_deg if saccade_anchor == "landing" else ev.start_deg
    else:
        raise TypeError(f"not an event: {ev!r}")
    if point is None:
        return None
    return degrees_to_pixels(point[0], point[1], geometry)


def map_events_to_aois(
    events: Sequence[Event],
    aois: AoiSet,
    stimulus_id: str,
    geometry: ScreenGeometry = ScreenGeometry(),
    saccade_anchor: str = "landing",
) -> list[tuple[Event, AoiKind | None]]:
    """Assign every event an AOI kind (or None for a miss).

    Fixations use their centroid, saccades their landing point (or launch
    point with ``saccade_anchor="launch"``).
    """
    if saccade_anchor not in ("landing", "launch"):
        raise ValueError("saccade_anchor must be 'landing' or 'launch'")
    rects = aois.for_stimulus(stimulus_id)
    out = []
    for ev in events:
        p = _anchor_px(ev, geometry, saccade_anchor)
        hit = hit_test(p[0], p[1], rects) if p is not None else None
        out.append((ev, hit.kind if hit else None))
    return out


# -- default stimulus layout -------------------------------------------------

# Three blocks of one set of each size, 2..5, in a fixed shuffled order: 42 sentences.
DEFAULT_SET_SIZES = (3, 5, 2, 4, 4, 2, 5, 3, 5, 3, 4, 2)

SENTENCE_LEFT_PX = 140
SENTENCE_TOP_PX = 487
SENTENCE_HEIGHT_PX = 50
WORD_PITCH_PX = 80
INNER_HEIGHT_PX = 40


@dataclass(frozen=True)
class StimulusLayout:
    """Word positions of one sentence; the last slot holds the to-be-remembered letter."""

    stimulus_id: str
    scene_id: str
    word_centers_px: tuple[float, ...]
    line_y_px: float
    critical_index: int

    @property
    def letter_index(self) -> int:
        return len(self.word_centers_px) - 1


def default_layouts() -> list[StimulusLayout]:
    layouts = []
    n = 0
    for scene_no, size in enumerate(DEFAULT_SET_SIZES, start=1):
        for _ in range(size):
            n += 1
            n_words = 9 + n % 4
            centers = tuple(SENTENCE_LEFT_PX + WORD_PITCH_PX * (k + 0.5) for k in range(n_words + 1))
            critical = 2 + (n * 7) % (n_words - 3)
            layouts.append(StimulusLayout(
                f"S{n:02d}", f"set{scene_no:02d}", centers,
                SENTENCE_TOP_PX + SENTENCE_HEIGHT_PX / 2, critical,
            ))
    return layouts


def aois_from_layouts(layouts: Sequence[StimulusLayout]) -> AoiSet:
    rects: dict[str, dict[AoiKind, AoiRect]] = {}
    scene_map = {}
    inner_top = SENTENCE_TOP_PX + (SENTENCE_HEIGHT_PX - INNER_HEIGHT_PX) / 2
    for lay in layouts:
        left = lay.word_centers_px[0] - WORD_PITCH_PX / 2
        right = lay.word_centers_px[-1] + WORD_PITCH_PX / 2
        crit = lay.word_centers_px[lay.critical_index]
        letter = lay.word_centers_px[lay.letter_index]
        rects[lay.stimulus_id] = {
            AoiKind.SENTENCE: AoiRect(lay.stimulus_id, AoiKind.SENTENCE, left, SENTENCE_TOP_PX,
                                      right - left, SENTENCE_HEIGHT_PX),
            AoiKind.CRITICAL_WORD: AoiRect(lay.stimulus_id, AoiKind.CRITICAL_WORD, crit - WORD_PITCH_PX / 2,
                                           inner_top, WORD_PITCH_PX, INNER_HEIGHT_PX),
            AoiKind.DECISION_LETTER: AoiRect(lay.stimulus_id, AoiKind.DECISION_LETTER, letter - WORD_PITCH_PX / 2,
                                             inner_top, WORD_PITCH_PX, INNER_HEIGHT_PX),
        }
        scene_map[lay.stimulus_id] = lay.scene_id
    return AoiSet(rects, scene_map)


def default_aoi_set() -> AoiSet:
    return aois_from_layouts(default_layouts())


__all__ = [
    "AoiKind", "KINDS", "AoiRect", "AoiSet", "load_aoi_set", "aoi_set_csv", "aoi_set_jsonl", "hit_test",
    "map_events_to_aois", "StimulusLayout", "default_layouts", "aois_from_layouts", "default_aoi_set",
    "DEFAULT_SET_SIZES", "AOI_COLUMNS",
]
