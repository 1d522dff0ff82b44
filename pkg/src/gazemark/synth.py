"""Synthetic reading-span gaze sessions with known event boundaries.

Each session is one sentence presentation: the reader fixates words left to
right (occasional skips and regressions), always lands on the critical word
and ends on the letter at the end of the line. Saccade kinematics follow the
main-sequence model with multiplicative noise; samples get additive
Gaussian position noise.

Random streams are keyed by (seed, role, slot, stimulus) where role is
"affected" or "unaffected". Participant traits therefore do not depend on
the label itself, which makes swapping ``affected_label`` swap the generated
data exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aoi import AoiSet, StimulusLayout, aoi_set_csv, aois_from_layouts, default_layouts
from .errors import MissingAoi
from .events import Event, FixationEvent, SaccadeEvent, write_events_csv
from .ingest import (
    GazeRecording, ParticipantMeta, ScreenGeometry, degrees_to_pixels, pixels_to_degrees, write_gaze_csv,
    write_participants_csv,
)
from .mainseq import NORMATIVE, MainSequenceModel, predict_duration, predict_peak_velocity

# pooled Table 1 marginals: 10 of 14 female, ages 18..35
FEMALE_FRACTION = 10 / 14
AGE_MEAN, AGE_SD, AGE_RANGE = 23.43, 5.2, (18, 35)

ROLE_AFFECTED, ROLE_UNAFFECTED = 0, 1


@dataclass(frozen=True)
class AdhdEffects:
    fixation_y_offset_deg: float = 0.0
    scanpath_dispersion_scale: float = 1.0
    regression_rate_delta: float = 0.0
    extra_offstimulus_fixation_rate: float = 0.0
    pupil_shift_mm: float = 0.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.scanpath_dispersion_scale < 0:
            raise ValueError("scanpath_dispersion_scale must be >= 0")

    @classmethod
    def none(cls) -> "AdhdEffects":
        return cls()

    @classmethod
    def default(cls) -> "AdhdEffects":
        return cls(fixation_y_offset_deg=1.0, scanpath_dispersion_scale=1.5,
                   regression_rate_delta=0.08, extra_offstimulus_fixation_rate=0.1)

    @classmethod
    def strong(cls) -> "AdhdEffects":
        return cls(fixation_y_offset_deg=1.5, scanpath_dispersion_scale=2.0)


@dataclass(frozen=True)
class ReadingModel:
    fixation_median_ms: float = 220.0
    fixation_sigma_log: float = 0.35
    fixation_min_ms: float = 100.0
    fixation_max_ms: float = 1000.0
    letter_fixation_scale: float = 1.5
    regression_rate: float = 0.12
    skip_rate: float = 0.1
    landing_sd_x_deg: float = 0.3
    landing_sd_y_deg: float = 0.15
    landing_truncate_sd: float = 2.5
    offstimulus_drop_deg: float = 4.0
    velocity_noise: float = 0.05
    duration_noise: float = 0.05
    pupil_mean_mm: float = 3.4
    pupil_sd_mm: float = 0.05
    pupil_lr_offset_mm: float = 0.06


@dataclass(frozen=True)
class CohortSpec:
    n_per_group: int = 7
    seed: int = 0
    rate_hz: float = 60.0
    noise_rms_deg: float = 0.34
    adhd_effects: AdhdEffects = field(default_factory=AdhdEffects.default)
    mainseq: MainSequenceModel = NORMATIVE
    reading: ReadingModel = ReadingModel()
    geometry: ScreenGeometry = ScreenGeometry()
    affected_label: str = "ADHD"

    def __post_init__(self):
        if self.n_per_group < 1:
            raise ValueError("n_per_group must be >= 1")
        if self.noise_rms_deg < 0 or not math.isfinite(self.noise_rms_deg):
            raise ValueError("noise_rms_deg must be finite and >= 0")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be > 0")
        if self.affected_label not in ("ADHD", "NonADHD"):
            raise ValueError("affected_label must be ADHD or NonADHD")


@dataclass(frozen=True)
class SynthParticipant:
    meta: ParticipantMeta
    role: int
    slot: int

    @property
    def affected(self) -> bool:
        return self.role == ROLE_AFFECTED


@dataclass
class GroundTruth:
    events: dict[tuple[str, str], list[Event]]
    labels: dict[str, str]


@dataclass
class Cohort:
    recordings: list[GazeRecording]
    participants: list[ParticipantMeta]
    truth: GroundTruth
    layouts: list[StimulusLayout]
    aois: AoiSet
    spec: CohortSpec

    def write(self, out_dir) -> dict[str, str]:
        """Write gaze.csv, participants.csv, truth_events.csv and aois.csv; return name -> path."""
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "gaze.csv": write_gaze_csv(self.recordings),
            "participants.csv": write_participants_csv(self.participants),
            "truth_events.csv": write_events_csv(self.truth.events, source="truth"),
            "aois.csv": aoi_set_csv(self.aois),
        }
        paths = {}
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
            paths[name] = str(out / name)
        return paths


def _rng(spec: CohortSpec, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.seed, *key]))


def _min_jerk(tau: np.ndarray) -> np.ndarray:
    return tau ** 3 * (10 - 15 * tau + 6 * tau ** 2)


def _truncated_normal(rng, sd: float, limit: float) -> float:
    if sd == 0:
        return 0.0
    while True:
        z = rng.standard_normal()
        if abs(z) <= limit:
            return z * sd


def _plan_scanpath(rng, layout: StimulusLayout, spec: CohortSpec, affected: bool) -> list[tuple[float, float, float]]:
    """Fixation targets as (x_deg, y_deg, duration_ms) in reading order."""
    rd = spec.reading
    eff = spec.adhd_effects if affected else AdhdEffects.none()
    geo = spec.geometry
    regress_p = min(max(rd.regression_rate + eff.regression_rate_delta, 0.0), 0.9)
    scale = eff.scanpath_dispersion_scale
    last = layout.letter_index
    crit = layout.critical_index

    def duration(mult=1.0):
        d = rd.fixation_median_ms * math.exp(rd.fixation_sigma_log * rng.standard_normal()) * mult
        return min(max(d, rd.fixation_min_ms), rd.fixation_max_ms)

    def place(word: int, mult=1.0, drop=0.0):
        x_deg, y_deg = pixels_to_degrees(layout.word_centers_px[word], layout.line_y_px, geo)
        jx = _truncated_normal(rng, rd.landing_sd_x_deg * scale, rd.landing_truncate_sd)
        jy = _truncated_normal(rng, rd.landing_sd_y_deg * scale, rd.landing_truncate_sd)
        return (x_deg + jx, y_deg + jy + eff.fixation_y_offset_deg + drop, duration(mult))

    path = [place(0)]
    word = 0
    furthest = 0
    while word != last:
        if word > 0 and word == furthest and rng.random() < regress_p:
            word -= 1
        elif word < furthest:
            word = furthest  # return sweep after a regression
        else:
            step = 2 if (rng.random() < rd.skip_rate and word + 1 != crit and word + 2 <= last) else 1
            word += step
        furthest = max(furthest, word)
        path.append(place(word, rd.letter_fixation_scale if word == last else 1.0))
        if word != last and rng.random() < eff.extra_offstimulus_fixation_rate:
            path.append(place(word, drop=rd.offstimulus_drop_deg))
            path.append(place(word))
    return path


def generate_session(
    participant: SynthParticipant,
    layout: StimulusLayout,
    aois: AoiSet,
    spec: CohortSpec,
    stimulus_index: int,
) -> tuple[GazeRecording, list[Event]]:
    """One sentence presentation for one participant, with its true events."""
    if layout.stimulus_id not in aois.rects:
        raise MissingAoi(f"stimulus {layout.stimulus_id} has no AOIs")
    rng = _rng(spec, participant.role, participant.slot, stimulus_index)
    rd = spec.reading
    affected = participant.affected
    eff = spec.adhd_effects if affected else AdhdEffects.none()
    path = _plan_scanpath(rng, layout, spec, affected)

    # timeline of truth events
    truth: list[Event] = []
    t = 0.0
    segments = []  # (t0, t1, p0, p1) for saccades; p0 == p1 for fixations
    for k, (x, y, dur) in enumerate(path):
        truth.append(FixationEvent(t, t + dur, dur, (x, y), 0.0))
        segments.append((t, t + dur, (x, y), (x, y)))
        t += dur
        if k + 1 < len(path):
            nx, ny = path[k + 1][0], path[k + 1][1]
            amp = math.hypot(nx - x, ny - y)
            sd = predict_duration(amp, spec.mainseq) * (1 + rd.duration_noise * rng.standard_normal())
            pv = predict_peak_velocity(amp, spec.mainseq) * (1 + rd.velocity_noise * rng.standard_normal())
            sd = max(sd, 1.0)
            truth.append(SaccadeEvent(t, t + sd, sd, amp, pv, amp / (sd / 1000.0), (x, y), (nx, ny)))
            segments.append((t, t + sd, (x, y), (nx, ny)))
            t += sd
    total = t

    step = 1000.0 / spec.rate_hz
    ts = np.arange(0.0, total, step)
    xs = np.empty_like(ts)
    ys = np.empty_like(ts)
    starts = np.array([s[0] for s in segments])
    which = np.searchsorted(starts, ts, side="right") - 1
    for i, seg_i in enumerate(which):
        t0, t1, p0, p1 = segments[seg_i]
        if p0 == p1:
            xs[i], ys[i] = p0
        else:
            f = _min_jerk(np.clip((ts[i] - t0) / (t1 - t0), 0.0, 1.0))
            xs[i] = p0[0] + f * (p1[0] - p0[0])
            ys[i] = p0[1] + f * (p1[1] - p0[1])
    sigma = spec.noise_rms_deg / math.sqrt(2.0)
    xs = xs + rng.normal(0.0, sigma, len(ts)) if sigma > 0 else xs
    ys = ys + rng.normal(0.0, sigma, len(ts)) if sigma > 0 else ys

    x_px, y_px = degrees_to_pixels(xs, ys, spec.geometry)
    on_screen = (x_px >= 0) & (x_px <= spec.geometry.width_px) & (y_px >= 0) & (y_px <= spec.geometry.height_px)
    pupil = rd.pupil_mean_mm + eff.pupil_shift_mm + rng.normal(0.0, rd.pupil_sd_mm, len(ts))
    rec = GazeRecording(
        participant_id=participant.meta.id, stimulus_id=layout.stimulus_id, t_ms=ts,
        x_px=np.clip(x_px, 0, spec.geometry.width_px), y_px=np.clip(y_px, 0, spec.geometry.height_px),
        pupil_left_mm=pupil, pupil_right_mm=pupil + rd.pupil_lr_offset_mm,
        valid_left=on_screen, valid_right=on_screen, nominal_rate_hz=spec.rate_hz, meta=participant.meta,
    )
    return rec, truth


def make_participants(spec: CohortSpec) -> list[SynthParticipant]:
    """n_per_group per label; gender split and ages mirror the pooled Table 1 marginals in each group."""
    n = spec.n_per_group
    n_female = round(n * FEMALE_FRACTION)
    out = []
    for label in ("ADHD", "NonADHD"):
        role = ROLE_AFFECTED if label == spec.affected_label else ROLE_UNAFFECTED
        for slot in range(n):
            rng = _rng(spec, 9, role, slot)
            age = int(round(min(max(rng.normal(AGE_MEAN, AGE_SD), AGE_RANGE[0]), AGE_RANGE[1])))
            gender = "female" if slot < n_female else "male"
            pid = f"{'A' if label == 'ADHD' else 'N'}{slot + 1:02d}"
            out.append(SynthParticipant(ParticipantMeta(pid, age, gender, label), role, slot))
    return out


def generate_cohort(spec: CohortSpec = CohortSpec(), layouts: Sequence[StimulusLayout] | None = None,
                    aois: AoiSet | None = None) -> Cohort:
    layouts = list(layouts) if layouts is not None else default_layouts()
    aois = aois if aois is not None else aois_from_layouts(layouts)
    participants = make_participants(spec)
    recordings = []
    truth: dict[tuple[str, str], list[Event]] = {}
    for p in participants:
        for idx, layout in enumerate(layouts):
            rec, events = generate_session(p, layout, aois, spec, idx)
            recordings.append(rec)
            truth[(p.meta.id, layout.stimulus_id)] = events
    metas = [p.meta for p in participants]
    return Cohort(recordings, metas, GroundTruth(truth, {m.id: m.label for m in metas}), layouts, aois, spec)


__all__ = [
    "AdhdEffects", "ReadingModel", "CohortSpec", "SynthParticipant", "GroundTruth", "Cohort",
    "generate_session", "generate_cohort", "make_participants",
]
