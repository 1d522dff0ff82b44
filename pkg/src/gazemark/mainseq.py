"""Saccadic main-sequence curves: prediction, fitting and group comparison.

Peak velocity saturates exponentially with amplitude,
``v = theta_max * (1 - exp(-A / c))``, and duration grows linearly,
``d = slope * A + intercept``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateAmplitudeRange, NegativeAmplitude, TooFewSaccades
from .events import SaccadeEvent

MIN_FIT_SACCADES = 8
MIN_AMPLITUDE_RANGE_DEG = 2.0
DEGENERATE_RANGE_DEG = 0.1
MAX_PLAUSIBLE_VELOCITY_DPS = 1000.0


@dataclass(frozen=True)
class MainSequenceModel:
    theta_max_dps: float = 500.0
    c_deg: float = 14.0
    slope_ms_per_deg: float = 2.2
    intercept_ms: float = 21.0

    def __post_init__(self):
        if not self.theta_max_dps > 0 or not self.c_deg > 0:
            raise ValueError("theta_max_dps and c_deg must be > 0")


NORMATIVE = MainSequenceModel()


def _check_amplitude(a):
    arr = np.asarray(a, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise NegativeAmplitude(f"amplitude must be >= 0, got {a!r}")
    return arr


def predict_peak_velocity(amplitude_deg, m: MainSequenceModel = NORMATIVE):
    a = _check_amplitude(amplitude_deg)
    v = m.theta_max_dps * -np.expm1(-a / m.c_deg)
    return float(v) if v.ndim == 0 else v


def predict_duration(amplitude_deg, m: MainSequenceModel = NORMATIVE):
    a = _check_amplitude(amplitude_deg)
    d = m.slope_ms_per_deg * a + m.intercept_ms
    return float(d) if d.ndim == 0 else d


def _best_theta(a: np.ndarray, v: np.ndarray, c: float) -> tuple[float, float]:
    """Least-squares theta_max for a fixed c (closed form) and the resulting SSE."""
    g = -np.expm1(-a / c)
    gg = float(g @ g)
    theta = float(g @ v) / gg if gg > 0 else 0.0
    r = v - theta * g
    return theta, float(r @ r)


def fit_velocity_curve(
    amplitudes: np.ndarray,
    peak_velocities: np.ndarray,
    c_range=(2.0, 50.0),
    grid_points: int = 40,
) -> tuple[float, float]:
    """Least-squares (theta_max, c) for the saturating-exponential curve.

    The model is linear in theta_max, so theta_max is solved exactly for any
    c and only c is searched: a log-spaced grid picks the start, then golden
    section in log c refines between the neighbours of the best grid point.
    """
    a = np.asarray(amplitudes, dtype=float)
    v = np.asarray(peak_velocities, dtype=float)
    cs = np.geomspace(*c_range, grid_points)
    ic = int(np.argmin([_best_theta(a, v, c)[1] for c in cs]))

    step = math.log(cs[1] / cs[0])
    lo, hi = math.log(cs[ic]) - step, math.log(cs[ic]) + step

    def profile(log_c):
        return _best_theta(a, v, math.exp(log_c))[1]

    invphi = (math.sqrt(5) - 1) / 2
    x1, x2 = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
    f1, f2 = profile(x1), profile(x2)
    while hi - lo > 1e-10:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = profile(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = profile(x2)
    c = math.exp((lo + hi) / 2)
    theta, _ = _best_theta(a, v, c)
    return theta, c


@dataclass
class FitResult:
    model: MainSequenceModel
    n_used: int
    n_excluded: int


def fit_main_sequence_detailed(saccades: Sequence[SaccadeEvent]) -> FitResult:
    amp = np.array([s.amplitude_deg for s in saccades], dtype=float)
    vel = np.array([s.peak_velocity_dps for s in saccades], dtype=float)
    dur = np.array([s.duration_ms for s in saccades], dtype=float)
    keep = vel <= MAX_PLAUSIBLE_VELOCITY_DPS
    excluded = int((~keep).sum())
    amp, vel, dur = amp[keep], vel[keep], dur[keep]
    if len(amp) < MIN_FIT_SACCADES:
        raise TooFewSaccades(f"need at least {MIN_FIT_SACCADES} saccades, got {len(amp)}")
    spread = float(amp.max() - amp.min())
    if spread <= DEGENERATE_RANGE_DEG:
        raise DegenerateAmplitudeRange(f"amplitudes span only {spread:.3g} deg")
    if spread < MIN_AMPLITUDE_RANGE_DEG:
        raise DegenerateAmplitudeRange(
            f"amplitudes span {spread:.3g} deg; at least {MIN_AMPLITUDE_RANGE_DEG} deg needed"
        )
    theta, c = fit_velocity_curve(amp, vel)
    slope, intercept = _ols_line(amp, dur)
    return FitResult(MainSequenceModel(theta, c, slope, intercept), len(amp), excluded)


def fit_main_sequence(saccades: Sequence[SaccadeEvent]) -> MainSequenceModel:
    return fit_main_sequence_detailed(saccades).model


def _ols_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(dx @ (y - ym) / (dx @ dx))
    return slope, float(ym - slope * xm)


@dataclass
class DeviationReport:
    group: str
    rmse_velocity_dps: float
    rmse_duration_ms: float
    n_saccades: int
    fitted: MainSequenceModel
    n_excluded: int = 0
    velocity_points: list[tuple[float, float]] = field(default_factory=list, repr=False)
    duration_points: list[tuple[float, float]] = field(default_factory=list, repr=False)


def _rmse(observed: np.ndarray, predicted: np.ndarray) -> float:
    return float(np.sqrt(np.mean((observed - predicted) ** 2)))


def deviation_report(
    saccades: Sequence[SaccadeEvent],
    labels: Sequence[str],
    reference: MainSequenceModel = NORMATIVE,
    groups: Sequence[str] = ("ADHD", "NonADHD"),
) -> list[DeviationReport]:
    """Fit each group (and the pooled set) and measure RMSE against ``reference``."""
    if len(saccades) != len(labels):
        raise ValueError("one label per saccade required")
    labels = list(labels)
    reports = []
    for group in list(groups) + ["pooled"]:
        members = [s for s, g in zip(saccades, labels) if group == "pooled" or g == group]
        fit = fit_main_sequence_detailed(members)
        amp = np.array([s.amplitude_deg for s in members])
        vel = np.array([s.peak_velocity_dps for s in members])
        dur = np.array([s.duration_ms for s in members])
        reports.append(DeviationReport(
            group=group,
            rmse_velocity_dps=_rmse(vel, predict_peak_velocity(amp, reference)),
            rmse_duration_ms=_rmse(dur, predict_duration(amp, reference)),
            n_saccades=len(members),
            fitted=fit.model,
            n_excluded=fit.n_excluded,
            velocity_points=list(zip(amp.tolist(), vel.tolist())),
            duration_points=list(zip(amp.tolist(), dur.tolist())),
        ))
    return reports


REPORT_COLUMNS = (
    "group", "n_saccades", "n_excluded", "rmse_velocity_dps", "rmse_duration_ms",
    "theta_max_dps", "c_deg", "slope_ms_per_deg", "intercept_ms",
)


def report_csv(reports: Sequence[DeviationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        m = r.fitted
        w.writerow([r.group, r.n_saccades, r.n_excluded, repr(r.rmse_velocity_dps), repr(r.rmse_duration_ms),
                    repr(m.theta_max_dps), repr(m.c_deg), repr(m.slope_ms_per_deg), repr(m.intercept_ms)])
    return buf.getvalue()


def points_csv(points: Sequence[tuple[float, float]], y_name: str) -> str:
    lines = [f"amplitude_deg,{y_name}"]
    lines += [f"{a!r},{y!r}" for a, y in points]
    return "\n".join(lines) + "\n"


def normative_curves(m: MainSequenceModel = NORMATIVE, max_amplitude_deg: float = 40.0, n: int = 401):
    """Sampled reference curves for overlay plots: (velocity_csv, duration_csv)."""
    amp = np.linspace(0.0, max_amplitude_deg, n)
    vel = predict_peak_velocity(amp, m)
    dur = predict_duration(amp, m)
    return (
        points_csv(list(zip(amp.tolist(), vel.tolist())), "peak_velocity_dps"),
        points_csv(list(zip(amp.tolist(), dur.tolist())), "duration_ms"),
    )


__all__ = [
    "MainSequenceModel", "NORMATIVE", "predict_peak_velocity", "predict_duration", "fit_main_sequence",
    "fit_main_sequence_detailed", "fit_velocity_curve", "FitResult", "DeviationReport", "deviation_report",
    "report_csv", "points_csv", "normative_curves",
]
