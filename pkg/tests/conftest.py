import numpy as np
import pytest

from gazemark.events import detect
from gazemark.ingest import GazeRecording, ScreenGeometry, degrees_to_pixels
from gazemark.synth import CohortSpec, generate_cohort

GEOMETRY = ScreenGeometry()


def recording_from_degrees(x_deg, y_deg, rate_hz=60.0, pid="P01", sid="S01", valid=None):
    """Build a recording from a gaze path given in degrees."""
    x_deg = np.asarray(x_deg, dtype=float)
    y_deg = np.asarray(y_deg, dtype=float)
    n = len(x_deg)
    x_px, y_px = degrees_to_pixels(x_deg, y_deg, GEOMETRY)
    ok = np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    return GazeRecording(
        participant_id=pid, stimulus_id=sid, t_ms=np.arange(n) * 1000.0 / rate_hz,
        x_px=x_px, y_px=y_px, pupil_left_mm=np.full(n, 3.4), pupil_right_mm=np.full(n, 3.5),
        valid_left=ok, valid_right=ok, nominal_rate_hz=rate_hz,
    )


@pytest.fixture(scope="session")
def cohort():
    return generate_cohort(CohortSpec(seed=1))


@pytest.fixture(scope="session")
def detected(cohort):
    return {(r.participant_id, r.stimulus_id): detect(r) for r in cohort.recordings}


@pytest.fixture(scope="session")
def meta(cohort):
    return {m.id: m for m in cohort.participants}
