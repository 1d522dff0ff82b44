"""Golden fixtures: checked-in inputs, checked-in expected outputs, regenerate and compare.

Layout: ``<root>/<name>/fixture.json`` (``kind`` and ``tolerance``), ``inputs/`` and
``expected/``. Run ``python -m gazemark.golden [ROOT]``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_ROOT = Path(__file__).resolve().parents[2] / "fixtures"


@dataclass
class FixtureResult:
    name: str
    passed: bool
    diffs: list[str] = field(default_factory=list)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + "".join(f"\n    {d}" for d in self.diffs)


def _cell_equal(a: str, b: str, tol: float) -> bool:
    if a == b:
        return True
    try:
        x, y = float(a), float(b)
    except ValueError:
        return False
    return math.isclose(x, y, rel_tol=tol, abs_tol=tol)


def compare_csv(produced: str, expected: str, tol: float) -> list[str]:
    """Cell-wise diff; numeric cells compare within ``tol``, other cells exactly."""
    got = list(csv.reader(io.StringIO(produced)))
    want = list(csv.reader(io.StringIO(expected)))
    diffs = []
    if len(got) != len(want):
        diffs.append(f"row count {len(got)} != expected {len(want)}")
    for i, (g, w) in enumerate(zip(got, want)):
        if len(g) != len(w):
            diffs.append(f"row {i}: {len(g)} cells != expected {len(w)}")
            continue
        for j, (a, b) in enumerate(zip(g, w)):
            if not _cell_equal(a, b, tol):
                diffs.append(f"row {i} col {want[0][j] if want else j}: got {a!r}, expected {b!r}")
    return diffs


def _rspan(inp: Path) -> dict[str, str]:
    from .cohort_stats import group_scores, independent_t_test, rspan_score, rspan_scores_csv, t_test_csv
    from .ingest import parse_participants_csv

    meta = parse_participants_csv((inp / "participants.csv").read_text())
    logs: dict[str, list[tuple[int, int]]] = {}
    with open(inp / "recall_log.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            logs.setdefault(row["participant_id"], []).append((int(row["presented"]), int(row["recalled_in_order"])))
    results = [rspan_score(logs[pid], pid) for pid in meta]
    groups = group_scores(results, meta)
    tests = [independent_t_test(groups["NonADHD"], groups["ADHD"], v) for v in ("pooled", "welch")]
    return {"rspan_scores.csv": rspan_scores_csv(results, meta), "t_test.csv": t_test_csv(tests)}


def _mainseq(inp: Path) -> dict[str, str]:
    from .mainseq import predict_duration, predict_peak_velocity

    with open(inp / "amplitudes.csv", newline="") as fh:
        amps = [float(r["amplitude_deg"]) for r in csv.DictReader(fh)]
    lines = ["amplitude_deg,peak_velocity_dps,duration_ms"]
    lines += [f"{a!r},{predict_peak_velocity(a)!r},{predict_duration(a)!r}" for a in amps]
    return {"curves.csv": "\n".join(lines) + "\n"}


def _aoi_summary(inp: Path) -> dict[str, str]:
    from .aoi import load_aoi_set

    aois = load_aoi_set((inp / "aois.csv").read_text())
    return {"summary.json": json.dumps({"rects": len(aois), "stimuli": len(aois.stimuli),
                                        "scenes": len(aois.scenes())})}


def _cohort_summary(inp: Path) -> dict[str, str]:
    from .events import detect
    from .features import build_aoi_features
    from .synth import CohortSpec, generate_cohort

    cfg = json.loads((inp / "config.json").read_text())
    cohort = generate_cohort(CohortSpec(n_per_group=cfg["n_per_group"], seed=cfg["seed"]))
    meta = {m.id: m for m in cohort.participants}
    events = {(r.participant_id, r.stimulus_id): detect(r) for r in cohort.recordings}
    table = build_aoi_features(events, cohort.aois, meta, "sentence_based")
    per_label: dict[str, int] = {}
    for m in cohort.participants:
        per_label[m.label] = per_label.get(m.label, 0) + 1
    return {"summary.json": json.dumps({
        "participants": len(cohort.participants), "per_label": per_label, "recordings": len(cohort.recordings),
        "candidate_rows": len(table.rows) + table.dropped_units,
    })}


RUNNERS = {"rspan": _rspan, "mainseq_curves": _mainseq, "aoi_summary": _aoi_summary,
           "cohort_summary": _cohort_summary}


def run_fixture(path: Path) -> FixtureResult:
    spec = json.loads((path / "fixture.json").read_text())
    runner = RUNNERS.get(spec.get("kind"))
    if runner is None:
        return FixtureResult(path.name, False, [f"unknown fixture kind {spec.get('kind')!r}"])
    tol = float(spec.get("tolerance", 0.0))
    try:
        produced = runner(path / "inputs")
    except Exception as exc:  # a crashing fixture is a failing fixture
        return FixtureResult(path.name, False, [f"{type(exc).__name__}: {exc}"])
    diffs = []
    for name in sorted(p.name for p in (path / "expected").iterdir()):
        if name not in produced:
            diffs.append(f"{name}: not produced")
            continue
        expected = (path / "expected" / name).read_text()
        if name.endswith(".json"):
            if json.loads(produced[name]) != json.loads(expected):
                diffs.append(f"{name}: got {produced[name]}, expected {expected.strip()}")
        else:
            diffs += [f"{name}: {d}" for d in compare_csv(produced[name], expected, tol)]
    return FixtureResult(path.name, not diffs, diffs)


def run_golden_suite(root: str | os.PathLike | None = None) -> list[FixtureResult]:
    """Run every fixture under ``root``; an empty or missing root is itself a failure."""
    base = Path(root) if root is not None else Path(os.environ.get("GAZEMARK_FIXTURES", DEFAULT_ROOT))
    dirs = sorted(p for p in base.iterdir() if (p / "fixture.json").is_file()) if base.is_dir() else []
    if not dirs:
        return [FixtureResult("<suite>", False, [f"no fixtures found under {base}"])]
    return [run_fixture(d) for d in dirs]


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    results = run_golden_suite(args[0] if args else None)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
