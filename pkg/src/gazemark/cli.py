"""Command-line front end: ``gazemark <subcommand> --out DIR [options]``.

Exit codes: 0 success, 1 usage error, 2 data error. Every subcommand
writes only inside ``--out``; outputs are staged and moved into place when
the command succeeds, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import GazemarkError

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

EFFECT_LEVELS = ("none", "default", "strong")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# -- configuration ---------------------------------------------------------------

@dataclass
class PipelineConfig:
    seed: int = 0
    k: int = 10
    granularity: str = "sentence"
    feature_sets: list[str] = field(default_factory=lambda: ["fixation", "saccade", "combined", "aoi-scene",
                                                               "aoi-sentence"])
    classifiers: list[str] = field(default_factory=list)
    grid_search: bool = False
    table_format: str = "csv"
    n_per_group: int = 7
    effects: str = "default"
    rate_hz: float = 60.0
    max_gap_ms: float = 75.0
    velocity_threshold_dps: float = 30.0
    fixation_speed_dps: float = 30.0
    min_fixation_ms: float = 60.0
    min_saccade_samples: int = 2
    merge_angle_deg: float = 0.5
    merge_gap_ms: float = 75.0
    screen_width_px: int = 1280
    screen_height_px: int = 1024
    screen_width_cm: float = 43.2
    screen_height_cm: float = 32.4
    viewing_distance_cm: float = 60.0

    def geometry(self):
        from .ingest import ScreenGeometry

        return ScreenGeometry(self.screen_width_px, self.screen_height_px, self.screen_width_cm,
                              self.screen_height_cm, self.viewing_distance_cm)

    def detector(self):
        from .events import DetectorParams

        return DetectorParams(
            velocity_threshold_dps=self.velocity_threshold_dps, fixation_speed_dps=self.fixation_speed_dps,
            min_fixation_ms=self.min_fixation_ms, min_saccade_samples=self.min_saccade_samples,
            merge_angle_deg=self.merge_angle_deg, merge_gap_ms=self.merge_gap_ms,
        )


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _to_bool(value: str) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _coerce(name: str, raw):
    default = PipelineConfig.__dataclass_fields__[name]
    kind = default.type
    if not isinstance(raw, str):
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        return _to_bool(raw)
    if kind == "list[str]":
        return _split_list(raw)
    return raw.strip()


def load_config(path: str | None) -> dict:
    """Read ``key = value`` lines (``#`` comments, optional ``[section]`` headers are ignored)."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[gazemark]\n" + text, source=path)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            name = key.replace("-", "_")
            if name == "feature_set":
                name = "feature_sets"
            if name not in PipelineConfig.__dataclass_fields__:
                raise UsageError(f"{path}: unknown config key {key!r}")
            try:
                values[name] = _coerce(name, raw)
            except ValueError as exc:
                raise UsageError(f"{path}: bad value for {key}: {exc}") from None
    return values


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    values = load_config(getattr(args, "config", None))
    for name in PipelineConfig.__dataclass_fields__:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = _coerce(name, flag)
    cfg = PipelineConfig(**values)
    _check_config(cfg)
    return cfg


def _check_config(cfg: PipelineConfig) -> None:
    from .features import FEATURE_SETS, GRANULARITIES
    from .ml import FAMILIES

    if cfg.k < 2:
        raise UsageError("--k must be at least 2")
    if cfg.granularity not in GRANULARITIES:
        raise UsageError(f"granularity must be one of {', '.join(GRANULARITIES)}")
    bad = [f for f in cfg.feature_sets if f not in FEATURE_SETS]
    if bad or not cfg.feature_sets:
        raise UsageError(f"feature sets must be drawn from {', '.join(FEATURE_SETS)}")
    bad = [c for c in cfg.classifiers if c not in FAMILIES]
    if bad:
        raise UsageError(f"unknown classifier(s) {', '.join(bad)}; choose from {', '.join(FAMILIES)}")
    if cfg.effects not in EFFECT_LEVELS:
        raise UsageError(f"effects must be one of {', '.join(EFFECT_LEVELS)}")
    if cfg.table_format not in ("csv", "arff"):
        raise UsageError("format must be csv or arff")
    if cfg.n_per_group < 1:
        raise UsageError("--n-per-group must be at least 1")


# -- staged output -----------------------------------------------------------------

class Staging:
    """Collects outputs in a hidden directory inside ``out`` and publishes them on success."""

    def __init__(self, out: str):
        self.out = Path(out)
        self.created = False
        self.dir: Path | None = None

    def __enter__(self) -> "Staging":
        if self.out.exists() and not self.out.is_dir():
            raise UsageError(f"--out {self.out} exists and is not a directory")
        if not self.out.exists():
            self.out.mkdir(parents=True)
            self.created = True
        self.dir = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.out))
        return self

    def write(self, rel: str, content: str | bytes) -> Path:
        path = self.dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content, encoding="utf-8")
        return path

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            for item in sorted(self.dir.iterdir()):
                target = self.out / item.name
                if target.is_dir():
                    shutil.rmtree(target)
                elif target.exists():
                    target.unlink()
                item.rename(target)
            self.dir.rmdir()
            return False
        shutil.rmtree(self.dir, ignore_errors=True)
        if self.created and not any(self.out.iterdir()):
            self.out.rmdir()
        return False


# -- helpers -----------------------------------------------------------------------

def _read(path: str | None, what: str) -> str:
    if path is None:
        raise UsageError(f"{what} is required")
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


def _guard(path: str, fn, *a, **kw):
    """Run a parser and prefix any data error with the file it came from."""
    try:
        return fn(*a, **kw)
    except (GazemarkError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: {type(exc).__name__}: {exc}") from None


def _load_gaze(path: str, cfg: PipelineConfig):
    from .ingest import parse_gaze_csv

    return _guard(path, parse_gaze_csv, _read(path, "--gaze"), cfg.geometry(), nominal_rate_hz=cfg.rate_hz)


def _load_meta(path: str):
    from .ingest import parse_participants_csv

    return _guard(path, parse_participants_csv, _read(path, "--participants"))


def _load_aois(path: str | None, cfg: PipelineConfig):
    from .aoi import default_aoi_set, load_aoi_set

    if path is None:
        return default_aoi_set()
    return _guard(path, load_aoi_set, _read(path, "--aois"), cfg.geometry())


def _load_events(path: str):
    from .events import read_events_csv

    return _guard(path, read_events_csv, _read(path, "--events"))


def _ingest_report(parsed, cleaned) -> str:
    lines = ["item,value"]
    lines += [f"rows_total,{parsed.rows_total}", f"rows_accepted,{parsed.rows_accepted}",
              f"rows_rejected,{len(parsed.rejected)}", f"recordings,{len(parsed.recordings)}",
              f"samples_interpolated,{sum(int(r.interpolated.sum()) for r in cleaned)}"]
    lines += [f"rejected_line_{r.line},{json.dumps(r.reason)}" for r in parsed.rejected]
    return "\n".join(lines) + "\n"


def _detect_all(recordings, cfg: PipelineConfig):
    from .events import detect
    from .ingest import validate_and_interpolate

    params, geometry = cfg.detector(), cfg.geometry()
    out = {}
    for rec in recordings:
        clean = validate_and_interpolate(rec, cfg.max_gap_ms)
        out[(rec.participant_id, rec.stimulus_id)] = detect(clean, params, geometry)
    return out


def _mainseq_outputs(events, meta, stage: Staging, prefix: str = "") -> None:
    from .events import saccades
    from .mainseq import deviation_report, normative_curves, points_csv, report_csv

    sacs, labels = [], []
    for (pid, _), evs in sorted(events.items()):
        if pid not in meta:
            raise DataError(f"participant {pid} missing from metadata")
        for s in saccades(evs):
            sacs.append(s)
            labels.append(meta[pid].label)
    reports = deviation_report(sacs, labels)
    stage.write(prefix + "mainseq_report.csv", report_csv(reports))
    for r in reports:
        stage.write(prefix + f"velocity_points_{r.group}.csv", points_csv(r.velocity_points, "peak_velocity_dps"))
        stage.write(prefix + f"duration_points_{r.group}.csv", points_csv(r.duration_points, "duration_ms"))
    vel, dur = normative_curves()
    stage.write(prefix + "normative_velocity.csv", vel)
    stage.write(prefix + "normative_duration.csv", dur)


def _feature_table(name: str, events, meta, aois, cfg: PipelineConfig):
    from .features import build_feature_set

    missing = sorted({pid for pid, _ in events} - set(meta))
    if missing:
        raise DataError(f"participants missing from metadata: {', '.join(missing)}")
    return build_feature_set(name, events, meta, aois, cfg.granularity, cfg.geometry())


def _classify(table, cfg: PipelineConfig, stage: Staging, prefix: str = "") -> dict:
    from .ml import DEFAULT_GRIDS, FAMILIES, ClassifierSpec, Dataset, cross_validate, grid_search, report_csv, roc_csv

    data = Dataset.from_table(table)
    results = {}
    chosen = {}
    for family in cfg.classifiers or list(FAMILIES):
        if cfg.grid_search:
            spec, report = grid_search(family, DEFAULT_GRIDS[family], data, cfg.k, cfg.seed)
        else:
            spec = ClassifierSpec(family, seed=cfg.seed)
            report = cross_validate(spec, data, cfg.k, cfg.seed)
        results[family] = report
        chosen[family] = spec.params
        stage.write(prefix + f"roc_{table.name}_{family}.csv", roc_csv(report))
        stage.write(prefix + f"eval_{table.name}_{family}.json", report.to_json())
    stage.write(prefix + f"report_{table.name}.csv", report_csv(results))
    stage.write(prefix + f"params_{table.name}.json", json.dumps(chosen, sort_keys=True, indent=1) + "\n")
    return results


def _effects(level: str):
    from .synth import AdhdEffects

    return {"none": AdhdEffects.none, "default": AdhdEffects.default, "strong": AdhdEffects.strong}[level]()


# -- subcommands -------------------------------------------------------------------

def cmd_synth(args, cfg, stage):
    from .synth import CohortSpec, generate_cohort

    spec = CohortSpec(n_per_group=cfg.n_per_group, seed=cfg.seed, rate_hz=cfg.rate_hz,
                      adhd_effects=_effects(cfg.effects), geometry=cfg.geometry())
    cohort = generate_cohort(spec)
    cohort.write(stage.dir)
    print(f"synthesised {len(cohort.participants)} participants, {len(cohort.recordings)} recordings")


def cmd_ingest(args, cfg, stage):
    from .ingest import validate_and_interpolate, write_gaze_csv

    parsed = _load_gaze(args.gaze, cfg)
    if args.participants:
        meta = _load_meta(args.participants)
        unknown = sorted({r.participant_id for r in parsed} - set(meta))
        if unknown:
            raise DataError(f"{args.gaze}: participants missing from metadata: {', '.join(unknown)}")
    cleaned = [validate_and_interpolate(r, cfg.max_gap_ms) for r in parsed]
    stage.write("gaze_clean.csv", write_gaze_csv(parsed.recordings))
    stage.write("ingest_report.csv", _ingest_report(parsed, cleaned))
    print(f"{parsed.rows_accepted}/{parsed.rows_total} rows accepted in {len(parsed)} recordings")


def cmd_detect(args, cfg, stage):
    from .events import write_events_csv

    parsed = _load_gaze(args.gaze, cfg)
    events = _detect_all(parsed.recordings, cfg)
    stage.write("events.csv", write_events_csv(events))
    print(f"{sum(len(v) for v in events.values())} events from {len(events)} recordings")


def cmd_mainseq(args, cfg, stage):
    events = _load_events(args.events)
    _guard(args.events, _mainseq_outputs, events, _load_meta(args.participants), stage)


def cmd_features(args, cfg, stage):
    from .table_io import export_table, table_filename

    events = _load_events(args.events)
    meta = _load_meta(args.participants)
    aois = _load_aois(args.aois, cfg)
    for name in cfg.feature_sets:
        table = _guard(args.events, _feature_table, name, events, meta, aois, cfg)
        stage.write(table_filename(table, cfg.table_format), export_table(table, cfg.table_format))
        print(f"{name}: {len(table.rows)} rows ({table.dropped_units} empty units dropped)")


def cmd_classify(args, cfg, stage):
    from .table_io import name_from_filename, parse_table

    fmt = "arff" if str(args.table).lower().endswith(".arff") else "csv"
    name, granularity = name_from_filename(Path(args.table).name) or (Path(args.table).stem, cfg.granularity)
    table = _guard(args.table, parse_table, _read(args.table, "--table"), fmt, granularity, name)
    results = _guard(args.table, _classify, table, cfg, stage)
    for family, r in results.items():
        print(f"{table.name} {family}: accuracy={r.accuracy:.4f} f1_w={r.f1_w:.4f} auc={r.auc:.4f}")


def _recall_logs(path: str) -> dict[str, list[tuple[int, int]]]:
    text = _read(path, "--recall-log")
    logs: dict[str, list[tuple[int, int]]] = {}
    reader = csv.DictReader(text.splitlines())
    need = ("participant_id", "presented", "recalled_in_order")
    if not reader.fieldnames or any(c not in reader.fieldnames for c in need):
        raise DataError(f"{path}: recall log needs columns {', '.join(need)}")
    for line, row in enumerate(reader, start=2):
        try:
            logs.setdefault(row["participant_id"], []).append((int(row["presented"]), int(row["recalled_in_order"])))
        except ValueError as exc:
            raise DataError(f"{path}: line {line}: {exc}") from None
    return logs


def _rspan_outputs(logs, meta, stage: Staging, path: str, prefix: str = "") -> None:
    from .cohort_stats import group_scores, independent_t_test, rspan_score, rspan_scores_csv, t_test_csv

    missing = sorted(set(logs) - set(meta))
    if missing:
        raise DataError(f"{path}: participants missing from metadata: {', '.join(missing)}")
    results = [_guard(path, rspan_score, logs[pid], pid) for pid in sorted(logs, key=_natural)]
    groups = group_scores(results, meta)
    tests = [_guard(path, independent_t_test, groups["NonADHD"], groups["ADHD"], v) for v in ("pooled", "welch")]
    stage.write(prefix + "rspan_scores.csv", rspan_scores_csv(results, meta))
    stage.write(prefix + "t_test.csv", t_test_csv(tests))
    for t in tests:
        print(f"{t.variant}: t={t.t:.4f} df={t.df:.2f} p(one-tailed)={t.p_one:.4f} p(two-tailed)={t.p_two:.4f}")


def _natural(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


def cmd_report(args, cfg, stage):
    logs = _recall_logs(args.recall_log)
    _rspan_outputs(logs, _load_meta(args.participants), stage, args.recall_log)


def cmd_pipeline(args, cfg, stage):
    from .events import MatchResult, match_events, write_events_csv
    from .ingest import parse_gaze_csv
    from .table_io import export_table, table_filename

    truth = None
    if args.gaze:
        parsed = _load_gaze(args.gaze, cfg)
        meta = _load_meta(args.participants)
        aois = _load_aois(args.aois, cfg)
    else:
        if args.participants or args.aois:
            raise UsageError("--participants/--aois need --gaze (omit all three to synthesise a cohort)")
        from .synth import CohortSpec, generate_cohort

        cohort = generate_cohort(CohortSpec(n_per_group=cfg.n_per_group, seed=cfg.seed, rate_hz=cfg.rate_hz,
                                            adhd_effects=_effects(cfg.effects), geometry=cfg.geometry()))
        paths = cohort.write(stage.dir / "synth")
        # read back from disk so the run exercises the same parser as real input
        parsed = parse_gaze_csv(Path(paths["gaze.csv"]).read_text(), cfg.geometry(), nominal_rate_hz=cfg.rate_hz)
        meta = {m.id: m for m in cohort.participants}
        aois = cohort.aois
        truth = cohort.truth.events

    events = _detect_all(parsed.recordings, cfg)
    stage.write("events.csv", write_events_csv(events))
    if truth is not None:
        total = MatchResult(0, 0, 0)
        for key, evs in sorted(events.items()):
            total += match_events(evs, truth[key])
        stage.write("detection_eval.csv", "tp,fp,fn,precision,recall,f1\n"
                    f"{total.true_positives},{total.false_positives},{total.false_negatives},"
                    f"{total.precision!r},{total.recall!r},{total.f1!r}\n")
    _guard("events", _mainseq_outputs, events, meta, stage, "mainseq/")
    for name in cfg.feature_sets:
        table = _guard("events", _feature_table, name, events, meta, aois, cfg)
        stage.write("features/" + table_filename(table, cfg.table_format), export_table(table, cfg.table_format))
        results = _guard(name, _classify, table, cfg, stage, "classify/")
        best = max(results.items(), key=lambda kv: kv[1].accuracy)
        print(f"{name}: best {best[0]} accuracy={best[1].accuracy:.4f}")
    if args.recall_log:
        _rspan_outputs(_recall_logs(args.recall_log), meta, stage, args.recall_log, "rspan/")


COMMANDS = {
    "ingest": (cmd_ingest, "validate a gaze export and report rejected rows and gaps"),
    "detect": (cmd_detect, "detect fixations and saccades (I-VT)"),
    "mainseq": (cmd_mainseq, "fit main-sequence curves per group and report deviations"),
    "features": (cmd_features, "build feature tables from detected events"),
    "classify": (cmd_classify, "cross-validate classifier families on a feature table"),
    "synth": (cmd_synth, "generate a synthetic reading-span cohort"),
    "report": (cmd_report, "score reading-span recall logs and compare groups"),
    "pipeline": (cmd_pipeline, "run every stage end to end"),
}


# -- argument parsing ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazemark", description="Gaze analytics pipeline.")
    parser.add_argument("--version", action="version", version=f"gazemark {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH", help="key = value settings file; flags take precedence")
        p.add_argument("--out", metavar="DIR", required=True, help="output directory")
        p.add_argument("--seed", type=int, metavar="N", help="master random seed (default 0)")
        if name in ("ingest", "detect", "pipeline"):
            p.add_argument("--gaze", metavar="PATH", required=name != "pipeline", help="gaze sample CSV")
            p.add_argument("--rate-hz", dest="rate_hz", type=float, metavar="HZ",
                           help="nominal sampling rate (default 60)")
            p.add_argument("--max-gap-ms", dest="max_gap_ms", type=float, metavar="MS",
                           help="longest gap filled by interpolation (default 75)")
        if name in ("detect", "pipeline"):
            p.add_argument("--velocity-threshold", dest="velocity_threshold_dps", type=float, metavar="DPS",
                           help="I-VT saccade threshold in deg/s (default 30)")
        if name in ("ingest", "mainseq", "features", "report", "pipeline"):
            p.add_argument("--participants", metavar="PATH", required=name in ("mainseq", "features", "report"),
                           help="participant metadata CSV")
        if name in ("mainseq", "features"):
            p.add_argument("--events", metavar="PATH", required=True, help="events CSV from `detect`")
        if name in ("features", "pipeline"):
            p.add_argument("--aois", metavar="PATH", help="AOI file (default: built-in layout)")
            p.add_argument("--feature-set", dest="feature_sets", metavar="LIST",
                           help="comma-separated subset of fixation,saccade,combined,aoi-scene,aoi-sentence")
            p.add_argument("--format", dest="table_format", choices=("csv", "arff"),
                           help="feature table format (default csv)")
        if name in ("features", "classify", "pipeline"):
            p.add_argument("--granularity", choices=("event", "sentence", "scene", "participant"),
                           help="instance unit for event feature sets (default sentence)")
        if name in ("classify", "pipeline"):
            p.add_argument("--classifiers", metavar="LIST", help="comma-separated classifier families (default all)")
            p.add_argument("--k", type=int, metavar="N", help="cross-validation folds (default 10)")
            p.add_argument("--grid-search", dest="grid_search", action="store_const", const=True,
                           help="tune each family over its default grid")
        if name == "classify":
            p.add_argument("--table", metavar="PATH", required=True, help="feature table (.csv or .arff)")
        if name in ("synth", "pipeline"):
            p.add_argument("--n-per-group", dest="n_per_group", type=int, metavar="N",
                           help="participants per label (default 7)")
            p.add_argument("--effects", choices=EFFECT_LEVELS, help="group-difference strength (default default)")
        if name in ("report", "pipeline"):
            p.add_argument("--recall-log", dest="recall_log", metavar="PATH",
                           required=name == "report", help="CSV of participant_id,presented,recalled_in_order")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        cfg = resolve_config(args)
        func = COMMANDS[args.command][0]
        with Staging(args.out) as stage:
            func(args, cfg, stage)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GazemarkError, ValueError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
