"""Command-line front end: ``eccentricity {ingest-check,compute,analyze,synth}``.

Exit codes: 0 success, 2 usage error, 3 data/validation error,
4 degenerate analysis.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, analysis, reports
from .errors import ConfigError, DegenerateError, EccentricityError, ValidationError
from .ingest import SCHEMAS, EventTable, parse_events, read_item_metadata, validate_table, write_events_csv
from .metrics import STANDARDIZATION_MODES, EccentricityScores, compute_scores
from .synth import SynthConfig, generate
from .windowing import WindowConfig, assign_windows, parse_origin

log = logging.getLogger("eccentricity")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 2, 3, 4
ANALYSES = ("density", "scatter", "stability", "groups", "sweep")


def resolve_threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("ECC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# -- argument parsing --------------------------------------------------------


def _add_input(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("input", nargs=None if required else "?", help="feedback log")
    p.add_argument("--schema", choices=SCHEMAS, default="generic-csv")
    p.add_argument("--timestamp-unit", choices=("s", "ms"), default="s")
    p.add_argument("--skip-bad-rows", action="store_true",
                   help="drop malformed rows (counted) instead of failing")


def _add_pipeline(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-days", type=int, default=28)
    p.add_argument("--origin", default="auto", help="ISO-8601 time, epoch seconds or 'auto'")
    p.add_argument("--dedupe", choices=("sum", "last"), default="sum")
    p.add_argument("--standardization", choices=STANDARDIZATION_MODES, default="per-window")
    p.add_argument("--no-exclusion", action="store_true",
                   help="keep items that never had a co-consumer in any window")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eccentricity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="parse a log and print its summary")
    _add_input(p)

    p = sub.add_parser("compute", help="compute rarity and eccentricity scores")
    _add_input(p)
    _add_pipeline(p)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("analyze", help="run one analysis")
    p.add_argument("analysis", choices=ANALYSES)
    p.add_argument("--input", dest="input", default=None)
    p.add_argument("--schema", choices=SCHEMAS, default="generic-csv")
    p.add_argument("--timestamp-unit", choices=("s", "ms"), default="s")
    p.add_argument("--skip-bad-rows", action="store_true")
    p.add_argument("--scores", type=Path, default=None,
                   help="directory written by 'compute' (density and scatter only)")
    _add_pipeline(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--grid-size", type=int, default=512)
    p.add_argument("--min-windows", type=int, default=4)
    p.add_argument("--split", default="median", help="'median', epoch seconds or ISO-8601")
    p.add_argument("--bins", type=int, default=7)
    p.add_argument("--min-users", type=int, default=10)
    p.add_argument("--no-release-filter", action="store_true")
    p.add_argument("--metadata", type=Path, default=None, help="item_id,attribute,value sidecar")
    p.add_argument("--artist-attribute", default="artist")
    p.add_argument("--ir-centers", default="0.6,0.7,0.8,0.9,0.99")
    p.add_argument("--band", type=float, default=0.01)
    p.add_argument("--quintile", type=float, default=0.2)
    p.add_argument("--widths", default="7,14,21,28,42,84")

    p = sub.add_parser("synth", help="write a synthetic log with planted labels")
    p.add_argument("--out", required=True, type=Path)
    defaults = SynthConfig()
    for name, value in defaults.as_dict().items():
        flag = "--" + name.replace("_", "-")
        if isinstance(value, bool):
            p.add_argument(flag, action="store_true")
        else:
            p.add_argument(flag, type=type(value), default=value)
    return parser


# -- helpers -----------------------------------------------------------------


class _Outputs:
    """Collects files in a scratch directory and publishes them on success."""

    def __init__(self, final: Path):
        self.final = final
        self.tmp = Path(tempfile.mkdtemp(prefix="eccentricity-"))
        self.files: list[str] = []

    def publish(self, manifest: dict) -> None:
        manifest["outputs"] = [{"file": f, "sha256": reports.sha256(self.tmp / f)}
                               for f in sorted(self.files)]
        reports.write_json(manifest, self.tmp / "manifest.json")
        self.final.mkdir(parents=True, exist_ok=True)
        for f in self.files + ["manifest.json"]:
            shutil.move(str(self.tmp / f), str(self.final / f))
        shutil.rmtree(self.tmp, ignore_errors=True)

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _manifest(args: argparse.Namespace, inputs: list[Path], started: float) -> dict:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
              if k not in ("verbose",)}
    return {
        "tool": "eccentricity",
        "version": __version__,
        "argv": sys.argv[1:],
        "config": config,
        "inputs": [{"path": str(p), "bytes": p.stat().st_size, "sha256": reports.sha256(p)}
                   for p in inputs],
        "started": started,
        "finished": time.time(),
    }


def _load(args) -> EventTable:
    if args.input is None:
        raise ConfigError("this analysis needs --input")
    path = Path(args.input)
    if not path.is_file():
        raise FileNotFoundError(f"no such input file: {path}")
    return parse_events(path, args.schema, timestamp_unit=args.timestamp_unit,
                        skip_bad_rows=args.skip_bad_rows)


def _window_config(args) -> WindowConfig:
    return WindowConfig(width_days=args.window_days, origin=parse_origin(args.origin), dedupe=args.dedupe)


def _pipeline(table: EventTable, args):
    validate_table(table)
    wf = assign_windows(table, _window_config(args))
    rt, scores = compute_scores(wf, args.standardization, not args.no_exclusion,
                                resolve_threads(args.threads))
    return wf, rt, scores


def _parse_split(text: str, table: EventTable) -> int:
    if text == "median":
        return analysis.median_timestamp(table)
    value = parse_origin(text)
    if value is None:
        raise ConfigError("--split must be 'median', epoch seconds or an ISO-8601 time")
    return value


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


# -- commands ----------------------------------------------------------------


def cmd_ingest_check(args) -> int:
    table = _load(args)
    summary = validate_table(table).as_dict()
    summary["skipped_rows"] = table.skipped_rows
    summary["schema"] = table.schema_tag
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_compute(args) -> int:
    started = time.time()
    table = _load(args)
    out = _Outputs(args.out)
    try:
        _, rt, scores = _pipeline(table, args)
        out.files += reports.write_scores(out.tmp, table, rt, scores)
        manifest = _manifest(args, [Path(args.input)], started)
        manifest["summary"] = validate_table(table).as_dict()
        manifest["threads"] = resolve_threads(args.threads)
        manifest["excluded_items"] = int(scores.excluded.sum())
        out.publish(manifest)
    except BaseException:
        out.discard()
        raise
    return EXIT_OK


def _scores_from_dir(directory: Path) -> tuple[EccentricityScores, pd.DataFrame]:
    items, users = reports.read_scores(directory)
    ie = items["ie_z"].to_numpy(np.float64)
    ue = users["ue_z"].to_numpy(np.float64)
    scores = EccentricityScores(user_raw=ue, user_z=ue, item_raw=ie, item_z=ie,
                                excluded=items["excluded"].to_numpy() == 1)
    return scores, items


def cmd_analyze(args) -> int:
    started = time.time()
    name = args.analysis
    if args.scores is not None and name not in ("density", "scatter"):
        raise ConfigError(f"'{name}' needs the raw log (--input), not --scores")
    if args.scores is None and args.input is None:
        raise ConfigError("give --input (raw log) or --scores (compute output)")
    inputs: list[Path] = []
    table = None
    if args.scores is None:
        table = _load(args)
        inputs.append(Path(args.input))
    else:
        inputs += [args.scores / "item_scores.csv", args.scores / "user_scores.csv"]
        for p in inputs:
            if not p.is_file():
                raise FileNotFoundError(f"missing scores file: {p}")

    out = _Outputs(args.out)
    try:
        meta = {"analysis": name}
        if name == "density":
            if table is None:
                scores, _ = _scores_from_dir(args.scores)
            else:
                _, _, scores = _pipeline(table, args)
            out.files += reports.write_density(out.tmp, analysis.density_report(scores, args.grid_size), meta)
        elif name == "scatter":
            if table is None:
                scores, items = _scores_from_dir(args.scores)
                windows = pd.read_csv(args.scores / "rarity_windows.csv", dtype={"item_id": str},
                                      float_precision="round_trip")
                inputs.append(args.scores / "rarity_windows.csv")
                active = items["item_id"].map(windows.groupby("item_id").size()).fillna(0).to_numpy()
                report = analysis.scatter_from_arrays(items["ir_representative"].to_numpy(np.float64),
                                                      active, scores.item_z, args.min_windows)
                keys = items["item_id"].to_numpy()
            else:
                _, rt, scores = _pipeline(table, args)
                report = analysis.rarity_eccentricity_scatter(rt, scores, args.min_windows)
                keys = table.item_keys
            out.files += reports.write_scatter(out.tmp, report, keys, meta)
        elif name == "stability":
            split = _parse_split(args.split, table)
            tm = analysis.stability_analysis(
                table, split, _window_config(args), bins=args.bins, min_users=args.min_users,
                standardization=args.standardization, exclusion=not args.no_exclusion,
                release_filter=not args.no_release_filter)
            out.files += reports.write_transition(out.tmp, tm, meta)
        elif name == "groups":
            wf, rt, scores = _pipeline(table, args)
            metadata = None
            if args.metadata is not None:
                metadata = read_item_metadata(args.metadata, table)
                inputs.append(args.metadata)
            feats = analysis.item_features(wf, metadata, artist_attribute=args.artist_attribute)
            result = analysis.group_comparison(rt, scores, feats, _floats(args.ir_centers),
                                               args.band, args.quintile)
            out.files += reports.write_groups(out.tmp, result, meta)
        elif name == "sweep":
            widths = [int(w) for w in _floats(args.widths)]
            out.files += reports.write_sweep(out.tmp, analysis.window_size_sweep(table, widths), meta)
        out.publish(_manifest(args, inputs, started))
    except BaseException:
        out.discard()
        raise
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.time()
    fields = SynthConfig().as_dict()
    config = SynthConfig(**{k: getattr(args, k) for k in fields})
    table, truth = generate(config)
    out = _Outputs(args.out)
    try:
        write_events_csv(table, out.tmp / "events.csv")
        pd.DataFrame(truth.rows(table), columns=["id", "kind", "label"]).to_csv(
            out.tmp / "truth.csv", index=False, lineterminator="\n")
        out.files += ["events.csv", "truth.csv"]
        manifest = _manifest(args, [], started)
        manifest["synth_config"] = config.as_dict()
        out.publish(manifest)
    except BaseException:
        out.discard()
        raise
    return EXIT_OK


COMMANDS = {"ingest-check": cmd_ingest_check, "compute": cmd_compute, "analyze": cmd_analyze,
            "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except DegenerateError as exc:
        print(f"error: degenerate analysis: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EccentricityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
