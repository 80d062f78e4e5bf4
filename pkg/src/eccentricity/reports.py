"""CSV/JSON writers for scores and analysis results.

Floats are written with ``%.17g`` so every value survives a text round trip.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .analysis import GroupComparisonTable, ScatterReport, TransitionMatrix, WindowSweepReport
from .ingest import EventTable
from .metrics import EccentricityScores, RarityTable
from .stats import DensitySeries

FLOAT_FORMAT = "%.17g"


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _clean(obj):
    """Make numpy scalars/arrays and NaN JSON-friendly."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return None if not math.isfinite(val) else val
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def write_csv(frame: pd.DataFrame, path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


# -- scores ------------------------------------------------------------------


def item_scores_frame(table: EventTable, rt: RarityTable, scores: EccentricityScores) -> pd.DataFrame:
    return pd.DataFrame({
        "item_id": table.item_keys,
        "ir_representative": rt.representative,
        "ir_percentile": rt.percentile,
        "ie_z": scores.item_z,
        "excluded": scores.excluded.astype(int),
    })


def user_scores_frame(table: EventTable, scores: EccentricityScores) -> pd.DataFrame:
    return pd.DataFrame({"user_id": table.user_keys, "ue_z": scores.user_z})


def rarity_frame(table: EventTable, rt: RarityTable) -> pd.DataFrame:
    return pd.DataFrame({
        "item_id": table.item_keys[rt.pair_items],
        "window": rt.pair_windows,
        "n_users": rt.n_users,
        "ir_raw": rt.raw,
        "ir_z": rt.z,
    })


def write_scores(out: Path, table: EventTable, rt: RarityTable, scores: EccentricityScores) -> list[str]:
    write_csv(item_scores_frame(table, rt, scores), out / "item_scores.csv")
    write_csv(user_scores_frame(table, scores), out / "user_scores.csv")
    write_csv(rarity_frame(table, rt), out / "rarity_windows.csv")
    return ["item_scores.csv", "user_scores.csv", "rarity_windows.csv"]


def read_scores(directory) -> tuple[pd.DataFrame, pd.DataFrame]:
    directory = Path(directory)
    items = pd.read_csv(directory / "item_scores.csv", dtype={"item_id": str},
                        float_precision="round_trip")
    users = pd.read_csv(directory / "user_scores.csv", dtype={"user_id": str},
                        float_precision="round_trip")
    return items, users


# -- analyses ----------------------------------------------------------------


def write_density(out: Path, series: dict[str, DensitySeries], meta: dict) -> list[str]:
    files = []
    for name, ds in series.items():
        write_csv(pd.DataFrame({"grid": ds.grid, "density": ds.density}), out / f"density_{name}.csv")
        write_json({**meta, "metric": name, "bandwidth": ds.bandwidth, "bandwidth_rule": "silverman",
                    "kernel": "gaussian", "grid_size": ds.grid.size, "integral": ds.integral(),
                    "mode": ds.mode}, out / f"density_{name}.json")
        files += [f"density_{name}.csv", f"density_{name}.json"]
    return files


def write_scatter(out: Path, report: ScatterReport, item_keys, meta: dict) -> list[str]:
    write_csv(pd.DataFrame({"item_id": np.asarray(item_keys)[report.items],
                            "ir_representative": report.rarity, "ie_z": report.eccentricity}),
              out / "scatter.csv")
    rare, popular = report.decile_variances()
    write_json({**meta, "slope": report.fit.slope, "intercept": report.fit.intercept,
                "r_squared": report.fit.r_squared, "n": report.fit.n,
                "min_windows": report.min_windows,
                "ie_variance_rarest_decile": rare, "ie_variance_most_popular_decile": popular},
               out / "scatter_fit.json")
    return ["scatter.csv", "scatter_fit.json"]


def write_transition(out: Path, tm: TransitionMatrix, meta: dict) -> list[str]:
    cols = {f"to_{g + 1}": tm.matrix[:, g] for g in range(tm.bins)}
    frame = pd.DataFrame({"from_group": np.arange(1, tm.bins + 1), **cols})
    write_csv(frame, out / "transition.csv")
    write_json({**meta, "bins": tm.bins, "matrix": tm.matrix, "row_counts": tm.row_counts,
                "n_items": tm.n_items, "filters": tm.filters_applied,
                "normalization": "row (conditional on first-period group)",
                "diagonal_mass": tm.diagonal_mass}, out / "transition.json")
    return ["transition.csv", "transition.json"]


def groups_frame(table: GroupComparisonTable) -> pd.DataFrame:
    records = []
    for row in table.rows:
        names = table.features if row.means else (None,)
        for name in names:
            test = row.tests.get(name) if name else None
            records.append({
                "ir_center": row.ir_center, "group": row.group, "feature": name or "",
                "mean": row.means.get(name, float("nan")) if name else float("nan"),
                "band_size": row.band_size, "group_size": row.group_size,
                "test": test.test_name if test else "",
                "statistic": test.statistic if test else float("nan"),
                "p_value": test.p_value if test else float("nan"),
                "significant": int(test.p_value < 0.01) if test else "",
                "note": row.note,
            })
    return pd.DataFrame.from_records(records)


def write_groups(out: Path, table: GroupComparisonTable, meta: dict) -> list[str]:
    frame = groups_frame(table)
    write_csv(frame, out / "groups.csv")
    write_json({**meta, **table.parameters, "alpha": 0.01, "features": list(table.features),
                "warnings": table.warnings, "rows": frame.to_dict(orient="records")},
               out / "groups.json")
    return ["groups.csv", "groups.json"]


def write_sweep(out: Path, report: WindowSweepReport, meta: dict) -> list[str]:
    frame = pd.DataFrame([{"width_days": r.width_days, "stability": r.stability,
                           "variability": r.variability, "n_windows": r.n_windows, "note": r.note}
                          for r in report.rows])
    write_csv(frame, out / "window_sweep.csv", header_comment=report.criterion)
    write_json({**meta, "criterion": report.criterion, "rows": frame.to_dict(orient="records")},
               out / "window_sweep.json")
    return ["window_sweep.csv", "window_sweep.json"]
