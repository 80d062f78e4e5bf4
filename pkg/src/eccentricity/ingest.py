"""Parse raw feedback logs into an interned, columnar event table."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ArgumentError, ValidationError

log = logging.getLogger(__name__)

SCHEMAS = ("generic-csv", "movielens-ratings", "playlog-tsv")

_COLUMNS = {
    "generic-csv": ("user_id", "item_id", "value", "timestamp"),
    "movielens-ratings": ("userId", "movieId", "rating", "timestamp"),
    "playlog-tsv": ("user", "item", "timestamp"),
}

RATING_MIN, RATING_MAX = 0.5, 5.0


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class EventTable:
    """Columnar event log with dense, first-appearance interned ids.

    ``users[k]``/``items[k]`` index into ``user_keys``/``item_keys``; all
    arrays are read-only once the table is built.
    """

    users: np.ndarray
    items: np.ndarray
    values: np.ndarray
    timestamps: np.ndarray
    user_keys: np.ndarray
    item_keys: np.ndarray
    schema_tag: str
    skipped_rows: int = 0

    def __post_init__(self):
        n = self.users.size
        if not (self.items.size == self.values.size == self.timestamps.size == n):
            raise ArgumentError("event columns differ in length")
        for name in ("users", "items", "values", "timestamps", "user_keys", "item_keys"):
            _frozen(getattr(self, name))

    @classmethod
    def from_columns(cls, user_keys, item_keys, values, timestamps, schema_tag="generic-csv",
                     skipped_rows: int = 0) -> "EventTable":
        """Intern raw key columns (first appearance wins) and build a table."""
        ucodes, uniq_u = pd.factorize(np.asarray(user_keys, dtype=object), sort=False)
        icodes, uniq_i = pd.factorize(np.asarray(item_keys, dtype=object), sort=False)
        return cls(
            users=ucodes.astype(np.int64),
            items=icodes.astype(np.int64),
            values=np.ascontiguousarray(values, dtype=np.float64),
            timestamps=np.ascontiguousarray(timestamps, dtype=np.int64),
            user_keys=np.asarray(uniq_u, dtype=object),
            item_keys=np.asarray(uniq_i, dtype=object),
            schema_tag=schema_tag,
            skipped_rows=skipped_rows,
        )

    @property
    def n_events(self) -> int:
        return int(self.users.size)

    @property
    def n_users(self) -> int:
        return int(self.user_keys.size)

    @property
    def n_items(self) -> int:
        return int(self.item_keys.size)

    def user_id(self, key: str) -> int:
        return int(self._user_index()[key])

    def item_id(self, key: str) -> int:
        return int(self._item_index()[key])

    def _user_index(self) -> dict:
        return {k: i for i, k in enumerate(self.user_keys)}

    def _item_index(self) -> dict:
        return {k: i for i, k in enumerate(self.item_keys)}

    def pairs(self) -> list[tuple[str, str]]:
        """De-interned (user key, item key) per event, in row order."""
        return list(zip(self.user_keys[self.users].tolist(), self.item_keys[self.items].tolist()))


def restrict(table: EventTable, mask: np.ndarray) -> tuple[EventTable, np.ndarray, np.ndarray]:
    """Sub-table of the rows in ``mask`` with freshly densified ids.

    Returns the table plus arrays mapping new user/item ids to the ids they
    had in ``table``.
    """
    mask = np.asarray(mask, dtype=bool)
    ucodes, old_u = pd.factorize(table.users[mask], sort=False)
    icodes, old_i = pd.factorize(table.items[mask], sort=False)
    old_u = np.asarray(old_u, dtype=np.int64)
    old_i = np.asarray(old_i, dtype=np.int64)
    sub = EventTable(
        users=ucodes.astype(np.int64),
        items=icodes.astype(np.int64),
        values=table.values[mask].copy(),
        timestamps=table.timestamps[mask].copy(),
        user_keys=table.user_keys[old_u].copy(),
        item_keys=table.item_keys[old_i].copy(),
        schema_tag=table.schema_tag,
    )
    return sub, old_u, old_i


@dataclass(frozen=True)
class ValidationSummary:
    n_users: int
    n_items: int
    n_events: int
    value_min: float
    value_max: float
    value_mean: float
    ts_min: int
    ts_max: int
    distinct_pairs: int
    density: float  # distinct (user, item) pairs / (|U| * |I|)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def validate_table(table: EventTable) -> ValidationSummary:
    if table.n_events == 0:
        raise ValidationError("event table is empty")
    if np.any(~np.isfinite(table.values)) or np.any(table.values <= 0):
        raise ValidationError("feedback values must be finite and positive")
    pair_keys = table.users * np.int64(table.n_items) + table.items
    distinct = int(np.unique(pair_keys).size)
    return ValidationSummary(
        n_users=table.n_users,
        n_items=table.n_items,
        n_events=table.n_events,
        value_min=float(table.values.min()),
        value_max=float(table.values.max()),
        value_mean=float(table.values.mean()),
        ts_min=int(table.timestamps.min()),
        ts_max=int(table.timestamps.max()),
        distinct_pairs=distinct,
        density=distinct / (table.n_users * table.n_items),
    )


class _BadRowCounter:
    def __init__(self):
        self.count = 0

    def __call__(self, fields):
        self.count += 1
        return None


def _to_float(col: pd.Series) -> np.ndarray:
    """Exact text-to-double conversion; unparseable cells become NaN."""
    if col.dtype != object:
        return col.to_numpy(dtype=np.float64)
    raw = col.to_numpy(dtype=str)
    try:
        return raw.astype(np.float64)
    except ValueError:
        # to_numeric is not correctly rounded, so use it only to find bad cells
        ok = np.isfinite(pd.to_numeric(col, errors="coerce").to_numpy(dtype=np.float64))
        out = np.full(raw.size, np.nan)
        out[ok] = raw[ok].astype(np.float64)
        return out


def _read_raw(path: Path, schema: str, skip_bad_rows: bool) -> tuple[pd.DataFrame, int]:
    cols = _COLUMNS[schema]
    kwargs = dict(dtype=str, keep_default_na=False, na_filter=False, skip_blank_lines=False,
                  float_precision="round_trip")
    if schema == "playlog-tsv":
        kwargs.update(sep="\t", header=None, names=list(cols), quoting=3)
    else:
        kwargs.update(sep=",")
    # fast path: let the C parser type the numeric columns; anything odd
    # falls through to the all-string read, which reports line and field
    typed = dict(kwargs, dtype={c: (str if i < 2 else (np.int64 if c == cols[-1] else np.float64))
                                for i, c in enumerate(cols)})
    try:
        frame = pd.read_csv(path, engine="c", **typed)
        if schema == "playlog-tsv" or tuple(frame.columns) == cols:
            return frame, 0
    except (ValueError, OverflowError, pd.errors.ParserError):
        pass
    try:
        frame = pd.read_csv(path, engine="c", **kwargs)
        extra = 0
    except pd.errors.ParserError as exc:
        if not skip_bad_rows:
            raise ValidationError(f"{path}: malformed row: {exc}") from None
        counter = _BadRowCounter()
        frame = pd.read_csv(path, engine="python", on_bad_lines=counter,
                            **{k: v for k, v in kwargs.items() if k not in ("quoting", "float_precision")})
        extra = counter.count
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame({c: pd.Series([], dtype=str) for c in cols})
        extra = 0
    if schema != "playlog-tsv" and tuple(frame.columns) != cols:
        raise ValidationError(
            f"{path}: expected header {','.join(cols)}, found {','.join(map(str, frame.columns))}")
    return frame, extra


def parse_events(path, schema: str, *, timestamp_unit: str = "s",
                 skip_bad_rows: bool = False) -> EventTable:
    """Read ``path`` in one of the supported schemas.

    Malformed rows raise :class:`ValidationError` naming the line and the
    field, unless ``skip_bad_rows`` is set, in which case they are dropped
    and counted in ``EventTable.skipped_rows``.
    """
    if schema not in SCHEMAS:
        raise ArgumentError(f"unknown schema {schema!r}; expected one of {', '.join(SCHEMAS)}")
    if timestamp_unit not in ("s", "ms"):
        raise ArgumentError("timestamp_unit must be 's' or 'ms'")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such input file: {path}")

    frame, skipped = _read_raw(path, schema, skip_bad_rows)
    cols = _COLUMNS[schema]
    first_line = 1 if schema == "playlog-tsv" else 2
    user_col, item_col, ts_col = cols[0], cols[1], cols[-1]

    users = frame[user_col].to_numpy(dtype=object)
    items = frame[item_col].to_numpy(dtype=object)
    bad = np.zeros(len(frame), dtype=bool)
    problems: list[tuple[int, str, str]] = []

    def flag(mask, field_name, reason):
        idx = np.flatnonzero(mask & ~bad)
        if idx.size:
            problems.append((int(idx[0]), field_name, reason))
        bad[mask] = True

    flag(users == "", user_col, "empty key")
    flag(items == "", item_col, "empty key")

    if frame[ts_col].dtype == np.int64:
        ts_num = frame[ts_col].to_numpy()
    else:
        ts_num = _to_float(frame[ts_col])
        ts_ok = np.isfinite(ts_num) & (ts_num == np.floor(ts_num))
        flag(~ts_ok, ts_col, "not an integer timestamp")
        ts_num = np.where(ts_ok, ts_num, 0)

    if schema == "playlog-tsv":
        values = np.ones(len(frame), dtype=np.float64)
    else:
        val_col = cols[2]
        values = _to_float(frame[val_col])
        finite = np.isfinite(values)
        flag(~finite, val_col, "not a number")
        if schema == "movielens-ratings":
            flag(finite & ((values < RATING_MIN) | (values > RATING_MAX)), val_col,
                 f"rating outside [{RATING_MIN}, {RATING_MAX}]")
        else:
            flag(finite & (values <= 0), val_col, "value must be positive")

    if problems:
        if not skip_bad_rows:
            row, field_name, reason = min(problems)
            raw = frame.iloc[row].tolist()
            raise ValidationError(
                f"{path}: line {row + first_line}, field {field_name!r}: {reason} (row {raw!r})")
        skipped += int(bad.sum())
        log.warning("%s: skipped %d malformed rows", path, int(bad.sum()))
        keep = ~bad
        users, items, values, ts_num = users[keep], items[keep], values[keep], ts_num[keep]

    timestamps = ts_num.astype(np.int64)
    if timestamp_unit == "ms":
        timestamps = timestamps // 1000
    return EventTable.from_columns(users, items, values, timestamps, schema_tag=schema,
                                   skipped_rows=skipped)


@dataclass(frozen=True)
class ItemMetadata:
    """Long-format item attributes: one (item, attribute, value) per row."""

    items: np.ndarray
    attributes: np.ndarray
    values: np.ndarray
    names: tuple[str, ...] = field(default=())

    def attribute(self, name: str, n_items: int) -> np.ndarray:
        """Dense per-item array of one attribute (``None`` where absent)."""
        out = np.full(n_items, None, dtype=object)
        sel = self.attributes == name
        out[self.items[sel]] = self.values[sel]
        return out


def read_item_metadata(path, table: EventTable) -> ItemMetadata:
    """Load an ``item_id,attribute,value`` sidecar aligned to ``table``."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    if tuple(frame.columns) != ("item_id", "attribute", "value"):
        raise ValidationError(f"{path}: expected header item_id,attribute,value")
    index = table._item_index()
    ids = np.fromiter((index.get(k, -1) for k in frame["item_id"]), dtype=np.int64, count=len(frame))
    if np.any(ids < 0):
        missing = frame["item_id"].to_numpy()[ids < 0][0]
        raise ValidationError(f"{path}: item {missing!r} is not in the event table")
    attrs = frame["attribute"].to_numpy(dtype=object)
    return ItemMetadata(items=ids, attributes=attrs, values=frame["value"].to_numpy(dtype=object),
                        names=tuple(pd.unique(attrs)))


def write_events_csv(table: EventTable, path) -> None:
    """Write ``table`` back out in the generic-csv schema."""
    frame = pd.DataFrame({
        "user_id": table.user_keys[table.users],
        "item_id": table.item_keys[table.items],
        "value": table.values,
        "timestamp": table.timestamps,
    })
    frame.to_csv(path, index=False, float_format="%.17g")
