"""Fixed-width time windows and per-(user, item, window) aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from .errors import ArgumentError, ConfigError
from .ingest import EventTable

DAY = 86_400


@dataclass(frozen=True)
class WindowConfig:
    width_days: int = 28
    origin: int | None = None  # None: dataset minimum truncated to midnight UTC
    dedupe: str = "sum"

    def __post_init__(self):
        if int(self.width_days) != self.width_days or self.width_days < 1:
            raise ConfigError("window width must be a whole number of days >= 1")
        if self.dedupe not in ("sum", "last"):
            raise ConfigError("dedupe must be 'sum' or 'last'")

    @property
    def width_seconds(self) -> int:
        return int(self.width_days) * DAY

    def resolve_origin(self, timestamps: np.ndarray) -> int:
        if self.origin is not None:
            return int(self.origin)
        return int(timestamps.min()) // DAY * DAY


def parse_origin(text: str | None) -> int | None:
    """``auto``/None, epoch seconds, or an ISO-8601 date/time (UTC if naive)."""
    if text is None or text == "auto":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as epoch seconds or an ISO-8601 time") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return int(stamp.timestamp())


@dataclass(frozen=True)
class WindowedFeedback:
    """Unique (user, item, window) triples sorted by that key.

    ``value`` is f_{u,i,t}: the summed event values; ``count`` the number of
    events merged into the triple.
    """

    users: np.ndarray
    items: np.ndarray
    windows: np.ndarray
    value: np.ndarray
    count: np.ndarray
    n_users: int
    n_items: int
    n_windows: int
    origin: int
    width_seconds: int

    def __len__(self) -> int:
        return int(self.users.size)


def window_index(timestamps: np.ndarray, origin: int, width_seconds: int) -> np.ndarray:
    return (np.asarray(timestamps, dtype=np.int64) - origin) // width_seconds


def assign_windows(table: EventTable, config: WindowConfig = WindowConfig()) -> WindowedFeedback:
    if table.n_events == 0:
        raise ArgumentError("cannot window an empty event table")
    origin = config.resolve_origin(table.timestamps)
    if int(table.timestamps.min()) < origin:
        raise ConfigError(f"window origin {origin} is after the earliest event "
                          f"({int(table.timestamps.min())})")
    width = config.width_seconds
    win = window_index(table.timestamps, origin, width)
    n_windows = int(win.max()) + 1

    n_items = max(table.n_items, 1)
    if (table.n_users * n_items) * n_windows < 2 ** 62:
        key = (table.users * n_items + table.items) * n_windows + win
        if config.dedupe == "last":
            # latest timestamp wins; later rows win ties
            order = np.lexsort((np.arange(key.size), table.timestamps, key))
            key_sorted = key[order]
            last = np.ones(key.size, dtype=bool)
            last[:-1] = key_sorted[1:] != key_sorted[:-1]
            keep = order[last]
            uniq = key_sorted[last]
            value = table.values[keep].copy()
            count = np.ones(uniq.size, dtype=np.int64)
        else:
            uniq, inverse = np.unique(key, return_inverse=True)
            value = np.bincount(inverse, weights=table.values, minlength=uniq.size)
            count = np.bincount(inverse, minlength=uniq.size).astype(np.int64)
        windows = uniq % n_windows
        rest = uniq // n_windows
        users, items = rest // n_items, rest % n_items
    else:
        frame = pd.DataFrame({"u": table.users, "i": table.items, "w": win, "v": table.values,
                              "ts": table.timestamps})
        if config.dedupe == "last":
            frame = frame.sort_values(["u", "i", "w", "ts"], kind="stable")
            grouped = frame.groupby(["u", "i", "w"], sort=True).agg(v=("v", "last"), c=("v", "size"))
            grouped["c"] = 1
        else:
            grouped = frame.groupby(["u", "i", "w"], sort=True).agg(v=("v", "sum"), c=("v", "size"))
        idx = grouped.index
        users = idx.get_level_values(0).to_numpy(np.int64)
        items = idx.get_level_values(1).to_numpy(np.int64)
        windows = idx.get_level_values(2).to_numpy(np.int64)
        value = grouped["v"].to_numpy(np.float64)
        count = grouped["c"].to_numpy(np.int64)

    return WindowedFeedback(
        users=users.astype(np.int64), items=items.astype(np.int64), windows=windows.astype(np.int64),
        value=value, count=count, n_users=table.n_users, n_items=table.n_items,
        n_windows=n_windows, origin=origin, width_seconds=width,
    )


@dataclass(frozen=True)
class WindowCensus:
    window: np.ndarray
    events: np.ndarray
    items: np.ndarray
    users: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"window": self.window, "events": self.events,
                             "active_items": self.items, "active_users": self.users})


def window_census(wf: WindowedFeedback) -> WindowCensus:
    """Per-window event, item and user counts; empty windows report zeros."""
    if len(wf) == 0:
        raise ArgumentError("window census of an empty table")
    n = wf.n_windows
    events = np.bincount(wf.windows, weights=wf.count, minlength=n).astype(np.int64)
    item_pairs = np.unique(wf.windows * np.int64(max(wf.n_items, 1)) + wf.items)
    user_pairs = np.unique(wf.windows * np.int64(max(wf.n_users, 1)) + wf.users)
    items = np.bincount(item_pairs // max(wf.n_items, 1), minlength=n)
    users = np.bincount(user_pairs // max(wf.n_users, 1), minlength=n)
    return WindowCensus(window=np.arange(n), events=events, items=items, users=users)
