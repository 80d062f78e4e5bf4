"""Item rarity, user eccentricity and item eccentricity.

Rarity of item i in window t is ``-log |F_{i,t}|`` where ``|F_{i,t}|`` is
the number of distinct users with feedback on i in t, z-scored either per
window or over all (item, window) pairs.  A user's eccentricity is the
feedback-weighted mean of the z-scored rarities they consumed; an item's
eccentricity is the feedback-weighted mean of its consumers' standardized
eccentricities.  Both are z-scored in turn.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import stats
from .errors import ArgumentError, EccentricityError
from .windowing import WindowedFeedback

STANDARDIZATION_MODES = ("per-window", "global")


@dataclass(frozen=True)
class RarityTable:
    """Rarity per active (item, window) pair plus per-item summaries.

    Per-item arrays are indexed by item id and hold NaN for items with no
    active window.  ``triple_pair[k]`` is the pair row of triple ``k`` of
    the windowed table the rarities were computed from.
    """

    pair_items: np.ndarray
    pair_windows: np.ndarray
    n_users: np.ndarray
    raw: np.ndarray
    z: np.ndarray
    representative: np.ndarray
    percentile: np.ndarray
    active_windows: np.ndarray
    max_users: np.ndarray
    triple_pair: np.ndarray
    standardization: str

    def lookup(self, item: int, window: int) -> int:
        hit = np.flatnonzero((self.pair_items == item) & (self.pair_windows == window))
        if hit.size == 0:
            raise KeyError((item, window))
        return int(hit[0])


@dataclass(frozen=True)
class EccentricityScores:
    user_raw: np.ndarray
    user_z: np.ndarray
    item_raw: np.ndarray
    item_z: np.ndarray
    excluded: np.ndarray  # bool per item

    @property
    def excluded_items(self) -> np.ndarray:
        return np.flatnonzero(self.excluded)

    @property
    def retained_items(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.item_z))

    @property
    def active_users(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.user_z))


def _grouped_sum(keys: np.ndarray, weights: np.ndarray, n: int, threads: int = 1) -> np.ndarray:
    """``bincount`` split over key ranges.

    Each bin is summed by exactly one worker in row order, so the result is
    bit-identical for every thread count.
    """
    if threads <= 1 or keys.size < 100_000 or n < threads:
        return np.bincount(keys, weights=weights, minlength=n)
    bounds = np.linspace(0, n, threads + 1).astype(np.int64)

    def part(lo, hi):
        sel = (keys >= lo) & (keys < hi)
        return np.bincount(keys[sel] - lo, weights=weights[sel], minlength=hi - lo)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        chunks = list(pool.map(part, bounds[:-1], bounds[1:]))
    return np.concatenate(chunks)


def _standardize_subset(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.full(values.shape, np.nan)
    if mask.any():
        out[mask] = stats.zscore(values[mask])
    return out


def compute_item_rarity(wf: WindowedFeedback, standardization: str = "per-window",
                        log_base: float | None = None) -> RarityTable:
    """Rarity of every active (item, window) pair.

    ``log_base`` defaults to e; any base gives the same z-scores.
    """
    if len(wf) == 0:
        raise ArgumentError("cannot compute rarity from an empty windowed table")
    if standardization not in STANDARDIZATION_MODES:
        raise ArgumentError(f"standardization must be one of {STANDARDIZATION_MODES}")
    nw = np.int64(wf.n_windows)
    pair_key = wf.items * nw + wf.windows
    uniq, triple_pair = np.unique(pair_key, return_inverse=True)
    pair_items, pair_windows = uniq // nw, uniq % nw
    # triples are unique per user, so the triple count is the user count
    n_users = np.bincount(triple_pair, minlength=uniq.size).astype(np.int64)
    raw = 0.0 - np.log(n_users.astype(np.float64))
    if log_base is not None:
        raw = raw / math.log(log_base)

    if standardization == "global":
        z = stats.zscore(raw)
    else:
        z = np.empty_like(raw)
        order = np.argsort(pair_windows, kind="stable")
        cuts = np.flatnonzero(np.diff(pair_windows[order])) + 1
        for rows in np.split(order, cuts):
            z[rows] = stats.zscore(raw[rows])

    n_items = wf.n_items
    active = np.bincount(pair_items, minlength=n_items)
    zsum = np.bincount(pair_items, weights=z, minlength=n_items)
    with np.errstate(invalid="ignore", divide="ignore"):
        representative = np.where(active > 0, zsum / np.maximum(active, 1), np.nan)
    percentile = np.full(n_items, np.nan)
    has = active > 0
    percentile[has] = rankdata(representative[has], method="max") / has.sum()
    max_users = np.zeros(n_items, dtype=np.int64)
    np.maximum.at(max_users, pair_items, n_users)

    return RarityTable(
        pair_items=pair_items, pair_windows=pair_windows, n_users=n_users, raw=raw, z=z,
        representative=representative, percentile=percentile, active_windows=active,
        max_users=max_users, triple_pair=triple_pair, standardization=standardization,
    )


def compute_user_eccentricity(wf: WindowedFeedback, rt: RarityTable,
                              threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Feedback-weighted mean z-rarity per user, then z-scored over users."""
    if rt.triple_pair.size != len(wf):
        raise ArgumentError("rarity table was computed from a different windowed table")
    ir = rt.z[rt.triple_pair]
    num = _grouped_sum(wf.users, wf.value * ir, wf.n_users, threads)
    den = _grouped_sum(wf.users, wf.value, wf.n_users, threads)
    active = np.bincount(wf.users, minlength=wf.n_users) > 0
    if np.any(den[active] <= 0):
        raise EccentricityError("internal error: user with zero total feedback weight")
    with np.errstate(invalid="ignore", divide="ignore"):
        user_raw = np.where(active, num / np.where(active, den, 1.0), np.nan)
    return user_raw, _standardize_subset(user_raw, active)


def single_consumer_items(wf: WindowedFeedback, rt: RarityTable | None = None) -> np.ndarray:
    """Items that had exactly one user in every window they were active."""
    if rt is None:
        nw = np.int64(wf.n_windows)
        uniq = np.unique(wf.items * nw + wf.windows, return_counts=True)
        pair_items, counts = uniq[0] // nw, uniq[1]
        max_users = np.zeros(wf.n_items, dtype=np.int64)
        np.maximum.at(max_users, pair_items, counts)
    else:
        max_users = rt.max_users
    return max_users == 1


def compute_item_eccentricity(wf: WindowedFeedback, user_z: np.ndarray, exclusion: bool = True,
                              rt: RarityTable | None = None,
                              threads: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feedback-weighted mean consumer eccentricity per item.

    The weight of user u on item i is the sum of f_{u,i,t} over windows.
    Returns ``(item_raw, item_z, excluded)``; excluded items keep their raw
    score but get NaN in ``item_z`` and are left out of the z population.
    """
    if user_z.size != wf.n_users:
        raise ArgumentError("user scores do not match the windowed table")
    ue = user_z[wf.users]
    num = _grouped_sum(wf.items, wf.value * ue, wf.n_items, threads)
    den = _grouped_sum(wf.items, wf.value, wf.n_items, threads)
    active = np.bincount(wf.items, minlength=wf.n_items) > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        item_raw = np.where(active, num / np.where(active, den, 1.0), np.nan)
    excluded = single_consumer_items(wf, rt) & active if exclusion else np.zeros(wf.n_items, bool)
    return item_raw, _standardize_subset(item_raw, active & ~excluded), excluded


def compute_scores(wf: WindowedFeedback, standardization: str = "per-window",
                   exclusion: bool = True, threads: int = 1) -> tuple[RarityTable, EccentricityScores]:
    """Run rarity, user eccentricity and item eccentricity in sequence."""
    rt = compute_item_rarity(wf, standardization)
    user_raw, user_z = compute_user_eccentricity(wf, rt, threads)
    item_raw, item_z, excluded = compute_item_eccentricity(wf, user_z, exclusion, rt, threads)
    return rt, EccentricityScores(user_raw=user_raw, user_z=user_z, item_raw=item_raw,
                                  item_z=item_z, excluded=excluded)
