"""The analysis suite run on top of the computed scores.

* density of standardized user and item eccentricity
* item eccentricity against representative rarity, with an OLS line
* two-period stability of item eccentricity as a quantile transition matrix
* eccentric vs noneccentric items within narrow rarity bands
* a sweep over candidate window widths
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.stats import spearmanr

from . import stats
from .errors import ArgumentError, DegenerateError
from .ingest import EventTable, ItemMetadata, restrict
from .metrics import EccentricityScores, RarityTable, compute_scores
from .windowing import DAY, WindowConfig, WindowedFeedback, assign_windows

log = logging.getLogger(__name__)

IR_CENTERS = (0.6, 0.7, 0.8, 0.9, 0.99)
SWEEP_WIDTHS = (7, 14, 21, 28, 42, 84)


# ---------------------------------------------------------------------------
# densities


def density_report(scores: EccentricityScores, grid_size: int = 512) -> dict[str, stats.DensitySeries]:
    out = {}
    for name, z in (("ue", scores.user_z), ("ie", scores.item_z)):
        pop = z[np.isfinite(z)]
        if np.unique(pop).size < 2:
            raise DegenerateError(f"{name} population has fewer than two distinct scores")
        out[name] = stats.kde(pop, grid_size)
    return out


# ---------------------------------------------------------------------------
# rarity vs eccentricity


@dataclass(frozen=True)
class ScatterReport:
    items: np.ndarray
    rarity: np.ndarray
    eccentricity: np.ndarray
    fit: stats.RegressionFit
    min_windows: int

    def decile_variances(self) -> tuple[float, float]:
        """IE variance in the rarest and in the most popular IR decile."""
        order = np.argsort(self.rarity, kind="stable")
        k = max(2, len(order) // 10)
        popular = self.eccentricity[order[:k]]
        rarest = self.eccentricity[order[-k:]]
        return float(np.var(rarest)), float(np.var(popular))


def rarity_eccentricity_scatter(rt: RarityTable, scores: EccentricityScores,
                                min_windows: int = 4) -> ScatterReport:
    """Points for items active in more than ``min_windows`` windows."""
    return scatter_from_arrays(rt.representative, rt.active_windows, scores.item_z, min_windows)


def scatter_from_arrays(representative, active_windows, item_z, min_windows: int = 4) -> ScatterReport:
    keep = (np.asarray(active_windows) > min_windows) & np.isfinite(item_z) & np.isfinite(representative)
    items = np.flatnonzero(keep)
    if items.size < 2:
        raise DegenerateError(f"only {items.size} items are active in more than {min_windows} windows")
    x, y = np.asarray(representative)[items], np.asarray(item_z)[items]
    return ScatterReport(items=items, rarity=x, eccentricity=y, fit=stats.ols_fit(x, y),
                         min_windows=min_windows)


# ---------------------------------------------------------------------------
# two-period stability


@dataclass(frozen=True)
class TransitionMatrix:
    bins: int
    matrix: np.ndarray
    row_counts: np.ndarray
    filters_applied: dict
    n_items: int

    @property
    def diagonal_mass(self) -> float:
        return float(np.trace(self.matrix) / self.bins)


def quantile_bins(values: np.ndarray, ids: np.ndarray, bins: int) -> np.ndarray:
    """Equal-count bins; ties are ordered by id."""
    order = np.lexsort((ids, values))
    rank = np.empty(values.size, dtype=np.int64)
    rank[order] = np.arange(values.size)
    return rank * bins // values.size


def transition_matrix(first: np.ndarray, second: np.ndarray, ids: np.ndarray, bins: int = 7,
                      filters: dict | None = None) -> TransitionMatrix:
    if first.size == 0:
        raise DegenerateError("no items qualify in both periods")
    g1 = quantile_bins(first, ids, bins)
    g2 = quantile_bins(second, ids, bins)
    counts = np.zeros((bins, bins))
    np.add.at(counts, (g1, g2), 1.0)
    rows = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(rows[:, None] > 0, counts / np.maximum(rows, 1)[:, None], 0.0)
    return TransitionMatrix(bins=bins, matrix=matrix, row_counts=rows.astype(np.int64),
                            filters_applied=dict(filters or {}), n_items=int(first.size))


def _period_scores(table: EventTable, mask: np.ndarray, config: WindowConfig, standardization: str,
                   exclusion: bool) -> tuple[np.ndarray, np.ndarray]:
    """Item z-scores and distinct-user counts of one period, on global item ids."""
    sub, _, old_items = restrict(table, mask)
    if sub.n_events == 0:
        raise DegenerateError("a stability period has no events")
    wf = assign_windows(sub, config)
    _, sc = compute_scores(wf, standardization, exclusion)
    z = np.full(table.n_items, np.nan)
    z[old_items] = sc.item_z
    pairs = np.unique(sub.items * np.int64(sub.n_users) + sub.users)
    users = np.zeros(table.n_items, dtype=np.int64)
    users[old_items] = np.bincount(pairs // sub.n_users, minlength=sub.n_items)
    return z, users


def stability_between(table: EventTable, first_mask: np.ndarray, second_mask: np.ndarray,
                      config: WindowConfig = WindowConfig(), bins: int = 7, min_users: int = 10,
                      release_cutoff: int | None = None, standardization: str = "per-window",
                      exclusion: bool = True) -> TransitionMatrix:
    """Transition matrix between two arbitrary event subsets of ``table``."""
    z1, u1 = _period_scores(table, first_mask, config, standardization, exclusion)
    z2, u2 = _period_scores(table, second_mask, config, standardization, exclusion)
    keep = np.isfinite(z1) & np.isfinite(z2) & (u1 > min_users) & (u2 > min_users)
    filters = {"min_users": min_users, "release_cutoff": release_cutoff,
               "standardization": standardization, "exclusion": exclusion}
    if release_cutoff is not None:
        first_seen = np.full(table.n_items, np.iinfo(np.int64).max)
        np.minimum.at(first_seen, table.items, table.timestamps)
        keep &= first_seen < release_cutoff
    ids = np.flatnonzero(keep)
    if ids.size == 0:
        raise DegenerateError("no items qualify in both periods")
    return transition_matrix(z1[ids], z2[ids], ids, bins, filters)


def stability_analysis(events: EventTable, split_ts: int, config: WindowConfig = WindowConfig(),
                       bins: int = 7, min_users: int = 10, standardization: str = "per-window",
                       exclusion: bool = True, release_filter: bool = True) -> TransitionMatrix:
    """Split at ``split_ts``, score each half independently, bin and compare.

    Items must have more than ``min_users`` distinct users in both periods
    and (with ``release_filter``) a first feedback before the midpoint of
    period one, the observable stand-in for a release date.
    """
    first = events.timestamps < split_ts
    second = ~first
    if not first.any() or not second.any():
        raise DegenerateError(f"split at {split_ts} leaves a period empty")
    cutoff = None
    if release_filter:
        t0 = int(events.timestamps[first].min())
        cutoff = t0 + (int(split_ts) - t0) // 2
    tm = stability_between(events, first, second, config, bins, min_users, cutoff,
                           standardization, exclusion)
    tm.filters_applied["split_ts"] = int(split_ts)
    return tm


def median_timestamp(events: EventTable) -> int:
    return int(np.median(events.timestamps))


# ---------------------------------------------------------------------------
# eccentric vs noneccentric comparison


FEATURES = ("single_interaction_fraction", "mean_feedback", "feedback_dip", "early_fraction",
            "artist_consumers")


@dataclass(frozen=True)
class ItemFeatures:
    """Per-item features; count pairs back the pooled proportion tests."""

    single_users: np.ndarray
    users: np.ndarray
    mean_feedback: np.ndarray
    early_events: np.ndarray
    events: np.ndarray
    artist_consumers: np.ndarray | None
    per_user_feedback: list  # item -> array of f_{u,i}

    def values(self, name: str, items: np.ndarray) -> np.ndarray:
        if name == "single_interaction_fraction":
            return self.single_users[items] / self.users[items]
        if name == "mean_feedback":
            return self.mean_feedback[items]
        if name == "early_fraction":
            return self.early_events[items] / self.events[items]
        if name == "artist_consumers":
            return self.artist_consumers[items]
        if name == "feedback_dip":
            return np.array([stats.dip_statistic(self.per_user_feedback[i])
                             if self.per_user_feedback[i].size >= 2 else np.nan for i in items])
        raise KeyError(name)


def item_features(wf: WindowedFeedback, metadata: ItemMetadata | None = None,
                  artist_attribute: str = "artist") -> ItemFeatures:
    ni = wf.n_items
    pair_key = wf.users * np.int64(ni) + wf.items
    uniq, inv = np.unique(pair_key, return_inverse=True)
    f_ui = np.bincount(inv, weights=wf.value, minlength=uniq.size)
    c_ui = np.bincount(inv, weights=wf.count, minlength=uniq.size)
    pair_item = uniq % ni
    users = np.bincount(pair_item, minlength=ni)
    single = np.bincount(pair_item, weights=(c_ui == 1).astype(float), minlength=ni)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_fb = np.bincount(pair_item, weights=f_ui, minlength=ni) / users

    first_window = np.full(ni, np.iinfo(np.int64).max)
    np.minimum.at(first_window, wf.items, wf.windows)
    early = wf.windows <= first_window[wf.items] + 1
    early_events = np.bincount(wf.items, weights=wf.count * early, minlength=ni)
    n_events = np.bincount(wf.items, weights=wf.count, minlength=ni)

    order = np.argsort(pair_item, kind="stable")
    per_user = np.split(f_ui[order], np.cumsum(users)[:-1])

    artist = None
    if metadata is not None and artist_attribute in metadata.names:
        labels = metadata.attribute(artist_attribute, ni)
        artist = np.full(ni, np.nan)
        known = np.array([v is not None for v in labels])
        if known.any():
            codes = np.full(ni, -1, dtype=np.int64)
            codes[known] = pd.factorize(labels[known])[0]
            pu, pi = uniq // ni, pair_item
            sel = codes[pi] >= 0
            ak = np.unique(codes[pi[sel]] * np.int64(wf.n_users) + pu[sel])
            per_artist = np.bincount(ak // wf.n_users, minlength=int(codes.max()) + 1)
            artist[known] = per_artist[codes[known]]
    return ItemFeatures(single_users=single, users=users, mean_feedback=mean_fb,
                        early_events=early_events, events=n_events, artist_consumers=artist,
                        per_user_feedback=per_user)


@dataclass
class GroupRow:
    ir_center: float
    group: str
    band_size: int
    group_size: int
    means: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class GroupComparisonTable:
    rows: list
    features: tuple
    warnings: list
    parameters: dict

    def row(self, center: float, group: str) -> GroupRow:
        for r in self.rows:
            if r.ir_center == center and r.group == group:
                return r
        raise KeyError((center, group))


def ordinal_percentile(values: np.ndarray, ids: np.ndarray) -> np.ndarray:
    order = np.lexsort((ids, values))
    pct = np.empty(values.size)
    pct[order] = (np.arange(values.size) + 1) / values.size
    return pct


def _compare(name: str, feats: ItemFeatures, ecc: np.ndarray, non: np.ndarray):
    if name in ("single_interaction_fraction", "early_fraction"):
        if name == "single_interaction_fraction":
            k1, n1 = feats.single_users[ecc].sum(), feats.users[ecc].sum()
            k2, n2 = feats.single_users[non].sum(), feats.users[non].sum()
        else:
            k1, n1 = feats.early_events[ecc].sum(), feats.events[ecc].sum()
            k2, n2 = feats.early_events[non].sum(), feats.events[non].sum()
        return stats.two_proportion_z_test(int(round(k1)), int(round(n1)), int(round(k2)), int(round(n2)))
    a, b = feats.values(name, ecc), feats.values(name, non)
    return stats.welch_t_test(a[np.isfinite(a)], b[np.isfinite(b)])


def group_comparison(rt: RarityTable, scores: EccentricityScores, feats: ItemFeatures,
                     ir_centers=IR_CENTERS, band: float = 0.01, quintile: float = 0.2,
                     min_group: int = 10) -> GroupComparisonTable:
    """Compare the top and bottom IE quantiles inside each IR percentile band.

    Percentiles are ordinal ranks (ties by item id) over items that survive
    the exclusion rule.  Features are averaged per item, then per group.
    """
    if not 0 < quintile <= 0.5:
        raise ArgumentError("quintile must lie in (0, 0.5]")
    retained = np.flatnonzero(np.isfinite(scores.item_z) & np.isfinite(rt.representative))
    if retained.size == 0:
        raise DegenerateError("no retained items to compare")
    pct = ordinal_percentile(rt.representative[retained], retained)
    names = [f for f in FEATURES if f != "artist_consumers" or feats.artist_consumers is not None]
    warnings = []
    if feats.artist_consumers is None:
        warnings.append("no artist metadata: artist_consumers feature skipped")
        log.warning(warnings[-1])

    rows = []
    eps = 1e-12
    for center in ir_centers:
        in_band = retained[(pct >= center - band - eps) & (pct <= center + band + eps)]
        ie = scores.item_z[in_band]
        order = in_band[np.lexsort((in_band, ie))]
        m = order.size
        k_low, k_high = math.floor(quintile * m), math.ceil(quintile * m)
        non, ecc = order[:k_low], order[m - k_high:]
        if min(k_low, k_high) < min_group:
            msg = f"IR band {center}: groups of {k_low}/{k_high} items are below {min_group}; skipped"
            warnings.append(msg)
            log.warning(msg)
            for g in ("eccentric", "noneccentric"):
                rows.append(GroupRow(center, g, m, 0, note="skipped: band too small"))
            continue
        tests = {}
        for name in names:
            try:
                tests[name] = _compare(name, feats, ecc, non)
            except (DegenerateError, ArgumentError) as exc:
                tests[name] = None
                warnings.append(f"IR band {center}, {name}: {exc}")
        for g, members in (("eccentric", ecc), ("noneccentric", non)):
            means = {}
            for name in names:
                vals = feats.values(name, members)
                vals = vals[np.isfinite(vals)]
                means[name] = float(vals.mean()) if vals.size else float("nan")
            rows.append(GroupRow(center, g, m, int(members.size), means, dict(tests)))
    params = {"ir_centers": list(ir_centers), "band": band, "quintile": quintile,
              "aggregation": "per-item then per-group mean",
              "percentile": "ordinal rank over retained items, ties by item id",
              "tests": {n: ("two-proportion-z" if n in ("single_interaction_fraction", "early_fraction")
                            else "welch-t") for n in names}}
    return GroupComparisonTable(rows=rows, features=tuple(names), warnings=warnings, parameters=params)


# ---------------------------------------------------------------------------
# window width sweep


@dataclass(frozen=True)
class SweepRow:
    width_days: int
    stability: float
    variability: float
    n_windows: int
    note: str = ""


@dataclass(frozen=True)
class WindowSweepReport:
    rows: list
    criterion: str = ("stability: mean Spearman rho of item feedback counts between the two halves "
                      "of each complete window (items active in both halves); variability: mean "
                      "1 - Spearman rho of item counts between adjacent complete windows (items "
                      "active in both)")

    def row(self, width: int) -> SweepRow:
        return next(r for r in self.rows if r.width_days == width)


def _rho(a: np.ndarray, b: np.ndarray) -> float:
    both = (a > 0) & (b > 0)
    if both.sum() < 3:
        return float("nan")
    x, y = a[both], b[both]
    if np.all(x == x[0]) and np.all(y == y[0]) and np.array_equal(x, y):
        return 1.0
    if np.all(x == x[0]) or np.all(y == y[0]):
        return float("nan")
    return float(spearmanr(x, y)[0])


def _nanmean(xs: list) -> float:
    arr = np.array(xs, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if arr.size else float("nan")


def window_size_sweep(events: EventTable, widths=SWEEP_WIDTHS) -> WindowSweepReport:
    if events.n_events == 0:
        raise ArgumentError("window sweep of an empty table")
    origin = int(events.timestamps.min()) // DAY * DAY
    span = int(events.timestamps.max()) - origin + 1
    rel = events.timestamps - origin
    rows = []
    for width in sorted(set(int(w) for w in widths)):
        wsec = width * DAY
        n_complete = span // wsec
        if n_complete < 1:
            rows.append(SweepRow(width, float("nan"), float("nan"), 0, "unavailable: width exceeds data span"))
            continue
        half = wsec // 2
        h = rel // half
        keep = h < 2 * n_complete
        counts = sparse.coo_matrix(
            (np.ones(int(keep.sum())), (h[keep], events.items[keep])),
            shape=(2 * n_complete, events.n_items)).tocsr()
        stab, var = [], []
        prev = None
        for k in range(n_complete):
            a = counts[2 * k].toarray().ravel()
            b = counts[2 * k + 1].toarray().ravel()
            stab.append(_rho(a, b))
            whole = a + b
            if prev is not None:
                r = _rho(prev, whole)
                var.append(1.0 - r if np.isfinite(r) else r)
            prev = whole
        note = "" if n_complete > 1 else "single window: variability unavailable"
        rows.append(SweepRow(width, _nanmean(stab), _nanmean(var) if var else float("nan"),
                             int(n_complete), note))
    return WindowSweepReport(rows=rows)
