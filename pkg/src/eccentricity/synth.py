"""Seeded synthetic feedback logs with planted eccentric users and niche items.

Randomness comes from a counter-based SplitMix64 generator: the k-th draw of
stream ``s`` under seed ``seed`` is ``mix(key(seed, s) + (k + 1) * GAMMA)``
with

    GAMMA = 0x9E3779B97F4A7C15
    mix(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
            return z ^ (z >> 31)
    key(seed, s) = mix(seed + (s + 1) * GAMMA)

all arithmetic modulo 2**64.  Every sampling decision compares 64-bit
integers (or their top 53 bits) against precomputed thresholds, so streams
are reproducible anywhere SplitMix64 is.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DegenerateError
from .ingest import EventTable
from .metrics import EccentricityScores

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# stream ids
S_NICHE, S_ECCENTRIC, S_USER, S_CHOICE, S_ITEM, S_TIME, S_RATING, S_REPEAT = range(8)

RATING_STEPS = np.arange(1, 11) * 0.5
# popularity bias: mainstream items draw higher ratings than niche ones
RATING_WEIGHTS = {
    False: np.array([1, 1, 2, 3, 5, 8, 14, 20, 24, 22], dtype=np.int64),
    True: np.array([3, 3, 5, 7, 10, 14, 18, 16, 14, 10], dtype=np.int64),
}

DAY = 86_400


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream(seed: int, stream_id: int, n: int, offset: int = 0) -> np.ndarray:
    """Draws ``offset .. offset + n - 1`` of one stream as uint64."""
    base = (int(seed) + (stream_id + 1) * int(GAMMA)) & _MASK64
    key = mix64(np.array([base], dtype=np.uint64))[0]
    counters = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(key + counters * GAMMA)


def to_unit(x: np.ndarray) -> np.ndarray:
    """Top 53 bits as a float in [0, 1)."""
    return (x >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def _thresholds(weights: np.ndarray) -> np.ndarray:
    """Cumulative 53-bit integer thresholds for categorical sampling."""
    cum = np.cumsum(weights, dtype=np.float64)
    thr = np.floor(cum / cum[-1] * 2.0 ** 53).astype(np.uint64)
    thr[-1] = np.uint64(2 ** 53)
    return thr


def _categorical(draws: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    return np.searchsorted(thresholds, draws >> np.uint64(11), side="right")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_users: int = 2_000
    n_items: int = 5_000
    n_events: int = 100_000
    time_span_days: int = 364
    popularity_exponent: float = 1.2
    eccentric_user_fraction: float = 0.1
    niche_item_fraction: float = 0.2
    affinity: float = 0.9
    explicit: bool = False
    # chance that a slot replays the (niche) item of the slot before it
    niche_repeat_rate: float = 0.0
    # flattens eccentric users' popularity profile inside each item subset:
    # their exponent is popularity_exponent * (1 - eccentric_tilt)
    eccentric_tilt: float = 0.0
    # shifts the niche popularity curve down its tail (in units of the niche
    # subset size) so the niche head does not rival the mainstream head
    niche_rank_offset: float = 0.1
    start_ts: int = 1_388_534_400  # 2014-01-01T00:00:00Z

    def validate(self) -> None:
        if self.n_users < 1 or self.n_items < 1:
            raise ConfigError("n_users and n_items must be positive")
        if self.n_events < self.n_users:
            raise ConfigError("n_events must be >= n_users so every user has an event")
        if self.time_span_days < 1:
            raise ConfigError("time_span_days must be >= 1")
        if self.popularity_exponent <= 0:
            raise ConfigError("popularity_exponent must be positive")
        for name in ("eccentric_user_fraction", "niche_item_fraction", "affinity", "niche_repeat_rate",
                     "eccentric_tilt"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    """Planted labels aligned with the interned ids of the generated table."""

    user_eccentric: np.ndarray
    item_niche: np.ndarray
    n_eccentric_generated: int
    n_niche_generated: int

    def rows(self, table: EventTable) -> list[tuple[str, str, str]]:
        out = [(k, "user", "eccentric" if e else "mainstream")
               for k, e in zip(table.user_keys.tolist(), self.user_eccentric.tolist())]
        out += [(k, "item", "niche" if n else "mainstream")
                for k, n in zip(table.item_keys.tolist(), self.item_niche.tolist())]
        return out


def _pick_by_key(seed: int, stream_id: int, candidates: np.ndarray, k: int) -> np.ndarray:
    keys = stream(seed, stream_id, candidates.size)
    return candidates[np.argsort(keys, kind="stable")[:k]]


def _resolve_repeats(candidate: np.ndarray, niche_base: np.ndarray) -> np.ndarray:
    """Source slot of every event once repeat slots are resolved.

    Slot k repeats the slot before it when it is a repeat candidate and the
    item resolved for slot k-1 is niche.
    """
    n = candidate.size
    idx = np.arange(n)
    last_false = np.maximum.accumulate(np.where(~candidate, idx, 0))
    prefix = np.concatenate(([0], np.cumsum(niche_base)))
    repeat = candidate & (prefix[idx] - prefix[last_false] > 0)
    source = np.maximum.accumulate(np.where(~repeat, idx, 0))
    return source


def generate(config: SynthConfig = SynthConfig()) -> tuple[EventTable, GroundTruth]:
    config.validate()
    seed = config.seed
    nu, ni, ne = config.n_users, config.n_items, config.n_events

    weights = np.arange(1, ni + 1, dtype=np.float64) ** -config.popularity_exponent
    n_niche = int(round(config.niche_item_fraction * ni))
    n_ecc = int(round(config.eccentric_user_fraction * nu))
    pool = min(ni, 2 * n_niche)
    niche = np.zeros(ni, dtype=bool)
    if n_niche:
        niche[_pick_by_key(seed, S_NICHE, np.arange(ni - pool, ni), n_niche)] = True
    eccentric = np.zeros(nu, dtype=bool)
    if n_ecc:
        eccentric[_pick_by_key(seed, S_ECCENTRIC, np.arange(nu), n_ecc)] = True

    share = float(weights[niche].sum() / weights.sum())
    a = config.affinity
    p_ecc = share + a * (1.0 - share)
    p_main = share * (1.0 - a)
    needs_niche = (n_ecc > 0 and p_ecc > 0) or (n_ecc < nu and p_main > 0)
    needs_main = (n_ecc > 0 and p_ecc < 1) or (n_ecc < nu and p_main < 1)
    if (needs_niche and n_niche == 0) or (needs_main and n_niche == ni):
        raise ConfigError("infeasible config: no items available for the requested niche/mainstream mix")

    users = np.empty(ne, dtype=np.int64)
    users[:nu] = np.arange(nu)
    users[nu:] = (stream(seed, S_USER, ne - nu) % np.uint64(nu)).astype(np.int64)

    p_user = np.where(eccentric, p_ecc, p_main)
    go_niche = to_unit(stream(seed, S_CHOICE, ne)) < p_user[users]
    item_draw = stream(seed, S_ITEM, ne)
    items = np.empty(ne, dtype=np.int64)
    for flag in (True, False):
        # popularity inside each subset is itself long-tailed over subset rank
        pool_ids = np.flatnonzero(niche == flag)
        rank = np.arange(1, pool_ids.size + 1, dtype=np.float64)
        if flag:
            rank += config.niche_rank_offset * pool_ids.size
        for ecc_flag in (False, True):
            exponent = config.popularity_exponent * ((1.0 - config.eccentric_tilt) if ecc_flag else 1.0)
            sel = (go_niche == flag) & (eccentric[users] == ecc_flag)
            if sel.any():
                pick = _categorical(item_draw[sel], _thresholds(rank ** -exponent))
                items[sel] = pool_ids[pick]

    if config.niche_repeat_rate > 0:
        candidate = to_unit(stream(seed, S_REPEAT, ne)) < config.niche_repeat_rate
        candidate[:nu] = False
        source = _resolve_repeats(candidate, niche[items])
        users, items = users[source], items[source]

    span = np.uint64(config.time_span_days * DAY)
    timestamps = config.start_ts + (stream(seed, S_TIME, ne) % span).astype(np.int64)

    if config.explicit:
        draws = stream(seed, S_RATING, ne)
        values = np.empty(ne)
        for flag in (True, False):
            sel = niche[items] == flag
            values[sel] = RATING_STEPS[_categorical(draws[sel], _thresholds(RATING_WEIGHTS[flag]))]
    else:
        values = np.ones(ne)

    order = np.argsort(timestamps, kind="stable")
    users, items, values, timestamps = users[order], items[order], values[order], timestamps[order]

    table = _intern_generated(users, items, values, timestamps)
    gen_users = np.array([int(k[1:]) for k in table.user_keys], dtype=np.int64)
    gen_items = np.array([int(k[1:]) for k in table.item_keys], dtype=np.int64)
    truth = GroundTruth(user_eccentric=eccentric[gen_users], item_niche=niche[gen_items],
                        n_eccentric_generated=n_ecc, n_niche_generated=n_niche)
    return table, truth


def _intern_generated(users, items, values, timestamps) -> EventTable:
    import pandas as pd

    ucodes, uniq_u = pd.factorize(users, sort=False)
    icodes, uniq_i = pd.factorize(items, sort=False)
    return EventTable(
        users=ucodes.astype(np.int64), items=icodes.astype(np.int64),
        values=np.ascontiguousarray(values, dtype=np.float64),
        timestamps=np.ascontiguousarray(timestamps, dtype=np.int64),
        user_keys=np.array([f"u{g}" for g in uniq_u.tolist()], dtype=object),
        item_keys=np.array([f"i{g}" for g in uniq_i.tolist()], dtype=object),
        schema_tag="generic-csv",
    )


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random positive outranks a random negative (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("AUC is undefined when one class is empty")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class Recovery:
    user_auc: float
    item_auc: float


def evaluate_recovery(scores: EccentricityScores, truth: GroundTruth) -> Recovery:
    users = scores.active_users
    items = scores.retained_items
    return Recovery(
        user_auc=auc(scores.user_z[users], truth.user_eccentric[users]),
        item_auc=auc(scores.item_z[items], truth.item_niche[items]),
    )
