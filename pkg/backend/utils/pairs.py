"""
Comparable pairs under right censoring.

A pair (i, j) is comparable when y_i > y_j and sample j had an event. Tied times are
never comparable. Pair lists are only built for the reference solver and the reduced-pair
baseline; the counting path in risk_counter works without them.
"""

from dataclasses import dataclass
from typing import Set, Tuple

import numpy as np

from utils.errors import SchemaError


@dataclass(frozen=True, eq=False)
class PairList:
    pairs: np.ndarray

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, 'pairs', pairs)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    @property
    def high(self) -> np.ndarray:
        """Index of the longer observed time of each pair."""
        return self.pairs[:, 0]

    @property
    def low(self) -> np.ndarray:
        """Index of the shorter, uncensored time of each pair."""
        return self.pairs[:, 1]

    def to_set(self) -> Set[Tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.pairs}

    def is_valid_for(self, y, delta) -> bool:
        y = np.asarray(y, dtype=float)
        delta = np.asarray(delta, dtype=bool)
        if len(self) == 0:
            return True
        ok = (y[self.high] > y[self.low]) & delta[self.low]
        return bool(ok.all()) and len(self.to_set()) == len(self)


def _check_lengths(y, delta) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    delta = np.asarray(delta, dtype=bool).ravel()
    if y.shape != delta.shape:
        raise SchemaError(f"y has {y.size} entries but delta has {delta.size}")
    return y, delta


def comparable_pairs(y, delta) -> PairList:
    y, delta = _check_lengths(y, delta)
    order = np.argsort(y, kind='stable')
    sorted_y = y[order]
    chunks = []
    for j in np.flatnonzero(delta):
        start = np.searchsorted(sorted_y, y[j], side='right')
        if start < y.size:
            higher = np.sort(order[start:])
            chunks.append(np.column_stack((higher, np.full(higher.size, j))))
    if not chunks:
        return PairList(np.empty((0, 2), dtype=np.int64))
    return PairList(np.concatenate(chunks))


def reduced_pairs(y, delta) -> PairList:
    """One pair per sample i: the uncensored j with the largest time below y_i."""
    y, delta = _check_lengths(y, delta)
    events = np.flatnonzero(delta)
    if events.size == 0:
        return PairList(np.empty((0, 2), dtype=np.int64))
    # sorted by time, then by index so the first of a tie group is the smallest index
    events = events[np.lexsort((events, y[events]))]
    event_times = y[events]

    below = np.searchsorted(event_times, y, side='left') - 1
    has_partner = below >= 0
    first_of_group = np.searchsorted(event_times, event_times[below[has_partner]], side='left')
    i = np.flatnonzero(has_partner)
    return PairList(np.column_stack((i, events[first_of_group])))


def count_comparable_pairs(y, delta) -> int:
    y, delta = _check_lengths(y, delta)
    sorted_y = np.sort(y)
    above = y.size - np.searchsorted(sorted_y, y[delta], side='right')
    return int(above.sum())


def pair_count_bounds(n: int, q_e: float) -> Tuple[float, float]:
    """Smallest and largest |P| for n distinct times with uncensored fraction q_e."""
    events = q_e * n
    lower = events * (events - 1) / 2
    upper = q_e * n * n - events * (events + 1) / 2
    return lower, upper
